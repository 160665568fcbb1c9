//! Shared fixtures for unit tests.

use crate::model::{
    CavityId, CavityParams, DeviceModel, MechId, MechParams, PumpDrive, Sideband,
};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub fn amp_cavities() -> [CavityParams; 2] {
    [
        CavityParams::new(TWO_PI * 3.89e9, TWO_PI * 406e3, TWO_PI * 197e3).unwrap(),
        CavityParams::new(TWO_PI * 5.63e9, TWO_PI * 115e3, TWO_PI * 233e3).unwrap(),
    ]
}

pub fn amp_mechs() -> [MechParams; 2] {
    [
        MechParams::new(TWO_PI * 9.24e6, TWO_PI * 310.0).unwrap(),
        MechParams::new(TWO_PI * 9.82e6, TWO_PI * 290.0).unwrap(),
    ]
}

pub fn simple_cavities() -> [CavityParams; 2] {
    [
        CavityParams::new(TWO_PI * 4.0e9, TWO_PI * 500e3, 0.0).unwrap(),
        CavityParams::new(TWO_PI * 5.5e9, TWO_PI * 500e3, 0.0).unwrap(),
    ]
}

pub fn simple_mechs() -> [MechParams; 2] {
    [
        MechParams::new(TWO_PI * 9.0e6, TWO_PI * 300.0).unwrap(),
        MechParams::new(TWO_PI * 9.6e6, TWO_PI * 300.0).unwrap(),
    ]
}

/// Build the four amplifier drives for given per-sideband cooperativities
/// and detunings (rad/s). All drive phases start at zero.
#[allow(clippy::too_many_arguments)]
pub fn amplifier_drives(
    cavities: &[CavityParams; 2],
    mechs: &[MechParams; 2],
    c11: f64,
    c12: f64,
    c21: f64,
    c22: f64,
    delta1: f64,
    delta2: f64,
) -> Vec<PumpDrive> {
    crate::model::amplifier_drive_set(cavities, mechs, [c11, c12, c21, c22], delta1, delta2)
}

/// Directional-amplifier device: the measured cooperativities and pump
/// detunings of the amplifier configuration.
pub fn fixture_amp() -> DeviceModel {
    let cavities = amp_cavities();
    let mechs = amp_mechs();
    let drives = amplifier_drives(
        &cavities,
        &mechs,
        1.27,
        3.20,
        1.33,
        2.05,
        TWO_PI * 600.0,
        -TWO_PI * 600.0,
    );
    DeviceModel::new(cavities, mechs, drives).unwrap()
}

/// Lossless-isolator configuration of the same device.
pub fn fixture_iso() -> DeviceModel {
    let cavities = amp_cavities();
    let mechs = amp_mechs();
    let drives = amplifier_drives(
        &cavities,
        &mechs,
        0.47,
        0.74,
        0.84,
        0.96,
        TWO_PI * 450.0,
        -TWO_PI * 405.0,
    );
    DeviceModel::new(cavities, mechs, drives).unwrap()
}

/// Single-oscillator reciprocal amplifier: only MO1 is pumped.
pub fn fixture_single_mo(c1: f64, c2: f64, delta1: f64) -> DeviceModel {
    let cavities = amp_cavities();
    let mechs = amp_mechs();
    let drives = vec![
        PumpDrive {
            cavity: CavityId::C1,
            mech: MechId::M1,
            sideband: Sideband::Red,
            coupling_mag: PumpDrive::coupling_from_cooperativity(c1, &cavities[0], &mechs[0]),
            phase: 0.0,
            delta: delta1,
        },
        PumpDrive {
            cavity: CavityId::C2,
            mech: MechId::M1,
            sideband: Sideband::Blue,
            coupling_mag: PumpDrive::coupling_from_cooperativity(c2, &cavities[1], &mechs[0]),
            phase: 0.0,
            delta: delta1,
        },
    ];
    DeviceModel::new(cavities, mechs, drives).unwrap()
}

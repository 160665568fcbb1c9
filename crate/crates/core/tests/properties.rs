//! Property tests for the model, working-point, measurement, and fitting
//! invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omamp::fitting::{self, FitOptions, FitParams, FitProblem};
use omamp::measurement::{
    apply_calibration, solve_cross_gains, subtract_noise, Band, GainSet, RawSweep, SParamLabel,
};
use omamp::model::{
    amplifier_drive_set, detuning_grid, direct_solve_oracle, s_params, scattering_matrix,
    wrap_angle, CavityParams, DeviceModel, MechParams, PumpDrive, A1, A1D, A2, A2D,
};
use omamp::workpoint::{
    impedance_matching_delta, isolation_point, matched_gain_db, off_diagonal_t_at_center,
    stability_check,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn cavities() -> [CavityParams; 2] {
    [
        CavityParams::new(TWO_PI * 3.89e9, TWO_PI * 406e3, TWO_PI * 197e3).unwrap(),
        CavityParams::new(TWO_PI * 5.63e9, TWO_PI * 115e3, TWO_PI * 233e3).unwrap(),
    ]
}

fn mechs() -> [MechParams; 2] {
    [
        MechParams::new(TWO_PI * 9.24e6, TWO_PI * 310.0).unwrap(),
        MechParams::new(TWO_PI * 9.82e6, TWO_PI * 290.0).unwrap(),
    ]
}

fn model_from(
    coops: [f64; 4],
    d1_units: f64,
    d2_units: f64,
    phases: [f64; 4],
) -> DeviceModel {
    let cavities = cavities();
    let mechs = mechs();
    let mut drives = amplifier_drive_set(
        &cavities,
        &mechs,
        coops,
        d1_units * mechs[0].gamma,
        d2_units * mechs[1].gamma,
    );
    for (d, p) in drives.iter_mut().zip(phases) {
        d.phase = p;
    }
    DeviceModel::new(cavities, mechs, drives).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Eliminated 4×4 response equals the direct 8×8 solve everywhere.
    #[test]
    fn elimination_equals_direct_solve(
        c11 in 0.0..3.0f64, c12 in 0.0..3.0f64, c21 in 0.0..3.0f64, c22 in 0.0..3.0f64,
        d1 in -3.0..3.0f64, d2 in -3.0..3.0f64,
        p1 in -3.1..3.1f64, p2 in -3.1..3.1f64, p3 in -3.1..3.1f64, p4 in -3.1..3.1f64,
        w_units in -5.0..5.0f64,
    ) {
        let model = model_from([c11, c12, c21, c22], d1, d2, [p1, p2, p3, p4]);
        prop_assume!(stability_check(&model).stable);
        let w = w_units * model.mechs[0].gamma;
        let a = s_params(&model, w).unwrap();
        let b = direct_solve_oracle(&model, w).unwrap();
        for (x, y) in [(a.s11, b.s11), (a.s12, b.s12), (a.s21, b.s21), (a.s22, b.s22)] {
            prop_assert!((x - y).norm() / y.norm().max(1e-30) <= 1e-10);
        }
    }

    /// The (a1, a2†) block never mixes with the (a1†, a2) block.
    #[test]
    fn scattering_zero_pattern(
        c11 in 0.1..3.0f64, c12 in 0.1..3.0f64, c21 in 0.1..2.0f64, c22 in 0.1..2.0f64,
        d1 in -2.0..2.0f64, d2 in -2.0..2.0f64,
        phi in -3.1..3.1f64,
        w_units in -4.0..4.0f64,
    ) {
        let model = model_from([c11, c12, c21, c22], d1, d2, [phi, 0.0, 0.0, 0.0]);
        prop_assume!(stability_check(&model).stable);
        let s = scattering_matrix(&model, w_units * model.mechs[0].gamma).unwrap();
        for (i, j) in [
            (A1, A1D), (A1, A2), (A1D, A1), (A1D, A2D),
            (A2, A1), (A2, A2D), (A2D, A1D), (A2D, A2),
        ] {
            prop_assert!(s.at(i, j).norm() < 1e-12, "S[{i}][{j}] = {}", s.at(i, j));
        }
    }

    /// S computed at −ω is the conjugate of the partner entry at +ω.
    #[test]
    fn conjugation_convention(
        c11 in 0.1..2.0f64, c12 in 0.1..2.0f64, c21 in 0.1..1.5f64, c22 in 0.1..1.5f64,
        d1 in -2.0..2.0f64, d2 in -2.0..2.0f64,
        phi in -3.0..3.0f64,
        w_units in 0.1..4.0f64,
    ) {
        let model = model_from([c11, c12, c21, c22], d1, d2, [phi, 0.0, 0.0, 0.0]);
        prop_assume!(stability_check(&model).stable);
        let w = w_units * model.mechs[0].gamma;
        let sp = scattering_matrix(&model, w).unwrap();
        let sm = scattering_matrix(&model, -w).unwrap();
        // entry (1,1) at −ω equals the conjugate of entry (2,2) at +ω
        prop_assert!((sm.at(A1, A1).conj() - sp.at(A1D, A1D)).norm() < 1e-12);
        prop_assert!((sm.at(A2D, A2D).conj() - sp.at(A2, A2)).norm() < 1e-12);
        prop_assert!((sm.at(A1, A2D).conj() - sp.at(A1D, A2)).norm() < 1e-12);
    }

    /// Individual drive phases are a gauge; only Φ moves the magnitudes.
    #[test]
    fn phase_gauge_invariance(
        c11 in 0.2..2.5f64, c12 in 0.2..2.5f64, c21 in 0.2..1.8f64, c22 in 0.2..1.8f64,
        d1 in -2.0..2.0f64, d2 in -2.0..2.0f64,
        phi in -3.0..3.0f64,
        q1 in -3.0..3.0f64, q2 in -3.0..3.0f64, q3 in -3.0..3.0f64,
        w_units in -4.0..4.0f64,
    ) {
        let mut base = model_from([c11, c12, c21, c22], d1, d2, [0.0; 4]);
        base.set_global_phase(phi).unwrap();
        prop_assume!(stability_check(&base).stable);

        // arbitrary per-drive rotations, then restore Φ
        let mut other = model_from([c11, c12, c21, c22], d1, d2, [q1, q2, q3, 0.0]);
        other.set_global_phase(phi).unwrap();

        let w = w_units * base.mechs[0].gamma;
        let a = s_params(&base, w).unwrap();
        let b = s_params(&other, w).unwrap();
        for (x, y) in [(a.s11, b.s11), (a.s12, b.s12), (a.s21, b.s21), (a.s22, b.s22)] {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-12 * x.norm().max(1e-3));
        }
    }

    /// Coupling magnitude ↔ cooperativity round trip.
    #[test]
    fn cooperativity_round_trip(c in 1e-6..10.0f64) {
        let cavities = cavities();
        let mechs = mechs();
        let mag = PumpDrive::coupling_from_cooperativity(c, &cavities[1], &mechs[0]);
        let drive = PumpDrive {
            cavity: omamp::CavityId::C2,
            mech: omamp::MechId::M1,
            sideband: omamp::Sideband::Blue,
            coupling_mag: mag,
            phase: 0.0,
            delta: 0.0,
        };
        let back = drive.cooperativity(&cavities, &mechs);
        prop_assert!((back - c).abs() / c <= 1e-14);
    }

    /// At the isolation point the backward coupling element vanishes for
    /// any internal-loss level.
    #[test]
    fn isolation_immune_to_internal_loss(
        c in 0.2..3.0f64,
        c2 in 0.2..1.4f64,
        delta in 0.05..2.5f64,
        loss_scale in 0.0..10.0f64,
    ) {
        let mechs = mechs();
        let wp = isolation_point(mechs[0].gamma, mechs[1].gamma, delta);
        let cavities = [
            CavityParams::new(TWO_PI * 3.89e9, TWO_PI * 406e3, loss_scale * TWO_PI * 406e3).unwrap(),
            CavityParams::new(TWO_PI * 5.63e9, TWO_PI * 115e3, loss_scale * TWO_PI * 115e3).unwrap(),
        ];
        let drives = amplifier_drive_set(&cavities, &mechs, [c, c, c2, c2], wp.delta1, wp.delta2);
        let mut model = DeviceModel::new(cavities, mechs, drives).unwrap();
        model.set_global_phase(wp.phi).unwrap();
        let (t12, t21) = off_diagonal_t_at_center(&model);
        prop_assert!(t12 <= 1e-12 * t21, "|T12|/|T21| = {}", t12 / t21);
    }

    /// Substituting the matching δ and isolation Φ into the full model
    /// reproduces the closed-form matched gain and kills the reflection.
    #[test]
    fn matched_point_consistency(
        c1 in 0.25..5.0f64,
        c2_frac in 0.05..0.9f64,
    ) {
        let cavities = cavities();
        let mechs = mechs();
        let r1 = cavities[0].coupling_ratio();
        let r2 = cavities[1].coupling_ratio();
        let m = impedance_matching_delta(c1, r1).unwrap();
        let c2 = c2_frac * c1 / (2.0 * r1 - 1.0);
        let wp = isolation_point(mechs[0].gamma, mechs[1].gamma, m.delta);
        let drives = amplifier_drive_set(&cavities, &mechs, [c1, c1, c2, c2], wp.delta1, wp.delta2);
        let mut model = DeviceModel::new(cavities, mechs, drives).unwrap();
        model.set_global_phase(wp.phi).unwrap();
        let p = s_params(&model, 0.0).unwrap();
        prop_assert!(p.s11.norm() <= 1e-8, "|S11[0]| = {}", p.s11.norm());
        let want_db = matched_gain_db(c1, c2, r1, r2).unwrap();
        let got = p.s21.norm_sqr();
        let want = 10.0f64.powf(want_db / 10.0);
        prop_assert!(
            (got - want).abs() / want <= 1e-9,
            "|S21[0]|² = {got} vs closed form {want}"
        );
    }

    /// Cross-gain solutions satisfy both constraints exactly.
    #[test]
    fn cross_gain_constraints(
        g11 in -80.0..-20.0f64,
        g22 in -80.0..-20.0f64,
        imb in -10.0..10.0f64,
    ) {
        let (g12, g21) = solve_cross_gains(g11, g22, imb);
        prop_assert!((g12 + g21 - g11 - g22).abs() <= 1e-12);
        prop_assert!((g12 - g21 - imb).abs() <= 1e-12);
    }

    /// Noise subtraction and calibration commute once the noise is scaled.
    #[test]
    fn subtraction_commutes_with_calibration(
        p in 0.1..10.0f64,
        noise in 0.0..0.05f64,
        gain_db in -70.0..-40.0f64,
    ) {
        let gains = GainSet {
            g11_db: gain_db,
            g22_db: 0.0,
            g12_db: 0.0,
            g21_db: 0.0,
            uncertainties_db: [0.0; 4],
        };
        let raw = RawSweep {
            freqs_hz: vec![1.0, 2.0, 3.0],
            power: vec![p; 3],
            source_band: Band::Cav1,
            receiver_band: Band::Cav1,
            bw_hz: 20.0,
            rbw_hz: 30.0,
            p_noise: vec![noise; 3],
            p_out: 1.0,
        };
        // subtract then calibrate
        let sub = subtract_noise(&raw).unwrap();
        let a = apply_calibration(SParamLabel::S11, &sub, &gains).unwrap();
        // calibrate then subtract the gain-scaled noise
        let g = 10.0f64.powf(gain_db / 10.0);
        let mut raw_cal = raw.clone();
        raw_cal.power = raw.power.iter().map(|v| v / g).collect();
        raw_cal.p_noise = raw.p_noise.iter().map(|v| v / g).collect();
        let b = subtract_noise(&raw_cal).unwrap();
        for (x, y) in a.power.iter().zip(&b.power) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-9));
        }
    }
}

/// Noiseless synthetic data from random parameter vectors is recovered by
/// the fit: cooperativities to 1%, Φ to 0.01 rad (mod gauge), and the |S|
/// curves to 1e−6 dB RMS.
#[test]
fn fit_self_consistency_over_random_models() {
    let cavities = cavities();
    let mechs = mechs();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let grid = detuning_grid(TWO_PI * 2000.0, 61);
    let mut done = 0;
    while done < 50 {
        let coops = [
            rng.gen_range(0.3..3.0),
            rng.gen_range(0.3..3.0),
            rng.gen_range(0.3..2.0),
            rng.gen_range(0.3..2.0),
        ];
        let d1 = rng.gen_range(-3.0..3.0) * mechs[0].gamma;
        let d2 = rng.gen_range(-3.0..3.0) * mechs[1].gamma;
        let phi = rng.gen_range(-3.1..3.1);
        let drives = amplifier_drive_set(&cavities, &mechs, coops, d1, d2);
        let mut model = DeviceModel::new(cavities, mechs, drives).unwrap();
        model.set_global_phase(phi).unwrap();
        if !stability_check(&model).stable {
            continue;
        }
        done += 1;

        let datasets = fitting::synthesize_datasets(&model, &grid).unwrap();
        let problem = FitProblem::new(cavities, mechs, datasets).unwrap();
        let init = FitParams {
            coops: [
                coops[0] * 1.1,
                coops[1] * 0.9,
                coops[2] * 1.1,
                coops[3] * 0.9,
            ],
            delta1: d1 * 1.1 - 0.05 * mechs[0].gamma,
            delta2: d2 * 0.9 + 0.05 * mechs[1].gamma,
            phi: wrap_angle(phi + 0.1),
        };
        let options = FitOptions {
            restarts: 12,
            restart_seed: 9,
            ..Default::default()
        };
        let out = fitting::fit(&problem, init, options).unwrap();
        let got = out.physical();
        for (g, t) in got.coops.iter().zip(&coops) {
            assert!(
                (g - t).abs() / t <= 0.01,
                "case {done}: cooperativity {g} vs {t} (status {:?}, obj {:.3e})",
                out.status,
                out.objective
            );
        }
        assert!(
            wrap_angle(got.phi - phi).abs() <= 0.01,
            "case {done}: phi {} vs {}",
            got.phi,
            phi
        );
        let rms = (out.objective / problem.residual_len() as f64).sqrt();
        assert!(rms <= 1e-6, "case {done}: rms {rms:.2e} dB");
    }
}

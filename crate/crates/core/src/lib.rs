//! Frequency-domain toolkit for a two-cavity, two-oscillator microwave
//! optomechanical network driven as a directional amplifier or isolator.
//!
//! The crate covers the full path from model to measurement:
//!
//! * [`model`] — susceptibility and coupling matrices of the linearized
//!   four-tone scheme, 4×4 scattering matrix, and an independent 8×8
//!   direct-solve oracle;
//! * [`workpoint`] — isolation and impedance-matching working points,
//!   closed-form gain expressions, pole-based stability analysis, and
//!   figures of merit extracted from sweeps;
//! * [`nonrwa`] — first-order sideband-leakage corrections in κ/ΔΩ for
//!   devices where the mechanical frequency difference is not far above
//!   the cavity linewidths;
//! * [`measurement`] — noise subtraction with mismatched integration
//!   bandwidths and frequency-converting cross-gain calibration;
//! * [`fitting`] — simultaneous bounded least-squares fits of all four
//!   S-parameter sweeps;
//! * [`config`] — JSON run configuration shared by the library and the
//!   command-line front end.
//!
//! All operations are pure functions of immutable inputs and are safe to
//! call concurrently.

pub mod config;
pub mod fitting;
pub mod linalg;
pub mod measurement;
pub mod model;
pub mod nonrwa;
pub mod workpoint;

#[cfg(test)]
pub(crate) mod test_util;

pub use linalg::{C64, Mat4, Mat8};
pub use model::{
    amplitude_db, build_coupling_mats, cavity_susceptibility, coupling_matrix_t,
    detuning_grid, direct_solve_oracle, mech_susceptibility, noise_input_matrix, s_params,
    scattering_matrix, system_susceptibility, CavityId, CavityParams, DeviceModel, FrameMap,
    G0Ratios, MechId, MechParams, ModelError, PumpDrive, SParamPoint, Sideband, SweepResult,
};

//! Working points, closed-form gains, stability, and figures of merit.
//!
//! The backward-transmission zero of the four-tone scheme exists because
//! the two mechanical transfer paths can be made to interfere
//! destructively. With the detuning parametrization δ1 = γ1·δ,
//! δ2 = −γ2·δ the zero sits at band center and requires the pump phase
//! Φ = Arg((−1+2iδ)/(1+2iδ)); for unequal per-sideband cooperativities
//! the zero moves to the probe detuning where the two path magnitudes
//! cross, and the phase follows from the same condition evaluated there.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::C64;
use crate::model::{
    self, amplitude_db, coupling_matrix_t, mech_susceptibility, s_params, wrap_angle, CavityId,
    DeviceModel, MechId, ModelError, Sideband, SweepResult, A1, A2D,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkpointError {
    #[error("impedance matching infeasible: requires r1 > 1/2 and 2·C1/(2·r1−1) ≥ 1 (C1 = {c1}, r1 = {r1})")]
    Infeasible { c1: f64, r1: f64 },
    #[error("matched gain diverges: C2 = C1/(2r1−1) is the instability pole")]
    InstabilityPole,
    #[error("gain ceiling unbounded for a lossless input cavity (r1 ≥ 1)")]
    Unbounded,
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("sweep does not bracket the feature: {0}")]
    Range(String),
    #[error("isolation tuning needs the full amplifier drive set")]
    MissingDrives,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A backward-isolation working point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingPoint {
    /// Dimensionless detuning parameter δ.
    pub delta: f64,
    /// δ1 = γ1·δ (rad/s).
    pub delta1: f64,
    /// δ2 = −γ2·δ (rad/s).
    pub delta2: f64,
    /// Pump phase Φ ∈ (−π, π].
    pub phi: f64,
    /// Whether the on-resonance reflection vanishes at this point.
    pub matched: bool,
    /// `|S11[0]|` evaluated from the closed reflection expression; NaN until
    /// [`WorkingPoint::evaluate_matching`] is called.
    pub match_residual: f64,
}

impl WorkingPoint {
    /// Fill the matching diagnostics from the closed-form reflection
    /// `|S11[0]| = |1 − 2r1/(2C1/(1+4δ²)+1)|`.
    pub fn evaluate_matching(&mut self, c1: f64, r1: f64) {
        let s11 = reflection_at_center(c1, r1, self.delta);
        self.match_residual = s11.abs();
        self.matched = self.match_residual < 1e-8;
    }
}

/// Signed on-resonance reflection 1 − 2r1/(2C1/(1+4δ²)+1).
pub fn reflection_at_center(c1: f64, r1: f64, delta: f64) -> f64 {
    1.0 - 2.0 * r1 / (2.0 * c1 / (1.0 + 4.0 * delta * delta) + 1.0)
}

/// Working point that cancels backward transmission at band center for
/// equal per-sideband cooperativities: δ1 = γ1δ, δ2 = −γ2δ,
/// Φ = Arg((−1+2iδ)/(1+2iδ)).
pub fn isolation_point(gamma1: f64, gamma2: f64, delta: f64) -> WorkingPoint {
    let num = Complex64::new(-1.0, 2.0 * delta);
    let den = Complex64::new(1.0, 2.0 * delta);
    WorkingPoint {
        delta,
        delta1: gamma1 * delta,
        delta2: -gamma2 * delta,
        phi: wrap_angle((num / den).arg()),
        matched: false,
        match_residual: f64::NAN,
    }
}

/// The exact interference point of a general amplifier model: the probe
/// detuning where the two backward path magnitudes cross, and the global
/// phase that makes them cancel there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationTuning {
    /// Probe detuning of the backward zero (rad/s).
    pub omega_star: f64,
    /// Global pump phase realizing the zero, in (−π, π].
    pub phi_star: f64,
}

/// Solve for the backward-transmission zero of `model`.
///
/// The magnitude condition |G11 J21||χ_m1(ω)| = |G12 J22||χ_m2(ω)| is a
/// real quadratic in ω; of its real roots the one closest to band center
/// is returned (the inter-peak interference used in operation). The phase
/// is read off the cancellation condition at that root.
pub fn isolation_tuning(model: &DeviceModel) -> Result<IsolationTuning, WorkpointError> {
    use CavityId::*;
    use MechId::*;
    use Sideband::*;
    if !model.has_amplifier_drives() {
        return Err(WorkpointError::MissingDrives);
    }
    let g11 = model.coupling(C1, M1, Red);
    let g12 = model.coupling(C1, M2, Red);
    let j21 = model.coupling(C2, M1, Blue);
    let j22 = model.coupling(C2, M2, Blue);
    let a = (g11 * j21).norm_sqr();
    let b = (g12 * j22).norm_sqr();
    let d1 = model.mech_detuning(MechId::M1);
    let d2 = model.mech_detuning(MechId::M2);
    let hw1 = model.mechs[0].gamma / 2.0;
    let hw2 = model.mechs[1].gamma / 2.0;

    // a·((γ2/2)² + (ω+δ2)²) = b·((γ1/2)² + (ω+δ1)²)
    let qa = a - b;
    let qb = 2.0 * (a * d2 - b * d1);
    let qc = a * (hw2 * hw2 + d2 * d2) - b * (hw1 * hw1 + d1 * d1);
    let roots: Vec<f64> = if qa.abs() < 1e-300 * (a + b) {
        if qb == 0.0 {
            return Err(WorkpointError::OutOfRange(
                "backward paths have identical magnitude profiles; the zero is degenerate".into(),
            ));
        }
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Err(WorkpointError::OutOfRange(
                "backward path magnitudes never cross; no interference zero exists".into(),
            ));
        }
        let s = disc.sqrt();
        vec![(-qb + s) / (2.0 * qa), (-qb - s) / (2.0 * qa)]
    };
    let omega_star = roots
        .into_iter()
        .min_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
        .unwrap();

    let chi1 = mech_susceptibility(&model.mechs[0], d1, omega_star);
    let chi2 = mech_susceptibility(&model.mechs[1], d2, omega_star);
    let phi_cur = model.global_phase().expect("amplifier drives present");
    let rotation = (-(g12 * j22 * chi2) / (g11 * j21 * chi1)).arg();
    Ok(IsolationTuning {
        omega_star,
        phi_star: wrap_angle(phi_cur + rotation),
    })
}

/// Result of the impedance-matching solve. Several closed-form
/// expressions for this detuning circulate that disagree by a factor or a
/// sign under the root; all three are evaluated here as diagnostics, and
/// only `closed_form_delta` is consistent with the validated reflection
/// expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingDelta {
    /// Root of the reflection expression; makes `|S11[0]|` vanish.
    pub delta: f64,
    /// `|S11[0]|` at the returned δ (substitution check).
    pub reflection_residual: f64,
    /// ½√(2C1/(2r1−1) − 1); agrees with the root.
    pub closed_form_delta: f64,
    /// Variant ½√(C1/(2r1−1) − 1); off by a factor of two under the root.
    pub closed_form_variant_c1: f64,
    /// Variant ½√(2C1/(1−2r1) − 1); negative under the root for an
    /// overcoupled input (sign slip), hence usually NaN.
    pub closed_form_variant_sign_flipped: f64,
}

/// δ ≥ 0 making the on-resonance reflection vanish, by bisecting the
/// signed reflection expression in δ². Infeasible for an undercoupled or
/// critically coupled input cavity, or when 2C1/(2r1−1) < 1.
pub fn impedance_matching_delta(c1: f64, r1: f64) -> Result<MatchingDelta, WorkpointError> {
    if !r1.is_finite() || r1 <= 0.0 || r1 > 1.0 || !c1.is_finite() || c1 < 0.0 {
        return Err(WorkpointError::OutOfRange(format!(
            "need 0 < r1 ≤ 1 and C1 ≥ 0, got r1 = {r1}, C1 = {c1}"
        )));
    }
    if r1 <= 0.5 || 2.0 * c1 / (2.0 * r1 - 1.0) < 1.0 {
        return Err(WorkpointError::Infeasible { c1, r1 });
    }
    // reflection_at_center is monotone decreasing in δ², positive at the
    // feasible δ = 0, negative as δ → ∞.
    let f = |x: f64| reflection_at_center(c1, r1, x.sqrt());
    let mut lo = 0.0f64;
    let mut hi = (2.0 * c1 / (2.0 * r1 - 1.0)).max(4.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(WorkpointError::Infeasible { c1, r1 });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let delta = (0.5 * (lo + hi)).sqrt();
    let sqrt_or_nan = |x: f64| if x >= 0.0 { x.sqrt() } else { f64::NAN };
    Ok(MatchingDelta {
        delta,
        reflection_residual: f(delta * delta).abs(),
        closed_form_delta: 0.5 * sqrt_or_nan(2.0 * c1 / (2.0 * r1 - 1.0) - 1.0),
        closed_form_variant_c1: 0.5 * sqrt_or_nan(c1 / (2.0 * r1 - 1.0) - 1.0),
        closed_form_variant_sign_flipped: 0.5 * sqrt_or_nan(2.0 * c1 / (1.0 - 2.0 * r1) - 1.0),
    })
}

/// Forward power gain (dB) at the isolated, impedance-matched working
/// point: `|S21[0]|² = (r2/r1)·2C2(2C1+1−2r1)/(C1/(2r1−1)−C2)²`.
pub fn matched_gain_db(c1: f64, c2: f64, r1: f64, r2: f64) -> Result<f64, WorkpointError> {
    if !r1.is_finite() || r1 <= 0.5 || r1 > 1.0 {
        return Err(WorkpointError::OutOfRange(format!(
            "matched gain needs 1/2 < r1 ≤ 1, got {r1}"
        )));
    }
    if !r2.is_finite() || r2 <= 0.0 || r2 > 1.0 || !c1.is_finite() || c1 < 0.0 || !c2.is_finite() || c2 < 0.0 {
        return Err(WorkpointError::OutOfRange(
            "need 0 < r2 ≤ 1 and non-negative cooperativities".into(),
        ));
    }
    let pole = c1 / (2.0 * r1 - 1.0);
    if (pole - c2).abs() <= 1e-12 * pole.max(c2).max(1.0) {
        return Err(WorkpointError::InstabilityPole);
    }
    let num = 2.0 * c2 * (2.0 * c1 + 1.0 - 2.0 * r1);
    let den = (pole - c2) * (pole - c2);
    Ok(10.0 * ((r2 / r1) * num / den).log10())
}

/// Maximum gain (dB) reachable at the instability onset in the
/// high-cooperativity limit: 20·log10(√(r2/r1)·(2r1−1)/(1−r1)).
pub fn gain_at_instability_db(r1: f64, r2: f64) -> Result<f64, WorkpointError> {
    if r1 >= 1.0 {
        return Err(WorkpointError::Unbounded);
    }
    if r1 <= 0.5 || !r1.is_finite() || r2 <= 0.0 || r2 > 1.0 || !r2.is_finite() {
        return Err(WorkpointError::OutOfRange(format!(
            "gain ceiling needs 1/2 < r1 < 1 and 0 < r2 ≤ 1, got r1 = {r1}, r2 = {r2}"
        )));
    }
    Ok(20.0 * ((r2 / r1).sqrt() * (2.0 * r1 - 1.0) / (1.0 - r1)).log10())
}

/// Pole analysis of the un-eliminated photon+phonon system.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// The eight complex-frequency poles (rad/s), leading pole first
    /// (largest imaginary part, i.e. smallest decay).
    pub poles: Vec<C64>,
    /// Distance of the leading pole from the real axis (rad/s); positive
    /// when the system decays.
    pub margin: f64,
}

/// Locate all poles of det(χ⁻¹(ω)) in the complex-ω plane.
///
/// The un-eliminated 8×8 system is M(ω) = A − iω𝕀, so the roots of the
/// degree-8 characteristic polynomial are ω_p = −i·eig(A). Under the
/// e^{−iωt} convention a pole decays iff Im ω_p < 0.
pub fn stability_check(model: &DeviceModel) -> StabilityReport {
    let a = model::system_matrix_static(model);
    let lam = a.eigenvalues();
    let mut poles: Vec<C64> = lam
        .iter()
        .map(|l| C64::new(0.0, -1.0) * l)
        .collect();
    poles.sort_by(|p, q| {
        q.im.partial_cmp(&p.im)
            .unwrap()
            .then(p.re.partial_cmp(&q.re).unwrap())
    });
    let margin = -poles[0].im;
    StabilityReport {
        stable: margin > 0.0,
        poles,
        margin,
    }
}

/// Figures of merit extracted from a four-parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub peak_forward_gain_db: f64,
    pub min_backward_gain_db: f64,
    /// max over the sweep of the pointwise forward/backward power ratio.
    pub nonreciprocity_db: f64,
    pub reflection_min_db: f64,
    /// Contiguous range where the backward power sits ≥ 3 dB below its
    /// far-detuned baseline (mean of the sweep's outermost samples).
    pub isolation_bandwidth_hz: f64,
    /// Contiguous range above half the maximum forward power gain.
    pub amplification_bandwidth_hz: f64,
}

/// Extract [`Metrics`] from a sweep. The sweep must cover the interference
/// feature: both bandwidth edges have to fall strictly inside the grid,
/// otherwise a range error is returned. Bandwidth edges are located by
/// linear interpolation between samples.
pub fn compute_metrics(sweep: &SweepResult) -> Result<Metrics, WorkpointError> {
    let n = sweep.len();
    if n < 16 {
        return Err(WorkpointError::Range(format!(
            "need at least 16 sweep points, got {n}"
        )));
    }
    let f: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| p.omega / (2.0 * std::f64::consts::PI))
        .collect();
    let fwd: Vec<f64> = sweep.points.iter().map(|p| amplitude_db(p.s21)).collect();
    let bwd: Vec<f64> = sweep.points.iter().map(|p| amplitude_db(p.s12)).collect();
    let refl: Vec<f64> = sweep.points.iter().map(|p| amplitude_db(p.s11)).collect();

    let ipk = argmax(&fwd);
    let idip = argmin(&bwd);
    let nonrec = fwd
        .iter()
        .zip(&bwd)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);

    let half_max = fwd[ipk] - 10.0 * 2.0f64.log10();
    let amp_bw = band_above(&f, &fwd, ipk, half_max)
        .ok_or_else(|| WorkpointError::Range("forward half-gain band not bracketed".into()))?;

    let baseline = 0.5 * (bwd[0] + bwd[n - 1]);
    let iso_thresh = baseline - 3.0;
    if bwd[idip] > iso_thresh {
        return Err(WorkpointError::Range(
            "backward transmission never drops 3 dB below its far-detuned baseline".into(),
        ));
    }
    let iso_bw = band_below(&f, &bwd, idip, iso_thresh)
        .ok_or_else(|| WorkpointError::Range("isolation band not bracketed".into()))?;

    Ok(Metrics {
        peak_forward_gain_db: fwd[ipk],
        min_backward_gain_db: bwd[idip],
        nonreciprocity_db: nonrec,
        reflection_min_db: refl[argmin(&refl)],
        isolation_bandwidth_hz: iso_bw,
        amplification_bandwidth_hz: amp_bw,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Width of the contiguous region around `center` where `y ≥ thresh`,
/// edges linearly interpolated. `None` when a crossing falls outside.
fn band_above(f: &[f64], y: &[f64], center: usize, thresh: f64) -> Option<f64> {
    let n = y.len();
    let mut lo = center;
    while lo > 0 && y[lo - 1] >= thresh {
        lo -= 1;
    }
    let mut hi = center;
    while hi < n - 1 && y[hi + 1] >= thresh {
        hi += 1;
    }
    if lo == 0 || hi == n - 1 {
        return None;
    }
    let left = cross(f[lo - 1], y[lo - 1], f[lo], y[lo], thresh);
    let right = cross(f[hi], y[hi], f[hi + 1], y[hi + 1], thresh);
    Some(right - left)
}

fn band_below(f: &[f64], y: &[f64], center: usize, thresh: f64) -> Option<f64> {
    let n = y.len();
    let mut lo = center;
    while lo > 0 && y[lo - 1] <= thresh {
        lo -= 1;
    }
    let mut hi = center;
    while hi < n - 1 && y[hi + 1] <= thresh {
        hi += 1;
    }
    if lo == 0 || hi == n - 1 {
        return None;
    }
    let left = cross(f[lo - 1], y[lo - 1], f[lo], y[lo], thresh);
    let right = cross(f[hi], y[hi], f[hi + 1], y[hi + 1], thresh);
    Some(right - left)
}

/// Linear interpolation of the frequency where y crosses `thresh` between
/// two samples. Falls back to the midpoint when the segment is flat
/// (infinite-depth dips produce −inf samples).
fn cross(f0: f64, y0: f64, f1: f64, y1: f64, thresh: f64) -> f64 {
    if !y0.is_finite() || !y1.is_finite() || y1 == y0 {
        return 0.5 * (f0 + f1);
    }
    f0 + (thresh - y0) * (f1 - f0) / (y1 - y0)
}

/// Backward and forward transmission magnitude at the interference
/// detuning, for one pump phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSweepPoint {
    pub phi: f64,
    pub s12_mag: f64,
    pub s21_mag: f64,
}

/// Evaluate |S12| and |S21| at the band center (the detuning minimizing
/// |S12| at the model's own analytic working point) for each pump phase in
/// `phis`, rotating one drive to realize the phase.
pub fn phase_sweep(model: &DeviceModel, phis: &[f64]) -> Result<Vec<PhaseSweepPoint>, WorkpointError> {
    let tuning = isolation_tuning(model)?;
    let mut work = model.clone();
    let mut out = Vec::with_capacity(phis.len());
    for &phi in phis {
        work.set_global_phase(phi)?;
        let p = s_params(&work, tuning.omega_star)?;
        out.push(PhaseSweepPoint {
            phi,
            s12_mag: p.s12.norm(),
            s21_mag: p.s21.norm(),
        });
    }
    Ok(out)
}

/// |T12(0)| and |T21(0)| of a model, used by the isolation-quality checks.
pub fn off_diagonal_t_at_center(model: &DeviceModel) -> (f64, f64) {
    let t = coupling_matrix_t(model, 0.0);
    (t.at(A1, A2D).norm(), t.at(A2D, A1).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityParams, DeviceModel};
    use crate::test_util::{
        amp_cavities, amp_mechs, amplifier_drives, fixture_amp, fixture_single_mo, TWO_PI,
    };
    use std::f64::consts::PI;

    #[test]
    fn isolation_point_phase_values() {
        let g1 = TWO_PI * 310.0;
        let g2 = TWO_PI * 290.0;
        let wp = isolation_point(g1, g2, 0.0);
        assert!((wp.phi - PI).abs() < 1e-15);
        assert_eq!(wp.delta1, 0.0);
        assert_eq!(wp.delta2, -0.0);

        let wp = isolation_point(g1, g2, 0.5);
        assert!((wp.phi - PI / 2.0).abs() < 1e-15);
        assert!((wp.delta1 - 0.5 * g1).abs() < 1e-12);
        assert!((wp.delta2 + 0.5 * g2).abs() < 1e-12);

        let wp = isolation_point(g1, g2, 1e9);
        assert!(wp.phi.abs() < 1e-8);
    }

    /// Build an equal-cooperativity model at the analytic working point.
    fn equal_c_model_at_workpoint(
        c1: f64,
        c2: f64,
        delta: f64,
        kappa_int_scale: f64,
    ) -> DeviceModel {
        let mut cavities = amp_cavities();
        cavities[0] =
            CavityParams::new(cavities[0].omega, cavities[0].kappa_ext, kappa_int_scale * cavities[0].kappa_ext)
                .unwrap();
        cavities[1] =
            CavityParams::new(cavities[1].omega, cavities[1].kappa_ext, kappa_int_scale * cavities[1].kappa_ext)
                .unwrap();
        let mechs = amp_mechs();
        let wp = isolation_point(mechs[0].gamma, mechs[1].gamma, delta);
        let drives = amplifier_drives(&cavities, &mechs, c1, c1, c2, c2, wp.delta1, wp.delta2);
        let mut model = DeviceModel::new(cavities, mechs, drives).unwrap();
        model.set_global_phase(wp.phi).unwrap();
        model
    }

    #[test]
    fn working_point_cancels_t12_for_any_internal_loss() {
        for scale in [0.0, 0.5, 2.0, 10.0] {
            let model = equal_c_model_at_workpoint(1.0, 1.0, 0.8, scale);
            let (t12, t21) = off_diagonal_t_at_center(&model);
            assert!(
                t12 <= 1e-12 * t21,
                "loss scale {scale}: |T12|/|T21| = {}",
                t12 / t21
            );
        }
    }

    #[test]
    fn isolation_tuning_reduces_to_analytic_point_for_equal_cooperativities() {
        let model = equal_c_model_at_workpoint(1.3, 0.9, 1.1, 0.4);
        // model is already at the analytic phase; the tuner must return an
        // equivalent phase and the zero it implies.
        let tuning = isolation_tuning(&model).unwrap();
        let cur = model.global_phase().unwrap();
        assert!((wrap_angle(tuning.phi_star - cur)).abs() < 1e-9);
        // the δ-parametrized detunings compensate the mechanical linewidth
        // imbalance exactly, so the zero sits at band center
        assert!(
            tuning.omega_star.abs() < 1e-6 * model.mechs[0].gamma,
            "omega* = {}",
            tuning.omega_star
        );
    }

    #[test]
    fn isolation_tuning_zeroes_backward_transmission() {
        for model_fn in [fixture_amp, crate::test_util::fixture_iso] {
            let mut model = model_fn();
            let tuning = isolation_tuning(&model).unwrap();
            model.set_global_phase(tuning.phi_star).unwrap();
            let p = s_params(&model, tuning.omega_star).unwrap();
            assert!(
                p.s12.norm() < 1e-12 * p.s21.norm().max(1.0),
                "|S12| = {} at the tuned zero",
                p.s12.norm()
            );
        }
    }

    #[test]
    fn matching_infeasible_for_undercoupled_input() {
        for r1 in [0.1, 0.3, 0.5] {
            let err = impedance_matching_delta(5.0, r1).unwrap_err();
            assert!(matches!(err, WorkpointError::Infeasible { .. }));
        }
        // overcoupled but too weak a pump
        let err = impedance_matching_delta(0.05, 0.9).unwrap_err();
        assert!(matches!(err, WorkpointError::Infeasible { .. }));
    }

    #[test]
    fn matching_boundary_case_is_zero_delta() {
        let m = impedance_matching_delta(0.5, 1.0).unwrap();
        assert!(m.delta.abs() < 1e-7, "delta = {}", m.delta);
        assert!(m.reflection_residual < 1e-10);
    }

    #[test]
    fn matching_fixture_case_matches_frozen_root() {
        let r1 = 406.0 / 603.0;
        let m = impedance_matching_delta(3.0, r1).unwrap();
        assert!((m.delta - 2.0193442490502328).abs() < 1e-9, "delta = {}", m.delta);
        assert!(m.reflection_residual < 1e-10);
        // one closed-form variant is consistent with the root
        assert!((m.closed_form_delta - m.delta).abs() < 1e-9);
        // the sign-flipped variant cannot be real for an overcoupled input
        assert!(m.closed_form_variant_sign_flipped.is_nan());
    }

    #[test]
    fn matched_gain_limits() {
        // no blue pumping, no transmission
        let g = matched_gain_db(2.0, 0.0, 0.8, 0.9).unwrap();
        assert!(g == f64::NEG_INFINITY);

        // lossless limit coincides with the separately coded lossless
        // expression |S21|² = 2C2(2C1−1)/(C1−C2)²
        let mut rng_state = 12345u64;
        let mut next = move || {
            // xorshift, deterministic
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state % 10_000) as f64 / 10_000.0
        };
        for _ in 0..10 {
            let c1 = 0.6 + 4.0 * next();
            let mut c2 = 0.1 + 3.0 * next();
            if (c1 - c2).abs() < 0.05 {
                c2 += 0.2;
            }
            let got = matched_gain_db(c1, c2, 1.0, 1.0).unwrap();
            let lossless = 10.0 * (2.0 * c2 * (2.0 * c1 - 1.0) / ((c1 - c2) * (c1 - c2))).log10();
            assert!((got - lossless).abs() < 1e-12, "C1={c1} C2={c2}");
        }
    }

    #[test]
    fn matched_gain_instability_pole_is_an_error() {
        let r1 = 0.8f64;
        let c1 = 2.0f64;
        let pole = c1 / (2.0 * r1 - 1.0);
        let err = matched_gain_db(c1, pole, r1, 0.5).unwrap_err();
        assert!(matches!(err, WorkpointError::InstabilityPole));
    }

    #[test]
    fn gain_ceiling_values_and_errors() {
        // frozen: r1 = 0.6733, r2 = 0.3305 → −2.5768 dB
        let g = gain_at_instability_db(0.6733, 0.3305).unwrap();
        assert!((g - (-2.57678302841)).abs() < 1e-9);

        // r1 → 0.5⁺ collapses
        let g = gain_at_instability_db(0.5 + 1e-9, 0.5).unwrap();
        assert!(g < -150.0);

        assert!(matches!(
            gain_at_instability_db(1.0, 0.5).unwrap_err(),
            WorkpointError::Unbounded
        ));
        assert!(matches!(
            gain_at_instability_db(0.4, 0.5).unwrap_err(),
            WorkpointError::OutOfRange(_)
        ));
    }

    #[test]
    fn gain_ceiling_matches_high_cooperativity_matched_gain() {
        let r1 = 0.6733;
        let r2 = 0.3305;
        let c1 = 1e6;
        let matched = matched_gain_db(c1, c1 + 1.0, r1, r2).unwrap();
        let ceiling = gain_at_instability_db(r1, r2).unwrap();
        assert!((matched - ceiling).abs() < 0.01, "{matched} vs {ceiling}");
        // already within the −2.6 dB ballpark at C1 = 1e4
        let near = matched_gain_db(1e4, 1e4 + 1.0, r1, r2).unwrap();
        assert!((near - (-2.6)).abs() < 0.05, "gain at C1=1e4: {near}");
    }

    #[test]
    fn gain_ceiling_monotone_in_both_ratios() {
        let grid: Vec<f64> = (0..20).map(|i| 0.51 + 0.48 * i as f64 / 19.0).collect();
        let r2s: Vec<f64> = (0..20).map(|i| 0.05 + 0.95 * i as f64 / 19.0).collect();
        for &r2 in &r2s {
            let mut prev = f64::NEG_INFINITY;
            for &r1 in &grid {
                let g = gain_at_instability_db(r1, r2).unwrap();
                assert!(g > prev, "not increasing in r1 at r1={r1}, r2={r2}");
                prev = g;
            }
        }
        for &r1 in &grid {
            let mut prev = f64::NEG_INFINITY;
            for &r2 in &r2s {
                let g = gain_at_instability_db(r1, r2).unwrap();
                assert!(g > prev, "not increasing in r2 at r1={r1}, r2={r2}");
                prev = g;
            }
        }
    }

    #[test]
    fn input_losses_hurt_more_than_output_losses() {
        // hold r1 + r2 fixed; putting the loss on the input side lowers
        // the ceiling
        for (hi, lo) in [(0.9, 0.6), (0.95, 0.55), (0.8, 0.7)] {
            let input_clean = gain_at_instability_db(hi, lo).unwrap();
            let input_lossy = gain_at_instability_db(lo, hi).unwrap();
            assert!(input_clean > input_lossy, "r=({hi},{lo})");
        }
    }

    #[test]
    fn no_drive_poles_are_bare_decays() {
        let model = DeviceModel::new(amp_cavities(), amp_mechs(), vec![]).unwrap();
        let rep = stability_check(&model);
        assert!(rep.stable);
        assert_eq!(rep.poles.len(), 8);
        let expected = [
            -model.cavities[0].kappa_total() / 2.0,
            -model.cavities[1].kappa_total() / 2.0,
            -model.mechs[0].gamma / 2.0,
            -model.mechs[1].gamma / 2.0,
        ];
        for want in expected {
            let hits = rep
                .poles
                .iter()
                .filter(|p| (p.im - want).abs() < 1e-6 * want.abs() && p.re.abs() < 1e-3)
                .count();
            assert_eq!(hits, 2, "pole at {want} rad/s should appear twice");
        }
        // margin = slowest decay = γ2/2
        assert!((rep.margin - model.mechs[1].gamma / 2.0).abs() < 1e-6 * rep.margin);
    }

    #[test]
    fn single_mo_instability_threshold_is_c1_plus_one() {
        // bisection on C2 watching the leading pole cross
        let c1 = 2.0;
        let threshold = {
            let mut lo = 0.1;
            let mut hi = 8.0;
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                let model = fixture_single_mo(c1, mid, 0.0);
                if stability_check(&model).stable {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        assert!(
            (threshold - (c1 + 1.0)).abs() / (c1 + 1.0) < 0.01,
            "threshold {threshold}"
        );
    }

    #[test]
    fn four_tone_working_point_threshold_is_half_one_plus_four_delta_sq() {
        // The four-tone device at its working point destabilizes where the
        // closed-form denominator crosses zero: C2 = (1+4δ²)/2. This is
        // the answer to how the single-oscillator rule generalizes.
        let delta = 0.8;
        let want = (1.0 + 4.0 * delta * delta) / 2.0;
        let mut lo = 0.05;
        let mut hi = 4.0 * want;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let model = equal_c_model_at_workpoint(1.0, mid, delta, 0.0);
            if stability_check(&model).stable {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let threshold = 0.5 * (lo + hi);
        assert!(
            (threshold - want).abs() / want < 0.01,
            "threshold {threshold} want {want}"
        );
    }

    #[test]
    fn fixture_is_stable_at_its_working_point() {
        let mut model = fixture_amp();
        let tuning = isolation_tuning(&model).unwrap();
        model.set_global_phase(tuning.phi_star).unwrap();
        let rep = stability_check(&model);
        assert!(rep.stable, "margin = {}", rep.margin);
        assert_eq!(rep.poles.len(), 8);
    }

    /// Synthetic sweep: backward dip and forward peak, both Lorentzian in
    /// power with the given FWHM (Hz).
    fn synthetic_sweep(fwhm_hz: f64, span_hz: f64, n: usize) -> SweepResult {
        let points = (0..n)
            .map(|i| {
                let f = -span_hz + 2.0 * span_hz * i as f64 / (n as f64 - 1.0);
                let lor = 1.0 / (1.0 + (2.0 * f / fwhm_hz).powi(2));
                // deep dip: power 1 − 0.9999·lor ; peak: power 1 + 9·lor
                let bwd_amp = (1.0 - 0.9999 * lor).sqrt();
                let fwd_amp = (1.0 + 9.0 * lor).sqrt();
                crate::model::SParamPoint {
                    omega: TWO_PI * f,
                    s11: C64::new(0.5, 0.0),
                    s12: C64::new(bwd_amp, 0.0),
                    s21: C64::new(fwd_amp, 0.0),
                    s22: C64::new(0.5, 0.0),
                }
            })
            .collect();
        SweepResult { points }
    }

    #[test]
    fn metrics_recover_lorentzian_widths() {
        let fwhm = 400.0;
        let n = 4001;
        let span = 4000.0;
        let grid_step = 2.0 * span / (n as f64 - 1.0);
        let m = compute_metrics(&synthetic_sweep(fwhm, span, n)).unwrap();
        // deep dip: the −3 dB-below-baseline width equals the FWHM
        assert!(
            (m.isolation_bandwidth_hz - fwhm).abs() <= grid_step,
            "iso bw {}",
            m.isolation_bandwidth_hz
        );
        // forward peak height 10 dB; half-max power band of 1+9·lor:
        // 1+9·lor = 5 → lor = 4/9 → f = ±(fwhm/2)·√(5/4) → width fwhm·1.118
        let want = fwhm * (5.0f64 / 4.0).sqrt();
        assert!(
            (m.amplification_bandwidth_hz - want).abs() <= grid_step,
            "amp bw {} want {want}",
            m.amplification_bandwidth_hz
        );
        assert!((m.peak_forward_gain_db - 10.0).abs() < 0.01);
    }

    #[test]
    fn metrics_reciprocal_single_mo_has_zero_nonreciprocity() {
        let model = fixture_single_mo(1.27, 1.33, TWO_PI * 100.0);
        let grid = crate::model::detuning_grid(TWO_PI * 3000.0, 801);
        let sweep = SweepResult::evaluate(&model, &grid).unwrap();
        let fwd: Vec<f64> = sweep.points.iter().map(|p| amplitude_db(p.s21)).collect();
        let bwd: Vec<f64> = sweep.points.iter().map(|p| amplitude_db(p.s12)).collect();
        let max_diff = fwd
            .iter()
            .zip(&bwd)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 0.01, "nonreciprocity {max_diff}");
    }

    #[test]
    fn metrics_unbracketed_feature_is_a_range_error() {
        // narrow span around the dip only: forward half-band leaks out
        let sweep = synthetic_sweep(4000.0, 1000.0, 101);
        assert!(matches!(
            compute_metrics(&sweep).unwrap_err(),
            WorkpointError::Range(_)
        ));
    }

    #[test]
    fn phase_sweep_minimum_matches_analytic_phase() {
        let model = fixture_amp();
        let tuning = isolation_tuning(&model).unwrap();
        let n = 721;
        let phis: Vec<f64> = (0..n)
            .map(|i| -PI + 2.0 * PI * i as f64 / n as f64)
            .collect();
        let pts = phase_sweep(&model, &phis).unwrap();
        let imin = pts
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.s12_mag.partial_cmp(&b.1.s12_mag).unwrap())
            .unwrap()
            .0;
        let grid_step = 2.0 * PI / n as f64;
        assert!(
            wrap_angle(pts[imin].phi - tuning.phi_star).abs() <= grid_step,
            "grid argmin {} vs analytic {}",
            pts[imin].phi,
            tuning.phi_star
        );
    }

    #[test]
    fn phase_sweep_gauge_invariance() {
        let model = fixture_amp();
        let phis: Vec<f64> = (0..32).map(|i| -PI + 2.0 * PI * i as f64 / 32.0).collect();
        let base = phase_sweep(&model, &phis).unwrap();

        // shift all four drive phases by the same constant
        let mut shifted = model.clone();
        for d in shifted.drives().to_vec() {
            shifted
                .set_drive_phase(d.cavity, d.mech, d.sideband, d.phase + 0.7)
                .unwrap();
        }
        let moved = phase_sweep(&shifted, &phis).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert!((a.s12_mag - b.s12_mag).abs() < 1e-12 * a.s12_mag.max(1.0));
            assert!((a.s21_mag - b.s21_mag).abs() < 1e-12 * a.s21_mag.max(1.0));
        }
    }

    #[test]
    fn negating_phase_swaps_transmission_roles() {
        // |S21(−Φ, ω)| = |S12(Φ, ω)| pointwise, so the dip moves from the
        // backward to the forward curve when Φ → −Φ.
        let mut plus = fixture_amp();
        plus.set_global_phase(0.544).unwrap();
        let mut minus = fixture_amp();
        minus.set_global_phase(-0.544).unwrap();
        for &w in &crate::model::detuning_grid(TWO_PI * 2000.0, 41) {
            let p = s_params(&plus, w).unwrap();
            let m = s_params(&minus, w).unwrap();
            assert!((p.s12.norm() - m.s21.norm()).abs() < 1e-12 * p.s12.norm().max(1e-6));
            assert!((p.s21.norm() - m.s12.norm()).abs() < 1e-12 * p.s21.norm().max(1e-6));
        }
    }

    #[test]
    fn phase_sweep_missing_drives_is_an_error() {
        let model = fixture_single_mo(1.0, 0.5, 0.0);
        assert!(matches!(
            phase_sweep(&model, &[0.0]).unwrap_err(),
            WorkpointError::MissingDrives
        ));
    }

    #[test]
    fn working_point_matching_diagnostics() {
        let mechs = amp_mechs();
        let mut wp = isolation_point(mechs[0].gamma, mechs[1].gamma, 2.0193442490502328);
        assert!(wp.match_residual.is_nan());
        wp.evaluate_matching(3.0, 406.0 / 603.0);
        assert!(wp.matched, "residual {}", wp.match_residual);
    }
}

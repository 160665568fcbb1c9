//! Simultaneous bounded least-squares fits of the four S-parameter sweeps.
//!
//! All four data sets share one parameter vector: the per-sideband
//! cooperativities, the two pump detunings, and the pump phase Φ, with the
//! cavity and mechanical rates held fixed. Residuals are taken in power-dB
//! space so deep interference dips and gain peaks carry comparable weight.
//! The minimizer is a damped least-squares (Levenberg–Marquardt) loop with
//! a forward-difference Jacobian, box bounds enforced by clamping each
//! proposal, and Φ treated as periodic. Only accepted steps update the
//! state, so the objective is non-increasing by construction, and the
//! whole procedure is deterministic.

use thiserror::Error;

use crate::measurement::SParamLabel;
use crate::model::{
    amplifier_drive_set, amplitude_db, s_params, wrap_angle, CavityParams, DeviceModel,
    MechParams, ModelError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("initial guess outside bounds: {0}")]
    Bounds(String),
    #[error("fit problem must carry exactly four datasets with distinct labels")]
    BadProblem,
    #[error("dataset {0:?} has mismatched array lengths")]
    Shape(SParamLabel),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One labeled data set: power dB versus probe detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDataset {
    pub label: SParamLabel,
    /// Probe detunings (rad/s, rotating frame).
    pub omegas: Vec<f64>,
    /// Measured power (dB).
    pub data_db: Vec<f64>,
}

/// Box bounds of the free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    /// Cooperativities in [0, c_max].
    pub c_max: f64,
    /// |δ1| ≤ delta1_max, |δ2| ≤ delta2_max (rad/s).
    pub delta1_max: f64,
    pub delta2_max: f64,
    /// |per-dataset frequency offset| bound (rad/s), when enabled.
    pub offset_max: f64,
}

impl FitBounds {
    /// Default bounds: C ∈ [0, 10], |δ_j| ≤ 5γ_j, offsets within ±2γ1.
    pub fn for_mechs(mechs: &[MechParams; 2]) -> Self {
        Self {
            c_max: 10.0,
            delta1_max: 5.0 * mechs[0].gamma,
            delta2_max: 5.0 * mechs[1].gamma,
            offset_max: 2.0 * mechs[0].gamma,
        }
    }
}

/// The fit setup: fixed device rates, four data sets, bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub cavities: [CavityParams; 2],
    pub mechs: [MechParams; 2],
    pub datasets: Vec<FitDataset>,
    pub bounds: FitBounds,
    /// Add one constant background power per dataset to the fit expression
    /// (models the noise floor); off by default.
    pub fit_background: bool,
    /// Free one frequency offset per dataset (probe-axis miscalibration);
    /// off by default.
    pub fit_freq_offsets: bool,
}

impl FitProblem {
    pub fn new(
        cavities: [CavityParams; 2],
        mechs: [MechParams; 2],
        datasets: Vec<FitDataset>,
    ) -> Result<Self, FitError> {
        if datasets.len() != 4 {
            return Err(FitError::BadProblem);
        }
        for (i, d) in datasets.iter().enumerate() {
            if d.omegas.len() != d.data_db.len() || d.omegas.is_empty() {
                return Err(FitError::Shape(d.label));
            }
            for e in &datasets[i + 1..] {
                if e.label == d.label {
                    return Err(FitError::BadProblem);
                }
            }
        }
        let bounds = FitBounds::for_mechs(&mechs);
        Ok(Self {
            cavities,
            mechs,
            datasets,
            bounds,
            fit_background: false,
            fit_freq_offsets: false,
        })
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        let mut n = 7;
        if self.fit_background {
            n += 4;
        }
        if self.fit_freq_offsets {
            n += 4;
        }
        n
    }

    /// Index of dataset k's background parameter, when enabled.
    pub fn background_index(&self, k: usize) -> Option<usize> {
        self.fit_background.then_some(7 + k)
    }

    /// Index of dataset k's frequency-offset parameter, when enabled.
    pub fn offset_index(&self, k: usize) -> Option<usize> {
        self.fit_freq_offsets
            .then_some(7 + if self.fit_background { 4 } else { 0 } + k)
    }

    /// Total number of residuals.
    pub fn residual_len(&self) -> usize {
        self.datasets.iter().map(|d| d.omegas.len()).sum()
    }

    fn scales(&self) -> Vec<f64> {
        let mut s = vec![1.0, 1.0, 1.0, 1.0, self.mechs[0].gamma, self.mechs[1].gamma, 1.0];
        if self.fit_background {
            s.extend_from_slice(&[1.0; 4]);
        }
        if self.fit_freq_offsets {
            s.extend_from_slice(&[self.mechs[0].gamma; 4]);
        }
        s
    }

    fn check_bounds(&self, p: &FitParams) -> Result<(), FitError> {
        let b = &self.bounds;
        for (i, c) in p.coops.iter().enumerate() {
            if !(0.0..=b.c_max).contains(c) {
                return Err(FitError::Bounds(format!("C[{i}] = {c} outside [0, {}]", b.c_max)));
            }
        }
        if p.delta1.abs() > b.delta1_max {
            return Err(FitError::Bounds(format!(
                "delta1 = {} outside ±{}",
                p.delta1, b.delta1_max
            )));
        }
        if p.delta2.abs() > b.delta2_max {
            return Err(FitError::Bounds(format!(
                "delta2 = {} outside ±{}",
                p.delta2, b.delta2_max
            )));
        }
        if !(p.phi > -std::f64::consts::PI && p.phi <= std::f64::consts::PI) {
            return Err(FitError::Bounds(format!("phi = {} outside (−π, π]", p.phi)));
        }
        Ok(())
    }

    fn clamp(&self, theta: &mut [f64]) {
        let b = &self.bounds;
        for t in theta[0..4].iter_mut() {
            *t = t.clamp(0.0, b.c_max);
        }
        theta[4] = theta[4].clamp(-b.delta1_max, b.delta1_max);
        theta[5] = theta[5].clamp(-b.delta2_max, b.delta2_max);
        theta[6] = wrap_angle(theta[6]);
        if self.fit_background {
            for t in theta[7..11].iter_mut() {
                *t = t.max(0.0);
            }
        }
        if self.fit_freq_offsets {
            let base = if self.fit_background { 11 } else { 7 };
            for t in theta[base..base + 4].iter_mut() {
                *t = t.clamp(-b.offset_max, b.offset_max);
            }
        }
    }

    fn model_for(&self, theta: &[f64]) -> Result<DeviceModel, ModelError> {
        let mut drives = amplifier_drive_set(
            &self.cavities,
            &self.mechs,
            [theta[0], theta[1], theta[2], theta[3]],
            theta[4],
            theta[5],
        );
        // all other drive phases are zero, so Φ lands on the first drive;
        // this stays well defined even when a cooperativity hits its lower
        // bound and a drive vanishes
        drives[0].phase = theta[6];
        DeviceModel::new(self.cavities, self.mechs, drives)
    }
}

/// Physical parameter view of the flat vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// (C11, C12, C21, C22).
    pub coops: [f64; 4],
    pub delta1: f64,
    pub delta2: f64,
    pub phi: f64,
}

impl FitParams {
    pub fn to_vec(self, problem: &FitProblem) -> Vec<f64> {
        let mut v = vec![
            self.coops[0],
            self.coops[1],
            self.coops[2],
            self.coops[3],
            self.delta1,
            self.delta2,
            self.phi,
        ];
        v.resize(problem.dim(), 0.0);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        Self {
            coops: [v[0], v[1], v[2], v[3]],
            delta1: v[4],
            delta2: v[5],
            phi: v[6],
        }
    }
}

/// Residual vector with the indices where the model was singular and a
/// sentinel value was substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub sentinel_count: usize,
}

const SENTINEL_DB: f64 = 1e6;

/// Concatenated (model_db − data_db) over all datasets.
pub fn residuals(theta: &[f64], problem: &FitProblem) -> Result<Residuals, FitError> {
    let model = problem.model_for(theta)?;
    let mut values = Vec::with_capacity(problem.residual_len());
    let mut sentinel_count = 0;
    for (k, ds) in problem.datasets.iter().enumerate() {
        let bg = problem.background_index(k).map_or(0.0, |i| theta[i]);
        let off = problem.offset_index(k).map_or(0.0, |i| theta[i]);
        for (w, data_db) in ds.omegas.iter().zip(&ds.data_db) {
            match s_params(&model, *w + off) {
                Ok(p) => {
                    let amp = match ds.label {
                        SParamLabel::S11 => p.s11,
                        SParamLabel::S12 => p.s12,
                        SParamLabel::S21 => p.s21,
                        SParamLabel::S22 => p.s22,
                    };
                    let model_db = if bg > 0.0 {
                        10.0 * (amp.norm_sqr() + bg).log10()
                    } else {
                        amplitude_db(amp)
                    };
                    values.push(model_db - data_db);
                }
                Err(ModelError::Singular { .. }) => {
                    values.push(SENTINEL_DB);
                    sentinel_count += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(Residuals {
        values,
        sentinel_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    /// Relative objective change fell below `ftol`.
    ObjectiveConverged,
    /// Scaled step norm fell below `xtol`.
    StepConverged,
    /// Iteration budget exhausted; result carries the best point found.
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub per_dataset_rms_db: Vec<f64>,
    pub status: FitStatus,
    pub iterations: usize,
    pub sentinel_count: usize,
}

impl FitResult {
    pub fn physical(&self) -> FitParams {
        FitParams::from_vec(&self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative objective-change convergence threshold.
    pub ftol: f64,
    /// Scaled step-norm convergence threshold.
    pub xtol: f64,
    /// Extra minimizer runs from deterministically jittered starts; the
    /// best final objective wins. Useful against the washboard local
    /// minima that sharp mechanical lineshapes create in detuning space.
    pub restarts: usize,
    /// Seed of the jitter sequence.
    pub restart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            ftol: 1e-10,
            xtol: 1e-12,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

/// Minimize the summed squared dB residuals from `initial` (within
/// bounds), optionally retrying from jittered starting points.
pub fn fit(
    problem: &FitProblem,
    initial: FitParams,
    options: FitOptions,
) -> Result<FitResult, FitError> {
    problem.check_bounds(&initial)?;
    let theta0 = initial.to_vec(problem);
    let mut best = levenberg_marquardt(problem, theta0.clone(), &options)?;
    if options.restarts > 0 {
        let good_enough = 1e-16 * problem.residual_len() as f64;
        let mut rng = SplitMix::new(options.restart_seed);
        for _ in 0..options.restarts {
            if best.objective <= good_enough {
                break;
            }
            let mut start = theta0.clone();
            for c in start[0..4].iter_mut() {
                *c *= (0.4 * (rng.uniform() - 0.5)).exp();
            }
            start[4] += (rng.uniform() - 0.5) * 1.4 * problem.mechs[0].gamma;
            start[5] += (rng.uniform() - 0.5) * 1.4 * problem.mechs[1].gamma;
            start[6] += (rng.uniform() - 0.5) * 2.0 * std::f64::consts::PI;
            problem.clamp(&mut start);
            let out = levenberg_marquardt(problem, start, &options)?;
            let total = best.iterations + out.iterations;
            if out.objective < best.objective {
                best = out;
            }
            best.iterations = total;
        }
    }
    Ok(best)
}

/// Deterministic 64-bit mixer used for restart jitter.
struct SplitMix {
    state: u64,
}

impl SplitMix {
    fn new(seed: u64) -> Self {
        Self {
            state: seed.wrapping_add(0x9e3779b97f4a7c15),
        }
    }

    fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[allow(clippy::needless_range_loop)]
fn levenberg_marquardt(
    problem: &FitProblem,
    theta0: Vec<f64>,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let scales = problem.scales();
    let dim = problem.dim();
    let mut theta = theta0;
    assert_eq!(theta.len(), dim);

    let objective_of = |r: &Residuals| -> f64 { r.values.iter().map(|v| v * v).sum() };
    let mut res = residuals(&theta, problem)?;
    let mut obj = objective_of(&res);
    let mut lambda = 1e-3;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    for _ in 0..options.max_iterations {
        iterations += 1;
        // forward-difference Jacobian in scaled coordinates
        let m = res.values.len();
        let mut jac = vec![vec![0.0f64; dim]; m];
        for k in 0..dim {
            let step = 1e-7 * scales[k] * (1.0 + (theta[k] / scales[k]).abs());
            let mut probe = theta.clone();
            probe[k] += step;
            problem.clamp(&mut probe);
            let mut actual = probe[k] - theta[k];
            if actual == 0.0 {
                probe[k] = theta[k] - step;
                problem.clamp(&mut probe);
                actual = probe[k] - theta[k];
            }
            let r2 = residuals(&probe, problem)?;
            for i in 0..m {
                jac[i][k] = (r2.values[i] - res.values[i]) / (actual / scales[k]);
            }
        }
        // normal equations  (JᵀJ + λ diag(JᵀJ)) d = −Jᵀ r
        let mut jtj = vec![vec![0.0f64; dim]; dim];
        let mut jtr = vec![0.0f64; dim];
        for i in 0..m {
            for a in 0..dim {
                jtr[a] += jac[i][a] * res.values[i];
                for b in a..dim {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut lhs = jtj.clone();
            for a in 0..dim {
                lhs[a][a] += lambda * jtj[a][a].max(1e-30);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step_scaled) = solve_real(&mut lhs, &rhs) else {
                lambda *= 7.0;
                continue;
            };
            let mut candidate = theta.clone();
            for k in 0..dim {
                candidate[k] += step_scaled[k] * scales[k];
            }
            problem.clamp(&mut candidate);
            let cand_res = residuals(&candidate, problem)?;
            let cand_obj = objective_of(&cand_res);
            if cand_obj < obj {
                let step_norm: f64 = candidate
                    .iter()
                    .zip(&theta)
                    .zip(&scales)
                    .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
                    .sum::<f64>()
                    .sqrt();
                let rel_change = (obj - cand_obj) / obj.max(1e-300);
                theta = candidate;
                res = cand_res;
                obj = cand_obj;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_change < options.ftol || obj == 0.0 {
                    status = FitStatus::ObjectiveConverged;
                }
                if step_norm < options.xtol {
                    status = FitStatus::StepConverged;
                }
                break;
            }
            lambda *= 7.0;
        }
        if !accepted {
            // no downhill step found at any damping: stationary
            status = FitStatus::StepConverged;
            break;
        }
        if status != FitStatus::MaxIterations {
            break;
        }
    }

    let mut per_dataset_rms_db = Vec::with_capacity(problem.datasets.len());
    let mut offset = 0;
    for ds in &problem.datasets {
        let n = ds.omegas.len();
        let ss: f64 = res.values[offset..offset + n].iter().map(|v| v * v).sum();
        per_dataset_rms_db.push((ss / n as f64).sqrt());
        offset += n;
    }
    Ok(FitResult {
        params: theta,
        objective: obj,
        per_dataset_rms_db,
        status,
        iterations,
        sentinel_count: res.sentinel_count,
    })
}

/// Gaussian elimination with partial pivoting; `None` for a singular
/// system.
#[allow(clippy::needless_range_loop)]
fn solve_real(a: &mut [Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut pivot = k;
        for i in (k + 1)..n {
            if a[i][k].abs() > a[pivot][k].abs() {
                pivot = i;
            }
        }
        if a[pivot][k] == 0.0 {
            return None;
        }
        a.swap(k, pivot);
        x.swap(k, pivot);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            x[i] -= a[i][j] * x[j];
        }
        x[i] /= a[i][i];
    }
    Some(x)
}

/// Evaluate a model into four noiseless datasets on a shared grid.
pub fn synthesize_datasets(
    model: &DeviceModel,
    omegas: &[f64],
) -> Result<Vec<FitDataset>, ModelError> {
    let mut sets = [
        (SParamLabel::S11, Vec::new()),
        (SParamLabel::S12, Vec::new()),
        (SParamLabel::S21, Vec::new()),
        (SParamLabel::S22, Vec::new()),
    ];
    for &w in omegas {
        let p = s_params(model, w)?;
        sets[0].1.push(amplitude_db(p.s11));
        sets[1].1.push(amplitude_db(p.s12));
        sets[2].1.push(amplitude_db(p.s21));
        sets[3].1.push(amplitude_db(p.s22));
    }
    Ok(sets
        .into_iter()
        .map(|(label, data_db)| FitDataset {
            label,
            omegas: omegas.to_vec(),
            data_db,
        })
        .collect())
}

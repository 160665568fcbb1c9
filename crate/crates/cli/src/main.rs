//! Command-line front end: sweeps, working points, phase sweeps, stability
//! reports, calibration, and fitting, with CSV/plot-ready output.
//!
//! Exit codes: 0 on success, 2 for configuration or file problems, 3 for
//! numerical failures (instability, singular response, non-finite data).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use omamp::config::{CalibrationSection, ConfigError, Frame, RunConfig};
use omamp::fitting::{self, FitDataset, FitOptions, FitParams, FitProblem};
use omamp::measurement::{
    self, estimate_imbalance, read_sweep_csv, subtract_noise, Band, CorrectedSweep, GainSet,
    RawSweep, SParamLabel,
};
use omamp::model::{amplitude_db, wrap_angle, DeviceModel, ModelError};
use omamp::workpoint::{
    gain_at_instability_db, impedance_matching_delta, isolation_point, isolation_tuning,
    matched_gain_db, phase_sweep, stability_check, WorkpointError,
};
use omamp::{nonrwa, s_params};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Parser)]
#[command(name = "omamp", version, about = "Two-cavity optomechanical directional amplifier toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Device/run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format (only csv).
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the S-parameters over the configured probe range.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Use the sideband-leakage-corrected model.
        #[arg(long)]
        nonrwa: bool,
        /// Append the elimination-vs-direct-solve deviation per point.
        #[arg(long)]
        oracle_check: bool,
    },
    /// Solve the isolation working point and matching diagnostics.
    Workpoint {
        #[command(flatten)]
        common: Common,
        /// Fix the dimensionless detuning δ instead of solving for
        /// impedance matching.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Backward/forward transmission at band center versus pump phase.
    Phases {
        #[command(flatten)]
        common: Common,
        /// Number of phase grid points over (−π, π].
        #[arg(long, default_value_t = 181)]
        points: usize,
    },
    /// Pole analysis of the driven system.
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Simultaneous fit of four measured S-parameter sweeps.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        s11: PathBuf,
        #[arg(long, value_name = "PATH")]
        s12: PathBuf,
        #[arg(long, value_name = "PATH")]
        s21: PathBuf,
        #[arg(long, value_name = "PATH")]
        s22: PathBuf,
    },
    /// Noise subtraction and cross-gain calibration.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Raw backward sweep of a single-oscillator amplifier
        /// (for the imbalance estimate).
        #[arg(long, value_name = "PATH")]
        s12_raw: Option<PathBuf>,
        /// Raw forward sweep of the same single-oscillator amplifier.
        #[arg(long, value_name = "PATH")]
        s21_raw: Option<PathBuf>,
        /// Noise spectrum aligned with --s12-raw.
        #[arg(long, value_name = "PATH")]
        noise_s12: Option<PathBuf>,
        /// Noise spectrum aligned with --s21-raw.
        #[arg(long, value_name = "PATH")]
        noise_s21: Option<PathBuf>,
    },
}

/// Failure modes carrying their process exit code.
enum CliError {
    /// Configuration, file, or format problems (exit 2).
    Config(String),
    /// Numerical failures (exit 3).
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Model(m) => m.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Singular { .. } | ModelError::DegenerateManifolds => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<WorkpointError> for CliError {
    fn from(e: WorkpointError) -> Self {
        match e {
            WorkpointError::Model(m) => m.into(),
            WorkpointError::MissingDrives => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<measurement::MeasurementError> for CliError {
    fn from(e: measurement::MeasurementError) -> Self {
        match e {
            measurement::MeasurementError::Csv(_) | measurement::MeasurementError::Shape(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<fitting::FitError> for CliError {
    fn from(e: fitting::FitError) -> Self {
        match e {
            fitting::FitError::Model(m) => m.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep {
            common,
            nonrwa,
            oracle_check,
        } => cmd_sweep(&common, nonrwa, oracle_check),
        Command::Workpoint { common, delta } => cmd_workpoint(&common, delta),
        Command::Phases { common, points } => cmd_phases(&common, points),
        Command::Stability { common } => cmd_stability(&common),
        Command::Fit {
            common,
            s11,
            s12,
            s21,
            s22,
        } => cmd_fit(&common, &s11, &s12, &s21, &s22),
        Command::Calibrate {
            common,
            s12_raw,
            s21_raw,
            noise_s12,
            noise_s21,
        } => cmd_calibrate(&common, s12_raw, s21_raw, noise_s12, noise_s21),
    }
}

fn load(common: &Common) -> Result<(RunConfig, DeviceModel), CliError> {
    if common.format != "csv" {
        return Err(CliError::Config(format!(
            "unsupported format `{}`; only csv is available",
            common.format
        )));
    }
    let cfg = RunConfig::from_path(&common.config)?;
    let model = cfg.build_model()?;
    Ok((cfg, model))
}

fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
    }
}

fn cmd_sweep(common: &Common, use_nonrwa: bool, oracle_check: bool) -> Result<(), CliError> {
    let (cfg, mut model) = load(common)?;
    if use_nonrwa && model.g0_ratios.is_none() {
        eprintln!(
            "warning: config has no g0_ratio_cavity1/g0_ratio_cavity2; \
             assuming unit single-photon coupling ratios"
        );
        model = model.with_g0_ratios(omamp::G0Ratios::default());
    }
    let omegas = cfg.sweep_omegas()?;

    // refuse to sweep across an unstable configuration
    let report = stability_check(&model);
    if !report.stable {
        let mut msg = String::from("model is unstable; poles (re_hz, im_hz):\n");
        for p in &report.poles {
            let _ = writeln!(msg, "  {:+.6e} {:+.6e}", p.re / TWO_PI, p.im / TWO_PI);
        }
        return Err(CliError::Numerical(msg));
    }

    let lab = cfg.sweep.frame == Frame::Lab;
    let mut out = String::new();
    out.push_str("freq_hz,s11_db,s12_db,s21_db,s22_db,s11_phase_rad,s12_phase_rad,s21_phase_rad,s22_phase_rad");
    if lab {
        out.push_str(",fwd_out_freq_hz");
    }
    if oracle_check {
        out.push_str(",oracle_dev");
    }
    out.push('\n');

    let f1 = cfg.device.cavity1.omega_hz;
    let f2 = cfg.device.cavity2.omega_hz;
    for &w in &omegas {
        let p = if use_nonrwa {
            nonrwa::corrected_s_params(&model, w)?
        } else {
            s_params(&model, w)?
        };
        let freq_hz = if lab { f1 + w / TWO_PI } else { w / TWO_PI };
        let _ = write!(
            out,
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            freq_hz,
            amplitude_db(p.s11),
            amplitude_db(p.s12),
            amplitude_db(p.s21),
            amplitude_db(p.s22),
            p.s11.arg(),
            p.s12.arg(),
            p.s21.arg(),
            p.s22.arg(),
        );
        if lab {
            let _ = write!(out, ",{:.9e}", f2 - w / TWO_PI);
        }
        if oracle_check {
            let q = omamp::direct_solve_oracle(&model, w)?;
            let dev = [
                (p.s11, q.s11),
                (p.s12, q.s12),
                (p.s21, q.s21),
                (p.s22, q.s22),
            ]
            .iter()
            .map(|(a, b)| (a - b).norm() / b.norm().max(1e-30))
            .fold(0.0f64, f64::max);
            let _ = write!(out, ",{dev:.3e}");
        }
        out.push('\n');
    }
    emit(common, &out)
}

fn cmd_workpoint(common: &Common, delta: Option<f64>) -> Result<(), CliError> {
    let (_cfg, model) = load(common)?;
    let g1 = model.mechs[0].gamma;
    let g2 = model.mechs[1].gamma;
    let r1 = model.cavities[0].coupling_ratio();
    let r2 = model.cavities[1].coupling_ratio();
    // equal-cooperativity reduction used by the closed forms
    let coops: Vec<f64> = model
        .drives()
        .iter()
        .map(|d| d.cooperativity(&model.cavities, &model.mechs))
        .collect();
    let (c1, c2) = match coops.len() {
        4 => (0.5 * (coops[0] + coops[1]), 0.5 * (coops[2] + coops[3])),
        _ => (0.0, 0.0),
    };

    let mut out = String::new();
    let _ = writeln!(out, "r1: {r1:.6}");
    let _ = writeln!(out, "r2: {r2:.6}");
    let _ = writeln!(out, "c1_mean: {c1:.6}");
    let _ = writeln!(out, "c2_mean: {c2:.6}");

    let wp = match delta {
        Some(d) => {
            let mut wp = isolation_point(g1, g2, d);
            wp.evaluate_matching(c1, r1);
            let _ = writeln!(out, "delta_source: fixed");
            wp
        }
        None => match impedance_matching_delta(c1, r1) {
            Ok(m) => {
                let mut wp = isolation_point(g1, g2, m.delta);
                wp.evaluate_matching(c1, r1);
                let _ = writeln!(out, "delta_source: impedance_matching");
                let _ = writeln!(out, "matching_residual: {:.3e}", m.reflection_residual);
                let _ = writeln!(out, "closed_form_delta: {:.9}", m.closed_form_delta);
                let _ = writeln!(
                    out,
                    "closed_form_variant_c1: {:.9}",
                    m.closed_form_variant_c1
                );
                let _ = writeln!(
                    out,
                    "closed_form_variant_sign_flipped: {:.9}",
                    m.closed_form_variant_sign_flipped
                );
                wp
            }
            Err(WorkpointError::Infeasible { .. }) => {
                let _ = writeln!(out, "delta_source: impedance_matching");
                let _ = writeln!(out, "matching: infeasible");
                isolation_point(g1, g2, 0.0)
            }
            Err(e) => return Err(e.into()),
        },
    };
    let _ = writeln!(out, "delta: {:.9}", wp.delta);
    let _ = writeln!(out, "delta1_hz: {:.6}", wp.delta1 / TWO_PI);
    let _ = writeln!(out, "delta2_hz: {:.6}", wp.delta2 / TWO_PI);
    let _ = writeln!(out, "phi_rad: {:.10}", wp.phi);
    let _ = writeln!(out, "phi_per_pi: {:.10}", wp.phi / std::f64::consts::PI);
    let _ = writeln!(out, "matched: {}", wp.matched);
    let _ = writeln!(out, "match_residual: {:.3e}", wp.match_residual);
    match matched_gain_db(c1, c2, r1, r2) {
        Ok(g) => {
            let _ = writeln!(out, "matched_gain_db: {g:.4}");
        }
        Err(e) => {
            let _ = writeln!(out, "matched_gain_db: unavailable ({e})");
        }
    }
    match gain_at_instability_db(r1, r2) {
        Ok(g) => {
            let _ = writeln!(out, "gain_ceiling_db: {g:.4}");
        }
        Err(e) => {
            let _ = writeln!(out, "gain_ceiling_db: unavailable ({e})");
        }
    }
    emit(common, &out)
}

fn cmd_phases(common: &Common, points: usize) -> Result<(), CliError> {
    let (_cfg, model) = load(common)?;
    if points < 2 {
        return Err(CliError::Config("phases needs at least 2 points".into()));
    }
    let phis: Vec<f64> = (0..points)
        .map(|i| -std::f64::consts::PI + TWO_PI * (i as f64 + 1.0) / points as f64)
        .collect();
    let pts = phase_sweep(&model, &phis)?;
    let tuning = isolation_tuning(&model)?;
    let mut out = String::new();
    let _ = writeln!(out, "# band_center_hz: {:.6}", tuning.omega_star / TWO_PI);
    out.push_str("phi_rad,s12_db,s21_db\n");
    for p in pts {
        let _ = writeln!(
            out,
            "{:.9e},{:.9e},{:.9e}",
            p.phi,
            20.0 * p.s12_mag.log10(),
            20.0 * p.s21_mag.log10()
        );
    }
    emit(common, &out)
}

fn cmd_stability(common: &Common) -> Result<(), CliError> {
    let (_cfg, model) = load(common)?;
    let report = stability_check(&model);
    let mut out = String::new();
    let _ = writeln!(out, "stable: {}", report.stable);
    let _ = writeln!(out, "margin_hz: {:.6}", report.margin / TWO_PI);
    let _ = writeln!(out, "poles: {}", report.poles.len());
    for (i, p) in report.poles.iter().enumerate() {
        let _ = writeln!(
            out,
            "pole_{}: {:+.6e} {:+.6e}",
            i + 1,
            p.re / TWO_PI,
            p.im / TWO_PI
        );
    }
    emit(common, &out)
}

fn read_fit_dataset(label: SParamLabel, path: &Path) -> Result<FitDataset, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_sweep_csv(file)?;
    if rows.is_empty() {
        return Err(CliError::Config(format!("{} is empty", path.display())));
    }
    Ok(FitDataset {
        label,
        omegas: rows.iter().map(|r| TWO_PI * r.freq_hz).collect(),
        data_db: rows.iter().map(|r| 10.0 * r.power.log10()).collect(),
    })
}

fn cmd_fit(
    common: &Common,
    s11: &Path,
    s12: &Path,
    s21: &Path,
    s22: &Path,
) -> Result<(), CliError> {
    let (_cfg, model) = load(common)?;
    let datasets = vec![
        read_fit_dataset(SParamLabel::S11, s11)?,
        read_fit_dataset(SParamLabel::S12, s12)?,
        read_fit_dataset(SParamLabel::S21, s21)?,
        read_fit_dataset(SParamLabel::S22, s22)?,
    ];
    let problem = FitProblem::new(model.cavities, model.mechs, datasets)?;
    let coops: Vec<f64> = model
        .drives()
        .iter()
        .map(|d| d.cooperativity(&model.cavities, &model.mechs))
        .collect();
    if coops.len() != 4 {
        return Err(CliError::Config(
            "fit needs the four amplifier drives in the config as the initial guess".into(),
        ));
    }
    let initial = FitParams {
        coops: [coops[0], coops[1], coops[2], coops[3]],
        delta1: model.mech_detuning(omamp::MechId::M1),
        delta2: model.mech_detuning(omamp::MechId::M2),
        phi: model.global_phase().unwrap_or(0.0),
    };
    let options = FitOptions {
        restarts: 4,
        restart_seed: 1,
        ..Default::default()
    };
    let result = fitting::fit(&problem, initial, options)?;
    let p = result.physical();

    let mut report = String::new();
    let _ = writeln!(report, "status: {:?}", result.status);
    let _ = writeln!(report, "iterations: {}", result.iterations);
    let _ = writeln!(report, "objective_db2: {:.6e}", result.objective);
    let _ = writeln!(report, "c11: {:.6}", p.coops[0]);
    let _ = writeln!(report, "c12: {:.6}", p.coops[1]);
    let _ = writeln!(report, "c21: {:.6}", p.coops[2]);
    let _ = writeln!(report, "c22: {:.6}", p.coops[3]);
    let _ = writeln!(report, "delta1_hz: {:.6}", p.delta1 / TWO_PI);
    let _ = writeln!(report, "delta2_hz: {:.6}", p.delta2 / TWO_PI);
    let _ = writeln!(report, "phi_rad: {:.8}", wrap_angle(p.phi));
    for (ds, rms) in problem.datasets.iter().zip(&result.per_dataset_rms_db) {
        let _ = writeln!(report, "rms_{:?}_db: {:.6e}", ds.label, rms);
    }
    print!("{report}");

    if common.out.is_some() {
        // model-vs-data curves on each dataset's own grid
        let fitted = {
            let drives = omamp::model::amplifier_drive_set(
                &model.cavities,
                &model.mechs,
                p.coops,
                p.delta1,
                p.delta2,
            );
            let mut m = DeviceModel::new(model.cavities, model.mechs, drives)?;
            m.set_global_phase(p.phi)?;
            m
        };
        let mut csv = String::from("dataset,freq_hz,data_db,model_db\n");
        for ds in &problem.datasets {
            for (w, d) in ds.omegas.iter().zip(&ds.data_db) {
                let sp = s_params(&fitted, *w)?;
                let amp = match ds.label {
                    SParamLabel::S11 => sp.s11,
                    SParamLabel::S12 => sp.s12,
                    SParamLabel::S21 => sp.s21,
                    SParamLabel::S22 => sp.s22,
                };
                let _ = writeln!(
                    csv,
                    "{:?},{:.9e},{:.9e},{:.9e}",
                    ds.label,
                    w / TWO_PI,
                    d,
                    amplitude_db(amp)
                );
            }
        }
        emit(common, &csv)?;
    }
    Ok(())
}

fn read_raw_sweep(
    path: &Path,
    noise: Option<&PathBuf>,
    cal: &CalibrationSection,
    source: Band,
    receiver: Band,
) -> Result<CorrectedSweep, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_sweep_csv(file)?;
    let p_noise = match noise {
        None => vec![0.0; rows.len()],
        Some(np) => {
            let nf = std::fs::File::open(np)
                .map_err(|e| CliError::Config(format!("cannot open {}: {e}", np.display())))?;
            let nrows = read_sweep_csv(nf)?;
            if nrows.len() != rows.len() {
                return Err(CliError::Config(format!(
                    "noise file {} has {} rows, sweep has {}",
                    np.display(),
                    nrows.len(),
                    rows.len()
                )));
            }
            nrows.iter().map(|r| r.power).collect()
        }
    };
    let raw = RawSweep {
        freqs_hz: rows.iter().map(|r| r.freq_hz).collect(),
        power: rows.iter().map(|r| r.power).collect(),
        source_band: source,
        receiver_band: receiver,
        bw_hz: cal.bw_hz,
        rbw_hz: cal.rbw_hz,
        p_noise,
        p_out: 1.0,
    };
    Ok(subtract_noise(&raw)?)
}

fn cmd_calibrate(
    common: &Common,
    s12_raw: Option<PathBuf>,
    s21_raw: Option<PathBuf>,
    noise_s12: Option<PathBuf>,
    noise_s21: Option<PathBuf>,
) -> Result<(), CliError> {
    let (cfg, _model) = load(common)?;
    let cal = cfg.calibration.as_ref().ok_or_else(|| {
        CliError::Config("config has no `calibration` section".into())
    })?;

    let mut out = String::new();
    let (imbalance_db, imbalance_unc_db) = match (cal.imbalance_db, &s12_raw, &s21_raw) {
        (Some(v), _, _) => (v, cal.imbalance_uncertainty_db.unwrap_or(0.0)),
        (None, Some(p12), Some(p21)) => {
            let c12 = read_raw_sweep(p12, noise_s12.as_ref(), cal, Band::Cav2, Band::Cav1)?;
            let c21 = read_raw_sweep(p21, noise_s21.as_ref(), cal, Band::Cav1, Band::Cav2)?;
            let imb = estimate_imbalance(&c12, &c21)?;
            let _ = writeln!(out, "imbalance_points_used: {}", imb.points_used);
            (imb.value_db, imb.uncertainty_db)
        }
        _ => {
            return Err(CliError::Config(
                "calibration needs either `imbalance_db` in the config or both --s12-raw and --s21-raw".into(),
            ))
        }
    };

    let gains = GainSet::from_reflection_gains(
        cal.g11_db,
        cal.g11_uncertainty_db,
        cal.g22_db,
        cal.g22_uncertainty_db,
        imbalance_db,
        imbalance_unc_db,
    );
    let _ = writeln!(out, "imbalance_db: {imbalance_db:.4}");
    let _ = writeln!(out, "imbalance_uncertainty_db: {imbalance_unc_db:.4}");
    let _ = writeln!(out, "g11_db: {:.4}", gains.g11_db);
    let _ = writeln!(out, "g22_db: {:.4}", gains.g22_db);
    let _ = writeln!(out, "g12_db: {:.4}", gains.g12_db);
    let _ = writeln!(out, "g21_db: {:.4}", gains.g21_db);
    let _ = writeln!(
        out,
        "uncertainties_db: {:.4} {:.4} {:.4} {:.4}",
        gains.uncertainties_db[0],
        gains.uncertainties_db[1],
        gains.uncertainties_db[2],
        gains.uncertainties_db[3]
    );
    let _ = writeln!(out, "product_residual_db: {:.3e}", gains.product_residual_db());
    emit(common, &out)
}

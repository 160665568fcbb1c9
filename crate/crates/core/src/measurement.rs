//! Raw-data pipeline: analyzer-noise subtraction and frequency-converting
//! cross-gain calibration.
//!
//! The network analyzer reports power ratios; the noise it integrates over
//! its bandwidth BW is measured separately on a spectrum analyzer with
//! resolution bandwidth RBW and removed as
//! `S_ij = S_meas − (BW/RBW)·P_noise/P_out`. Reflection gains are read
//! directly off-resonance; the two frequency-converting gain products are
//! recovered from their known product and the measured imbalance of a
//! reciprocal single-oscillator amplifier. Imbalance averaging is done in
//! the dB domain.

use serde::Deserialize;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("array length mismatch: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("no points at least 10 dB above the noise floor")]
    InsufficientSignal,
    #[error("band labels do not match the gain set: {0}")]
    BandMismatch(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Frequency range a tone belongs to (around cavity 1 or cavity 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Cav1,
    Cav2,
}

/// One uncalibrated analyzer sweep, as power ratios, with the noise
/// spectrum recorded alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSweep {
    pub freqs_hz: Vec<f64>,
    /// Measured power ratio per point (linear).
    pub power: Vec<f64>,
    /// Frequency range the excitation lives in.
    pub source_band: Band,
    /// Frequency range the detection lives in.
    pub receiver_band: Band,
    /// Analyzer integration bandwidth (Hz).
    pub bw_hz: f64,
    /// Spectrum-analyzer resolution bandwidth used for the noise (Hz).
    pub rbw_hz: f64,
    /// Noise power aligned to `freqs_hz` (same scale as `power·p_out`).
    pub p_noise: Vec<f64>,
    /// Excitation power the ratios are referenced to.
    pub p_out: f64,
}

/// A noise-subtracted power sweep. Points where the subtraction went
/// negative are clamped to zero and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSweep {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub clamped: Vec<bool>,
    pub source_band: Band,
    pub receiver_band: Band,
}

impl CorrectedSweep {
    /// Power in dB; clamped points come out as −∞.
    pub fn power_db(&self) -> Vec<f64> {
        self.power.iter().map(|p| 10.0 * p.log10()).collect()
    }
}

/// Remove the analyzer-noise contribution:
/// `Sِij = S_meas − (BW/RBW)·P_noise/P_out`, clamped at zero.
pub fn subtract_noise(raw: &RawSweep) -> Result<CorrectedSweep, MeasurementError> {
    if raw.power.len() != raw.freqs_hz.len() || raw.p_noise.len() != raw.freqs_hz.len() {
        return Err(MeasurementError::Shape(format!(
            "freqs {} / power {} / noise {}",
            raw.freqs_hz.len(),
            raw.power.len(),
            raw.p_noise.len()
        )));
    }
    if !raw.bw_hz.is_finite() || raw.bw_hz <= 0.0 || !raw.rbw_hz.is_finite() || raw.rbw_hz <= 0.0 {
        return Err(MeasurementError::Invalid(
            "BW and RBW must be positive".into(),
        ));
    }
    if raw.p_noise.iter().any(|p| *p < 0.0) {
        return Err(MeasurementError::Invalid(
            "noise power must be non-negative".into(),
        ));
    }
    if !raw.p_out.is_finite() || raw.p_out <= 0.0 {
        return Err(MeasurementError::Invalid(
            "excitation power must be finite and positive".into(),
        ));
    }
    let scale = raw.bw_hz / raw.rbw_hz / raw.p_out;
    let mut power = Vec::with_capacity(raw.power.len());
    let mut clamped = Vec::with_capacity(raw.power.len());
    for (s, n) in raw.power.iter().zip(&raw.p_noise) {
        let v = s - scale * n;
        if v < 0.0 {
            power.push(0.0);
            clamped.push(true);
        } else {
            power.push(v);
            clamped.push(false);
        }
    }
    Ok(CorrectedSweep {
        freqs_hz: raw.freqs_hz.clone(),
        power,
        clamped,
        source_band: raw.source_band,
        receiver_band: raw.receiver_band,
    })
}

/// The four measurement-chain gain products (dB), g_ij calibrating S_ij.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub g11_db: f64,
    pub g22_db: f64,
    pub g12_db: f64,
    pub g21_db: f64,
    /// 1σ uncertainties for (g11, g22, g12, g21).
    pub uncertainties_db: [f64; 4],
}

impl GainSet {
    /// Assemble the full set from the two reflection gains and the
    /// measured imbalance of the converting paths.
    pub fn from_reflection_gains(
        g11_db: f64,
        u11_db: f64,
        g22_db: f64,
        u22_db: f64,
        imbalance_db: f64,
        u_imb_db: f64,
    ) -> Self {
        let (g12_db, g21_db) = solve_cross_gains(g11_db, g22_db, imbalance_db);
        // the product constraint and the imbalance each contribute half
        let u_cross = 0.5 * (u11_db + u22_db + u_imb_db);
        Self {
            g11_db,
            g22_db,
            g12_db,
            g21_db,
            uncertainties_db: [u11_db, u22_db, u_cross, u_cross],
        }
    }

    /// g12 + g21 − g11 − g22, zero up to rounding by construction.
    pub fn product_residual_db(&self) -> f64 {
        self.g12_db + self.g21_db - self.g11_db - self.g22_db
    }
}

/// Recover the two frequency-converting gain products from the constraints
/// g12 + g21 = g11 + g22 and g12 − g21 = imbalance (all in dB).
pub fn solve_cross_gains(g11_db: f64, g22_db: f64, imbalance_db: f64) -> (f64, f64) {
    let sum = g11_db + g22_db;
    ((sum + imbalance_db) / 2.0, (sum - imbalance_db) / 2.0)
}

/// Imbalance estimate with its uncertainty (dB).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Imbalance {
    pub value_db: f64,
    pub uncertainty_db: f64,
    /// Number of sweep points that passed the signal threshold.
    pub points_used: usize,
}

/// Estimate the raw-gain imbalance 10·log10(s12/s21) of a reciprocal
/// single-oscillator amplifier, averaging in dB over the points at least
/// 10 dB above the noise floor (10th percentile of each sweep).
///
/// The uncertainty follows the sum-of-standard-deviations convention: with
/// equal independent per-sweep scatter the per-point difference has
/// std √2·σ, so the reported uncertainty is √2·std(d) = 2σ.
pub fn estimate_imbalance(
    s12: &CorrectedSweep,
    s21: &CorrectedSweep,
) -> Result<Imbalance, MeasurementError> {
    if s12.power.len() != s21.power.len() {
        return Err(MeasurementError::Shape(format!(
            "s12 has {} points, s21 has {}",
            s12.power.len(),
            s21.power.len()
        )));
    }
    let floor = |sweep: &CorrectedSweep| -> f64 {
        let mut db: Vec<f64> = sweep
            .power
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| 10.0 * p.log10())
            .collect();
        if db.is_empty() {
            return f64::INFINITY;
        }
        db.sort_by(|a, b| a.partial_cmp(b).unwrap());
        db[(db.len().saturating_sub(1)) / 10]
    };
    let f12 = floor(s12);
    let f21 = floor(s21);
    let mut diffs = Vec::new();
    for (a, b) in s12.power.iter().zip(&s21.power) {
        if *a <= 0.0 || *b <= 0.0 {
            continue;
        }
        let a_db = 10.0 * a.log10();
        let b_db = 10.0 * b.log10();
        if a_db >= f12 + 10.0 && b_db >= f21 + 10.0 {
            diffs.push(a_db - b_db);
        }
    }
    if diffs.is_empty() {
        return Err(MeasurementError::InsufficientSignal);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(Imbalance {
        value_db: mean,
        uncertainty_db: 2.0f64.sqrt() * var.sqrt(),
        points_used: diffs.len(),
    })
}

/// Which S-parameter a sweep represents, fixing the gain product and the
/// expected band labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SParamLabel {
    S11,
    S12,
    S21,
    S22,
}

impl SParamLabel {
    /// (source band, receiver band) the label implies. The excitation of
    /// S_ij enters in range j and the detection happens in range i.
    pub fn bands(self) -> (Band, Band) {
        match self {
            SParamLabel::S11 => (Band::Cav1, Band::Cav1),
            SParamLabel::S12 => (Band::Cav2, Band::Cav1),
            SParamLabel::S21 => (Band::Cav1, Band::Cav2),
            SParamLabel::S22 => (Band::Cav2, Band::Cav2),
        }
    }

    fn gain_db(self, gains: &GainSet) -> f64 {
        match self {
            SParamLabel::S11 => gains.g11_db,
            SParamLabel::S12 => gains.g12_db,
            SParamLabel::S21 => gains.g21_db,
            SParamLabel::S22 => gains.g22_db,
        }
    }
}

/// Divide a corrected power sweep by its measurement-chain gain product
/// (a dB subtraction). The sweep's band labels must match the label.
pub fn apply_calibration(
    label: SParamLabel,
    sweep: &CorrectedSweep,
    gains: &GainSet,
) -> Result<CorrectedSweep, MeasurementError> {
    let (source, receiver) = label.bands();
    if sweep.source_band != source || sweep.receiver_band != receiver {
        return Err(MeasurementError::BandMismatch(format!(
            "{label:?} expects source {source:?} / receiver {receiver:?}, sweep carries {:?}/{:?}",
            sweep.source_band, sweep.receiver_band
        )));
    }
    let gain_lin = 10.0f64.powf(label.gain_db(gains) / 10.0);
    Ok(CorrectedSweep {
        power: sweep.power.iter().map(|p| p / gain_lin).collect(),
        ..sweep.clone()
    })
}

/// One row of a sweep file: `freq_hz, value_db` or `freq_hz, re, im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub freq_hz: f64,
    /// Power ratio (linear).
    pub power: f64,
}

/// Read a sweep CSV (header mandatory, `.` decimal, `,` separator).
/// Accepts either a `value_db` column or `re`/`im` columns; complex rows
/// are converted to power as re²+im².
pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>, MeasurementError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MeasurementError::Csv(e.to_string()))?
        .clone();
    let idx = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let freq_col = idx("freq_hz").ok_or_else(|| {
        MeasurementError::Csv("missing mandatory `freq_hz` header column".into())
    })?;
    let db_col = idx("value_db");
    let re_col = idx("re");
    let im_col = idx("im");
    if db_col.is_none() && (re_col.is_none() || im_col.is_none()) {
        return Err(MeasurementError::Csv(
            "need either a `value_db` column or both `re` and `im`".into(),
        ));
    }
    let parse = |s: &str, row: usize, col: &str| -> Result<f64, MeasurementError> {
        s.parse::<f64>().map_err(|_| {
            MeasurementError::Csv(format!("row {row}: cannot parse `{s}` in column {col}"))
        })
    };
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MeasurementError::Csv(e.to_string()))?;
        let row = n + 2; // 1-based, after the header
        let freq_hz = parse(&rec[freq_col], row, "freq_hz")?;
        let power = if let Some(c) = db_col {
            10.0f64.powf(parse(&rec[c], row, "value_db")? / 10.0)
        } else {
            let re = parse(&rec[re_col.unwrap()], row, "re")?;
            let im = parse(&rec[im_col.unwrap()], row, "im")?;
            re * re + im * im
        };
        out.push(SweepRow { freq_hz, power });
    }
    Ok(out)
}

//! Linearized two-cavity / two-oscillator network model.
//!
//! Builds the susceptibility and coupling matrices of the four-tone driving
//! scheme and evaluates the 4×4 optical scattering matrix at any probe
//! detuning. All matrices live in the fixed basis order
//! `(a1, a1†, a2, a2†)` for photons and `(b1, b1†, b2, b2†)` for phonons.
//!
//! Probe detunings `omega` are measured in the frame rotating at the pump
//! frequencies; all rates are angular (rad/s). Absolute cavity frequencies
//! are metadata used only for lab-frame bookkeeping, never by the response
//! calculation itself.
//!
//! Sign conventions: time dependence `e^{-iωt}`, mechanical susceptibility
//! `χ_m(ω) = (γ/2 − i(ω+δ))⁻¹`, cavity susceptibility
//! `χ_c(ω) = (κ/2 − iω)⁻¹`, and for any response function
//! `f*(ω) ≡ (f(−ω))*`.

use thiserror::Error;

use crate::linalg::{Mat4, Mat8, C64};

/// Row/column index of `a1` in the photonic basis.
pub const A1: usize = 0;
/// Row/column index of `a1†`.
pub const A1D: usize = 1;
/// Row/column index of `a2`.
pub const A2: usize = 2;
/// Row/column index of `a2†`.
pub const A2D: usize = 3;

/// Reciprocal-condition-number floor below which a matrix inversion is
/// reported as singular instead of returning garbage.
pub const RCOND_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate drive for cavity {cavity}, oscillator {mech}, {sideband} sideband")]
    DuplicateDrive {
        cavity: u8,
        mech: u8,
        sideband: &'static str,
    },
    #[error("drives on oscillator {mech} carry different detunings ({a} vs {b} rad/s)")]
    MismatchedDetuning { mech: u8, a: f64, b: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("system susceptibility singular at probe detuning {omega} rad/s (rcond {rcond:.3e})")]
    Singular { omega: f64, rcond: f64 },
    #[error("single-photon coupling ratios are required for the sideband-leakage model")]
    MissingG0Ratios,
    #[error("degenerate manifolds: pumped mechanical frequencies coincide (ΔΩ = 0)")]
    DegenerateManifolds,
}

/// One microwave cavity mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// Absolute angular frequency ω_i (rad/s); metadata only.
    pub omega: f64,
    /// External (feedline) decay rate κ_i^e (rad/s).
    pub kappa_ext: f64,
    /// Internal decay rate κ_i^i (rad/s).
    pub kappa_int: f64,
}

impl CavityParams {
    pub fn new(omega: f64, kappa_ext: f64, kappa_int: f64) -> Result<Self, ModelError> {
        if !kappa_ext.is_finite() || kappa_ext <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "kappa_ext must be finite and positive, got {kappa_ext}"
            )));
        }
        if !kappa_int.is_finite() || kappa_int < 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "kappa_int must be finite and non-negative, got {kappa_int}"
            )));
        }
        Ok(Self {
            omega,
            kappa_ext,
            kappa_int,
        })
    }

    /// Total linewidth κ = κ^e + κ^i.
    pub fn kappa_total(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }

    /// Coupling ratio r = κ^e/κ ∈ (0, 1].
    pub fn coupling_ratio(&self) -> f64 {
        self.kappa_ext / self.kappa_total()
    }
}

/// One mechanical oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechParams {
    /// Angular frequency Ω_j (rad/s).
    pub omega: f64,
    /// Decay rate γ_j (rad/s).
    pub gamma: f64,
}

impl MechParams {
    pub fn new(omega: f64, gamma: f64) -> Result<Self, ModelError> {
        if !omega.is_finite() || omega <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "mechanical frequency must be finite and positive, got {omega}"
            )));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "mechanical decay rate must be finite and positive, got {gamma}"
            )));
        }
        Ok(Self { omega, gamma })
    }
}

/// Which cavity a pump addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CavityId {
    C1,
    C2,
}

impl CavityId {
    pub fn index(self) -> usize {
        match self {
            CavityId::C1 => 0,
            CavityId::C2 => 1,
        }
    }
}

/// Which mechanical oscillator a pump addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MechId {
    M1,
    M2,
}

impl MechId {
    pub fn index(self) -> usize {
        match self {
            MechId::M1 => 0,
            MechId::M2 => 1,
        }
    }
}

/// Red (beam-splitter) or blue (two-mode-squeezing) sideband pumping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sideband {
    Red,
    Blue,
}

impl Sideband {
    fn name(self) -> &'static str {
        match self {
            Sideband::Red => "red",
            Sideband::Blue => "blue",
        }
    }
}

/// One pump tone: the linearized multiphoton coupling it creates.
///
/// Red-sideband drives produce the couplings written `G_ij`, blue-sideband
/// drives the couplings written `J_ij`; `i` is the cavity, `j` the
/// oscillator. Both drives addressing the same oscillator must share the
/// same detuning `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpDrive {
    pub cavity: CavityId,
    pub mech: MechId,
    pub sideband: Sideband,
    /// |G_ij| or |J_ij| (rad/s).
    pub coupling_mag: f64,
    /// Arg G_ij or Arg J_ij (rad).
    pub phase: f64,
    /// δ_j (rad/s), shared per mechanical mode.
    pub delta: f64,
}

impl PumpDrive {
    /// Complex coupling G_ij (red) or J_ij (blue).
    pub fn coupling(&self) -> C64 {
        C64::from_polar(self.coupling_mag, self.phase)
    }

    /// Cooperativity C_ij = 4|G|²/(γ_j κ_i) for this drive in the given
    /// device.
    pub fn cooperativity(&self, cavities: &[CavityParams; 2], mechs: &[MechParams; 2]) -> f64 {
        let kappa = cavities[self.cavity.index()].kappa_total();
        let gamma = mechs[self.mech.index()].gamma;
        4.0 * self.coupling_mag * self.coupling_mag / (gamma * kappa)
    }

    /// Coupling magnitude that realizes cooperativity `c` for this
    /// (cavity, oscillator) pair.
    pub fn coupling_from_cooperativity(
        c: f64,
        cavity: &CavityParams,
        mech: &MechParams,
    ) -> f64 {
        (c * mech.gamma * cavity.kappa_total() / 4.0).sqrt()
    }
}

/// Ratios of single-photon couplings, needed only by the sideband-leakage
/// (beyond-RWA) model: `g_{0,11}/g_{0,12}` and `g_{0,21}/g_{0,22}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G0Ratios {
    pub cavity1: f64,
    pub cavity2: f64,
}

impl Default for G0Ratios {
    fn default() -> Self {
        Self {
            cavity1: 1.0,
            cavity2: 1.0,
        }
    }
}

/// The full driven device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub cavities: [CavityParams; 2],
    pub mechs: [MechParams; 2],
    drives: Vec<PumpDrive>,
    pub g0_ratios: Option<G0Ratios>,
}

impl DeviceModel {
    /// Validates the drive set: one drive per (cavity, oscillator, sideband)
    /// triple, consistent per-oscillator detunings.
    pub fn new(
        cavities: [CavityParams; 2],
        mechs: [MechParams; 2],
        drives: Vec<PumpDrive>,
    ) -> Result<Self, ModelError> {
        for (n, d) in drives.iter().enumerate() {
            for e in &drives[n + 1..] {
                if d.cavity == e.cavity && d.mech == e.mech && d.sideband == e.sideband {
                    return Err(ModelError::DuplicateDrive {
                        cavity: d.cavity.index() as u8 + 1,
                        mech: d.mech.index() as u8 + 1,
                        sideband: d.sideband.name(),
                    });
                }
                if d.mech == e.mech && d.delta != e.delta {
                    return Err(ModelError::MismatchedDetuning {
                        mech: d.mech.index() as u8 + 1,
                        a: d.delta,
                        b: e.delta,
                    });
                }
            }
        }
        Ok(Self {
            cavities,
            mechs,
            drives,
            g0_ratios: None,
        })
    }

    pub fn with_g0_ratios(mut self, ratios: G0Ratios) -> Self {
        self.g0_ratios = Some(ratios);
        self
    }

    pub fn drives(&self) -> &[PumpDrive] {
        &self.drives
    }

    /// Complex coupling of the drive addressing (cavity, mech, sideband),
    /// zero when absent from the scheme.
    pub fn coupling(&self, cavity: CavityId, mech: MechId, sideband: Sideband) -> C64 {
        self.drives
            .iter()
            .find(|d| d.cavity == cavity && d.mech == mech && d.sideband == sideband)
            .map(|d| d.coupling())
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    /// Pump detuning δ_j of oscillator `mech`; zero when undriven.
    pub fn mech_detuning(&self, mech: MechId) -> f64 {
        self.drives
            .iter()
            .find(|d| d.mech == mech)
            .map(|d| d.delta)
            .unwrap_or(0.0)
    }

    /// Replace the phase of one drive; `None` when the drive is absent.
    pub fn set_drive_phase(
        &mut self,
        cavity: CavityId,
        mech: MechId,
        sideband: Sideband,
        phase: f64,
    ) -> Option<()> {
        self.drives
            .iter_mut()
            .find(|d| d.cavity == cavity && d.mech == mech && d.sideband == sideband)
            .map(|d| d.phase = phase)
    }

    /// True when the four amplifier drives (G11, G12, J21, J22) are all
    /// present with nonzero magnitude.
    pub fn has_amplifier_drives(&self) -> bool {
        use CavityId::*;
        use MechId::*;
        use Sideband::*;
        [(C1, M1, Red), (C1, M2, Red), (C2, M1, Blue), (C2, M2, Blue)]
            .into_iter()
            .all(|(c, m, s)| self.coupling(c, m, s).norm() > 0.0)
    }

    /// The one physically relevant pump phase
    /// Φ = Arg G11 + Arg J21 − Arg G12 − Arg J22, defined when the
    /// amplifier drive set is present.
    pub fn global_phase(&self) -> Option<f64> {
        if !self.has_amplifier_drives() {
            return None;
        }
        use CavityId::*;
        use MechId::*;
        use Sideband::*;
        let g11 = self.coupling(C1, M1, Red);
        let g12 = self.coupling(C1, M2, Red);
        let j21 = self.coupling(C2, M1, Blue);
        let j22 = self.coupling(C2, M2, Blue);
        Some(wrap_angle(g11.arg() + j21.arg() - g12.arg() - j22.arg()))
    }

    /// Rotate Arg G11 so that the global phase becomes `phi`, leaving all
    /// other drive phases untouched.
    pub fn set_global_phase(&mut self, phi: f64) -> Result<(), ModelError> {
        let current = self.global_phase().ok_or(ModelError::InvalidParameter(
            "global phase requires the full amplifier drive set".into(),
        ))?;
        use CavityId::*;
        use MechId::*;
        use Sideband::*;
        let g11 = self
            .drives
            .iter_mut()
            .find(|d| d.cavity == C1 && d.mech == M1 && d.sideband == Red)
            .expect("amplifier drive set checked above");
        g11.phase = wrap_angle(g11.phase + phi - current);
        Ok(())
    }

    /// Difference of the pumped mechanical frame frequencies,
    /// ΔΩ = (Ω1+δ1) − (Ω2+δ2).
    pub fn manifold_splitting(&self) -> f64 {
        (self.mechs[0].omega + self.mech_detuning(MechId::M1))
            - (self.mechs[1].omega + self.mech_detuning(MechId::M2))
    }
}

/// The four drives of the directional-amplifier scheme (reds on cavity 1,
/// blues on cavity 2) from per-sideband cooperativities
/// `(C11, C12, C21, C22)` and the two pump detunings. All phases start at
/// zero; rotate with [`DeviceModel::set_global_phase`].
pub fn amplifier_drive_set(
    cavities: &[CavityParams; 2],
    mechs: &[MechParams; 2],
    coops: [f64; 4],
    delta1: f64,
    delta2: f64,
) -> Vec<PumpDrive> {
    let spec = [
        (CavityId::C1, MechId::M1, Sideband::Red, coops[0], delta1),
        (CavityId::C1, MechId::M2, Sideband::Red, coops[1], delta2),
        (CavityId::C2, MechId::M1, Sideband::Blue, coops[2], delta1),
        (CavityId::C2, MechId::M2, Sideband::Blue, coops[3], delta2),
    ];
    spec.into_iter()
        .map(|(cavity, mech, sideband, c, delta)| PumpDrive {
            cavity,
            mech,
            sideband,
            coupling_mag: PumpDrive::coupling_from_cooperativity(
                c,
                &cavities[cavity.index()],
                &mechs[mech.index()],
            ),
            phase: 0.0,
            delta,
        })
        .collect()
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Mechanical susceptibility χ_m(ω) = (γ/2 − i(ω+δ))⁻¹.
pub fn mech_susceptibility(mech: &MechParams, delta: f64, omega: f64) -> C64 {
    C64::new(1.0, 0.0) / C64::new(mech.gamma / 2.0, -(omega + delta))
}

/// Conjugate-row susceptibility χ_m*(ω) = (χ_m(−ω))* = (γ/2 − i(ω−δ))⁻¹.
pub fn mech_susceptibility_conj(mech: &MechParams, delta: f64, omega: f64) -> C64 {
    mech_susceptibility(mech, delta, -omega).conj()
}

/// Cavity susceptibility χ_c(ω) = (κ/2 − iω)⁻¹.
pub fn cavity_susceptibility(cav: &CavityParams, omega: f64) -> C64 {
    C64::new(1.0, 0.0) / C64::new(cav.kappa_total() / 2.0, -omega)
}

/// Conjugate-row cavity susceptibility (χ_c(−ω))*; equals χ_c(ω) for the
/// zero-detuned cavities used here, kept explicit to preserve the basis
/// convention.
pub fn cavity_susceptibility_conj(cav: &CavityParams, omega: f64) -> C64 {
    cavity_susceptibility(cav, -omega).conj()
}

/// Diagonal mechanical susceptibility matrix
/// Ξ_m(ω) = diag(χ_m1, χ_m1*, χ_m2, χ_m2*).
pub fn mech_susceptibility_matrix(model: &DeviceModel, omega: f64) -> Mat4 {
    let d1 = model.mech_detuning(MechId::M1);
    let d2 = model.mech_detuning(MechId::M2);
    Mat4::diag([
        mech_susceptibility(&model.mechs[0], d1, omega),
        mech_susceptibility_conj(&model.mechs[0], d1, omega),
        mech_susceptibility(&model.mechs[1], d2, omega),
        mech_susceptibility_conj(&model.mechs[1], d2, omega),
    ])
}

/// Diagonal cavity susceptibility matrix
/// Ξ_c(ω) = diag(χ_c1, χ_c1*, χ_c2, χ_c2*).
pub fn cavity_susceptibility_matrix(model: &DeviceModel, omega: f64) -> Mat4 {
    Mat4::diag([
        cavity_susceptibility(&model.cavities[0], omega),
        cavity_susceptibility_conj(&model.cavities[0], omega),
        cavity_susceptibility(&model.cavities[1], omega),
        cavity_susceptibility_conj(&model.cavities[1], omega),
    ])
}

/// Inverse of `cavity_susceptibility_matrix`, assembled directly.
fn cavity_susceptibility_inv(model: &DeviceModel, omega: f64) -> Mat4 {
    let k1 = model.cavities[0].kappa_total();
    let k2 = model.cavities[1].kappa_total();
    Mat4::diag([
        C64::new(k1 / 2.0, -omega),
        C64::new(k1 / 2.0, -omega),
        C64::new(k2 / 2.0, -omega),
        C64::new(k2 / 2.0, -omega),
    ])
}

/// diag(√κ1^e, √κ1^e, √κ2^e, √κ2^e).
fn sqrt_kappa_ext(model: &DeviceModel) -> Mat4 {
    let s1 = model.cavities[0].kappa_ext.sqrt();
    let s2 = model.cavities[1].kappa_ext.sqrt();
    Mat4::diag([
        C64::new(s1, 0.0),
        C64::new(s1, 0.0),
        C64::new(s2, 0.0),
        C64::new(s2, 0.0),
    ])
}

/// The photon→phonon and phonon→photon coupling matrices (𝒢, ℋ).
///
/// Rows of 𝒢 follow the photonic basis, columns the phononic basis; in ℋ
/// the roles are exchanged. Drives absent from the scheme contribute
/// zeros.
pub fn build_coupling_mats(model: &DeviceModel) -> (Mat4, Mat4) {
    use CavityId::*;
    use MechId::*;
    use Sideband::*;
    let g11 = model.coupling(C1, M1, Red);
    let g12 = model.coupling(C1, M2, Red);
    let g21 = model.coupling(C2, M1, Red);
    let g22 = model.coupling(C2, M2, Red);
    let j11 = model.coupling(C1, M1, Blue);
    let j12 = model.coupling(C1, M2, Blue);
    let j21 = model.coupling(C2, M1, Blue);
    let j22 = model.coupling(C2, M2, Blue);
    let i = C64::new(0.0, 1.0);
    let g_mat = Mat4::from_rows([
        [i * g11, i * j11, i * g12, i * j12],
        [-i * j11.conj(), -i * g11.conj(), -i * j12.conj(), -i * g12.conj()],
        [i * g21, i * j21, i * g22, i * j22],
        [-i * j21.conj(), -i * g21.conj(), -i * j22.conj(), -i * g22.conj()],
    ]);
    let h_mat = Mat4::from_rows([
        [i * g11.conj(), i * j11, i * g21.conj(), i * j21],
        [-i * j11.conj(), -i * g11, -i * j21.conj(), -i * g21],
        [i * g12.conj(), i * j12, i * g22.conj(), i * j22],
        [-i * j12.conj(), -i * g12, -i * j22.conj(), -i * g22],
    ]);
    (g_mat, h_mat)
}

/// The phonon-mediated photon-photon coupling matrix
/// T(ω) = −𝒢·Ξ_m(ω)·ℋ.
pub fn coupling_matrix_t(model: &DeviceModel, omega: f64) -> Mat4 {
    let (g_mat, h_mat) = build_coupling_mats(model);
    t_from_parts(&g_mat, &h_mat, &mech_susceptibility_matrix(model, omega))
}

pub(crate) fn t_from_parts(g_mat: &Mat4, h_mat: &Mat4, xi_m: &Mat4) -> Mat4 {
    g_mat.mul(&xi_m.mul(h_mat)).scale(C64::new(-1.0, 0.0))
}

/// Thermomechanical noise input matrix U(ω) = 𝒢·Ξ_m(ω)·√Γ.
///
/// Constructed for completeness; no other operation consumes it.
pub fn noise_input_matrix(model: &DeviceModel, omega: f64) -> Mat4 {
    let (g_mat, _) = build_coupling_mats(model);
    let s1 = model.mechs[0].gamma.sqrt();
    let s2 = model.mechs[1].gamma.sqrt();
    let sqrt_gamma = Mat4::diag([
        C64::new(s1, 0.0),
        C64::new(s1, 0.0),
        C64::new(s2, 0.0),
        C64::new(s2, 0.0),
    ]);
    g_mat.mul(&mech_susceptibility_matrix(model, omega).mul(&sqrt_gamma))
}

/// System susceptibility χ(ω) = (Ξ_c⁻¹ + T)⁻¹ with its reciprocal
/// condition number for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Susceptibility {
    pub chi: Mat4,
    /// 1-norm reciprocal condition number of χ⁻¹ at this detuning.
    pub rcond: f64,
}

/// Invert the coupled-cavity response at probe detuning `omega`.
pub fn system_susceptibility(model: &DeviceModel, omega: f64) -> Result<Susceptibility, ModelError> {
    let chi_inv = cavity_susceptibility_inv(model, omega).add(&coupling_matrix_t(model, omega));
    system_susceptibility_from_inv(&chi_inv, omega)
}

pub(crate) fn system_susceptibility_from_inv(
    chi_inv: &Mat4,
    omega: f64,
) -> Result<Susceptibility, ModelError> {
    let rcond = chi_inv.rcond();
    if rcond < RCOND_FLOOR {
        return Err(ModelError::Singular { omega, rcond });
    }
    let chi = chi_inv
        .inverse()
        .ok_or(ModelError::Singular { omega, rcond: 0.0 })?;
    Ok(Susceptibility { chi, rcond })
}

/// Optical scattering matrix S_opt(ω) = 𝕀₄ − √K^e · χ(ω) · √K^e.
///
/// Shares T's zero pattern: the (a1, a2†) block never mixes with the
/// (a1†, a2) block under the amplifier drive set.
pub fn scattering_matrix(model: &DeviceModel, omega: f64) -> Result<Mat4, ModelError> {
    let chi = system_susceptibility(model, omega)?.chi;
    let sk = sqrt_kappa_ext(model);
    Ok(Mat4::identity().sub(&sk.mul(&chi.mul(&sk))))
}

/// Scalar S-parameters at one probe detuning.
///
/// `s21` is the transfer from `a1,in` to `a2,out†` (row `a2†`, column
/// `a1` of S_opt): the forward conversion is phase-conjugating, mirroring
/// the output spectrum about the second cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParamPoint {
    /// Probe detuning in the rotating frame (rad/s).
    pub omega: f64,
    pub s11: C64,
    pub s12: C64,
    pub s21: C64,
    pub s22: C64,
}

impl SParamPoint {
    fn from_matrix(omega: f64, s: &Mat4) -> Self {
        Self {
            omega,
            s11: s.at(A1, A1),
            s12: s.at(A1, A2D),
            s21: s.at(A2D, A1),
            s22: s.at(A2D, A2D),
        }
    }
}

/// Evaluate the scalar S-parameters at probe detuning `omega`.
pub fn s_params(model: &DeviceModel, omega: f64) -> Result<SParamPoint, ModelError> {
    Ok(SParamPoint::from_matrix(omega, &scattering_matrix(model, omega)?))
}

/// Independent oracle: assemble the full 8×8 system in
/// (a1, a1†, a2, a2†, b1, b1†, b2, b2†) without eliminating the phonons,
/// solve it for each photonic input channel, and apply the input-output
/// relation. Must agree with [`s_params`] to numerical precision.
pub fn direct_solve_oracle(model: &DeviceModel, omega: f64) -> Result<SParamPoint, ModelError> {
    let m = eight_by_eight(model, omega);
    let rcond = m.rcond();
    if rcond < RCOND_FLOOR {
        return Err(ModelError::Singular { omega, rcond });
    }
    let sk = [
        model.cavities[0].kappa_ext.sqrt(),
        model.cavities[0].kappa_ext.sqrt(),
        model.cavities[1].kappa_ext.sqrt(),
        model.cavities[1].kappa_ext.sqrt(),
    ];
    let mut s = Mat4::identity();
    for input in 0..4 {
        let mut rhs = [C64::new(0.0, 0.0); 8];
        rhs[input] = C64::new(sk[input], 0.0);
        let x = m
            .solve(&rhs)
            .ok_or(ModelError::Singular { omega, rcond: 0.0 })?;
        for row in 0..4 {
            let v = s.at(row, input) - C64::new(sk[row], 0.0) * x[row];
            s.set(row, input, v);
        }
    }
    Ok(SParamPoint::from_matrix(omega, &s))
}

/// The static part A of the un-eliminated system M(ω) = A − iω𝕀₈, so that
/// poles of the response are ω_p = −i·eig(A).
pub fn system_matrix_static(model: &DeviceModel) -> Mat8 {
    let mut a = Mat8::zero();
    let k1 = model.cavities[0].kappa_total();
    let k2 = model.cavities[1].kappa_total();
    let d1 = model.mech_detuning(MechId::M1);
    let d2 = model.mech_detuning(MechId::M2);
    let g1 = model.mechs[0].gamma;
    let g2 = model.mechs[1].gamma;
    let diag = [
        C64::new(k1 / 2.0, 0.0),
        C64::new(k1 / 2.0, 0.0),
        C64::new(k2 / 2.0, 0.0),
        C64::new(k2 / 2.0, 0.0),
        C64::new(g1 / 2.0, -d1),
        C64::new(g1 / 2.0, d1),
        C64::new(g2 / 2.0, -d2),
        C64::new(g2 / 2.0, d2),
    ];
    for (i, v) in diag.into_iter().enumerate() {
        a.set(i, i, v);
    }
    let (g_mat, h_mat) = build_coupling_mats(model);
    for i in 0..4 {
        for j in 0..4 {
            a.set(i, 4 + j, -g_mat.at(i, j));
            a.set(4 + i, j, -h_mat.at(i, j));
        }
    }
    a
}

fn eight_by_eight(model: &DeviceModel, omega: f64) -> Mat8 {
    let mut m = system_matrix_static(model);
    for i in 0..8 {
        m.set(i, i, m.at(i, i) - C64::new(0.0, omega));
    }
    m
}

/// S-parameters at many detunings, in ascending probe order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub points: Vec<SParamPoint>,
}

impl SweepResult {
    /// Evaluate the model over `omegas` (rad/s).
    pub fn evaluate(model: &DeviceModel, omegas: &[f64]) -> Result<Self, ModelError> {
        let points = omegas
            .iter()
            .map(|&w| s_params(model, w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform grid of `n` probe detunings covering ±`half_span` (rad/s).
pub fn detuning_grid(half_span: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| -half_span + 2.0 * half_span * i as f64 / (n as f64 - 1.0))
        .collect()
}

/// Power dB of a complex amplitude, 20·log10|z|.
pub fn amplitude_db(z: C64) -> f64 {
    20.0 * z.norm().log10()
}

/// Mapping between rotating-frame detunings and lab frequencies.
///
/// A probe entering cavity 1 at lab frequency ω1/2π + f leaves cavity 2 at
/// ω2/2π − f: the forward output range is mirrored about the second
/// cavity.
#[derive(Debug, Clone, Copy)]
pub struct FrameMap {
    /// Cavity 1 absolute frequency (Hz).
    pub f1_hz: f64,
    /// Cavity 2 absolute frequency (Hz).
    pub f2_hz: f64,
}

impl FrameMap {
    pub fn from_model(model: &DeviceModel) -> Self {
        Self {
            f1_hz: model.cavities[0].omega / (2.0 * std::f64::consts::PI),
            f2_hz: model.cavities[1].omega / (2.0 * std::f64::consts::PI),
        }
    }

    /// Lab input frequency (Hz) → rotating-frame detuning (rad/s).
    pub fn input_lab_to_rot(&self, f_hz: f64) -> f64 {
        2.0 * std::f64::consts::PI * (f_hz - self.f1_hz)
    }

    /// Rotating-frame detuning (rad/s) → lab input frequency (Hz).
    pub fn rot_to_input_lab(&self, omega: f64) -> f64 {
        self.f1_hz + omega / (2.0 * std::f64::consts::PI)
    }

    /// Rotating-frame detuning (rad/s) → forward output lab frequency (Hz).
    pub fn rot_to_forward_output_lab(&self, omega: f64) -> f64 {
        self.f2_hz - omega / (2.0 * std::f64::consts::PI)
    }
}

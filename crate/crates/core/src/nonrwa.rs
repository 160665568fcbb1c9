//! First-order sideband-leakage corrections.
//!
//! When the mechanical frequency difference ΔΩ = (Ω1+δ1) − (Ω2+δ2) is not
//! far above the cavity linewidths, each pump also drives the oscillator
//! it was not intended for. To first order in κ/ΔΩ the effect is captured
//! by four off-manifold coupling matrices (𝒢±, ℋ±) built from the leaked
//! couplings G̃_ij, J̃_ij, and the coupling matrix acquires two
//! photon-assisted terms:
//!
//! `T_eff(ω) = T(ω) + S0·Ξ_c(ω−ΔΩ)·Y0 + X0·Ξ_c(ω+ΔΩ)·R0`
//!
//! with S0 = −𝒢·Ξ_m·ℋ⁻, Y0 = −𝒢⁺·Ξ_m·ℋ, X0 = −𝒢·Ξ_m·ℋ⁺,
//! R0 = −𝒢⁻·Ξ_m·ℋ. Second-order products of off-resonant cavity
//! susceptibilities are excluded by construction.
//!
//! The leaked coupling magnitudes follow from the single-photon coupling
//! ratios: each pump field amplitude is shared, so e.g.
//! G̃11 = g0_11·α_12− = G12·(g0_11/g0_12).

use crate::linalg::{Mat4, C64};
use crate::model::{
    build_coupling_mats, cavity_susceptibility, cavity_susceptibility_conj,
    coupling_matrix_t, mech_susceptibility_matrix, s_params,
    system_susceptibility_from_inv, CavityId, DeviceModel, MechId, ModelError, SParamPoint,
    Sideband,
};

/// The leaked (cross-oscillator) couplings of one device, with the
/// manifold splitting they oscillate at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandLeakage {
    /// G̃11 = G12·(g0_11/g0_12): red pump for MO2 on cavity 1 acting on MO1.
    pub gt11: C64,
    /// G̃12 = G11·(g0_12/g0_11).
    pub gt12: C64,
    /// G̃21 = G22·(g0_21/g0_22).
    pub gt21: C64,
    /// G̃22 = G21·(g0_22/g0_21).
    pub gt22: C64,
    /// J̃11 = J12·(g0_11/g0_12).
    pub jt11: C64,
    /// J̃12 = J11·(g0_12/g0_11).
    pub jt12: C64,
    /// J̃21 = J22·(g0_21/g0_22).
    pub jt21: C64,
    /// J̃22 = J21·(g0_22/g0_21).
    pub jt22: C64,
    /// ΔΩ = (Ω1+δ1) − (Ω2+δ2) (rad/s).
    pub delta_omega: f64,
}

impl SidebandLeakage {
    pub fn from_model(model: &DeviceModel) -> Result<Self, ModelError> {
        let ratios = model.g0_ratios.ok_or(ModelError::MissingG0Ratios)?;
        use CavityId::*;
        use MechId::*;
        use Sideband::*;
        let q1 = ratios.cavity1;
        let q2 = ratios.cavity2;
        Ok(Self {
            gt11: model.coupling(C1, M2, Red) * q1,
            gt12: model.coupling(C1, M1, Red) / q1,
            gt21: model.coupling(C2, M2, Red) * q2,
            gt22: model.coupling(C2, M1, Red) / q2,
            jt11: model.coupling(C1, M2, Blue) * q1,
            jt12: model.coupling(C1, M1, Blue) / q1,
            jt21: model.coupling(C2, M2, Blue) * q2,
            jt22: model.coupling(C2, M1, Blue) / q2,
            delta_omega: model.manifold_splitting(),
        })
    }
}

/// The four off-manifold coupling matrices (𝒢⁻, 𝒢⁺, ℋ⁻, ℋ⁺).
pub fn leakage_mats(model: &DeviceModel) -> Result<(Mat4, Mat4, Mat4, Mat4), ModelError> {
    let l = SidebandLeakage::from_model(model)?;
    let z = C64::new(0.0, 0.0);
    let mi = C64::new(0.0, -1.0);
    let g_minus = Mat4::from_rows([
        [z, mi * l.jt11, mi * l.gt12, z],
        [z, -mi * l.gt11.conj(), -mi * l.jt12.conj(), z],
        [z, mi * l.jt21, mi * l.gt22, z],
        [z, -mi * l.gt21.conj(), -mi * l.jt22.conj(), z],
    ]);
    let g_plus = Mat4::from_rows([
        [mi * l.gt11, z, z, mi * l.jt12],
        [-mi * l.jt11.conj(), z, z, -mi * l.gt12.conj()],
        [mi * l.gt21, z, z, mi * l.jt22],
        [-mi * l.jt21.conj(), z, z, -mi * l.gt22.conj()],
    ]);
    let h_minus = Mat4::from_rows([
        [mi * l.gt11.conj(), mi * l.jt11, mi * l.gt21.conj(), mi * l.jt21],
        [z, z, z, z],
        [z, z, z, z],
        [-mi * l.jt12.conj(), -mi * l.gt12, -mi * l.jt22.conj(), -mi * l.gt22],
    ]);
    let h_plus = Mat4::from_rows([
        [z, z, z, z],
        [-mi * l.jt11.conj(), -mi * l.gt11, -mi * l.jt21.conj(), -mi * l.gt21],
        [mi * l.gt12.conj(), mi * l.jt12, mi * l.gt22.conj(), mi * l.jt22],
        [z, z, z, z],
    ]);
    Ok((g_minus, g_plus, h_minus, h_plus))
}

/// The four first-order correction products (S0, X0, R0, Y0) at `omega`.
pub fn correction_mats(
    model: &DeviceModel,
    omega: f64,
) -> Result<(Mat4, Mat4, Mat4, Mat4), ModelError> {
    let (g_mat, h_mat) = build_coupling_mats(model);
    let (g_minus, g_plus, h_minus, h_plus) = leakage_mats(model)?;
    let xi_m = mech_susceptibility_matrix(model, omega);
    let neg = C64::new(-1.0, 0.0);
    let s0 = g_mat.mul(&xi_m.mul(&h_minus)).scale(neg);
    let x0 = g_mat.mul(&xi_m.mul(&h_plus)).scale(neg);
    let r0 = g_minus.mul(&xi_m.mul(&h_mat)).scale(neg);
    let y0 = g_plus.mul(&xi_m.mul(&h_mat)).scale(neg);
    Ok((s0, x0, r0, y0))
}

/// Off-resonant cavity susceptibility matrix Ξ_c(ν) at a shifted argument.
fn cavity_matrix_at(model: &DeviceModel, nu: f64) -> Mat4 {
    Mat4::diag([
        cavity_susceptibility(&model.cavities[0], nu),
        cavity_susceptibility_conj(&model.cavities[0], nu),
        cavity_susceptibility(&model.cavities[1], nu),
        cavity_susceptibility_conj(&model.cavities[1], nu),
    ])
}

/// First-order-corrected coupling matrix
/// T_eff(ω) = T(ω) + S0·Ξ_c(ω−ΔΩ)·Y0 + X0·Ξ_c(ω+ΔΩ)·R0.
pub fn corrected_t(model: &DeviceModel, omega: f64) -> Result<Mat4, ModelError> {
    let t = coupling_matrix_t(model, omega);
    Ok(t.add(&correction_term(model, omega)?))
}

/// The correction alone, T_eff − T.
pub fn correction_term(model: &DeviceModel, omega: f64) -> Result<Mat4, ModelError> {
    let d_om = model.manifold_splitting();
    if d_om == 0.0 {
        return Err(ModelError::DegenerateManifolds);
    }
    let (s0, x0, r0, y0) = correction_mats(model, omega)?;
    let down = s0.mul(&cavity_matrix_at(model, omega - d_om).mul(&y0));
    let up = x0.mul(&cavity_matrix_at(model, omega + d_om).mul(&r0));
    Ok(down.add(&up))
}

/// S-parameters of the corrected model: T_eff replaces T in the system
/// susceptibility; the scattering extraction is unchanged, and so is the
/// zero pattern (the conversion stays phase-conjugating).
pub fn corrected_s_params(model: &DeviceModel, omega: f64) -> Result<SParamPoint, ModelError> {
    let s = corrected_scattering_matrix(model, omega)?;
    Ok(SParamPoint {
        omega,
        s11: s.at(0, 0),
        s12: s.at(0, 3),
        s21: s.at(3, 0),
        s22: s.at(3, 3),
    })
}

/// Full 4×4 corrected scattering matrix.
pub fn corrected_scattering_matrix(model: &DeviceModel, omega: f64) -> Result<Mat4, ModelError> {
    let t_eff = corrected_t(model, omega)?;
    let k1 = model.cavities[0].kappa_total();
    let k2 = model.cavities[1].kappa_total();
    let chi_inv = Mat4::diag([
        C64::new(k1 / 2.0, -omega),
        C64::new(k1 / 2.0, -omega),
        C64::new(k2 / 2.0, -omega),
        C64::new(k2 / 2.0, -omega),
    ])
    .add(&t_eff);
    let chi = system_susceptibility_from_inv(&chi_inv, omega)?.chi;
    let s1 = model.cavities[0].kappa_ext.sqrt();
    let s2 = model.cavities[1].kappa_ext.sqrt();
    let sk = Mat4::diag([
        C64::new(s1, 0.0),
        C64::new(s1, 0.0),
        C64::new(s2, 0.0),
        C64::new(s2, 0.0),
    ]);
    Ok(Mat4::identity().sub(&sk.mul(&chi.mul(&sk))))
}

/// Scalar expansion of the (a1, a1) correction, coded from the explicit
/// per-path backaction products; test oracle for the matrix route.
pub fn delta_t11_scalar(model: &DeviceModel, omega: f64) -> Result<C64, ModelError> {
    let l = SidebandLeakage::from_model(model)?;
    use CavityId::*;
    use MechId::*;
    use Sideband::*;
    let g11 = model.coupling(C1, M1, Red);
    let g12 = model.coupling(C1, M2, Red);
    let d1 = model.mech_detuning(MechId::M1);
    let d2 = model.mech_detuning(MechId::M2);
    let m1 = crate::model::mech_susceptibility(&model.mechs[0], d1, omega);
    let m2 = crate::model::mech_susceptibility(&model.mechs[1], d2, omega);
    let c1m = cavity_susceptibility(&model.cavities[0], omega - l.delta_omega);
    let c2m = cavity_susceptibility_conj(&model.cavities[1], omega - l.delta_omega);
    let c1p = cavity_susceptibility(&model.cavities[0], omega + l.delta_omega);
    let c2p = cavity_susceptibility_conj(&model.cavities[1], omega + l.delta_omega);
    Ok(m1 * m1
        * (c1m * g11.norm_sqr() * l.gt11.norm_sqr() - c2m * g11.norm_sqr() * l.jt21.norm_sqr())
        + m2 * m2
            * (c1p * g12.norm_sqr() * l.gt12.norm_sqr()
                - c2p * g12.norm_sqr() * l.jt22.norm_sqr()))
}

/// Scalar expansion of the (a1, a2†) correction; only the global phase Φ
/// enters through the G11 J21 and G12 J22 products.
pub fn delta_t12_scalar(model: &DeviceModel, omega: f64) -> Result<C64, ModelError> {
    let l = SidebandLeakage::from_model(model)?;
    use CavityId::*;
    use MechId::*;
    use Sideband::*;
    let g11 = model.coupling(C1, M1, Red);
    let g12 = model.coupling(C1, M2, Red);
    let j21 = model.coupling(C2, M1, Blue);
    let j22 = model.coupling(C2, M2, Blue);
    let d1 = model.mech_detuning(MechId::M1);
    let d2 = model.mech_detuning(MechId::M2);
    let m1 = crate::model::mech_susceptibility(&model.mechs[0], d1, omega);
    let m2 = crate::model::mech_susceptibility(&model.mechs[1], d2, omega);
    let c1m = cavity_susceptibility(&model.cavities[0], omega - l.delta_omega);
    let c2m = cavity_susceptibility_conj(&model.cavities[1], omega - l.delta_omega);
    let c1p = cavity_susceptibility(&model.cavities[0], omega + l.delta_omega);
    let c2p = cavity_susceptibility_conj(&model.cavities[1], omega + l.delta_omega);
    Ok(m1 * m1 * g11 * j21 * (c1m * l.gt11.norm_sqr() - c2m * l.jt21.norm_sqr())
        + m2 * m2 * g12 * j22 * (c1p * l.gt12.norm_sqr() - c2p * l.jt22.norm_sqr()))
}

/// Convenience: RWA and corrected S-parameters side by side.
pub fn compare_with_rwa(
    model: &DeviceModel,
    omega: f64,
) -> Result<(SParamPoint, SParamPoint), ModelError> {
    Ok((s_params(model, omega)?, corrected_s_params(model, omega)?))
}

/// Frobenius-norm ratio ‖T_eff − T‖ / ‖T‖ maximized over a detuning grid.
pub fn max_relative_correction(
    model: &DeviceModel,
    omegas: &[f64],
) -> Result<f64, ModelError> {
    let mut worst: f64 = 0.0;
    for &w in omegas {
        let t = coupling_matrix_t(model, w);
        let c = correction_term(model, w)?;
        worst = worst.max(c.norm() / t.norm());
    }
    Ok(worst)
}

/// The RWA zero pattern shared by T, the corrections, and S_opt.
pub fn rwa_zero_pattern() -> [[bool; 4]; 4] {
    // true = may be nonzero
    [
        [true, false, false, true],
        [false, true, true, false],
        [false, true, true, false],
        [true, false, false, true],
    ]
}

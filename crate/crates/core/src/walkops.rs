//! Single-step walk operators: coin factors, M_n in product and closed form,
//! the two-photon step U_n and the control operator C_n = AB⁻¹.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallmat::{c, inverse4, kron, principal_sqrt, re, CMat2, CMat4, CVec4, C64, I, ONE, ZERO};

/// Minimum |η − D0| accepted by the eigenvector and control-operator paths.
pub const EP_GUARD: f64 = 1e-6;

/// The five knobs of one walk step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub theta1: f64,
    pub theta2: f64,
    pub phi: f64,
    pub gamma: f64,
    pub k: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            theta1: -0.6,
            theta2: PI / 16.0,
            phi: 0.0,
            gamma: 0.2,
            k: 0.0,
        }
    }
}

impl WalkParams {
    /// Default θ₂, γ, k at the given loop coordinates.
    pub fn at(phi: f64, theta1: f64) -> Self {
        WalkParams {
            phi,
            theta1,
            ..Default::default()
        }
    }

    /// The common loop start point (φ, θ₁) = (0, −0.6).
    pub fn start() -> Self {
        Self::default()
    }

    pub fn with_loop_point(self, phi: f64, theta1: f64) -> Self {
        WalkParams { phi, theta1, ..self }
    }

    pub fn is_finite(&self) -> bool {
        [self.theta1, self.theta2, self.phi, self.gamma, self.k]
            .iter()
            .all(|x| x.is_finite())
    }
}

pub fn rotation(theta: f64) -> CMat2 {
    let (s, co) = theta.sin_cos();
    CMat2::from_real([[co, -s], [s, co]])
}

pub fn phase_shift(k: f64) -> CMat2 {
    CMat2::diag(C64::from_polar(1.0, k), C64::from_polar(1.0, -k))
}

pub fn gain_loss(gamma: f64) -> CMat2 {
    CMat2::diag(re(gamma.exp()), re((-gamma).exp()))
}

pub fn gain_loss_inverse(gamma: f64) -> CMat2 {
    gain_loss(-gamma)
}

pub fn symmetry_break(phi: f64) -> CMat2 {
    let (s, co) = phi.sin_cos();
    CMat2::new([[re(co), c(0.0, s)], [c(0.0, s), re(co)]])
}

/// d- and D-coefficients of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
#[allow(non_snake_case)]
pub struct DCoefficients {
    pub d0: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub D0: C64,
    pub DX: C64,
    pub DY: C64,
    pub DZ: C64,
}

impl DCoefficients {
    /// d0² − dx² + dy² + dz², identically 1.
    pub fn real_identity(&self) -> f64 {
        self.d0 * self.d0 - self.dx * self.dx + self.dy * self.dy + self.dz * self.dz
    }

    /// D0² + DZ² − DX² + DY², identically 1.
    pub fn complex_identity(&self) -> C64 {
        self.D0 * self.D0 + self.DZ * self.DZ - self.DX * self.DX + self.DY * self.DY
    }

    /// (η₋, η₊) = D0 ∓ √(D0² − 1), principal root.
    pub fn eta_pair(&self) -> (C64, C64) {
        let s = principal_sqrt(self.D0 * self.D0 - ONE);
        (self.D0 - s, self.D0 + s)
    }
}

pub fn d_coefficients(p: &WalkParams) -> DCoefficients {
    let (s1, c1) = p.theta1.sin_cos();
    let (s2, c2) = p.theta2.sin_cos();
    let (s2k, c2k) = (2.0 * p.k).sin_cos();
    let ch = (2.0 * p.gamma).cosh();
    let sh = (2.0 * p.gamma).sinh();
    let d0 = c2k * c1 * c2 - ch * s1 * s2;
    let dx = -sh * s2;
    let dy = -c2 * s1 * c2k - ch * c1 * s2;
    let dz = c2 * s2k;
    let (sp, cp) = p.phi.sin_cos();
    DCoefficients {
        d0,
        dx,
        dy,
        dz,
        D0: c(cp * d0, sp * dx),
        DX: c(cp * dx, sp * d0),
        DY: re(cp * dy + sp * dz),
        DZ: re(cp * dz - sp * dy),
    }
}

/// M_n = ψ(φ) R(θ₁/2) G S R(θ₂) G⁻¹ S R(θ₁/2).
pub fn walk_operator_product(p: &WalkParams) -> CMat2 {
    let half = rotation(p.theta1 / 2.0);
    let s = phase_shift(p.k);
    symmetry_break(p.phi) * half * gain_loss(p.gamma) * s * rotation(p.theta2) * gain_loss_inverse(p.gamma) * s * half
}

pub fn walk_operator_closed(p: &WalkParams) -> CMat2 {
    closed_from_coefficients(&d_coefficients(p))
}

pub(crate) fn closed_from_coefficients(d: &DCoefficients) -> CMat2 {
    CMat2::new([[d.D0 + I * d.DZ, d.DX + d.DY], [d.DX - d.DY, d.D0 - I * d.DZ]])
}

/// I ⊗ M_n.
pub fn product_step(p: &WalkParams) -> CMat4 {
    kron(&CMat2::identity(), &walk_operator_closed(p))
}

/// Two-photon one-step operator U_n whose eigenvectors are near-Bell.
///
/// The (3,1) and (4,2) entries carry −DZ and +DZ; with these signs det U = 1
/// and U is similar to I ⊗ M_n for every parameter set.
pub fn u_step(p: &WalkParams) -> CMat4 {
    u_from_coefficients(&d_coefficients(p))
}

pub(crate) fn u_from_coefficients(d: &DCoefficients) -> CMat4 {
    let (d0, dx, dy, dz) = (d.D0, d.DX, d.DY, d.DZ);
    CMat4::new([
        [d0, ZERO, dz, I * (dx + dy)],
        [ZERO, d0, I * (dx - dy), -dz],
        [-dz, -I * (dx + dy), d0, ZERO],
        [I * (dy - dx), dz, ZERO, d0],
    ])
}

/// Right eigenvectors of U_n in the order (α₁, α₂, α₃, α₄) with
/// α₁, α₃ ↔ η₋ and α₂, α₄ ↔ η₊.
pub(crate) fn right_eigenvectors(d: &DCoefficients, em: C64, ep: C64) -> [CVec4; 4] {
    let a12 = |e: C64| {
        let n = ONE / (re(2f64.sqrt()) * (e - d.D0));
        CVec4::new([I * (d.DX + d.DY), -d.DZ, ZERO, e - d.D0]).scale(n)
    };
    let a34 = |e: C64| {
        let n = ONE / (re(2f64.sqrt()) * (e - d.D0));
        CVec4::new([d.DZ, I * (d.DX - d.DY), e - d.D0, ZERO]).scale(n)
    };
    [a12(em), a12(ep), a34(em), a34(ep)]
}

/// Left eigenvectors as rows, paired with states by `CVec4::pair`
/// (no conjugation): βⱼ U = η βⱼ and βᵢ·αⱼ = δᵢⱼ.
pub(crate) fn left_eigenvectors(d: &DCoefficients, em: C64, ep: C64) -> [CVec4; 4] {
    let b12 = |e: C64| {
        let n = ONE / (re(2f64.sqrt()) * (e - d.D0));
        CVec4::new([I * (d.DY - d.DX), d.DZ, ZERO, e - d.D0]).scale(n)
    };
    let b34 = |e: C64| {
        let n = ONE / (re(2f64.sqrt()) * (e - d.D0));
        CVec4::new([-d.DZ, -I * (d.DX + d.DY), e - d.D0, ZERO]).scale(n)
    };
    [b12(em), b12(ep), b34(em), b34(ep)]
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub(crate) fn check_ep_distance(d: &DCoefficients, em: C64, ep: C64, guard: f64) -> Result<()> {
    let gap = (em - d.D0).norm().min((ep - d.D0).norm());
    // NaN gaps are rejected too
    if !(gap > guard) {
        return Err(Error::TooCloseToEp(gap));
    }
    Ok(())
}

/// C_n together with its inverse and the gauge factor ρ.
#[derive(Clone, Copy, Debug)]
pub struct ControlOperator {
    pub c: CMat4,
    pub c_inv: CMat4,
    pub rho: C64,
}

/// C_n = A B⁻¹ with det C_n = 1 (principal ρ).
pub fn control_operator(p: &WalkParams) -> Result<ControlOperator> {
    control_operator_with_branch(p, None)
}

/// As [`control_operator`]; when `rho_hint` is given, the sign of ρ is
/// chosen closest to it (continuation along a path).
pub fn control_operator_with_branch(p: &WalkParams, rho_hint: Option<C64>) -> Result<ControlOperator> {
    let d = d_coefficients(p);
    let (em, ep) = d.eta_pair();
    check_ep_distance(&d, em, ep, EP_GUARD)?;

    let alpha = right_eigenvectors(&d, em, ep);
    let a = CMat4::from_columns([alpha[0], alpha[2], alpha[1], alpha[3]]);

    let m = |e: C64| {
        let n = ONE / (re(2f64.sqrt()) * (e - d.D0));
        [(d.DX + d.DY) * n, (e - d.D0 - I * d.DZ) * n]
    };
    let (mm, mp) = (m(em), m(ep));
    let (up, down) = ([ONE, ZERO], [ZERO, ONE]);
    let b0 = [
        CVec4::kron(up, mm),
        CVec4::kron(down, mm),
        CVec4::kron(up, mp),
        CVec4::kron(down, mp),
    ];
    let det_b0 = CMat4::from_columns(b0).det();
    if det_b0.norm() < 1e-300 {
        return Err(Error::SingularMatrix {
            det: det_b0.norm(),
            threshold: 1e-300,
        });
    }
    let mut rho = principal_sqrt(a.det() / det_b0);
    if let Some(h) = rho_hint {
        if (rho - h).norm() > (rho + h).norm() {
            rho = -rho;
        }
    }
    let b = CMat4::from_columns([b0[0], b0[1].scale(rho), b0[2], b0[3].scale(rho)]);
    let c_mat = a * inverse4(&b)?;
    let c_inv = inverse4(&c_mat)?;
    Ok(ControlOperator { c: c_mat, c_inv, rho })
}

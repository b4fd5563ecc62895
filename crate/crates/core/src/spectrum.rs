//! Eigenstructure of U_n, quasienergy surfaces over (φ, θ₁), EP location.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallmat::{c, CVec4, C64, I};
use crate::walkops::{check_ep_distance, d_coefficients, left_eigenvectors, right_eigenvectors, WalkParams};

/// Right and left eigenvectors of U_n.
///
/// `alpha[j]` and `beta[j]` belong to `eta(j)`: indices 0 and 2 to η₋,
/// 1 and 3 to η₊. `beta` are rows, so `beta[i].pair(&alpha[j]) = δᵢⱼ`.
#[derive(Clone, Copy, Debug)]
pub struct EigenSystem {
    pub eta_minus: C64,
    pub eta_plus: C64,
    pub lambda_minus: C64,
    pub lambda_plus: C64,
    pub alpha: [CVec4; 4],
    pub beta: [CVec4; 4],
}

impl EigenSystem {
    pub fn eta(&self, j: usize) -> C64 {
        if j.is_multiple_of(2) {
            self.eta_minus
        } else {
            self.eta_plus
        }
    }

    /// Biorthogonal expansion coefficients βⱼ·ψ.
    pub fn expand(&self, state: &CVec4) -> [C64; 4] {
        self.beta.map(|b| b.pair(state))
    }
}

pub fn eigensystem(p: &WalkParams) -> Result<EigenSystem> {
    let d = d_coefficients(p);
    let (em, ep) = d.eta_pair();
    check_ep_distance(&d, em, ep, 1e-8)?;
    Ok(EigenSystem {
        eta_minus: em,
        eta_plus: ep,
        lambda_minus: log_quasienergy(em),
        lambda_plus: log_quasienergy(ep),
        alpha: right_eigenvectors(&d, em, ep),
        beta: left_eigenvectors(&d, em, ep),
    })
}

/// λ = i·Log η, so η = e^{−iλ}; Re λ is kept in (−π, π].
pub fn log_quasienergy(eta: C64) -> C64 {
    let lam = I * C64::new(eta.re + 0.0, eta.im + 0.0).ln();
    if lam.re <= -std::f64::consts::PI {
        c(lam.re + 2.0 * std::f64::consts::PI, lam.im)
    } else {
        lam
    }
}

/// (λ₊, λ₋).
pub fn quasienergy(p: &WalkParams) -> (C64, C64) {
    let (em, ep) = d_coefficients(p).eta_pair();
    (log_quasienergy(ep), log_quasienergy(em))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub phi: f64,
    pub theta1: f64,
    pub lambda_plus: C64,
    pub lambda_minus: C64,
}

/// Inclusive 1-D grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count <= 1 {
            return self.min;
        }
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub phi: Axis,
    pub theta1: Axis,
    /// θ₂, γ, k are taken from here.
    pub base: WalkParams,
}

/// Quasienergies on the grid, φ-major then θ₁ ascending.
pub fn riemann_surface(grid: &SurfaceGrid) -> Result<Vec<SurfaceSample>> {
    if grid.phi.count < 2 || grid.theta1.count < 2 {
        return Err(Error::InvalidInput(
            "surface grid needs at least 2 points per axis".into(),
        ));
    }
    let nt = grid.theta1.count;
    let samples = (0..grid.phi.count * nt)
        .into_par_iter()
        .map(|idx| {
            let phi = grid.phi.value(idx / nt);
            let theta1 = grid.theta1.value(idx % nt);
            let (lambda_plus, lambda_minus) = quasienergy(&grid.base.with_loop_point(phi, theta1));
            SurfaceSample {
                phi,
                theta1,
                lambda_plus,
                lambda_minus,
            }
        })
        .collect();
    Ok(samples)
}

/// 12 significant digits.
pub(crate) fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_surface_csv<W: Write>(samples: &[SurfaceSample], mut w: W) -> Result<()> {
    writeln!(w, "phi,theta1,re_lp,im_lp,re_lm,im_lm")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt12(s.phi),
            fmt12(s.theta1),
            fmt12(s.lambda_plus.re),
            fmt12(s.lambda_plus.im),
            fmt12(s.lambda_minus.re),
            fmt12(s.lambda_minus.im)
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpLocation {
    pub phi: f64,
    pub theta1: f64,
    /// |D0² − 1| at the reported point.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub phi: (f64, f64),
    pub theta1: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox {
            phi: (-0.05, 0.05),
            theta1: (-0.5, -0.1),
        }
    }
}

fn coalescence(base: &WalkParams, phi: f64, theta1: f64) -> C64 {
    let d = d_coefficients(&base.with_loop_point(phi, theta1));
    d.D0 * d.D0 - 1.0
}

const SCAN_POINTS: usize = 4096;

/// Locates D0² = 1 inside `bx`.
///
/// On φ = 0, D0 is real, so the θ₁ axis is scanned for a sign change of
/// d0² − 1 and the lowest bracketed root is bisected. Boxes that exclude
/// φ = 0 fall back to Newton iteration on (Re, Im)(D0² − 1).
pub fn find_ep(bx: &SearchBox, base: &WalkParams) -> Result<EpLocation> {
    let (t_lo, t_hi) = (bx.theta1.0.min(bx.theta1.1), bx.theta1.0.max(bx.theta1.1));
    let (p_lo, p_hi) = (bx.phi.0.min(bx.phi.1), bx.phi.0.max(bx.phi.1));
    if p_lo <= 0.0 && p_hi >= 0.0 {
        let f = |t: f64| coalescence(base, 0.0, t).re;
        let axis = Axis::new(t_lo, t_hi, SCAN_POINTS);
        let mut prev = (axis.value(0), f(axis.value(0)));
        for i in 1..SCAN_POINTS {
            let t = axis.value(i);
            let ft = f(t);
            if ft == 0.0 {
                return Ok(EpLocation {
                    phi: 0.0,
                    theta1: t,
                    residual: 0.0,
                });
            }
            if prev.1 * ft < 0.0 {
                let (mut a, mut fa, mut b) = (prev.0, prev.1, t);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    let fm = f(m);
                    if fm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if fa * fm < 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                let (ra, rb) = (coalescence(base, 0.0, a).norm(), coalescence(base, 0.0, b).norm());
                let (theta1, residual) = if ra <= rb { (a, ra) } else { (b, rb) };
                return Ok(EpLocation {
                    phi: 0.0,
                    theta1,
                    residual,
                });
            }
            prev = (t, ft);
        }
        return Err(Error::NoBracket);
    }
    newton_ep(base, p_lo, p_hi, t_lo, t_hi)
}

fn newton_ep(base: &WalkParams, p_lo: f64, p_hi: f64, t_lo: f64, t_hi: f64) -> Result<EpLocation> {
    let (mut x, mut y) = (0.5 * (p_lo + p_hi), 0.5 * (t_lo + t_hi));
    let h = 1e-7;
    for _ in 0..100 {
        let f = coalescence(base, x, y);
        if f.norm() < 1e-13 {
            break;
        }
        let fx = (coalescence(base, x + h, y) - coalescence(base, x - h, y)) / (2.0 * h);
        let fy = (coalescence(base, x, y + h) - coalescence(base, x, y - h)) / (2.0 * h);
        let det = fx.re * fy.im - fy.re * fx.im;
        if det.abs() < 1e-300 {
            return Err(Error::NoBracket);
        }
        x -= (fy.im * f.re - fy.re * f.im) / det;
        y -= (-fx.im * f.re + fx.re * f.im) / det;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NoBracket);
        }
    }
    let residual = coalescence(base, x, y).norm();
    if residual < 1e-10 && (p_lo..=p_hi).contains(&x) && (t_lo..=t_hi).contains(&y) {
        Ok(EpLocation {
            phi: x,
            theta1: y,
            residual,
        })
    } else {
        Err(Error::NoBracket)
    }
}

/// Even-odd ray casting; `polygon` vertices are (φ, θ₁) pairs.
pub fn point_in_polygon(point: (f64, f64), polygon: &[(f64, f64)]) -> bool {
    let (px, py) = point;
    let mut inside = false;
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = polygon[i];
        let (xj, yj) = polygon[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

//! Complex 2×2 / 4×4 kernel.
//!
//! Matrices are plain `Copy` values; every operation returns a new value.
//! Two-qubit vectors use the basis order |00⟩, |01⟩, |10⟩, |11⟩.

use std::ops::{Add, Mul, Neg, Sub};

pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Principal square root with `-0.0` imaginary parts folded to `+0.0`, so
/// the branch does not depend on how a real number happened to be produced.
#[inline]
pub fn principal_sqrt(z: C64) -> C64 {
    C64::new(z.re + 0.0, z.im + 0.0).sqrt()
}

/// Unit-modulus phase `e^{iθ}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

// ---------------------------------------------------------------------------
// CMat2

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat2(pub [[C64; 2]; 2]);

impl CMat2 {
    pub const fn new(m: [[C64; 2]; 2]) -> Self {
        CMat2(m)
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        CMat2([[re(m[0][0]), re(m[0][1])], [re(m[1][0]), re(m[1][1])]])
    }

    pub fn identity() -> Self {
        CMat2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn zeros() -> Self {
        CMat2([[ZERO; 2]; 2])
    }

    pub fn diag(a: C64, b: C64) -> Self {
        CMat2([[a, ZERO], [ZERO, b]])
    }

    pub fn pauli_x() -> Self {
        Self::from_real([[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn pauli_y() -> Self {
        CMat2([[ZERO, -I], [I, ZERO]])
    }

    pub fn pauli_z() -> Self {
        Self::diag(ONE, -ONE)
    }

    #[inline]
    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.0[r][col]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        CMat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }
}

impl Mul for CMat2 {
    type Output = CMat2;
    fn mul(self, rhs: CMat2) -> CMat2 {
        let mut out = CMat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j];
            }
        }
        out
    }
}

impl Add for CMat2 {
    type Output = CMat2;
    fn add(self, rhs: CMat2) -> CMat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

impl Sub for CMat2 {
    type Output = CMat2;
    fn sub(self, rhs: CMat2) -> CMat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] -= rhs.0[i][j];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// CVec4

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CVec4(pub [C64; 4]);

impl CVec4 {
    pub const fn new(v: [C64; 4]) -> Self {
        CVec4(v)
    }

    pub fn zeros() -> Self {
        CVec4([ZERO; 4])
    }

    pub fn basis(i: usize) -> Self {
        let mut v = [ZERO; 4];
        v[i] = ONE;
        CVec4(v)
    }

    pub fn from_real(v: [f64; 4]) -> Self {
        CVec4(v.map(re))
    }

    /// Product state `a ⊗ b`.
    pub fn kron(a: [C64; 2], b: [C64; 2]) -> Self {
        CVec4([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Self {
        self.scale(re(1.0 / self.norm()))
    }

    pub fn scale(&self, s: C64) -> Self {
        CVec4(self.0.map(|x| x * s))
    }

    /// Hermitian inner product ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// Bilinear pairing Σ selfᵢ·otherᵢ (no conjugation); used for left
    /// eigenvectors stored as row vectors.
    pub fn pair(&self, other: &Self) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn conj(&self) -> Self {
        CVec4(self.0.map(|x| x.conj()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (0..4).map(|i| (self.0[i] - other.0[i]).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Outer product |self⟩⟨other|.
    pub fn outer(&self, other: &Self) -> CMat4 {
        let mut m = CMat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[i] * other.0[j].conj();
            }
        }
        m
    }

    /// Interleaved `[re0, im0, re1, im1, ...]`.
    pub fn to_interleaved(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, z) in self.0.iter().enumerate() {
            out[2 * i] = z.re;
            out[2 * i + 1] = z.im;
        }
        out
    }
}

impl Add for CVec4 {
    type Output = CVec4;
    fn add(self, rhs: CVec4) -> CVec4 {
        CVec4(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl Sub for CVec4 {
    type Output = CVec4;
    fn sub(self, rhs: CVec4) -> CVec4 {
        CVec4(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

// ---------------------------------------------------------------------------
// CMat4

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat4(pub [[C64; 4]; 4]);

impl CMat4 {
    pub const fn new(m: [[C64; 4]; 4]) -> Self {
        CMat4(m)
    }

    pub fn zeros() -> Self {
        CMat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::from_diag([ONE; 4])
    }

    pub fn from_diag(d: [C64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn from_real(m: [[f64; 4]; 4]) -> Self {
        CMat4(m.map(|row| row.map(re)))
    }

    pub fn from_columns(cols: [CVec4; 4]) -> Self {
        let mut m = Self::zeros();
        for (j, col) in cols.iter().enumerate() {
            for i in 0..4 {
                m.0[i][j] = col.0[i];
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.0[r][col]
    }

    pub fn column(&self, j: usize) -> CVec4 {
        CVec4(std::array::from_fn(|i| self.0[i][j]))
    }

    pub fn row(&self, i: usize) -> CVec4 {
        CVec4(self.0[i])
    }

    pub fn dagger(&self) -> Self {
        CMat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i].conj())))
    }

    pub fn transpose(&self) -> Self {
        CMat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat4(self.0.map(|row| row.map(|x| x * s)))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Largest entry of the anti-Hermitian part (m − m†)/2.
    pub fn anti_hermitian_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max(((self.0[i][j] - self.0[j][i].conj()) * 0.5).norm());
            }
        }
        worst
    }

    /// (m + m†)/2
    pub fn hermitian_part(&self) -> Self {
        (*self + self.dagger()).scale(re(0.5))
    }

    pub fn det(&self) -> C64 {
        lu4(self).map(|lu| lu.det).unwrap_or(ZERO)
    }

    /// Characteristic polynomial coefficients `[c0, c1, c2, c3, c4]` of
    /// det(xI − m) = Σ cₖ xᵏ, via Faddeev–LeVerrier.
    pub fn char_poly(&self) -> [C64; 5] {
        let mut coeffs = [ZERO; 5];
        coeffs[4] = ONE;
        let mut mk = CMat4::zeros();
        for k in 1..=4 {
            mk = *self * (mk + CMat4::identity().scale(coeffs[5 - k]));
            coeffs[4 - k] = -mk.trace() / k as f64;
        }
        coeffs
    }
}

impl Mul for CMat4 {
    type Output = CMat4;
    fn mul(self, rhs: CMat4) -> CMat4 {
        let mut out = CMat4::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    out.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        out
    }
}

impl Mul<CVec4> for CMat4 {
    type Output = CVec4;
    fn mul(self, v: CVec4) -> CVec4 {
        CVec4(std::array::from_fn(|i| (0..4).map(|k| self.0[i][k] * v.0[k]).sum()))
    }
}

impl Add for CMat4 {
    type Output = CMat4;
    fn add(self, rhs: CMat4) -> CMat4 {
        CMat4(std::array::from_fn(|i| {
            std::array::from_fn(|j| self.0[i][j] + rhs.0[i][j])
        }))
    }
}

impl Sub for CMat4 {
    type Output = CMat4;
    fn sub(self, rhs: CMat4) -> CMat4 {
        CMat4(std::array::from_fn(|i| {
            std::array::from_fn(|j| self.0[i][j] - rhs.0[i][j])
        }))
    }
}

impl Neg for CMat4 {
    type Output = CMat4;
    fn neg(self) -> CMat4 {
        self.scale(-ONE)
    }
}

// ---------------------------------------------------------------------------
// decompositions

pub fn kron(a: &CMat2, b: &CMat2) -> CMat4 {
    let mut m = CMat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    m
}

struct Lu4 {
    lu: [[C64; 4]; 4],
    perm: [usize; 4],
    det: C64,
}

fn lu4(m: &CMat4) -> Option<Lu4> {
    let mut a = m.0;
    let mut perm = [0, 1, 2, 3];
    let mut det = ONE;
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .unwrap();
        if a[pivot][col] == ZERO {
            return None;
        }
        if pivot != col {
            a.swap(pivot, col);
            perm.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        for r in col + 1..4 {
            let f = a[r][col] / p;
            a[r][col] = f;
            for k in col + 1..4 {
                let v = a[col][k];
                a[r][k] -= f * v;
            }
        }
    }
    Some(Lu4 { lu: a, perm, det })
}

/// Inverse by partial-pivot LU. Fails when |det| falls below
/// `1e-12 × (max |entry|)⁴`.
pub fn inverse4(m: &CMat4) -> Result<CMat4> {
    let scale = m.max_abs();
    let threshold = 1e-12 * scale.powi(4);
    let lu = match lu4(m) {
        Some(lu) if scale > 0.0 && lu.det.norm() > threshold => lu,
        Some(lu) => {
            return Err(Error::SingularMatrix {
                det: lu.det.norm(),
                threshold,
            })
        }
        None => return Err(Error::SingularMatrix { det: 0.0, threshold }),
    };
    let a = lu.lu;
    let mut inv = CMat4::zeros();
    for j in 0..4 {
        // solve L U x = P e_j
        let mut x = [ZERO; 4];
        for i in 0..4 {
            let mut s = if lu.perm[i] == j { ONE } else { ZERO };
            for k in 0..i {
                s -= a[i][k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..4).rev() {
            let mut s = x[i];
            for k in i + 1..4 {
                s -= a[i][k] * x[k];
            }
            x[i] = s / a[i][i];
        }
        for i in 0..4 {
            inv.0[i][j] = x[i];
        }
    }
    Ok(inv)
}

/// Eigen-decomposition of a Hermitian 4×4 matrix by cyclic complex Jacobi
/// rotations. Eigenvalues ascend; `vectors[j]` pairs with `values[j]`.
#[derive(Clone, Copy, Debug)]
pub struct HermitianEig {
    pub values: [f64; 4],
    pub vectors: [CVec4; 4],
}

pub fn hermitian_eig4(m: &CMat4) -> Result<HermitianEig> {
    let skew = m.anti_hermitian_norm();
    if skew > 1e-6 || !skew.is_finite() {
        return Err(Error::NotHermitian(skew));
    }
    let mut a = m.hermitian_part();
    let mut v = CMat4::identity();
    let scale = a.frobenius().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|p| (p + 1..4).map(move |q| (p, q)))
            .map(|(p, q)| a.0[p][q].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                let apq = a.0[p][q];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let tau = (a.0[q][q].re - a.0[p][p].re) / (2.0 * mag);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // J = diag(1, e^{-iφ}) on (p,q), then the real rotation.
                let mut j = CMat4::identity();
                j.0[p][p] = re(cs);
                j.0[p][q] = re(sn);
                j.0[q][p] = -phase.conj() * sn;
                j.0[q][q] = phase.conj() * cs;
                a = j.dagger() * a * j;
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                v = v * j;
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| a.0[x][x].re.total_cmp(&a.0[y][y].re));
    Ok(HermitianEig {
        values: order.map(|i| a.0[i][i].re),
        vectors: order.map(|i| v.column(i)),
    })
}

/// Hermitian PSD square root. Eigenvalues in [−1e−6, 0) are clipped to 0.
pub fn psd_sqrt(m: &CMat4) -> Result<CMat4> {
    let eig = hermitian_eig4(m)?;
    if eig.values[0] < -1e-6 {
        return Err(Error::NegativeEigenvalue(eig.values[0]));
    }
    // Eigenvalues at the rounding floor of the decomposition are zero; their
    // square roots would otherwise leak ~1e-8 into traces.
    let floor = 64.0 * f64::EPSILON * eig.values[3].abs().max(f64::MIN_POSITIVE);
    let mut out = CMat4::zeros();
    for (val, vec) in eig.values.iter().zip(eig.vectors.iter()) {
        if *val > floor {
            let s = val.sqrt();
            out = out + vec.outer(vec).scale(re(s));
        }
    }
    Ok(out.hermitian_part())
}

//! Bell states, density matrices, root fidelity and Bell classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallmat::{hermitian_eig4, psd_sqrt, re, CMat4, CVec4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BellLabel {
    Zeta1,
    Zeta2,
    Zeta3,
    Zeta4,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [BellLabel::Zeta1, BellLabel::Zeta2, BellLabel::Zeta3, BellLabel::Zeta4];

    /// Zero-based index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        ["zeta1", "zeta2", "zeta3", "zeta4"][self.index()]
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BellLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digit = t.strip_prefix("zeta").or_else(|| t.strip_prefix("ζ")).unwrap_or(&t);
        match digit {
            "1" => Ok(BellLabel::Zeta1),
            "2" => Ok(BellLabel::Zeta2),
            "3" => Ok(BellLabel::Zeta3),
            "4" => Ok(BellLabel::Zeta4),
            _ => Err(Error::InvalidInput(format!("unknown Bell label '{s}'"))),
        }
    }
}

pub fn bell_state(label: BellLabel) -> CVec4 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match label {
        BellLabel::Zeta1 => CVec4::from_real([h, 0.0, 0.0, h]),
        BellLabel::Zeta2 => CVec4::from_real([h, 0.0, 0.0, -h]),
        BellLabel::Zeta3 => CVec4::from_real([0.0, h, h, 0.0]),
        BellLabel::Zeta4 => CVec4::from_real([0.0, h, -h, 0.0]),
    }
}

/// Validated two-qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(CMat4);

impl DensityMatrix {
    /// Checks Hermiticity and unit trace (1e−10) and eigenvalues ≥ −1e−9.
    pub fn new(m: CMat4) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidDensity("non-finite entry".into()));
        }
        let skew = m.anti_hermitian_norm();
        if skew > 1e-10 {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {skew:e})")));
        }
        let tr = m.trace();
        if (tr - re(1.0)).norm() > 1e-10 {
            return Err(Error::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let eig = hermitian_eig4(&m)?;
        if eig.values[0] < -1e-9 {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {:e}",
                eig.values[0]
            )));
        }
        Ok(DensityMatrix(m.hermitian_part()))
    }

    /// |ψ⟩⟨ψ| of the normalized state.
    pub fn from_pure(state: &CVec4) -> Self {
        let v = state.normalized();
        DensityMatrix(v.outer(&v).hermitian_part())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(CMat4::identity().scale(re(0.25)))
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.0
    }

    /// Row-major interleaved re/im, 32 values.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.0 .0.iter().flatten().flat_map(|z| [z.re, z.im]).collect()
    }

    /// ⟨ψ|ρ|ψ⟩ for normalized ψ.
    pub fn expectation(&self, state: &CVec4) -> f64 {
        state.inner(&(self.0 * *state)).re
    }
}

/// Root fidelity Tr √(√ρ₁ ρ₂ √ρ₁).
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let s = psd_sqrt(rho1.matrix())?;
    let inner = (s * *rho2.matrix() * s).hermitian_part();
    Ok(psd_sqrt(&inner)?.trace().re.max(0.0))
}

/// Same functional as [`fidelity`], for theory-versus-experiment comparisons.
pub fn similarity(rho_th: &DensityMatrix, rho_ex: &DensityMatrix) -> Result<f64> {
    fidelity(rho_th, rho_ex)
}

/// √⟨ψ|ρ|ψ⟩, the root fidelity of a pure state against ρ.
pub fn pure_fidelity(state: &CVec4, rho: &DensityMatrix) -> f64 {
    rho.expectation(&state.normalized()).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: BellLabel,
    pub fidelities: [f64; 4],
    /// Top two fidelities differ by less than 1e−9.
    pub tie: bool,
}

/// Fidelity |⟨ζⱼ|ψ⟩| against each Bell state and the argmax label; ties go
/// to the lower index.
pub fn classify(state: &CVec4) -> Classification {
    let norm = state.norm();
    let fidelities = BellLabel::ALL.map(|l| bell_state(l).inner(state).norm() / norm);
    let mut best = 0;
    for j in 1..4 {
        if fidelities[j] > fidelities[best] + 1e-9 {
            best = j;
        }
    }
    let tie = (0..4).any(|j| j != best && (fidelities[best] - fidelities[j]).abs() < 1e-9);
    Classification {
        label: BellLabel::ALL[best],
        fidelities,
        tie,
    }
}

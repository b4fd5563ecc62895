//! Simulated two-photon tomography: 16 product projectors, Poisson counts,
//! linear-inversion reconstruction and parametric bootstrap.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::substream_seed;
use crate::metrics::{bell_state, fidelity, BellLabel, DensityMatrix};
use crate::smallmat::{c, hermitian_eig4, kron, re, CMat2, CMat4, CVec4, C64, ONE, ZERO};

/// Single-photon analysis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    H,
    V,
    D,
    R,
}

impl Basis {
    pub const ALL: [Basis; 4] = [Basis::H, Basis::V, Basis::D, Basis::R];

    /// Jones vector; R = (H − iV)/√2.
    pub fn state(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Basis::H => [ONE, ZERO],
            Basis::V => [ZERO, ONE],
            Basis::D => [re(h), re(h)],
            Basis::R => [re(h), c(0.0, -h)],
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::H => "H",
            Basis::V => "V",
            Basis::D => "D",
            Basis::R => "R",
        };
        f.write_str(s)
    }
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Basis::H),
            "V" | "v" => Ok(Basis::V),
            "D" | "d" => Ok(Basis::D),
            "R" | "r" => Ok(Basis::R),
            _ => Err(Error::InvalidInput(format!("unknown analysis basis '{s}'"))),
        }
    }
}

/// The 16 (a, b) pairs, a-major.
pub fn basis_pairs() -> [(Basis, Basis); 16] {
    std::array::from_fn(|i| (Basis::ALL[i / 4], Basis::ALL[i % 4]))
}

/// Rank-1 projectors |ab⟩⟨ab| in `basis_pairs` order.
pub fn basis_projectors() -> [CMat4; 16] {
    basis_pairs().map(|(a, b)| {
        let v = CVec4::kron(a.state(), b.state());
        v.outer(&v)
    })
}

/// How a linear-inversion estimate is made positive semidefinite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Negative eigenvalues set to 0, then the trace renormalized.
    Clip,
    /// Frobenius-nearest density matrix: eigenvalues shifted by a common
    /// μ and clipped at 0, with μ fixed by unit trace.
    #[default]
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    pub counts_per_basis: u64,
    pub seed: u64,
    pub psd_projection: bool,
    pub projection: Projection,
}

impl Default for TomoConfig {
    fn default() -> Self {
        TomoConfig {
            counts_per_basis: 10_000,
            seed: 0,
            psd_projection: true,
            projection: Projection::Nearest,
        }
    }
}

impl TomoConfig {
    fn validate(&self) -> Result<()> {
        if self.counts_per_basis == 0 {
            return Err(Error::InvalidInput("counts_per_basis must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub records: Vec<CountRecord>,
}

impl CountsTable {
    /// Counts in `basis_pairs` order; fails if a pair is missing.
    pub fn ordered_counts(&self) -> Result<[u64; 16]> {
        let mut out = [None; 16];
        for r in &self.records {
            let idx = Basis::ALL.iter().position(|&b| b == r.basis_a).unwrap() * 4
                + Basis::ALL.iter().position(|&b| b == r.basis_b).unwrap();
            out[idx] = Some(r.count);
        }
        let mut counts = [0; 16];
        for (i, v) in out.iter().enumerate() {
            counts[i] = v.ok_or_else(|| {
                let (a, b) = basis_pairs()[i];
                Error::InvalidInput(format!("counts table lacks basis pair {a}{b}"))
            })?;
        }
        Ok(counts)
    }

    fn from_counts(counts: [u64; 16]) -> Self {
        let records = basis_pairs()
            .iter()
            .zip(counts)
            .map(|(&(basis_a, basis_b), count)| CountRecord {
                basis_a,
                basis_b,
                count,
            })
            .collect();
        CountsTable { records }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "basis_a,basis_b,count")?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.basis_a, r.basis_b, r.count)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("basis_a")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidInput(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let count = fields[2]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            records.push(CountRecord {
                basis_a: fields[0].parse()?,
                basis_b: fields[1].parse()?,
                count,
            });
        }
        Ok(CountsTable { records })
    }
}

fn paulis() -> [CMat2; 4] {
    [CMat2::identity(), CMat2::pauli_x(), CMat2::pauli_y(), CMat2::pauli_z()]
}

type Mat16 = SMatrix<f64, 16, 16>;

struct Measurement {
    forward: Mat16,
    inverse: Mat16,
}

/// Maps Pauli coordinates r (ρ = Σ r_μν σ_μ⊗σ_ν / 4) to the 16 probabilities.
fn measurement() -> Result<&'static Measurement> {
    static CELL: OnceLock<std::result::Result<Measurement, f64>> = OnceLock::new();
    let m = CELL.get_or_init(|| {
        let proj = basis_projectors();
        let ps = paulis();
        let mut forward = Mat16::zeros();
        for (b, pb) in proj.iter().enumerate() {
            for mu in 0..4 {
                for nu in 0..4 {
                    forward[(b, 4 * mu + nu)] = (*pb * kron(&ps[mu], &ps[nu])).trace().re / 4.0;
                }
            }
        }
        let inverse = forward.try_inverse().ok_or(f64::INFINITY)?;
        let residual = (forward * inverse - Mat16::identity()).amax();
        if residual > 1e-8 {
            return Err(residual);
        }
        Ok(Measurement { forward, inverse })
    });
    m.as_ref().map_err(|&r| Error::IllConditioned(r))
}

fn pauli_coordinates(rho: &CMat4) -> SVector<f64, 16> {
    let ps = paulis();
    SVector::from_fn(|i, _| (*rho * kron(&ps[i / 4], &ps[i % 4])).trace().re)
}

fn from_pauli_coordinates(r: &SVector<f64, 16>) -> CMat4 {
    let ps = paulis();
    let mut m = CMat4::zeros();
    for i in 0..16 {
        m = m + kron(&ps[i / 4], &ps[i % 4]).scale(re(r[i] / 4.0));
    }
    m
}

/// Tr(Π_b ρ) for every basis pair.
pub fn exact_probabilities(rho: &DensityMatrix) -> [f64; 16] {
    let proj = basis_projectors();
    proj.map(|p| (p * *rho.matrix()).trace().re)
}

/// Poisson counts with mean counts_per_basis × Tr(Π_b ρ).
pub fn simulate_counts(rho: &DensityMatrix, cfg: &TomoConfig) -> Result<CountsTable> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, 0, 0));
    let probs = exact_probabilities(rho);
    Ok(CountsTable::from_counts(poisson_draw(
        &probs.map(|p| p * cfg.counts_per_basis as f64),
        &mut rng,
    )))
}

fn poisson_draw(means: &[f64; 16], rng: &mut ChaCha8Rng) -> [u64; 16] {
    means.map(|m| {
        if m > 0.0 {
            Poisson::new(m).map(|d| d.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        }
    })
}

/// Hermitized, unit-trace linear inversion of the 16 frequencies. No PSD
/// projection.
pub fn reconstruct_matrix(frequencies: &[f64; 16]) -> Result<CMat4> {
    let meas = measurement()?;
    let r = meas.inverse * SVector::<f64, 16>::from_column_slice(frequencies);
    let m = from_pauli_coordinates(&r).hermitian_part();
    let tr = m.trace().re;
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::Domain(format!("reconstructed trace {tr:e}")));
    }
    Ok(m.scale(re(1.0 / tr)))
}

/// Makes a unit-trace Hermitian estimate positive semidefinite.
pub fn project_psd(m: &CMat4, projection: Projection) -> Result<DensityMatrix> {
    let eig = hermitian_eig4(&m.hermitian_part())?;
    let shift = match projection {
        Projection::Clip => 0.0,
        Projection::Nearest => simplex_shift(&eig.values),
    };
    let clipped = eig.values.map(|v| (v - shift).max(0.0));
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("no positive eigenvalue to keep".into()));
    }
    let mut out = CMat4::zeros();
    for (v, vec) in clipped.iter().zip(eig.vectors.iter()) {
        if *v > 0.0 {
            out = out + vec.outer(vec).scale(re(v / total));
        }
    }
    DensityMatrix::new(out.hermitian_part())
}

/// μ with Σ max(λᵢ − μ, 0) = Σ λᵢ (Euclidean projection onto the simplex).
fn simplex_shift(values: &[f64; 4]) -> f64 {
    let total: f64 = values.iter().sum();
    let mut sorted = *values;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut shift = 0.0;
    let mut cum = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let mu = (cum - total) / (k + 1) as f64;
        if v - mu > 0.0 {
            shift = mu;
        }
    }
    shift
}

pub fn reconstruct_frequencies(
    frequencies: &[f64; 16],
    psd_projection: bool,
    projection: Projection,
) -> Result<DensityMatrix> {
    let m = reconstruct_matrix(frequencies)?;
    if psd_projection {
        project_psd(&m, projection)
    } else {
        DensityMatrix::new(m)
    }
}

/// Frequencies are counts / counts_per_basis.
pub fn reconstruct(counts: &CountsTable, cfg: &TomoConfig) -> Result<DensityMatrix> {
    cfg.validate()?;
    let n = cfg.counts_per_basis as f64;
    let freqs = counts.ordered_counts()?.map(|k| k as f64 / n);
    reconstruct_frequencies(&freqs, cfg.psd_projection, cfg.projection)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    /// Fidelity of the resampled reconstructions with ζ₁..ζ₄.
    pub fidelity_mean: [f64; 4],
    pub fidelity_sd: [f64; 4],
}

/// Parametric bootstrap: resample every count from Poisson(observed),
/// reconstruct, and take the sample s.d. of the Bell fidelities. Resample i
/// uses substream (seed, 1, i).
pub fn bootstrap_error(counts: &CountsTable, cfg: &TomoConfig, resamples: usize) -> Result<BootstrapSummary> {
    cfg.validate()?;
    if resamples < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least 2 resamples".into()));
    }
    let observed = counts.ordered_counts()?.map(|k| k as f64);
    let bells = BellLabel::ALL.map(|l| DensityMatrix::from_pure(&bell_state(l)));
    let fids: Vec<[f64; 4]> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, 1, i as u64));
            let table = CountsTable::from_counts(poisson_draw(&observed, &mut rng));
            let rho = reconstruct(&table, cfg)?;
            let mut f = [0.0; 4];
            for (slot, b) in f.iter_mut().zip(bells.iter()) {
                *slot = fidelity(b, &rho)?;
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    let n = fids.len() as f64;
    let mut mean = [0.0; 4];
    let mut sd = [0.0; 4];
    for j in 0..4 {
        mean[j] = fids.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = fids.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
        sd[j] = var.sqrt();
    }
    Ok(BootstrapSummary {
        resamples,
        fidelity_mean: mean,
        fidelity_sd: sd,
    })
}

/// Probabilities predicted by Pauli coordinates; exposed for checks of the
/// forward model.
pub fn forward_model(rho: &CMat4) -> Result<[f64; 16]> {
    let meas = measurement()?;
    let p = meas.forward * pauli_coordinates(rho);
    Ok(std::array::from_fn(|i| p[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::bell_state;
    use rand::Rng;

    fn rand_density(rng: &mut impl Rng) -> DensityMatrix {
        let mut m = CMat4::zeros();
        for _ in 0..4 {
            let v = CVec4(std::array::from_fn(|_| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }));
            m = m + v.outer(&v).scale(re(rng.random_range(0.0..1.0)));
        }
        let tr = m.trace().re;
        DensityMatrix::new(m.scale(re(1.0 / tr)).hermitian_part()).unwrap()
    }

    #[test]
    fn projector_examples() {
        let z1 = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta1));
        let p = exact_probabilities(&z1);
        assert!((p[0] - 0.5).abs() < 1e-15);
        for q in exact_probabilities(&DensityMatrix::maximally_mixed()) {
            assert!((q - 0.25).abs() < 1e-15);
        }
        assert!(measurement().is_ok());
    }

    #[test]
    fn forward_model_matches_projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = rand_density(&mut rng);
        let a = exact_probabilities(&rho);
        let b = forward_model(rho.matrix()).unwrap();
        for i in 0..16 {
            assert!((a[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let rho = rand_density(&mut rng);
            let back = reconstruct_frequencies(&exact_probabilities(&rho), false, Projection::Clip).unwrap();
            assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-10);
        }
    }

    #[test]
    fn zero_probability_basis_gives_zero_counts() {
        let rho = DensityMatrix::from_pure(&CVec4::basis(0));
        for seed in 0..20 {
            let t = simulate_counts(
                &rho,
                &TomoConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let vh = t
                .records
                .iter()
                .find(|r| r.basis_a == Basis::V && r.basis_b == Basis::H)
                .unwrap();
            assert_eq!(vh.count, 0);
        }
    }

    #[test]
    fn counts_are_seeded() {
        let rho = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta2));
        let cfg = TomoConfig {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            simulate_counts(&rho, &cfg).unwrap(),
            simulate_counts(&rho, &cfg).unwrap()
        );
        let other = TomoConfig { seed: 6, ..cfg };
        assert_ne!(
            simulate_counts(&rho, &cfg).unwrap(),
            simulate_counts(&rho, &other).unwrap()
        );
    }

    #[test]
    fn csv_round_trip() {
        let rho = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta3));
        let t = simulate_counts(&rho, &TomoConfig::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("basis_a,basis_b,count\nH,H,"));
        assert_eq!(CountsTable::read_csv(&buf[..]).unwrap(), t);
        assert!(CountsTable::read_csv("H,H\n".as_bytes()).is_err());
        let partial = CountsTable {
            records: t.records[..15].to_vec(),
        };
        assert!(reconstruct(&partial, &TomoConfig::default()).is_err());
    }

    #[test]
    fn projection_yields_valid_density() {
        let rho = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta1));
        let cfg = TomoConfig {
            counts_per_basis: 50,
            seed: 3,
            ..Default::default()
        };
        let back = reconstruct(&simulate_counts(&rho, &cfg).unwrap(), &cfg).unwrap();
        assert!(DensityMatrix::new(*back.matrix()).is_ok());
    }

    #[test]
    fn projections_agree_on_valid_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = rand_density(&mut rng);
        for pr in [Projection::Clip, Projection::Nearest] {
            let back = project_psd(rho.matrix(), pr).unwrap();
            assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        }
        // diag(1.1, 0.1, −0.05, −0.15): clip keeps (1.1, 0.1)/1.2, nearest
        // shifts by μ = 0.1 and keeps (1, 0).
        let m = CMat4::from_diag([re(1.1), re(0.1), re(-0.05), re(-0.15)]);
        let clip = project_psd(&m, Projection::Clip).unwrap();
        assert!((clip.matrix().get(0, 0).re - 1.1 / 1.2).abs() < 1e-12);
        let near = project_psd(&m, Projection::Nearest).unwrap();
        assert!((near.matrix().get(0, 0).re - 1.0).abs() < 1e-12);
        assert!(near.matrix().get(1, 1).norm() < 1e-12);
    }

    #[test]
    fn bootstrap_boundaries() {
        let rho = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta1));
        let cfg = TomoConfig::default();
        let t = simulate_counts(&rho, &cfg).unwrap();
        assert!(bootstrap_error(&t, &cfg, 1).is_err());
        let s = bootstrap_error(&t, &cfg, 2).unwrap();
        assert_eq!(s.resamples, 2);
        assert!(s.fidelity_sd.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_count_config_rejected() {
        let rho = DensityMatrix::maximally_mixed();
        let cfg = TomoConfig {
            counts_per_basis: 0,
            ..Default::default()
        };
        assert!(simulate_counts(&rho, &cfg).is_err());
    }
}

//! Loop schedules, multi-step evolution, sheet tracking, the control-operator
//! drift diagnostic and a small-N schedule optimizer.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bell_state, classify, BellLabel, DensityMatrix};
use crate::smallmat::{re, CMat4, CVec4, C64};
use crate::spectrum::{eigensystem, find_ep, point_in_polygon, SearchBox};
use crate::walkops::{
    control_operator, control_operator_with_branch, d_coefficients, product_step, u_step, WalkParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cw,
    Ccw,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Cw, Direction::Ccw];

    /// Sign of the loop phase: + for counter-clockwise.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Cw => -1.0,
            Direction::Ccw => 1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Cw => Direction::Ccw,
            Direction::Ccw => Direction::Cw,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Cw => "cw",
            Direction::Ccw => "ccw",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cw" => Ok(Direction::Cw),
            "ccw" => Ok(Direction::Ccw),
            _ => Err(Error::InvalidInput(format!("unknown direction '{s}'"))),
        }
    }
}

/// Circle in the (φ, θ₁) plane passing through its lowest point at step 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopShape {
    pub radius: f64,
    pub center_theta1: f64,
}

impl LoopShape {
    /// Encloses the exceptional point.
    pub const LOOP1: LoopShape = LoopShape {
        radius: 0.2,
        center_theta1: -0.4,
    };
    /// Shares the start point but stays below the exceptional point.
    pub const LOOP2: LoopShape = LoopShape {
        radius: 0.1,
        center_theta1: -0.5,
    };

    /// (φ, θ₁) at loop phase `a` (radians, 0 = start).
    pub fn point(&self, a: f64, dir: Direction) -> (f64, f64) {
        let arg = dir.sign() * a - FRAC_PI_2;
        (self.radius * arg.cos(), self.radius * arg.sin() + self.center_theta1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSchedule {
    pub steps: Vec<WalkParams>,
    pub direction: Direction,
    pub label: String,
}

impl LoopSchedule {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// (φ, θ₁) vertices.
    pub fn polygon(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|p| (p.phi, p.theta1)).collect()
    }

    /// Same path traversed the other way from the same start:
    /// [s₀, s_{N−1}, …, s₁].
    pub fn reversed(&self) -> LoopSchedule {
        let mut steps = Vec::with_capacity(self.steps.len());
        if let Some(first) = self.steps.first() {
            steps.push(*first);
            steps.extend(self.steps[1..].iter().rev());
        }
        LoopSchedule {
            steps,
            direction: self.direction.reversed(),
            label: self.label.clone(),
        }
    }

    /// Constant schedule repeating `p`.
    pub fn constant(p: WalkParams, n: usize, label: &str) -> LoopSchedule {
        LoopSchedule {
            steps: vec![p; n],
            direction: Direction::Ccw,
            label: label.to_string(),
        }
    }
}

/// Step n of N at loop phase 2πn/N, n = 0..N−1.
pub fn loop_schedule(
    shape: LoopShape,
    n: usize,
    dir: Direction,
    base: WalkParams,
    label: &str,
) -> Result<LoopSchedule> {
    if n == 0 {
        return Err(Error::InvalidInput("a schedule needs at least one step".into()));
    }
    let phases: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    Ok(schedule_from_phases(shape, &phases, dir, base, label))
}

/// Schedule through arbitrary loop phases (radians, in order of application).
pub fn schedule_from_phases(
    shape: LoopShape,
    phases: &[f64],
    dir: Direction,
    base: WalkParams,
    label: &str,
) -> LoopSchedule {
    let steps = phases
        .iter()
        .map(|&a| {
            let (phi, theta1) = shape.point(a, dir);
            base.with_loop_point(phi, theta1)
        })
        .collect();
    LoopSchedule {
        steps,
        direction: dir,
        label: label.to_string(),
    }
}

pub fn loop1_schedule(n: usize, dir: Direction) -> Result<LoopSchedule> {
    loop_schedule(LoopShape::LOOP1, n, dir, WalkParams::default(), "loop1")
}

pub fn loop2_schedule(n: usize, dir: Direction) -> Result<LoopSchedule> {
    loop_schedule(LoopShape::LOOP2, n, dir, WalkParams::default(), "loop2")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Per-step U_n = C_n (I⊗M_n) C_n⁻¹.
    Full,
    /// C_N (I⊗M_N)···(I⊗M_1) C_1⁻¹.
    Simplified,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Full => "full",
            Engine::Simplified => "simplified",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Engine::Full),
            "simplified" => Ok(Engine::Simplified),
            _ => Err(Error::InvalidInput(format!("unknown engine '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Record biorthogonal sheet weights at every step.
    pub record_steps: bool,
    /// Divide out the norm after every step (tracked in `log_magnitude`).
    pub renormalize: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            record_steps: false,
            renormalize: true,
        }
    }
}

impl EvolveOptions {
    pub fn with_steps() -> Self {
        EvolveOptions {
            record_steps: true,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phi: f64,
    pub theta1: f64,
    /// |βⱼ·ψ|² in the eigenbasis of U_n after step n.
    pub weights_raw: [f64; 4],
    pub weights: [f64; 4],
    pub eta_minus: [f64; 2],
    pub eta_plus: [f64; 2],
    pub log_magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionReport {
    pub input: Option<BellLabel>,
    pub direction: Direction,
    pub n: usize,
    pub loop_label: String,
    pub engine: Engine,
    pub output_state: CVec4,
    pub density: DensityMatrix,
    pub fidelities: [f64; 4],
    pub classified: BellLabel,
    pub tie: bool,
    /// Σ ln‖ψ‖ removed by renormalization.
    pub log_magnitude: f64,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct FidelitiesJson {
    zeta1: f64,
    zeta2: f64,
    zeta3: f64,
    zeta4: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    input: String,
    direction: Direction,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "loop")]
    loop_label: &'a str,
    engine: Engine,
    output_state: [f64; 8],
    density: Vec<f64>,
    fidelities: FidelitiesJson,
    classified: BellLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<&'a [StepRecord]>,
}

impl EvolutionReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        let f = self.fidelities;
        let j = ReportJson {
            input: self.input.map(|l| l.to_string()).unwrap_or_else(|| "custom".into()),
            direction: self.direction,
            n: self.n,
            loop_label: &self.loop_label,
            engine: self.engine,
            output_state: self.output_state.to_interleaved(),
            density: self.density.to_interleaved(),
            fidelities: FidelitiesJson {
                zeta1: f[0],
                zeta2: f[1],
                zeta3: f[2],
                zeta4: f[3],
            },
            classified: self.classified,
            steps: if self.steps.is_empty() { None } else { Some(&self.steps) },
        };
        serde_json::to_value(j).expect("report serialization")
    }

    /// Fidelity against a given Bell state.
    pub fn fidelity_to(&self, label: BellLabel) -> f64 {
        self.fidelities[label.index()]
    }
}

fn finish(
    schedule: &LoopSchedule,
    input: Option<BellLabel>,
    engine: Engine,
    state: CVec4,
    log_magnitude: f64,
    steps: Vec<StepRecord>,
) -> Result<EvolutionReport> {
    let norm = state.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain(format!("state norm {norm:e} after evolution")));
    }
    let output_state = state.normalized();
    let cl = classify(&output_state);
    Ok(EvolutionReport {
        input,
        direction: schedule.direction,
        n: schedule.len(),
        loop_label: schedule.label.clone(),
        engine,
        output_state,
        density: DensityMatrix::from_pure(&output_state),
        fidelities: cl.fidelities,
        classified: cl.label,
        tie: cl.tie,
        log_magnitude: log_magnitude + norm.ln(),
        steps,
    })
}

fn step_record(step: usize, p: &WalkParams, frame_state: &CVec4, log_magnitude: f64) -> Result<StepRecord> {
    let es = eigensystem(p)?;
    let weights_raw = es.expand(frame_state).map(|c| c.norm_sqr());
    let total: f64 = weights_raw.iter().sum();
    Ok(StepRecord {
        step,
        phi: p.phi,
        theta1: p.theta1,
        weights_raw,
        weights: weights_raw.map(|w| w / total),
        eta_minus: [es.eta_minus.re, es.eta_minus.im],
        eta_plus: [es.eta_plus.re, es.eta_plus.im],
        log_magnitude,
    })
}

fn check_input(schedule: &LoopSchedule, input: &CVec4) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty schedule".into()));
    }
    if !input.is_finite() || input.norm() == 0.0 {
        return Err(Error::InvalidInput("input state must be finite and non-zero".into()));
    }
    Ok(())
}

/// ψ ← U_N ··· U_1 ψ.
pub fn evolve_full(schedule: &LoopSchedule, input: &CVec4, opts: EvolveOptions) -> Result<EvolutionReport> {
    check_input(schedule, input)?;
    let mut state = input.normalized();
    let mut log_mag = 0.0;
    let mut steps = Vec::new();
    for (n, p) in schedule.steps.iter().enumerate() {
        state = u_step(p) * state;
        if opts.renormalize {
            let norm = state.norm();
            log_mag += norm.ln();
            state = state.scale(re(1.0 / norm));
        }
        if opts.record_steps {
            steps.push(step_record(n, p, &state, log_mag)?);
        }
    }
    finish(schedule, bell_label_of(input), Engine::Full, state, log_mag, steps)
}

/// ψ ← C_N (I⊗M_N) ··· (I⊗M_1) C_1⁻¹ ψ, both control operators taken at the
/// closing point (the first step's parameters).
pub fn evolve_simplified(schedule: &LoopSchedule, input: &CVec4, opts: EvolveOptions) -> Result<EvolutionReport> {
    check_input(schedule, input)?;
    let ctl = control_operator(&schedule.steps[0])?;
    let prepared = ctl.c_inv * input.normalized();
    let mut report = evolve_simplified_prepared(schedule, &prepared, opts)?;
    report.input = bell_label_of(input);
    Ok(report)
}

/// As [`evolve_simplified`] but starting from an already prepared product
/// state C_1⁻¹|ζ⟩ (the C_1⁻¹ stage is skipped).
pub fn evolve_simplified_prepared(
    schedule: &LoopSchedule,
    prepared: &CVec4,
    opts: EvolveOptions,
) -> Result<EvolutionReport> {
    check_input(schedule, prepared)?;
    let ctl = control_operator(&schedule.steps[0])?;
    let mut state = *prepared;
    let mut log_mag = 0.0;
    let mut steps = Vec::new();
    let mut rho_hint: Option<C64> = None;
    for (n, p) in schedule.steps.iter().enumerate() {
        state = product_step(p) * state;
        if opts.renormalize {
            let norm = state.norm();
            log_mag += norm.ln();
            state = state.scale(re(1.0 / norm));
        }
        if opts.record_steps {
            // Sheet weights in the U_n frame: C_n ψ expanded on βⱼ.
            let cn = control_operator_with_branch(p, rho_hint)?;
            rho_hint = Some(cn.rho);
            let frame = (cn.c * state).scale(re(1.0 / state.norm()));
            steps.push(step_record(n, p, &frame, log_mag)?);
        }
    }
    let out = ctl.c * state;
    let scale = out.norm();
    let state = out.scale(re(1.0 / scale));
    finish(schedule, None, Engine::Simplified, state, log_mag + scale.ln(), steps)
}

fn bell_label_of(state: &CVec4) -> Option<BellLabel> {
    BellLabel::ALL
        .into_iter()
        .find(|&l| bell_state(l).max_abs_diff(&state.normalized()) < 1e-12)
}

pub fn evolve(schedule: &LoopSchedule, input: &CVec4, engine: Engine, opts: EvolveOptions) -> Result<EvolutionReport> {
    match engine {
        Engine::Full => evolve_full(schedule, input, opts),
        Engine::Simplified => evolve_simplified(schedule, input, opts),
    }
}

/// Expected output of an EP-encircling loop.
pub fn expected_output(input: BellLabel, dir: Direction) -> BellLabel {
    use BellLabel::*;
    match (dir, input) {
        (Direction::Cw, Zeta1 | Zeta2) => Zeta2,
        (Direction::Cw, Zeta3 | Zeta4) => Zeta3,
        (Direction::Ccw, Zeta1 | Zeta2) => Zeta1,
        (Direction::Ccw, Zeta3 | Zeta4) => Zeta4,
    }
}

/// Every Bell input through both directions of a loop shape, in case order
/// (CW ζ₁..ζ₄, then CCW ζ₁..ζ₄).
pub fn run_table(
    shape: LoopShape,
    n: usize,
    base: WalkParams,
    label: &str,
    engine: Engine,
    opts: EvolveOptions,
) -> Result<Vec<EvolutionReport>> {
    let cw = loop_schedule(shape, n, Direction::Cw, base, label)?;
    let ccw = loop_schedule(shape, n, Direction::Ccw, base, label)?;
    run_cases(&cw, &ccw, engine, opts)
}

pub fn run_cases(
    cw: &LoopSchedule,
    ccw: &LoopSchedule,
    engine: Engine,
    opts: EvolveOptions,
) -> Result<Vec<EvolutionReport>> {
    let cases: Vec<(&LoopSchedule, BellLabel)> = [cw, ccw]
        .into_iter()
        .flat_map(|s| BellLabel::ALL.into_iter().map(move |l| (s, l)))
        .collect();
    cases
        .into_par_iter()
        .map(|(s, l)| evolve(s, &bell_state(l), engine, opts))
        .collect()
}

// ---------------------------------------------------------------------------
// sheet tracking

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetStep {
    pub step: usize,
    pub weights: [f64; 4],
    /// argmax of `weights`.
    pub dominant: usize,
    /// Weight of the tracked η₋ and η₊ groups (continued from step 0).
    pub group_weights: [f64; 2],
    /// Tracked group holding the larger weight.
    pub dominant_group: usize,
    /// |η| of the dominant group.
    pub dominant_modulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetTrace {
    pub steps: Vec<SheetStep>,
    /// Number of changes of the dominant group between consecutive steps.
    pub switches: usize,
    /// Steps at which a switch was observed.
    pub jump_steps: Vec<usize>,
    /// Dominant group grows (|η| > 1) after the first step.
    pub gain_start: bool,
}

/// Dominant-sheet sequence of a report recorded with `record_steps`.
///
/// The two eigenvalue groups are followed by continuity of η between steps,
/// so that a relabelling of η± by the principal square root is not counted
/// as a jump.
pub fn sheet_trace(report: &EvolutionReport) -> Result<SheetTrace> {
    if report.steps.is_empty() {
        return Err(Error::InvalidInput("report has no per-step records".into()));
    }
    let mut out = Vec::with_capacity(report.steps.len());
    let mut swapped = false;
    let mut prev_eta: Option<(C64, C64)> = None;
    for rec in &report.steps {
        let em = C64::new(rec.eta_minus[0], rec.eta_minus[1]);
        let ep = C64::new(rec.eta_plus[0], rec.eta_plus[1]);
        // tracked group g sits on (em, ep)[g ^ swapped]
        let (a, b) = if swapped { (ep, em) } else { (em, ep) };
        let (a, b) = if let Some((pa, pb)) = prev_eta {
            if (a - pb).norm() + (b - pa).norm() < (a - pa).norm() + (b - pb).norm() {
                swapped = !swapped;
                (b, a)
            } else {
                (a, b)
            }
        } else {
            (a, b)
        };
        prev_eta = Some((a, b));

        let w = rec.weights;
        let raw = [w[0] + w[2], w[1] + w[3]];
        let group_weights = if swapped { [raw[1], raw[0]] } else { raw };
        let dominant_group = usize::from(group_weights[1] > group_weights[0]);
        let dominant = (0..4).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap();
        out.push(SheetStep {
            step: rec.step,
            weights: w,
            dominant,
            group_weights,
            dominant_group,
            dominant_modulus: [a, b][dominant_group].norm(),
        });
    }
    let jump_steps: Vec<usize> = out
        .windows(2)
        .filter(|w| w[0].dominant_group != w[1].dominant_group)
        .map(|w| w[1].step)
        .collect();
    let probe = out.get(1).unwrap_or(&out[0]);
    Ok(SheetTrace {
        switches: jump_steps.len(),
        jump_steps,
        gain_start: probe.dominant_modulus > 1.0,
        steps: out,
    })
}

// ---------------------------------------------------------------------------
// control drift

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlDriftReport {
    /// max |C_{n+1}⁻¹ C_n − I| for n = 1..N−1.
    pub per_step: Vec<f64>,
    pub global_max: f64,
}

/// ρ is continued along the schedule so that the gauge of consecutive control
/// operators matches.
pub fn control_drift(schedule: &LoopSchedule) -> Result<ControlDriftReport> {
    let mut hint = None;
    let mut cs = Vec::with_capacity(schedule.len());
    for p in &schedule.steps {
        let ctl = control_operator_with_branch(p, hint)?;
        hint = Some(ctl.rho);
        cs.push(ctl);
    }
    let id = CMat4::identity();
    let per_step: Vec<f64> = cs.windows(2).map(|w| (w[1].c_inv * w[0].c).max_abs_diff(&id)).collect();
    let global_max = per_step.iter().copied().fold(0.0, f64::max);
    Ok(ControlDriftReport { per_step, global_max })
}

// ---------------------------------------------------------------------------
// schedule optimizer

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub n: usize,
    pub engine: Engine,
    pub shape: LoopShape,
    pub base: WalkParams,
    pub seed: u64,
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
}

impl OptimizeConfig {
    pub fn new(n: usize) -> Self {
        OptimizeConfig {
            n,
            engine: Engine::Full,
            shape: LoopShape::LOOP1,
            base: WalkParams::default(),
            seed: 0,
            restarts: 24,
            max_evals: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    /// Loop phases in application order, starting at 0.
    pub phases: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
    pub cw: LoopSchedule,
    pub ccw: LoopSchedule,
}

fn phases_from(x: &[f64]) -> Vec<f64> {
    let mut rest: Vec<f64> = x.iter().map(|v| v.rem_euclid(2.0 * PI)).collect();
    rest.sort_by(f64::total_cmp);
    let mut phases = Vec::with_capacity(x.len() + 1);
    phases.push(0.0);
    phases.extend(rest);
    phases
}

/// Minimum over the 8 (input, direction) cases of the fidelity to the
/// expected chiral output.
pub fn schedule_objective(shape: LoopShape, phases: &[f64], base: WalkParams, engine: Engine) -> f64 {
    let mut worst = f64::INFINITY;
    for dir in Direction::BOTH {
        let s = schedule_from_phases(shape, phases, dir, base, "opt");
        for l in BellLabel::ALL {
            let f = evolve(&s, &bell_state(l), engine, EvolveOptions::default())
                .map(|r| r.fidelity_to(expected_output(l, dir)))
                .unwrap_or(0.0);
            worst = worst.min(f);
        }
    }
    worst
}

/// Nelder–Mead maximization of [`schedule_objective`] over the N−1 free loop
/// phases, with seeded restarts. Candidates must still enclose the EP of
/// `cfg.base`. The equal-spacing schedule is always evaluated, so the result
/// is never worse than it.
pub fn optimize_schedule(cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    if cfg.n < 2 {
        return Err(Error::InvalidInput("optimizer needs N >= 2".into()));
    }
    let equal: Vec<f64> = (1..cfg.n).map(|i| 2.0 * PI * i as f64 / cfg.n as f64).collect();
    // Schedules whose polygon no longer winds around the EP are infeasible.
    let ep = find_ep(&SearchBox::default(), &cfg.base).ok();
    let f = |x: &[f64]| {
        let phases = phases_from(x);
        if let Some(ep) = ep {
            let poly = schedule_from_phases(cfg.shape, &phases, Direction::Ccw, cfg.base, "").polygon();
            if !point_in_polygon((ep.phi, ep.theta1), &poly) {
                return 0.0;
            }
        }
        -schedule_objective(cfg.shape, &phases, cfg.base, cfg.engine)
    };
    let initial = -f(&equal);

    let runs: Vec<(Vec<f64>, f64, usize)> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::harness::substream_seed(cfg.seed, r as u64, 0));
            let spacing = 2.0 * PI / cfg.n as f64;
            let start: Vec<f64> = if r == 0 {
                equal.clone()
            } else {
                let jitter = 0.45 * spacing * (r as f64 / cfg.restarts as f64).sqrt();
                equal.iter().map(|&a| a + rng.random_range(-jitter..=jitter)).collect()
            };
            let step = 0.25 * spacing;
            let (x, fx, evals) = nelder_mead(&f, &start, step, cfg.max_evals);
            (x, fx, evals)
        })
        .collect();

    let evaluations = runs.iter().map(|r| r.2).sum::<usize>() + 1;
    let (mut best_x, mut best_f) = (equal.clone(), -initial);
    for (x, fx, _) in runs {
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    let phases = phases_from(&best_x);
    Ok(OptimizeResult {
        cw: schedule_from_phases(cfg.shape, &phases, Direction::Cw, cfg.base, "optimized"),
        ccw: schedule_from_phases(cfg.shape, &phases, Direction::Ccw, cfg.base, "optimized"),
        phases,
        objective: -best_f,
        initial_objective: initial,
        evaluations,
    })
}

/// Minimizes `f` from `x0`; returns (argmin, min, evaluations).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let centroid = |s: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (x, _) in &s[..n] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / n as f64;
            }
        }
        c
    };
    let along =
        |c: &[f64], x: &[f64], t: f64| -> Vec<f64> { c.iter().zip(x).map(|(ci, xi)| ci + t * (xi - ci)).collect() };

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-12 {
            break;
        }
        let c = centroid(&simplex);
        let worst = simplex[n].clone();
        let xr = along(&c, &worst.0, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(&c, &worst.0, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(&c, &worst.0, -0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(&c, &worst.0, 0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = along(&best, &item.0, 0.5);
                    let fx = f(&x);
                    *item = (x, fx);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, evals)
}

/// |η| of the two eigenvalue groups at `p`.
pub fn eta_moduli(p: &WalkParams) -> (f64, f64) {
    let (em, ep) = d_coefficients(p).eta_pair();
    (em.norm(), ep.norm())
}

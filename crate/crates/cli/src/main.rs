use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eploop::harness::{
    disorder_run_pair, reproduce_figure, run_evolution, tomography_of, DisorderSummary, Figure, Granularity,
    LoopSelector, RunConfig,
};
use eploop::loops::{
    control_drift, optimize_schedule, sheet_trace, Direction, Engine, EvolutionReport, EvolveOptions, OptimizeConfig,
};
use eploop::metrics::{fidelity, BellLabel};
use eploop::optics::{
    compile_cn, compile_gain_loss, compile_phase_shift, compile_rotation, compile_symmetry_break,
    compile_walk_operator, gamma_from_transmittance, ElementSequence,
};
use eploop::spectrum::{find_ep, riemann_surface, write_surface_csv, Axis, SearchBox, SurfaceGrid};
use eploop::tomo::{bootstrap_error, reconstruct, CountsTable};
use serde_json::{json, Value};

/// Bad configuration or arguments; exits with code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "eploop",
    version,
    about = "Chiral Bell-state switching around an exceptional point"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Quasienergy surface over (φ, θ₁).
    Surface(SurfaceArgs),
    /// Locate the exceptional point.
    FindEp(FindEpArgs),
    /// Evolve Bell inputs around a loop.
    Evolve(EvolveArgs),
    /// Write the data behind a figure (fig1b, fig2, fig4, fig5 or all).
    Reproduce { figure: String },
    /// Monte-Carlo disorder on the loop parameters.
    Disorder(DisorderArgs),
    /// Simulated tomography of loop outputs, or reconstruction of a counts file.
    Tomo(TomoArgs),
    /// Compile an operator into waveplates and PPBS elements.
    CompileOptics(OpticsArgs),
    /// Search non-uniform loop phases for the best chiral fidelity.
    OptimizeSchedule(OptimizeArgs),
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "COUNT"], allow_hyphen_values = true)]
    phi: Option<Vec<f64>>,
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "COUNT"], allow_hyphen_values = true)]
    theta1: Option<Vec<f64>>,
}

#[derive(Args)]
struct FindEpArgs {
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_hyphen_values = true)]
    phi: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_hyphen_values = true)]
    theta1: Option<Vec<f64>>,
}

#[derive(Args, Default)]
struct LoopArgs {
    /// 1 or 2.
    #[arg(long = "loop")]
    loop_sel: Option<LoopSelector>,
    #[arg(short = 'n', long = "steps")]
    n: Option<usize>,
    #[arg(long)]
    engine: Option<Engine>,
    /// cw or ccw; repeat for both.
    #[arg(long = "direction")]
    directions: Vec<Direction>,
    /// zeta1..zeta4; repeat for several.
    #[arg(long = "input")]
    inputs: Vec<BellLabel>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    run: LoopArgs,
    /// Record per-step eigen-data and the sheet trace.
    #[arg(long)]
    record_steps: bool,
    /// Also report the control-operator drift along each loop.
    #[arg(long)]
    drift: bool,
}

#[derive(Args)]
struct DisorderArgs {
    #[command(flatten)]
    run: LoopArgs,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    groups: Option<usize>,
    /// per-step or per-loop.
    #[arg(long)]
    granularity: Option<Granularity>,
}

#[derive(Args)]
struct TomoArgs {
    #[command(flatten)]
    run: LoopArgs,
    /// Reconstruct from a counts CSV (basis_a,basis_b,count) instead of simulating.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    counts_per_basis: Option<u64>,
    #[arg(long)]
    bootstrap: Option<usize>,
}

#[derive(Args)]
struct OpticsArgs {
    #[command(subcommand)]
    target: OpticsTarget,
}

#[derive(Subcommand)]
enum OpticsTarget {
    /// Control operator C_N at the loop start.
    Cn,
    /// Coin M_n at the given loop point.
    Walk {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi: f64,
        #[arg(long, default_value_t = -0.6, allow_hyphen_values = true)]
        theta1: f64,
    },
    Rotation {
        #[arg(allow_hyphen_values = true)]
        theta: f64,
    },
    PhaseShift {
        #[arg(allow_hyphen_values = true)]
        k: f64,
    },
    SymmetryBreak {
        #[arg(allow_hyphen_values = true)]
        phi: f64,
    },
    GainLoss {
        #[arg(long, allow_hyphen_values = true, conflicts_with = "transmittance")]
        gamma: Option<f64>,
        /// PPBS intensity transmittances (t_H, t_V).
        #[arg(long, num_args = 2, value_names = ["T_H", "T_V"])]
        transmittance: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(short = 'n', long = "steps", default_value_t = 8)]
    n: usize,
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long, default_value_t = 24)]
    restarts: usize,
    #[arg(long, default_value_t = 4000)]
    max_evals: usize,
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    format: Format,
}

impl Ctx {
    /// Writes `body` to `<out>/<name>.<ext>` or stdout.
    fn emit(&self, name: &str, body: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let ext = match self.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                let path = dir.join(format!("{name}.{ext}"));
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{body}"),
        }
        Ok(())
    }

    fn emit_json(&self, name: &str, v: &Value) -> Result<()> {
        self.emit(name, &(serde_json::to_string_pretty(v)? + "\n"))
    }

    fn with_loop(&self, a: &LoopArgs) -> Result<RunConfig> {
        let mut cfg = self.cfg.clone();
        if let Some(l) = a.loop_sel {
            cfg.loop_sel = l;
        }
        if let Some(n) = a.n {
            cfg.n = n;
            if cfg.phases.as_ref().is_some_and(|p| p.len() != n) {
                cfg.phases = None;
            }
        }
        if let Some(e) = a.engine {
            cfg.engine = e;
        }
        if !a.directions.is_empty() {
            cfg.directions = a.directions.clone();
        }
        if !a.inputs.is_empty() {
            cfg.inputs = a.inputs.clone();
        }
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("EPLOOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_err(format!("EPLOOP_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<eploop::Error>() {
        Some(e) if e.is_numerical_guard() => 3,
        Some(eploop::Error::InvalidInput(_) | eploop::Error::Domain(_) | eploop::Error::Json(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = load_config(&cli)?;
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone());
    let ctx = Ctx {
        cfg,
        out,
        format: cli.format,
    };
    match &cli.cmd {
        Cmd::Surface(a) => surface(&ctx, a),
        Cmd::FindEp(a) => find_ep_cmd(&ctx, a),
        Cmd::Evolve(a) => evolve(&ctx, a),
        Cmd::Reproduce { figure } => reproduce(&ctx, figure),
        Cmd::Disorder(a) => disorder(&ctx, a),
        Cmd::Tomo(a) => tomo(&ctx, a),
        Cmd::CompileOptics(a) => compile_optics(&ctx, &a.target),
        Cmd::OptimizeSchedule(a) => optimize(&ctx, a),
    }
}

fn axis(v: &Option<Vec<f64>>, default: Axis) -> Result<Axis> {
    match v.as_deref() {
        None => Ok(default),
        Some([lo, hi, n]) if n.fract() == 0.0 && *n >= 2.0 => Ok(Axis::new(*lo, *hi, *n as usize)),
        Some(_) => Err(config_err("axis COUNT must be an integer ≥ 2")),
    }
}

fn surface(ctx: &Ctx, a: &SurfaceArgs) -> Result<()> {
    let fig = eploop::harness::fig1b_grid(ctx.cfg.base);
    let grid = SurfaceGrid {
        phi: axis(&a.phi, fig.phi)?,
        theta1: axis(&a.theta1, fig.theta1)?,
        base: ctx.cfg.base,
    };
    let samples = riemann_surface(&grid)?;
    match ctx.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_surface_csv(&samples, &mut buf)?;
            ctx.emit("surface", &String::from_utf8(buf)?)
        }
        Format::Json => ctx.emit_json("surface", &json!({ "grid": grid, "samples": samples })),
    }
}

fn find_ep_cmd(ctx: &Ctx, a: &FindEpArgs) -> Result<()> {
    let mut bx = SearchBox::default();
    if let Some(v) = &a.phi {
        bx.phi = (v[0], v[1]);
    }
    if let Some(v) = &a.theta1 {
        bx.theta1 = (v[0], v[1]);
    }
    let ep = find_ep(&bx, &ctx.cfg.base)?;
    match ctx.format {
        Format::Csv => ctx.emit(
            "ep",
            &format!("phi,theta1,residual\n{},{},{:e}\n", ep.phi, ep.theta1, ep.residual),
        ),
        Format::Json => ctx.emit_json("ep", &serde_json::to_value(ep)?),
    }
}

fn fidelity_csv(reports: &[EvolutionReport]) -> String {
    let mut s = String::from("direction,input,classified,f_zeta1,f_zeta2,f_zeta3,f_zeta4,log_magnitude\n");
    for r in reports {
        let input = r.input.map(|l| l.to_string()).unwrap_or_else(|| "custom".into());
        let f = r.fidelities;
        let _ = writeln!(
            s,
            "{},{input},{},{:.12},{:.12},{:.12},{:.12},{:.12}",
            r.direction, r.classified, f[0], f[1], f[2], f[3], r.log_magnitude
        );
    }
    s
}

fn evolve(ctx: &Ctx, a: &EvolveArgs) -> Result<()> {
    let cfg = ctx.with_loop(&a.run)?;
    let opts = EvolveOptions {
        record_steps: a.record_steps,
        ..Default::default()
    };
    let reports = run_evolution(&cfg, opts)?;
    if ctx.format == Format::Csv {
        return ctx.emit("evolve", &fidelity_csv(&reports));
    }
    let mut cases = Vec::with_capacity(reports.len());
    for r in &reports {
        let mut v = r.to_json_value();
        if a.record_steps {
            let t = sheet_trace(r)?;
            v["sheet"] = json!({ "switches": t.switches, "jump_steps": t.jump_steps, "gain_start": t.gain_start });
        }
        cases.push(v);
    }
    let mut doc = json!({ "config": cfg, "cases": cases });
    if a.drift {
        let mut drift = serde_json::Map::new();
        for &d in &cfg.directions {
            drift.insert(
                d.to_string(),
                serde_json::to_value(control_drift(&cfg.schedule(d)?)?.global_max)?,
            );
        }
        doc["control_drift"] = Value::Object(drift);
    }
    ctx.emit_json("evolve", &doc)
}

fn reproduce(ctx: &Ctx, which: &str) -> Result<()> {
    let figures: Vec<Figure> = if which.eq_ignore_ascii_case("all") {
        vec![Figure::Fig1b, Figure::Fig2, Figure::Fig4, Figure::Fig5]
    } else {
        vec![which.parse().map_err(|e: eploop::Error| config_err(e.to_string()))?]
    };
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    ctx.cfg.validate().map_err(|e| config_err(e.to_string()))?;
    let mut summary = serde_json::Map::new();
    for f in figures {
        let rep = reproduce_figure(f, &ctx.cfg, &dir)?;
        for p in &rep.files {
            eprintln!("wrote {}", p.display());
        }
        summary.insert(f.to_string(), rep.summary);
    }
    println!("{}", serde_json::to_string_pretty(&Value::Object(summary))?);
    Ok(())
}

fn disorder(ctx: &Ctx, a: &DisorderArgs) -> Result<()> {
    let mut cfg = ctx.with_loop(&a.run)?;
    if let Some(s) = a.strength {
        cfg.disorder_cfg.strength = s;
    }
    if let Some(g) = a.groups {
        cfg.disorder_cfg.groups = g;
    }
    if let Some(g) = a.granularity {
        cfg.disorder_cfg.granularity = g;
    }
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    let (cw, ccw) = (cfg.schedule(Direction::Cw)?, cfg.schedule(Direction::Ccw)?);
    let mut sum: DisorderSummary = disorder_run_pair(&cw, &ccw, &cfg.inputs, cfg.engine, &cfg.disorder_config())?;
    sum.cases.retain(|c| cfg.directions.contains(&c.direction));
    match ctx.format {
        Format::Csv => {
            let mut buf = Vec::new();
            sum.write_csv(&mut buf)?;
            ctx.emit("disorder", &String::from_utf8(buf)?)
        }
        Format::Json => {
            let mut v = serde_json::to_value(&sum)?;
            v["retention"] = json!(sum.retention());
            v["max_mean_drop"] = json!(sum.max_mean_drop());
            ctx.emit_json("disorder", &v)
        }
    }
}

fn tomo(ctx: &Ctx, a: &TomoArgs) -> Result<()> {
    let mut tcfg = ctx.cfg.tomo_config();
    if let Some(n) = a.counts_per_basis {
        tcfg.counts_per_basis = n;
    }
    let bootstrap = a.bootstrap.unwrap_or(ctx.cfg.bootstrap);
    if let Some(path) = &a.counts {
        return tomo_from_file(ctx, path, &tcfg, bootstrap);
    }
    let mut cfg = ctx.with_loop(&a.run)?;
    cfg.tomography = true;
    cfg.tomo = tcfg;
    cfg.bootstrap = bootstrap;
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    let reports = run_evolution(&cfg, EvolveOptions::default())?;
    let mut rows = Vec::with_capacity(reports.len());
    for r in &reports {
        rows.push((r, tomography_of(r, &cfg.tomo_config(), bootstrap)?));
    }
    match ctx.format {
        Format::Csv => {
            let mut s = String::from("direction,input,classified,similarity,f_mean,f_sd\n");
            for (r, t) in &rows {
                let i = r.classified.index();
                let input = r.input.map(|l| l.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{input},{},{:.12},{:.12},{:.12}",
                    r.direction, r.classified, t.similarity, t.fidelity_mean[i], t.fidelity_sd[i]
                );
            }
            ctx.emit("tomo", &s)
        }
        Format::Json => {
            let cases: Vec<Value> = rows
                .iter()
                .map(|(r, t)| {
                    json!({
                        "direction": r.direction,
                        "input": r.input,
                        "classified": r.classified,
                        "similarity": t.similarity,
                        "density": t.reconstructed.to_interleaved(),
                        "fidelity_mean": t.fidelity_mean,
                        "fidelity_sd": t.fidelity_sd,
                    })
                })
                .collect();
            ctx.emit_json(
                "tomo",
                &json!({ "tomo": cfg.tomo, "bootstrap": bootstrap, "cases": cases }),
            )
        }
    }
}

fn tomo_from_file(ctx: &Ctx, path: &Path, tcfg: &eploop::tomo::TomoConfig, bootstrap: usize) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
    let counts = CountsTable::read_csv(std::io::BufReader::new(file))
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let rho = reconstruct(&counts, tcfg)?;
    let fids: Vec<f64> = BellLabel::ALL
        .iter()
        .map(|&l| {
            fidelity(
                &eploop::metrics::DensityMatrix::from_pure(&eploop::metrics::bell_state(l)),
                &rho,
            )
        })
        .collect::<eploop::Result<_>>()?;
    let boot = if bootstrap >= 2 {
        Some(bootstrap_error(&counts, tcfg, bootstrap)?)
    } else {
        None
    };
    match ctx.format {
        Format::Csv => {
            let mut s = String::from("state,fidelity,sd\n");
            for (i, l) in BellLabel::ALL.iter().enumerate() {
                let sd = boot.as_ref().map(|b| b.fidelity_sd[i]).unwrap_or(f64::NAN);
                let _ = writeln!(s, "{l},{:.12},{:.12}", fids[i], sd);
            }
            ctx.emit("tomo", &s)
        }
        Format::Json => ctx.emit_json(
            "tomo",
            &json!({ "density": rho.to_interleaved(), "fidelities": fids, "bootstrap": boot }),
        ),
    }
}

fn sequence_json(seq: &ElementSequence) -> Result<Value> {
    let elements: Vec<String> = seq.elements.iter().map(|e| e.to_string()).collect();
    Ok(json!({
        "elements": elements,
        "global_phase": [seq.global_phase.re, seq.global_phase.im],
        "scale": seq.scale,
        "residual": seq.residual()?,
    }))
}

fn compile_optics(ctx: &Ctx, t: &OpticsTarget) -> Result<()> {
    let mut extra = serde_json::Map::new();
    let seq = match t {
        OpticsTarget::Cn => {
            let cn = compile_cn()?;
            extra.insert("rho".into(), json!(cn.rho));
            extra.insert("reference_deviation".into(), json!(cn.reference_deviation));
            cn.sequence
        }
        OpticsTarget::Walk { phi, theta1 } => compile_walk_operator(&ctx.cfg.base.with_loop_point(*phi, *theta1))?,
        OpticsTarget::Rotation { theta } => compile_rotation(*theta),
        OpticsTarget::PhaseShift { k } => compile_phase_shift(*k),
        OpticsTarget::SymmetryBreak { phi } => compile_symmetry_break(*phi),
        OpticsTarget::GainLoss { gamma, transmittance } => {
            let g = match (gamma, transmittance.as_deref()) {
                (Some(g), _) => *g,
                (None, Some([t1, t2])) => gamma_from_transmittance(*t1, *t2)?,
                _ => ctx.cfg.base.gamma,
            };
            extra.insert("gamma".into(), json!(g));
            compile_gain_loss(g)?
        }
    };
    seq.verify(1e-9)?;
    match ctx.format {
        Format::Csv => ctx.emit("optics", &seq.to_element_list()),
        Format::Json => {
            let mut v = sequence_json(&seq)?;
            v.as_object_mut().expect("object").extend(extra);
            ctx.emit_json("optics", &v)
        }
    }
}

fn optimize(ctx: &Ctx, a: &OptimizeArgs) -> Result<()> {
    let cfg = OptimizeConfig {
        engine: a.engine.unwrap_or(ctx.cfg.engine),
        shape: ctx.cfg.loop_sel.shape(),
        base: ctx.cfg.base,
        seed: ctx.cfg.seed,
        restarts: a.restarts,
        max_evals: a.max_evals,
        ..OptimizeConfig::new(a.n)
    };
    if cfg.n < 2 || cfg.restarts == 0 || cfg.max_evals == 0 {
        return Err(config_err(
            "optimize-schedule needs N ≥ 2, restarts ≥ 1 and max-evals ≥ 1",
        ));
    }
    let res = optimize_schedule(&cfg)?;
    match ctx.format {
        Format::Csv => {
            let mut s = String::from("step,phase\n");
            for (i, p) in res.phases.iter().enumerate() {
                let _ = writeln!(s, "{i},{p:.12}");
            }
            ctx.emit("schedule", &s)
        }
        Format::Json => ctx.emit_json(
            "schedule",
            &json!({
                "N": cfg.n,
                "engine": cfg.engine,
                "phases": res.phases,
                "objective": res.objective,
                "initial_objective": res.initial_objective,
                "evaluations": res.evaluations,
            }),
        ),
    }
}

mod config;
mod manifest;
mod verify;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hardyheat::analysis::{compare_asymptotics, linear_reference, AsymMode};
use hardyheat::exponents::region_boundary_sample;
use hardyheat::io::{fmt17, write_field_csv};
use hardyheat::solver::*;
use hardyheat::{classify, compute_exponents, find_aux_r, Error, Parameters, RadialField};
use serde_json::json;

use config::RunConfig;
use manifest::RunManifest;

/// Bad flags, parameters or config files (exit 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A check the run was asked to make did not hold (exit 1).
#[derive(Debug)]
pub struct AssertionFailed(pub String);

impl std::fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailed {}

#[derive(Parser)]
#[command(name = "hardyheat", version, about = "Heat flows with inverse-square potential and power nonlinearity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exponents, region membership and auxiliary pair for one (parameters, q).
    Classify(ClassifyArgs),
    /// Region boundary polylines in the (alpha, 1/q) plane, one CSV per curve.
    Figure(FigureArgs),
    /// Single mild solve on [0, T].
    Solve(RunArgs),
    /// Gated global run over the configured horizons.
    Global(RunArgs),
    /// Run from homogeneous data and measure the self-similarity residual.
    Selfsim(RunArgs),
    /// Focusing run with blow-up detection.
    Focusing(RunArgs),
    /// Large-time comparison with the self-similar or linear reference.
    Asym(RunArgs),
    /// Property suites with seeded sampling.
    Verify(VerifyArgs),
    /// Re-execute the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct ParamFlags {
    #[arg(long)]
    d: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    params: ParamFlags,
    #[arg(long)]
    q: f64,
    /// Also write verdict.json and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long)]
    d: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Right end of the alpha axis; just below the last vertical by default.
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value = "figure")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    picard_tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// Norm index for focusing runs.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_parser = ["exponents", "semigroup", "solver", "asymptotics", "all"])]
    suite: String,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RerunArgs {
    manifest: PathBuf,
    /// Output directory for the new run; the recorded one by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("HARDYHEAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| anyhow::anyhow!("HARDYHEAT_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<AssertionFailed>().is_some() {
        return 1;
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::NoConvergence { .. }) => 3,
        Some(
            Error::GridUnderresolved(_)
            | Error::SmallnessGateFailed { .. }
            | Error::GateFailed(_)
            | Error::DegenerateFit(_)
            | Error::NoBlowupDetected(_),
        ) => 1,
        _ => 2,
    }
}

fn run(argv: Vec<String>) -> anyhow::Result<()> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => return Err(ConfigError(e.to_string()).into()),
        Err(e) => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
    };
    let ctx = Ctx { argv };
    match cli.command {
        Command::Classify(a) => cmd_classify(&ctx, a),
        Command::Figure(a) => cmd_figure(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Global(a) => cmd_global(&ctx, a),
        Command::Selfsim(a) => cmd_selfsim(&ctx, a),
        Command::Focusing(a) => cmd_focusing(&ctx, a),
        Command::Asym(a) => cmd_asym(&ctx, a),
        Command::Verify(a) => verify::cmd_verify(&ctx, &a.suite, a.samples, a.seed, a.out),
        Command::Rerun(a) => manifest::rerun(&a.manifest, a.out.as_deref(), run),
    }
}

/// Invocation context, recorded in manifests.
pub struct Ctx {
    argv: Vec<String>,
}

impl Ctx {
    fn command(&self) -> &str {
        self.argv.get(1).map(String::as_str).unwrap_or("")
    }

    /// Creates `out` and writes the manifest into it.
    pub fn open_output(
        &self,
        out: &Path,
        parameters: serde_json::Value,
        config: Option<&Path>,
        seed: Option<u64>,
    ) -> anyhow::Result<()> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let m = RunManifest::new(self.command(), &self.argv, parameters, config, out, seed);
        m.write(out)
    }
}

fn params_from_flags(f: &ParamFlags) -> anyhow::Result<Parameters> {
    let (Some(d), Some(a), Some(b), Some(alpha)) = (f.d, f.a, f.b, f.alpha) else {
        return Err(ConfigError("--d, --a, --b and --alpha are all required".into()).into());
    };
    Ok(Parameters::new(d, a, b, alpha, 0.0)?)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, s: &str) -> anyhow::Result<()> {
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn pairs_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{},{}", fmt17(*x), fmt17(*y));
    }
    s
}

fn cmd_classify(ctx: &Ctx, a: ClassifyArgs) -> anyhow::Result<()> {
    let p = params_from_flags(&a.params)?;
    if !(a.q >= 1.0) {
        return Err(ConfigError(format!("q = {} must be at least 1", a.q)).into());
    }
    let verdict = json!({
        "parameters": p,
        "exponents": compute_exponents(&p)?,
        "verdict": classify(&p, a.q)?,
        "aux_pair": find_aux_r(&p, a.q).ok(),
    });
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    if let Some(out) = &a.out {
        ctx.open_output(out, json!(p), None, None)?;
        write_json(&out.join("verdict.json"), &verdict)?;
    }
    Ok(())
}

fn cmd_figure(ctx: &Ctx, a: FigureArgs) -> anyhow::Result<()> {
    let (Some(d), Some(ca), Some(b)) = (a.d, a.a, a.b) else {
        return Err(ConfigError("--d, --a and --b are all required".into()).into());
    };
    // alpha is the horizontal axis here; any admissible value validates (d, a, b)
    let p = Parameters::new(d, ca, b, 1.0, 0.0)?;
    let e = compute_exponents(&p)?;
    if a.samples < 2 {
        return Err(ConfigError("--samples must be at least 2".into()).into());
    }
    let alpha_max = match a.alpha_max {
        Some(x) => x,
        None if e.s1t > 0.0 => 0.999 * (2.0 - p.b) / e.s1t,
        None => 8.0,
    };
    let n = a.samples as f64;
    let grid: Vec<f64> = (1..=a.samples).map(|k| alpha_max * k as f64 / n).collect();
    let curves = region_boundary_sample(p.d, p.a, p.b, &grid)?;
    ctx.open_output(&a.out, json!({ "d": d, "a": ca, "b": b, "alpha_max": alpha_max, "samples": a.samples }), None, None)?;
    for c in &curves {
        write_text(&a.out.join(format!("{}.csv", c.label)), &pairs_csv("alpha,inv_q", &c.points))?;
    }
    let labels: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
    println!("{}", serde_json::to_string(&json!({ "out": a.out, "curves": labels }))?);
    Ok(())
}

/// Config with command-line overrides applied.
fn resolve(a: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut c = RunConfig::load(a.config.as_deref())?;
    let f = &a.params;
    if let Some(d) = f.d {
        c.params.d = d;
    }
    if let Some(x) = f.a {
        c.params.a = x;
    }
    if let Some(x) = f.b {
        c.params.b = x;
    }
    if let Some(x) = f.alpha {
        c.params.alpha = x;
    }
    if let Some(x) = a.mu {
        c.params.mu = x;
    }
    if let Some(x) = a.t_final {
        c.solve.t_final = x;
    }
    if let Some(x) = a.steps {
        c.solve.steps = x;
    }
    if let Some(x) = a.picard_tol {
        c.solve.picard_tol = x;
    }
    if let Some(x) = a.omega {
        c.omega = x;
    }
    if let Some(x) = a.q {
        c.q = x;
    }
    c.parameters()?;
    c.solve.validate()?;
    Ok(c)
}

fn out_dir(a: &RunArgs, default: &str) -> PathBuf {
    a.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn start(ctx: &Ctx, a: &RunArgs, default: &str) -> anyhow::Result<(RunConfig, Parameters, PathBuf)> {
    start_with(ctx, a, default, |_| Ok(()))
}

fn start_with(
    ctx: &Ctx,
    a: &RunArgs,
    default: &str,
    adjust: impl FnOnce(&mut RunConfig) -> anyhow::Result<()>,
) -> anyhow::Result<(RunConfig, Parameters, PathBuf)> {
    let mut c = resolve(a)?;
    adjust(&mut c)?;
    let p = c.parameters()?;
    let out = out_dir(a, default);
    ctx.open_output(&out, serde_json::to_value(&c)?, a.config.as_deref(), None)?;
    write_json(&out.join("config.json"), &c)?;
    Ok((c, p, out))
}

fn write_solution(out: &Path, sol: &Solution) -> anyhow::Result<()> {
    write_text(&out.join("history.csv"), &sol.history_csv())?;
    write_text(&out.join("duhamel.csv"), &pairs_csv("t,residual", &sol.duhamel_residual))?;
    write_field_csv(sol.final_state(), &out.join("final.csv"))?;
    write_json(&out.join("picard.json"), &sol.picard_report)?;
    Ok(())
}

fn summary(sol: &Solution) -> serde_json::Value {
    json!({
        "t_final": sol.times.last(),
        "mu": sol.mu,
        "r_aux": sol.r_aux,
        "beta_aux": sol.beta_aux,
        "weighted_sup": sol.weighted_sup(),
        "max_duhamel_residual": sol.max_duhamel_residual(),
        "converged": sol.picard_report.iter().all(|r| r.converged),
    })
}

fn cmd_solve(ctx: &Ctx, a: RunArgs) -> anyhow::Result<()> {
    let (c, p, out) = start(ctx, &a, "out/solve")?;
    let phi = c.initial_data()?;
    let sol = picard_solve(&phi, &p, &c.solve)?;
    write_solution(&out, &sol)?;
    let s = summary(&sol);
    write_json(&out.join("report.json"), &s)?;
    println!("{s}");
    Ok(())
}

fn cmd_global(ctx: &Ctx, a: RunArgs) -> anyhow::Result<()> {
    let (c, p, out) = start(ctx, &a, "out/global")?;
    let phi = c.initial_data()?;
    let sol = global_solve(&phi, &p, &c.solve, &c.horizons)?;
    write_solution(&out, &sol)?;
    let s = summary(&sol);
    write_json(&out.join("report.json"), &s)?;
    println!("{s}");
    Ok(())
}

fn cmd_selfsim(ctx: &Ctx, a: RunArgs) -> anyhow::Result<()> {
    let (c, p, out) = start(ctx, &a, "out/selfsim")?;
    let g = c.make_grid()?;
    let rep = selfsimilar_solve(c.omega, &p, &c.solve, &g, &default_selfsimilar_horizons(), &c.probes)?;
    write_solution(&out, &rep.solution)?;
    write_field_csv(&rep.profile, &out.join("profile.csv"))?;
    write_text(&out.join("residuals.csv"), &pairs_csv("t,residual", &rep.residuals))?;
    let passed = rep.max_residual < c.residual_tol;
    let s = json!({
        "max_residual": rep.max_residual,
        "residual_tol": c.residual_tol,
        "passed": passed,
        "solution": summary(&rep.solution),
    });
    write_json(&out.join("report.json"), &s)?;
    println!("{s}");
    if !passed {
        return Err(AssertionFailed(format!(
            "self-similarity residual {:e} is not below {:e}",
            rep.max_residual, c.residual_tol
        ))
        .into());
    }
    Ok(())
}

fn cmd_focusing(ctx: &Ctx, a: RunArgs) -> anyhow::Result<()> {
    let explicit = a.mu.is_some();
    let (c, p, out) = start_with(ctx, &a, "out/focusing", |c| {
        if c.solve.mu.is_none() && !explicit {
            c.params.mu = 1.0;
        }
        if c.solve.mu.unwrap_or(c.params.mu) <= 0.0 {
            return Err(ConfigError("focusing runs need mu > 0".into()).into());
        }
        Ok(())
    })?;
    let phi = c.initial_data()?;
    let rep = focusing_run(&phi, &p, &c.solve, c.q)?;
    write_text(&out.join("history.csv"), &pairs_csv("t,norm_q", &rep.history))?;
    // Blow-up is reported, not guaranteed; only the rate is asserted.
    let (passed, detail) = match &rep.outcome {
        FocusingOutcome::Blowup(b) => {
            let bound = 0.75 * b.bound_exponent;
            (b.fit.exponent <= bound, json!({ "rate": b.fit.exponent, "rate_bound": bound }))
        }
        FocusingOutcome::NoBlowupDetected { .. } => (true, json!(null)),
    };
    let s = json!({ "q": rep.q, "outcome": rep.outcome, "rate_check": detail, "passed": passed });
    write_json(&out.join("report.json"), &s)?;
    println!("{s}");
    if !passed {
        return Err(AssertionFailed("blow-up rate is slower than the lower bound allows".into()).into());
    }
    Ok(())
}

fn cmd_asym(ctx: &Ctx, a: RunArgs) -> anyhow::Result<()> {
    let (c, p, out) = start(ctx, &a, "out/asym")?;
    let mode = match c.asym_mode.as_str() {
        "nonlinear" => AsymMode::Nonlinear,
        "linear" => AsymMode::Linear,
        m => return Err(ConfigError(format!("asym_mode must be \"nonlinear\" or \"linear\", got {m:?}")).into()),
    };
    let sigma = c.sigma.unwrap_or_else(|| p.scaling_exponent());
    let g = c.make_grid()?;
    let omega = c.omega;
    let phi = RadialField::from_fn(&g, |r| omega * r.max(1.0).powf(-sigma), Some(sigma))?;
    let eng = Engine::for_field(&phi, &p)?;
    let u = global_solve_with(&eng, &phi, &p, &c.solve, &c.horizons)?;
    let reference = match mode {
        AsymMode::Nonlinear => {
            let psi = RadialField::from_fn(&g, |r| omega * r.powf(-sigma), Some(sigma))?;
            global_solve_with(&eng, &psi, &p, &c.solve, &c.horizons)?
        }
        AsymMode::Linear => linear_reference(&u, &p, omega, sigma)?,
    };
    let reps = compare_asymptotics(&u, &reference, mode, &p, sigma, &c.q_list, c.window)?;
    write_solution(&out, &u)?;
    let mut csv = String::from("t,q,norm_u,norm_ref,norm_diff\n");
    for (i, &t) in u.times.iter().enumerate() {
        for &q in &c.q_list {
            let nu = hardyheat::lq_norm(&u.snapshots[i], q);
            let nr = hardyheat::lq_norm(&reference.snapshots[i], q);
            let nd = hardyheat::lq_norm(&u.snapshots[i].sub(&reference.snapshots[i])?, q);
            let _ = writeln!(csv, "{},{},{},{},{}", fmt17(t), fmt17(q), fmt17(nu), fmt17(nr), fmt17(nd));
        }
    }
    write_text(&out.join("norms.csv"), &csv)?;
    let passed = reps
        .iter()
        .all(|r| r.passed(c.min_margin) && r.sandwich_ratio < c.max_sandwich);
    let s = json!({ "sigma": sigma, "reports": reps, "passed": passed });
    write_json(&out.join("report.json"), &s)?;
    println!("{s}");
    if !passed {
        return Err(AssertionFailed("asymptotic margin or sandwich ratio out of bounds".into()).into());
    }
    Ok(())
}

mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sni_core::datagen::{generate_dataset, sample_boundary, DatasetParams};
use sni_core::fem::{l2_relative_error, solve_direct, Equation};
use sni_core::geometry::{random_simple_polygon, BoundingBox};
use sni_core::schwarz::{sni_run_spacetime, Init, LocalSolverKind, RunOptions, SniSolver, SpaceTimeConfig};
use sni_core::verify::{run_suite, test_mesh, test_problem, Suite};
use sni_core::{Mesh, ProblemSpec, Result, SniConfig, SniError};

use crate::io::{load_mesh, load_problem, load_vector, write_json, write_text};

#[derive(Parser, Debug)]
#[command(name = "sni", version, about = "Domain decomposition solves with exact, perturbed or learned local solvers")]
struct Cli {
    /// Worker threads for local solves and data generation.
    #[arg(long, global = true, env = "SNI_THREADS")]
    threads: Option<usize>,

    /// Output format for reports printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Direct,
    Sni,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random polygon and its mesh.
    GenShape(GenShapeArgs),
    /// Training records and manifest.
    GenData(GenDataArgs),
    /// Stationary solve, direct or by Schwarz iteration.
    Solve(SolveArgs),
    /// Heat equation solve, direct rollout or space-time Schwarz.
    SolveHeat(SolveHeatArgs),
    /// Acceptance checks.
    Verify(VerifyArgs),
    /// Iterations and error across one hyperparameter.
    Sweep(SweepArgs),
    /// Relative l2 error between two solution files.
    Error(ErrorArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenShapeArgs {
    #[arg(long, default_value_t = 300)]
    n_min: usize,
    #[arg(long, default_value_t = 1500)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also sample a problem of this kind on the mesh.
    #[arg(long)]
    equation: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    #[arg(long)]
    equation: String,
    #[arg(long)]
    shapes: usize,
    #[arg(long)]
    per_shape: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = sni_core::datagen::DEFAULT_EDGE_LENGTH)]
    edge_length: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SchwarzArgs {
    /// Number of subdomains.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Overlap depth in graph layers.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Step size; defaults to 0.8/K.
    #[arg(long)]
    tau: Option<f64>,
    /// Relative update tolerance; defaults by local solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = sni_core::schwarz::DEFAULT_MAX_OUTER)]
    max_iter: usize,
    /// exact, perturbed:<c>:<seed> or surrogate:<weights>
    #[arg(long, default_value = "exact")]
    local: String,
    #[arg(long, default_value_t = 0)]
    partition_seed: u64,
}

impl SchwarzArgs {
    fn config(&self) -> Result<SniConfig> {
        let local = LocalSolverKind::from_str(&self.local)?;
        let tau = self.tau.unwrap_or(0.8 / self.k.max(1) as f64);
        let mut cfg = SniConfig::new(self.k, self.depth, tau, local)?
            .with_max_outer(self.max_iter)?
            .with_partition_seed(self.partition_seed);
        if let Some(tol) = self.tol {
            cfg = cfg.with_outer_tol(tol)?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = Method::Sni)]
    method: Method,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[command(flatten)]
    schwarz: SchwarzArgs,
    /// zero or file:<path>
    #[arg(long, default_value = "zero")]
    init: String,
    /// Compare every iterate with the direct solution.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SolveHeatArgs {
    #[arg(long, value_enum, default_value_t = Method::Sni)]
    method: Method,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 4)]
    k_spatial: usize,
    #[arg(long, default_value_t = 2)]
    k_temporal: usize,
    /// Time-window overlap in steps.
    #[arg(long, default_value_t = 1)]
    delta_t_overlap: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Step size; defaults to 0.8/(K_s·K_t).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = sni_core::schwarz::DEFAULT_MAX_OUTER)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    partition_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SweepParam {
    K,
    #[value(alias = "depth")]
    D,
    Tau,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Mesh file; without it a random mesh is drawn from --seed.
    #[arg(long, requires = "problem")]
    mesh: Option<PathBuf>,
    #[arg(long, requires = "mesh")]
    problem: Option<PathBuf>,
    #[arg(long, default_value = "laplace_dirichlet")]
    equation: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    n_min: usize,
    #[arg(long, default_value_t = 1500)]
    n_max: usize,
    #[command(flatten)]
    schwarz: SchwarzArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ErrorArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

/// Outcome of a subcommand: `false` maps to a nonzero exit without an error line.
type Status = Result<bool>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Status {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(SniError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SniError::Config(e.to_string()))?;
    }
    let format = cli.format;
    match cli.command {
        Command::GenShape(a) => gen_shape(&a),
        Command::GenData(a) => gen_data(&a),
        Command::Solve(a) => solve(&a, format),
        Command::SolveHeat(a) => solve_heat(&a, format),
        Command::Verify(a) => verify(&a, format),
        Command::Sweep(a) => sweep(&a, format),
        Command::Error(a) => error(&a, format),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn gen_shape(a: &GenShapeArgs) -> Status {
    if a.n_min > a.n_max {
        return Err(SniError::Config(format!("--n-min {} exceeds --n-max {}", a.n_min, a.n_max)));
    }
    let (mesh, polygon_seed) = test_mesh(a.seed, a.n_min, a.n_max)?;
    let polygon = random_simple_polygon::<f64>(3, 12, &BoundingBox::unit_centered(), polygon_seed)?;
    let mut out = json!({
        "flags": a,
        "polygon_seed": polygon_seed,
        "polygon": polygon,
        "mesh": mesh,
    });
    if let Some(eq) = &a.equation {
        let eq = Equation::from_str(eq)?;
        out["spec"] = serde_json::to_value(sample_boundary::<f64>(eq, &mesh, a.seed)?)?;
    }
    write_json(&a.out, &out)?;
    print_json(&json!({"vertices": mesh.n_vertices(), "triangles": mesh.n_triangles(), "polygon_seed": polygon_seed}));
    Ok(true)
}

fn gen_data(a: &GenDataArgs) -> Status {
    let equation = Equation::from_str(&a.equation)?;
    if a.shapes == 0 || a.per_shape == 0 {
        return Err(SniError::Config("--shapes and --per-shape must be positive".into()));
    }
    if !(a.edge_length > 0.0 && a.edge_length.is_finite()) {
        return Err(SniError::Config(format!("--edge-length {} must be positive", a.edge_length)));
    }
    let mut params = DatasetParams::new(equation, a.shapes, a.per_shape);
    params.target_edge_length = a.edge_length;
    let manifest = generate_dataset(&params, a.seed, &a.out_dir)?;
    log::info!("wrote {} records to {}", manifest.count, a.out_dir.display());
    print_json(&json!({
        "count": manifest.count,
        "skipped": manifest.skipped.len(),
        "sha256": manifest.sha256,
    }));
    Ok(true)
}

fn parse_init(s: &str, n: usize) -> Result<Init<f64>> {
    if s == "zero" {
        return Ok(Init::ZeroInterior);
    }
    let path = s
        .strip_prefix("file:")
        .ok_or_else(|| SniError::Config(format!("bad --init {s:?}; expected zero or file:<path>")))?;
    let u = load_vector(path.as_ref())?;
    if u.len() != n {
        return Err(SniError::LengthMismatch { expected: n, got: u.len() });
    }
    Ok(Init::Provided(u))
}

fn load_pair(mesh: &std::path::Path, problem: &std::path::Path) -> Result<(Mesh, ProblemSpec)> {
    let mesh = load_mesh(mesh)?;
    let spec = load_problem(problem)?;
    spec.validate(&mesh)?;
    Ok((mesh, spec))
}

fn solve(a: &SolveArgs, format: Format) -> Status {
    let (mesh, spec) = load_pair(&a.mesh, &a.problem)?;
    let start = Instant::now();
    if a.method == Method::Direct {
        let u = solve_direct(&mesh, &spec)?;
        let seconds = start.elapsed().as_secs_f64();
        write_json(&a.out, &json!({"flags": a, "converged": true, "u": u, "seconds": seconds}))?;
        print_json(&json!({"method": "direct", "converged": true, "seconds": seconds}));
        return Ok(true);
    }
    if spec.equation == Equation::Heat {
        return Err(SniError::Config("heat problems are solved with solve-heat".into()));
    }
    let cfg = a.schwarz.config()?.with_init(parse_init(&a.init, mesh.n_vertices())?);
    let truth = if a.oracle { Some(solve_direct(&mesh, &spec)?) } else { None };
    let solver = SniSolver::new(cfg, &mesh, &spec)?;
    let run = solver.run(RunOptions {
        oracle: truth.as_deref(),
        target_error: None,
    })?;
    let d = &run.diagnostics;
    let final_error = match &truth {
        Some(t) => Some(l2_relative_error(&run.u, t)?),
        None => None,
    };
    write_json(
        &a.out,
        &json!({
            "flags": a,
            "converged": d.converged,
            "u": run.u,
            "diagnostics": d,
            "final_error": final_error,
            "parts": run.decomposition.parts.iter().map(Vec::len).collect::<Vec<_>>(),
        }),
    )?;
    match format {
        Format::Csv => print!("{}", d.convergence_csv()),
        Format::Json => print_json(&json!({
            "method": "sni",
            "converged": d.converged,
            "iterations": d.iterations,
            "rho_hat": d.rho_hat,
            "overlap_factor": d.overlap_factor,
            "final_error": final_error,
            "timings": d.timings,
        })),
    }
    Ok(d.converged)
}

fn solve_heat(a: &SolveHeatArgs, format: Format) -> Status {
    let (mesh, spec) = load_pair(&a.mesh, &a.problem)?;
    if spec.equation != Equation::Heat {
        return Err(SniError::Config(format!("solve-heat needs a heat problem, got {}", spec.equation)));
    }
    let start = Instant::now();
    if a.method == Method::Direct {
        let u = solve_direct(&mesh, &spec)?;
        let seconds = start.elapsed().as_secs_f64();
        write_json(
            &a.out,
            &json!({"flags": a, "converged": true, "levels": spec.n_levels(), "u": u, "seconds": seconds}),
        )?;
        print_json(&json!({"method": "direct", "converged": true, "seconds": seconds}));
        return Ok(true);
    }
    let parts = a.k_spatial.max(1) * a.k_temporal.max(1);
    let tau = a.tau.unwrap_or(0.8 / parts as f64);
    let mut cfg = SpaceTimeConfig::new(a.k_spatial, a.k_temporal, a.delta_t_overlap, a.depth, tau)?
        .with_max_outer(a.max_iter)?
        .with_partition_seed(a.partition_seed);
    if let Some(tol) = a.tol {
        cfg = cfg.with_outer_tol(tol)?;
    }
    let run = sni_run_spacetime(&cfg, &mesh, &spec, RunOptions::default())?;
    let d = &run.diagnostics;
    write_json(
        &a.out,
        &json!({
            "flags": a,
            "converged": d.converged,
            "levels": spec.n_levels(),
            "windows": run.windows,
            "u": run.u,
            "diagnostics": d,
        }),
    )?;
    match format {
        Format::Csv => print!("{}", d.convergence_csv()),
        Format::Json => print_json(&json!({
            "method": "sni",
            "converged": d.converged,
            "iterations": d.iterations,
            "windows": run.windows,
            "rho_hat": d.rho_hat,
        })),
    }
    Ok(d.converged)
}

fn verify(a: &VerifyArgs, format: Format) -> Status {
    let suite = Suite::from_str(&a.suite).map_err(SniError::Config)?;
    let reports = run_suite(suite);
    let passed = reports.iter().all(|r| r.passed);
    match format {
        Format::Json => print_json(&json!({"suite": a.suite, "passed": passed, "criteria": reports})),
        Format::Csv => {
            println!("id,name,passed,seconds");
            for r in &reports {
                println!("{},{},{},{:.3}", r.id, r.name, r.passed, r.seconds);
            }
        }
    }
    for r in &reports {
        eprintln!("{r}");
    }
    Ok(passed)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: f64,
    iterations: f64,
    final_error: f64,
    wall_time: f64,
    converged: usize,
}

fn sweep_config(a: &SweepArgs, value: f64, repeat: usize) -> Result<SniConfig> {
    let mut s = a.schwarz.clone();
    let as_count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(SniError::Config(format!("{v} is not a valid count")))
        }
    };
    match a.param {
        SweepParam::K => s.k = as_count(value)?,
        SweepParam::D => s.depth = as_count(value)?,
        SweepParam::Tau => s.tau = Some(value),
    }
    s.partition_seed = s.partition_seed.wrapping_add(repeat as u64);
    s.config()
}

fn sweep(a: &SweepArgs, format: Format) -> Status {
    if a.repeat == 0 {
        return Err(SniError::Config("--repeat must be at least 1".into()));
    }
    let (mesh, spec) = match (&a.mesh, &a.problem) {
        (Some(m), Some(p)) => load_pair(m, p)?,
        _ => {
            let (mesh, _) = test_mesh(a.seed, a.n_min, a.n_max)?;
            let spec = test_problem(Equation::from_str(&a.equation)?, &mesh, a.seed)?;
            (mesh, spec)
        }
    };
    if spec.equation == Equation::Heat {
        return Err(SniError::Config("sweeps run stationary problems".into()));
    }
    // validate every configuration before the first run
    for &v in &a.values {
        sweep_config(a, v, 0)?;
    }
    let truth = solve_direct(&mesh, &spec)?;
    let mut rows = Vec::new();
    for &value in &a.values {
        let (mut iterations, mut error, mut time, mut converged) = (0.0, 0.0, 0.0, 0);
        for r in 0..a.repeat {
            let start = Instant::now();
            let run = SniSolver::new(sweep_config(a, value, r)?, &mesh, &spec)?.run(RunOptions::default())?;
            time += start.elapsed().as_secs_f64();
            iterations += run.diagnostics.iterations as f64;
            error += l2_relative_error(&run.u, &truth)?;
            converged += usize::from(run.diagnostics.converged);
        }
        let n = a.repeat as f64;
        log::info!("{:?} = {value}: {} iterations", a.param, iterations / n);
        rows.push(SweepRow {
            value,
            iterations: iterations / n,
            final_error: error / n,
            wall_time: time / n,
            converged,
        });
    }
    let text = match format {
        Format::Csv => {
            let mut s = String::from("value,iterations,final_error,wall_time,converged\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{:e},{:.6},{}\n",
                    r.value, r.iterations, r.final_error, r.wall_time, r.converged
                ));
            }
            s
        }
        Format::Json => json!({"flags": a, "n_vertices": mesh.n_vertices(), "rows": rows}).to_string() + "\n",
    };
    match &a.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(true)
}

fn error(a: &ErrorArgs, format: Format) -> Status {
    let pred = load_vector(&a.pred)?;
    let truth = load_vector(&a.truth)?;
    let err = l2_relative_error(&pred, &truth)?;
    match format {
        Format::Json => print_json(&json!({"l2_relative_error": err})),
        Format::Csv => println!("l2_relative_error\n{err:?}"),
    }
    Ok(true)
}

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mlblue::baselines::{multi_output_baseline, Method};
use mlblue::harness::{
    emit_outputs, load_problem, run_estimate, serve, simulate_baseline, summarize, BenchmarkReport,
    BenchmarkRow, EvaluatorConfig, Format, ModeConfig, Output, Problem, ProblemConfig, RunOptions,
    SyntheticEvaluator,
};
use mlblue::mosap::{integer_projection, pareto_sweep, solve_mosap, Allocation, AllocationRecord, Mode, SolverReport};
use mlblue::sdp::{SolverSettings, SolverStatus};
use mlblue::Error;

#[derive(Parser)]
#[command(name = "mlblue", version, about = "Optimal multilevel BLUE sample allocation and estimation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the sample allocation problem in the configured mode.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Report the continuous solution without integer projection.
        #[arg(long)]
        continuous: bool,
    },
    /// Sweep the Pareto frontier over the configured tau_tilde grid.
    Pareto {
        #[command(flatten)]
        common: Common,
    },
    /// Run the estimator with an integer allocation.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Allocation JSON to use instead of solving.
        #[arg(long)]
        allocation: Option<PathBuf>,
    },
    /// Compare the estimator with MC, MLMC and MFMC at equal tolerance.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Serve the configured synthetic suite over the evaluator protocol.
    #[command(hide = true)]
    ServeSynthetic {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; `.csv` selects CSV for frontiers. Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Estimator replications (default from the problem file).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    feastol: f64,
    #[arg(long = "gap-tol", default_value_t = 1e-8)]
    gap_tol: f64,
}

impl Common {
    fn settings(&self) -> anyhow::Result<SolverSettings> {
        if !(self.feastol > 0.0 && self.gap_tol > 0.0) {
            return Err(Error::Config {
                pointer: String::new(),
                message: "--feastol and --gap-tol must be positive".into(),
            }
            .into());
        }
        Ok(SolverSettings {
            feas_tol: self.feastol,
            gap_tol: self.gap_tol,
            ..SolverSettings::default()
        })
    }

    fn load(&self) -> anyhow::Result<ProblemConfig> {
        let mut cfg = load_problem(&self.config).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                pointer: String::new(),
                message: format!("cannot read {}: {io}", self.config.display()),
            },
            e => e,
        })?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            if reps == 0 {
                return Err(Error::Config {
                    pointer: "/replications".into(),
                    message: "--reps must be positive".into(),
                }
                .into());
            }
            cfg.replications = reps;
        }
        Ok(cfg)
    }

    fn format(&self) -> Format {
        self.output.as_deref().map_or(Format::Json, Format::from_path)
    }

    fn emit(&self, output: Output) -> anyhow::Result<()> {
        emit_outputs(&output, self.output.as_deref(), self.format())
            .with_context(|| format!("writing {}", self.output.as_deref().unwrap_or(Path::new("-")).display()))
    }
}

fn integer_allocation(problem: &Problem) -> anyhow::Result<Allocation> {
    let continuous = solve_mosap(&problem.spec)?;
    Ok(integer_projection(&continuous, &problem.spec)?)
}

fn allocate(common: &Common, continuous: bool) -> anyhow::Result<()> {
    let cfg = common.load()?;
    if let ModeConfig::Pareto(p) = &cfg.mode {
        if p.tau_tilde.len() > 1 {
            log::warn!("allocate solves the first tau_tilde only; use `pareto` for the sweep");
        }
    }
    let evaluator = cfg.evaluator()?;
    let problem = cfg.resolve(evaluator.as_deref(), common.settings()?)?;
    let alloc = if continuous {
        solve_mosap(&problem.spec)?
    } else {
        integer_allocation(&problem)?
    };
    common.emit(Output::Allocation(&alloc.record(None)))
}

fn pareto(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let ModeConfig::Pareto(p) = &cfg.mode else {
        bail!(Error::Config {
            pointer: "/mode".into(),
            message: "the pareto command needs a pareto mode with a tau_tilde grid".into(),
        });
    };
    let evaluator = cfg.evaluator()?;
    let problem = cfg.resolve(evaluator.as_deref(), common.settings()?)?;
    let results = pareto_sweep(&problem.spec, &p.tau_tilde);
    let mut points = Vec::new();
    let mut first_error = None;
    for (tt, r) in results {
        match r {
            Ok(point) => points.push(point),
            Err(e) => {
                eprintln!("tau_tilde {tt}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    if points.is_empty() {
        if let Some(e) = first_error {
            return Err(e.into());
        }
    }
    common.emit(Output::Frontier(&points))
}

fn estimate(common: &Common, allocation: Option<&Path>) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let evaluator = cfg.evaluator()?.ok_or_else(|| Error::Config {
        pointer: "/evaluator".into(),
        message: "estimation needs an evaluator".into(),
    })?;
    let problem = cfg.resolve(Some(evaluator.as_ref()), common.settings()?)?;
    let alloc = match allocation {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config {
                    pointer: String::new(),
                    message: format!("cannot read {}: {e}", path.display()),
                })?;
            let rec = AllocationRecord::from_json(&text)?;
            if rec.n.iter().any(|c| c.value().fract() != 0.0) {
                bail!(Error::Config {
                    pointer: "/n".into(),
                    message: "estimation needs integer sample counts".into(),
                });
            }
            let n = rec.to_allocation_vector(&problem.spec)?;
            let report = SolverReport {
                iterations: rec.solver.iterations,
                gap: rec.solver.gap,
                status: SolverStatus::Optimal,
            };
            Allocation::evaluate(&problem.spec, n, true, report)?
        }
        None => integer_allocation(&problem)?,
    };
    let opts = RunOptions {
        seed: cfg.seed,
        replications: cfg.replications,
    };
    let report = run_estimate(&problem.spec, &alloc, evaluator.as_ref(), opts)?;
    common.emit(Output::Report(&report))
}

fn benchmark(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let evaluator = cfg.evaluator()?;
    let problem = cfg.resolve(evaluator.as_deref(), common.settings()?)?;
    let tolerance = match &problem.spec.mode {
        Mode::Tolerance(eps2) => eps2.clone(),
        _ => integer_allocation(&problem)?.per_output_variance,
    };
    let spec = problem.spec.clone().with_mode(Mode::Tolerance(tolerance.clone()))?;
    let opts = RunOptions {
        seed: cfg.seed,
        replications: cfg.replications,
    };
    let mut rows = Vec::new();

    let blue = solve_mosap(&spec).and_then(|c| integer_projection(&c, &spec));
    rows.push(match blue {
        Ok(a) => {
            let empirical = match evaluator.as_deref() {
                Some(ev) if opts.replications > 1 => run_estimate(&spec, &a, ev, opts)?.empirical_variance,
                _ => None,
            };
            BenchmarkRow {
                method: "mlblue".into(),
                allocation: Some(a.record(Some("mlblue"))),
                total_cost: Some(a.total_cost),
                predicted_variance: Some(a.per_output_variance.clone()),
                empirical_variance: empirical,
                error: None,
            }
        }
        Err(e) => error_row("mlblue", e),
    });

    for method in [Method::Mc, Method::Mlmc, Method::Mfmc] {
        match multi_output_baseline(method, &problem.models, &problem.store, &tolerance) {
            Ok(b) => {
                let empirical = match evaluator.as_deref() {
                    Some(ev) if opts.replications > 1 => {
                        summarize(&simulate_baseline(&b, &problem.models, ev, opts)?).1
                    }
                    _ => None,
                };
                rows.push(BenchmarkRow {
                    method: method.name().into(),
                    allocation: Some(b.record()),
                    total_cost: Some(b.total_cost),
                    predicted_variance: Some(b.predicted_variance.clone()),
                    empirical_variance: empirical,
                    error: None,
                });
            }
            Err(e) => rows.push(error_row(method.name(), e)),
        }
    }
    common.emit(Output::Benchmark(&BenchmarkReport { tolerance, rows }))
}

fn error_row(method: &str, e: Error) -> BenchmarkRow {
    BenchmarkRow {
        method: method.into(),
        allocation: None,
        total_cost: None,
        predicted_variance: None,
        empirical_variance: None,
        error: Some(e.to_string()),
    }
}

fn serve_synthetic(config: &Path) -> anyhow::Result<()> {
    let cfg = load_problem(config)?;
    let Some(EvaluatorConfig::Synthetic(suite)) = &cfg.evaluator else {
        bail!(Error::Config {
            pointer: "/evaluator".into(),
            message: "serve-synthetic needs a synthetic evaluator".into(),
        });
    };
    let stdin = std::io::stdin();
    serve(
        &SyntheticEvaluator::new(suite.clone()),
        BufReader::new(stdin.lock()),
        std::io::stdout().lock(),
    )?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Solver { .. }) => 3,
        Some(Error::Evaluator { .. } | Error::Protocol(_)) => 4,
        Some(Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Allocate { common, continuous } => allocate(common, *continuous),
        Cmd::Pareto { common } => pareto(common),
        Cmd::Estimate { common, allocation } => estimate(common, allocation.as_deref()),
        Cmd::Benchmark { common } => benchmark(common),
        Cmd::ServeSynthetic { config } => serve_synthetic(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

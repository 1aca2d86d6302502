use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use schauder_core::coefficients::check_parabolicity;
use schauder_core::halfline::{kernel_mass, poisson_kernel, KernelQuadrature};
use schauder_core::lab::{run_with_workers, ExperimentConfig, ExperimentKind, Overrides};

/// Exit code for configuration and runtime errors; study failures exit with their count.
const ERROR_EXIT: u8 = 100;

#[derive(Parser)]
#[command(name = "lab", version, about = "Numerical studies for stochastic parabolic Dirichlet problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Half-line kernel: heat identity, boundary recovery, lemma ratio.
    #[command(name = "halfline_lemma")]
    HalflineLemma(RunArgs),
    /// Stability of ∂²v in the boundary data.
    Stability(RunArgs),
    /// Boundary profile of D₁₁u with tangential against normal noise.
    Compatibility(RunArgs),
    /// Empirical Schauder ratio across refinement levels.
    #[command(name = "schauder_ratio")]
    SchauderRatio(RunArgs),
    /// Successive differences of the continuity iteration.
    Continuity(RunArgs),
    /// Decomposition pipeline boundary residual.
    Pipeline(RunArgs),
    /// Evaluate the half-line Poisson kernel.
    Kernel {
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
        /// Also print the time integral of the kernel at `y`.
        #[arg(long)]
        mass: bool,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config; the bundled one for the experiment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    salt: Option<u64>,
    /// Output directory.
    #[arg(long, env = "LAB_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write long-format plot data.
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::HalflineLemma(a) => run(ExperimentKind::HalflineLemma, a),
        Command::Stability(a) => run(ExperimentKind::Stability, a),
        Command::Compatibility(a) => run(ExperimentKind::Compatibility, a),
        Command::SchauderRatio(a) => run(ExperimentKind::SchauderRatio, a),
        Command::Continuity(a) => run(ExperimentKind::Continuity, a),
        Command::Pipeline(a) => run(ExperimentKind::Pipeline, a),
        Command::Kernel { s, y, mass } => kernel(s, y, mass),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> schauder_core::Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::builtin(kind),
    };
    if config.experiment != kind {
        return Err(schauder_core::Error::Config(format!(
            "config is for {}, but {kind} was requested",
            config.experiment
        )));
    }
    config.apply(&Overrides {
        seed: args.seed,
        salt: args.salt,
        levels: args.levels,
        paths: args.paths,
    });
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = args
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("lab-out"));
    let plot = args.plot || config.output.plot;

    let mut report = run_with_workers(&config, workers)?;
    let mut echo = BTreeMap::new();
    echo.insert("experiment".to_string(), kind.to_string());
    echo.insert(
        "config".to_string(),
        args.config.as_ref().map_or("<builtin>".into(), |p| p.display().to_string()),
    );
    for (key, value) in [
        ("seed", args.seed.map(|v| v.to_string())),
        ("salt", args.salt.map(|v| v.to_string())),
        ("levels", args.levels.map(|v| v.to_string())),
        ("paths", args.paths.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
    ] {
        echo.insert(key.to_string(), value.unwrap_or_default());
    }
    echo.insert("out".to_string(), out.display().to_string());
    echo.insert("plot".to_string(), plot.to_string());
    report.invocation = echo;

    let written = report.write(&out, plot)?;
    for v in &report.verdicts {
        let tag = match (v.passed, v.trivial) {
            (true, false) => "PASS",
            (true, true) => "PASS (trivial)",
            (false, _) => "FAIL",
        };
        println!("{tag} {}: {}", v.criterion, v.detail);
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!("{kind} finished in {:.2}s on {workers} worker(s)", report.wall_clock_s);
    let failures = report.failures();
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} verdict(s) failed:", failures.len());
    for v in &failures {
        eprintln!("  {}", v.criterion);
    }
    Ok(ExitCode::from(failures.len().min(ERROR_EXIT as usize - 1) as u8))
}

fn kernel(s: f64, y: f64, mass: bool) -> schauder_core::Result<ExitCode> {
    println!("P({s}, {y}) = {:.17e}", poisson_kernel(s, y)?);
    if mass {
        let m = kernel_mass(y, &KernelQuadrature::default())?;
        println!("mass({y}) = {:.17e} (error estimate {:.3e})", m.value, m.error);
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(path: PathBuf) -> schauder_core::Result<ExitCode> {
    let config = ExperimentConfig::load(&path)?;
    config.validate()?;
    println!("{}: valid {} config", path.display(), config.experiment);
    if let Some(c) = &config.coefficients {
        let report = check_parabolicity(&c.build(config.grid.dim)?);
        println!(
            "parabolicity margins: lower {:e}, upper {:e}",
            report.lower_margin, report.upper_margin
        );
    }
    let levels = config.level_grids()?;
    for (k, g) in levels.iter().enumerate() {
        println!("level {k}: {}", g.grid_id());
    }
    Ok(ExitCode::SUCCESS)
}

//! Command-line front end: run JSON experiment configs, canonical suites,
//! or single experiments assembled from flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cat0lab::cli::{self, ExperimentConfig, ExperimentKind, SpaceSource, TargetSpec};
use cat0lab::conformal::Quadrature;
use cat0lab::fields::FieldRule;
use cat0lab::models::ModelSpec;
use cat0lab::pipeline::GammaSpec;

#[derive(Parser)]
#[command(name = "lab", about = "numerical laboratory for conformal deformations of CAT(0) spaces", version)]
struct Cli {
    /// Thread count override (also CAT0LAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON experiment config.
    Run {
        config: PathBuf,
    },
    /// Run a canonical config bundle: oracle, theorem, negative-controls, all.
    Suite {
        name: String,
        /// Directory for per-member reports and CSV evidence.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conformally deform a space by a field rule.
    Deform(CommonArgs),
    /// Comparison-triangle scan of a space, optionally deformed first.
    Cat0Scan(CommonArgs),
    /// Harmonic extension of boundary data into a target.
    Dirichlet(CommonArgs),
    /// Least-energy spanning of a curve.
    Plateau(CommonArgs),
    /// Full construction: spanning map, factor, pullback, majorization,
    /// deformation scans.
    Pipeline(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model recipe or space file: inline JSON or a path.
    #[arg(long)]
    space: String,
    /// Field rule as inline JSON.
    #[arg(long)]
    field: Option<String>,
    /// Second field rule as inline JSON (composition law).
    #[arg(long)]
    field2: Option<String>,
    /// Deform by e^field instead of the field itself.
    #[arg(long)]
    exponentiate: bool,
    #[arg(long)]
    quadrature: Option<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    triangles: Option<usize>,
    #[arg(long)]
    side_points: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Tolerance in units of the coarse mesh scale.
    #[arg(long)]
    tol_h: Option<f64>,
    /// Chart point whose nearest vertex is removed before deforming.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    puncture: Option<Vec<f64>>,
    /// euclidean-plane or hyperbolic-plane.
    #[arg(long)]
    target: Option<String>,
    /// Boundary images as inline JSON array of target points.
    #[arg(long)]
    boundary: Option<String>,
    /// Circle radius for the curve.
    #[arg(long)]
    gamma_radius: Option<f64>,
    /// Curve samples as inline JSON array of target points.
    #[arg(long)]
    gamma_points: Option<String>,
    /// gauss-seidel or jacobi.
    #[arg(long)]
    mode: Option<String>,
    /// Run past a failed convexity pretest.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Report JSON output path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV evidence output path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Deformed space output path.
    #[arg(long)]
    space_out: Option<PathBuf>,
}

fn parse_inline<T: serde::de::DeserializeOwned>(
    what: &str,
    text: &str,
) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("field {what}: {e}"))
}

fn config_from(kind: ExperimentKind, a: CommonArgs) -> Result<ExperimentConfig, String> {
    let space: SpaceSource = if a.space.trim_start().starts_with('{') {
        SpaceSource::Model(parse_inline::<ModelSpec>("space", &a.space)?)
    } else {
        SpaceSource::Path(a.space.clone())
    };
    let field: Option<FieldRule> = match &a.field {
        Some(t) => Some(parse_inline("field", t)?),
        None => None,
    };
    let field2: Option<FieldRule> = match &a.field2 {
        Some(t) => Some(parse_inline("field2", t)?),
        None => None,
    };
    let quadrature: Option<Quadrature> = match &a.quadrature {
        Some(t) => Some(parse_inline("quadrature", &format!("\"{t}\""))?),
        None => None,
    };
    let target: Option<TargetSpec> = match &a.target {
        Some(t) => Some(parse_inline("target", &format!("\"{t}\""))?),
        None => None,
    };
    let mode = match &a.mode {
        Some(t) => Some(parse_inline("mode", &format!("\"{t}\""))?),
        None => None,
    };
    let boundary = match &a.boundary {
        Some(t) => Some(parse_inline("boundary", t)?),
        None => None,
    };
    let gamma = match (&a.gamma_points, a.gamma_radius) {
        (Some(t), _) => Some(GammaSpec::Points { points: parse_inline("gamma-points", t)? }),
        (None, Some(radius)) => Some(GammaSpec::Circle { radius }),
        (None, None) => None,
    };
    Ok(ExperimentConfig {
        version: cli::CONFIG_VERSION,
        experiment: kind,
        seed: a.seed,
        space: Some(space),
        field,
        field2,
        exponentiate: if a.exponentiate { Some(true) } else { None },
        quadrature,
        triangles: a.triangles,
        side_points: a.side_points,
        pairs: a.pairs,
        tol: a.tol,
        tol_h: a.tol_h,
        puncture: a.puncture.map(|p| [p[0], p[1]]),
        target,
        boundary,
        gamma,
        mode,
        force: if a.force { Some(true) } else { None },
        max_outer: a.max_outer,
        expect: None,
        report: a.report,
        csv: a.csv,
        space_out: a.space_out,
    })
}

fn execute(command: Command) -> Result<i32, String> {
    let (status, envelope) = match command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let parsed = cli::parse_config(&text).map_err(|e| e.to_string())?;
            cli::run(&parsed).map_err(|e| e.to_string())?
        }
        Command::Suite { name, out } => {
            cli::suite(&name, out.as_deref()).map_err(|e| e.to_string())?
        }
        Command::Deform(a) => run_flags(ExperimentKind::Deform, a)?,
        Command::Cat0Scan(a) => run_flags(ExperimentKind::Cat0Scan, a)?,
        Command::Dirichlet(a) => run_flags(ExperimentKind::Dirichlet, a)?,
        Command::Plateau(a) => run_flags(ExperimentKind::Plateau, a)?,
        Command::Pipeline(a) => run_flags(ExperimentKind::Pipeline, a)?,
    };
    println!("{}", serde_json::to_string_pretty(&envelope).expect("report serializes"));
    Ok(status)
}

fn run_flags(kind: ExperimentKind, a: CommonArgs) -> Result<(i32, serde_json::Value), String> {
    let config = config_from(kind, a)?;
    cli::run(&config).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("CAT0LAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(1) => ExitCode::from(1),
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

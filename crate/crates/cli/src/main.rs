use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde::de::DeserializeOwned;

use spectral_ascent::ascent::{ExperimentConfig, RunStatus, Trajectory};
use spectral_ascent::cones::{self, ConeSpec, CouplingFamily};
use spectral_ascent::direction::{optimal_direction, DirectionKind};
use spectral_ascent::kernel::{self, ModeContribution};
use spectral_ascent::{ConstraintOperator, SymmetricMatrix};

#[derive(Parser)]
#[command(name = "spectral-ascent", version, about = "Constrained ascent directions, rule kernels and cone thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal unit-effort direction for an operator and gradient.
    Direction(OperatorInput),
    /// Rank-k truncation of the pseudoinverse and its residual.
    Compress(CompressArgs),
    /// Bisect for the coupling threshold of a cone family.
    Threshold(ThresholdArgs),
    /// Monte-Carlo compatibility curve of a cone family.
    PhiCurve(PhiCurveArgs),
    /// Run an ascent experiment from a JSON config.
    Optimize(OptimizeArgs),
}

#[derive(Args)]
struct OperatorInput {
    /// Matrix file: {"dim": n, "entries": [[...], ...]}
    #[arg(long)]
    operator: PathBuf,
    /// Gradient file: JSON array of numbers
    #[arg(long)]
    gradient: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("rank").args(["k", "eps", "sweep"]).required(true)))]
struct CompressArgs {
    #[command(flatten)]
    input: OperatorInput,
    /// Number of leading modes to keep
    #[arg(long)]
    k: Option<usize>,
    /// Keep the fewest modes whose operator-norm error is at most this
    #[arg(long)]
    eps: Option<f64>,
    /// Print the error-versus-k table as CSV instead
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Cone file: JSON list of {"axis": [...], "half_angle_deg": x}
    #[arg(long)]
    cones: PathBuf,
    /// Bracket width at termination (radians)
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args)]
struct PhiCurveArgs {
    #[arg(long)]
    cones: PathBuf,
    /// Largest coupling level (radians)
    #[arg(long)]
    gamma_max: f64,
    /// Number of grid intervals; the curve has steps + 1 points
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the trace path given in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_operator(input: &OperatorInput) -> Result<(ConstraintOperator, Vec<f64>)> {
    let matrix: SymmetricMatrix = read_json(&input.operator)?;
    let gradient: Vec<f64> = read_json(&input.gradient)?;
    if gradient.len() != matrix.dim() {
        bail!("gradient has {} entries but the operator is {}x{}", gradient.len(), matrix.dim(), matrix.dim());
    }
    Ok((ConstraintOperator::new(matrix)?, gradient))
}

fn load_family(path: &Path) -> Result<CouplingFamily> {
    let specs: Vec<ConeSpec> = read_json(path)?;
    Ok(CouplingFamily::from_specs(&specs)?)
}

#[derive(Serialize)]
struct DirectionOutput {
    kind: DirectionKind,
    direction: Option<Vec<f64>>,
    gain: f64,
}

fn direction(args: &OperatorInput) -> Result<()> {
    let (h, g) = load_operator(args)?;
    let r = optimal_direction(&h, &g)?;
    print_json(&DirectionOutput {
        kind: r.kind,
        direction: r.direction,
        gain: r.first_order_gain,
    })
}

#[derive(Serialize)]
struct CompressOutput {
    k: usize,
    rank: usize,
    op_error: f64,
    leading_mode_gain: f64,
    residual_norm_sq: f64,
    per_mode: Vec<ModeContribution>,
}

fn compress(args: &CompressArgs) -> Result<()> {
    let (h, g) = load_operator(&args.input)?;
    let spectrum = h.spectrum();
    if args.sweep {
        let mut w = csv::Writer::from_writer(io::stdout().lock());
        for row in kernel::error_sweep(spectrum, &g)? {
            w.serialize(row)?;
        }
        w.flush()?;
        return Ok(());
    }
    let k = match (args.k, args.eps) {
        (Some(k), _) => k,
        (None, Some(eps)) => kernel::smallest_k_for_error(spectrum, eps),
        (None, None) => unreachable!("clap requires one of --k, --eps, --sweep"),
    };
    let kernel = kernel::truncate(spectrum, k)?;
    let (_, report) = kernel.apply_with_residual(&g)?;
    print_json(&CompressOutput {
        k,
        rank: spectrum.rank(),
        op_error: kernel.op_error(),
        leading_mode_gain: kernel.leading_mode_gain(),
        residual_norm_sq: report.residual_norm_sq,
        per_mode: report.per_mode,
    })
}

fn threshold(args: &ThresholdArgs) -> Result<()> {
    let family = load_family(&args.cones)?;
    print_json(&cones::find_gamma_star(&family, args.tol)?)
}

#[derive(Serialize)]
struct PhiRow {
    gamma: f64,
    phi: f64,
    stderr: f64,
}

fn phi_curve(args: &PhiCurveArgs) -> Result<()> {
    let family = load_family(&args.cones)?;
    let grid = cones::uniform_grid(args.gamma_max, args.steps)?;
    let curve = cones::phi_curve(&family, &grid, args.samples, args.seed)?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    for p in curve {
        w.serialize(PhiRow {
            gamma: p.gamma,
            phi: p.estimate,
            stderr: p.std_error,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace<W: Write>(sink: W, trajectory: &Trajectory, dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["step".to_string()];
    header.extend((0..dim).map(|i| format!("theta{i}")));
    header.extend(["J", "C", "gain", "kind", "eta_eff"].map(String::from));
    w.write_record(&header)?;
    for r in &trajectory.records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.theta.iter().map(f64::to_string));
        row.push(r.objective.to_string());
        row.push(r.cost.map(|c| c.to_string()).unwrap_or_default());
        row.push(r.gain.to_string());
        row.push(
            match r.kind {
                DirectionKind::Optimal => "optimal",
                DirectionKind::Degenerate => "degenerate",
            }
            .to_string(),
        );
        row.push(r.eta_eff.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    status: RunStatus,
    steps_taken: usize,
    final_theta: &'a [f64],
    final_objective: f64,
    final_cost: Option<f64>,
    trace: String,
    agents: Option<&'a [String]>,
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let config: ExperimentConfig = read_json(&args.config)?;
    let trajectory = config.run()?;
    let dim = config.theta0.len();
    let out = args.out.clone().or_else(|| config.out.as_ref().map(PathBuf::from));
    let Some(path) = out else {
        return write_trace(io::stdout().lock(), &trajectory, dim);
    };
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_trace(io::BufWriter::new(file), &trajectory, dim)?;
    let last = trajectory.records.last().expect("a trajectory has at least one record");
    print_json(&OptimizeSummary {
        status: trajectory.status,
        steps_taken: trajectory.records.iter().filter(|r| r.eta_eff > 0.0).count(),
        final_theta: &last.theta,
        final_objective: last.objective,
        final_cost: last.cost,
        trace: path.display().to_string(),
        agents: config.agents.as_deref(),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Direction(a) => direction(&a),
        Command::Compress(a) => compress(&a),
        Command::Threshold(a) => threshold(&a),
        Command::PhiCurve(a) => phi_curve(&a),
        Command::Optimize(a) => optimize(&a),
    }
}

//! Command-line harness: instance generation, single runs, method comparisons,
//! certificate validation and alignment Monte Carlo.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use scpg::cubic::{run_baseline, starting_point, BaselineKind};
use scpg::experiment::{
    comparison_summary, gaussian_vector, generate_instance, run_comparison, validate_certificates, write_comparison_csv,
    CertifyConfig, ExperimentConfig, InstanceSpec, Method,
};
use scpg::problems::{spectral_norm, CubicQuadraticInstance, InstanceFile};
use scpg::sketch::{estimate_alignment_probability, SketchKind};
use scpg::solver::{run, CurvatureMode, RunTrace, StepRule};
use scpg::Error;

const DEFAULT_OUT_DIR: &str = "scpg-out";

#[derive(Parser)]
#[command(name = "scpg", version, about = "Stochastic coordinate proximal gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances as JSON, one file per seed.
    Generate(CommonArgs),
    /// Solve one instance per seed with a single method and write its trace.
    Run(CommonArgs),
    /// Run every method on every seed; writes rows.csv and summary.json.
    Compare(CommonArgs),
    /// Validate the convergence certificates; writes certificates.json.
    Certify(CertifyArgs),
    /// Estimate the probability that a sketch is well aligned with a vector.
    McAlign(McAlignArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML file with the same settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Rows of B in A = BᵀB.
    #[arg(long, conflicts_with = "nonconvex")]
    m: Option<usize>,
    /// Use the indefinite A = C + Cᵀ.
    #[arg(long)]
    nonconvex: bool,
    #[arg(long)]
    density: Option<f64>,
    /// Cubic regularization weight.
    #[arg(long = "M")]
    reg: Option<f64>,
    /// Added to the diagonal of A.
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    /// block, orthonormal, gaussian-jlt or s-hashing:<s>.
    #[arg(long)]
    sketch: Option<SketchKind>,
    /// practical, theory-convex or theory-general.
    #[arg(long)]
    rule: Option<String>,
    /// Comma-separated list of scpg, carmon-duchi, nesterov.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    align_period: Option<usize>,
    /// Seeds as a list and/or half-open ranges, e.g. `0,3,10..12`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory (default: $SCPG_OUT_DIR, then ./scpg-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Dimension of the end-to-end run instances.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Seeds of the end-to-end runs.
    #[arg(long, default_value = "0..5")]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McAlignArgs {
    #[arg(long, default_value = "gaussian-jlt")]
    sketch: SketchKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Settings accepted from a TOML file.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    instance: FileInstance,
    #[serde(default)]
    solver: FileSolver,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileInstance {
    n: Option<usize>,
    m: Option<usize>,
    #[serde(default)]
    nonconvex: bool,
    density: Option<f64>,
    #[serde(rename = "M")]
    reg: Option<f64>,
    shift: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileSolver {
    methods: Option<Vec<Method>>,
    p: Option<usize>,
    sketch: Option<SketchKind>,
    rule: Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    align_period: Option<usize>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
                if a >= b {
                    bail!("empty seed range {part}");
                }
                seeds.extend(a..b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed {part:?}"))?),
        }
    }
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn parse_rule(s: &str) -> Result<StepRule> {
    Ok(match s {
        "practical" => StepRule::PracticalCurvature,
        "theory-convex" => StepRule::theory(CurvatureMode::ConvexAlongSubspaces),
        "theory-general" => StepRule::theory(CurvatureMode::General),
        other => bail!("unknown rule {other:?}; expected practical, theory-convex or theory-general"),
    })
}

fn out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os("SCPG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Fully resolved settings shared by `generate`, `run` and `compare`.
struct Resolved {
    experiment: ExperimentConfig,
    out: PathBuf,
}

fn resolve(args: CommonArgs) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let n = args.n.or(file.instance.n).unwrap_or(2000);
    let nonconvex = args.nonconvex || (args.m.is_none() && file.instance.nonconvex);
    let m = if nonconvex { None } else { Some(args.m.or(file.instance.m).unwrap_or(n)) };
    let instance = InstanceSpec {
        n,
        m,
        density: args.density.or(file.instance.density),
        reg: args.reg.or(file.instance.reg).unwrap_or(1.0),
        seed: 0,
        shift: args.shift.or(file.instance.shift).unwrap_or(0.0),
    };
    let seeds = match (&args.seeds, file.seeds) {
        (Some(s), _) => parse_seeds(s)?,
        (None, Some(v)) if !v.is_empty() => v,
        _ => (0..5).collect(),
    };
    let mut experiment = ExperimentConfig::new(instance, seeds);
    if let Some(methods) = args.method.or(file.solver.methods) {
        experiment.methods = methods;
    }
    experiment.p = args.p.or(file.solver.p);
    if let Some(kind) = args.sketch.or(file.solver.sketch) {
        experiment.sketch = kind;
    }
    if let Some(rule) = args.rule.or(file.solver.rule) {
        experiment.rule = parse_rule(&rule)?;
    }
    if let Some(tol) = args.tol.or(file.solver.tol) {
        experiment.tol = tol;
    }
    if let Some(k) = args.max_iter.or(file.solver.max_iter) {
        experiment.max_iter = k;
    }
    if let Some(t) = args.align_period.or(file.solver.align_period) {
        experiment.align_period = t;
    }
    experiment.validate()?;
    Ok(Resolved { experiment, out: out_dir(args.out, file.out) })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn instance_for(cfg: &ExperimentConfig, seed: u64) -> Result<(InstanceSpec, CubicQuadraticInstance)> {
    let spec = InstanceSpec { seed, ..cfg.instance.clone() };
    let inst = generate_instance(&spec)?;
    Ok((spec, inst))
}

fn generate(args: CommonArgs) -> Result<()> {
    let Resolved { experiment, out } = resolve(args)?;
    for &seed in &experiment.seeds {
        let (spec, inst) = instance_for(&experiment, seed)?;
        let file = InstanceFile::from_instance(&inst, spec.m, Some(seed));
        let name = format!("instance-{seed}.json");
        write_json(&out, &name, &file)?;
        println!("{}", out.join(name).display());
    }
    Ok(())
}

fn solve_one(cfg: &ExperimentConfig, method: Method, inst: &CubicQuadraticInstance, seed: u64) -> Result<RunTrace> {
    let x0 = match starting_point(inst) {
        Err(Error::DegenerateStart) => vec![0.0; inst.dim()],
        other => other?,
    };
    Ok(match method {
        Method::Scpg => run(inst, &x0, &cfg.solver_config(seed)).map_err(|e| e.source)?,
        Method::CarmonDuchi | Method::Nesterov => {
            let norm_a = spectral_norm(inst.a(), 1e-6, 5000)?;
            let kind = match method {
                Method::CarmonDuchi => BaselineKind::carmon_duchi(inst, norm_a),
                _ => BaselineKind::nesterov(norm_a),
            };
            run_baseline(inst, kind, &x0, cfg.tol, cfg.max_iter)?
        }
    })
}

fn run_cmd(args: CommonArgs) -> Result<()> {
    let explicit = args.method.clone();
    let Resolved { experiment, out } = resolve(args)?;
    let method = match explicit.as_deref() {
        Some([m]) => *m,
        Some(_) => bail!("`run` takes a single --method"),
        None if experiment.methods.len() == 1 => experiment.methods[0],
        None => Method::Scpg,
    };
    for &seed in &experiment.seeds {
        let (_, inst) = instance_for(&experiment, seed)?;
        let trace = solve_one(&experiment, method, &inst, seed)?;
        let stem = format!("{method}-{seed}");
        let mut w = create(&out, &format!("{stem}.csv"))?;
        trace.write_csv(&mut w)?;
        w.flush()?;
        let summary = json!({ "method": method, "seed": seed, "summary": trace.summary() });
        write_json(&out, &format!("{stem}.json"), &summary)?;
        println!(
            "{method} seed {seed}: {:?} after {} iterations ({:.1} epochs)",
            trace.exit, trace.iterations, trace.epoch_equivalents
        );
    }
    Ok(())
}

fn compare(args: CommonArgs) -> Result<()> {
    let Resolved { experiment, out } = resolve(args)?;
    let rows = run_comparison(&experiment)?;
    let mut w = create(&out, "rows.csv")?;
    write_comparison_csv(&rows, &mut w)?;
    w.flush()?;
    let summary = comparison_summary(&experiment, &rows);
    write_json(&out, "summary.json", &summary)?;
    if let Some(medians) = summary["medians"].as_object() {
        for (method, m) in medians {
            println!(
                "{method:>13}: median iterations {}, converged {}/{}",
                m["median_iterations"], m["converged"], m["runs"]
            );
        }
    }
    Ok(())
}

fn certify(args: CertifyArgs) -> Result<()> {
    let config = CertifyConfig {
        seed: args.seed,
        chernoff_trials: args.trials,
        run_seeds: parse_seeds(&args.seeds)?,
        n: args.n,
        iterations: args.iterations,
        ..CertifyConfig::default()
    };
    let suite = validate_certificates(&config);
    for r in &suite.reports {
        println!("{} {} {}", if r.validated { "ok  " } else { "FAIL" }, r.bound_name, r.params);
    }
    let out = out_dir(args.out, None);
    write_json(&out, "certificates.json", &json!({ "config": config, "suite": suite }))?;
    println!("all validated: {}", suite.all_validated);
    Ok(())
}

fn mc_align(args: McAlignArgs) -> Result<()> {
    let v = gaussian_vector(args.n, args.seed);
    let freq = estimate_alignment_probability(args.sketch, args.n, args.p, &v, args.alpha, args.trials, args.seed)?;
    let report = json!({
        "sketch": args.sketch, "n": args.n, "p": args.p, "alpha": args.alpha,
        "trials": args.trials, "seed": args.seed, "aligned_fraction": freq,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Certify(a) => certify(a),
        Command::McAlign(a) => mc_align(a),
    }
}

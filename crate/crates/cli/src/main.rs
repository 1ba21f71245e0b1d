//! `sepeff`: batch front end for separable-effects estimation.
//!
//! Every subcommand writes JSON for scalar results and CSV for tables into
//! the output directory (`--out`, else `$SEPEFF_OUT_DIR`, else `.`). Errors
//! are reported as one JSON line on stderr with exit code 2 (validation),
//! 3 (numerical failure) or 4 (I/O).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use sepeff_core::sensitivity::{curve_from_triple, parse_grid};
use sepeff_core::simulation::{DgpConfig, ExperimentConfig};
use sepeff_core::{
    assign_pseudo_months, bootstrap_with, crossing_points, frontdoor_routes, generate_dataset,
    load_dataset, random_discrete_instance, run_experiment, survival_curves, validate_dataset,
    write_dataset, EligibilityTable, ErrorKind, Pipeline, SchemaFile, SensitivityKind,
};

#[derive(Debug, Parser)]
#[command(
    name = "sepeff",
    version,
    about = "Separable effects of surgery and anesthesia on a time-to-event outcome"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, env = "SEPEFF_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the models, estimate the three effects at t and bootstrap them.
    Estimate(EstimateArgs),
    /// Sensitivity curve and crossing points for the anesthesia effect.
    Sensitivity(SensitivityArgs),
    /// Simulation experiment, or a single simulated dataset with --sample.
    Simulate(SimulateArgs),
    /// Assign pseudo-procedure months to unexposed subjects.
    PseudoAssign(PseudoArgs),
    /// Numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    t: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = sepeff_core::bootstrap::DEFAULT_REPLICATES)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Survival-curve grid as start:stop:step (default: 101 points on [0, t]).
    #[arg(long)]
    curve_grid: Option<String>,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    /// effects.json written by `estimate`.
    #[arg(long)]
    effects: PathBuf,
    #[arg(long, default_value = "gamma")]
    kind: String,
    #[arg(long, default_value = "0.9:1.6:0.05")]
    grid: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment JSON (generator fields at top level or under `dgp`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    /// Bootstrap replicates per rep (0 skips intervals).
    #[arg(long)]
    boot: Option<usize>,
    #[arg(long)]
    mc_n: Option<usize>,
    /// Write one simulated dataset (plus schema.json) to this path instead.
    #[arg(long)]
    sample: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PseudoArgs {
    /// CSV with `id` and ten month eligibility columns.
    #[arg(long)]
    eligibility: PathBuf,
    /// CSV `month,count` of exposed procedures.
    #[arg(long)]
    histogram: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Compare the direct and front-door routes on random discrete instances.
    #[arg(long)]
    frontdoor: bool,
    /// Rows per instance.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    est: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BootInfo {
    #[serde(rename = "R")]
    r: usize,
    failed: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EffectsFile {
    t: f64,
    joint: Summary,
    anesthesia: Summary,
    surgery: Summary,
    boot: BootInfo,
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn estimate(args: &EstimateArgs, out: &Path) -> anyhow::Result<()> {
    let schema_file = SchemaFile::load(&args.schema)?;
    let d = load_dataset(&args.data, &schema_file.mediators()?)?;
    if d.p() != schema_file.p {
        return Err(sepeff_core::Error::Schema(format!(
            "schema declares p = {} but the data has {} covariates",
            schema_file.p,
            d.p()
        ))
        .into());
    }
    let report = validate_dataset(&d);
    if !report.is_valid() {
        return Err(sepeff_core::Error::InvalidDataset(report.summary()).into());
    }
    for w in &report.warnings {
        eprintln!("warning: {}", w.detail);
    }
    let pipeline = Pipeline::new(&d)?;
    let boot = bootstrap_with(&pipeline, &d, args.t, args.boot, args.seed)?;
    let summary = |est, ci: sepeff_core::Interval| Summary {
        est,
        lo: ci.lower,
        hi: ci.upper,
    };
    let effects = EffectsFile {
        t: args.t,
        joint: summary(boot.point.joint, boot.ci.joint),
        anesthesia: summary(boot.point.anesthesia, boot.ci.anesthesia),
        surgery: summary(boot.point.surgery, boot.ci.surgery),
        boot: BootInfo {
            r: boot.r,
            failed: boot.failed,
            seed: boot.seed,
        },
    };
    write_json(&out.join("effects.json"), &effects)?;
    boot.write_replicates_csv(out.join("replicates.csv"))?;

    let grid = match &args.curve_grid {
        Some(g) => parse_grid(g)?,
        None => (0..=100).map(|i| args.t * i as f64 / 100.0).collect(),
    };
    let unit = vec![1.0; d.len()];
    let models = pipeline.fit(&unit, None)?;
    let curves = survival_curves(
        &models.cox,
        &models.baseline,
        &models.mediators,
        &d,
        &grid,
        &unit,
    )?;
    let mut csv = String::from("t,S00,S01,S11\n");
    for i in 0..curves.grid.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            curves.grid[i], curves.s00[i], curves.s01[i], curves.s11[i]
        ));
    }
    fs::write(out.join("curves.csv"), csv)?;
    println!("{}", serde_json::to_string(&effects)?);
    Ok(())
}

fn sensitivity(args: &SensitivityArgs, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.effects)
        .with_context(|| format!("reading {}", args.effects.display()))?;
    let effects: EffectsFile = serde_json::from_str(&text)?;
    let kind: SensitivityKind = args.kind.parse()?;
    let grid = parse_grid(&args.grid)?;
    let a = &effects.anesthesia;
    let curve = curve_from_triple(a.est, a.lo, a.hi, kind, &grid)?;
    curve.write_csv(out.join("sensitivity.csv"))?;
    let crossings = crossing_points(a.est, a.lo, a.hi)?;
    write_json(
        &out.join("crossings.json"),
        &json!({ "kind": kind, "crossings": crossings }),
    )?;
    println!("{}", serde_json::to_string(&crossings)?);
    Ok(())
}

fn load_experiment(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("dgp").is_some() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(ExperimentConfig {
            dgp: serde_json::from_value::<DgpConfig>(value)?,
            ..Default::default()
        })
    }
}

fn simulate(args: &SimulateArgs, out: &Path) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => load_experiment(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(g) = &args.grid {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(b) = args.boot {
        cfg.boot_r = b;
    }
    if let Some(m) = args.mc_n {
        cfg.mc_n = m;
    }
    if let Some(path) = &args.sample {
        if let Some(s) = args.seed {
            cfg.dgp.seed = s;
        }
        let sim = generate_dataset(&cfg.dgp)?;
        write_dataset(&sim.observed, path)?;
        let schema = SchemaFile {
            p: sim.observed.p(),
            k: sim.observed.k(),
            ell: sim.observed.ell(),
            names: sim.observed.schema().names.clone(),
        };
        write_json(&out.join("schema.json"), &schema)?;
        return Ok(());
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    let result = run_experiment(&cfg)?;
    result.write_csvs(out.join("reps.csv"), out.join("metrics.csv"))?;
    write_json(&out.join("truth.json"), &result.truth)?;
    let failed = result.reps.iter().filter(|r| r.effects.is_none()).count();
    println!(
        "{}",
        serde_json::to_string(
            &json!({ "reps": cfg.reps, "failed": failed, "truth": result.truth })
        )?
    );
    Ok(())
}

fn pseudo_assign(args: &PseudoArgs, out: &Path) -> anyhow::Result<()> {
    let elig = EligibilityTable::load_csv(&args.eligibility)?;
    let hist = sepeff_core::pseudo_exposure::load_histogram(&args.histogram)?;
    let assignment = assign_pseudo_months(&hist, &elig, args.seed)?;
    assignment.write_csvs(&elig, out.join("assignments.csv"), out.join("excluded.csv"))?;
    let report = json!({
        "expected": assignment.expected,
        "assigned": assignment.counts(),
        "excluded": assignment.excluded.len(),
        "overfill": assignment.overfill,
        "month_order": assignment.month_order,
    });
    write_json(&out.join("assignment_summary.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn verify(args: &VerifyArgs) -> anyhow::Result<()> {
    if !args.frontdoor {
        bail!("verify: choose a check (currently --frontdoor)");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut max_diff = 0.0f64;
    for _ in 0..args.instances {
        let k = rand::Rng::random_range(&mut rng, 1..=3usize);
        let ell = rand::Rng::random_range(&mut rng, 0..=k);
        let d = random_discrete_instance(&mut rng, args.n, k, ell)?;
        let t = f64::from(rand::Rng::random_range(&mut rng, 1u8..=5));
        let (direct, frontdoor) = frontdoor_routes(&d, t)?;
        max_diff = max_diff.max((direct - frontdoor).abs());
    }
    let pass = max_diff <= 1e-10;
    println!(
        "{}",
        serde_json::to_string(
            &json!({ "check": "frontdoor", "instances": args.instances, "max_abs_diff": max_diff, "pass": pass })
        )?
    );
    if !pass {
        return Err(sepeff_core::Error::Consistency(format!(
            "front-door routes differ by {max_diff:e}"
        ))
        .into());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.common.threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build_global()
        .context("configuring the thread pool")?;
    let out = &cli.common.out;
    if !matches!(cli.command, Command::Verify(_)) {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    match &cli.command {
        Command::Estimate(a) => estimate(a, out),
        Command::Sensitivity(a) => sensitivity(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::PseudoAssign(a) => pseudo_assign(a, out),
        Command::Verify(a) => verify(a),
    }
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sepeff_core::Error>() {
            return match e.kind() {
                ErrorKind::Validation => (2, "validation"),
                ErrorKind::Numeric => (3, "numeric"),
                ErrorKind::Io => (4, "io"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (4, "io");
        }
    }
    (2, "validation")
}

fn report(kind: &str, message: &str) {
    let line = json!({ "error": kind, "message": message });
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            report(
                "usage",
                message.lines().next().unwrap_or("invalid arguments"),
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let mut message = String::new();
            for cause in err.chain() {
                let text = cause.to_string();
                if !message.contains(&text) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&text);
                }
            }
            report(kind, &message.replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

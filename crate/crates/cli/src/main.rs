use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpmean_core::synth::{sample_dataset, SyntheticSpec};
use dpmean_core::tailbounds::lemma_checks;
use dpmean_core::{DpError, PrivacyBudget, ProblemParams, Result, Seed};
use dpmean_harness::config::{read_json, EstimateConfig, EstimatorKind, ExperimentConfig, TailbenchConfig};
use dpmean_harness::dataset::{read_dataset_file, write_dataset};
use dpmean_harness::{run_estimator, run_experiment, run_tailbench};

#[derive(Parser)]
#[command(name = "dpmean", version, about = "Person-level differentially private mean estimation")]
struct Cli {
    /// Worker threads (default: DPMEAN_THREADS, else all cores).
    #[arg(long, global = true, env = "DPMEAN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the mean of a dataset CSV and print the report as JSON.
    Estimate(EstimateArgs),
    /// Run an experiment grid and write a CSV.
    Sweep(RunArgs),
    /// Compare Monte Carlo tails with the concentration bounds.
    Tailbench(RunArgs),
    /// Run the lemma-level checks and print the report as JSON.
    LemmaChecks(SeedArgs),
    /// Run the built-in degenerate-case checks.
    Selftest,
    /// Write a synthetic dataset CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset CSV (person_id,sample_id,x1,...,xd).
    #[arg(long)]
    data: PathBuf,
    /// JSON file with estimator settings; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "range-r")]
    range_r: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output_path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON SyntheticSpec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => writeln!(std::io::stdout(), "{text}")?,
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => Some(read_json::<EstimateConfig>(p)?),
        None => None,
    };
    let missing = |name: &str| DpError::Config(format!("--{name} is required without a config file"));
    let estimator = match (&a.estimator, &base) {
        (Some(s), _) => EstimatorKind::parse(s)?,
        (None, Some(b)) => b.estimator,
        (None, None) => return Err(missing("estimator")),
    };
    let pick = |flag: Option<f64>, from: Option<f64>, name: &str| flag.or(from).ok_or_else(|| missing(name));
    let epsilon = pick(a.epsilon, base.as_ref().map(|b| b.epsilon), "epsilon")?;
    let delta = a.delta.or(base.as_ref().map(|b| b.delta)).unwrap_or(0.0);
    let k = pick(a.k, base.as_ref().map(|b| b.k), "k")?;
    let alpha = pick(a.alpha, base.as_ref().map(|b| b.alpha), "alpha")?;
    let beta = a.beta.or(base.as_ref().map(|b| b.beta)).unwrap_or(0.1);
    let range_r = a.range_r.or(base.as_ref().map(|b| b.range_r)).unwrap_or(2.0);
    let seed = Seed(a.seed.or(base.as_ref().map(|b| b.seed.0)).unwrap_or(0));

    let budget = PrivacyBudget::new(epsilon, delta)?;
    let params = ProblemParams::new(k, alpha, beta, range_r)?;
    let data = read_dataset_file(&a.data)?;
    let report = run_estimator(estimator, &data, &budget, &params, seed)?;
    emit(&report.to_json(), a.out.as_deref())
}

fn sweep(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = Seed(s);
    }
    let rows = run_experiment(&cfg, a.out.as_deref())?;
    eprintln!("wrote {} rows", rows.len());
    Ok(())
}

fn tailbench(a: RunArgs) -> Result<()> {
    let mut cfg = TailbenchConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = Seed(s);
    }
    let rows = run_tailbench(&cfg, a.out.as_deref())?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("wrote {} rows, {failed} not dominated", rows.len());
    Ok(())
}

fn lemmas(a: SeedArgs) -> Result<()> {
    let report = lemma_checks(Seed(a.seed))?;
    let text = serde_json::to_string_pretty(&report).expect("report is serialisable");
    emit(&text, a.out.as_deref())?;
    if report.passed() {
        Ok(())
    } else {
        Err(DpError::EstimationFailed("a gating lemma check failed".into()))
    }
}

fn selftest() -> Result<()> {
    let checks = dpmean_harness::selftest::selftest();
    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("ok   {}", c.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL {}: {msg}", c.name);
            }
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(DpError::EstimationFailed(format!("{failed} selftest checks failed")))
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec: SyntheticSpec = read_json(&a.spec)?;
    let data = sample_dataset(&spec, a.n, a.m, Seed(a.seed))?;
    let file = dpmean_harness::experiment::create_output(&a.out)?;
    write_dataset(&data, std::io::BufWriter::new(file))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Tailbench(a) => tailbench(a),
        Command::LemmaChecks(a) => lemmas(a),
        Command::Selftest => selftest(),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

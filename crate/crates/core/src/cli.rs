//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage problems and unreadable or
//! unwritable files, 3 when a generator or oracle backend fails, 1 for
//! anything else.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::backends::{
    EquivalenceOracle, ExactMatch, Generator, GroundTruth, HttpGenerator, NliClient, NliOracle, SimulatedLm, TfCosine,
};
use crate::config::{BackendKind, OracleKind, RunConfig};
use crate::error::Error;
use crate::estimator::EstimatorConfig;
use crate::eval::{
    auroc, calibrate_gamma, estimate_records, generate_workload, load_dataset, load_results, run_benchmark,
    write_results, Backends, BenchmarkOptions, QueryRecord,
};
use crate::posterior::Proposal;

#[derive(Debug, Parser)]
#[command(name = "sebayes", version, about = "Adaptive Bayesian estimation of semantic entropy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate semantic entropy for every prompt in a dataset.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Results file (JSON lines); standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare fixed-budget and adaptive estimation at matched budgets.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// JSON report; a CSV with the same stem is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,5")]
        budgets: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        calibration_subsample: usize,
        /// Include wall-clock runtimes in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Find the threshold that yields a target mean sample count.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target_n: f64,
        #[arg(long, default_value_t = 200)]
        calibration_subsample: usize,
    },
    /// Score a results file against dataset labels.
    Auroc {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a synthetic scenario and its labeled dataset.
    Simulate {
        /// Dataset file (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Scenario file for the simulated backend.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_prompts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with `[estimator]`, `[http]` and `[nli]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long, value_enum)]
    oracle: Option<OracleKind>,
    /// Scenario file for the simulated backend.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    snis_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    proposal: Option<Proposal>,
    /// Use the prior over K alone, without posterior reweighting.
    #[arg(long)]
    marginal_prior_only: bool,
    /// Draw every sample directly instead of by guided exploration.
    #[arg(long)]
    direct_only: bool,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Run(Error::Io { .. }) => 2,
            Failure::Run(Error::Backend(_) | Error::Interrupted { .. }) => 3,
            Failure::Run(_) => 1,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Run(Error::io(path, e))
}

struct Setup {
    estimator: EstimatorConfig,
    workers: usize,
    generator: Arc<dyn Generator>,
    oracle: Box<dyn EquivalenceOracle>,
    sim: TfCosine,
    lm: Option<Arc<SimulatedLm>>,
}

impl Setup {
    fn backends(&self) -> Backends<'_> {
        Backends {
            generator: self.generator.as_ref(),
            oracle: self.oracle.as_ref(),
            sim: &self.sim,
        }
    }
}

fn setup(args: RunArgs) -> Result<Setup, Failure> {
    let mut cfg = match &args.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(Error::InvalidInput(m)) => return Err(Failure::Usage(format!("{}: {m}", p.display()))),
            Err(e) => return Err(e.into()),
        },
        None => RunConfig::default(),
    };
    let est = &mut cfg.estimator;
    macro_rules! apply {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { est.$field = v; })* };
    }
    apply!(gamma, n_max, n0, top_k, alpha0, snis_draws, seed, proposal);
    if args.marginal_prior_only {
        est.marginal_prior_only = true;
    }
    if args.direct_only {
        est.guided = false;
    }
    est.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let backend = args.backend.or(cfg.backend).unwrap_or(BackendKind::Simulated);
    let (generator, lm): (Arc<dyn Generator>, _) = match backend {
        BackendKind::Simulated => {
            let path = args
                .scenario
                .or(cfg.scenario)
                .ok_or_else(|| Failure::Usage("the simulated backend needs --scenario".into()))?;
            let lm = Arc::new(SimulatedLm::load(path)?);
            (lm.clone(), Some(lm))
        }
        BackendKind::Http => (
            Arc::new(HttpGenerator::new(cfg.http.clone().with_env_credentials())),
            None,
        ),
    };
    let default_oracle = if lm.is_some() { OracleKind::GroundTruth } else { OracleKind::Exact };
    let oracle: Box<dyn EquivalenceOracle> = match args.oracle.or(cfg.oracle).unwrap_or(default_oracle) {
        OracleKind::Exact => Box::new(ExactMatch),
        OracleKind::GroundTruth => match &lm {
            Some(lm) => Box::new(GroundTruth::new(lm.clone())),
            None => return Err(Failure::Usage("the ground-truth oracle needs the simulated backend".into())),
        },
        OracleKind::Nli => Box::new(NliOracle::new(NliClient::new(cfg.nli.clone().with_env_credentials()))),
    };
    Ok(Setup {
        estimator: cfg.estimator,
        workers: args.workers.or(cfg.workers).unwrap_or(1),
        generator,
        oracle,
        sim: TfCosine,
        lm,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Exact entropies for every record, when the simulated model knows them all.
fn exact_entropies(lm: &SimulatedLm, records: &[QueryRecord]) -> Option<BTreeMap<String, f64>> {
    records
        .iter()
        .map(|r| lm.simulated_exact_entropy(&r.prompt).ok().map(|h| (r.id.clone(), h)))
        .collect()
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Estimate { run, dataset, out } => {
            let records = load_dataset(&dataset)?;
            let s = setup(run)?;
            let results = estimate_records(&records, s.backends(), &s.estimator, s.workers)?;
            match out {
                Some(p) => {
                    let mut w = create(&p)?;
                    write_results(&mut w, &results)
                        .and_then(|_| w.flush())
                        .map_err(|e| io_error(&p, e))?;
                }
                None => write_results(std::io::stdout().lock(), &results)
                    .map_err(|e| io_error(Path::new("<stdout>"), e))?,
            }
        }
        Command::Benchmark {
            run,
            dataset,
            out,
            budgets,
            calibration_subsample,
            timings,
        } => {
            let records = load_dataset(&dataset)?;
            let s = setup(run)?;
            let exact = s.lm.as_deref().and_then(|lm| exact_entropies(lm, &records));
            let options = BenchmarkOptions {
                budgets,
                workers: s.workers,
                calibration_subsample,
                timings,
            };
            let report = run_benchmark(&records, s.backends(), exact.as_ref(), &s.estimator, &options)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_file(&out, &json)?;
            write_file(&out.with_extension("csv"), &report.to_csv())?;
            print!("{}", report.to_table());
        }
        Command::Calibrate {
            run,
            dataset,
            target_n,
            calibration_subsample,
        } => {
            let records = load_dataset(&dataset)?;
            let s = setup(run)?;
            let c = calibrate_gamma(
                &records,
                s.backends(),
                &s.estimator,
                target_n,
                calibration_subsample,
                s.workers,
            )?;
            println!("{}", serde_json::to_string(&c).expect("calibration serializes"));
        }
        Command::Auroc { results, dataset } => {
            let results = load_results(&results)?;
            let records = load_dataset(&dataset)?;
            let labels: BTreeMap<&str, Option<u8>> = records.iter().map(|r| (r.id.as_str(), r.label)).collect();
            let mut scores = Vec::with_capacity(results.len());
            let mut truth = Vec::with_capacity(results.len());
            for r in &results {
                match labels.get(r.id.as_str()) {
                    Some(Some(l)) => {
                        scores.push(r.entropy);
                        truth.push(*l == 1);
                    }
                    Some(None) => return Err(Error::invalid(format!("record `{}` has no label", r.id)).into()),
                    None => return Err(Error::invalid(format!("result `{}` is not in the dataset", r.id)).into()),
                }
            }
            println!("{}", auroc(&scores, &truth)?);
        }
        Command::Simulate {
            out,
            scenario,
            n_prompts,
            seed,
        } => {
            let w = generate_workload(n_prompts, seed)?;
            write_file(&scenario, &w.lm.to_json())?;
            let mut f = create(&out)?;
            for r in &w.records {
                serde_json::to_writer(&mut f, r)
                    .map_err(std::io::Error::from)
                    .and_then(|_| f.write_all(b"\n"))
                    .map_err(|e| io_error(&out, e))?;
            }
            f.flush().map_err(|e| io_error(&out, e))?;
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            let code = f.code();
            match f {
                Failure::Usage(m) => eprintln!("usage error: {m}\n\nRun `sebayes --help` for usage."),
                Failure::Run(e) => eprintln!("error: {e}"),
            }
            code
        }
    }
}

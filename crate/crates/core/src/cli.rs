//! Command-line front end: `run`, `complexity`, `breaker` and `replay`.
//!
//! Exit codes: 0 on success, 2 when the experiment is invalid (nothing is
//! computed or written), 3 when a game breaks the round protocol or a
//! contract such as determinism, 1 for I/O failures.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adversaries::{build_breaker_pair, write_sequence, BreakerPair, BreakerReport};
use crate::arena::{
    csv_header, estimate_query_complexity, monte_carlo_with, write_trajectory_csv, ComplexityEstimate,
    GameConfig, SummaryDocument,
};
use crate::error::{Error, Result};
use crate::estimators::{stochastic_cdf, DistributionOracle, OnlineAlgorithm, SearchConfig};
use crate::model::Metric;
use crate::registry::{AdversarySpec, AlgorithmSpec};
use crate::seed::{derive_seed, rng_for, Role};

pub const SEED_ENV: &str = "THRESHOLD_ARENA_SEED";

#[derive(Debug, Parser)]
#[command(name = "threshold-arena", version, about = "Online estimation from single-threshold comparison feedback")]
pub struct Cli {
    /// Worker threads for Monte Carlo runs (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play many seeded games and write a trajectory CSV and a summary JSON.
    Run(RunArgs),
    /// Estimate the horizon needed for an error target over a sweep.
    Complexity(ComplexityArgs),
    /// Build and check the breaker pair for a deterministic algorithm.
    Breaker(BreakerArgs),
    /// Re-run an algorithm against an exported sample sequence.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Clone)]
pub struct GameArgs {
    /// JSON file with experiment fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "algo")]
    pub algorithm: Option<String>,
    #[arg(long = "adv")]
    pub adversary: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Success threshold on the error.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// median, cdf, mean or quantile:<tau>.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Add hidden samples to the CSV and write run 0's sequence file.
    #[arg(long)]
    pub reveal_samples: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Newline-delimited sample file, for example one written by `run --reveal-samples`.
    #[arg(long)]
    pub sequence: PathBuf,
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub reveal_samples: bool,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "algo")]
    pub algorithm: Option<String>,
    #[arg(long = "adv")]
    pub adversary: Option<String>,
    /// Support sizes to sweep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n: Vec<usize>,
    /// Error targets to sweep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub epsilon: Vec<f64>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.75)]
    pub target: f64,
    #[arg(long, default_value_t = 1 << 18)]
    pub ceiling: usize,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BreakerArgs {
    /// A deterministic algorithm, normally a shipped baseline.
    #[arg(long, alias = "algo")]
    pub baseline: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Experiment fields accepted in a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub algorithm: Option<String>,
    pub adversary: Option<String>,
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub runs: Option<usize>,
    pub epsilon: Option<f64>,
    pub metric: Option<String>,
    pub seed: Option<u64>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::param("config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::param("config", format!("{}: {e}", path.display())))
    }
}

pub fn parse_metric(s: &str) -> Result<Metric> {
    match s {
        "median" => Ok(Metric::Median),
        "cdf" => Ok(Metric::Cdf),
        "mean" => Ok(Metric::Mean),
        _ => match s.strip_prefix("quantile:") {
            Some(t) => t
                .parse()
                .map(Metric::Quantile)
                .map_err(|_| Error::param("metric", format!("`{t}` is not a number"))),
            None => Err(Error::param("metric", format!("unknown metric `{s}`"))),
        },
    }
}

fn required<T>(v: Option<T>, field: &'static str) -> Result<T> {
    v.ok_or_else(|| Error::param(field, "is required (flag or config file)"))
}

/// A validated experiment: the game plus the run count.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub game: GameConfig,
    pub runs: usize,
}

impl GameArgs {
    pub fn resolve(&self, adversary_override: Option<AdversarySpec>) -> Result<Experiment> {
        let file = match &self.config {
            Some(p) => ExperimentFile::load(p)?,
            None => ExperimentFile::default(),
        };
        let algorithm: AlgorithmSpec = required(self.algorithm.clone().or(file.algorithm), "algo")?.parse()?;
        let adversary = match adversary_override {
            Some(a) => a,
            None => required(self.adversary.clone().or(file.adversary), "adv")?.parse()?,
        };
        let n = required(self.n.or(file.n), "n")?;
        let horizon = match (self.horizon.or(file.horizon), &adversary) {
            (Some(t), _) => t,
            (None, AdversarySpec::Sequence { samples, .. }) => samples.len(),
            (None, _) => return Err(Error::param("T", "is required (flag or config file)")),
        };
        let mut game = GameConfig::new(n, horizon, algorithm, adversary);
        game.seed = self.seed.or(file.seed).unwrap_or(0);
        if let Some(e) = self.epsilon.or(file.epsilon) {
            game.epsilon = e;
        }
        if let Some(m) = self.metric.clone().or(file.metric) {
            game.metric = Some(parse_metric(&m)?);
        }
        let runs = self.runs.or(file.runs).unwrap_or(1);
        if runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        game.validate()?;
        Ok(Experiment { game, runs })
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Plays the experiment and writes `trajectory.csv` and `summary.json`.
pub fn execute_games(exp: &Experiment, out: &Path, reveal: bool) -> Result<SummaryDocument> {
    create_out(out)?;
    let csv_path = out.join("trajectory.csv");
    let mut csv = BufWriter::new(fs::File::create(&csv_path)?);
    writeln!(csv, "{}", csv_header(reveal))?;
    let summary = monte_carlo_with(&exp.game, exp.runs, |run, traj| {
        write_trajectory_csv(&mut csv, run, traj, reveal, false)?;
        if reveal && run == 0 {
            let f = BufWriter::new(fs::File::create(out.join("sequence.txt"))?);
            write_sequence(f, &traj.samples())?;
        }
        Ok(())
    })?;
    csv.flush()?;
    let doc = SummaryDocument::new(&exp.game, &summary);
    write_json(&out.join("summary.json"), &doc)?;
    Ok(doc)
}

pub fn cmd_run(args: &RunArgs) -> Result<SummaryDocument> {
    let exp = args.game.resolve(None)?;
    let doc = execute_games(&exp, &args.out, args.reveal_samples)?;
    report_summary(&doc);
    Ok(doc)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<SummaryDocument> {
    let adversary = AdversarySpec::sequence(&args.sequence)?;
    let exp = args.game.resolve(Some(adversary))?;
    let doc = execute_games(&exp, &args.out, args.reveal_samples)?;
    report_summary(&doc);
    Ok(doc)
}

fn report_summary(doc: &SummaryDocument) {
    let last = doc.mse.len() - 1;
    println!(
        "{} vs {}: n={} T={} runs={} final success={:.4} mse={:.6e} (se {:.2e}) mean error={:.6}",
        doc.config.algorithm,
        doc.config.adversary,
        doc.config.n,
        doc.config.horizon,
        doc.runs,
        doc.success_rate[last],
        doc.mse[last],
        doc.mse_se[last],
        doc.mean_error[last],
    );
}

/// One cell of a complexity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<usize>,
    pub unresolved: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curve: Vec<(usize, f64)>,
    /// Mean comparisons used by a run-to-completion estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_queries: Option<f64>,
    /// `3 n ln(8n) / eps^2`.
    pub reference_cdf: f64,
    /// `1 / eps^2`.
    pub reference_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityTable {
    pub algorithm: String,
    pub adversary: String,
    pub runs: usize,
    pub target: f64,
    pub seed: u64,
    pub rows: Vec<ComplexityRow>,
}

pub fn cdf_reference_budget(n: usize, epsilon: f64) -> f64 {
    3.0 * n as f64 * (8.0 * n as f64).ln() / (epsilon * epsilon)
}

pub fn cmd_complexity(args: &ComplexityArgs) -> Result<ComplexityTable> {
    let file = match &args.config {
        Some(p) => ExperimentFile::load(p)?,
        None => ExperimentFile::default(),
    };
    let algorithm: AlgorithmSpec = required(args.algorithm.clone().or(file.algorithm), "algo")?.parse()?;
    let adversary: AdversarySpec = required(args.adversary.clone().or(file.adversary), "adv")?.parse()?;
    let ns = if args.n.is_empty() { vec![required(file.n, "n")?] } else { args.n.clone() };
    let eps = if args.epsilon.is_empty() { vec![required(file.epsilon, "epsilon")?] } else { args.epsilon.clone() };
    let metric = args.metric.clone().or(file.metric).map(|m| parse_metric(&m)).transpose()?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let runs = args.runs;
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    let counting = algorithm == AlgorithmSpec::StochasticCdf;

    // validate every cell before computing any
    let mut cells = Vec::new();
    for &n in &ns {
        for &e in &eps {
            if !(e > 0.0 && e <= 0.5) {
                return Err(Error::param("epsilon", format!("{e} is outside (0, 1/2]")));
            }
            let mut game = GameConfig::new(n, 1, algorithm.clone(), adversary.clone())
                .with_seed(seed)
                .with_epsilon(e);
            game.metric = metric;
            if counting {
                game.horizon = 1;
                game.validate()?;
                if adversary.population_pmf(&game.context(), 0)?.is_none() {
                    return Err(Error::param("adv", "stochastic-cdf query counts need an i.i.d. adversary"));
                }
            } else {
                game.validate()?;
            }
            cells.push(game);
        }
    }

    let mut rows = Vec::new();
    for game in cells {
        let (n, e) = (game.n, game.epsilon);
        let mut row = ComplexityRow {
            n,
            epsilon: e,
            t_hat: None,
            unresolved: false,
            curve: Vec::new(),
            mean_queries: None,
            reference_cdf: cdf_reference_budget(n, e),
            reference_mean: 1.0 / (e * e),
        };
        if counting {
            row.mean_queries = Some(mean_stochastic_queries(&game, runs)?);
        } else {
            let ComplexityEstimate {
                t_hat,
                unresolved,
                curve,
            } = estimate_query_complexity(&game, e, args.target, runs, args.ceiling)?;
            row.t_hat = Some(t_hat);
            row.unresolved = unresolved;
            row.curve = curve;
        }
        println!(
            "n={n} eps={e}: T_hat={} unresolved={} mean_queries={} ref 3n ln(8n)/eps^2={:.1} ref 1/eps^2={:.1}",
            row.t_hat.map_or("-".into(), |t| t.to_string()),
            row.unresolved,
            row.mean_queries.map_or("-".into(), |q| format!("{q:.1}")),
            row.reference_cdf,
            row.reference_mean
        );
        rows.push(row);
    }
    let table = ComplexityTable {
        algorithm: algorithm.to_string(),
        adversary: adversary.to_string(),
        runs,
        target: args.target,
        seed,
        rows,
    };
    create_out(&args.out)?;
    write_json(&args.out.join("complexity.json"), &table)?;
    Ok(table)
}

/// Mean comparisons the eight-anchor estimator spends against the game's
/// i.i.d. adversary.
pub fn mean_stochastic_queries(game: &GameConfig, runs: usize) -> Result<f64> {
    use rayon::prelude::*;
    let counts: Vec<Result<usize>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let ctx = game.context();
            let pmf = game
                .adversary
                .population_pmf(&ctx, derive_seed(game.seed, Role::Adversary, run as u64))?
                .ok_or_else(|| Error::param("adv", "needs an i.i.d. adversary"))?;
            let mut oracle = DistributionOracle::new(pmf, rng_for(game.seed, Role::Auxiliary, run as u64))?;
            let out = stochastic_cdf(&mut oracle, &SearchConfig::default(), rng_for(game.seed, Role::Algorithm, run as u64));
            Ok(out.queries)
        })
        .collect();
    let mut total = 0usize;
    for c in counts {
        total += c?;
    }
    Ok(total as f64 / runs as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakerDocument {
    pub algorithm: String,
    pub pair: BreakerPair,
    pub report: BreakerReport,
}

pub fn cmd_breaker(args: &BreakerArgs) -> Result<BreakerDocument> {
    let algorithm: AlgorithmSpec = args.baseline.parse()?;
    algorithm.validate(args.n)?;
    let n = args.n;
    // every instance gets a fresh seed, so randomized algorithms fail the replay check
    let mut counter = 0u64;
    let mut factory = || -> Box<dyn OnlineAlgorithm> {
        counter += 1;
        algorithm.build(n, counter).expect("validated algorithm")
    };
    let pair = build_breaker_pair(&mut factory, n, args.horizon)?;
    let report = pair.replay(&mut factory)?;
    println!(
        "{algorithm}: n={n} T={} p={} feedback identical={} estimate={} error_L={} error_R={} max={} (>= 1/16: {})",
        args.horizon,
        pair.p,
        report.feedback_identical,
        report.estimate,
        report.error_left,
        report.error_right,
        report.max_error(),
        report.defeated()
    );
    let doc = BreakerDocument {
        algorithm: algorithm.to_string(),
        pair,
        report,
    };
    create_out(&args.out)?;
    write_json(&args.out.join("breaker.json"), &doc)?;
    if !doc.report.feedback_identical {
        return Err(Error::Contract("feedback streams on L and R differ".into()));
    }
    if !doc.report.defeated() {
        return Err(Error::Contract(format!("max error {} is below 1/16", doc.report.max_error())));
    }
    Ok(doc)
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        e if e.is_protocol() => 3,
        _ => 2,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(Error::param("workers", "must be at least 1"));
        }
        // fails only if a pool already exists, in which case it is reused
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match &cli.command {
        Command::Run(a) => cmd_run(a).map(drop),
        Command::Complexity(a) => cmd_complexity(a).map(drop),
        Command::Breaker(a) => cmd_breaker(a).map(drop),
        Command::Replay(a) => cmd_replay(a).map(drop),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_parse() {
        assert_eq!(parse_metric("quantile:0.75").unwrap(), Metric::Quantile(0.75));
        assert_eq!(parse_metric("cdf").unwrap(), Metric::Cdf);
        assert!(parse_metric("ks").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::param("n", "bad")), 2);
        assert_eq!(exit_code(&Error::Contract("x".into())), 3);
        let wrapped = Error::Run {
            run: 3,
            source: Box::new(Error::Protocol {
                round: 1,
                offender: "adversary",
                detail: String::new(),
            }),
        };
        assert_eq!(exit_code(&wrapped), 3);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(
            &path,
            r#"{"algorithm": "meanest", "adversary": "uniform", "n": 8, "T": 10, "runs": 3, "seed": 4}"#,
        )
        .unwrap();
        let args = GameArgs {
            config: Some(path),
            algorithm: None,
            adversary: None,
            n: Some(16),
            horizon: None,
            runs: None,
            epsilon: None,
            metric: None,
            seed: None,
        };
        let exp = args.resolve(None).unwrap();
        assert_eq!(exp.game.n, 16);
        assert_eq!(exp.game.horizon, 10);
        assert_eq!(exp.runs, 3);
        assert_eq!(exp.game.seed, 4);
    }

    #[test]
    fn reference_budget() {
        assert_eq!(cdf_reference_budget(8, 0.2).ceil(), 2496.0);
    }
}

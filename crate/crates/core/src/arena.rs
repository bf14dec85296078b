//! The round protocol, Monte Carlo aggregation and query-complexity search.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{Adversary, History};
use crate::error::{Error, Result};
use crate::estimators::OnlineAlgorithm;
use crate::model::{feedback, EmpiricalCdf, Estimate, Metric, ProblemInstance, RoundRecord, Trajectory};
use crate::registry::{AdversarySpec, AlgorithmSpec, BuildContext};
use crate::seed::{derive_seed, Role};

fn default_epsilon() -> f64 {
    0.25
}

/// Everything needed to play one game, or many with derived seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub algorithm: AlgorithmSpec,
    pub adversary: AdversarySpec,
    /// Defaults to the natural metric of the algorithm.
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub seed: u64,
    /// A run succeeds at round `t` when its error is at most `epsilon`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Record every round's snapshot in the trajectory.
    #[serde(default)]
    pub keep_estimates: bool,
}

impl GameConfig {
    pub fn new(n: usize, horizon: usize, algorithm: AlgorithmSpec, adversary: AdversarySpec) -> Self {
        Self {
            n,
            horizon,
            algorithm,
            adversary,
            metric: None,
            seed: 0,
            epsilon: default_epsilon(),
            keep_estimates: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn metric(&self) -> Metric {
        self.metric.unwrap_or_else(|| self.algorithm.default_metric())
    }

    pub fn context(&self) -> BuildContext {
        BuildContext {
            n: self.n,
            horizon: self.horizon,
            epsilon: self.epsilon,
        }
    }

    /// Checks every parameter without playing a round.
    pub fn validate(&self) -> Result<()> {
        ProblemInstance::new(self.n)?;
        if self.horizon == 0 {
            return Err(Error::param("T", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("{} is outside (0, 1]", self.epsilon)));
        }
        self.algorithm.validate(self.n)?;
        let metric = self.metric();
        if let Metric::Quantile(tau) = metric {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::param("metric", format!("quantile {tau} is outside [0, 1]")));
            }
        }
        if !self.algorithm.supports(&metric) {
            return Err(Error::param(
                "metric",
                format!("`{}` cannot be scored by the {} metric", self.algorithm, metric.name()),
            ));
        }
        self.adversary.validate(&self.context())
    }

    fn build(&self, run: u64) -> Result<(Box<dyn OnlineAlgorithm>, Box<dyn Adversary>)> {
        let alg = self
            .algorithm
            .build(self.n, derive_seed(self.seed, Role::Algorithm, run))?;
        let adv = self
            .adversary
            .build(&self.context(), derive_seed(self.seed, Role::Adversary, run))?;
        Ok((alg, adv))
    }
}

/// How much of a game to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Record {
    /// Rounds, per-round errors and optionally every snapshot.
    Full { estimates: bool },
    /// Only the final error.
    FinalOnly,
}

fn protocol(round: usize, offender: &'static str, detail: impl Into<String>) -> Error {
    Error::Protocol {
        round,
        offender,
        detail: detail.into(),
    }
}

fn play(
    alg: &mut dyn OnlineAlgorithm,
    adv: &mut dyn Adversary,
    horizon: usize,
    metric: Metric,
    record: Record,
) -> Result<Trajectory> {
    let n = alg.n();
    if adv.n() != n {
        return Err(Error::Shape(format!("algorithm has n = {n}, adversary has n = {}", adv.n())));
    }
    if let Some(max) = adv.max_rounds() {
        if max < horizon {
            return Err(Error::param("T", format!("adversary supports at most {max} rounds, asked for {horizon}")));
        }
    }
    let mut queries = Vec::with_capacity(horizon);
    let mut bits = Vec::with_capacity(horizon);
    let mut samples = Vec::with_capacity(horizon);
    let mut cdf = EmpiricalCdf::new(n);
    let mut errors = Vec::new();
    let mut estimates = Vec::new();
    let mut last = None;

    for t in 1..=horizon {
        let q = alg.next_query();
        if !(1..=n).contains(&q) {
            return Err(protocol(t, "algorithm", format!("issued query {q} outside 1..={n}")));
        }
        let x = adv.next_sample(&History {
            queries: &queries,
            feedback: &bits,
            samples: &samples,
        });
        if !(1..=n + 1).contains(&x) {
            return Err(protocol(t, "adversary", format!("produced sample {x} outside 1..={}", n + 1)));
        }
        let b = feedback(x, q);
        alg.observe(b);
        queries.push(q);
        bits.push(b);
        samples.push(x);
        cdf.push(x)?;

        let scored = matches!(record, Record::Full { .. }) || t == horizon;
        if scored {
            let estimate = alg
                .snapshot()
                .map_err(|e| protocol(t, "algorithm", format!("snapshot failed: {e}")))?;
            let err = metric
                .evaluate(&estimate, &cdf)
                .map_err(|e| protocol(t, "algorithm", format!("unscorable estimate: {e}")))?;
            errors.push(err);
            if record == (Record::Full { estimates: true }) {
                estimates.push(estimate.clone());
            }
            if t == horizon {
                last = Some(estimate);
            }
        }
    }

    let rounds = match record {
        Record::Full { .. } => (0..horizon)
            .map(|i| RoundRecord::new(i + 1, queries[i], samples[i]))
            .collect(),
        Record::FinalOnly => Vec::new(),
    };
    Ok(Trajectory {
        n,
        metric,
        rounds,
        errors,
        estimates: matches!(record, Record::Full { estimates: true }).then_some(estimates),
        final_estimate: last,
    })
}

/// Plays `horizon` rounds between the given instances, scoring every round.
pub fn run_game_with(
    alg: &mut dyn OnlineAlgorithm,
    adv: &mut dyn Adversary,
    horizon: usize,
    metric: Metric,
    keep_estimates: bool,
) -> Result<Trajectory> {
    play(alg, adv, horizon, metric, Record::Full { estimates: keep_estimates })
}

/// Plays run `run` of a configuration with its derived seeds.
pub fn run_game_seeded(config: &GameConfig, run: u64) -> Result<Trajectory> {
    let (mut alg, mut adv) = config.build(run)?;
    play(
        alg.as_mut(),
        adv.as_mut(),
        config.horizon,
        config.metric(),
        Record::Full {
            estimates: config.keep_estimates,
        },
    )
}

/// Validates and plays run 0.
pub fn run_game(config: &GameConfig) -> Result<Trajectory> {
    config.validate()?;
    run_game_seeded(config, 0)
}

fn final_error(config: &GameConfig, run: u64) -> Result<f64> {
    let (mut alg, mut adv) = config.build(run)?;
    let traj = play(alg.as_mut(), adv.as_mut(), config.horizon, config.metric(), Record::FinalOnly)?;
    Ok(traj.errors[0])
}

/// Cross-run statistics, indexed by round (`[t - 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub mean_error: Vec<f64>,
    pub mse: Vec<f64>,
    /// Standard error of each `mse` entry.
    pub mse_se: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub final_errors: Vec<f64>,
    /// For CDF estimates: mean squared error of `F_hat_T(i) - F_T(i)` for
    /// `i in 1..=n`, with standard errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_pointwise_mse: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_pointwise_se: Option<Vec<f64>>,
}

impl MonteCarloSummary {
    pub fn final_success_rate(&self) -> f64 {
        *self.success_rate.last().expect("nonempty horizon")
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("nonempty horizon")
    }

    pub fn final_mse_se(&self) -> f64 {
        *self.mse_se.last().expect("nonempty horizon")
    }
}

/// Running sums of `x`, `x^2` and `x^4` per slot.
#[derive(Debug, Clone)]
struct Moments {
    s1: Vec<f64>,
    s2: Vec<f64>,
    s4: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            s1: vec![0.0; len],
            s2: vec![0.0; len],
            s4: vec![0.0; len],
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        let x2 = x * x;
        self.s1[i] += x;
        self.s2[i] += x2;
        self.s4[i] += x2 * x2;
    }

    /// Mean of `x^2` and its standard error over `r` runs.
    fn second_moment(&self, r: usize) -> (Vec<f64>, Vec<f64>) {
        let rf = r as f64;
        self.s2
            .iter()
            .zip(&self.s4)
            .map(|(&s2, &s4)| {
                let m = s2 / rf;
                let se = if r > 1 {
                    ((s4 - rf * m * m).max(0.0) / (rf - 1.0) / rf).sqrt()
                } else {
                    0.0
                };
                (m, se)
            })
            .unzip()
    }
}

const CHUNK: usize = 64;

/// Plays `runs` games with seeds derived from `(config.seed, run)` and
/// aggregates them in run order, so the result does not depend on the
/// worker count. `sink` sees each trajectory in run order.
pub fn monte_carlo_with<F>(config: &GameConfig, runs: usize, mut sink: F) -> Result<MonteCarloSummary>
where
    F: FnMut(usize, &Trajectory) -> Result<()>,
{
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    config.validate()?;
    let horizon = config.horizon;
    let n = config.n;
    let mut errs = Moments::new(horizon);
    let mut hits = vec![0usize; horizon];
    let mut pointwise: Option<Moments> = None;
    let mut final_errors = Vec::with_capacity(runs);

    for start in (0..runs).step_by(CHUNK) {
        let end = (start + CHUNK).min(runs);
        let batch: Vec<Result<Trajectory>> = (start..end)
            .into_par_iter()
            .map(|run| run_game_seeded(config, run as u64).map_err(|e| Error::Run { run, source: Box::new(e) }))
            .collect();
        for (run, traj) in (start..end).zip(batch) {
            let traj = traj?;
            for (t, &e) in traj.errors.iter().enumerate() {
                errs.add(t, e);
                if e <= config.epsilon {
                    hits[t] += 1;
                }
            }
            final_errors.push(*traj.errors.last().expect("nonempty horizon"));
            if let Some(Estimate::Cdf(est)) = &traj.final_estimate {
                let truth = EmpiricalCdf::from_samples(&traj.samples(), n)?;
                let acc = pointwise.get_or_insert_with(|| Moments::new(n));
                for i in 1..=n {
                    acc.add(i - 1, est.value(i) - truth.value(i));
                }
            }
            sink(run, &traj)?;
        }
    }

    let r = runs as f64;
    let (mse, mse_se) = errs.second_moment(runs);
    let (final_pointwise_mse, final_pointwise_se) = match pointwise {
        Some(p) => {
            let (m, s) = p.second_moment(runs);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    Ok(MonteCarloSummary {
        runs,
        mean_error: errs.s1.iter().map(|s| s / r).collect(),
        mse,
        mse_se,
        success_rate: hits.iter().map(|&h| h as f64 / r).collect(),
        final_errors,
        final_pointwise_mse,
        final_pointwise_se,
    })
}

pub fn monte_carlo(config: &GameConfig, runs: usize) -> Result<MonteCarloSummary> {
    monte_carlo_with(config, runs, |_, _| Ok(()))
}

/// Outcome of the horizon search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub t_hat: usize,
    /// The ceiling was reached without meeting the target.
    pub unresolved: bool,
    /// `(T, success rate)` for every horizon measured, ascending in `T`.
    pub curve: Vec<(usize, f64)>,
}

/// Fraction of `runs` games at horizon `config.horizon` whose final error is
/// at most `epsilon`.
pub fn success_rate_at(config: &GameConfig, epsilon: f64, runs: usize) -> Result<f64> {
    config.validate()?;
    let errors: Vec<Result<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| final_error(config, run as u64).map_err(|e| Error::Run { run, source: Box::new(e) }))
        .collect();
    let mut hits = 0;
    for e in errors {
        if e? <= epsilon {
            hits += 1;
        }
    }
    Ok(hits as f64 / runs as f64)
}

/// Smallest horizon (to within 10%) at which the final error is at most
/// `epsilon` in at least a `target` fraction of runs.
///
/// Doubles `T` from 1 until both `T` and `2T` meet the target, then bisects
/// between the last failing horizon and `T`.
pub fn estimate_query_complexity(
    template: &GameConfig,
    epsilon: f64,
    target: f64,
    runs: usize,
    ceiling: usize,
) -> Result<ComplexityEstimate> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::param("epsilon", format!("{epsilon} is outside (0, 1/2]")));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::param("target", format!("{target} is outside (0, 1]")));
    }
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    if runs < 200 {
        log::warn!("{runs} runs may not resolve a {target} success rate");
    }
    let mut curve: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rate = |t: usize| -> Result<f64> {
        if let Some(&r) = curve.get(&t) {
            return Ok(r);
        }
        let cfg = GameConfig {
            horizon: t,
            epsilon,
            ..template.clone()
        };
        let r = success_rate_at(&cfg, epsilon, runs)?;
        log::debug!("T = {t}: success {r}");
        curve.insert(t, r);
        Ok(r)
    };

    let mut lo = 0;
    let mut t = 1;
    let hi = loop {
        if t > ceiling {
            return Ok(ComplexityEstimate {
                t_hat: ceiling,
                unresolved: true,
                curve: curve.into_iter().collect(),
            });
        }
        if rate(t)? >= target {
            if 2 * t > ceiling || rate(2 * t)? >= target {
                break t;
            }
        } else {
            lo = t;
        }
        t *= 2;
    };
    let mut hi = hi;
    while (hi - lo) as f64 > 0.1 * hi as f64 && hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if rate(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ComplexityEstimate {
        t_hat: hi,
        unresolved: false,
        curve: curve.into_iter().collect(),
    })
}

/// Writes one trajectory as CSV rows `run_id,t,query,feedback,error`, with a
/// trailing `sample` column when samples are revealed.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    run_id: usize,
    trajectory: &Trajectory,
    reveal_samples: bool,
    header: bool,
) -> Result<()> {
    if header {
        writeln!(w, "{}", csv_header(reveal_samples))?;
    }
    for (r, e) in trajectory.rounds.iter().zip(&trajectory.errors) {
        write!(w, "{run_id},{},{},{},{e}", r.t, r.query, u8::from(r.feedback))?;
        if reveal_samples {
            write!(w, ",{}", r.sample)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn csv_header(reveal_samples: bool) -> &'static str {
    if reveal_samples {
        "run_id,t,query,feedback,error,sample"
    } else {
        "run_id,t,query,feedback,error"
    }
}

/// The summary document: the configuration echoed back with the statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub config: GameConfig,
    pub runs: usize,
    pub success_rate: Vec<f64>,
    pub mse: Vec<f64>,
    pub mse_se: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub final_errors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_pointwise_mse: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<usize>,
}

impl SummaryDocument {
    pub fn new(config: &GameConfig, summary: &MonteCarloSummary) -> Self {
        Self {
            config: config.clone(),
            runs: summary.runs,
            success_rate: summary.success_rate.clone(),
            mse: summary.mse.clone(),
            mse_se: summary.mse_se.clone(),
            mean_error: summary.mean_error.clone(),
            final_errors: summary.final_errors.clone(),
            final_pointwise_mse: summary.final_pointwise_mse.clone(),
            t_hat: None,
        }
    }
}

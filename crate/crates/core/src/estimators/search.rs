//! Noisy binary search over monotone coins, its boosted quantile variant, and
//! the stochastic CDF estimator stitched from eight quantile anchors.
//!
//! The search keeps multiplicative weights over the `n + 1` candidate
//! intervals `[p_m, p_{m+1}]`, `m = 0..=n`, with virtual endpoints `p_0 = 0`
//! and `p_{n+1} = 1`. Each step queries the coin at the weighted median
//! boundary (randomly rounded so the expected mass on each side is one half)
//! and rescales the two sides by `1 ± 2η(y − τ)`. At `τ = 1/2` that is the
//! familiar `1 ± η` update. A search halts once one interval carries more than
//! `halt_mass` of the weight, or when its query budget runs out.
//!
//! All three procedures are resumable state machines, so they can be driven
//! either directly by an oracle or one round at a time inside the arena.

use rand::Rng;
use rand_distr::{Distribution, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use super::OnlineAlgorithm;
use crate::adversaries::{pmf_to_cdf, validate_pmf};
use crate::error::Result;
use crate::model::{CdfEstimate, Estimate, Query, Sample};
use crate::seed::SimRng;

/// Per-trial budget is `ceil(C * log2(n + 2))` queries.
pub const DEFAULT_BUDGET_FACTOR: f64 = 200.0;
/// Trials per boosted quantile; the boosted budget is `trials * C * log2(n + 2)`.
pub const DEFAULT_TRIALS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget_factor: f64,
    pub trials: usize,
    pub eta: f64,
    pub halt_mass: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget_factor: DEFAULT_BUDGET_FACTOR,
            trials: DEFAULT_TRIALS,
            eta: 0.25,
            halt_mass: 0.75,
        }
    }
}

pub fn search_budget(n: usize, budget_factor: f64) -> usize {
    (budget_factor * ((n + 2) as f64).log2()).ceil() as usize
}

/// Result of one search: the interval index `m` in `0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub index: usize,
    pub queries: usize,
    /// The budget ran out before any interval reached the halting mass.
    pub capped: bool,
}

/// Segment tree over interval weights with lazy range scaling.
#[derive(Debug, Clone)]
struct WeightTree {
    len: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
    argmax: Vec<usize>,
    lazy: Vec<f64>,
}

impl WeightTree {
    fn uniform(len: usize) -> Self {
        let mut tree = Self {
            len,
            sum: vec![0.0; 4 * len],
            max: vec![0.0; 4 * len],
            argmax: vec![0; 4 * len],
            lazy: vec![1.0; 4 * len],
        };
        tree.build(1, 0, len - 1, 1.0 / len as f64);
        tree
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, w: f64) {
        if lo == hi {
            self.sum[node] = w;
            self.max[node] = w;
            self.argmax[node] = lo;
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid, w);
        self.build(2 * node + 1, mid + 1, hi, w);
        self.pull(node);
    }

    fn pull(&mut self, node: usize) {
        let (l, r) = (2 * node, 2 * node + 1);
        self.sum[node] = self.sum[l] + self.sum[r];
        // ties go left, so the lowest index wins
        if self.max[l] >= self.max[r] {
            self.max[node] = self.max[l];
            self.argmax[node] = self.argmax[l];
        } else {
            self.max[node] = self.max[r];
            self.argmax[node] = self.argmax[r];
        }
    }

    fn apply(&mut self, node: usize, f: f64) {
        self.sum[node] *= f;
        self.max[node] *= f;
        self.lazy[node] *= f;
    }

    fn push(&mut self, node: usize) {
        let f = self.lazy[node];
        if f != 1.0 {
            self.apply(2 * node, f);
            self.apply(2 * node + 1, f);
            self.lazy[node] = 1.0;
        }
    }

    fn scale(&mut self, from: usize, to: usize, f: f64) {
        if from <= to {
            self.scale_rec(1, 0, self.len - 1, from, to, f);
        }
    }

    fn scale_rec(&mut self, node: usize, lo: usize, hi: usize, from: usize, to: usize, f: f64) {
        if to < lo || hi < from {
            return;
        }
        if from <= lo && hi <= to {
            self.apply(node, f);
            return;
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.scale_rec(2 * node, lo, mid, from, to, f);
        self.scale_rec(2 * node + 1, mid + 1, hi, from, to, f);
        self.pull(node);
    }

    fn total(&self) -> f64 {
        self.sum[1]
    }

    fn leader(&self) -> (usize, f64) {
        (self.argmax[1], self.max[1])
    }

    /// First leaf whose inclusive prefix sum reaches `target`, with the
    /// prefix sum before it and its own weight.
    fn straddle(&mut self, target: f64) -> (usize, f64, f64) {
        let (mut node, mut lo, mut hi) = (1, 0, self.len - 1);
        let mut before = 0.0;
        while lo < hi {
            self.push(node);
            let mid = (lo + hi) / 2;
            if before + self.sum[2 * node] >= target {
                node *= 2;
                hi = mid;
            } else {
                before += self.sum[2 * node];
                node = 2 * node + 1;
                lo = mid + 1;
            }
        }
        (lo, before, self.sum[node])
    }

    fn weights(&mut self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    fn point(&mut self, i: usize) -> f64 {
        let (mut node, mut lo, mut hi) = (1, 0, self.len - 1);
        while lo < hi {
            self.push(node);
            let mid = (lo + hi) / 2;
            if i <= mid {
                node *= 2;
                hi = mid;
            } else {
                node = 2 * node + 1;
                lo = mid + 1;
            }
        }
        self.sum[node]
    }
}

/// One noisy binary search over coins `1..=n` for target `tau`.
#[derive(Debug, Clone)]
pub struct NoisyBinarySearch {
    n: usize,
    tau: f64,
    eta: f64,
    halt_mass: f64,
    budget: usize,
    weights: WeightTree,
    queries: usize,
    pending: Option<Query>,
    finished: Option<SearchOutcome>,
}

impl NoisyBinarySearch {
    pub fn new(n: usize, tau: f64, config: &SearchConfig) -> Self {
        assert!(n >= 1, "noisy binary search needs at least one coin");
        assert!((0.0..=1.0).contains(&tau), "tau {tau} outside [0, 1]");
        Self {
            n,
            // At tau = 0 or 1 one of the two bits carries no information and
            // the weights never concentrate. Any interval within 1/16 of the
            // clamped target is within 1/8 of the original.
            tau: tau.clamp(1.0 / 16.0, 15.0 / 16.0),
            eta: config.eta,
            halt_mass: config.halt_mass,
            budget: search_budget(n, config.budget_factor).max(1),
            weights: WeightTree::uniform(n + 1),
            queries: 0,
            pending: None,
            finished: None,
        }
    }

    /// The next coin to flip, or `None` once the search has halted.
    pub fn next_query<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Query> {
        if self.finished.is_some() {
            return None;
        }
        let half = 0.5 * self.weights.total();
        let (m, before, w) = self.weights.straddle(half);
        // boundary m+1 puts interval m on the left, boundary m on the right
        let p_right = if w > 0.0 { ((half - before) / w).clamp(0.0, 1.0) } else { 1.0 };
        let boundary = if rng.random::<f64>() < p_right { m + 1 } else { m };
        let q = boundary.clamp(1, self.n);
        self.pending = Some(q);
        Some(q)
    }

    pub fn observe(&mut self, bit: bool) {
        let q = self.pending.take().expect("observe called before next_query");
        let s = if bit { 1.0 } else { 0.0 } - self.tau;
        let left = 1.0 + 2.0 * self.eta * s;
        let right = 1.0 - 2.0 * self.eta * s;
        self.weights.scale(0, q - 1, left);
        self.weights.scale(q, self.n, right);
        let total = self.weights.total();
        self.weights.scale(0, self.n, 1.0 / total);
        self.queries += 1;

        let (leader, mass) = self.weights.leader();
        if mass > self.halt_mass {
            self.finish(leader, false);
        } else if self.queries >= self.budget {
            self.finish(leader, true);
        }
    }

    fn finish(&mut self, index: usize, capped: bool) {
        self.finished = Some(SearchOutcome {
            index,
            queries: self.queries,
            capped,
        });
    }

    pub fn outcome(&self) -> Option<SearchOutcome> {
        self.finished
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Normalized interval weights, `m = 0..=n`.
    pub fn weights(&mut self) -> Vec<f64> {
        self.weights.weights()
    }
}

/// Runs a search to completion against `coin`, which flips coin `i` on call.
pub fn noisy_binary_search<F, R>(
    mut coin: F,
    n: usize,
    tau: f64,
    config: &SearchConfig,
    rng: &mut R,
) -> SearchOutcome
where
    F: FnMut(Query) -> bool,
    R: Rng + ?Sized,
{
    let mut search = NoisyBinarySearch::new(n, tau, config);
    while let Some(q) = search.next_query(rng) {
        search.observe(coin(q));
    }
    search.outcome().expect("search halted")
}

/// Answers `1(x <= q)` for a fresh hidden sample per call.
pub trait ComparisonOracle {
    fn n(&self) -> usize;
    fn compare(&mut self, q: Query) -> bool;
}

/// Oracle backed by i.i.d. draws from a pmf on `1..=n+1`.
#[derive(Debug, Clone)]
pub struct DistributionOracle {
    n: usize,
    pmf: Vec<f64>,
    sampler: WeightedIndex<f64>,
    rng: SimRng,
    calls: usize,
}

impl DistributionOracle {
    /// `pmf[x - 1]` is the probability of sample `x`, `x = 1..=n+1`.
    pub fn new(pmf: Vec<f64>, rng: SimRng) -> Result<Self> {
        validate_pmf(&pmf)?;
        let sampler = WeightedIndex::new(&pmf).expect("validated pmf");
        Ok(Self {
            n: pmf.len() - 1,
            pmf,
            sampler,
            rng,
            calls: 0,
        })
    }

    pub fn sample(&mut self) -> Sample {
        self.sampler.sample(&mut self.rng) + 1
    }

    /// `F(1), ..., F(n+1)` of the underlying distribution.
    pub fn population_cdf(&self) -> Vec<f64> {
        pmf_to_cdf(&self.pmf)
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl ComparisonOracle for DistributionOracle {
    fn n(&self) -> usize {
        self.n
    }

    fn compare(&mut self, q: Query) -> bool {
        self.calls += 1;
        self.sample() <= q
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileOutcome {
    /// `w` in `1..=n`, reported so that `[F(w-1), F(w)]` is near the target.
    pub index: usize,
    pub queries: usize,
    /// Every trial ran out of budget.
    pub capped: bool,
    pub trial_indices: Vec<usize>,
}

/// Median of several budget-capped searches for one quantile.
#[derive(Debug, Clone)]
pub struct BoostedQuantileSearch {
    n: usize,
    tau: f64,
    config: SearchConfig,
    current: NoisyBinarySearch,
    trials: Vec<SearchOutcome>,
    result: Option<QuantileOutcome>,
}

impl BoostedQuantileSearch {
    pub fn new(n: usize, tau: f64, config: &SearchConfig) -> Self {
        assert!(config.trials >= 1, "at least one trial is required");
        let result = (n == 1).then(|| QuantileOutcome {
            index: 1,
            queries: 0,
            capped: false,
            trial_indices: Vec::new(),
        });
        Self {
            n,
            tau,
            config: *config,
            current: NoisyBinarySearch::new(n, tau, config),
            trials: Vec::with_capacity(config.trials),
            result,
        }
    }

    pub fn next_query<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Query> {
        if self.result.is_some() {
            return None;
        }
        // a halted trial is replaced as soon as its last bit is observed
        self.current.next_query(rng)
    }

    pub fn observe(&mut self, bit: bool) {
        self.current.observe(bit);
        if let Some(done) = self.current.outcome() {
            self.trials.push(done);
            if self.trials.len() == self.config.trials {
                self.finalize();
            } else {
                self.current = NoisyBinarySearch::new(self.n, self.tau, &self.config);
            }
        }
    }

    fn finalize(&mut self) {
        // interval m brackets [F(m), F(m+1)]; the reported index w brackets
        // [F(w-1), F(w)], hence the shift
        let mut ws: Vec<usize> = self
            .trials
            .iter()
            .map(|o| (o.index + 1).clamp(1, self.n))
            .collect();
        let trial_indices = ws.clone();
        ws.sort_unstable();
        self.result = Some(QuantileOutcome {
            index: ws[(ws.len() - 1) / 2],
            queries: self.trials.iter().map(|o| o.queries).sum(),
            capped: self.trials.iter().all(|o| o.capped),
            trial_indices,
        });
    }

    pub fn outcome(&self) -> Option<&QuantileOutcome> {
        self.result.as_ref()
    }
}

pub fn boosted_quantile<O, R>(
    oracle: &mut O,
    tau: f64,
    config: &SearchConfig,
    rng: &mut R,
) -> QuantileOutcome
where
    O: ComparisonOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut search = BoostedQuantileSearch::new(oracle.n(), tau, config);
    while let Some(q) = search.next_query(rng) {
        search.observe(oracle.compare(q));
    }
    search.outcome().cloned().expect("search halted")
}

/// Quantile anchors `w_τ` for `τ = 1/8, 2/8, ..., 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileAnchors(pub [usize; 8]);

impl QuantileAnchors {
    pub fn taus() -> impl Iterator<Item = f64> {
        (1..=8).map(|k| k as f64 / 8.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        Self::taus().zip(self.0.iter().copied())
    }

    pub fn to_cdf(&self, n: usize) -> CdfEstimate {
        anchors_to_cdf(&self.iter().collect::<Vec<_>>(), n)
    }
}

/// `F(j) = max { τ : w_τ <= j }` for `j` in `1..=n`, zero when no anchor
/// lies at or below `j`, and `F(n+1) = 1`.
pub fn anchors_to_cdf(anchors: &[(f64, usize)], n: usize) -> CdfEstimate {
    CdfEstimate::from_prefix(
        (1..=n)
            .map(|j| {
                anchors
                    .iter()
                    .filter(|&&(_, w)| w <= j)
                    .map(|&(tau, _)| tau)
                    .fold(0.0, f64::max)
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticCdfOutcome {
    pub estimate: CdfEstimate,
    pub anchors: QuantileAnchors,
    pub queries: usize,
    /// Some anchor had every trial capped.
    pub capped: bool,
}

/// The eight-anchor CDF estimator as an online algorithm.
///
/// Each round feeds the next step of the current anchor's search. Once all
/// anchors are found the estimate is frozen and further queries are idle
/// (always `1`, feedback ignored).
#[derive(Debug, Clone)]
pub struct StochasticCdf {
    n: usize,
    config: SearchConfig,
    rng: SimRng,
    found: Vec<(f64, usize)>,
    current: Option<BoostedQuantileSearch>,
    queries: usize,
    capped: bool,
    pending: Option<bool>,
}

impl StochasticCdf {
    pub fn new(n: usize, config: SearchConfig, rng: SimRng) -> Self {
        Self {
            n,
            current: Some(BoostedQuantileSearch::new(n, 0.125, &config)),
            config,
            rng,
            found: Vec::with_capacity(8),
            queries: 0,
            capped: false,
            pending: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.current.is_none()
    }

    /// Queries spent on searches so far (idle rounds excluded).
    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn estimate(&self) -> CdfEstimate {
        anchors_to_cdf(&self.found, self.n)
    }

    pub fn outcome(&self) -> Option<StochasticCdfOutcome> {
        if !self.is_complete() {
            return None;
        }
        let mut anchors = [0; 8];
        for (slot, &(_, w)) in anchors.iter_mut().zip(&self.found) {
            *slot = w;
        }
        Some(StochasticCdfOutcome {
            estimate: self.estimate(),
            anchors: QuantileAnchors(anchors),
            queries: self.queries,
            capped: self.capped,
        })
    }

    fn search_query(&mut self) -> Option<Query> {
        loop {
            let search = self.current.as_mut()?;
            if let Some(q) = search.next_query(&mut self.rng) {
                return Some(q);
            }
            self.advance();
        }
    }

    /// Records the finished anchor and starts the next one.
    fn advance(&mut self) {
        let out = self.current.as_ref().and_then(|s| s.outcome()).expect("halted").clone();
        self.capped |= out.capped;
        let k = self.found.len() + 1;
        self.found.push((k as f64 / 8.0, out.index));
        self.current = (k < 8).then(|| BoostedQuantileSearch::new(self.n, (k + 1) as f64 / 8.0, &self.config));
    }
}

impl OnlineAlgorithm for StochasticCdf {
    fn n(&self) -> usize {
        self.n
    }

    fn next_query(&mut self) -> Query {
        match self.search_query() {
            Some(q) => {
                self.queries += 1;
                self.pending = Some(true);
                q
            }
            None => {
                self.pending = Some(false);
                1
            }
        }
    }

    fn observe(&mut self, feedback: bool) {
        let searching = self.pending.take().expect("observe called before next_query");
        if searching {
            let search = self.current.as_mut().expect("active search");
            search.observe(feedback);
            if search.outcome().is_some() {
                self.advance();
            }
        }
    }

    fn snapshot(&self) -> Result<Estimate> {
        Ok(Estimate::Cdf(self.estimate()))
    }
}

/// Runs the eight-anchor estimator to completion against `oracle`.
pub fn stochastic_cdf<O>(oracle: &mut O, config: &SearchConfig, rng: SimRng) -> StochasticCdfOutcome
where
    O: ComparisonOracle + ?Sized,
{
    let mut alg = StochasticCdf::new(oracle.n(), *config, rng);
    while !alg.is_complete() {
        let q = alg.next_query();
        let bit = oracle.compare(q);
        alg.observe(bit);
    }
    alg.outcome().expect("complete")
}

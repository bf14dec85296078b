//! Estimation algorithms driven one comparison at a time.
//!
//! Every algorithm implements [`OnlineAlgorithm`]: the caller asks for a
//! query, reveals the feedback bit for that query, and may read a snapshot
//! after any observation. Randomness is owned by each instance and seeded at
//! construction, so a fixed seed replays the same query sequence.

mod baselines;
mod cdfest;
mod meanest;
mod search;
mod wrappers;

pub use baselines::{deterministic_baseline, HalvingTracker, Midpoint, RoundRobinCdf, BASELINE_NAMES};
pub use cdfest::{CdfEst, CdfEstState, CdfMedian};
pub use meanest::{MeanEst, MeanEstState};
pub use search::{
    anchors_to_cdf, boosted_quantile, noisy_binary_search, search_budget, stochastic_cdf,
    BoostedQuantileSearch, ComparisonOracle, DistributionOracle, NoisyBinarySearch,
    QuantileAnchors, QuantileOutcome, SearchConfig, SearchOutcome, StochasticCdf,
    StochasticCdfOutcome, DEFAULT_BUDGET_FACTOR, DEFAULT_TRIALS,
};
pub use wrappers::{
    boost_copies, pointwise_median, ConfidenceBoost, QuantileReduction, DEFAULT_BOOST_CONSTANT,
};

use crate::error::Result;
use crate::model::{CdfEstimate, Estimate, Query};

pub trait OnlineAlgorithm: Send {
    fn n(&self) -> usize;

    /// The next threshold, in `1..=n`.
    fn next_query(&mut self) -> Query;

    /// Feedback `1(x <= q)` for the query most recently returned.
    ///
    /// Panics if called without a preceding `next_query`.
    fn observe(&mut self, feedback: bool);

    fn snapshot(&self) -> Result<Estimate>;
}

impl<A: OnlineAlgorithm + ?Sized> OnlineAlgorithm for Box<A> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn next_query(&mut self) -> Query {
        (**self).next_query()
    }
    fn observe(&mut self, feedback: bool) {
        (**self).observe(feedback)
    }
    fn snapshot(&self) -> Result<Estimate> {
        (**self).snapshot()
    }
}

/// `min { i in 1..=n+1 : F(i) > 1/2 }`. Always defined since `F(n+1) = 1`.
pub fn median_from_cdf(estimate: &CdfEstimate) -> usize {
    estimate
        .values()
        .iter()
        .position(|&v| v > 0.5)
        .map(|p| p + 1)
        .unwrap_or(estimate.n() + 1)
}

use rand::Rng;

use super::{median_from_cdf, OnlineAlgorithm};
use crate::error::{Error, Result};
use crate::model::{CdfEstimate, Estimate, Query};
use crate::seed::SimRng;

/// Sufficient statistics of the uniform-query CDF estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfEstState {
    n: usize,
    t: u64,
    /// `hits[i - 1]`: rounds that queried `i` and got feedback 1.
    hits: Vec<u64>,
    /// `asked[i - 1]`: rounds that queried `i`.
    asked: Vec<u64>,
}

impl CdfEstState {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            t: 0,
            hits: vec![0; n],
            asked: vec![0; n],
        }
    }

    pub fn record(&mut self, query: Query, feedback: bool) {
        assert!((1..=self.n).contains(&query), "query {query} outside 1..={}", self.n);
        self.t += 1;
        self.asked[query - 1] += 1;
        if feedback {
            self.hits[query - 1] += 1;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn tally(&self, i: usize) -> u64 {
        self.hits[i - 1]
    }

    pub fn asked(&self, i: usize) -> u64 {
        self.asked[i - 1]
    }

    /// `F(i) = (n / t) * tally(i)` for `i <= n`, and `F(n+1) = 1`.
    pub fn estimate(&self) -> Result<CdfEstimate> {
        if self.t == 0 {
            return Err(Error::NoObservations);
        }
        let scale = self.n as f64 / self.t as f64;
        Ok(CdfEstimate::from_prefix(
            self.hits.iter().map(|&h| scale * h as f64).collect(),
        ))
    }
}

/// Queries uniformly at random and reports the unbiased CDF estimate.
#[derive(Debug, Clone)]
pub struct CdfEst {
    state: CdfEstState,
    rng: SimRng,
    pending: Option<Query>,
}

impl CdfEst {
    pub fn new(n: usize, rng: SimRng) -> Self {
        Self {
            state: CdfEstState::new(n),
            rng,
            pending: None,
        }
    }

    pub fn state(&self) -> &CdfEstState {
        &self.state
    }
}

impl OnlineAlgorithm for CdfEst {
    fn n(&self) -> usize {
        self.state.n
    }

    fn next_query(&mut self) -> Query {
        let q = self.rng.random_range(1..=self.state.n);
        self.pending = Some(q);
        q
    }

    fn observe(&mut self, feedback: bool) {
        let q = self.pending.take().expect("observe called before next_query");
        self.state.record(q, feedback);
    }

    fn snapshot(&self) -> Result<Estimate> {
        self.state.estimate().map(Estimate::Cdf)
    }
}

/// [`CdfEst`] reporting `min { i : F(i) > 1/2 }` instead of the whole CDF.
#[derive(Debug, Clone)]
pub struct CdfMedian(pub CdfEst);

impl CdfMedian {
    pub fn new(n: usize, rng: SimRng) -> Self {
        Self(CdfEst::new(n, rng))
    }
}

impl OnlineAlgorithm for CdfMedian {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn next_query(&mut self) -> Query {
        self.0.next_query()
    }
    fn observe(&mut self, feedback: bool) {
        self.0.observe(feedback)
    }
    fn snapshot(&self) -> Result<Estimate> {
        Ok(Estimate::Index(median_from_cdf(&self.0.state.estimate()?)))
    }
}

//! Deterministic median estimators. None of these use randomness, which makes
//! them exactly the class the breaker construction defeats.

use super::{median_from_cdf, CdfEstState, OnlineAlgorithm};
use crate::error::Result;
use crate::model::{Estimate, Query};

pub const BASELINE_NAMES: &[&str] = &["midpoint", "halving-tracker", "round-robin-cdf"];

pub fn deterministic_baseline(name: &str, n: usize) -> Option<Box<dyn OnlineAlgorithm>> {
    match name {
        "midpoint" => Some(Box::new(Midpoint::new(n))),
        "halving-tracker" | "halving" => Some(Box::new(HalvingTracker::new(n))),
        "round-robin-cdf" => Some(Box::new(RoundRobinCdf::new(n))),
        _ => None,
    }
}

/// Queries `1, 2, ..., n` in turn and always answers `n / 2`.
#[derive(Debug, Clone)]
pub struct Midpoint {
    n: usize,
    next: usize,
}

impl Midpoint {
    pub fn new(n: usize) -> Self {
        Self { n, next: 1 }
    }
}

impl OnlineAlgorithm for Midpoint {
    fn n(&self) -> usize {
        self.n
    }

    fn next_query(&mut self) -> Query {
        let q = self.next;
        self.next = q % self.n + 1;
        q
    }

    fn observe(&mut self, _feedback: bool) {}

    fn snapshot(&self) -> Result<Estimate> {
        Ok(Estimate::Index((self.n / 2).max(1)))
    }
}

/// Repeated bisection of `1..=n`: each pass narrows to one point using one
/// bit per step, reports it, and starts over.
#[derive(Debug, Clone)]
pub struct HalvingTracker {
    n: usize,
    lo: usize,
    hi: usize,
    estimate: usize,
}

impl HalvingTracker {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lo: 1,
            hi: n,
            estimate: (n / 2).max(1),
        }
    }

    fn mid(&self) -> usize {
        (self.lo + self.hi) / 2
    }
}

impl OnlineAlgorithm for HalvingTracker {
    fn n(&self) -> usize {
        self.n
    }

    fn next_query(&mut self) -> Query {
        self.mid()
    }

    fn observe(&mut self, feedback: bool) {
        let mid = self.mid();
        if feedback {
            self.hi = mid;
        } else {
            self.lo = mid + 1;
        }
        if self.lo >= self.hi {
            self.estimate = self.lo;
            self.lo = 1;
            self.hi = self.n;
        }
    }

    fn snapshot(&self) -> Result<Estimate> {
        Ok(Estimate::Index(self.estimate))
    }
}

/// The uniform-query CDF estimator with the random queries replaced by a
/// fixed cycle.
#[derive(Debug, Clone)]
pub struct RoundRobinCdf {
    state: CdfEstState,
    next: usize,
    pending: Option<Query>,
}

impl RoundRobinCdf {
    pub fn new(n: usize) -> Self {
        Self {
            state: CdfEstState::new(n),
            next: 1,
            pending: None,
        }
    }
}

impl OnlineAlgorithm for RoundRobinCdf {
    fn n(&self) -> usize {
        self.state.n()
    }

    fn next_query(&mut self) -> Query {
        let q = self.next;
        self.next = q % self.state.n() + 1;
        self.pending = Some(q);
        q
    }

    fn observe(&mut self, feedback: bool) {
        let q = self.pending.take().expect("observe called before next_query");
        self.state.record(q, feedback);
    }

    fn snapshot(&self) -> Result<Estimate> {
        Ok(Estimate::Index(median_from_cdf(&self.state.estimate()?)))
    }
}

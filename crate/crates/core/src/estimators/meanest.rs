use rand::Rng;

use super::OnlineAlgorithm;
use crate::error::{Error, Result};
use crate::model::{Estimate, Query};
use crate::seed::SimRng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeanEstState {
    n: usize,
    t: u64,
    /// Rounds with feedback 0, i.e. the sample was above the query.
    above: u64,
}

impl MeanEstState {
    pub fn new(n: usize) -> Self {
        Self { n, t: 0, above: 0 }
    }

    pub fn record(&mut self, feedback: bool) {
        self.t += 1;
        if !feedback {
            self.above += 1;
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn above_count(&self) -> u64 {
        self.above
    }

    /// `1 + (n / t) * above_count`.
    pub fn estimate(&self) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::NoObservations);
        }
        Ok(1.0 + self.n as f64 * self.above as f64 / self.t as f64)
    }
}

/// Queries uniformly at random; every "above" answer is worth `n`.
#[derive(Debug, Clone)]
pub struct MeanEst {
    state: MeanEstState,
    rng: SimRng,
    pending: bool,
}

impl MeanEst {
    pub fn new(n: usize, rng: SimRng) -> Self {
        Self {
            state: MeanEstState::new(n),
            rng,
            pending: false,
        }
    }

    pub fn state(&self) -> &MeanEstState {
        &self.state
    }
}

impl OnlineAlgorithm for MeanEst {
    fn n(&self) -> usize {
        self.state.n
    }

    fn next_query(&mut self) -> Query {
        self.pending = true;
        self.rng.random_range(1..=self.state.n)
    }

    fn observe(&mut self, feedback: bool) {
        assert!(self.pending, "observe called before next_query");
        self.pending = false;
        self.state.record(feedback);
    }

    fn snapshot(&self) -> Result<Estimate> {
        self.state.estimate().map(Estimate::Mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::feedback;
    use rand::SeedableRng;

    #[test]
    fn one_round() {
        let mut s = MeanEstState::new(4);
        s.record(feedback(3, 2));
        assert_eq!(s.estimate().unwrap(), 5.0);
    }

    #[test]
    fn sample_one_is_exact() {
        let mut a = MeanEst::new(6, SimRng::seed_from_u64(1));
        for _ in 0..20 {
            let q = a.next_query();
            a.observe(feedback(1, q));
            assert_eq!(a.snapshot().unwrap(), Estimate::Mean(1.0));
        }
    }

    #[test]
    fn average_over_queries_recovers_sample() {
        let avg: f64 = (1..=4)
            .map(|q| {
                let mut s = MeanEstState::new(4);
                s.record(feedback(3, q));
                s.estimate().unwrap()
            })
            .sum::<f64>()
            / 4.0;
        assert_eq!(avg, 3.0);
    }

    #[test]
    fn no_observations() {
        assert!(MeanEstState::new(4).estimate().is_err());
    }
}

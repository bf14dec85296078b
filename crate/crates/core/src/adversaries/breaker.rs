//! Two sample sequences that a deterministic median estimator cannot tell
//! apart, yet which share no good median.

use num_rational::Ratio;
use num_traits::Signed;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{median_from_cdf, OnlineAlgorithm};
use crate::model::{feedback, quantile_error_exact, EmpiricalCdf, Estimate, Query, Sample};

type Q = Ratio<i64>;

/// Endpoints `(min, max)` of the larger of `{1..q}` and `{q+1..n}`; ties go
/// to the lower set.
pub fn breaker_split(q: Query, n: usize) -> (Sample, Sample) {
    if q >= n - q {
        (1, q)
    } else {
        (q + 1, n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BreakerPair {
    pub n: usize,
    pub horizon: usize,
    pub left: Vec<Sample>,
    pub right: Vec<Sample>,
    /// Queries issued during the first half.
    pub queries: Vec<Query>,
    /// Fraction of first-half queries in `1..n/2`.
    pub p: Q,
    /// Shared second-half sequence of 1s and `n`s.
    pub tail: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakerReport {
    pub feedback_identical: bool,
    pub estimate: usize,
    pub error_left: Q,
    pub error_right: Q,
    /// Smallest worst-case error any single index achieves on both sequences.
    pub separation: Q,
}

impl BreakerReport {
    pub fn max_error(&self) -> Q {
        self.error_left.max(self.error_right)
    }

    pub fn defeated(&self) -> bool {
        self.max_error() >= Q::new(1, 16)
    }
}

fn check_queries(alg: &mut dyn OnlineAlgorithm, n: usize, round: usize) -> Result<Query> {
    let q = alg.next_query();
    if !(1..=n).contains(&q) {
        return Err(Error::Protocol {
            round,
            offender: "algorithm",
            detail: format!("query {q} outside 1..={n}"),
        });
    }
    Ok(q)
}

/// First-half simulation: each round the sample pair is chosen from the
/// query so that both sequences give the same bit.
fn simulate_first_half(alg: &mut dyn OnlineAlgorithm, n: usize, half: usize) -> Result<Vec<Query>> {
    let mut queries = Vec::with_capacity(half);
    for t in 1..=half {
        let q = check_queries(alg, n, t)?;
        let (l, _) = breaker_split(q, n);
        alg.observe(feedback(l, q));
        queries.push(q);
    }
    Ok(queries)
}

pub fn build_breaker_pair<F>(mut factory: F, n: usize, horizon: usize) -> Result<BreakerPair>
where
    F: FnMut() -> Box<dyn OnlineAlgorithm>,
{
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::param("n", format!("breaker needs an even n >= 2, got {n}")));
    }
    if horizon == 0 || !horizon.is_multiple_of(16) {
        return Err(Error::param("T", format!("must be a positive multiple of 16, got {horizon}")));
    }
    let half = horizon / 2;
    let queries = simulate_first_half(factory().as_mut(), n, half)?;
    let twin = simulate_first_half(factory().as_mut(), n, half)?;
    if let Some(t) = queries.iter().zip(&twin).position(|(a, b)| a != b) {
        return Err(Error::Contract(format!(
            "algorithm is not deterministic: replay diverged at round {} ({} vs {})",
            t + 1,
            queries[t],
            twin[t]
        )));
    }

    let (left, right): (Vec<_>, Vec<_>) = queries.iter().map(|&q| breaker_split(q, n)).unzip();
    let low = queries.iter().filter(|&&q| q >= 1 && q < n / 2).count();
    let p = Q::new(2 * low as i64, horizon as i64);
    let unbalanced = (Q::new(1, 2) - p).abs() > Q::new(1, 8);
    let (ones, tops) = if unbalanced {
        (horizon / 4, horizon / 4)
    } else {
        (horizon / 8, 3 * horizon / 8)
    };
    let tail: Vec<Sample> = std::iter::repeat_n(1, ones).chain(std::iter::repeat_n(n, tops)).collect();

    let mut left = left;
    let mut right = right;
    left.extend_from_slice(&tail);
    right.extend_from_slice(&tail);
    Ok(BreakerPair {
        n,
        horizon,
        left,
        right,
        queries,
        p,
        tail,
    })
}

impl BreakerPair {
    fn cdfs(&self) -> Result<(EmpiricalCdf, EmpiricalCdf)> {
        Ok((
            EmpiricalCdf::from_samples(&self.left, self.n)?,
            EmpiricalCdf::from_samples(&self.right, self.n)?,
        ))
    }

    /// `min_m max(err_L(m), err_R(m))` over every index.
    pub fn separation(&self) -> Result<Q> {
        let (fl, fr) = self.cdfs()?;
        let half = Q::new(1, 2);
        (1..=self.n + 1)
            .map(|m| Ok(quantile_error_exact(&fl, m, half)?.max(quantile_error_exact(&fr, m, half)?)))
            .try_fold(Q::new(1, 1), |acc, e: Result<Q>| Ok(acc.min(e?)))
    }

    /// Plays a fresh instance against both sequences and scores its final
    /// median estimate on each.
    pub fn replay<F>(&self, mut factory: F) -> Result<BreakerReport>
    where
        F: FnMut() -> Box<dyn OnlineAlgorithm>,
    {
        let play = |alg: &mut dyn OnlineAlgorithm, samples: &[Sample]| -> Result<(Vec<bool>, Estimate)> {
            let mut bits = Vec::with_capacity(samples.len());
            for (t, &x) in samples.iter().enumerate() {
                let q = check_queries(alg, self.n, t + 1)?;
                let b = feedback(x, q);
                alg.observe(b);
                bits.push(b);
            }
            Ok((bits, alg.snapshot()?))
        };
        let (bits_l, est_l) = play(factory().as_mut(), &self.left)?;
        let (bits_r, est_r) = play(factory().as_mut(), &self.right)?;
        let index = |e: Estimate| match e {
            Estimate::Index(m) => Ok(m),
            Estimate::Cdf(c) => Ok(median_from_cdf(&c)),
            other => Err(Error::param(
                "algorithm",
                format!("breaker needs a median estimator, got a {} estimate", other.kind_name()),
            )),
        };
        let m = index(est_l)?;
        if index(est_r)? != m {
            return Err(Error::Contract("identical feedback produced different estimates".into()));
        }
        let (fl, fr) = self.cdfs()?;
        let half = Q::new(1, 2);
        Ok(BreakerReport {
            feedback_identical: bits_l == bits_r,
            estimate: m,
            error_left: quantile_error_exact(&fl, m, half)?,
            error_right: quantile_error_exact(&fr, m, half)?,
            separation: self.separation()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{deterministic_baseline, CdfEst, BASELINE_NAMES};
    use crate::seed::SimRng;
    use rand::SeedableRng;

    #[test]
    fn split_examples() {
        assert_eq!(breaker_split(3, 8), (4, 8));
        assert_eq!(breaker_split(4, 8), (1, 4));
        assert_eq!(breaker_split(6, 8), (1, 6));
    }

    #[test]
    fn parameter_checks() {
        let f = || deterministic_baseline("midpoint", 16).unwrap();
        assert!(build_breaker_pair(f, 15, 160).is_err());
        assert!(build_breaker_pair(f, 16, 150).is_err());
    }

    #[test]
    fn every_baseline_is_defeated() {
        for name in BASELINE_NAMES {
            let f = || deterministic_baseline(name, 16).unwrap();
            let pair = build_breaker_pair(f, 16, 160).unwrap();
            assert!(pair.left[..80].iter().all(|&l| (1..=8).contains(&l)));
            assert!(pair.right[..80].iter().all(|&r| (8..=16).contains(&r)));
            let report = pair.replay(f).unwrap();
            assert!(report.feedback_identical, "{name}");
            assert!(report.defeated(), "{name}: {report:?}");
            assert!(report.separation >= Q::new(1, 16), "{name}");
        }
    }

    #[test]
    fn both_tail_cases_occur() {
        let mid = build_breaker_pair(|| deterministic_baseline("midpoint", 16).unwrap(), 16, 160).unwrap();
        let halving = build_breaker_pair(|| deterministic_baseline("halving-tracker", 16).unwrap(), 16, 160).unwrap();
        let lens: Vec<_> = [&mid, &halving]
            .iter()
            .map(|p| p.tail.iter().filter(|&&x| x == 1).count())
            .collect();
        assert!(lens.contains(&20) || lens.contains(&40), "{lens:?}");
        for p in [&mid, &halving] {
            assert_eq!(p.tail.len(), 80);
        }
    }

    #[test]
    fn randomized_algorithm_is_rejected() {
        let mut seed = 0;
        let f = || {
            seed += 1;
            Box::new(CdfEst::new(16, SimRng::seed_from_u64(seed))) as Box<dyn OnlineAlgorithm>
        };
        let err = build_breaker_pair(f, 16, 160).unwrap_err();
        assert!(err.is_protocol());
    }
}

use rand::Rng;

use super::OnlineAlgorithm;
use crate::error::{Error, Result};
use crate::model::{CdfEstimate, Estimate, Query};
use crate::seed::SimRng;

/// Turns a median estimator into a `tau`-quantile estimator by thinning the
/// feedback bits with independent coins.
///
/// For `tau > 1/2` a bit `b` becomes `b * B` with `B ~ Ber(1/(2 tau))`; for
/// `tau < 1/2` it becomes `b * B + (1 - B)` with `B ~ Ber(1/(2(1 - tau)))`.
/// At `tau = 1/2` bits pass through and no randomness is consumed.
#[derive(Debug, Clone)]
pub struct QuantileReduction<A> {
    inner: A,
    tau: f64,
    rng: SimRng,
}

impl<A: OnlineAlgorithm> QuantileReduction<A> {
    pub fn new(inner: A, tau: f64, rng: SimRng) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::param("tau", format!("{tau} is outside (0, 1)")));
        }
        Ok(Self { inner, tau, rng })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

/// The rewritten feedback bit for target `tau`.
pub fn thin_feedback<R: Rng + ?Sized>(bit: bool, tau: f64, rng: &mut R) -> bool {
    if tau > 0.5 {
        let keep = rng.random_bool(1.0 / (2.0 * tau));
        bit && keep
    } else if tau < 0.5 {
        let keep = rng.random_bool(1.0 / (2.0 * (1.0 - tau)));
        if keep {
            bit
        } else {
            true
        }
    } else {
        bit
    }
}

impl<A: OnlineAlgorithm> OnlineAlgorithm for QuantileReduction<A> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn next_query(&mut self) -> Query {
        self.inner.next_query()
    }

    fn observe(&mut self, feedback: bool) {
        let bit = thin_feedback(feedback, self.tau, &mut self.rng);
        self.inner.observe(bit);
    }

    fn snapshot(&self) -> Result<Estimate> {
        self.inner.snapshot()
    }
}

pub const DEFAULT_BOOST_CONSTANT: f64 = 18.0;

/// `max(1, ceil(c * ln(1/delta)))`.
pub fn boost_copies(delta: f64, constant: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::param("delta", format!("{delta} is outside (0, 1/4]")));
    }
    Ok(((constant * (1.0 / delta).ln()).ceil() as usize).max(1))
}

/// Independent copies of an algorithm, each round routed to one copy chosen
/// uniformly at random; the snapshot is the median of the copies' estimates.
pub struct ConfidenceBoost {
    copies: Vec<Box<dyn OnlineAlgorithm>>,
    rng: SimRng,
    pending: Option<usize>,
}

impl ConfidenceBoost {
    /// `factory(i)` builds copy `i`; each copy should own its own seed.
    pub fn new<F>(factory: F, delta: f64, constant: f64, rng: SimRng) -> Result<Self>
    where
        F: FnMut(usize) -> Box<dyn OnlineAlgorithm>,
    {
        Self::with_copies(factory, boost_copies(delta, constant)?, rng)
    }

    pub fn with_copies<F>(factory: F, k: usize, rng: SimRng) -> Result<Self>
    where
        F: FnMut(usize) -> Box<dyn OnlineAlgorithm>,
    {
        if k == 0 {
            return Err(Error::param("copies", "need at least one copy"));
        }
        let copies: Vec<_> = (0..k).map(factory).collect();
        let n = copies[0].n();
        if copies.iter().any(|c| c.n() != n) {
            return Err(Error::Shape("copies disagree on n".into()));
        }
        Ok(Self {
            copies,
            rng,
            pending: None,
        })
    }

    pub fn copies(&self) -> usize {
        self.copies.len()
    }
}

fn lower_median<T: Copy>(mut xs: Vec<T>, cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> T {
    xs.sort_unstable_by(cmp);
    xs[(xs.len() - 1) / 2]
}

/// Pointwise lower median of CDF estimates over the same support.
pub fn pointwise_median(estimates: &[CdfEstimate]) -> Result<CdfEstimate> {
    let first = estimates.first().ok_or(Error::NoObservations)?;
    if estimates.iter().any(|e| e.n() != first.n()) {
        return Err(Error::Shape("CDF estimates disagree on n".into()));
    }
    let values = (0..first.values().len())
        .map(|i| lower_median(estimates.iter().map(|e| e.values()[i]).collect(), f64::total_cmp))
        .collect();
    CdfEstimate::new(values)
}

impl OnlineAlgorithm for ConfidenceBoost {
    fn n(&self) -> usize {
        self.copies[0].n()
    }

    fn next_query(&mut self) -> Query {
        let i = self.rng.random_range(0..self.copies.len());
        self.pending = Some(i);
        self.copies[i].next_query()
    }

    fn observe(&mut self, feedback: bool) {
        let i = self.pending.take().expect("observe called before next_query");
        self.copies[i].observe(feedback);
    }

    fn snapshot(&self) -> Result<Estimate> {
        // copies that have not been routed a round yet have nothing to say
        let snaps: Vec<Estimate> = self
            .copies
            .iter()
            .filter_map(|c| match c.snapshot() {
                Err(Error::NoObservations) => None,
                other => Some(other),
            })
            .collect::<Result<_>>()?;
        match snaps.first() {
            None => Err(Error::NoObservations),
            Some(Estimate::Mean(_)) => {
                let xs = snaps
                    .iter()
                    .map(|e| match e {
                        Estimate::Mean(m) => Ok(*m),
                        _ => Err(Error::Contract("copies report mixed estimate kinds".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Estimate::Mean(lower_median(xs, f64::total_cmp)))
            }
            Some(Estimate::Index(_)) => {
                let xs = snaps
                    .iter()
                    .map(|e| match e {
                        Estimate::Index(m) => Ok(*m),
                        _ => Err(Error::Contract("copies report mixed estimate kinds".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Estimate::Index(lower_median(xs, usize::cmp)))
            }
            Some(Estimate::Cdf(_)) => {
                let cdfs = snaps
                    .into_iter()
                    .map(|e| match e {
                        Estimate::Cdf(f) => Ok(f),
                        _ => Err(Error::Contract("copies report mixed estimate kinds".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                pointwise_median(&cdfs).map(Estimate::Cdf)
            }
        }
    }
}

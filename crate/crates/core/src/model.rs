//! Domain types shared by every module, and the exact error metrics.
//!
//! Support points are plain `usize` indices. Queries live in `1..=n` and
//! samples in `1..=n+1`; the extra point `n+1` is above every query, so a
//! sample equal to `n+1` always answers "no".

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A threshold chosen by an algorithm, in `1..=n`.
pub type Query = usize;
/// A hidden value chosen by an adversary, in `1..=n+1`.
pub type Sample = usize;

/// The support parameter of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    n: usize,
}

impl ProblemInstance {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn check_query(&self, q: Query) -> Result<Query> {
        check_range("query", q, 1, self.n)
    }

    pub fn check_sample(&self, x: Sample) -> Result<Sample> {
        check_range("sample", x, 1, self.n + 1)
    }
}

pub(crate) fn check_range(what: &'static str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if v < lo || v > hi {
        Err(Error::Range {
            what,
            value: v as i64,
            lo: lo as i64,
            hi: hi as i64,
        })
    } else {
        Ok(v)
    }
}

/// The comparison feedback bit `1(x <= q)`.
#[inline]
pub fn feedback(sample: Sample, query: Query) -> bool {
    sample <= query
}

/// One time step of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub query: Query,
    pub sample: Sample,
    pub feedback: bool,
}

impl RoundRecord {
    pub fn new(t: usize, query: Query, sample: Sample) -> Self {
        Self {
            t,
            query,
            sample,
            feedback: feedback(sample, query),
        }
    }
}

/// Exact empirical CDF of a sample sequence, stored as integer counts.
///
/// `count(i)` is the number of samples `<= i` for `i` in `0..=n+1`, so the
/// CDF value at `i` is the rational `count(i) / t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    n: usize,
    t: u64,
    sum: u64,
    counts: Vec<u64>,
}

impl EmpiricalCdf {
    /// An empty accumulator. Most accessors need at least one sample.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            t: 0,
            sum: 0,
            counts: vec![0; n + 2],
        }
    }

    pub fn from_samples(samples: &[Sample], n: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut hist = vec![0u64; n + 2];
        for &x in samples {
            check_range("sample", x, 1, n + 1)?;
            hist[x] += 1;
        }
        let mut cdf = Self::new(n);
        let mut acc = 0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf.counts[i] = acc;
        }
        cdf.t = samples.len() as u64;
        cdf.sum = samples.iter().map(|&x| x as u64).sum();
        Ok(cdf)
    }

    pub fn push(&mut self, x: Sample) -> Result<()> {
        check_range("sample", x, 1, self.n + 1)?;
        for c in &mut self.counts[x..] {
            *c += 1;
        }
        self.t += 1;
        self.sum += x as u64;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Number of samples `<= i`.
    pub fn count(&self, i: usize) -> u64 {
        self.counts[i.min(self.n + 1)]
    }

    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(self.t > 0);
        self.count(i) as f64 / self.t as f64
    }

    pub fn ratio(&self, i: usize) -> Ratio<i64> {
        Ratio::new(self.count(i) as i64, self.t as i64)
    }

    /// `F(0), F(1), ..., F(n+1)`.
    pub fn values(&self) -> Vec<f64> {
        (0..=self.n + 1).map(|i| self.value(i)).collect()
    }

    /// Empirical mean of the samples.
    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.t as f64
    }
}

/// Builds the exact empirical CDF of `samples` over support `1..=n+1`.
pub fn empirical_cdf(samples: &[Sample], n: usize) -> Result<EmpiricalCdf> {
    EmpiricalCdf::from_samples(samples, n)
}

/// A CDF estimate over `1..=n+1`.
///
/// Values are unclamped: they may exceed one and need not be monotone. The
/// only structural requirement is `F(n+1) = 1` and nonnegativity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate {
    values: Vec<f64>,
}

impl CdfEstimate {
    /// `values[i - 1]` is the estimate at `i`, for `i` in `1..=n+1`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Shape(format!(
                "CDF estimate needs at least two points, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::param(
                "values",
                format!("estimate at index {} is {v}", i + 1),
            ));
        }
        if *values.last().unwrap() != 1.0 {
            return Err(Error::param("values", "estimate at n+1 must equal 1"));
        }
        Ok(Self { values })
    }

    /// Estimate from the first `n` values, with `F(n+1) = 1` appended.
    pub(crate) fn from_prefix(mut prefix: Vec<f64>) -> Self {
        prefix.push(1.0);
        Self { values: prefix }
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Estimate at `i`; zero at `i = 0`.
    pub fn value(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `dist([F(m-1), F(m)], tau)`: how far the estimate's CDF interval sits
/// from the target quantile.
pub fn quantile_error(cdf: &EmpiricalCdf, m_hat: usize, tau: f64) -> Result<f64> {
    check_range("estimate", m_hat, 1, cdf.n() + 1)?;
    if cdf.t() == 0 {
        return Err(Error::EmptySequence);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::param("tau", format!("{tau} is outside [0, 1]")));
    }
    let lo = cdf.value(m_hat - 1);
    let hi = cdf.value(m_hat);
    Ok((lo - tau).max(tau - hi).max(0.0))
}

/// Same as [`quantile_error`] in exact rational arithmetic.
pub fn quantile_error_exact(cdf: &EmpiricalCdf, m_hat: usize, tau: Ratio<i64>) -> Result<Ratio<i64>> {
    check_range("estimate", m_hat, 1, cdf.n() + 1)?;
    if cdf.t() == 0 {
        return Err(Error::EmptySequence);
    }
    let zero = Ratio::from_integer(0);
    let lo = cdf.ratio(m_hat - 1);
    let hi = cdf.ratio(m_hat);
    Ok((lo - tau).max(tau - hi).max(zero))
}

/// Kolmogorov–Smirnov distance between an estimate and the empirical CDF,
/// taken over `1..=n+1`.
pub fn ks_distance(estimate: &CdfEstimate, cdf: &EmpiricalCdf) -> Result<f64> {
    if estimate.n() != cdf.n() {
        return Err(Error::Shape(format!(
            "estimate has n={}, empirical CDF has n={}",
            estimate.n(),
            cdf.n()
        )));
    }
    if cdf.t() == 0 {
        return Err(Error::EmptySequence);
    }
    Ok((1..=cdf.n() + 1)
        .map(|i| (estimate.value(i) - cdf.value(i)).abs())
        .fold(0.0, f64::max))
}

/// Sup distance between an estimate and a population CDF given as
/// `F(1), ..., F(n+1)`.
pub fn ks_distance_to(estimate: &CdfEstimate, population: &[f64]) -> Result<f64> {
    if estimate.values().len() != population.len() {
        return Err(Error::Shape(format!(
            "estimate has {} points, population CDF has {}",
            estimate.values().len(),
            population.len()
        )));
    }
    Ok(estimate
        .values()
        .iter()
        .zip(population)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Normalized mean error `|mu_hat - mu| / n`.
pub fn mean_error(mu_hat: f64, mu: f64, n: usize) -> f64 {
    (mu_hat - mu).abs() / n as f64
}

/// What an online algorithm reports after each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Estimate {
    Cdf(CdfEstimate),
    /// A median or quantile index in `1..=n+1`.
    Index(usize),
    Mean(f64),
}

/// Which error metric a game records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Median,
    Cdf,
    Mean,
    Quantile(f64),
}

impl Metric {
    pub fn evaluate(&self, estimate: &Estimate, cdf: &EmpiricalCdf) -> Result<f64> {
        match (self, estimate) {
            (Metric::Median, Estimate::Index(m)) => quantile_error(cdf, *m, 0.5),
            (Metric::Median, Estimate::Cdf(f)) => {
                quantile_error(cdf, crate::estimators::median_from_cdf(f), 0.5)
            }
            (Metric::Quantile(tau), Estimate::Index(m)) => quantile_error(cdf, *m, *tau),
            (Metric::Cdf, Estimate::Cdf(f)) => ks_distance(f, cdf),
            (Metric::Mean, Estimate::Mean(mu)) => Ok(mean_error(*mu, cdf.mean(), cdf.n())),
            (metric, est) => Err(Error::param(
                "metric",
                format!("{metric:?} cannot score a {} estimate", est.kind_name()),
            )),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Median => "median".into(),
            Metric::Cdf => "cdf".into(),
            Metric::Mean => "mean".into(),
            Metric::Quantile(t) => format!("quantile:{t}"),
        }
    }
}

impl Estimate {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Estimate::Cdf(_) => "cdf",
            Estimate::Index(_) => "index",
            Estimate::Mean(_) => "mean",
        }
    }
}

/// The record of one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub metric: Metric,
    pub rounds: Vec<RoundRecord>,
    /// Error after each round; same length as `rounds`.
    pub errors: Vec<f64>,
    /// Snapshots after each round, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<Estimate>>,
    /// Snapshot after the last round.
    #[serde(default)]
    pub final_estimate: Option<Estimate>,
}

impl Trajectory {
    pub fn samples(&self) -> Vec<Sample> {
        self.rounds.iter().map(|r| r.sample).collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ecdf_small_cases() {
        let f = empirical_cdf(&[2, 2], 3).unwrap();
        assert_eq!(f.values(), vec![0.0, 0.0, 1.0, 1.0, 1.0]);

        let f = empirical_cdf(&[1, 2, 3, 4], 4).unwrap();
        for i in 1..=4 {
            assert_eq!(f.value(i), i as f64 / 4.0);
        }
        assert_eq!(f.value(5), 1.0);

        let f = empirical_cdf(&[5, 5, 5], 4).unwrap();
        assert!((0..=4).all(|i| f.count(i) == 0));
        assert_eq!(f.value(5), 1.0);
    }

    #[test]
    fn ecdf_errors() {
        assert!(matches!(empirical_cdf(&[], 3), Err(Error::EmptySequence)));
        assert!(matches!(empirical_cdf(&[5], 3), Err(Error::Range { .. })));
        assert!(matches!(empirical_cdf(&[0], 3), Err(Error::Range { .. })));
    }

    #[test]
    fn push_matches_batch() {
        let xs = [3, 1, 4, 1, 5, 2, 6];
        let mut inc = EmpiricalCdf::new(5);
        for &x in &xs {
            inc.push(x).unwrap();
        }
        assert_eq!(inc, empirical_cdf(&xs, 5).unwrap());
        assert_abs_diff_eq!(inc.mean(), 22.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_error_examples() {
        let f = empirical_cdf(&[2, 2], 3).unwrap();
        assert_eq!(quantile_error(&f, 2, 0.5).unwrap(), 0.0);
        assert_eq!(quantile_error(&f, 3, 0.5).unwrap(), 0.5);
        let f = empirical_cdf(&[1, 2, 3, 4], 4).unwrap();
        assert_eq!(quantile_error(&f, 1, 0.5).unwrap(), 0.25);
        assert_eq!(
            quantile_error_exact(&f, 1, Ratio::new(1, 2)).unwrap(),
            Ratio::new(1, 4)
        );
        // n+1 is a legal estimate
        assert_eq!(quantile_error(&f, 5, 0.5).unwrap(), 0.5);
        assert!(quantile_error(&f, 0, 0.5).is_err());
        assert!(quantile_error(&f, 6, 0.5).is_err());
    }

    #[test]
    fn ks_examples() {
        let f = empirical_cdf(&[1, 2], 2).unwrap();
        let same = CdfEstimate::new(vec![0.5, 1.0, 1.0]).unwrap();
        assert_eq!(ks_distance(&same, &f).unwrap(), 0.0);
        let off = CdfEstimate::new(vec![0.25, 1.0, 1.0]).unwrap();
        assert_eq!(ks_distance(&off, &f).unwrap(), 0.25);

        // F = (0.5, 0.5, 1.0, 1) from samples (1, 3) at n = 3
        let f = empirical_cdf(&[1, 3], 3).unwrap();
        let wild = CdfEstimate::new(vec![1.2, 0.9, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(ks_distance(&wild, &f).unwrap(), 0.7, epsilon = 1e-12);

        let short = CdfEstimate::new(vec![0.5, 1.0]).unwrap();
        assert!(matches!(ks_distance(&short, &f), Err(Error::Shape(_))));
    }

    #[test]
    fn cdf_estimate_validation() {
        assert!(CdfEstimate::new(vec![0.3, 0.9]).is_err());
        assert!(CdfEstimate::new(vec![-0.1, 1.0]).is_err());
        assert!(CdfEstimate::new(vec![1.0]).is_err());
        assert!(CdfEstimate::new(vec![3.0, 1.0]).is_ok());
    }

    #[test]
    fn mean_error_examples() {
        assert_eq!(mean_error(5.0, 5.0, 4), 0.0);
        assert_eq!(mean_error(5.0, 3.0, 4), 0.5);
        assert_eq!(mean_error(1.0, 5.0, 4), 1.0);
    }

    #[test]
    fn metric_rejects_wrong_kind() {
        let f = empirical_cdf(&[1, 2], 2).unwrap();
        assert!(Metric::Mean.evaluate(&Estimate::Index(1), &f).is_err());
        assert!(Metric::Cdf.evaluate(&Estimate::Mean(1.0), &f).is_err());
    }

    fn samples_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
        (2usize..12).prop_flat_map(|n| (Just(n), prop::collection::vec(1..=n + 1, 1..40)))
    }

    proptest! {
        #[test]
        fn ecdf_is_a_cdf((n, xs) in samples_strategy()) {
            let f = empirical_cdf(&xs, n).unwrap();
            prop_assert_eq!(f.count(0), 0);
            prop_assert_eq!(f.value(n + 1), 1.0);
            for i in 1..=n + 1 {
                prop_assert!(f.count(i) >= f.count(i - 1));
            }
        }

        #[test]
        fn quantile_error_zero_iff_inside(
            (n, xs) in samples_strategy(),
            m_seed in 0usize..100,
            tau in 0.0f64..=1.0,
        ) {
            let f = empirical_cdf(&xs, n).unwrap();
            let m = 1 + m_seed % (n + 1);
            let e = quantile_error(&f, m, tau).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            let inside = f.value(m - 1) <= tau && tau <= f.value(m);
            prop_assert_eq!(e == 0.0, inside);
        }

        #[test]
        fn ks_triangle(
            (n, xs) in samples_strategy(),
            a in prop::collection::vec(0.0f64..2.0, 13),
            b in prop::collection::vec(0.0f64..2.0, 13),
        ) {
            let f = empirical_cdf(&xs, n).unwrap();
            let ea = CdfEstimate::from_prefix(a[..n].to_vec());
            let eb = CdfEstimate::from_prefix(b[..n].to_vec());
            let d_ab = ks_distance_to(&ea, eb.values()).unwrap();
            let d_af = ks_distance(&ea, &f).unwrap();
            let d_bf = ks_distance(&eb, &f).unwrap();
            prop_assert!(d_af <= d_ab + d_bf + 1e-12);
        }
    }
}

//! Distribution families behind the CDF and median lower bounds. Both are
//! built in exact rational arithmetic so their closed forms can be checked
//! without tolerance.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

use super::{Adversary, History};
use crate::error::{Error, Result};
use crate::model::Sample;
use crate::seed::SimRng;

type Q = Ratio<i64>;

fn check_signs(sigma: &[i8], expected: usize) -> Result<()> {
    if sigma.len() != expected {
        return Err(Error::param(
            "sigma",
            format!("expected {expected} signs, got {}", sigma.len()),
        ));
    }
    if let Some(s) = sigma.iter().find(|s| **s != 1 && **s != -1) {
        return Err(Error::param("sigma", format!("entries must be +1 or -1, found {s}")));
    }
    Ok(())
}

/// Exact CDF differences `F(i) - F(i-1)`, with `F(0) = 0`.
fn differences(cdf: &[Q]) -> Vec<Q> {
    let mut prev = Q::zero();
    cdf.iter()
        .map(|&f| {
            let d = f - prev;
            prev = f;
            d
        })
        .collect()
}

fn to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Perturbed-uniform family: `F(i) = i/(n+1) + σ_i ε` for `i <= n`,
/// `F(n+1) = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfLbFamily {
    n: usize,
    epsilon: Q,
    sigma: Vec<i8>,
    pmf: Vec<Q>,
}

impl CdfLbFamily {
    pub fn new(n: usize, epsilon: Q, sigma: Vec<i8>) -> Result<Self> {
        if n < 1 {
            return Err(Error::param("n", "must be positive"));
        }
        check_signs(&sigma, n)?;
        if epsilon.is_negative() {
            return Err(Error::param("epsilon", "must be nonnegative"));
        }
        let bound = Q::new(1, 2 * (n as i64 + 1));
        let cdf = Self::closed_form(n, epsilon, &sigma);
        let pmf = differences(&cdf);
        if let Some((i, m)) = pmf.iter().enumerate().find(|(_, m)| m.is_negative()) {
            return Err(Error::Construction(format!(
                "negative mass {m} at index {} (nonnegativity needs epsilon <= 1/(2(n+1)) = {bound})",
                i + 1
            )));
        }
        if epsilon > bound {
            return Err(Error::Construction(format!(
                "epsilon {epsilon} exceeds the nonnegativity bound 1/(2(n+1)) = {bound}"
            )));
        }
        Ok(Self {
            n,
            epsilon,
            sigma,
            pmf,
        })
    }

    fn closed_form(n: usize, epsilon: Q, sigma: &[i8]) -> Vec<Q> {
        let denom = n as i64 + 1;
        (1..=n)
            .map(|i| Q::new(i as i64, denom) + epsilon * Q::from_integer(sigma[i - 1] as i64))
            .chain(std::iter::once(Q::from_integer(1)))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> Q {
        self.epsilon
    }

    pub fn sigma(&self) -> &[i8] {
        &self.sigma
    }

    /// Exact masses on `1..=n+1`.
    pub fn pmf(&self) -> &[Q] {
        &self.pmf
    }

    /// Exact `F(1), ..., F(n+1)` accumulated from the masses.
    pub fn cdf(&self) -> Vec<Q> {
        let mut acc = Q::zero();
        self.pmf
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }

    pub fn pmf_f64(&self) -> Vec<f64> {
        self.pmf.iter().map(to_f64).collect()
    }
}

/// Float pmf of the perturbed-uniform family, for sampling.
pub fn cdf_lb_family(n: usize, epsilon: f64, sigma: Vec<i8>) -> Result<Vec<f64>> {
    let eps = Q::approximate_float(epsilon)
        .ok_or_else(|| Error::param("epsilon", format!("{epsilon} is not representable")))?;
    Ok(CdfLbFamily::new(n, eps, sigma)?.pmf_f64())
}

/// Parameters of the two-phase median adversary on `n = 4k` points with
/// horizon `T = 2nm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedianLbConfig {
    pub k: usize,
    pub m: usize,
    pub epsilon: Q,
    pub sigma: Vec<i8>,
}

impl MedianLbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || !self.k.is_multiple_of(2) {
            return Err(Error::param("k", format!("must be even and >= 2, got {}", self.k)));
        }
        if self.k < 3 {
            log::warn!("median-lb with k = {} is below the k >= 3 regime of the lower bound", self.k);
        }
        if self.m < 1 {
            return Err(Error::param("m", "must be positive"));
        }
        check_signs(&self.sigma, self.k)?;
        if self.epsilon.is_negative() {
            return Err(Error::param("epsilon", "must be nonnegative"));
        }
        let bound = Q::new(1, 2 * self.n() as i64);
        if self.epsilon > bound {
            return Err(Error::Construction(format!(
                "epsilon {} exceeds 1/(2n) = {bound}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        4 * self.k
    }

    pub fn horizon(&self) -> usize {
        2 * self.n() * self.m
    }

    /// `α_i = 2 − 4 |i/n − 1/2|`.
    pub fn alpha(&self, i: usize) -> Q {
        let n = self.n() as i64;
        let d = Q::new(i as i64, n) - Q::new(1, 2);
        Q::from_integer(2) - Q::from_integer(4) * d.abs()
    }

    /// Candidate phase-two offsets `k+1, k+3, ..., 3k-1`.
    pub fn offsets(&self) -> Vec<usize> {
        (self.k + 1..3 * self.k).step_by(2).collect()
    }

    /// Exact phase-one CDF `F(1), ..., F(n)`.
    pub fn phase_one_cdf(&self) -> Vec<Q> {
        let (n, k) = (self.n(), self.k);
        (1..=n)
            .map(|i| {
                let base = Q::new(i as i64, n as i64);
                if i % 2 == 0 || i <= k || i >= 3 * k {
                    base
                } else {
                    let s = self.sigma[(i - k).div_ceil(2) - 1] as i64;
                    base + Q::from_integer(s) * self.alpha(i) * self.epsilon
                }
            })
            .collect()
    }

    /// Exact phase-one masses on `1..=n+1` (the last is always zero).
    pub fn phase_one_pmf(&self) -> Vec<Q> {
        let mut pmf = differences(&self.phase_one_cdf());
        pmf.push(Q::zero());
        pmf
    }
}

/// Oblivious two-phase adversary: `T/2` i.i.d. draws from the phase-one
/// distribution, then `j m` copies of `n`, then `1`s to the horizon.
#[derive(Debug, Clone)]
pub struct MedianLbAdversary {
    config: MedianLbConfig,
    j: usize,
    round: usize,
    sampler: WeightedIndex<f64>,
    rng: SimRng,
}

impl MedianLbAdversary {
    pub fn new(config: MedianLbConfig, mut rng: SimRng) -> Result<Self> {
        config.validate()?;
        let offsets = config.offsets();
        let j = offsets[rng.random_range(0..offsets.len())];
        Self::with_offset(config, j, rng)
    }

    /// Fixes the phase-two offset instead of drawing it.
    pub fn with_offset(config: MedianLbConfig, j: usize, rng: SimRng) -> Result<Self> {
        config.validate()?;
        if !config.offsets().contains(&j) {
            return Err(Error::param("j", format!("{j} is not an odd offset in (k, 3k)")));
        }
        let pmf = config.phase_one_pmf();
        if let Some((i, m)) = pmf[..config.n()].iter().enumerate().find(|(_, m)| !m.is_positive()) {
            return Err(Error::Construction(format!("phase-one mass {m} at index {}", i + 1)));
        }
        let weights: Vec<f64> = pmf.iter().map(to_f64).collect();
        let sampler = WeightedIndex::new(&weights).map_err(|e| Error::Construction(e.to_string()))?;
        Ok(Self {
            config,
            j,
            round: 0,
            sampler,
            rng,
        })
    }

    pub fn offset(&self) -> usize {
        self.j
    }

    pub fn config(&self) -> &MedianLbConfig {
        &self.config
    }
}

impl Adversary for MedianLbAdversary {
    fn n(&self) -> usize {
        self.config.n()
    }

    fn next_sample(&mut self, _history: &History<'_>) -> Sample {
        self.round += 1;
        let half = self.config.horizon() / 2;
        if self.round <= half {
            self.sampler.sample(&mut self.rng) + 1
        } else if self.round <= half + self.j * self.config.m {
            self.config.n()
        } else {
            1
        }
    }

    fn max_rounds(&self) -> Option<usize> {
        Some(self.config.horizon())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn all_plus_family() {
        let fam = CdfLbFamily::new(3, Q::new(1, 10), vec![1, 1, 1]).unwrap();
        let expect_cdf = [Q::new(35, 100), Q::new(6, 10), Q::new(85, 100), Q::from_integer(1)];
        let expect_pmf = [Q::new(35, 100), Q::new(25, 100), Q::new(25, 100), Q::new(15, 100)];
        assert_eq!(fam.cdf(), expect_cdf);
        assert_eq!(fam.pmf(), expect_pmf);
    }

    #[test]
    fn zero_perturbation_is_uniform() {
        let fam = CdfLbFamily::new(5, Q::zero(), vec![1, -1, 1, -1, 1]).unwrap();
        assert!(fam.pmf().iter().all(|m| *m == Q::new(1, 6)));
    }

    #[test]
    fn alternating_at_wide_bound_is_rejected() {
        let err = CdfLbFamily::new(4, Q::new(1, 5), vec![1, -1, 1, -1]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("index 2"), "{msg}");
    }

    #[test]
    fn bound_enforced_even_without_negative_mass() {
        assert!(CdfLbFamily::new(4, Q::new(1, 5), vec![1; 4]).is_err());
        assert!(CdfLbFamily::new(4, Q::new(1, 10), vec![1, -1, 1, -1]).is_ok());
    }

    #[test]
    fn float_front_end() {
        let pmf = cdf_lb_family(3, 0.1, vec![1, 1, 1]).unwrap();
        assert!((pmf[0] - 0.35).abs() < 1e-12);
        assert!(cdf_lb_family(4, 0.3, vec![1; 4]).is_err());
        assert!(cdf_lb_family(4, 0.05, vec![1; 3]).is_err());
        assert!(cdf_lb_family(4, 0.05, vec![1, 0, 1, 1]).is_err());
    }

    fn config(k: usize, m: usize, eps: Q) -> MedianLbConfig {
        MedianLbConfig {
            k,
            m,
            epsilon: eps,
            sigma: vec![1; k],
        }
    }

    #[test]
    fn alpha_range() {
        let c = config(4, 1, Q::zero());
        for i in c.k + 1..3 * c.k {
            let a = c.alpha(i);
            assert!(a >= Q::from_integer(1) && a <= Q::from_integer(2));
        }
        assert_eq!(c.alpha(8), Q::from_integer(2));
    }

    #[test]
    fn offsets_for_k2() {
        assert_eq!(config(2, 1, Q::zero()).offsets(), vec![3, 5]);
        assert_eq!(config(4, 1, Q::zero()).offsets(), vec![5, 7, 9, 11]);
    }

    #[test]
    fn config_validation() {
        assert!(config(3, 1, Q::zero()).validate().is_err());
        assert!(config(2, 0, Q::zero()).validate().is_err());
        assert!(config(2, 1, Q::new(1, 16)).validate().is_ok());
        assert!(config(2, 1, Q::new(1, 15)).validate().is_err());
        let mut short = config(2, 1, Q::zero());
        short.sigma.pop();
        assert!(short.validate().is_err());
    }

    #[test]
    fn unperturbed_phase_one_is_uniform_on_n() {
        let c = config(2, 1, Q::zero());
        let pmf = c.phase_one_pmf();
        assert_eq!(pmf.len(), 9);
        assert!(pmf[..8].iter().all(|m| *m == Q::new(1, 8)));
        assert_eq!(pmf[8], Q::zero());
    }

    #[test]
    fn phase_two_schedule() {
        let c = config(2, 1, Q::zero());
        let mut adv = MedianLbAdversary::with_offset(c, 3, SimRng::seed_from_u64(1)).unwrap();
        let xs: Vec<_> = (0..16).map(|_| adv.next_sample(&History::EMPTY)).collect();
        assert!(xs[..8].iter().all(|x| (1..=8).contains(x)));
        assert_eq!(&xs[8..], &[8, 8, 8, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn drawn_offset_is_legal() {
        let c = config(2, 1, Q::new(1, 20));
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..64 {
            let adv = MedianLbAdversary::new(c.clone(), SimRng::seed_from_u64(s)).unwrap();
            seen.insert(adv.offset());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![3, 5]);
    }
}

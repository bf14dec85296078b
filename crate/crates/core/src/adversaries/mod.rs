//! Sample-producing opponents.
//!
//! An adversary commits to the sample for round `t` after seeing only the
//! history of rounds `1..t`: earlier queries, feedback bits and its own
//! earlier samples. The current query is never visible to it.

mod amplifier;
mod breaker;
mod families;

pub use amplifier::{amplifier_checkpoints, AnytimeAmplifier};
pub use breaker::{breaker_split, build_breaker_pair, BreakerPair, BreakerReport};
pub use families::{cdf_lb_family, CdfLbFamily, MedianLbAdversary, MedianLbConfig};

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

use crate::error::{Error, Result};
use crate::model::{Query, Sample};
use crate::seed::SimRng;

/// Revealed information from the rounds played so far.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub queries: &'a [Query],
    pub feedback: &'a [bool],
    pub samples: &'a [Sample],
}

impl<'a> History<'a> {
    pub const EMPTY: History<'static> = History {
        queries: &[],
        feedback: &[],
        samples: &[],
    };

    /// Rounds completed.
    pub fn rounds(&self) -> usize {
        self.queries.len()
    }

    /// The rounds from `start` onwards, as if the game began there.
    pub fn since(&self, start: usize) -> History<'a> {
        History {
            queries: &self.queries[start..],
            feedback: &self.feedback[start..],
            samples: &self.samples[start..],
        }
    }

    /// The first `len` rounds only.
    pub fn truncated(&self, len: usize) -> History<'a> {
        History {
            queries: &self.queries[..len],
            feedback: &self.feedback[..len],
            samples: &self.samples[..len],
        }
    }
}

pub trait Adversary: Send {
    fn n(&self) -> usize;

    fn next_sample(&mut self, history: &History<'_>) -> Sample;

    /// Longest game this adversary can play, if bounded.
    fn max_rounds(&self) -> Option<usize> {
        None
    }
}

impl<A: Adversary + ?Sized> Adversary for Box<A> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn next_sample(&mut self, history: &History<'_>) -> Sample {
        (**self).next_sample(history)
    }
    fn max_rounds(&self) -> Option<usize> {
        (**self).max_rounds()
    }
}

/// Checks a pmf over `1..=n+1`: at least two entries, all finite and
/// nonnegative, summing to one within `1e-9`.
pub fn validate_pmf(pmf: &[f64]) -> Result<()> {
    if pmf.len() < 2 {
        return Err(Error::param("pmf", format!("needs n+1 >= 2 entries, got {}", pmf.len())));
    }
    if let Some((i, p)) = pmf.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(Error::param("pmf", format!("mass at {} is {p}", i + 1)));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param("pmf", format!("masses sum to {total}, not 1")));
    }
    Ok(())
}

/// Cumulative sums `F(1), ..., F(n+1)` of a pmf, with the last pinned to 1.
pub fn pmf_to_cdf(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// I.i.d. draws from a fixed pmf on `1..=n+1`.
#[derive(Debug, Clone)]
pub struct StochasticAdversary {
    pmf: Vec<f64>,
    sampler: WeightedIndex<f64>,
    rng: SimRng,
}

impl StochasticAdversary {
    pub fn new(pmf: Vec<f64>, rng: SimRng) -> Result<Self> {
        validate_pmf(&pmf)?;
        let sampler = WeightedIndex::new(&pmf).map_err(|e| Error::param("pmf", e.to_string()))?;
        Ok(Self { pmf, sampler, rng })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
}

impl Adversary for StochasticAdversary {
    fn n(&self) -> usize {
        self.pmf.len() - 1
    }

    fn next_sample(&mut self, _history: &History<'_>) -> Sample {
        self.sampler.sample(&mut self.rng) + 1
    }
}

pub fn stochastic_adversary(pmf: Vec<f64>, rng: SimRng) -> Result<StochasticAdversary> {
    StochasticAdversary::new(pmf, rng)
}

/// Point mass at `j` in `1..=n+1`.
pub fn point_mass_pmf(n: usize, j: usize) -> Result<Vec<f64>> {
    crate::model::check_range("point mass", j, 1, n + 1)?;
    let mut pmf = vec![0.0; n + 1];
    pmf[j - 1] = 1.0;
    Ok(pmf)
}

/// Uniform on `1..=n`; the point `n+1` gets no mass.
pub fn uniform_pmf(n: usize) -> Vec<f64> {
    let mut pmf = vec![1.0 / n as f64; n + 1];
    pmf[n] = 0.0;
    pmf
}

pub fn uniform_adversary(n: usize, rng: SimRng) -> Result<StochasticAdversary> {
    if n < 2 {
        return Err(Error::param("n", "uniform adversary needs n >= 2"));
    }
    StochasticAdversary::new(uniform_pmf(n), rng)
}

/// Flips a fair coin once, then plays all 1s or all 2s.
#[derive(Debug, Clone)]
pub struct ConstantCoin {
    n: usize,
    value: Sample,
}

impl ConstantCoin {
    pub fn new(n: usize, rng: &mut SimRng) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "constant-coin adversary needs n >= 2"));
        }
        let value = if rng.random::<bool>() { 1 } else { 2 };
        Ok(Self { n, value })
    }

    pub fn value(&self) -> Sample {
        self.value
    }
}

impl Adversary for ConstantCoin {
    fn n(&self) -> usize {
        self.n
    }

    fn next_sample(&mut self, _history: &History<'_>) -> Sample {
        self.value
    }
}

pub fn constant_coin_adversary(n: usize, mut rng: SimRng) -> Result<ConstantCoin> {
    ConstantCoin::new(n, &mut rng)
}

/// Plays just above the previous query: `x_1 = n/2`, then
/// `x_t = min(q_{t-1} + 1, n + 1)`.
#[derive(Debug, Clone)]
pub struct MirrorAdversary {
    n: usize,
}

impl MirrorAdversary {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::param("n", format!("mirror adversary needs even n >= 2, got {n}")));
        }
        Ok(Self { n })
    }
}

impl Adversary for MirrorAdversary {
    fn n(&self) -> usize {
        self.n
    }

    fn next_sample(&mut self, history: &History<'_>) -> Sample {
        match history.queries.last() {
            None => self.n / 2,
            Some(&q) => (q + 1).min(self.n + 1),
        }
    }
}

/// Replays a fixed sequence.
#[derive(Debug, Clone)]
pub struct SequenceAdversary {
    n: usize,
    samples: Vec<Sample>,
    pos: usize,
}

impl SequenceAdversary {
    pub fn new(n: usize, samples: Vec<Sample>) -> Result<Self> {
        for &x in &samples {
            crate::model::check_range("sample", x, 1, n + 1)?;
        }
        Ok(Self { n, samples, pos: 0 })
    }
}

impl Adversary for SequenceAdversary {
    fn n(&self) -> usize {
        self.n
    }

    fn next_sample(&mut self, _history: &History<'_>) -> Sample {
        let x = self.samples[self.pos];
        self.pos += 1;
        x
    }

    fn max_rounds(&self) -> Option<usize> {
        Some(self.samples.len())
    }
}

/// Reads one integer sample per line; blank lines are skipped.
pub fn read_sequence<R: BufRead>(reader: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let x = s
            .parse::<Sample>()
            .map_err(|e| Error::Parse(format!("line {}: `{s}`: {e}", lineno + 1)))?;
        out.push(x);
    }
    Ok(out)
}

pub fn write_sequence<W: Write>(mut writer: W, samples: &[Sample]) -> Result<()> {
    for x in samples {
        writeln!(writer, "{x}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> SimRng {
        SimRng::seed_from_u64(seed)
    }

    fn draw(adv: &mut dyn Adversary, count: usize) -> Vec<Sample> {
        (0..count).map(|_| adv.next_sample(&History::EMPTY)).collect()
    }

    #[test]
    fn pmf_validation() {
        assert!(validate_pmf(&[0.5, 0.5]).is_ok());
        assert!(validate_pmf(&[1.0]).is_err());
        assert!(validate_pmf(&[0.5, 0.6]).is_err());
        assert!(validate_pmf(&[1.5, -0.5]).is_err());
        assert!(validate_pmf(&[f64::NAN, 1.0]).is_err());
        assert!(StochasticAdversary::new(vec![0.2, 0.2], rng(0)).is_err());
    }

    #[test]
    fn point_mass_is_constant() {
        let mut adv = StochasticAdversary::new(point_mass_pmf(5, 3).unwrap(), rng(1)).unwrap();
        assert!(draw(&mut adv, 200).iter().all(|&x| x == 3));
        assert!(point_mass_pmf(5, 7).is_err());
    }

    #[test]
    fn uniform_frequencies_and_support() {
        let n = 6;
        let draws = 100_000;
        let mut adv = uniform_adversary(n, rng(2)).unwrap();
        let xs = draw(&mut adv, draws);
        assert!(xs.iter().all(|&x| (1..=n).contains(&x)));
        let p = 1.0 / n as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for v in 1..=n {
            let f = xs.iter().filter(|&&x| x == v).count() as f64 / draws as f64;
            assert!((f - p).abs() < 4.0 * se, "value {v}: {f}");
        }
        let mean = xs.iter().sum::<usize>() as f64 / draws as f64;
        let sd = (((n * n - 1) as f64) / 12.0).sqrt();
        assert!((mean - (n + 1) as f64 / 2.0).abs() < 4.0 * sd / (draws as f64).sqrt());
    }

    #[test]
    fn constant_coin_is_fair() {
        let trials = 10_000;
        let ones = (0..trials)
            .filter(|&s| constant_coin_adversary(8, rng(s)).unwrap().value() == 1)
            .count();
        let se = (0.25 / trials as f64).sqrt();
        assert!((ones as f64 / trials as f64 - 0.5).abs() < 4.0 * se);

        let mut adv = constant_coin_adversary(8, rng(3)).unwrap();
        let first = adv.value();
        assert!(draw(&mut adv, 50).iter().all(|&x| x == first));
    }

    #[test]
    fn mirror_follows_previous_query() {
        let mut adv = MirrorAdversary::new(8).unwrap();
        assert_eq!(adv.next_sample(&History::EMPTY), 4);
        let h = History {
            queries: &[3],
            feedback: &[false],
            samples: &[4],
        };
        assert_eq!(adv.next_sample(&h), 4);
        let h = History {
            queries: &[3, 8],
            feedback: &[false, true],
            samples: &[4, 4],
        };
        assert_eq!(adv.next_sample(&h), 9);
        assert!(MirrorAdversary::new(7).is_err());
    }

    #[test]
    fn sequence_file_round_trip() {
        let xs = vec![3, 1, 4, 1, 5];
        let mut buf = Vec::new();
        write_sequence(&mut buf, &xs).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "3\n1\n4\n1\n5\n");
        assert_eq!(read_sequence(&buf[..]).unwrap(), xs);
        assert!(read_sequence(&b"1\nx\n"[..]).is_err());
        assert_eq!(read_sequence(&b"2\n\n3\n"[..]).unwrap(), vec![2, 3]);

        let mut adv = SequenceAdversary::new(5, xs.clone()).unwrap();
        assert_eq!(adv.max_rounds(), Some(5));
        assert_eq!(draw(&mut adv, 5), xs);
        assert!(SequenceAdversary::new(3, xs).is_err());
    }
}

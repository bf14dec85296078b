//! Named algorithms and adversaries, parsed from short strings such as
//! `boosted:0.05:meanest` or `cdf-lb:0.01:alt`, and built per run from a
//! derived seed.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::adversaries::{
    constant_coin_adversary, point_mass_pmf, read_sequence, uniform_adversary, Adversary,
    AnytimeAmplifier, CdfLbFamily, MedianLbAdversary, MedianLbConfig, MirrorAdversary,
    SequenceAdversary, StochasticAdversary,
};
use crate::error::{Error, Result};
use crate::estimators::{
    deterministic_baseline, CdfEst, CdfMedian, ConfidenceBoost, MeanEst, OnlineAlgorithm,
    QuantileReduction, SearchConfig, StochasticCdf, BASELINE_NAMES, DEFAULT_BOOST_CONSTANT,
};
use crate::model::{Metric, Sample};
use crate::seed::{child_seed, SimRng};

fn parse_f64(field: &'static str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::param(field, format!("`{s}` is not a number")))
}

fn parse_usize(field: &'static str, s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::param(field, format!("`{s}` is not a nonnegative integer")))
}

fn to_ratio(field: &'static str, x: f64) -> Result<Ratio<i64>> {
    Ratio::approximate_float(x).ok_or_else(|| Error::param(field, format!("{x} is not representable")))
}

/// What kind of snapshot an algorithm produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Cdf,
    Index,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AlgorithmSpec {
    CdfEst,
    CdfEstMedian,
    MeanEst,
    StochasticCdf,
    Quantile { tau: f64, inner: Box<AlgorithmSpec> },
    Boosted { delta: f64, inner: Box<AlgorithmSpec> },
    Baseline(String),
}

impl AlgorithmSpec {
    pub fn kind(&self) -> EstimateKind {
        match self {
            AlgorithmSpec::CdfEst | AlgorithmSpec::StochasticCdf => EstimateKind::Cdf,
            AlgorithmSpec::MeanEst => EstimateKind::Mean,
            AlgorithmSpec::CdfEstMedian | AlgorithmSpec::Quantile { .. } | AlgorithmSpec::Baseline(_) => {
                EstimateKind::Index
            }
            AlgorithmSpec::Boosted { inner, .. } => inner.kind(),
        }
    }

    pub fn default_metric(&self) -> Metric {
        match self {
            AlgorithmSpec::Quantile { tau, .. } => Metric::Quantile(*tau),
            AlgorithmSpec::Boosted { inner, .. } => inner.default_metric(),
            _ => match self.kind() {
                EstimateKind::Cdf => Metric::Cdf,
                EstimateKind::Index => Metric::Median,
                EstimateKind::Mean => Metric::Mean,
            },
        }
    }

    pub fn supports(&self, metric: &Metric) -> bool {
        matches!(
            (self.kind(), metric),
            (EstimateKind::Cdf, Metric::Cdf | Metric::Median)
                | (EstimateKind::Index, Metric::Median | Metric::Quantile(_))
                | (EstimateKind::Mean, Metric::Mean)
        )
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, AlgorithmSpec::Baseline(_))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            AlgorithmSpec::Quantile { tau, inner } => {
                if !(*tau > 0.0 && *tau < 1.0) {
                    return Err(Error::param("tau", format!("{tau} is outside (0, 1)")));
                }
                if inner.kind() != EstimateKind::Index {
                    return Err(Error::param("algorithm", format!("quantile needs a median estimator, got `{inner}`")));
                }
                inner.validate(n)
            }
            AlgorithmSpec::Boosted { delta, inner } => {
                crate::estimators::boost_copies(*delta, DEFAULT_BOOST_CONSTANT)?;
                inner.validate(n)
            }
            AlgorithmSpec::Baseline(name) if deterministic_baseline(name, n).is_none() => Err(Error::param(
                "algorithm",
                format!("unknown baseline `{name}` (known: {})", BASELINE_NAMES.join(", ")),
            )),
            _ => Ok(()),
        }
    }

    pub fn build(&self, n: usize, seed: u64) -> Result<Box<dyn OnlineAlgorithm>> {
        let rng = || SimRng::seed_from_u64(seed);
        Ok(match self {
            AlgorithmSpec::CdfEst => Box::new(CdfEst::new(n, rng())),
            AlgorithmSpec::CdfEstMedian => Box::new(CdfMedian::new(n, rng())),
            AlgorithmSpec::MeanEst => Box::new(MeanEst::new(n, rng())),
            AlgorithmSpec::StochasticCdf => Box::new(StochasticCdf::new(n, SearchConfig::default(), rng())),
            AlgorithmSpec::Quantile { tau, inner } => {
                let inner = inner.build(n, child_seed(seed, 0))?;
                Box::new(QuantileReduction::new(inner, *tau, SimRng::seed_from_u64(child_seed(seed, 1)))?)
            }
            AlgorithmSpec::Boosted { delta, inner } => {
                inner.validate(n)?;
                let factory = |i: usize| {
                    inner
                        .build(n, child_seed(seed, i as u64 + 1))
                        .expect("validated inner algorithm")
                };
                Box::new(ConfidenceBoost::new(factory, *delta, DEFAULT_BOOST_CONSTANT, SimRng::seed_from_u64(child_seed(seed, 0)))?)
            }
            AlgorithmSpec::Baseline(name) => deterministic_baseline(name, n)
                .ok_or_else(|| Error::param("algorithm", format!("unknown baseline `{name}`")))?,
        })
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmSpec::CdfEst => write!(f, "cdfest"),
            AlgorithmSpec::CdfEstMedian => write!(f, "cdfest-median"),
            AlgorithmSpec::MeanEst => write!(f, "meanest"),
            AlgorithmSpec::StochasticCdf => write!(f, "stochastic-cdf"),
            AlgorithmSpec::Quantile { tau, inner } => write!(f, "quantile:{tau}:{inner}"),
            AlgorithmSpec::Boosted { delta, inner } => write!(f, "boosted:{delta}:{inner}"),
            AlgorithmSpec::Baseline(name) => write!(f, "{name}"),
        }
    }
}

impl FromStr for AlgorithmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("cdfest", None) => Ok(AlgorithmSpec::CdfEst),
            ("cdfest-median", None) => Ok(AlgorithmSpec::CdfEstMedian),
            ("meanest", None) => Ok(AlgorithmSpec::MeanEst),
            ("stochastic-cdf", None) => Ok(AlgorithmSpec::StochasticCdf),
            ("quantile", Some(r)) => {
                let (tau, inner) = match r.split_once(':') {
                    Some((t, i)) => (t, i.parse()?),
                    None => (r, AlgorithmSpec::CdfEstMedian),
                };
                Ok(AlgorithmSpec::Quantile {
                    tau: parse_f64("tau", tau)?,
                    inner: Box::new(inner),
                })
            }
            ("boosted", Some(r)) => {
                let (delta, inner) = r
                    .split_once(':')
                    .ok_or_else(|| Error::param("algorithm", "expected boosted:<delta>:<inner>"))?;
                Ok(AlgorithmSpec::Boosted {
                    delta: parse_f64("delta", delta)?,
                    inner: Box::new(inner.parse()?),
                })
            }
            (name, None) if BASELINE_NAMES.contains(&name) => Ok(AlgorithmSpec::Baseline(name.to_string())),
            _ => Err(Error::param("algorithm", format!("unrecognized algorithm `{s}`"))),
        }
    }
}

impl TryFrom<String> for AlgorithmSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AlgorithmSpec> for String {
    fn from(a: AlgorithmSpec) -> String {
        a.to_string()
    }
}

/// Sign vectors for the perturbed families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignPattern {
    Plus,
    Alternating,
    /// Drawn per run from the adversary's stream.
    Random,
    Explicit(Vec<i8>),
}

impl SignPattern {
    fn signs(&self, len: usize, rng: &mut SimRng) -> Result<Vec<i8>> {
        Ok(match self {
            SignPattern::Plus => vec![1; len],
            SignPattern::Alternating => (0..len).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(),
            SignPattern::Random => (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
            SignPattern::Explicit(v) => {
                if v.len() != len {
                    return Err(Error::param("sigma", format!("expected {len} signs, got {}", v.len())));
                }
                v.clone()
            }
        })
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignPattern::Plus => write!(f, "plus"),
            SignPattern::Alternating => write!(f, "alt"),
            SignPattern::Random => write!(f, "random"),
            SignPattern::Explicit(v) => {
                for s in v {
                    write!(f, "{}", if *s > 0 { '+' } else { '-' })?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for SignPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+1" => Ok(SignPattern::Plus),
            "alt" => Ok(SignPattern::Alternating),
            "random" => Ok(SignPattern::Random),
            _ if !s.is_empty() && s.chars().all(|c| c == '+' || c == '-') => Ok(SignPattern::Explicit(
                s.chars().map(|c| if c == '+' { 1 } else { -1 }).collect(),
            )),
            _ => Err(Error::param("sigma", format!("`{s}` is not plus, alt, random or a +/- string"))),
        }
    }
}

/// Game parameters an adversary may depend on.
#[derive(Debug, Clone, Copy)]
pub struct BuildContext {
    pub n: usize,
    pub horizon: usize,
    /// Fallback perturbation for `cdf-lb` without an explicit epsilon.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AdversarySpec {
    Uniform,
    PointMass(usize),
    CdfLb { epsilon: Option<f64>, sigma: SignPattern },
    MedianLb { k: usize, m: usize, epsilon: f64, sigma: SignPattern },
    Coin,
    Mirror,
    Sequence { path: PathBuf, samples: Arc<Vec<Sample>> },
    Amplified { t0: usize, inner: Box<AdversarySpec> },
}

impl AdversarySpec {
    /// Loads a sequence file eagerly so a bad path fails at parse time.
    pub fn sequence(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = std::fs::File::open(&path)
            .map_err(|e| Error::param("adversary", format!("cannot open {}: {e}", path.display())))?;
        let samples = read_sequence(std::io::BufReader::new(file))?;
        Ok(AdversarySpec::Sequence {
            path,
            samples: Arc::new(samples),
        })
    }

    /// Checks everything that can fail, by building one instance.
    pub fn validate(&self, ctx: &BuildContext) -> Result<()> {
        match self {
            AdversarySpec::MedianLb { k, m, .. } => {
                if ctx.n != 4 * k {
                    return Err(Error::param("n", format!("median-lb with k = {k} needs n = {}, got {}", 4 * k, ctx.n)));
                }
                if ctx.horizon != 2 * ctx.n * m {
                    return Err(Error::param(
                        "T",
                        format!("median-lb needs T = 2nm = {}, got {}", 2 * ctx.n * m, ctx.horizon),
                    ));
                }
            }
            AdversarySpec::Sequence { samples, .. } if samples.len() < ctx.horizon => {
                return Err(Error::param(
                    "T",
                    format!("sequence has {} samples but T = {}", samples.len(), ctx.horizon),
                ));
            }
            AdversarySpec::Amplified { inner, .. } if matches!(**inner, AdversarySpec::Sequence { .. }) => {
                return Err(Error::param("adversary", "a fixed sequence cannot be amplified"));
            }
            _ => {}
        }
        let adv = self.build(ctx, 0)?;
        if adv.n() != ctx.n {
            return Err(Error::param("n", format!("adversary plays on n = {}, game has n = {}", adv.n(), ctx.n)));
        }
        Ok(())
    }

    pub fn build(&self, ctx: &BuildContext, seed: u64) -> Result<Box<dyn Adversary>> {
        let mut rng = SimRng::seed_from_u64(seed);
        let n = ctx.n;
        Ok(match self {
            AdversarySpec::Uniform => Box::new(uniform_adversary(n, rng)?),
            AdversarySpec::PointMass(j) => Box::new(StochasticAdversary::new(point_mass_pmf(n, *j)?, rng)?),
            AdversarySpec::CdfLb { epsilon, sigma } => {
                let eps = to_ratio("epsilon", epsilon.unwrap_or(ctx.epsilon))?;
                let signs = sigma.signs(n, &mut rng)?;
                let family = CdfLbFamily::new(n, eps, signs)?;
                Box::new(StochasticAdversary::new(family.pmf_f64(), rng)?)
            }
            AdversarySpec::MedianLb { k, m, epsilon, sigma } => {
                let config = MedianLbConfig {
                    k: *k,
                    m: *m,
                    epsilon: to_ratio("epsilon", *epsilon)?,
                    sigma: sigma.signs(*k, &mut rng)?,
                };
                Box::new(MedianLbAdversary::new(config, rng)?)
            }
            AdversarySpec::Coin => Box::new(constant_coin_adversary(n, rng)?),
            AdversarySpec::Mirror => Box::new(MirrorAdversary::new(n)?),
            AdversarySpec::Sequence { samples, .. } => Box::new(SequenceAdversary::new(n, samples.to_vec())?),
            AdversarySpec::Amplified { t0, inner } => {
                let inner = (**inner).clone();
                let ctx = *ctx;
                let first = inner.build_segment(&ctx, *t0, child_seed(seed, 0))?;
                let mut segment = 0u64;
                let mut first = Some(first);
                Box::new(AnytimeAmplifier::new(*t0, move |len| {
                    if let Some(a) = first.take() {
                        return a;
                    }
                    segment += 1;
                    inner
                        .build_segment(&ctx, len, child_seed(seed, segment))
                        .expect("segment adversary validated by the first segment")
                }))
            }
        })
    }

    /// The sampling distribution of an i.i.d. adversary, or `None` for
    /// adversaries that are not i.i.d.
    pub fn population_pmf(&self, ctx: &BuildContext, seed: u64) -> Result<Option<Vec<f64>>> {
        let mut rng = SimRng::seed_from_u64(seed);
        Ok(match self {
            AdversarySpec::Uniform => Some(crate::adversaries::uniform_pmf(ctx.n)),
            AdversarySpec::PointMass(j) => Some(point_mass_pmf(ctx.n, *j)?),
            AdversarySpec::CdfLb { epsilon, sigma } => {
                let eps = to_ratio("epsilon", epsilon.unwrap_or(ctx.epsilon))?;
                Some(CdfLbFamily::new(ctx.n, eps, sigma.signs(ctx.n, &mut rng)?)?.pmf_f64())
            }
            _ => None,
        })
    }

    /// A fixed-horizon instance for one amplifier segment of length `len`.
    /// The two-phase median adversary is sized to the shortest horizon
    /// `2nm >= len` and the segment plays its prefix.
    fn build_segment(&self, ctx: &BuildContext, len: usize, seed: u64) -> Result<Box<dyn Adversary>> {
        let mut seg = BuildContext { horizon: len, ..*ctx };
        let spec = match self {
            AdversarySpec::MedianLb { k, epsilon, sigma, .. } => {
                let m = len.div_ceil(2 * ctx.n).max(1);
                seg.horizon = 2 * ctx.n * m;
                AdversarySpec::MedianLb {
                    k: *k,
                    m,
                    epsilon: *epsilon,
                    sigma: sigma.clone(),
                }
            }
            other => other.clone(),
        };
        spec.build(&seg, seed)
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::Uniform => write!(f, "uniform"),
            AdversarySpec::PointMass(j) => write!(f, "point-mass:{j}"),
            AdversarySpec::CdfLb { epsilon: None, sigma } => write!(f, "cdf-lb::{sigma}"),
            AdversarySpec::CdfLb { epsilon: Some(e), sigma } => write!(f, "cdf-lb:{e}:{sigma}"),
            AdversarySpec::MedianLb { k, m, epsilon, sigma } => write!(f, "median-lb:{k}:{m}:{epsilon}:{sigma}"),
            AdversarySpec::Coin => write!(f, "coin"),
            AdversarySpec::Mirror => write!(f, "mirror"),
            AdversarySpec::Sequence { path, .. } => write!(f, "sequence:{}", path.display()),
            AdversarySpec::Amplified { t0, inner } => write!(f, "amplified:{t0}:{inner}"),
        }
    }
}

impl FromStr for AdversarySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let bad = || Error::param("adversary", format!("unrecognized adversary `{s}`"));
        match (head, rest) {
            ("uniform", None) => Ok(AdversarySpec::Uniform),
            ("coin", None) => Ok(AdversarySpec::Coin),
            ("mirror", None) => Ok(AdversarySpec::Mirror),
            ("point-mass", Some(j)) => Ok(AdversarySpec::PointMass(parse_usize("j", j)?)),
            ("cdf-lb", rest) => {
                let mut parts = rest.unwrap_or("").splitn(2, ':');
                let epsilon = match parts.next() {
                    None | Some("") => None,
                    Some(e) => Some(parse_f64("epsilon", e)?),
                };
                let sigma = parts.next().map(str::parse).transpose()?.unwrap_or(SignPattern::Plus);
                Ok(AdversarySpec::CdfLb { epsilon, sigma })
            }
            ("median-lb", Some(r)) => {
                let parts: Vec<&str> = r.split(':').collect();
                if !(3..=4).contains(&parts.len()) {
                    return Err(Error::param("adversary", "expected median-lb:<k>:<m>:<epsilon>[:<sigma>]"));
                }
                Ok(AdversarySpec::MedianLb {
                    k: parse_usize("k", parts[0])?,
                    m: parse_usize("m", parts[1])?,
                    epsilon: parse_f64("epsilon", parts[2])?,
                    sigma: parts.get(3).map(|p| p.parse()).transpose()?.unwrap_or(SignPattern::Random),
                })
            }
            ("sequence", Some(path)) => AdversarySpec::sequence(path),
            ("amplified", Some(r)) => {
                let (t0, inner) = match r.split_once(':') {
                    Some((t, i)) if t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty() => {
                        (parse_usize("t0", t)?, i)
                    }
                    _ => (1, r),
                };
                if t0 == 0 {
                    return Err(Error::param("t0", "first segment must be nonempty"));
                }
                Ok(AdversarySpec::Amplified {
                    t0,
                    inner: Box::new(inner.parse()?),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for AdversarySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AdversarySpec> for String {
    fn from(a: AdversarySpec) -> String {
        a.to_string()
    }
}

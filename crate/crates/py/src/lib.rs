//! Python bindings for the threshold arena.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

use arena::adversaries::build_breaker_pair;
use arena::arena::{monte_carlo as mc, run_game_seeded, GameConfig};
use arena::cli::parse_metric;
use arena::estimators::{
    self, DistributionOracle, OnlineAlgorithm, SearchConfig,
};
use arena::model::{self, EmpiricalCdf, Estimate};
use arena::registry::AlgorithmSpec;
use arena::seed::SimRng;

fn py_err(e: arena::Error) -> PyErr {
    if e.is_protocol() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn ecdf(samples: &[usize], n: usize) -> PyResult<EmpiricalCdf> {
    EmpiricalCdf::from_samples(samples, n).map_err(py_err)
}

fn estimate_to_py<'py>(py: Python<'py>, e: &Estimate) -> PyResult<Bound<'py, PyAny>> {
    Ok(match e {
        Estimate::Cdf(c) => c.values().to_vec().into_pyobject(py)?.into_any(),
        Estimate::Index(m) => m.into_pyobject(py)?.into_any(),
        Estimate::Mean(mu) => mu.into_pyobject(py)?.into_any(),
    })
}

/// `1(x <= q)`.
#[pyfunction]
fn feedback(sample: usize, query: usize) -> bool {
    model::feedback(sample, query)
}

/// `F(1), ..., F(n+1)` of the samples.
#[pyfunction]
fn empirical_cdf(samples: Vec<usize>, n: usize) -> PyResult<Vec<f64>> {
    Ok(ecdf(&samples, n)?.values()[1..].to_vec())
}

#[pyfunction]
fn quantile_error(samples: Vec<usize>, n: usize, m_hat: usize, tau: f64) -> PyResult<f64> {
    model::quantile_error(&ecdf(&samples, n)?, m_hat, tau).map_err(py_err)
}

/// KS distance between an estimate of length `n+1` and the samples' ECDF.
#[pyfunction]
fn ks_distance(estimate: Vec<f64>, samples: Vec<usize>) -> PyResult<f64> {
    let est = model::CdfEstimate::new(estimate).map_err(py_err)?;
    model::ks_distance(&est, &ecdf(&samples, est.n())?).map_err(py_err)
}

#[pyfunction]
fn mean_error(mu_hat: f64, mu: f64, n: usize) -> f64 {
    model::mean_error(mu_hat, mu, n)
}

#[pyfunction]
fn median_from_cdf(estimate: Vec<f64>) -> PyResult<usize> {
    Ok(estimators::median_from_cdf(&model::CdfEstimate::new(estimate).map_err(py_err)?))
}

/// Online CDF estimator with uniform random queries.
#[pyclass(module = "threshold_arena")]
struct CdfEst(estimators::CdfEst);

#[pymethods]
impl CdfEst {
    #[new]
    #[pyo3(signature = (n, seed = 0))]
    fn new(n: usize, seed: u64) -> PyResult<Self> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be at least 1"));
        }
        Ok(Self(estimators::CdfEst::new(n, SimRng::seed_from_u64(seed))))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn next_query(&mut self) -> usize {
        self.0.next_query()
    }

    fn observe(&mut self, feedback: bool) {
        self.0.observe(feedback)
    }

    /// Current estimate `F_hat(1), ..., F_hat(n+1)`.
    fn estimate(&self) -> PyResult<Vec<f64>> {
        match self.0.snapshot().map_err(py_err)? {
            Estimate::Cdf(c) => Ok(c.values().to_vec()),
            _ => unreachable!("CdfEst reports a CDF"),
        }
    }
}

/// Online mean estimator with uniform random queries.
#[pyclass(module = "threshold_arena")]
struct MeanEst(estimators::MeanEst);

#[pymethods]
impl MeanEst {
    #[new]
    #[pyo3(signature = (n, seed = 0))]
    fn new(n: usize, seed: u64) -> PyResult<Self> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be at least 1"));
        }
        Ok(Self(estimators::MeanEst::new(n, SimRng::seed_from_u64(seed))))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn next_query(&mut self) -> usize {
        self.0.next_query()
    }

    fn observe(&mut self, feedback: bool) {
        self.0.observe(feedback)
    }

    fn estimate(&self) -> PyResult<f64> {
        match self.0.snapshot().map_err(py_err)? {
            Estimate::Mean(mu) => Ok(mu),
            _ => unreachable!("MeanEst reports a mean"),
        }
    }
}

fn oracle(pmf: Vec<f64>, seed: u64) -> PyResult<DistributionOracle> {
    DistributionOracle::new(pmf, SimRng::seed_from_u64(seed)).map_err(py_err)
}

/// Searches for the first coin whose heads probability passes `tau`.
/// `coin(i)` flips coin `i` in `1..=n` and returns a bool.
#[pyfunction]
#[pyo3(signature = (coin, n, tau = 0.5, seed = 0))]
fn noisy_binary_search<'py>(py: Python<'py>, coin: Bound<'py, PyAny>, n: usize, tau: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let mut failure = None;
    let mut rng = SimRng::seed_from_u64(seed);
    let out = estimators::noisy_binary_search(
        |i| {
            if failure.is_some() {
                return false;
            }
            match coin.call1((i,)).and_then(|r| r.extract::<bool>()) {
                Ok(b) => b,
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }
        },
        n,
        tau,
        &SearchConfig::default(),
        &mut rng,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let d = PyDict::new(py);
    d.set_item("index", out.index)?;
    d.set_item("queries", out.queries)?;
    d.set_item("capped", out.capped)?;
    Ok(d)
}

/// Approximate `tau`-quantile of the pmf on `1..=n+1` from comparisons.
#[pyfunction]
#[pyo3(signature = (pmf, tau = 0.5, seed = 0))]
fn boosted_quantile<'py>(py: Python<'py>, pmf: Vec<f64>, tau: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let mut o = oracle(pmf, seed)?;
    let mut rng = SimRng::seed_from_u64(seed.wrapping_add(1));
    let out = estimators::boosted_quantile(&mut o, tau, &SearchConfig::default(), &mut rng);
    let d = PyDict::new(py);
    d.set_item("index", out.index)?;
    d.set_item("queries", out.queries)?;
    d.set_item("trial_indices", out.trial_indices)?;
    Ok(d)
}

/// CDF estimate of the pmf on `1..=n+1` stitched from eight quantile anchors.
#[pyfunction]
#[pyo3(signature = (pmf, seed = 0))]
fn stochastic_cdf<'py>(py: Python<'py>, pmf: Vec<f64>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let mut o = oracle(pmf, seed)?;
    let out = estimators::stochastic_cdf(&mut o, &SearchConfig::default(), SimRng::seed_from_u64(seed.wrapping_add(1)));
    let d = PyDict::new(py);
    d.set_item("estimate", out.estimate.values().to_vec())?;
    d.set_item("anchors", out.anchors.0.to_vec())?;
    d.set_item("queries", out.queries)?;
    d.set_item("ks", model::ks_distance_to(&out.estimate, &o.population_cdf()).map_err(py_err)?)?;
    Ok(d)
}

fn config(algorithm: &str, adversary: &str, n: usize, horizon: usize, seed: u64, metric: Option<&str>, epsilon: f64) -> PyResult<GameConfig> {
    let mut cfg = GameConfig::new(
        n,
        horizon,
        algorithm.parse().map_err(py_err)?,
        adversary.parse().map_err(py_err)?,
    )
    .with_seed(seed)
    .with_epsilon(epsilon);
    if let Some(m) = metric {
        cfg = cfg.with_metric(parse_metric(m).map_err(py_err)?);
    }
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Plays one game and returns its per-round record.
#[pyfunction]
#[pyo3(signature = (algorithm, adversary, n, horizon, seed = 0, metric = None, epsilon = 0.25, run = 0))]
#[allow(clippy::too_many_arguments)]
fn run_game<'py>(
    py: Python<'py>,
    algorithm: &str,
    adversary: &str,
    n: usize,
    horizon: usize,
    seed: u64,
    metric: Option<&str>,
    epsilon: f64,
    run: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(algorithm, adversary, n, horizon, seed, metric, epsilon)?;
    let traj = run_game_seeded(&cfg, run).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("metric", cfg.metric().name())?;
    d.set_item("queries", traj.rounds.iter().map(|r| r.query).collect::<Vec<_>>())?;
    d.set_item("feedback", traj.rounds.iter().map(|r| r.feedback).collect::<Vec<_>>())?;
    d.set_item("samples", traj.samples())?;
    d.set_item("errors", traj.errors.clone())?;
    if let Some(e) = &traj.final_estimate {
        d.set_item("final_estimate", estimate_to_py(py, e)?)?;
    }
    Ok(d)
}

/// Plays `runs` seeded games and returns per-round statistics.
#[pyfunction]
#[pyo3(signature = (algorithm, adversary, n, horizon, runs, seed = 0, metric = None, epsilon = 0.25))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo<'py>(
    py: Python<'py>,
    algorithm: &str,
    adversary: &str,
    n: usize,
    horizon: usize,
    runs: usize,
    seed: u64,
    metric: Option<&str>,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(algorithm, adversary, n, horizon, seed, metric, epsilon)?;
    let s = py.detach(|| mc(&cfg, runs)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("runs", s.runs)?;
    d.set_item("mean_error", s.mean_error)?;
    d.set_item("mse", s.mse)?;
    d.set_item("mse_se", s.mse_se)?;
    d.set_item("success_rate", s.success_rate)?;
    d.set_item("final_errors", s.final_errors)?;
    d.set_item("final_pointwise_mse", s.final_pointwise_mse)?;
    Ok(d)
}

/// Builds the indistinguishable sequence pair for a deterministic median
/// estimator and scores it on both.
#[pyfunction]
fn breaker<'py>(py: Python<'py>, algorithm: &str, n: usize, horizon: usize) -> PyResult<Bound<'py, PyDict>> {
    let spec: AlgorithmSpec = algorithm.parse().map_err(py_err)?;
    spec.validate(n).map_err(py_err)?;
    let mut instance = 0u64;
    let mut factory = || -> Box<dyn OnlineAlgorithm> {
        instance += 1;
        spec.build(n, instance).expect("validated algorithm")
    };
    let pair = build_breaker_pair(&mut factory, n, horizon).map_err(py_err)?;
    let report = pair.replay(&mut factory).map_err(py_err)?;
    let ratio = |num: &i64, den: &i64| *num as f64 / *den as f64;
    let d = PyDict::new(py);
    d.set_item("left", pair.left.clone())?;
    d.set_item("right", pair.right.clone())?;
    d.set_item("feedback_identical", report.feedback_identical)?;
    d.set_item("estimate", report.estimate)?;
    d.set_item("error_left", ratio(report.error_left.numer(), report.error_left.denom()))?;
    d.set_item("error_right", ratio(report.error_right.numer(), report.error_right.denom()))?;
    d.set_item("separation", ratio(report.separation.numer(), report.separation.denom()))?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "threshold_arena")]
fn threshold_arena(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(feedback, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_error, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mean_error, m)?)?;
    m.add_function(wrap_pyfunction!(median_from_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_binary_search, m)?)?;
    m.add_function(wrap_pyfunction!(boosted_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(stochastic_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(run_game, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(breaker, m)?)?;
    m.add_class::<CdfEst>()?;
    m.add_class::<MeanEst>()?;
    Ok(())
}

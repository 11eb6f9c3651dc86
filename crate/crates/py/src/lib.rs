use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rough_sabr::mc::{self, McConfig, Scheme};
use rough_sabr::pricing::{self, Convention, OptionQuote};
use rough_sabr::sabr_formula::{self, SmileRequest, SmileSource, Strikes};
use rough_sabr::{smile_ode, BetaSpec, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_beta(beta: &Bound<'_, PyAny>) -> PyResult<BetaSpec> {
    if let Ok(p) = beta.extract::<f64>() {
        return BetaSpec::power(p).map_err(err);
    }
    let name: String = beta.extract()?;
    match name.as_str() {
        "lognormal" => Ok(BetaSpec::Lognormal),
        "normal" => Ok(BetaSpec::Normal),
        "sqrt" => BetaSpec::power(0.5).map_err(err),
        _ => Err(PyValueError::new_err(format!(
            "beta must be 'lognormal', 'normal', 'sqrt' or a power in (0, 1), got {name:?}"
        ))),
    }
}

fn convention(name: &str) -> PyResult<Convention> {
    match name {
        "bs" | "black_scholes" => Ok(Convention::BlackScholes),
        "bachelier" => Ok(Convention::Bachelier),
        _ => Err(PyValueError::new_err(format!("unknown convention {name:?}"))),
    }
}

/// Rough SABR parameters (H, eta, rho, beta).
#[pyclass(name = "ModelParams", module = "rough_sabr_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: rough_sabr::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (hurst, eta, rho, beta = None))]
    fn new(hurst: f64, eta: f64, rho: f64, beta: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let beta = match beta {
            Some(b) => parse_beta(b)?,
            None => BetaSpec::Lognormal,
        };
        let inner = rough_sabr::ModelParams::new(hurst, eta, rho, beta).map_err(err)?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn hurst(&self) -> f64 {
        self.inner.hurst()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    #[getter]
    fn beta(&self) -> String {
        self.inner.beta().label()
    }

    fn kappa(&self, t: f64) -> PyResult<f64> {
        self.inner.kappa(t).map_err(err)
    }

    /// η τ^H
    fn expansion_parameter(&self, tau: f64) -> f64 {
        self.inner.expansion_parameter(tau)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(hurst={}, eta={}, rho={}, beta={:?})",
            self.inner.hurst(),
            self.inner.eta(),
            self.inner.rho(),
            self.inner.beta().label()
        )
    }
}

/// Forward variance curve ξ₀(s).
#[pyclass(name = "ForwardVarianceCurve", module = "rough_sabr_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCurve {
    inner: rough_sabr::ForwardVarianceCurve,
}

#[pymethods]
impl PyCurve {
    #[staticmethod]
    fn flat(xi: f64) -> PyResult<Self> {
        let inner = rough_sabr::ForwardVarianceCurve::flat(xi).map_err(err)?;
        Ok(PyCurve { inner })
    }

    #[staticmethod]
    fn piecewise_constant(knots: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        let inner = rough_sabr::ForwardVarianceCurve::piecewise_constant(knots, values).map_err(err)?;
        Ok(PyCurve { inner })
    }

    #[staticmethod]
    fn classical_sabr(alpha0: f64, eta: f64) -> PyResult<Self> {
        let inner = rough_sabr::ForwardVarianceCurve::classical_sabr(alpha0, eta).map_err(err)?;
        Ok(PyCurve { inner })
    }

    /// Load a `t,xi` CSV.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let inner = rough_sabr::ForwardVarianceCurve::from_csv_path(path).map_err(err)?;
        Ok(PyCurve { inner })
    }

    fn value(&self, s: f64) -> PyResult<f64> {
        self.inner.value(s).map_err(err)
    }

    fn integral(&self, a: f64, b: f64) -> PyResult<f64> {
        self.inner.integral(a, b).map_err(err)
    }

    #[pyo3(signature = (tau, t = 0.0))]
    fn average_vol(&self, tau: f64, t: f64) -> PyResult<f64> {
        rough_sabr::average_vol_u(&self.inner, t, tau).map_err(err)
    }

    #[pyo3(signature = (params, tau, t = 0.0))]
    fn kernel_ratio(&self, params: &PyModelParams, tau: f64, t: f64) -> PyResult<f64> {
        rough_sabr::kernel_ratio_r(&self.inner, &params.inner, t, tau).map_err(err)
    }
}

/// Tabulated numerical solution of the smile ODE.
#[pyclass(name = "OdeSolution", module = "rough_sabr_py")]
struct PyOdeSolution {
    inner: rough_sabr::OdeSolution,
}

#[pymethods]
impl PyOdeSolution {
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y_grid().to_vec()
    }

    #[getter]
    fn g(&self) -> Vec<f64> {
        self.inner.g_values().to_vec()
    }

    #[getter(G)]
    fn big_g(&self) -> Vec<f64> {
        self.inner.big_g_values().to_vec()
    }

    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f_values().to_vec()
    }

    fn g_at(&self, y: f64) -> PyResult<f64> {
        self.inner.g_at(y).map_err(err)
    }

    #[pyo3(name = "G_at")]
    fn big_g_at(&self, y: f64) -> PyResult<f64> {
        self.inner.big_g_at(y).map_err(err)
    }

    fn f_at(&self, y: f64) -> PyResult<f64> {
        self.inner.f_at(y).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (hurst, rho, y_max = 10.0, spacing = 1e-3, rel_tol = 1e-10))]
fn solve_ode(hurst: f64, rho: f64, y_max: f64, spacing: f64, rel_tol: f64) -> PyResult<PyOdeSolution> {
    let opts = rough_sabr::OdeOptions {
        y_max,
        spacing,
        rel_tol,
        ..Default::default()
    };
    let inner = rough_sabr::solve_ode(hurst, rho, &opts).map_err(err)?;
    Ok(PyOdeSolution { inner })
}

/// Closed-form interpolation G_A(y).
#[pyfunction]
#[pyo3(name = "G_approx")]
fn big_g_approx(hurst: f64, rho: f64, y: f64) -> PyResult<f64> {
    smile_ode::g_approx(hurst, rho, y).map_err(err)
}

#[pyfunction]
fn f_approx(hurst: f64, rho: f64, y: f64) -> PyResult<f64> {
    smile_ode::f_approx(hurst, rho, y).map_err(err)
}

#[pyfunction]
fn series_coefficients<'py>(py: Python<'py>, hurst: f64, rho: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = smile_ode::series_coefficients(hurst, rho);
    let d = PyDict::new(py);
    d.set_item("a", c.a)?;
    d.set_item("b", c.b)?;
    d.set_item("f_skew", c.f_skew)?;
    d.set_item("f_curv", c.f_curv)?;
    Ok(d)
}

fn strikes_arg(strikes: Option<Vec<f64>>, log_strikes: Option<Vec<f64>>) -> PyResult<Strikes> {
    match (strikes, log_strikes) {
        (Some(k), None) => Ok(Strikes::Absolute(k)),
        (None, Some(k)) => Ok(Strikes::LogStrikes(k)),
        _ => Err(PyValueError::new_err("give exactly one of strikes or log_strikes")),
    }
}

/// Rough SABR formula smile as a dict of columns plus metadata.
#[pyfunction]
#[pyo3(signature = (params, curve, tau, strikes = None, log_strikes = None, spot = 1.0, source = "ode", atm_vol = None))]
#[allow(clippy::too_many_arguments)]
fn rough_sabr_smile<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    curve: &PyCurve,
    tau: f64,
    strikes: Option<Vec<f64>>,
    log_strikes: Option<Vec<f64>>,
    spot: f64,
    source: &str,
    atm_vol: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let source = match source {
        "ode" => SmileSource::NumericalOde,
        "approx" => SmileSource::ClosedFormApprox,
        _ => return Err(PyValueError::new_err(format!("source must be 'ode' or 'approx', got {source:?}"))),
    };
    let req = SmileRequest {
        spot,
        tau,
        strikes: strikes_arg(strikes, log_strikes)?,
        params: params.inner.clone(),
        curve: curve.inner.clone(),
        atm_vol_override: atm_vol,
        source,
    };
    let table = sabr_formula::rough_sabr_smile(&req).map_err(err)?;
    let d = PyDict::new(py);
    let col = |f: fn(&sabr_formula::SmileRow) -> f64| table.rows.iter().map(f).collect::<Vec<_>>();
    d.set_item("strike", col(|r| r.strike))?;
    d.set_item("k", col(|r| r.k))?;
    d.set_item("k_beta", col(|r| r.k_beta))?;
    d.set_item("y_k", col(|r| r.y_k))?;
    d.set_item("y_kbeta", col(|r| r.y_kbeta))?;
    d.set_item("iv", col(|r| r.iv))?;
    d.set_item("iv_normalized", col(|r| r.iv_normalized))?;
    let m = &table.metadata;
    d.set_item("atm_vol", m.atm_vol)?;
    d.set_item("average_vol_u", m.average_vol_u)?;
    d.set_item("eta_tau_h", m.eta_tau_h)?;
    d.set_item("eta_tauH_warning", m.eta_tau_h_warning)?;
    Ok(d)
}

/// Monte Carlo smile as a dict of columns plus run metadata.
#[pyfunction]
#[pyo3(signature = (params, curve, tau, strikes, spot = 1.0, n_paths = 200_000, n_steps = 512, seed = 1, horizon = None, scheme = "hybrid", antithetic = true, threads = 0))]
#[allow(clippy::too_many_arguments)]
fn mc_smile<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    curve: &PyCurve,
    tau: f64,
    strikes: Vec<f64>,
    spot: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    horizon: Option<f64>,
    scheme: &str,
    antithetic: bool,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = McConfig::new(n_paths, n_steps, horizon.unwrap_or(tau), seed);
    cfg.scheme = match scheme {
        "hybrid" => Scheme::Hybrid,
        "cholesky" => Scheme::ExactCholesky,
        _ => return Err(PyValueError::new_err(format!("scheme must be 'hybrid' or 'cholesky', got {scheme:?}"))),
    };
    cfg.antithetic = antithetic;
    cfg.threads = threads;
    let (p, c) = (params.inner.clone(), curve.inner.clone());
    let est = py
        .detach(move || mc::mc_smile(&p, &c, spot, tau, &strikes, &cfg))
        .map_err(err)?;
    let d = PyDict::new(py);
    let col = |f: fn(&mc::McSmileRow) -> f64| est.rows.iter().map(f).collect::<Vec<_>>();
    d.set_item("strike", col(|r| r.strike))?;
    d.set_item("k", col(|r| r.k))?;
    d.set_item("y", col(|r| r.y))?;
    d.set_item("iv", col(|r| r.iv))?;
    d.set_item("iv_se", col(|r| r.iv_se))?;
    d.set_item("iv_normalized", col(|r| r.iv_normalized))?;
    d.set_item("iv_normalized_se", col(|r| r.iv_normalized_se))?;
    d.set_item("price", col(|r| r.price))?;
    d.set_item("price_se", col(|r| r.price_se))?;
    let flags: Vec<bool> = est.rows.iter().map(|r| r.is_ok()).collect();
    d.set_item("ok", flags)?;
    let m = &est.metadata;
    d.set_item("atm_iv", m.atm_iv)?;
    d.set_item("atm_iv_se", m.atm_iv_se)?;
    d.set_item("absorbed_fraction", m.absorbed_fraction)?;
    d.set_item("terminal_mean", m.terminal_mean)?;
    d.set_item("seed", m.seed)?;
    Ok(d)
}

#[pyfunction]
fn bs_price(spot: f64, strike: f64, tau: f64, sigma: f64) -> PyResult<f64> {
    pricing::bs_price(spot, strike, tau, sigma).map_err(err)
}

#[pyfunction]
fn bachelier_price(spot: f64, strike: f64, tau: f64, sigma: f64) -> PyResult<f64> {
    pricing::bachelier_price(spot, strike, tau, sigma).map_err(err)
}

/// The six call greeks keyed P_S, P_tau, P_sigma, P_SS, P_Ssigma, P_sigmasigma.
#[pyfunction]
#[pyo3(signature = (spot, strike, tau, sigma, convention = "bs"))]
fn greeks<'py>(
    py: Python<'py>,
    spot: f64,
    strike: f64,
    tau: f64,
    sigma: f64,
    convention: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let g = match self::convention(convention)? {
        Convention::BlackScholes => pricing::bs_greeks(spot, strike, tau, sigma),
        Convention::Bachelier => pricing::bachelier_greeks(spot, strike, tau, sigma),
    }
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("P_S", g.p_s)?;
    d.set_item("P_tau", g.p_tau)?;
    d.set_item("P_sigma", g.p_sigma)?;
    d.set_item("P_SS", g.p_ss)?;
    d.set_item("P_Ssigma", g.p_s_sigma)?;
    d.set_item("P_sigmasigma", g.p_sigma_sigma)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (spot, strike, tau, price, convention = "bs"))]
fn implied_vol(spot: f64, strike: f64, tau: f64, price: f64, convention: &str) -> PyResult<f64> {
    let quote = OptionQuote::call(spot, strike, tau, price, self::convention(convention)?);
    pricing::implied_vol(&quote).map_err(err)
}

#[pymodule]
fn rough_sabr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyOdeSolution>()?;
    m.add_function(wrap_pyfunction!(solve_ode, m)?)?;
    m.add_function(wrap_pyfunction!(big_g_approx, m)?)?;
    m.add_function(wrap_pyfunction!(f_approx, m)?)?;
    m.add_function(wrap_pyfunction!(series_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(rough_sabr_smile, m)?)?;
    m.add_function(wrap_pyfunction!(mc_smile, m)?)?;
    m.add_function(wrap_pyfunction!(bs_price, m)?)?;
    m.add_function(wrap_pyfunction!(bachelier_price, m)?)?;
    m.add_function(wrap_pyfunction!(greeks, m)?)?;
    m.add_function(wrap_pyfunction!(implied_vol, m)?)?;
    Ok(())
}

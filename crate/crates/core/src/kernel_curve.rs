//! Model parameters, the power-law volatility kernel and the initial forward
//! variance curve, together with the derived average volatility `U` and the
//! kernel-weighted ratio `R`.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::quad::adaptive_simpson;

/// Local volatility function β appearing in `dS / β(S) = α dZ`.
#[derive(Clone)]
pub enum BetaSpec {
    /// β(s) = s
    Lognormal,
    /// β(s) = 1
    Normal,
    /// β(s) = s^p with 0 < p < 1
    Power(f64),
    /// Any positive continuous function.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl BetaSpec {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("power beta requires 0 < p < 1, got {p}"));
        }
        Ok(BetaSpec::Power(p))
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        BetaSpec::Custom(Arc::new(f))
    }

    /// Evaluate β(s), rejecting nonpositive or non-finite values.
    pub fn eval(&self, s: f64) -> Result<f64> {
        let v = match self {
            BetaSpec::Lognormal => s,
            BetaSpec::Normal => 1.0,
            BetaSpec::Power(p) => {
                if s < 0.0 {
                    f64::NAN
                } else {
                    s.powf(*p)
                }
            }
            BetaSpec::Custom(f) => f(s),
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            domain(format!("beta({s}) = {v} is not positive"))
        }
    }

    /// True when the asset must stay strictly positive.
    pub fn requires_positive_spot(&self) -> bool {
        !matches!(self, BetaSpec::Normal)
    }

    pub fn label(&self) -> String {
        match self {
            BetaSpec::Lognormal => "lognormal".into(),
            BetaSpec::Normal => "normal".into(),
            BetaSpec::Power(p) => format!("power({p})"),
            BetaSpec::Custom(_) => "custom".into(),
        }
    }
}

impl fmt::Debug for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The rough SABR parameter set.
#[derive(Debug, Clone)]
pub struct ModelParams {
    hurst: f64,
    eta: f64,
    rho: f64,
    beta: BetaSpec,
}

impl ModelParams {
    /// Validates `0 < H <= 1/2`, `eta > 0` and `-1 <= rho <= 1`.
    pub fn new(hurst: f64, eta: f64, rho: f64, beta: BetaSpec) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 0.5) {
            return domain(format!("requires 0 < H <= 1/2, got H = {hurst}"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return domain(format!("requires eta > 0, got eta = {eta}"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return domain(format!("requires -1 <= rho <= 1, got rho = {rho}"));
        }
        Ok(ModelParams {
            hurst,
            eta,
            rho,
            beta,
        })
    }

    pub fn lognormal(hurst: f64, eta: f64, rho: f64) -> Result<Self> {
        Self::new(hurst, eta, rho, BetaSpec::Lognormal)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn beta(&self) -> &BetaSpec {
        &self.beta
    }

    /// The power kernel κ(t) = η √(2H) t^(H - 1/2).
    pub fn kappa(&self, t: f64) -> Result<f64> {
        kernel_kappa(self, t)
    }

    /// Dimensionless expansion parameter η τ^H.
    pub fn expansion_parameter(&self, tau: f64) -> f64 {
        self.eta * tau.powf(self.hurst)
    }

    pub fn summary(&self) -> ParamsSummary {
        ParamsSummary {
            hurst: self.hurst,
            eta: self.eta,
            rho: self.rho,
            beta: self.beta.label(),
        }
    }
}

/// Serializable view of [`ModelParams`] for run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ParamsSummary {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub eta: f64,
    pub rho: f64,
    pub beta: String,
}

/// κ(t) = η √(2H) t^(H - 1/2), defined for t > 0.
pub fn kernel_kappa(params: &ModelParams, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("kernel requires t > 0, got t = {t}"));
    }
    Ok(params.eta * (2.0 * params.hurst).sqrt() * t.powf(params.hurst - 0.5))
}

#[derive(Clone)]
enum CurveRepr {
    Flat(f64),
    PiecewiseConstant { knots: Vec<f64>, values: Vec<f64> },
    Sampled(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// The time-0 forward variance curve s ↦ ξ₀(s). Times in years, annualized variances.
#[derive(Clone)]
pub struct ForwardVarianceCurve {
    repr: CurveRepr,
}

const SAMPLED_INTEGRAL_TOL: f64 = 1e-12;
const KERNEL_INTEGRAL_TOL: f64 = 1e-10;

impl ForwardVarianceCurve {
    pub fn flat(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return domain(format!("forward variance must be positive, got {xi}"));
        }
        Ok(ForwardVarianceCurve {
            repr: CurveRepr::Flat(xi),
        })
    }

    /// Piecewise-constant curve: `values[i]` holds on `[knots[i], knots[i+1])`,
    /// and the last value is extrapolated flat. Knots must start at 0 and increase.
    pub fn piecewise_constant(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return domain("piecewise curve needs equal, nonzero numbers of knots and values");
        }
        if knots[0] != 0.0 {
            return domain(format!("first knot must be 0, got {}", knots[0]));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("knots must be strictly increasing");
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return domain(format!("forward variance must be positive, got {v}"));
        }
        Ok(ForwardVarianceCurve {
            repr: CurveRepr::PiecewiseConstant { knots, values },
        })
    }

    /// A curve given by a continuous function. Positivity is checked on every evaluation.
    pub fn sampled<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ForwardVarianceCurve {
            repr: CurveRepr::Sampled(Arc::new(f)),
        }
    }

    /// ξ₀(s) = α₀² exp(η² s / 4): the curve under which H = 1/2 is classical lognormal SABR.
    pub fn classical_sabr(alpha0: f64, eta: f64) -> Result<Self> {
        if !(alpha0 > 0.0) {
            return domain(format!("alpha0 must be positive, got {alpha0}"));
        }
        let a2 = alpha0 * alpha0;
        let rate = eta * eta / 4.0;
        Ok(Self::sampled(move |s| a2 * (rate * s).exp()))
    }

    /// Load from a `t,xi` CSV interpreted as piecewise-constant knots.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "xi" {
            return Err(Error::Parse(format!(
                "forward variance CSV must have header `t,xi`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| {
                    Error::Parse(format!("row {}: column {i}: {e}", line + 1))
                })
            };
            knots.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::piecewise_constant(knots, values)
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.repr, CurveRepr::Flat(_))
    }

    /// ξ₀(s).
    pub fn value(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || !s.is_finite() {
            return domain(format!("curve undefined at s = {s}"));
        }
        match &self.repr {
            CurveRepr::Flat(xi) => Ok(*xi),
            CurveRepr::PiecewiseConstant { knots, values } => {
                let idx = knots.partition_point(|k| *k <= s) - 1;
                Ok(values[idx])
            }
            CurveRepr::Sampled(f) => {
                let v = f(s);
                if v > 0.0 && v.is_finite() {
                    Ok(v)
                } else {
                    domain(format!("curve value at s = {s} is {v}, not positive"))
                }
            }
        }
    }

    /// ∫ₐᵇ ξ₀(s) ds for 0 <= a <= b.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        match &self.repr {
            CurveRepr::Flat(xi) => Ok(xi * (b - a)),
            CurveRepr::PiecewiseConstant { knots, values } => {
                Ok(piecewise_weighted(knots, values, a, b, |lo, hi| hi - lo))
            }
            CurveRepr::Sampled(_) => {
                adaptive_simpson(|s| self.value(s), a, b, SAMPLED_INTEGRAL_TOL)
            }
        }
    }

    /// ∫₀¹ θ^(H-1/2) ξ₀(t + τθ) dθ.
    ///
    /// The substitution u = θ^(H+1/2) turns this into
    /// (1/γ) ∫₀¹ ξ₀(t + τ u^(1/γ)) du with γ = H + 1/2, whose integrand is bounded.
    fn kernel_weighted_mean(&self, hurst: f64, t: f64, tau: f64) -> Result<f64> {
        let gamma = hurst + 0.5;
        match &self.repr {
            CurveRepr::Flat(xi) => Ok(xi / gamma),
            CurveRepr::PiecewiseConstant { knots, values } => {
                // Exact: each constant piece on [θa, θb] contributes v (θb^γ - θa^γ) / γ.
                let total = piecewise_weighted(knots, values, t, t + tau, |lo, hi| {
                    let ua = ((lo - t) / tau).max(0.0).powf(gamma);
                    let ub = ((hi - t) / tau).min(1.0).powf(gamma);
                    (ub - ua) / gamma
                });
                Ok(total)
            }
            CurveRepr::Sampled(_) => {
                let inv = 1.0 / gamma;
                let v = adaptive_simpson(
                    |u: f64| self.value(t + tau * u.powf(inv)),
                    0.0,
                    1.0,
                    KERNEL_INTEGRAL_TOL,
                )?;
                Ok(v / gamma)
            }
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        match &self.repr {
            CurveRepr::Flat(xi) => serde_json::json!({ "type": "flat", "xi": xi }),
            CurveRepr::PiecewiseConstant { knots, values } => serde_json::json!({
                "type": "piecewise_constant", "knots": knots, "values": values
            }),
            CurveRepr::Sampled(_) => serde_json::json!({ "type": "sampled" }),
        }
    }
}

impl fmt::Debug for ForwardVarianceCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ForwardVarianceCurve({})", self.describe())
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0) || !(b >= a) || !b.is_finite() {
        return domain(format!("curve undefined on interval [{a}, {b}]"));
    }
    Ok(())
}

/// Σ over constant pieces intersecting [a, b] of value × weight(lo, hi).
fn piecewise_weighted<W>(knots: &[f64], values: &[f64], a: f64, b: f64, weight: W) -> f64
where
    W: Fn(f64, f64) -> f64,
{
    let mut total = 0.0;
    for (i, v) in values.iter().enumerate() {
        let lo = knots[i].max(a);
        let hi = knots.get(i + 1).copied().unwrap_or(f64::INFINITY).min(b);
        if hi > lo {
            total += v * weight(lo, hi);
        }
    }
    total
}

/// U_t(τ) = √((1/τ) ∫ₜ^{t+τ} ξ₀(s) ds).
pub fn average_vol_u(curve: &ForwardVarianceCurve, t: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return domain(format!("requires tau > 0, got tau = {tau}"));
    }
    if let CurveRepr::Flat(xi) = curve.repr {
        check_interval(t, t + tau)?;
        return Ok(xi.sqrt());
    }
    Ok((curve.integral(t, t + tau)? / tau).sqrt())
}

/// R = ∫ κ(s−t) ξ(s) ds / (κ(τ) ∫ ξ(s) ds) over [t, t+τ]; equals 1/(H+1/2) on flat curves.
pub fn kernel_ratio_r(
    curve: &ForwardVarianceCurve,
    params: &ModelParams,
    t: f64,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return domain(format!("requires tau > 0, got tau = {tau}"));
    }
    check_interval(t, t + tau)?;
    let gamma = params.hurst + 0.5;
    if curve.is_flat() {
        return Ok(1.0 / gamma);
    }
    let weighted = curve.kernel_weighted_mean(params.hurst, t, tau)?;
    let plain = curve.integral(t, t + tau)? / tau;
    Ok(weighted / plain)
}

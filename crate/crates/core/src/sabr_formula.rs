//! The rough SABR implied volatility formula.
//!
//! For a strike K, with k = log(K/S), k_β = ∫_S^K ds/β(s) and y(x) = κ(τ) x / U(τ),
//!
//! ```text
//! Σ(k, τ) = U · |y(k)| / √G(y(k_β))
//! ```
//!
//! where G is either the interpolation G_A or the numerically solved G. The ATM
//! limit of this expression is U β(S)/S, so the normalized smile is
//! `|y(k)| / √G(y(k_β)) · S/β(S)` and equals 1 at the money.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::kernel_curve::{
    average_vol_u, kernel_kappa, BetaSpec, ForwardVarianceCurve, ModelParams, ParamsSummary,
};
use crate::quad::adaptive_simpson;
use crate::smile_ode::{f_from_g, g_approx, solve_ode, OdeOptions, OdeSolution};

/// Below this |y(k_β)| the ratio |y(k)|/√G(y(k_β)) is replaced by its series limit |k/k_β|.
pub const ATM_Y_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmileSource {
    NumericalOde,
    ClosedFormApprox,
}

#[derive(Debug, Clone)]
pub enum Strikes {
    Absolute(Vec<f64>),
    LogStrikes(Vec<f64>),
}

impl Strikes {
    pub fn to_absolute(&self, spot: f64) -> Vec<f64> {
        match self {
            Strikes::Absolute(k) => k.clone(),
            Strikes::LogStrikes(k) => k.iter().map(|x| spot * x.exp()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmileRequest {
    pub spot: f64,
    pub tau: f64,
    pub strikes: Strikes,
    pub params: ModelParams,
    pub curve: ForwardVarianceCurve,
    pub atm_vol_override: Option<f64>,
    pub source: SmileSource,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmileRow {
    pub strike: f64,
    pub k: f64,
    pub k_beta: f64,
    pub y_k: f64,
    pub y_kbeta: f64,
    pub iv: f64,
    pub iv_normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmileMetadata {
    pub params: ParamsSummary,
    pub curve: serde_json::Value,
    pub spot: f64,
    pub tau: f64,
    pub source: SmileSource,
    /// Σ(0, τ) used to scale the normalized smile.
    pub atm_vol: f64,
    pub atm_vol_overridden: bool,
    pub average_vol_u: f64,
    pub eta_tau_h: f64,
    #[serde(rename = "eta_tauH_warning")]
    pub eta_tau_h_warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmileTable {
    pub rows: Vec<SmileRow>,
    pub metadata: SmileMetadata,
}

impl SmileTable {
    /// `strike,k,k_beta,y_k,y_kbeta,iv,iv_normalized`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_metadata_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.metadata)?;
        Ok(())
    }
}

/// k_β = ∫_S^K ds / β(s), signed (negative for K < S).
pub fn strike_transform_kbeta(beta: &BetaSpec, spot: f64, strike: f64) -> Result<f64> {
    if !spot.is_finite() || !strike.is_finite() {
        return domain("spot and strike must be finite");
    }
    if beta.requires_positive_spot() && !(spot > 0.0 && strike > 0.0) {
        return domain(format!(
            "beta {} requires S > 0 and K > 0, got S = {spot}, K = {strike}",
            beta.label()
        ));
    }
    match beta {
        BetaSpec::Lognormal => Ok((strike / spot).ln()),
        BetaSpec::Normal => Ok(strike - spot),
        BetaSpec::Power(p) => {
            let e = 1.0 - p;
            Ok((strike.powf(e) - spot.powf(e)) / e)
        }
        BetaSpec::Custom(_) => {
            beta.eval(spot)?;
            beta.eval(strike)?;
            adaptive_simpson(|s| beta.eval(s).map(|b| 1.0 / b), spot, strike, 1e-12)
        }
    }
}

/// y(x, τ) = κ(τ) x / U_t(τ).
pub fn scaled_moneyness_y(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    t: f64,
    tau: f64,
    x: f64,
) -> Result<f64> {
    let kappa = kernel_kappa(params, tau)?;
    let u = average_vol_u(curve, t, tau)?;
    Ok(kappa * x / u)
}

/// Σ^BS ≈ σ_B log(K/S) / (K − S), with the limit σ_B / S at K = S.
pub fn bachelier_to_bs_vol(spot: f64, strike: f64, sigma_b: f64) -> Result<f64> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return domain(format!("requires S > 0 and K > 0, got S = {spot}, K = {strike}"));
    }
    let x = (strike - spot) / spot;
    if x == 0.0 {
        return Ok(sigma_b / spot);
    }
    Ok(sigma_b * x.ln_1p() / (spot * x))
}

/// Evaluates G for whichever source a smile uses.
enum GEvaluator<'a> {
    Numerical(&'a OdeSolution),
    Approx { hurst: f64, rho: f64 },
}

impl GEvaluator<'_> {
    fn big_g(&self, y: f64) -> Result<f64> {
        match self {
            GEvaluator::Numerical(sol) => sol.big_g_at(y),
            GEvaluator::Approx { hurst, rho } => g_approx(*hurst, *rho, y),
        }
    }
}

/// Normalized-smile shape at one strike, before scaling by Σ(0, τ).
struct StrikeEval {
    row: SmileRow,
    /// |y(k)| / √G(y(k_β)) · S/β(S)
    normalized: f64,
}

fn evaluate_strike(
    req: &SmileRequest,
    kappa: f64,
    u: f64,
    beta_ratio: f64,
    g: &GEvaluator<'_>,
    strike: f64,
) -> Result<StrikeEval> {
    let spot = req.spot;
    if !(strike > 0.0) {
        return domain(format!("Black-Scholes smile requires K > 0, got K = {strike}"));
    }
    let k = (strike / spot).ln();
    let k_beta = strike_transform_kbeta(req.params.beta(), spot, strike)?;
    let y_k = kappa * k / u;
    let y_kbeta = kappa * k_beta / u;
    let ratio = if y_kbeta.abs() < ATM_Y_THRESHOLD {
        if k_beta == 0.0 {
            beta_ratio
        } else {
            (k / k_beta).abs()
        }
    } else {
        let big_g = g.big_g(y_kbeta)?;
        if !(big_g > 0.0) {
            return Err(Error::InvalidSolution(format!(
                "G({y_kbeta}) = {big_g} must be positive"
            )));
        }
        y_k.abs() / big_g.sqrt()
    };
    Ok(StrikeEval {
        row: SmileRow {
            strike,
            k,
            k_beta,
            y_k,
            y_kbeta,
            iv: f64::NAN,
            iv_normalized: f64::NAN,
        },
        normalized: ratio / beta_ratio,
    })
}

/// Evaluate the rough SABR smile; a numerical ODE solution is computed when needed.
pub fn rough_sabr_smile(req: &SmileRequest) -> Result<SmileTable> {
    match req.source {
        SmileSource::ClosedFormApprox => rough_sabr_smile_with(req, None),
        SmileSource::NumericalOde => {
            let sol = solve_ode(req.params.hurst(), req.params.rho(), &OdeOptions::default())?;
            rough_sabr_smile_with(req, Some(&sol))
        }
    }
}

/// Evaluate the rough SABR smile, reusing a precomputed ODE solution for
/// [`SmileSource::NumericalOde`].
pub fn rough_sabr_smile_with(req: &SmileRequest, solution: Option<&OdeSolution>) -> Result<SmileTable> {
    if !(req.tau > 0.0) {
        return domain(format!("requires tau > 0, got {}", req.tau));
    }
    let beta = req.params.beta();
    // the lognormal implied vol needs log(K/S) for every β
    if !(req.spot > 0.0) {
        return domain(format!("requires S > 0, got S = {}", req.spot));
    }
    if let Some(v) = req.atm_vol_override {
        if !(v > 0.0) {
            return domain(format!("ATM vol override must be positive, got {v}"));
        }
    }
    let hurst = req.params.hurst();
    let rho = req.params.rho();
    let g = match req.source {
        SmileSource::ClosedFormApprox => {
            if !(rho.abs() < 1.0) {
                return domain(format!("requires |rho| < 1, got rho = {rho}"));
            }
            GEvaluator::Approx { hurst, rho }
        }
        SmileSource::NumericalOde => {
            let sol = solution.ok_or_else(|| {
                Error::Domain("numerical smile requires an ODE solution".into())
            })?;
            if sol.hurst() != hurst || sol.rho() != rho {
                return domain(format!(
                    "ODE solution is for (H, rho) = ({}, {}), request has ({hurst}, {rho})",
                    sol.hurst(),
                    sol.rho()
                ));
            }
            GEvaluator::Numerical(sol)
        }
    };

    let kappa = kernel_kappa(&req.params, req.tau)?;
    let u = average_vol_u(&req.curve, 0.0, req.tau)?;
    let beta_ratio = beta.eval(req.spot)? / req.spot;
    let atm_vol = req.atm_vol_override.unwrap_or(u * beta_ratio);

    let rows = req
        .strikes
        .to_absolute(req.spot)
        .into_iter()
        .map(|strike| {
            let mut e = evaluate_strike(req, kappa, u, beta_ratio, &g, strike)?;
            e.row.iv_normalized = e.normalized;
            e.row.iv = atm_vol * e.normalized;
            Ok(e.row)
        })
        .collect::<Result<Vec<_>>>()?;

    let eta_tau_h = req.params.expansion_parameter(req.tau);
    Ok(SmileTable {
        rows,
        metadata: SmileMetadata {
            params: req.params.summary(),
            curve: req.curve.describe(),
            spot: req.spot,
            tau: req.tau,
            source: req.source,
            atm_vol,
            atm_vol_overridden: req.atm_vol_override.is_some(),
            average_vol_u: u,
            eta_tau_h,
            eta_tau_h_warning: eta_tau_h >= 1.0,
        },
    })
}

/// Bachelier (normal) implied volatility U f(Y), Y = κ(τ)(K − S)/U, for β ≡ 1.
pub fn bachelier_smile_vol(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    tau: f64,
    spot: f64,
    strike: f64,
    solution: Option<&OdeSolution>,
) -> Result<f64> {
    if !matches!(params.beta(), BetaSpec::Normal) {
        return domain("the Bachelier smile is defined for beta = normal");
    }
    let u = average_vol_u(curve, 0.0, tau)?;
    let y = scaled_moneyness_y(params, curve, 0.0, tau, strike - spot)?;
    let f = match solution {
        Some(sol) => sol.f_at(y)?,
        None => {
            if y.abs() < ATM_Y_THRESHOLD {
                1.0
            } else {
                f_from_g(y, g_approx(params.hurst(), params.rho(), y)?)?
            }
        }
    };
    Ok(u * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smile_ode::{g_closed_form_half, series_coefficients};

    fn flat() -> ForwardVarianceCurve {
        ForwardVarianceCurve::flat(0.04).unwrap()
    }

    fn request(params: ModelParams, tau: f64, logk: Vec<f64>, source: SmileSource) -> SmileRequest {
        SmileRequest {
            spot: 1.0,
            tau,
            strikes: Strikes::LogStrikes(logk),
            params,
            curve: flat(),
            atm_vol_override: None,
            source,
        }
    }

    #[test]
    fn kbeta_examples() {
        let e = std::f64::consts::E;
        assert!((strike_transform_kbeta(&BetaSpec::Lognormal, 1.0, e).unwrap() - 1.0).abs() < 1e-15);
        let p = strike_transform_kbeta(&BetaSpec::power(0.5).unwrap(), 1.0, 1.21).unwrap();
        assert!((p - 0.2).abs() < 1e-14);
        assert_eq!(strike_transform_kbeta(&BetaSpec::Normal, 100.0, 95.0).unwrap(), -5.0);
        // Custom β(s) = √s agrees with the closed-form power transform.
        let c = strike_transform_kbeta(&BetaSpec::custom(|s: f64| s.sqrt()), 1.0, 1.21).unwrap();
        assert!((c - 0.2).abs() < 1e-11);
        let c = strike_transform_kbeta(&BetaSpec::custom(|s: f64| s.sqrt()), 1.21, 1.0).unwrap();
        assert!((c + 0.2).abs() < 1e-11);
        // β crossing zero on the interval
        let bad = BetaSpec::custom(|s: f64| s - 1.1);
        assert!(strike_transform_kbeta(&bad, 1.0, 1.2).is_err());
        assert!(strike_transform_kbeta(&BetaSpec::Lognormal, 1.0, -1.0).is_err());
    }

    #[test]
    fn scaled_moneyness_examples() {
        let half = ModelParams::lognormal(0.5, 1.0, 0.0).unwrap();
        for tau in [0.1, 1.0, 3.0] {
            let y = scaled_moneyness_y(&half, &flat(), 0.0, tau, 0.1).unwrap();
            assert!((y - 0.5).abs() < 1e-14);
        }
        assert_eq!(scaled_moneyness_y(&half, &flat(), 0.0, 0.3, 0.0).unwrap(), 0.0);
        let rough = ModelParams::lognormal(0.05, 1.0, 0.0).unwrap();
        let y = scaled_moneyness_y(&rough, &flat(), 0.0, 1.0, 0.2).unwrap();
        assert!((y - 0.1f64.sqrt()).abs() < 1e-15);
        assert!(scaled_moneyness_y(&rough, &flat(), 0.0, 0.0, 0.2).is_err());
    }

    #[test]
    fn bachelier_conversion_examples() {
        assert_eq!(bachelier_to_bs_vol(1.0, 1.0, 0.2).unwrap(), 0.2);
        let up = bachelier_to_bs_vol(100.0, 110.0, 20.0).unwrap();
        assert!((up - 20.0 * 1.1f64.ln() / 10.0).abs() < 1e-15);
        assert!((up - 0.190_620_359_608_649_87).abs() < 1e-12);
        let down = bachelier_to_bs_vol(100.0, 90.0, 20.0).unwrap();
        assert!((down - 0.210_721_031_315_652_56).abs() < 1e-12);
        assert!(bachelier_to_bs_vol(0.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn bachelier_conversion_continuous_at_the_money() {
        let s = 100.0;
        let atm = bachelier_to_bs_vol(s, s, 20.0).unwrap();
        for k in [s * (1.0 + 1e-6), s * (1.0 - 1e-6)] {
            assert!((bachelier_to_bs_vol(s, k, 20.0).unwrap() - atm).abs() < 1e-6 * atm);
        }
        // left/right limits agree with each other to 1e-10 relative after removing the O(x) slope
        let x = 1e-6;
        let l = bachelier_to_bs_vol(s, s * (1.0 - x), 20.0).unwrap();
        let r = bachelier_to_bs_vol(s, s * (1.0 + x), 20.0).unwrap();
        assert!((0.5 * (l + r) - atm).abs() < 1e-10 * atm);
    }

    #[test]
    fn lognormal_half_reduces_to_hagan() {
        let rho = -0.4;
        let params = ModelParams::lognormal(0.5, 1.0, rho).unwrap();
        let ks: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.03).collect();
        let table = rough_sabr_smile(&request(params, 0.5, ks.clone(), SmileSource::ClosedFormApprox)).unwrap();
        for (row, k) in table.rows.iter().zip(&ks) {
            let y = 1.0 * k / 0.2;
            let hagan = if *k == 0.0 { 0.2 } else { 0.2 * y / g_closed_form_half(rho, y).unwrap() };
            assert!((row.iv - hagan).abs() < 1e-13 * hagan, "{k}: {} vs {hagan}", row.iv);
        }
    }

    #[test]
    fn atm_row_is_normalized() {
        let params = ModelParams::lognormal(0.1, 1.0, -0.6).unwrap();
        for source in [SmileSource::ClosedFormApprox, SmileSource::NumericalOde] {
            let t = rough_sabr_smile(&request(params.clone(), 0.25, vec![-0.1, 0.0, 0.1], source)).unwrap();
            assert_eq!(t.rows[1].iv_normalized, 1.0);
            assert_eq!(t.rows[1].iv, t.metadata.atm_vol);
            assert!(t.rows.iter().all(|r| r.iv > 0.0));
        }
    }

    #[test]
    fn numerical_smile_matches_composition() {
        let params = ModelParams::lognormal(0.1, 1.0, -0.6).unwrap();
        let t = rough_sabr_smile(&request(params.clone(), 0.25, vec![-0.05], SmileSource::NumericalOde)).unwrap();
        let sol = solve_ode(0.1, -0.6, &OdeOptions::default()).unwrap();
        let y = scaled_moneyness_y(&params, &flat(), 0.0, 0.25, -0.05).unwrap();
        let expected = average_vol_u(&flat(), 0.0, 0.25).unwrap() * sol.f_at(y).unwrap();
        assert!((t.rows[0].iv - expected).abs() < 1e-14);
    }

    #[test]
    fn power_beta_atm_normalization() {
        let params = ModelParams::new(0.05, 1.0, -0.9, BetaSpec::power(0.5).unwrap()).unwrap();
        let mut req = request(params, 0.125, vec![-0.1, 0.0, 0.1], SmileSource::ClosedFormApprox);
        req.spot = 4.0;
        let t = rough_sabr_smile(&req).unwrap();
        // Σ(0, τ) = U β(S)/S = 0.2 · 2 / 4
        assert!((t.metadata.atm_vol - 0.1).abs() < 1e-15);
        assert_eq!(t.rows[1].iv_normalized, 1.0);
        let near = rough_sabr_smile(&SmileRequest {
            strikes: Strikes::LogStrikes(vec![1e-9]),
            ..req.clone()
        })
        .unwrap();
        assert!((near.rows[0].iv_normalized - 1.0).abs() < 1e-8);
    }

    #[test]
    fn override_scales_smile() {
        let params = ModelParams::lognormal(0.2, 1.0, -0.3).unwrap();
        let mut req = request(params, 0.25, vec![-0.1, 0.0, 0.1], SmileSource::ClosedFormApprox);
        let base = rough_sabr_smile(&req).unwrap();
        req.atm_vol_override = Some(0.3);
        let scaled = rough_sabr_smile(&req).unwrap();
        for (a, b) in base.rows.iter().zip(&scaled.rows) {
            assert_eq!(a.iv_normalized, b.iv_normalized);
            assert!((b.iv - 0.3 * a.iv_normalized).abs() < 1e-15);
        }
        req.atm_vol_override = Some(-0.1);
        assert!(rough_sabr_smile(&req).is_err());
    }

    #[test]
    fn normalized_smile_collapses_in_y() {
        let params = ModelParams::lognormal(0.1, 1.0, -0.6).unwrap();
        let ys = [-0.8, -0.3, 0.4, 0.9];
        let mut by_tau = Vec::new();
        for tau in [1.0 / 12.0, 0.25, 0.5, 1.0] {
            let kappa = kernel_kappa(&params, tau).unwrap();
            let logk: Vec<f64> = ys.iter().map(|y| y * 0.2 / kappa).collect();
            let t = rough_sabr_smile(&request(params.clone(), tau, logk, SmileSource::ClosedFormApprox)).unwrap();
            by_tau.push(t.rows.iter().map(|r| r.iv_normalized).collect::<Vec<_>>());
        }
        for v in &by_tau[1..] {
            for (a, b) in v.iter().zip(&by_tau[0]) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn skew_sign_follows_rho() {
        for rho in [-0.7, 0.5] {
            let params = ModelParams::lognormal(0.2, 1.0, rho).unwrap();
            let t = rough_sabr_smile(&request(params, 0.25, vec![-1e-3, 1e-3], SmileSource::ClosedFormApprox)).unwrap();
            let slope = t.rows[1].iv - t.rows[0].iv;
            assert_eq!(slope.signum(), rho.signum());
        }
    }

    #[test]
    fn warning_flag() {
        let params = ModelParams::lognormal(0.05, 2.3, -0.9).unwrap();
        let t = rough_sabr_smile(&request(params, 1.0, vec![0.0], SmileSource::ClosedFormApprox)).unwrap();
        assert!(t.metadata.eta_tau_h_warning);
        let params = ModelParams::lognormal(0.2, 1.0, -0.6).unwrap();
        let t = rough_sabr_smile(&request(params, 0.25, vec![0.0], SmileSource::ClosedFormApprox)).unwrap();
        assert!(!t.metadata.eta_tau_h_warning);
    }

    #[test]
    fn numerical_domain_error() {
        let params = ModelParams::lognormal(0.1, 1.0, -0.6).unwrap();
        // y far beyond the default ODE half-width of 10
        let r = rough_sabr_smile(&request(params, 0.25, vec![-3.0], SmileSource::NumericalOde));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn bachelier_smile_and_conversion() {
        let params = ModelParams::new(0.3, 1.0, -0.5, BetaSpec::Normal).unwrap();
        // normal-vol forward variance: U = 20 price units on S = 100
        let curve = ForwardVarianceCurve::flat(400.0).unwrap();
        let atm = bachelier_smile_vol(&params, &curve, 0.5, 100.0, 100.0, None).unwrap();
        assert!((atm - 20.0).abs() < 1e-12);
        let req = SmileRequest {
            spot: 100.0,
            tau: 0.5,
            strikes: Strikes::Absolute(vec![90.0, 100.0, 110.0]),
            params: params.clone(),
            curve: curve.clone(),
            atm_vol_override: None,
            source: SmileSource::ClosedFormApprox,
        };
        let t = rough_sabr_smile(&req).unwrap();
        for row in &t.rows {
            let sb = bachelier_smile_vol(&params, &curve, 0.5, 100.0, row.strike, None).unwrap();
            let bs = bachelier_to_bs_vol(100.0, row.strike, sb).unwrap();
            assert!((bs - row.iv).abs() < 1e-12 * bs, "{} vs {}", bs, row.iv);
        }
        let s = series_coefficients(0.3, -0.5);
        assert!(s.f_skew < 0.0);
    }
}

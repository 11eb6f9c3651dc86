//! Black-Scholes and Bachelier call prices, their greeks, and implied volatility.
//!
//! Rates and dividends are zero throughout: the spot is a martingale.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, PriceBound, Result};
use crate::normal::{cdf, pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    BlackScholes,
    Bachelier,
}

/// A call premium to be inverted for its implied volatility.
#[derive(Debug, Clone, Copy)]
pub struct OptionQuote {
    pub spot: f64,
    pub strike: f64,
    pub tau: f64,
    pub price: f64,
    pub convention: Convention,
}

impl OptionQuote {
    pub fn call(spot: f64, strike: f64, tau: f64, price: f64, convention: Convention) -> Self {
        OptionQuote {
            spot,
            strike,
            tau,
            price,
            convention,
        }
    }

    /// Convert a put premium to the equivalent call quote by parity, C = P + S - K.
    pub fn from_put(spot: f64, strike: f64, tau: f64, put: f64, convention: Convention) -> Self {
        Self::call(spot, strike, tau, put + spot - strike, convention)
    }
}

/// The six price sensitivities of a call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Greeks {
    #[serde(rename = "P_S")]
    pub p_s: f64,
    #[serde(rename = "P_tau")]
    pub p_tau: f64,
    #[serde(rename = "P_sigma")]
    pub p_sigma: f64,
    #[serde(rename = "P_SS")]
    pub p_ss: f64,
    #[serde(rename = "P_Ssigma")]
    pub p_s_sigma: f64,
    #[serde(rename = "P_sigmasigma")]
    pub p_sigma_sigma: f64,
}

fn check_common(tau: f64, sigma: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return domain(format!("requires tau > 0, got {tau}"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("requires sigma > 0, got {sigma}"));
    }
    Ok(())
}

fn check_bs(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<()> {
    if !(spot > 0.0 && spot.is_finite()) || !(strike > 0.0 && strike.is_finite()) {
        return domain(format!(
            "Black-Scholes requires S > 0 and K > 0, got S = {spot}, K = {strike}"
        ));
    }
    check_common(tau, sigma)
}

fn check_bachelier(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<()> {
    if !spot.is_finite() || !strike.is_finite() {
        return domain("Bachelier requires finite S and K");
    }
    check_common(tau, sigma)
}

fn d_plus_minus(spot: f64, strike: f64, tau: f64, sigma: f64) -> (f64, f64) {
    let v = sigma * tau.sqrt();
    let m = (spot / strike).ln() / v;
    (m + 0.5 * v, m - 0.5 * v)
}

/// Out-of-the-money price: the call when K >= S, otherwise the put.
fn bs_otm(spot: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let (dp, dm) = d_plus_minus(spot, strike, tau, sigma);
    if strike >= spot {
        spot * cdf(dp) - strike * cdf(dm)
    } else {
        strike * cdf(-dm) - spot * cdf(-dp)
    }
    .max(0.0)
}

fn bachelier_otm(spot: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let v = sigma * tau.sqrt();
    let k = strike - spot;
    let d = k / v;
    if k >= 0.0 {
        v * pdf(d) - k * cdf(-d)
    } else {
        v * pdf(d) + k * cdf(d)
    }
    .max(0.0)
}

/// P^BS(S, K, τ, σ) = S Φ(d₊) − K Φ(d₋).
pub fn bs_price(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<f64> {
    check_bs(spot, strike, tau, sigma)?;
    Ok(bs_otm(spot, strike, tau, sigma) + (spot - strike).max(0.0))
}

/// P^B(S, K, τ, σ) = σ√τ φ(k/(σ√τ)) − k (1 − Φ(k/(σ√τ))), k = K − S.
pub fn bachelier_price(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<f64> {
    check_bachelier(spot, strike, tau, sigma)?;
    Ok(bachelier_otm(spot, strike, tau, sigma) + (spot - strike).max(0.0))
}

pub fn bs_vega(spot: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let (dp, _) = d_plus_minus(spot, strike, tau, sigma);
    spot * pdf(dp) * tau.sqrt()
}

pub fn bachelier_vega(spot: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let v = sigma * tau.sqrt();
    tau.sqrt() * pdf((strike - spot) / v)
}

pub fn bs_greeks(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<Greeks> {
    check_bs(spot, strike, tau, sigma)?;
    let (dp, dm) = d_plus_minus(spot, strike, tau, sigma);
    let sqt = tau.sqrt();
    let phi = pdf(dp);
    Ok(Greeks {
        p_s: cdf(dp),
        p_tau: spot * phi * sigma / (2.0 * sqt),
        p_sigma: spot * phi * sqt,
        p_ss: phi / (spot * sigma * sqt),
        p_s_sigma: -phi * dm / sigma,
        p_sigma_sigma: spot * sqt * dp * dm * phi / sigma,
    })
}

pub fn bachelier_greeks(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<Greeks> {
    check_bachelier(spot, strike, tau, sigma)?;
    let k = strike - spot;
    let sqt = tau.sqrt();
    let z = k / (sigma * sqt);
    let phi = pdf(z);
    Ok(Greeks {
        p_s: cdf(-z),
        p_tau: sigma / (2.0 * sqt) * phi,
        p_sigma: sqt * phi,
        p_ss: phi / (sigma * sqt),
        p_s_sigma: k / (sigma * sigma * sqt) * phi,
        p_sigma_sigma: k * k / (sigma * sigma * sigma * sqt) * phi,
    })
}

const BISECTION_REL_WIDTH: f64 = 1e-4;
const MAX_ITER: usize = 200;

/// Implied volatility of a call quote under its convention.
///
/// The quote is reduced to its out-of-the-money part (put by parity when the call
/// is in the money). A bracketed bisection narrows the root to a relative width of
/// 1e-4, then Newton steps on the log price finish, falling back to bisection when
/// a step leaves the bracket or vega underflows.
pub fn implied_vol(quote: &OptionQuote) -> Result<f64> {
    let OptionQuote {
        spot,
        strike,
        tau,
        price,
        convention,
    } = *quote;
    match convention {
        Convention::BlackScholes => check_bs(spot, strike, tau, 1.0)?,
        Convention::Bachelier => check_bachelier(spot, strike, tau, 1.0)?,
    }
    if !price.is_finite() {
        return domain(format!("price must be finite, got {price}"));
    }
    let intrinsic = (spot - strike).max(0.0);
    if price <= intrinsic {
        return Err(Error::NoSolution {
            price,
            bound: PriceBound::AtOrBelowIntrinsic,
        });
    }
    if convention == Convention::BlackScholes && price >= spot {
        return Err(Error::NoSolution {
            price,
            bound: PriceBound::AtOrAboveUpper,
        });
    }
    let target = price - intrinsic;
    let (otm, vega): (fn(f64, f64, f64, f64) -> f64, fn(f64, f64, f64, f64) -> f64) =
        match convention {
            Convention::BlackScholes => (bs_otm, bs_vega),
            Convention::Bachelier => (bachelier_otm, bachelier_vega),
        };
    let price_at = |s: f64| otm(spot, strike, tau, s);

    let (mut lo, mut hi) = match convention {
        Convention::BlackScholes => (1e-8, 5.0),
        Convention::Bachelier => {
            let scale = spot.abs().max(strike.abs()).max(1e-300);
            (1e-8 * scale, 5.0 * scale)
        }
    };
    let mut expansions = 0;
    while price_at(hi) < target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 1000 || !hi.is_finite() {
            return Err(Error::NoSolution {
                price,
                bound: PriceBound::AtOrAboveUpper,
            });
        }
    }
    while price_at(lo) > target {
        lo *= 0.1;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::NoSolution {
                price,
                bound: PriceBound::AtOrBelowIntrinsic,
            });
        }
    }

    let mut iter = 0;
    while hi - lo > BISECTION_REL_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if price_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
        if iter > MAX_ITER {
            return Err(Error::Numerical("implied vol bisection did not converge".into()));
        }
    }

    let ln_target = target.ln();
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let p = price_at(sigma);
        if p == target {
            return Ok(sigma);
        }
        if p < target {
            lo = lo.max(sigma);
        } else {
            hi = hi.min(sigma);
        }
        let v = vega(spot, strike, tau, sigma);
        let next = if p > 0.0 && v > 0.0 && v.is_finite() {
            sigma - (p.ln() - ln_target) * p / v
        } else {
            f64::NAN
        };
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        let step = (next - sigma).abs();
        sigma = next;
        if step <= 4.0 * f64::EPSILON * sigma || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(sigma);
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Midpoint-rule expectation of (X - K)⁺ under a density, on a truncated range.
    fn quadrature<D: Fn(f64) -> f64>(density: D, lo: f64, hi: f64, strike: f64) -> f64 {
        let n = 2_000_000;
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (x - strike).max(0.0) * density(x) * h
            })
            .sum()
    }

    fn lognormal_oracle(spot: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
        // integrate over z with S_T = S exp(σ√τ z − σ²τ/2)
        let v = sigma * tau.sqrt();
        let n = 2_000_000;
        let h = 24.0 / n as f64;
        (0..n)
            .map(|i| {
                let z = -12.0 + (i as f64 + 0.5) * h;
                let st = spot * (v * z - 0.5 * v * v).exp();
                (st - strike).max(0.0) * pdf(z) * h
            })
            .sum()
    }

    #[test]
    fn bs_examples() {
        let p = bs_price(1.0, 1.0, 1.0, 0.2).unwrap();
        assert!((p - (2.0 * cdf(0.1) - 1.0)).abs() < 1e-15);
        assert!((p - 0.079_655_674_554_057_98).abs() < 1e-12);
        assert!((p - lognormal_oracle(1.0, 1.0, 1.0, 0.2)).abs() < 1e-9);
        let itm = bs_price(1.0, 0.8, 1.0, 1e-9).unwrap();
        assert!((itm - 0.2).abs() < 1e-15);
        let otm = bs_price(1.0, 1.1, 0.25, 0.2).unwrap();
        assert!((otm - lognormal_oracle(1.0, 1.1, 0.25, 0.2)).abs() < 1e-9);
        assert!(bs_price(0.0, 1.0, 1.0, 0.2).is_err());
        assert!(bs_price(1.0, 1.0, 0.0, 0.2).is_err());
        assert!(bs_price(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bachelier_examples() {
        let p = bachelier_price(1.0, 1.0, 1.0, 0.2).unwrap();
        assert!((p - 0.2 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        let oracle = quadrature(|x| pdf((x - 100.0) / 10.0) / 10.0, 0.0, 200.0, 95.0);
        let p = bachelier_price(100.0, 95.0, 1.0, 10.0).unwrap();
        assert!((p - oracle).abs() < 1e-7, "{p} vs {oracle}");
        assert!((bachelier_price(100.0, 95.0, 1.0, 1e-9).unwrap() - 5.0).abs() < 1e-12);
        // negative strikes are admissible
        assert!(bachelier_price(1.0, -1.0, 1.0, 0.5).unwrap() > 2.0);
    }

    fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn second<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn bs_greeks_examples() {
        let g = bs_greeks(1.0, 1.0, 1.0, 0.2).unwrap();
        assert!((g.p_sigma - pdf(0.1)).abs() < 1e-15);
        assert!((g.p_sigma - 0.396_952_547_477_011_8).abs() < 1e-12);
        // At K = S, d₋ < 0 so the cross greek is positive.
        assert!(g.p_s_sigma > 0.0);
    }

    #[test]
    fn bachelier_greeks_examples() {
        let g = bachelier_greeks(100.0, 100.0, 0.5, 12.0).unwrap();
        assert_eq!(g.p_s, 0.5);
        assert_eq!(g.p_sigma_sigma, 0.0);
        assert_eq!(g.p_s_sigma, 0.0);
    }

    pub(crate) fn check_bs_greeks_fd(s: f64, k: f64, t: f64, v: f64) {
        let g = bs_greeks(s, k, t, v).unwrap();
        let p = |s: f64, t: f64, v: f64| bs_price(s, k, t, v).unwrap();
        let (hs, ht, hv) = (1e-4 * s, 1e-5 * t, 1e-5 * v);
        assert!(rel(g.p_s, central(|x| p(x, t, v), s, hs)) < 1e-6);
        assert!(rel(g.p_tau, central(|x| p(s, x, v), t, ht)) < 1e-6);
        assert!(rel(g.p_sigma, central(|x| p(s, t, x), v, hv)) < 1e-6);
        assert!(rel(g.p_ss, second(|x| p(x, t, v), s, 1e-4 * s)) < 1e-6);
        let ps = |vv: f64| bs_greeks(s, k, t, vv).unwrap().p_s;
        assert!(rel(g.p_s_sigma, central(ps, v, hv)) < 1e-6);
        let vega = |vv: f64| bs_greeks(s, k, t, vv).unwrap().p_sigma;
        assert!(rel(g.p_sigma_sigma, central(vega, v, hv)) < 1e-6);
    }

    #[test]
    fn bs_greeks_match_finite_differences() {
        check_bs_greeks_fd(1.0, 1.1, 0.5, 0.3);
        check_bs_greeks_fd(100.0, 90.0, 1.5, 0.25);
    }

    #[test]
    fn bachelier_greeks_match_finite_differences() {
        let (s, k, t, v) = (100.0, 104.0, 0.75, 15.0);
        let g = bachelier_greeks(s, k, t, v).unwrap();
        let p = |s: f64, t: f64, v: f64| bachelier_price(s, k, t, v).unwrap();
        assert!(rel(g.p_s, central(|x| p(x, t, v), s, 1e-3)) < 1e-6);
        assert!(rel(g.p_tau, central(|x| p(s, x, v), t, 1e-5)) < 1e-6);
        assert!(rel(g.p_sigma, central(|x| p(s, t, x), v, 1e-4)) < 1e-6);
        assert!(rel(g.p_ss, second(|x| p(x, t, v), s, 1e-2)) < 1e-6);
        let ps = |vv: f64| bachelier_greeks(s, k, t, vv).unwrap().p_s;
        assert!(rel(g.p_s_sigma, central(ps, v, 1e-4)) < 1e-6);
        let vega = |vv: f64| bachelier_greeks(s, k, t, vv).unwrap().p_sigma;
        assert!(rel(g.p_sigma_sigma, central(vega, v, 1e-4)) < 1e-6);
    }

    #[test]
    fn implied_vol_examples() {
        let p = bs_price(1.0, 1.2, 0.5, 0.35).unwrap();
        let q = OptionQuote::call(1.0, 1.2, 0.5, p, Convention::BlackScholes);
        assert!((implied_vol(&q).unwrap() - 0.35).abs() < 1e-10);

        let q = OptionQuote::call(1.0, 0.9, 0.5, 0.05, Convention::BlackScholes);
        assert!(matches!(
            implied_vol(&q),
            Err(Error::NoSolution { bound: PriceBound::AtOrBelowIntrinsic, .. })
        ));
        let q = OptionQuote::call(1.0, 0.9, 0.5, 1.0, Convention::BlackScholes);
        assert!(matches!(
            implied_vol(&q),
            Err(Error::NoSolution { bound: PriceBound::AtOrAboveUpper, .. })
        ));
    }

    #[test]
    fn implied_vol_deep_otm() {
        let q = OptionQuote::call(1.0, 2.0, 0.1, 1e-12, Convention::BlackScholes);
        let v = implied_vol(&q).unwrap();
        let repriced = bs_price(1.0, 2.0, 0.1, v).unwrap();
        assert!((repriced / 1e-12 - 1.0).abs() < 1e-10);
        let v2 = implied_vol(&OptionQuote::call(1.0, 2.0, 0.1, repriced, Convention::BlackScholes)).unwrap();
        assert!((v - v2).abs() < 1e-8);
    }

    #[test]
    fn implied_vol_from_put() {
        let put = bs_price(1.0, 1.3, 0.4, 0.25).unwrap() - (1.0 - 1.3);
        let q = OptionQuote::from_put(1.0, 1.3, 0.4, put, Convention::BlackScholes);
        assert!((implied_vol(&q).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn bachelier_implied_vol() {
        let p = bachelier_price(100.0, 93.0, 0.3, 18.0).unwrap();
        let q = OptionQuote::call(100.0, 93.0, 0.3, p, Convention::Bachelier);
        assert!((implied_vol(&q).unwrap() - 18.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn prices_increase_in_sigma(
            s in 0.5f64..2.0, k in 0.5f64..2.0, t in 0.02f64..2.0, v in 0.01f64..1.5, dv in 1e-3f64..0.5
        ) {
            let a = bs_price(s, k, t, v).unwrap();
            let b = bs_price(s, k, t, v + dv).unwrap();
            prop_assume!(a > (s - k).max(0.0) + 1e-300);
            prop_assert!(b > a);
            let a = bachelier_price(s, k, t, v).unwrap();
            let b = bachelier_price(s, k, t, v + dv).unwrap();
            prop_assume!(a > (s - k).max(0.0) + 1e-300);
            prop_assert!(b > a);
        }

        #[test]
        fn bs_price_bounds(s in 0.5f64..2.0, k in 0.5f64..2.0, t in 0.02f64..2.0, v in 0.01f64..2.0) {
            let p = bs_price(s, k, t, v).unwrap();
            prop_assert!(p >= (s - k).max(0.0));
            prop_assert!(p < s);
        }
    }
}

//! Monte Carlo option prices and implied volatility smiles.

use std::io::Write;

use serde::Serialize;

use super::paths::{check_spot, Stepper};
use super::volterra::{run_chunks, Sampler};
use super::{McConfig, Scheme};
use crate::error::{domain, Error, PriceBound, Result};
use crate::kernel_curve::{ForwardVarianceCurve, ModelParams, ParamsSummary};
use crate::pricing::{bs_vega, implied_vol, Convention, OptionQuote};
use crate::sabr_formula::scaled_moneyness_y;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeFlag {
    Ok,
    /// The price estimate is at or below intrinsic value, so no volatility exists.
    BelowIntrinsic,
    /// The price estimate lies outside the invertible range.
    NoSolution,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McSmileRow {
    pub strike: f64,
    pub k: f64,
    pub y: f64,
    pub iv: f64,
    pub iv_se: f64,
    pub iv_normalized: f64,
    /// Sample mean of the call payoff.
    pub price: f64,
    pub price_se: f64,
    pub flag: StrikeFlag,
    /// Delta-method standard error of `iv_normalized`, including the noise of
    /// the ATM anchor and its covariance with this strike.
    #[serde(skip)]
    pub iv_normalized_se: f64,
}

impl McSmileRow {
    pub fn is_ok(&self) -> bool {
        self.flag == StrikeFlag::Ok
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McMetadata {
    pub seed: u64,
    pub scheme: Scheme,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub tau: f64,
    pub tau_steps: usize,
    pub exact_block_width: usize,
    pub antithetic: bool,
    pub fft_convolution: bool,
    pub absorbed_fraction: f64,
    pub spot: f64,
    pub atm_iv: f64,
    pub atm_iv_se: f64,
    pub terminal_mean: f64,
    pub terminal_se: f64,
    pub params: ParamsSummary,
    pub curve: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct McSmileEstimate {
    pub rows: Vec<McSmileRow>,
    pub metadata: McMetadata,
}

impl McSmileEstimate {
    /// `strike,k,y,iv,iv_se,iv_normalized,price,price_se,flag`
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

/// Sums over units, in unit order.
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    /// Σ x_i x_atm
    sum_cross: Vec<f64>,
    terminal: f64,
    terminal_sq: f64,
    absorbed: usize,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Moments {
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
            sum_cross: vec![0.0; n],
            terminal: 0.0,
            terminal_sq: 0.0,
            absorbed: 0,
        }
    }

    fn merge(&mut self, other: &Moments) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.sum_cross.iter_mut().zip(&other.sum_cross) {
            *a += b;
        }
        self.terminal += other.terminal;
        self.terminal_sq += other.terminal_sq;
        self.absorbed += other.absorbed;
    }
}

fn mean_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

struct Priced {
    iv: f64,
    iv_se: f64,
    vega: f64,
    price: f64,
    price_se: f64,
    flag: StrikeFlag,
}

fn price_strike(s0: f64, strike: f64, tau: f64, price: f64, price_se: f64) -> Result<Priced> {
    let quote = OptionQuote::call(s0, strike, tau, price, Convention::BlackScholes);
    let (iv, flag) = match implied_vol(&quote) {
        Ok(v) => (v, StrikeFlag::Ok),
        Err(Error::NoSolution { bound, .. }) => match bound {
            PriceBound::AtOrBelowIntrinsic => (f64::NAN, StrikeFlag::BelowIntrinsic),
            PriceBound::AtOrAboveUpper => (f64::NAN, StrikeFlag::NoSolution),
        },
        Err(e) => return Err(e),
    };
    let vega = if flag == StrikeFlag::Ok {
        bs_vega(s0, strike, tau, iv)
    } else {
        f64::NAN
    };
    Ok(Priced {
        iv,
        iv_se: price_se / vega,
        vega,
        price,
        price_se,
        flag,
    })
}

/// Monte Carlo smile at maturity `tau`, normalized by the MC at-the-money vol.
///
/// Strikes whose price estimate cannot be inverted are flagged rather than
/// failing the whole table.
pub fn mc_smile(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    s0: f64,
    tau: f64,
    strikes: &[f64],
    cfg: &McConfig,
) -> Result<McSmileEstimate> {
    cfg.validate()?;
    check_spot(params.beta(), s0)?;
    if !(s0 > 0.0) {
        return domain(format!("implied volatility requires S0 > 0, got {s0}"));
    }
    if let Some(k) = strikes.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return domain(format!("strikes must be positive, got {k}"));
    }
    let m = cfg.steps_to(tau)?;
    let sampler = Sampler::new(params.hurst(), cfg, m)?;
    let stepper = Stepper::new(params, curve, cfg.dt(), m)?;
    let per_unit = cfg.paths_per_unit();
    // the ATM strike is always priced last for normalization
    let mut all: Vec<f64> = strikes.to_vec();
    all.push(s0);
    let n = all.len();
    let chunks = run_chunks(cfg, &sampler, |block, _| -> Result<Moments> {
        let mut acc = Moments::zeros(n);
        let mut unit = vec![0.0; n];
        for u in 0..block.count {
            unit.iter_mut().for_each(|x| *x = 0.0);
            let mut terminal = 0.0;
            for sign in [1.0, -1.0].into_iter().take(per_unit) {
                let (s, hit) =
                    stepper.run(s0, sign, block.dw(u), block.dw_perp(u), block.v(u), None)?;
                acc.absorbed += usize::from(hit);
                terminal += s;
                for (x, k) in unit.iter_mut().zip(&all) {
                    *x += (s - k).max(0.0);
                }
            }
            let w = 1.0 / per_unit as f64;
            let atm = unit[n - 1] * w;
            for (i, x) in unit.iter().enumerate() {
                let x = x * w;
                acc.sum[i] += x;
                acc.sum_sq[i] += x * x;
                acc.sum_cross[i] += x * atm;
            }
            let t = terminal * w;
            acc.terminal += t;
            acc.terminal_sq += t * t;
        }
        Ok(acc)
    })?;
    let mut total = Moments::zeros(n);
    for c in chunks {
        total.merge(&c?);
    }
    let units = cfg.n_units();
    let priced = (0..n)
        .map(|i| {
            let (mean, se) = mean_se(total.sum[i], total.sum_sq[i], units);
            price_strike(s0, all[i], tau, mean, se)
        })
        .collect::<Result<Vec<_>>>()?;
    let atm = &priced[n - 1];
    if atm.flag != StrikeFlag::Ok {
        return Err(Error::Numerical(format!(
            "at-the-money Monte Carlo price {} has no implied volatility",
            atm.price
        )));
    }
    let atm_iv = atm.iv;
    let atm_rel = atm.iv_se / atm_iv;
    let nf = units as f64;
    let atm_mean = total.sum[n - 1] / nf;
    let rows = priced[..n - 1]
        .iter()
        .zip(strikes)
        .enumerate()
        .map(|(i, (p, &strike))| {
            let k = (strike / s0).ln();
            // Cov(P_i, P_atm) of the means, mapped to vols through the vegas
            let mean_i = total.sum[i] / nf;
            let cov = (total.sum_cross[i] - nf * mean_i * atm_mean) / (nf - 1.0) / nf;
            let rel_i = p.iv_se / p.iv;
            let corr_term = 2.0 * cov / (p.vega * atm.vega * p.iv * atm_iv);
            let ratio = p.iv / atm_iv;
            let iv_normalized_se =
                ratio * (rel_i * rel_i + atm_rel * atm_rel - corr_term).max(0.0).sqrt();
            Ok(McSmileRow {
                strike,
                k,
                y: scaled_moneyness_y(params, curve, 0.0, tau, k)?,
                iv: p.iv,
                iv_se: p.iv_se,
                iv_normalized: p.iv / atm_iv,
                price: p.price,
                price_se: p.price_se,
                flag: p.flag,
                iv_normalized_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (terminal_mean, terminal_se) = mean_se(total.terminal, total.terminal_sq, units);
    Ok(McSmileEstimate {
        rows,
        metadata: McMetadata {
            seed: cfg.seed,
            scheme: cfg.scheme,
            n_paths: cfg.n_paths,
            n_steps: cfg.n_steps,
            horizon: cfg.horizon,
            tau,
            tau_steps: m,
            exact_block_width: cfg.exact_block_width,
            antithetic: cfg.antithetic,
            fft_convolution: sampler.uses_fft(),
            absorbed_fraction: total.absorbed as f64 / cfg.n_paths as f64,
            spot: s0,
            atm_iv,
            atm_iv_se: atm.iv_se,
            terminal_mean,
            terminal_se,
            params: params.summary(),
            curve: curve.describe(),
        },
    })
}

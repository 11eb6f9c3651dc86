//! Variance and asset paths driven by the sampled Volterra process.

use super::volterra::{run_chunks, Sampler, UnitBlock};
use super::{McConfig, Scheme};
use crate::error::{domain, Error, Result};
use crate::kernel_curve::{BetaSpec, ForwardVarianceCurve, ModelParams};

/// Advances one asset path through the grid.
pub(crate) struct Stepper<'a> {
    beta: &'a BetaSpec,
    rho: f64,
    rho_bar: f64,
    dt: f64,
    /// ξ₀(t_i)
    xi: Vec<f64>,
    /// η² t_i^{2H} / 2
    compensator: Vec<f64>,
    /// η √(2H)
    vol_of_vol: f64,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(params: &'a ModelParams, curve: &ForwardVarianceCurve, dt: f64, m: usize) -> Result<Self> {
        let h = params.hurst();
        let eta = params.eta();
        let mut xi = Vec::with_capacity(m + 1);
        let mut compensator = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let t = i as f64 * dt;
            xi.push(curve.value(t)?);
            compensator.push(0.5 * eta * eta * t.powf(2.0 * h));
        }
        let rho = params.rho();
        Ok(Stepper {
            beta: params.beta(),
            rho,
            rho_bar: (1.0 - rho * rho).max(0.0).sqrt(),
            dt,
            xi,
            compensator,
            vol_of_vol: eta * (2.0 * h).sqrt(),
        })
    }

    pub(crate) fn alpha_sq(&self, i: usize, v: f64) -> f64 {
        self.xi[i] * (self.vol_of_vol * v - self.compensator[i]).exp()
    }

    /// Runs `dw.len()` steps from `s0`, the driving noise multiplied by `sign`.
    /// Returns the terminal value and whether the path was absorbed at zero.
    /// When `record` is given it receives α and S at every grid point.
    pub(crate) fn run(
        &self,
        s0: f64,
        sign: f64,
        dw: &[f64],
        dw_perp: &[f64],
        v: &[f64],
        mut record: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<(f64, bool)> {
        let m = dw.len();
        let mut s = s0;
        let mut log_s = s0.ln();
        let mut absorbed = false;
        if let Some((alpha, spot)) = record.as_mut() {
            alpha[0] = self.alpha_sq(0, 0.0).sqrt();
            spot[0] = s0;
        }
        for i in 0..m {
            let a2 = self.alpha_sq(i, sign * v[i]);
            let a = a2.sqrt();
            let dz = sign * (self.rho * dw[i] + self.rho_bar * dw_perp[i]);
            match self.beta {
                BetaSpec::Lognormal => {
                    log_s += a * dz - 0.5 * a2 * self.dt;
                    s = log_s.exp();
                }
                BetaSpec::Normal => s += a * dz,
                BetaSpec::Power(p) => {
                    if !absorbed {
                        s += a * s.max(0.0).powf(*p) * dz;
                    }
                }
                BetaSpec::Custom(f) => {
                    if !absorbed {
                        let b = f(s.max(0.0));
                        if !b.is_finite() {
                            return Err(Error::Domain(format!("beta({s}) = {b} is not finite")));
                        }
                        s += a * b * dz;
                    }
                }
            }
            if matches!(self.beta, BetaSpec::Power(_) | BetaSpec::Custom(_)) && s <= 0.0 {
                s = 0.0;
                absorbed = true;
            }
            if let Some((alpha, spot)) = record.as_mut() {
                alpha[i + 1] = self.alpha_sq(i + 1, sign * v[i + 1]).sqrt();
                spot[i + 1] = s;
            }
        }
        Ok((s, absorbed))
    }
}

pub(crate) fn check_spot(beta: &BetaSpec, s0: f64) -> Result<()> {
    if !s0.is_finite() || (beta.requires_positive_spot() && !(s0 > 0.0)) {
        return domain(format!("spot must be positive for beta {}, got {s0}", beta.label()));
    }
    Ok(())
}

/// Simulated paths on the grid `t_i = iΔ`, stored path-major.
#[derive(Debug, Clone)]
pub struct PathBatch {
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    scheme: Scheme,
    v: Vec<f64>,
    alpha: Vec<f64>,
    spot: Vec<f64>,
    absorbed: Vec<bool>,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| i as f64 * self.dt).collect()
    }

    fn row<'b>(&self, data: &'b [f64], path: usize) -> &'b [f64] {
        let n = self.n_steps + 1;
        &data[path * n..(path + 1) * n]
    }

    /// V_t = ∫₀ᵗ (t−u)^{H−1/2} dW_u at each grid time.
    pub fn volterra(&self, path: usize) -> &[f64] {
        self.row(&self.v, path)
    }

    pub fn alpha(&self, path: usize) -> &[f64] {
        self.row(&self.alpha, path)
    }

    pub fn spot(&self, path: usize) -> &[f64] {
        self.row(&self.spot, path)
    }

    pub fn absorbed(&self, path: usize) -> bool {
        self.absorbed[path]
    }

    pub fn absorbed_fraction(&self) -> f64 {
        self.absorbed.iter().filter(|a| **a).count() as f64 / self.n_paths as f64
    }
}

/// Simulate variance and asset paths over the whole configured horizon.
pub fn simulate_paths(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    s0: f64,
    cfg: &McConfig,
) -> Result<PathBatch> {
    cfg.validate()?;
    check_spot(params.beta(), s0)?;
    let m = cfg.n_steps;
    let sampler = Sampler::new(params.hurst(), cfg, m)?;
    let stepper = Stepper::new(params, curve, cfg.dt(), m)?;
    let per_unit = cfg.paths_per_unit();
    type Chunk = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>);
    let chunks = run_chunks(cfg, &sampler, |block: &UnitBlock, _| -> Result<Chunk> {
        let paths = block.count * per_unit;
        let mut v = vec![0.0; paths * (m + 1)];
        let mut alpha = vec![0.0; paths * (m + 1)];
        let mut spot = vec![0.0; paths * (m + 1)];
        let mut absorbed = vec![false; paths];
        for u in 0..block.count {
            for (side, sign) in [1.0, -1.0].into_iter().take(per_unit).enumerate() {
                let p = u * per_unit + side;
                let range = p * (m + 1)..(p + 1) * (m + 1);
                for (dst, src) in v[range.clone()].iter_mut().zip(block.v(u)) {
                    *dst = sign * src;
                }
                let (_, hit) = stepper.run(
                    s0,
                    sign,
                    block.dw(u),
                    block.dw_perp(u),
                    block.v(u),
                    Some((&mut alpha[range.clone()], &mut spot[range])),
                )?;
                absorbed[p] = hit;
            }
        }
        Ok((v, alpha, spot, absorbed))
    })?;
    let mut batch = PathBatch {
        n_paths: cfg.n_paths,
        n_steps: m,
        dt: cfg.dt(),
        seed: cfg.seed,
        scheme: cfg.scheme,
        v: Vec::with_capacity(cfg.n_paths * (m + 1)),
        alpha: Vec::with_capacity(cfg.n_paths * (m + 1)),
        spot: Vec::with_capacity(cfg.n_paths * (m + 1)),
        absorbed: Vec::with_capacity(cfg.n_paths),
    };
    for chunk in chunks {
        let (v, alpha, spot, absorbed) = chunk?;
        batch.v.extend(v);
        batch.alpha.extend(alpha);
        batch.spot.extend(spot);
        batch.absorbed.extend(absorbed);
    }
    Ok(batch)
}

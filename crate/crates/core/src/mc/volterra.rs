//! Samplers for the Brownian increments and the Volterra process on a uniform grid.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::cholesky::{cholesky_psd, lower_mul};
use super::rng::unit_rng;
use super::{McConfig, Scheme};
use crate::error::Result;
use crate::kernel_curve::ModelParams;
use crate::quad::adaptive_simpson;

/// Units per parallel task. Even, so FFT packing pairs never straddle tasks.
pub(crate) const CHUNK_UNITS: usize = 64;

/// Driving noise for a block of consecutive units over `m` steps.
pub(crate) struct UnitBlock {
    pub m: usize,
    pub count: usize,
    dw: Vec<f64>,
    dw_perp: Vec<f64>,
    v: Vec<f64>,
}

impl UnitBlock {
    fn zeros(m: usize, count: usize) -> Self {
        UnitBlock {
            m,
            count,
            dw: vec![0.0; m * count],
            dw_perp: vec![0.0; m * count],
            v: vec![0.0; (m + 1) * count],
        }
    }

    pub fn dw(&self, u: usize) -> &[f64] {
        &self.dw[u * self.m..(u + 1) * self.m]
    }

    pub fn dw_perp(&self, u: usize) -> &[f64] {
        &self.dw_perp[u * self.m..(u + 1) * self.m]
    }

    /// `V` at grid points 0..=m, with `V_0 = 0`.
    pub fn v(&self, u: usize) -> &[f64] {
        &self.v[u * (self.m + 1)..(u + 1) * (self.m + 1)]
    }
}

pub(crate) enum Sampler {
    Hybrid(HybridSampler),
    Exact(ExactSampler),
}

impl Sampler {
    /// Sampler for the first `m` steps of the configured grid.
    pub(crate) fn new(hurst: f64, cfg: &McConfig, m: usize) -> Result<Self> {
        match cfg.scheme {
            Scheme::Hybrid => Ok(Sampler::Hybrid(HybridSampler::new(
                hurst,
                cfg.dt(),
                m,
                cfg.exact_block_width,
                m >= cfg.fft_min_steps,
            )?)),
            Scheme::ExactCholesky => Ok(Sampler::Exact(ExactSampler::new(hurst, cfg.dt(), m)?)),
        }
    }

    pub(crate) fn uses_fft(&self) -> bool {
        matches!(self, Sampler::Hybrid(h) if h.fft.is_some())
    }

    fn sample(&self, seed: u64, first_unit: usize, count: usize) -> UnitBlock {
        match self {
            Sampler::Hybrid(h) => h.sample(seed, first_unit, count),
            Sampler::Exact(e) => e.sample(seed, first_unit, count),
        }
    }
}

/// Sample every unit of `cfg` in parallel chunks and map each chunk with `f`.
///
/// The output is in chunk order, so reducing it sequentially is deterministic.
pub(crate) fn run_chunks<A, F>(cfg: &McConfig, sampler: &Sampler, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(&UnitBlock, usize) -> A + Sync,
{
    let n_units = cfg.n_units();
    let n_chunks = n_units.div_ceil(CHUNK_UNITS);
    let pool = cfg.thread_pool()?;
    Ok(pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let first = c * CHUNK_UNITS;
                let count = CHUNK_UNITS.min(n_units - first);
                let block = sampler.sample(cfg.seed, first, count);
                f(&block, first)
            })
            .collect()
    }))
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Hybrid scheme: the `kappa` most recent kernel intervals are exact Gaussian
/// integrals drawn jointly with ΔW, older ones use the power kernel at the
/// optimal point of each interval.
pub(crate) struct HybridSampler {
    m: usize,
    sqrt_dt: f64,
    kappa: usize,
    /// Lower factor of the covariance of (ΔW, W^(1), …, W^(κ)).
    factor: Vec<f64>,
    /// weights[k − 1] = g_k, zero for k ≤ κ.
    weights: Vec<f64>,
    fft: Option<FftConvolution>,
}

impl HybridSampler {
    fn new(hurst: f64, dt: f64, m: usize, kappa: usize, use_fft: bool) -> Result<Self> {
        let alpha = hurst - 0.5;
        let cov = hybrid_covariance(alpha, kappa, dt)?;
        let factor = cholesky_psd(&cov, kappa + 1, "hybrid-scheme block")?;
        let weights = riemann_weights(alpha, kappa, dt, m);
        let fft = use_fft.then(|| FftConvolution::new(&weights));
        Ok(HybridSampler {
            m,
            sqrt_dt: dt.sqrt(),
            kappa,
            factor,
            weights,
            fft,
        })
    }

    fn sample(&self, seed: u64, first_unit: usize, count: usize) -> UnitBlock {
        let (m, kappa) = (self.m, self.kappa);
        let mut block = UnitBlock::zeros(m, count);
        let mut z = vec![0.0; kappa + 1];
        let mut x = vec![0.0; kappa + 1];
        let mut exact = vec![0.0; m * kappa];
        for u in 0..count {
            let mut rng = unit_rng(seed, (first_unit + u) as u64);
            let dw = &mut block.dw[u * m..(u + 1) * m];
            for j in 0..m {
                for zi in z.iter_mut() {
                    *zi = normal(&mut rng);
                }
                lower_mul(&self.factor, kappa + 1, &z, &mut x);
                dw[j] = x[0];
                exact[j * kappa..(j + 1) * kappa].copy_from_slice(&x[1..]);
            }
            for p in block.dw_perp[u * m..(u + 1) * m].iter_mut() {
                *p = self.sqrt_dt * normal(&mut rng);
            }
            let v = &mut block.v[u * (m + 1)..(u + 1) * (m + 1)];
            for i in 1..=m {
                let mut s = 0.0;
                for k in 1..=kappa.min(i) {
                    s += exact[(i - k) * kappa + k - 1];
                }
                v[i] = s;
            }
            if self.fft.is_none() {
                for i in kappa + 1..=m {
                    // Σ_{k=κ+1}^{i} g_k ΔW_{i−k+1}
                    let mut s = 0.0;
                    for j in 0..i - kappa {
                        s += self.weights[i - 1 - j] * dw[j];
                    }
                    v[i] += s;
                }
            }
        }
        if let Some(fft) = &self.fft {
            let mut buf = vec![Complex::new(0.0, 0.0); fft.len];
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.scratch_len];
            let mut u = 0;
            while u < count {
                let pair = (u + 1 < count).then_some(u + 1);
                fft.convolve(&block, u, pair, &mut buf, &mut scratch);
                let v = &mut block.v;
                for i in 1..=m {
                    v[u * (m + 1) + i] += buf[i - 1].re;
                    if let Some(w) = pair {
                        v[w * (m + 1) + i] += buf[i - 1].im;
                    }
                }
                u += 2;
            }
        }
        block
    }
}

/// Linear convolution with the Riemann weights, two real sequences per complex FFT.
struct FftConvolution {
    len: usize,
    scratch_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel: Vec<Complex<f64>>,
}

impl FftConvolution {
    fn new(weights: &[f64]) -> Self {
        let len = (2 * weights.len()).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut kernel: Vec<Complex<f64>> = (0..len)
            .map(|i| Complex::new(weights.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        let mut scratch = vec![Complex::new(0.0, 0.0); scratch_len];
        forward.process_with_scratch(&mut kernel, &mut scratch);
        let scale = 1.0 / len as f64;
        for c in kernel.iter_mut() {
            *c *= scale;
        }
        FftConvolution {
            len,
            scratch_len,
            forward,
            inverse,
            kernel,
        }
    }

    /// buf[n] = Σ_j ΔW_{j+1} g_{n−j+1}; real part for unit `a`, imaginary part for `b`.
    fn convolve(
        &self,
        block: &UnitBlock,
        a: usize,
        b: Option<usize>,
        buf: &mut [Complex<f64>],
        scratch: &mut [Complex<f64>],
    ) {
        let m = block.m;
        let dwa = block.dw(a);
        for (j, c) in buf.iter_mut().enumerate() {
            *c = if j < m {
                Complex::new(dwa[j], b.map_or(0.0, |b| block.dw(b)[j]))
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        self.forward.process_with_scratch(buf, scratch);
        for (c, k) in buf.iter_mut().zip(&self.kernel) {
            *c *= k;
        }
        self.inverse.process_with_scratch(buf, scratch);
    }
}

/// g_k = Δ^α (k^{α+1} − (k−1)^{α+1}) / (α+1) for κ < k ≤ m, i.e. the kernel at
/// the optimal evaluation point of the k-th interval back.
fn riemann_weights(alpha: f64, kappa: usize, dt: f64, m: usize) -> Vec<f64> {
    let a1 = alpha + 1.0;
    let scale = dt.powf(alpha) / a1;
    (1..=m)
        .map(|k| {
            if k <= kappa {
                0.0
            } else {
                let k = k as f64;
                scale * (k.powf(a1) - (k - 1.0).powf(a1))
            }
        })
        .collect()
}

/// Covariance of (ΔW, W^(1), …, W^(κ)) where W^(k) = ∫ over one step of
/// ((k−1)Δ + Δ − u)^α dW_u, row-major.
fn hybrid_covariance(alpha: f64, kappa: usize, dt: f64) -> Result<Vec<f64>> {
    let n = kappa + 1;
    let a1 = alpha + 1.0;
    let a2 = 2.0 * alpha + 1.0;
    let mut c = vec![0.0; n * n];
    c[0] = dt;
    for k in 1..=kappa {
        let kf = k as f64;
        let c0k = dt.powf(a1) * (kf.powf(a1) - (kf - 1.0).powf(a1)) / a1;
        c[k] = c0k;
        c[k * n] = c0k;
        c[k * n + k] = dt.powf(a2) * (kf.powf(a2) - (kf - 1.0).powf(a2)) / a2;
        for l in k + 1..=kappa {
            let ckl = dt.powf(a2) * kernel_product_integral(alpha, k, l)?;
            c[k * n + l] = ckl;
            c[l * n + k] = ckl;
        }
    }
    Ok(c)
}

/// ∫₀¹ (k−1+x)^α (l−1+x)^α dx for 1 ≤ k < l.
fn kernel_product_integral(alpha: f64, k: usize, l: usize) -> Result<f64> {
    let (k1, l1) = ((k - 1) as f64, (l - 1) as f64);
    if k == 1 {
        // x = w^{1/(α+1)} absorbs the integrable singularity x^α
        let p = 1.0 / (alpha + 1.0);
        let v = adaptive_simpson(|w: f64| Ok((l1 + w.powf(p)).powf(alpha)), 0.0, 1.0, 1e-13)?;
        Ok(p * v)
    } else {
        adaptive_simpson(
            |x: f64| Ok(((k1 + x) * (l1 + x)).powf(alpha)),
            0.0,
            1.0,
            1e-13,
        )
    }
}

/// Exact joint Gaussian law of (W_{t_1..t_m}, V_{t_1..t_m}).
pub(crate) struct ExactSampler {
    m: usize,
    sqrt_dt: f64,
    factor: Vec<f64>,
}

impl ExactSampler {
    fn new(hurst: f64, dt: f64, m: usize) -> Result<Self> {
        let cov = exact_covariance(hurst - 0.5, dt, m)?;
        let factor = cholesky_psd(&cov, 2 * m, "exact Volterra covariance")?;
        Ok(ExactSampler {
            m,
            sqrt_dt: dt.sqrt(),
            factor,
        })
    }

    fn sample(&self, seed: u64, first_unit: usize, count: usize) -> UnitBlock {
        let m = self.m;
        let mut block = UnitBlock::zeros(m, count);
        let mut z = vec![0.0; 2 * m];
        let mut x = vec![0.0; 2 * m];
        for u in 0..count {
            let mut rng = unit_rng(seed, (first_unit + u) as u64);
            for zi in z.iter_mut() {
                *zi = normal(&mut rng);
            }
            for p in block.dw_perp[u * m..(u + 1) * m].iter_mut() {
                *p = self.sqrt_dt * normal(&mut rng);
            }
            lower_mul(&self.factor, 2 * m, &z, &mut x);
            let dw = &mut block.dw[u * m..(u + 1) * m];
            let mut prev = 0.0;
            for j in 0..m {
                dw[j] = x[j] - prev;
                prev = x[j];
            }
            block.v[u * (m + 1) + 1..(u + 1) * (m + 1)].copy_from_slice(&x[m..]);
        }
        block
    }
}

/// Covariance of (W_{t_1}, …, W_{t_m}, V_{t_1}, …, V_{t_m}) with t_i = iΔ.
fn exact_covariance(alpha: f64, dt: f64, m: usize) -> Result<Vec<f64>> {
    let n = 2 * m;
    let a1 = alpha + 1.0;
    let a2 = 2.0 * alpha + 1.0;
    let s_wv = dt.powf(a1) / a1;
    let s_vv = dt.powf(a2);
    let mut c = vec![0.0; n * n];
    for i in 1..=m {
        for j in 1..=m {
            let lo = i.min(j) as f64;
            c[(i - 1) * n + (j - 1)] = dt * lo;
            // Cov(W_{t_i}, V_{t_j})
            let jf = j as f64;
            let wv = s_wv * (jf.powf(a1) - (jf - lo).powf(a1));
            c[(i - 1) * n + m + j - 1] = wv;
            c[(m + j - 1) * n + i - 1] = wv;
        }
    }
    for i in 1..=m {
        for j in i..=m {
            let vv = s_vv * volterra_cov_units(alpha, i as f64, j as f64)?;
            c[(m + i - 1) * n + m + j - 1] = vv;
            c[(m + j - 1) * n + m + i - 1] = vv;
        }
    }
    Ok(c)
}

/// ∫₀ˢ (s−u)^α (t−u)^α du for s ≤ t.
///
/// With v = s − u and d = t − s the integrand is v^α (d+v)^α. The piece on
/// [0, min(d, s)] absorbs the v^α singularity by substitution, the rest is
/// split geometrically so each panel stays smooth.
fn volterra_cov_units(alpha: f64, s: f64, t: f64) -> Result<f64> {
    let a1 = alpha + 1.0;
    if s == t {
        return Ok(s.powf(2.0 * alpha + 1.0) / (2.0 * alpha + 1.0));
    }
    let p = 1.0 / a1;
    let d = t - s;
    let head = d.min(s);
    // v = head · w^p
    let mut total = head.powf(a1)
        * p
        * adaptive_simpson(|w: f64| Ok((d + head * w.powf(p)).powf(alpha)), 0.0, 1.0, 1e-13)?;
    let mut lo = head;
    while lo < s {
        let hi = (2.0 * lo).min(s);
        total += adaptive_simpson(|v: f64| Ok((v * (d + v)).powf(alpha)), lo, hi, 1e-13)?;
        lo = hi;
    }
    Ok(total)
}

/// Per-path Brownian increments, correlated increments and Volterra values.
#[derive(Debug, Clone)]
pub struct VolterraBatch {
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    dw: Vec<f64>,
    dz: Vec<f64>,
    v: Vec<f64>,
}

impl VolterraBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// ΔW over each step.
    pub fn dw(&self, path: usize) -> &[f64] {
        &self.dw[path * self.n_steps..(path + 1) * self.n_steps]
    }

    /// ΔZ = ρΔW + √(1−ρ²)ΔW⊥ over each step.
    pub fn dz(&self, path: usize) -> &[f64] {
        &self.dz[path * self.n_steps..(path + 1) * self.n_steps]
    }

    /// V at the grid points 0..=n_steps, unnormalized (variance t^{2H}/(2H)).
    pub fn v(&self, path: usize) -> &[f64] {
        &self.v[path * (self.n_steps + 1)..(path + 1) * (self.n_steps + 1)]
    }
}

/// Simulate the driving noise and the Volterra process on the whole grid.
pub fn simulate_volterra(params: &ModelParams, cfg: &McConfig) -> Result<VolterraBatch> {
    cfg.validate()?;
    let m = cfg.n_steps;
    let sampler = Sampler::new(params.hurst(), cfg, m)?;
    let rho = params.rho();
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let per_unit = cfg.paths_per_unit();
    let chunks = run_chunks(cfg, &sampler, |block, _| {
        let paths = block.count * per_unit;
        let mut dw = Vec::with_capacity(paths * m);
        let mut dz = Vec::with_capacity(paths * m);
        let mut v = Vec::with_capacity(paths * (m + 1));
        for u in 0..block.count {
            for sign in [1.0, -1.0].iter().take(per_unit) {
                dw.extend(block.dw(u).iter().map(|x| sign * x));
                dz.extend(
                    block
                        .dw(u)
                        .iter()
                        .zip(block.dw_perp(u))
                        .map(|(a, b)| sign * (rho * a + rho_bar * b)),
                );
                v.extend(block.v(u).iter().map(|x| sign * x));
            }
        }
        (dw, dz, v)
    })?;
    let mut batch = VolterraBatch {
        n_paths: cfg.n_paths,
        n_steps: m,
        dt: cfg.dt(),
        dw: Vec::with_capacity(cfg.n_paths * m),
        dz: Vec::with_capacity(cfg.n_paths * m),
        v: Vec::with_capacity(cfg.n_paths * (m + 1)),
    };
    for (dw, dz, v) in chunks {
        batch.dw.extend(dw);
        batch.dz.extend(dz);
        batch.v.extend(v);
    }
    Ok(batch)
}

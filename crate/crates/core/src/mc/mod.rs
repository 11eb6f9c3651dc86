//! Monte Carlo simulation of the rough SABR model.
//!
//! The Volterra process `V_t = ∫₀ᵗ (t−u)^{H−1/2} dW_u` is simulated either with
//! the hybrid scheme or exactly from its joint Gaussian law on the grid. The
//! variance is then `α_t² = ξ₀(t) exp(η√(2H) V_t − η² t^{2H} / 2)` and the asset
//! follows `dS / β(S) = α dZ` with `dZ = ρ dW + √(1−ρ²) dW⊥`.
//!
//! Paths are generated in units: with antithetic sampling a unit is a pair of
//! paths driven by `(W, W⊥)` and `(−W, −W⊥)`, otherwise a single path. Each
//! unit owns its own random stream, so results do not depend on the number of
//! worker threads.

mod cholesky;
mod paths;
mod rng;
mod smile;
mod volterra;

use serde::Serialize;

use crate::error::{domain, Result};

pub use paths::{simulate_paths, PathBatch};
pub use smile::{mc_smile, McMetadata, McSmileEstimate, McSmileRow, StrikeFlag};
pub use volterra::{simulate_volterra, VolterraBatch};

/// Largest grid accepted by [`Scheme::ExactCholesky`].
pub const MAX_CHOLESKY_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Hybrid,
    ExactCholesky,
}

#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    /// Steps over `horizon`; the grid spacing is `horizon / n_steps`.
    pub n_steps: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Number of most recent kernel intervals simulated exactly by the hybrid scheme.
    pub exact_block_width: usize,
    pub antithetic: bool,
    pub scheme: Scheme,
    /// The hybrid Riemann sum switches from direct summation to FFT convolution
    /// at this many steps.
    pub fft_min_steps: usize,
    /// Worker threads, 0 for the rayon default. Does not affect results.
    #[serde(skip)]
    pub threads: usize,
    /// Reserved for the cited refinement of the hybrid scheme; not implemented.
    pub refinement: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 200_000,
            n_steps: 512,
            seed: 1,
            horizon: 0.25,
            exact_block_width: 2,
            antithetic: true,
            scheme: Scheme::Hybrid,
            fft_min_steps: 1024,
            threads: 0,
            refinement: false,
        }
    }
}

impl McConfig {
    pub fn new(n_paths: usize, n_steps: usize, horizon: f64, seed: u64) -> Self {
        McConfig {
            n_paths,
            n_steps,
            horizon,
            seed,
            ..McConfig::default()
        }
    }

    /// 200k paths with 512 steps, or 2048 steps for H < 0.1.
    pub fn desk_scale(hurst: f64, horizon: f64, seed: u64) -> Self {
        let n_steps = if hurst < 0.1 { 2048 } else { 512 };
        McConfig::new(200_000, n_steps, horizon, seed)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return domain(format!("n_paths must be at least 2, got {}", self.n_paths));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return domain(format!(
                "n_paths must be even with antithetic sampling, got {}",
                self.n_paths
            ));
        }
        if self.exact_block_width == 0 {
            return domain("exact_block_width must be at least 1");
        }
        if self.n_steps < self.exact_block_width + 1 {
            return domain(format!(
                "n_steps must be at least exact_block_width + 1 = {}, got {}",
                self.exact_block_width + 1,
                self.n_steps
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.scheme == Scheme::ExactCholesky && self.n_steps > MAX_CHOLESKY_STEPS {
            return domain(format!(
                "exact Cholesky scheme requires n_steps <= {MAX_CHOLESKY_STEPS}, got {}",
                self.n_steps
            ));
        }
        if self.refinement {
            return domain("the hybrid-scheme refinement is not implemented");
        }
        Ok(())
    }

    /// Paths per random stream.
    pub(crate) fn paths_per_unit(&self) -> usize {
        if self.antithetic {
            2
        } else {
            1
        }
    }

    pub(crate) fn n_units(&self) -> usize {
        self.n_paths / self.paths_per_unit()
    }

    /// Number of grid steps to reach `tau`, which must be a grid time.
    pub fn steps_to(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.0) || tau > self.horizon * (1.0 + 1e-12) {
            return domain(format!(
                "tau must lie in (0, horizon = {}], got {tau}",
                self.horizon
            ));
        }
        let x = tau / self.dt();
        let m = x.round();
        if (x - m).abs() > 1e-9 * x.max(1.0) || m < 1.0 {
            return domain(format!(
                "tau = {tau} is not on the simulation grid with spacing {}",
                self.dt()
            ));
        }
        let m = m as usize;
        if m < self.exact_block_width + 1 {
            return domain(format!(
                "tau = {tau} covers {m} steps, fewer than exact_block_width + 1"
            ));
        }
        Ok(m)
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| crate::error::Error::Numerical(format!("thread pool: {e}")))
    }
}

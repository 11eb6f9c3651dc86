//! The normalized-smile ODE and its closed-form companions.
//!
//! With `g(y) = y / f(y)` the short-maturity normalized smile `f` satisfies
//!
//! ```text
//! g'(y) = [(1-2H) f + sqrt((1-2H)² f² + 8H q(y))] / (2 q(y)),   g(0) = 0,
//! q(y)  = 1 + 2ρ y/(2H+1) + y²/(2H+1)²
//! ```
//!
//! which is solved here on both sides of the origin. `G = g²` has the explicit
//! solutions `G₀` (H = 0) and `G₁/₂` (H = 1/2); their interpolation `G_A`
//! reproduces the ATM skew of the general solution.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Error, Result};

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return domain(format!("requires |rho| < 1, got rho = {rho}"));
    }
    Ok(())
}

fn check_hurst(hurst: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&hurst) {
        return domain(format!("requires 0 <= H <= 1/2, got H = {hurst}"));
    }
    Ok(())
}

/// q(y) = 1 + 2ρ y/(2H+1) + y²/(2H+1)².
#[inline]
pub fn q(hurst: f64, rho: f64, y: f64) -> f64 {
    let x = y / (2.0 * hurst + 1.0);
    1.0 + 2.0 * rho * x + x * x
}

/// Explicit solution at H = 1/2: `g = -2 log[(√(1+ρy+y²/4) - ρ - y/2)/(1-ρ)]`.
///
/// Evaluated as `2 log1p((s - 1 + y/2)/(1 + ρ))` for y >= 0, using
/// `(s - ρ - y/2)(s + ρ + y/2) = 1 - ρ²`, which avoids cancellation in the right wing.
pub fn g_closed_form_half(rho: f64, y: f64) -> Result<f64> {
    check_rho(rho)?;
    let s = (1.0 + rho * y + 0.25 * y * y).sqrt();
    let s_minus_one = (rho * y + 0.25 * y * y) / (s + 1.0);
    let g = if y >= 0.0 {
        2.0 * ((s_minus_one + 0.5 * y) / (1.0 + rho)).ln_1p()
    } else {
        -2.0 * ((s_minus_one - 0.5 * y) / (1.0 - rho)).ln_1p()
    };
    Ok(g)
}

/// G₀(y) = log(1 + 2ρy + y²) + (2ρ/√(1-ρ²)) (atan(ρ/√(1-ρ²)) - atan((y+ρ)/√(1-ρ²))).
pub fn big_g_zero(rho: f64, y: f64) -> Result<f64> {
    check_rho(rho)?;
    let c = (1.0 - rho * rho).sqrt();
    // atan(a) - atan(b) = atan2(a - b, 1 + ab), with a - b = -y/c and 1 + ab = (1 + ρy)/c².
    let atan_diff = (-y * c).atan2(1.0 + rho * y);
    let v = (2.0 * rho * y + y * y).ln_1p() + 2.0 * rho / c * atan_diff;
    Ok(v.max(0.0))
}

/// G₁/₂(y) = g₁/₂(y)².
pub fn big_g_half(rho: f64, y: f64) -> Result<f64> {
    let g = g_closed_form_half(rho, y)?;
    Ok(g * g)
}

/// Explicit solution at H = 0: `g = sign(y) √G₀(y)`.
pub fn g_closed_form_zero(rho: f64, y: f64) -> Result<f64> {
    let big = big_g_zero(rho, y)?;
    Ok(y.signum() * big.sqrt() * if y == 0.0 { 0.0 } else { 1.0 })
}

/// Low-order coefficients of `G(y) = y² + a y³ + b y⁴ + …` and of
/// `f(y) = 1 + f_skew y + f_curv y²/2 + …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesCoefficients {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub f_skew: f64,
    pub f_curv: f64,
}

/// Closed-form series coefficients with γ = H + 1/2.
pub fn series_coefficients(hurst: f64, rho: f64) -> SeriesCoefficients {
    let gamma = hurst + 0.5;
    let a = -rho / (gamma * (gamma + 1.0));
    let b = (3.0 * rho * rho * (4.0 * gamma + 1.0) / ((gamma + 1.0) * (gamma + 1.0)) - 1.0)
        / (4.0 * gamma * gamma * (2.0 * gamma + 1.0));
    let f_skew = rho / (2.0 * (hurst + 0.5) * (hurst + 1.5));
    let two_h1 = 2.0 * hurst + 1.0;
    let two_h3 = 2.0 * hurst + 3.0;
    let f_curv = (two_h3 * two_h3 - 12.0 * two_h1 * rho * rho)
        / (2.0 * (hurst + 1.0) * two_h1 * two_h1 * two_h3 * two_h3);
    SeriesCoefficients {
        gamma,
        a,
        b,
        f_skew,
        f_curv,
    }
}

/// Taylor coefficients `c[n]` of `G(y) = Σ c[n] yⁿ` for n = 0..=order, from the
/// G-form ODE `¼ G'² q = (1-2H) y G'/2 + 2H G` by coefficient matching.
///
/// Order m >= 3 gives `c_m (mγ - 2H) = -¼ (P'_m + q₁ P_{m-1} + q₂ P_{m-2})`, where
/// `P = G'²` and `P'_m` omits the two terms containing `c_m`.
pub fn power_series(hurst: f64, rho: f64, order: usize) -> Vec<f64> {
    let gamma = hurst + 0.5;
    let q1 = 2.0 * rho / (2.0 * hurst + 1.0);
    let q2 = 1.0 / ((2.0 * hurst + 1.0) * (2.0 * hurst + 1.0));
    let mut c = vec![0.0; order.max(2) + 1];
    c[2] = 1.0;
    // d[j] = coefficient of y^j in G' = (j+1) c[j+1]
    let d = |c: &[f64], j: usize| (j + 1) as f64 * c[j + 1];
    let p = |c: &[f64], m: usize| -> f64 {
        (1..m).map(|i| d(c, i) * d(c, m - i)).sum()
    };
    for m in 3..=order {
        let p_reduced: f64 = (2..=m - 2).map(|i| d(&c, i) * d(&c, m - i)).sum();
        let rest = p_reduced + q1 * p(&c, m - 1) + q2 * p(&c, m - 2);
        c[m] = -0.25 * rest / (m as f64 * gamma - 2.0 * hurst);
    }
    c.truncate(order + 1);
    c
}

/// Right-hand side g'(y) of the smile ODE, always on the "+" root.
pub fn ode_rhs(hurst: f64, rho: f64, y: f64, g: f64) -> Result<f64> {
    let qy = q(hurst, rho, y);
    if !(qy > 0.0) {
        return Err(Error::Singularity(format!("q({y}) = {qy} <= 0")));
    }
    let f = if y == 0.0 && g == 0.0 { 1.0 } else { y / g };
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::InvalidSolution(format!(
            "g({y}) = {g} does not have the sign of y"
        )));
    }
    let lin = (1.0 - 2.0 * hurst) * f;
    Ok((lin + (lin * lin + 8.0 * hurst * qy).sqrt()) / (2.0 * qy))
}

/// Numerical settings for [`solve_ode`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeOptions {
    /// Half-width of the symmetric output grid.
    pub y_max: f64,
    /// Target spacing of the output grid.
    pub spacing: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Distance from the origin where integration starts from the series.
    pub y_start: f64,
    /// Order of the Taylor series used at `y_start`.
    pub series_order: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            y_max: 10.0,
            spacing: 1e-3,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            y_start: 1e-3,
            series_order: 12,
        }
    }
}

impl OdeOptions {
    pub fn with_y_max(y_max: f64) -> Self {
        OdeOptions {
            y_max,
            ..Default::default()
        }
    }
}

/// Tabulated solution of the smile ODE for one (H, ρ).
#[derive(Debug, Clone)]
pub struct OdeSolution {
    hurst: f64,
    rho: f64,
    y_max: f64,
    spacing: f64,
    y: Vec<f64>,
    g: Vec<f64>,
    big_g: Vec<f64>,
    f: Vec<f64>,
    dg: Vec<f64>,
}

/// One row of the `y,g,G,f` table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeRow {
    pub y: f64,
    pub g: f64,
    #[serde(rename = "G")]
    pub big_g: f64,
    pub f: f64,
}

impl OdeSolution {
    pub fn hurst(&self) -> f64 {
        self.hurst
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn y_grid(&self) -> &[f64] {
        &self.y
    }
    pub fn g_values(&self) -> &[f64] {
        &self.g
    }
    pub fn big_g_values(&self) -> &[f64] {
        &self.big_g
    }
    pub fn f_values(&self) -> &[f64] {
        &self.f
    }
    /// Exact ODE slopes g'(y) at the grid nodes.
    pub fn slopes(&self) -> &[f64] {
        &self.dg
    }

    pub fn rows(&self) -> impl Iterator<Item = OdeRow> + '_ {
        (0..self.y.len()).map(move |i| OdeRow {
            y: self.y[i],
            g: self.g[i],
            big_g: self.big_g[i],
            f: self.f[i],
        })
    }

    /// g(y) by monotone cubic Hermite interpolation on the node slopes.
    pub fn g_at(&self, y: f64) -> Result<f64> {
        if !(y.abs() <= self.y_max * (1.0 + 1e-12)) {
            return domain(format!(
                "y = {y} outside the ODE solution domain [-{0}, {0}]",
                self.y_max
            ));
        }
        let n = self.y.len();
        let pos = (y + self.y_max) / self.spacing;
        let j = (pos.floor() as usize).min(n - 2);
        let (y0, y1) = (self.y[j], self.y[j + 1]);
        let (g0, g1) = (self.g[j], self.g[j + 1]);
        let h = y1 - y0;
        let secant = (g1 - g0) / h;
        let (mut m0, mut m1) = (self.dg[j], self.dg[j + 1]);
        // Fritsch–Carlson limiter
        let (al, be) = (m0 / secant, m1 / secant);
        let r2 = al * al + be * be;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m0 = tau * al * secant;
            m1 = tau * be * secant;
        }
        let t = (y - y0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * g0 + h10 * h * m0 + h01 * g1 + h11 * h * m1)
    }

    pub fn big_g_at(&self, y: f64) -> Result<f64> {
        let g = self.g_at(y)?;
        Ok(g * g)
    }

    /// f(y) = y / g(y) with f(0) = 1.
    pub fn f_at(&self, y: f64) -> Result<f64> {
        let g = self.g_at(y)?;
        if y == 0.0 {
            return Ok(1.0);
        }
        Ok(y / g)
    }

    /// Write the `y,g,G,f` CSV table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Integrator<'a, F> {
    rhs: &'a F,
    rel_tol: f64,
    abs_tol: f64,
}

impl<F> Integrator<'_, F>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    /// Advance (x, u) to `x_end` with adaptive steps; `h` carries the step-size guess
    /// across calls and has the sign of the integration direction.
    fn advance(&self, mut x: f64, mut u: f64, x_end: f64, h: &mut f64) -> Result<f64> {
        let dir = (x_end - x).signum();
        let mut k1 = (self.rhs)(x, u)?;
        while (x_end - x) * dir > 0.0 {
            let mut step = h.abs().min((x_end - x).abs()) * dir;
            let last = (x + step - x_end) * dir >= 0.0;
            if step.abs() < 1e-14 * x.abs().max(1e-3) {
                return Err(Error::Singularity(format!("step size underflow at y = {x}")));
            }
            let mut k = [0.0; 7];
            k[0] = k1;
            for s in 1..7 {
                let incr: f64 = (0..s).map(|j| A[s][j] * k[j]).sum();
                k[s] = (self.rhs)(x + C[s] * step, u + step * incr)?;
            }
            let incr: f64 = (0..6).map(|j| A[6][j] * k[j]).sum();
            let u_new = u + step * incr;
            let err_est: f64 = step * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
            let scale = self.abs_tol + self.rel_tol * u.abs().max(u_new.abs());
            let err = (err_est / scale).abs();
            if err <= 1.0 {
                x = if last { x_end } else { x + step };
                u = u_new;
                k1 = k[6];
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
                *h = (step.abs() * grow) * dir;
            } else {
                let shrink = (0.9 * err.powf(-0.2)).max(0.2);
                step *= shrink;
                *h = step;
            }
        }
        Ok(u)
    }
}

/// Solve the smile ODE on the symmetric grid `[-y_max, y_max]`.
///
/// Both branches start at `±y_start` from the Taylor series of G and are
/// integrated outward, so the singular origin is never crossed.
pub fn solve_ode(hurst: f64, rho: f64, opts: &OdeOptions) -> Result<OdeSolution> {
    check_hurst(hurst)?;
    check_rho(rho)?;
    if !(opts.y_max > 0.0 && opts.y_max.is_finite()) {
        return domain(format!("requires y_max > 0, got {}", opts.y_max));
    }
    if !(opts.spacing > 0.0) || opts.spacing > opts.y_max {
        return domain(format!("grid spacing {} incompatible with y_max", opts.spacing));
    }
    let n = (opts.y_max / opts.spacing).round().max(1.0) as usize;
    let spacing = opts.y_max / n as f64;
    let y_start = opts.y_start.min(spacing);
    let series = power_series(hurst, rho, opts.series_order);
    let series_g = |y: f64| -> f64 {
        let big: f64 = series.iter().rev().fold(0.0, |acc, c| acc * y + c);
        y.signum() * big.sqrt()
    };

    let rhs = |y: f64, g: f64| ode_rhs(hurst, rho, y, g);
    let integrator = Integrator {
        rhs: &rhs,
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
    };

    let mut g = vec![0.0; 2 * n + 1];
    for dir in [1.0f64, -1.0] {
        let mut x = dir * y_start;
        let mut u = series_g(x);
        let mut h = dir * spacing;
        for i in 1..=n {
            let target = dir * i as f64 * spacing;
            let idx = if dir > 0.0 { n + i } else { n - i };
            if target.abs() <= y_start {
                g[idx] = series_g(target);
                continue;
            }
            u = integrator.advance(x, u, target, &mut h)?;
            x = target;
            g[idx] = u;
        }
    }

    let y: Vec<f64> = (0..=2 * n)
        .map(|i| (i as f64 - n as f64) * spacing)
        .collect();
    let big_g: Vec<f64> = g.iter().map(|v| v * v).collect();
    let f: Vec<f64> = y
        .iter()
        .zip(&g)
        .map(|(&yy, &gg)| if yy == 0.0 { 1.0 } else { yy / gg })
        .collect();
    let dg = y
        .iter()
        .zip(&g)
        .map(|(&yy, &gg)| ode_rhs(hurst, rho, yy, gg))
        .collect::<Result<Vec<_>>>()?;

    Ok(OdeSolution {
        hurst,
        rho,
        y_max: opts.y_max,
        spacing,
        y,
        g,
        big_g,
        f,
        dg,
    })
}

/// Closed-form interpolation G_A of the extreme solutions G₀ and G₁/₂.
pub fn g_approx(hurst: f64, rho: f64, y: f64) -> Result<f64> {
    check_hurst(hurst)?;
    check_rho(rho)?;
    let s = 2.0 * hurst + 1.0;
    let w0 = 3.0 * (1.0 - 2.0 * hurst) / (2.0 * hurst + 3.0);
    let w_half = 2.0 * hurst / (2.0 * hurst + 3.0);
    let mut v = 0.0;
    if w0 != 0.0 {
        v += w0 * big_g_zero(rho, y / s)?;
    }
    if w_half != 0.0 {
        v += w_half * big_g_half(rho, 2.0 * y / s)?;
    }
    Ok(s * s * v)
}

/// f = |y| / √G, with the series limit f(0) = 1.
pub fn f_from_g(y: f64, big_g: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(1.0);
    }
    if !(big_g > 0.0) {
        return Err(Error::InvalidSolution(format!(
            "G({y}) = {big_g} must be positive away from the origin"
        )));
    }
    Ok(y.abs() / big_g.sqrt())
}

/// f_A(y) = |y| / √G_A(y).
pub fn f_approx(hurst: f64, rho: f64, y: f64) -> Result<f64> {
    f_from_g(y, g_approx(hurst, rho, y)?)
}

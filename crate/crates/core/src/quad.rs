//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Integrate `f` over `[a, b]` to the requested relative tolerance.
///
/// The integrand may fail (for example a user-supplied curve returning a
/// nonpositive value); the first failure aborts the integration.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Absolute floor relative to a coarse magnitude estimate.
    let scale = ((b - a) * (fa.abs() + 4.0 * fm.abs() + fb.abs()) / 6.0).max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let value = recurse(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "quadrature on [{a}, {b}] produced a non-finite value"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|x| Ok(x * x * x - 2.0 * x), 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 0.0).abs() < 1e-14);
    }

    #[test]
    fn transcendental() {
        let v = adaptive_simpson(|x: f64| Ok(x.exp()), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(|x: f64| Ok(x.sin()), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_interval_is_signed() {
        let v = adaptive_simpson(|x: f64| Ok(1.0 / x), 2.0, 1.0, 1e-12).unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn integrand_error_propagates() {
        let r = adaptive_simpson(
            |x| if x > 0.5 { Err(Error::Domain("bad".into())) } else { Ok(1.0) },
            0.0,
            1.0,
            1e-10,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}

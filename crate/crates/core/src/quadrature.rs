//! Adaptive Simpson quadrature with an absolute error target.

use crate::error::{Error, Result};

pub const MAX_DEPTH: u32 = 40;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::QuadratureNotConverged { a, b })
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return Err(Error::QuadratureNotConverged { a, b });
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Adaptive Simpson for a vector-valued integrand; every component meets
/// the absolute tolerance `tol`.
pub fn simpson_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<[f64; N]> {
    if a == b {
        return Ok([0.0; N]);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = panel(a, b, &fa, &fm, &fb);
    let value = recurse_vec(f, a, b, [fa, fm, fb], whole, tol, MAX_DEPTH)?;
    if value.iter().all(|v| v.is_finite()) {
        Ok(value)
    } else {
        Err(Error::QuadratureNotConverged { a, b })
    }
}

fn panel<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let w = (b - a) / 6.0;
    std::array::from_fn(|k| w * (fa[k] + 4.0 * fm[k] + fb[k]))
}

fn recurse_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    [fa, fm, fb]: [[f64; N]; 3],
    whole: [f64; N],
    tol: f64,
    depth: u32,
) -> Result<[f64; N]> {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = panel(a, m, &fa, &flm, &fm);
    let right = panel(m, b, &fm, &frm, &fb);
    let delta: [f64; N] = std::array::from_fn(|k| left[k] + right[k] - whole[k]);
    let err = delta.iter().fold(0.0_f64, |e, d| e.max(d.abs()));
    if err <= 15.0 * tol {
        return Ok(std::array::from_fn(|k| {
            left[k] + right[k] + delta[k] / 15.0
        }));
    }
    if depth == 0 || !err.is_finite() {
        return Err(Error::QuadratureNotConverged { a, b });
    }
    let l = recurse_vec(f, a, m, [fa, flm, fm], left, 0.5 * tol, depth - 1)?;
    let r = recurse_vec(f, m, b, [fm, frm, fb], right, 0.5 * tol, depth - 1)?;
    Ok(std::array::from_fn(|k| l[k] + r[k]))
}

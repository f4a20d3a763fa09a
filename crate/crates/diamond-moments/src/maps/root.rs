//! Bracketed scalar root finding (Illinois variant of regula falsi).

use crate::{Error, Result};

/// Root of `f` in `[lo, hi]` given `f(lo)` and `f(hi)` of opposite sign.
/// Stops when the bracket is below `x_tol` (relative to its midpoint) or
/// `|f| <= f_tol`.
pub fn illinois<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    f_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Domain(format!("root not bracketed on [{lo}, {hi}]")));
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo.min(hi) && x < lo.max(hi)) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.abs() <= f_tol || (hi - lo).abs() <= x_tol * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if fx.signum() == f_hi.signum() {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::NotConverged {
        what: "bracketed root".into(),
        achieved: (hi - lo).abs(),
    })
}

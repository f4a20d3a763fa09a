//! Auxiliary functions of the rescaled variance map, written in
//! cancellation-free form.
//!
//! With `y = x/kappa^2` and `Q(y) = M(kappa^2 y)/(kappa^2 y)`:
//! * `f_b(y) = (Q(y) - 1 - y - c3 y^2)/y^3`, `c3 = 2(b-2)/(3(b-1))`;
//! * `h_b(y) = (1/(y Q) - 1/y + 1 - eta y)/y^2`, which equals `N(y)/Q(y)`
//!   for a polynomial `N` because `c3 + eta = 1`;
//! * `hhat_b(x) = [h_b(y) + eta (y - log Q(y))/y^2] / kappa^4`, so that
//!   `hhat_b(x) x^2 = 1 + kappa^2/M(x) - kappa^2/x - eta log(M(x)/x)`.

use super::{critical_constants, BranchingParams};
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Below this `x` the log term of `hhat_b` switches to its power series.
pub const X_SWITCH: f64 = 1e-4;
const LOG_SERIES_DEGREE: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxValues {
    pub f: f64,
    /// `None` outside `(0, 1]`.
    pub h: Option<f64>,
    /// `None` outside `(0, kappa^2]`.
    pub h_hat: Option<f64>,
}

pub(crate) fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub(crate) fn binom(n: u32, k: u32) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact coefficients of `Q(y)`, constant term first; length `b`.
pub(crate) fn q_coefficients(b: u32) -> Vec<BigRational> {
    let k2 = rat(2, b as i64 - 1);
    let mut pow = BigRational::one();
    let mut out = Vec::with_capacity(b as usize);
    for k in 1..=b {
        out.push(BigRational::from_integer(binom(b, k)) / BigRational::from_integer(BigInt::from(b)) * &pow);
        pow *= &k2;
    }
    out
}

/// Exact series of `(y - log Q(y))/y^2` up to `degree`.
pub(crate) fn log_term_series(b: u32, degree: usize) -> Vec<BigRational> {
    let q = q_coefficients(b);
    let len = degree + 3;
    // u = Q - 1
    let mut u = vec![BigRational::zero(); len];
    for (i, c) in q.iter().enumerate().skip(1) {
        if i < len {
            u[i] = c.clone();
        }
    }
    let mut log = vec![BigRational::zero(); len];
    let mut pw = u.clone();
    for j in 1..len {
        let sign = if j % 2 == 1 { 1 } else { -1 };
        for i in 0..len {
            log[i] += &pw[i] * rat(sign, j as i64);
        }
        pw = mul_trunc(&pw, &u, len);
    }
    let mut diff = vec![BigRational::zero(); len];
    diff[1] = BigRational::one();
    for i in 0..len {
        diff[i] -= &log[i];
    }
    debug_assert!(diff[0].is_zero() && diff[1].is_zero());
    diff[2..].to_vec()
}

pub(crate) fn mul_trunc(a: &[BigRational], b: &[BigRational], len: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); len];
    for (i, x) in a.iter().enumerate().take(len) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn to_f64(v: &[BigRational]) -> Vec<f64> {
    v.iter().map(|c| c.to_f64().expect("finite rational")).collect()
}

pub(crate) fn horner(coef: &[f64], y: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

/// Precomputed per-`b` coefficient tables in binary64.
#[derive(Clone, Debug)]
pub(crate) struct AuxTables {
    pub kappa_sq: f64,
    pub eta: f64,
    pub q: Vec<f64>,
    pub c3: f64,
    /// `f_b` coefficients (empty for `b <= 3`).
    pub f: Vec<f64>,
    pub log_series: Vec<f64>,
}

impl AuxTables {
    pub fn new(b: u32) -> Self {
        let q_exact = q_coefficients(b);
        let c3 = rat(2 * (b as i64 - 2), 3 * (b as i64 - 1));
        debug_assert!(b < 3 || q_exact[2] == c3);
        let f = if b >= 4 { to_f64(&q_exact[3..]) } else { Vec::new() };
        let cc = critical_constants(BranchingParams { b, s: b });
        Self {
            kappa_sq: cc.kappa_sq(),
            eta: cc.eta,
            q: to_f64(&q_exact),
            c3: c3.to_f64().unwrap(),
            f,
            log_series: to_f64(&log_term_series(b, LOG_SERIES_DEGREE)),
        }
    }

    pub fn f_b(&self, y: f64) -> f64 {
        horner(&self.f, y)
    }

    pub fn q(&self, y: f64) -> f64 {
        horner(&self.q, y)
    }

    pub fn h_b(&self, y: f64) -> f64 {
        let f = self.f_b(y);
        let num = (self.c3 - self.eta) - f + y * (f - self.eta * self.c3) - self.eta * y * y * f;
        num / self.q(y)
    }

    fn log_term(&self, x: f64) -> f64 {
        if x < X_SWITCH {
            self.log_term_series(x)
        } else {
            self.log_term_closed(x)
        }
    }

    /// `Q - 1` is formed without the leading 1 so that `ln_1p` keeps full
    /// relative accuracy.
    pub fn log_term_closed(&self, x: f64) -> f64 {
        let y = x / self.kappa_sq;
        let u = y * horner(&self.q[1..], y);
        (y - u.ln_1p()) / (y * y)
    }

    pub fn log_term_series(&self, x: f64) -> f64 {
        horner(&self.log_series, x / self.kappa_sq)
    }

    pub fn h_hat(&self, x: f64) -> f64 {
        let y = x / self.kappa_sq;
        (self.h_b(y) + self.eta * self.log_term(x)) / (self.kappa_sq * self.kappa_sq)
    }

    /// `hhat_b(z) z^2`: the per-step defect of `kappa^2/x + eta log(kappa^2/x)`.
    pub fn phi(&self, z: f64) -> f64 {
        self.h_hat(z) * z * z
    }
}

/// `f_b`, `h_b` and `hhat_b` at `x`.
pub fn aux_functions(params: BranchingParams, x: f64) -> Result<AuxValues> {
    params.require_critical()?;
    let t = AuxTables::new(params.b);
    let upper = t.kappa_sq.max(1.0);
    if !(x > 0.0 && x <= upper) {
        return Err(Error::Domain(format!("aux functions need x in (0, {upper}], got {x}")));
    }
    Ok(AuxValues {
        f: t.f_b(x),
        h: (x <= 1.0).then(|| t.h_b(x)),
        h_hat: (x <= t.kappa_sq).then(|| t.h_hat(x)),
    })
}

//! Functions defined by summing along backward orbits of the map:
//! `S_b` (sum of squares), `D_b` (normalized derivative product),
//! `F_b` and the Abel-type function
//! `G_b(x) = kappa^2/x + eta log(kappa^2/x) - F_b(x)`, which satisfies
//! `G_b(M_b(x)) = G_b(x) - 1`.
//!
//! Each backward orbit is followed until it drops below [`CLOSURE_Z`]; the
//! remaining tail is the value at that point of a formal power series
//! solving the matching functional equation exactly.

use super::aux::{mul_trunc, rat, to_f64, AuxTables};
use super::root::illinois;
use super::{inverse_raw, BranchingParams, MapPoly};
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Backward orbits stop once they fall to or below this value.
pub const CLOSURE_Z: f64 = 1e-2;
/// Truncation order of the closing power series.
pub const SERIES_ORDER: usize = 12;
/// Grid step of the monotonicity scan for `G_b`.
pub const DELTA_GRID_STEP: f64 = 1e-3;

/// Per-`b` tables for the backward-orbit functions.
#[derive(Debug)]
pub struct AbelRoute {
    b: u32,
    aux: AuxTables,
    map: MapPoly<f64>,
    /// `F` series, coefficient of `z^k` at index `k - 1`.
    f_hat: Vec<f64>,
    /// `S` series, coefficient of `z^k` at index `k - 1`.
    s_hat: Vec<f64>,
    /// `D` series, coefficient of `z^k` at index `k - 2`.
    d_hat: Vec<f64>,
    delta: OnceLock<f64>,
}

/// Formal series of the map `M(z) = sum_{k=1}^b C(b,k)/b z^k`, indexed by power.
fn map_series(b: u32, len: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); len];
    for k in 1..=b as usize {
        if k < len {
            out[k] = BigRational::new(super::aux::binom(b, k as u32), BigInt::from(b));
        }
    }
    out
}

fn powers(m: &[BigRational], count: usize, len: usize) -> Vec<Vec<BigRational>> {
    let mut pw = Vec::with_capacity(count + 1);
    let mut cur = vec![BigRational::zero(); len];
    cur[0] = BigRational::one();
    pw.push(cur.clone());
    for _ in 0..count {
        cur = mul_trunc(&cur, m, len);
        pw.push(cur.clone());
    }
    pw
}

/// `phi(z) = 1 + kappa^2/M(z) - kappa^2/z - eta log(M(z)/z)` as a series.
fn phi_series(b: u32, len: usize) -> Vec<BigRational> {
    let m = map_series(b, len + 2);
    let k2 = rat(2, b as i64 - 1);
    let eta = rat(b as i64 + 1, 3 * (b as i64 - 1));
    let ext = len + 1;
    // u = M(z)/z - 1
    let mut u = vec![BigRational::zero(); ext];
    for i in 1..ext {
        u[i] = m[i + 1].clone();
    }
    let neg_u: Vec<BigRational> = u.iter().map(|c| -c).collect();
    let mut geo = vec![BigRational::zero(); ext];
    let mut log = vec![BigRational::zero(); ext];
    let mut pw = neg_u.clone();
    let mut upw = u.clone();
    for j in 1..ext {
        let sign = if j % 2 == 1 { 1 } else { -1 };
        for i in 0..ext {
            geo[i] += &pw[i];
            log[i] += &upw[i] * rat(sign, j as i64);
        }
        pw = mul_trunc(&pw, &neg_u, ext);
        upw = mul_trunc(&upw, &u, ext);
    }
    let mut phi = vec![BigRational::zero(); len];
    phi[0] = BigRational::one();
    for i in 0..len {
        phi[i] += &k2 * &geo[i + 1];
        phi[i] -= &eta * &log[i];
    }
    phi
}

/// Solves `P(M(z)) - P(z) = target(z)` for `P = sum_{k=1}^order c_k z^k`.
fn solve_difference(b: u32, target: &[BigRational], order: usize) -> Vec<BigRational> {
    let len = order + 2;
    let m = map_series(b, len);
    let pw = powers(&m, order, len);
    let a2 = rat(b as i64 - 1, 2);
    assert!(target[0].is_zero() && target[1].is_zero(), "target must be O(z^2)");
    let mut c: Vec<BigRational> = Vec::with_capacity(order);
    for k in 1..=order {
        let mut rhs = target[k + 1].clone();
        for (j, cj) in c.iter().enumerate() {
            rhs -= cj * &pw[j + 1][k + 1];
        }
        c.push(rhs / (&a2 * BigRational::from_integer(BigInt::from(k))));
    }
    c
}

/// Solves `P(M(z)) = M'(z) P(z)` with `P = z^2/kappa^4 + O(z^3)`.
fn solve_derivative_product(b: u32, order: usize) -> Vec<BigRational> {
    let len = order + 3;
    let m = map_series(b, len);
    let pw = powers(&m, order + 1, len);
    let mut dm = vec![BigRational::zero(); len];
    for k in 1..len {
        dm[k - 1] = &m[k] * BigRational::from_integer(BigInt::from(k));
    }
    let a2 = rat(b as i64 - 1, 2);
    let k2 = rat(2, b as i64 - 1);
    let mut d = vec![BigRational::one() / (&k2 * &k2)];
    // [z^{q}] of M(z)^j - M'(z) z^j
    let coef = |j: usize, q: usize| -> BigRational {
        let shifted = if q >= j { dm[q - j].clone() } else { BigRational::zero() };
        &pw[j][q] - shifted
    };
    for k in 3..=order + 1 {
        let mut rhs = BigRational::zero();
        for (idx, dj) in d.iter().enumerate() {
            rhs -= dj * coef(idx + 2, k + 1);
        }
        d.push(rhs / (&a2 * BigRational::from_integer(BigInt::from(k as i64 - 2))));
    }
    d
}

fn eval_series(coef: &[f64], first_power: i32, z: f64) -> f64 {
    super::aux::horner(coef, z) * z.powi(first_power)
}

impl AbelRoute {
    pub fn new(b: u32) -> Self {
        let order = SERIES_ORDER;
        let phi = phi_series(b, order + 2);
        let f_hat = solve_difference(b, &phi, order);
        let m = map_series(b, order + 2);
        let m_sq = mul_trunc(&m, &m, order + 2);
        let s_hat = solve_difference(b, &m_sq, order);
        let d_hat = solve_derivative_product(b, order);
        Self {
            b,
            aux: AuxTables::new(b),
            map: MapPoly::new(BranchingParams { b, s: b }),
            f_hat: to_f64(&f_hat),
            s_hat: to_f64(&s_hat),
            d_hat: to_f64(&d_hat),
            delta: OnceLock::new(),
        }
    }

    /// Shared instance for `b`, built on first use.
    pub fn get(b: u32) -> Arc<AbelRoute> {
        static CACHE: OnceLock<RwLock<HashMap<u32, Arc<AbelRoute>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(r) = cache.read().expect("cache lock").get(&b) {
            return r.clone();
        }
        let mut w = cache.write().expect("cache lock");
        w.entry(b).or_insert_with(|| Arc::new(AbelRoute::new(b))).clone()
    }

    pub fn kappa_sq(&self) -> f64 {
        self.aux.kappa_sq
    }

    pub fn eta(&self) -> f64 {
        self.aux.eta
    }

    pub fn f_series_coefficients(&self) -> &[f64] {
        &self.f_hat
    }

    /// One forward step of the map.
    pub fn forward(&self, x: f64) -> f64 {
        self.map.eval(x)
    }

    fn inv(&self, z: f64) -> f64 {
        inverse_raw(self.b as f64, z)
    }

    /// `F_b(x) = sum_{l >= 1} phi(M^{-l} x)`; also returns the number of
    /// explicit terms.
    pub fn f_with_terms(&self, x: f64) -> (f64, usize) {
        let mut z = x;
        let mut acc = 0.0;
        let mut terms = 0;
        while z > CLOSURE_Z {
            z = self.inv(z);
            acc += self.aux.phi(z);
            terms += 1;
        }
        (acc + eval_series(&self.f_hat, 1, z), terms)
    }

    /// `F_b` by plain summation of `depth` terms, without the series tail.
    pub fn f_partial(&self, x: f64, depth: usize) -> f64 {
        let mut z = x;
        let mut acc = 0.0;
        for _ in 0..depth {
            z = self.inv(z);
            acc += self.aux.phi(z);
        }
        acc
    }

    pub fn f(&self, x: f64) -> f64 {
        self.f_with_terms(x).0
    }

    pub fn g(&self, x: f64) -> f64 {
        let k2 = self.kappa_sq();
        k2 / x + self.eta() * (k2 / x).ln() - self.f(x)
    }

    /// `S_b(x) = sum_{k >= 0} (M^{-k} x)^2`.
    pub fn s(&self, x: f64) -> (f64, usize) {
        let mut z = x;
        let mut acc = 0.0;
        let mut terms = 0;
        while z > CLOSURE_Z {
            acc += z * z;
            z = self.inv(z);
            terms += 1;
        }
        (acc + eval_series(&self.s_hat, 1, z), terms)
    }

    /// `D_b(x) = lim n^{-2} prod_{k=1}^n (1 + M^{-k} x)^{b-1}`.
    pub fn d(&self, x: f64) -> (f64, usize) {
        let mut z = x;
        let mut log_prod = 0.0;
        let mut terms = 0;
        while z > CLOSURE_Z {
            z = self.inv(z);
            log_prod += (self.b as f64 - 1.0) * z.ln_1p();
            terms += 1;
        }
        (log_prod.exp() * eval_series(&self.d_hat, 2, z), terms)
    }

    /// Finite-`n` product `n^{-2} prod_{k=1}^n (1 + M^{-k} x)^{b-1}`.
    pub fn d_partial(&self, x: f64, n: u64) -> f64 {
        let mut z = x;
        let mut log_prod = 0.0;
        for _ in 0..n {
            z = self.inv(z);
            log_prod += (self.b as f64 - 1.0) * z.ln_1p();
        }
        (log_prod - 2.0 * (n as f64).ln()).exp()
    }

    /// Largest grid point `delta` such that `G_b` is strictly decreasing on
    /// the grid over `(0, delta]`; the grid stops at `kappa^2`.
    pub fn delta(&self) -> f64 {
        *self.delta.get_or_init(|| {
            let steps = (self.kappa_sq() / DELTA_GRID_STEP + 1e-9).floor() as usize;
            let mut prev = self.g(DELTA_GRID_STEP);
            let mut last = DELTA_GRID_STEP;
            for i in 2..=steps {
                let x = i as f64 * DELTA_GRID_STEP;
                let gx = self.g(x);
                if gx >= prev {
                    break;
                }
                prev = gx;
                last = x;
            }
            last
        })
    }

    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        let delta = self.delta();
        let g_delta = self.g(delta);
        if !(y >= g_delta) {
            return Err(Error::Domain(format!("G^-1 needs y >= G(delta) = {g_delta}, got {y}")));
        }
        let k2 = self.kappa_sq();
        let t_min = k2 / delta;
        // Solve in t = kappa^2/x, where G is close to linear.
        let h = |t: f64| self.g(k2 / t) - y;
        let seed_x = if y > 2.0 { k2 / y + k2 * self.eta() * y.ln() / (y * y) } else { delta };
        let mut t_lo = t_min;
        let mut t_hi = (k2 / seed_x).max(t_min) * 1.01 + 1.0;
        let mut guard = 0;
        while h(t_hi) < 0.0 {
            t_lo = t_hi;
            t_hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::NotConverged { what: "G^-1 bracket".into(), achieved: t_hi });
            }
        }
        let t = illinois(h, t_lo, t_hi, 1e-15, 0.0, 200)?;
        Ok(k2 / t)
    }
}

fn route(params: BranchingParams) -> Result<Arc<AbelRoute>> {
    params.require_critical()?;
    Ok(AbelRoute::get(params.b))
}

fn check_nonneg(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected finite x >= 0, got {x}")))
    }
}

/// `S_b(x)` and the number of explicitly summed terms before the series tail.
pub fn s_series(params: BranchingParams, x: f64) -> Result<(f64, usize)> {
    check_nonneg(x)?;
    Ok(route(params)?.s(x))
}

/// `D_b(x)` and the number of explicit product factors before the series tail.
pub fn d_product(params: BranchingParams, x: f64) -> Result<(f64, usize)> {
    check_nonneg(x)?;
    Ok(route(params)?.d(x))
}

/// `F_b(x)` on `(0, kappa^2]`.
pub fn f_series(params: BranchingParams, x: f64) -> Result<f64> {
    let r = route(params)?;
    if !(x > 0.0 && x <= r.kappa_sq()) {
        return Err(Error::Domain(format!("F_b needs x in (0, {}], got {x}", r.kappa_sq())));
    }
    Ok(r.f(x))
}

/// `G_b(x)` on `(0, delta_b]`.
pub fn g_func(params: BranchingParams, x: f64) -> Result<f64> {
    let r = route(params)?;
    let delta = r.delta();
    if !(x > 0.0 && x <= delta) {
        return Err(Error::Domain(format!("G_b needs x in (0, {delta}], got {x}")));
    }
    Ok(r.g(x))
}

pub fn g_inverse(params: BranchingParams, y: f64) -> Result<f64> {
    route(params)?.g_inverse(y)
}

/// The cached monotonicity threshold `delta_b`.
pub fn monotonicity_threshold(params: BranchingParams) -> Result<f64> {
    Ok(route(params)?.delta())
}

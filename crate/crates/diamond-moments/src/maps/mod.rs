//! The variance map `M_b(x) = ((1+x)^s - 1)/b`, its inverse and iterates,
//! and the analytic machinery that pins down the variance limit `R_b(r)`.

mod abel;
mod aux;
pub mod extrapolate;
mod ladder;
pub(crate) mod root;

pub use abel::{d_product, f_series, g_func, g_inverse, monotonicity_threshold, s_series, AbelRoute};
pub use aux::{aux_functions, AuxValues, X_SWITCH};
pub use ladder::{ladder_grid, ladder_values, r_limit, r_limit_derivative, LadderEstimate};
pub(crate) use ladder::{backward_depth, choose_basis, BINARY64_BASES, EXTENDED_BASES};

use crate::real::Real;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Branching number `b` and segmenting number `s` of the diamond lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchingParams {
    pub b: u32,
    pub s: u32,
}

impl BranchingParams {
    pub fn new(b: u32, s: u32) -> Result<Self> {
        if b < 2 || s < 2 {
            return Err(Error::InvalidParams(format!("need b >= 2 and s >= 2, got b={b}, s={s}")));
        }
        Ok(Self { b, s })
    }

    /// The critical case `s = b`.
    pub fn critical(b: u32) -> Result<Self> {
        Self::new(b, b)
    }

    pub fn is_critical(&self) -> bool {
        self.b == self.s
    }

    pub fn require_critical(&self) -> Result<()> {
        if self.is_critical() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "operation requires s = b, got b={}, s={}",
                self.b, self.s
            )))
        }
    }
}

/// `kappa = sqrt(2/(b-1))`, `eta = (b+1)/(3(b-1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub kappa: f64,
    pub eta: f64,
}

impl CriticalConstants {
    pub fn kappa_sq(&self) -> f64 {
        self.kappa * self.kappa
    }
}

pub fn critical_constants(params: BranchingParams) -> CriticalConstants {
    let b = params.b as f64;
    CriticalConstants {
        kappa: (2.0 / (b - 1.0)).sqrt(),
        eta: (b + 1.0) / (3.0 * (b - 1.0)),
    }
}

/// `kappa^2` exactly as a ratio, for extended-precision use.
pub(crate) fn kappa_sq_real<T: Real>(b: u32) -> T {
    T::ratio(2.0, b as f64 - 1.0)
}

pub(crate) fn eta_real<T: Real>(b: u32) -> T {
    T::ratio(b as f64 + 1.0, 3.0 * (b as f64 - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloatKind {
    Binary64,
    /// Only 106 (double-double) is supported.
    Extended { mantissa_bits: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPolicy {
    pub float_kind: FloatKind,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub ladder_max_exponent: u32,
    pub series_tail_tol: f64,
    pub cross_tol: f64,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        Self {
            float_kind: FloatKind::Extended { mantissa_bits: 106 },
            tol_abs: 1e-10,
            tol_rel: 1e-8,
            ladder_max_exponent: 20,
            series_tail_tol: 1e-12,
            cross_tol: 1e-4,
        }
    }
}

impl PrecisionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0 && self.series_tail_tol > 0.0 && self.cross_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if !(8..=30).contains(&self.ladder_max_exponent) {
            return Err(Error::InvalidParams(format!(
                "ladder_max_exponent {} outside [8, 30]",
                self.ladder_max_exponent
            )));
        }
        if let FloatKind::Extended { mantissa_bits } = self.float_kind {
            if mantissa_bits != 106 {
                return Err(Error::InvalidParams(format!(
                    "extended precision supports 106 mantissa bits, got {mantissa_bits}"
                )));
            }
        }
        Ok(())
    }
}

/// Polynomial coefficients of the map, `C(s,k)/b` for `k = 1..=s`.
/// Evaluating the polynomial avoids the cancellation in `(1+x)^s - 1`.
#[derive(Clone, Debug)]
pub struct MapPoly<T: Real> {
    coef: Vec<T>,
}

impl<T: Real> MapPoly<T> {
    pub fn new(params: BranchingParams) -> Self {
        let s = params.s as usize;
        let mut binom = vec![1.0f64; s + 1];
        for k in 1..=s {
            binom[k] = binom[k - 1] * (s - k + 1) as f64 / k as f64;
        }
        let coef = (1..=s).map(|k| T::ratio(binom[k].round(), params.b as f64)).collect();
        Self { coef }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        let mut acc = *self.coef.last().expect("s >= 2");
        for c in self.coef.iter().rev().skip(1) {
            acc = acc * x + *c;
        }
        acc * x
    }

    /// Preimage under the map by Newton's method from a binary64 start;
    /// critical case (coefficients of `((1+x)^b - 1)/b`) only.
    pub fn inverse(&self, y: T) -> T {
        let b = self.coef.len() as f64;
        let mut z = T::from_f64(inverse_raw(b, y.to_f64()));
        for _ in 0..3 {
            z = z - (self.eval(z) - y) / self.derivative(z);
        }
        z
    }

    /// `M'(x)`.
    pub fn derivative(&self, x: T) -> T {
        let s = self.coef.len();
        let mut acc = self.coef[s - 1] * T::from_f64(s as f64);
        for k in (1..s).rev() {
            acc = acc * x + self.coef[k - 1] * T::from_f64(k as f64);
        }
        acc
    }
}

fn check_nonneg(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected finite x >= 0, got {x}")))
    }
}

pub fn m_map(params: BranchingParams, x: f64) -> Result<f64> {
    check_nonneg(x)?;
    let y = MapPoly::<f64>::new(params).eval(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Overflow { completed: 0, requested: 1 })
    }
}

#[inline]
pub(crate) fn inverse_raw(b: f64, x: f64) -> f64 {
    ((b * x).ln_1p() / b).exp_m1()
}

/// `M_b^{-1}(x) = (1+bx)^{1/b} - 1`, critical case only.
pub fn m_inverse(params: BranchingParams, x: f64) -> Result<f64> {
    params.require_critical()?;
    check_nonneg(x)?;
    Ok(inverse_raw(params.b as f64, x))
}

/// `n`-fold composition of the map (`n > 0`) or its inverse (`n < 0`).
pub fn m_iterate(params: BranchingParams, x: f64, n: i64) -> Result<f64> {
    check_nonneg(x)?;
    if n < 0 {
        params.require_critical()?;
        let b = params.b as f64;
        let mut z = x;
        for _ in 0..n.unsigned_abs() {
            z = inverse_raw(b, z);
        }
        return Ok(z);
    }
    let poly = MapPoly::<f64>::new(params);
    let mut z = x;
    for step in 0..n as u64 {
        z = poly.eval(z);
        if !z.is_finite() {
            return Err(Error::Overflow { completed: step, requested: n as u64 });
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(b: u32) -> BranchingParams {
        BranchingParams::critical(b).unwrap()
    }

    #[test]
    fn constants_closed_forms() {
        let c2 = critical_constants(p(2));
        assert!((c2.kappa - 2f64.sqrt()).abs() < 1e-15 && c2.eta == 1.0);
        let c3 = critical_constants(p(3));
        assert!((c3.kappa - 1.0).abs() < 1e-15 && (c3.eta - 2.0 / 3.0).abs() < 1e-15);
        let c5 = critical_constants(p(5));
        assert!((c5.kappa - 0.5f64.sqrt()).abs() < 1e-15 && (c5.eta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(BranchingParams::new(1, 2).is_err());
        assert!(BranchingParams::new(2, 3).unwrap().require_critical().is_err());
        assert!(m_inverse(BranchingParams::new(2, 3).unwrap(), 0.1).is_err());
    }

    #[test]
    fn map_examples() {
        assert_eq!(m_map(p(2), 0.0).unwrap(), 0.0);
        assert!((m_map(p(2), 0.1).unwrap() - 0.105).abs() < 1e-16);
        assert!((m_map(p(3), 1.0).unwrap() - 7.0 / 3.0).abs() < 1e-15);
        assert!(m_map(p(2), -1e-3).is_err());
        let off = BranchingParams::new(2, 3).unwrap();
        assert!((m_map(off, 1.0).unwrap() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        assert!((m_inverse(p(2), 0.105).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(m_inverse(p(2), 0.0).unwrap(), 0.0);
        assert!((m_inverse(p(3), 7.0 / 3.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn iterate_identity_and_overflow() {
        assert_eq!(m_iterate(p(2), 0.3, 0).unwrap(), 0.3);
        match m_iterate(p(2), 1.0, 100) {
            Err(Error::Overflow { completed, requested }) => {
                assert!(completed > 3 && completed < 100 && requested == 100)
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn backward_iterates_scale_like_kappa_sq_over_n() {
        // n * M^{-n}(1) approaches kappa^2 = 2 monotonically.
        let mut prev_gap = f64::INFINITY;
        for k in 8..=20 {
            let n = 1i64 << k;
            let v = n as f64 * m_iterate(p(2), 1.0, -n).unwrap();
            let gap = (v - 2.0).abs();
            assert!(gap < prev_gap, "k={k}: {v}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-4);
    }

    #[test]
    fn dd_map_agrees_with_f64() {
        let f = MapPoly::<f64>::new(p(4));
        let d = MapPoly::<crate::real::DD>::new(p(4));
        for &x in &[1e-8, 0.3, 2.0] {
            let a = f.eval(x);
            let b = d.eval(crate::real::DD::from_f64(x)).to_f64();
            assert!((a - b).abs() <= 1e-15 * a);
        }
    }

    proptest! {
        #[test]
        fn map_is_repelling_and_increasing(b in 2u32..=6, x in 0.0f64..10.0, dx in 1e-6f64..1.0) {
            let pb = p(b);
            let y = m_map(pb, x).unwrap();
            prop_assert!(y >= x);
            if x > 0.0 { prop_assert!(y > x); }
            prop_assert!(m_map(pb, x + dx).unwrap() > y);
        }

        #[test]
        fn inverse_round_trip(b in 2u32..=6, x in 0.0f64..1e6) {
            let pb = p(b);
            let back = m_map(pb, m_inverse(pb, x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-8 * (1.0 + x));
        }

        #[test]
        fn iterate_round_trip(b in 2u32..=4, x in 0.0f64..0.2, k in 1i64..8) {
            let pb = p(b);
            let fwd = m_iterate(pb, x, k).unwrap();
            let back = m_iterate(pb, fwd, -k).unwrap();
            prop_assert!((back - x).abs() <= 1e-8 * (1.0 + x));
        }

        #[test]
        fn inverse_sandwich(b in 2u32..=6, x in 1e-6f64..1e-2) {
            // x/(1+a2 x) <= M^{-1}(x) <= x/(1+a1 x) with a1 < 1/kappa^2 < a2.
            let pb = p(b);
            let ik2 = 1.0 / critical_constants(pb).kappa_sq();
            let z = m_inverse(pb, x).unwrap();
            prop_assert!(z <= x / (1.0 + 0.9 * ik2 * x));
            prop_assert!(z >= x / (1.0 + 1.1 * ik2 * x));
        }
    }
}

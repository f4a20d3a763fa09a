//! The coupled centered-moment recursion `rho_{n+1}^(m) = P_m(rho_n^(2..m))`.

use super::build::build_pm;
use super::poly::{power_table, CompiledPoly, SparsePolynomial};
use crate::maps::{BranchingParams, MapPoly};
use crate::real::Real;
use crate::{Error, Result};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

/// Centered moments `rho^(2..=m_max)`; `rho^(0) = 1` and `rho^(1) = 0` are
/// implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub m_max: u32,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParams("moment vector needs rho^(2)".into()));
        }
        if !(values[0] >= 0.0) {
            return Err(Error::InvalidParams(format!("rho^(2) = {} must be >= 0", values[0])));
        }
        Ok(Self { m_max: values.len() as u32 + 1, values })
    }

    pub fn zeros(m_max: u32) -> Self {
        Self { m_max, values: vec![0.0; m_max as usize - 1] }
    }

    /// `rho^(m)`.
    pub fn get(&self, m: u32) -> f64 {
        self.values[m as usize - 2]
    }
}

/// `P_2, ..., P_{m_max}` compiled over the common variables `y_2..y_{m_max}`.
#[derive(Clone, Debug)]
pub struct MomentSystem<T: Real> {
    b: u32,
    m_max: u32,
    polys: Vec<CompiledPoly<T>>,
    /// `dP_m/dy_m`, for the inverse step.
    diag: Vec<CompiledPoly<T>>,
    max_pow: Vec<u32>,
    map: MapPoly<T>,
}

impl<T: Real> MomentSystem<T> {
    pub fn new(b: u32, m_max: u32) -> Result<Self> {
        let params = BranchingParams::critical(b)?;
        let mv = m_max as usize;
        let sparse: Vec<SparsePolynomial> =
            (2..=m_max).map(|m| build_pm(b, m).map(|p| p.extend(mv))).collect::<Result<_>>()?;
        let polys: Vec<CompiledPoly<T>> = sparse.iter().map(CompiledPoly::new).collect();
        let diag = sparse
            .iter()
            .enumerate()
            .map(|(i, p)| CompiledPoly::new(&p.partial(i + 2)))
            .collect();
        let mut max_pow = vec![0u32; mv - 1];
        for p in &polys {
            for (a, &k) in max_pow.iter_mut().zip(p.max_powers()) {
                *a = (*a).max(k);
            }
        }
        Ok(Self { b, m_max, polys, diag, max_pow, map: MapPoly::new(params) })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    /// One simultaneous update; every `P_m` reads the previous vector only.
    pub fn step(&self, y: &[T]) -> Vec<T> {
        let powers = power_table(y, &self.max_pow);
        self.polys.iter().map(|p| p.eval_powers(&powers)).collect()
    }

    /// The preimage of `t` under [`Self::step`] near the nonnegative branch.
    /// The system is triangular: `y_2 = M_b^{-1}(t_2)`, then each `y_m`
    /// solves `P_m(y_2..y_m) = t_m` by Newton's method.
    pub fn inverse_step(&self, t: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); t.len()];
        y[0] = self.map.inverse(t[0]);
        for i in 1..t.len() {
            // P_m >= y_m/b^{m-2} + V_m with V_m >= 0 on the nonnegative
            // orthant, so this start lies right of the increasing root and
            // Newton descends onto it monotonically.
            let lin = T::from_f64((self.b as f64).powi(i as i32));
            y[i] = t[i] * lin;
            for _ in 0..200 {
                let f = self.polys[i].eval(&y) - t[i];
                let d = self.diag[i].eval(&y);
                let dy = f / d;
                y[i] = y[i] - dy;
                if dy.to_f64().abs() <= 1e-31 * y[i].to_f64().abs() {
                    break;
                }
            }
        }
        y
    }

    /// `n` steps from `init`; `Overflow` reports the completed count.
    pub fn iterate(&self, init: &[T], n: u64) -> Result<Vec<T>> {
        self.iterate_with(init, n, |_, _| {})
    }

    /// As [`Self::iterate`], calling `visit(k, y_k)` after every step.
    pub fn iterate_with(&self, init: &[T], n: u64, mut visit: impl FnMut(u64, &[T])) -> Result<Vec<T>> {
        if init.len() != self.polys.len() {
            return Err(Error::InvalidParams(format!(
                "initial vector has {} entries, system has {}",
                init.len(),
                self.polys.len()
            )));
        }
        let mut y = init.to_vec();
        for k in 0..n {
            y = self.step(&y);
            if y.iter().any(|v| !v.to_f64().is_finite()) {
                return Err(Error::Overflow { completed: k, requested: n });
            }
            visit(k + 1, &y);
        }
        Ok(y)
    }
}

/// `n` generations of the moment recursion in binary64.
pub fn iterate_moments(b: u32, m_max: u32, init: &MomentVector, n: u64) -> Result<MomentVector> {
    if init.m_max != m_max {
        return Err(Error::InvalidParams(format!(
            "initial vector has m_max = {}, requested {m_max}",
            init.m_max
        )));
    }
    let sys = MomentSystem::<f64>::new(b, m_max)?;
    let values = sys.iterate(&init.values, n)?;
    Ok(MomentVector { m_max, values })
}

/// `n` generations in exact rational arithmetic.
pub fn iterate_moments_exact(b: u32, m_max: u32, init: &[BigRational], n: u64) -> Result<Vec<BigRational>> {
    if init.len() + 1 != m_max as usize {
        return Err(Error::InvalidParams(format!(
            "initial vector has {} entries, need {}",
            init.len(),
            m_max - 1
        )));
    }
    let polys: Vec<_> = (2..=m_max).map(|m| build_pm(b, m)).collect::<Result<_>>()?;
    let mut y = init.to_vec();
    for _ in 0..n {
        y = polys.iter().map(|p| p.eval_exact(&y)).collect();
    }
    Ok(y)
}

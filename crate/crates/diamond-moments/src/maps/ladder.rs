//! The variance limit `R_b(r) = lim_n M_b^n(X^{(n,r)})` with
//! `X^{(n,r)} = kappa^2 (1/n + eta log n/n^2 + r/n^2)`, evaluated on the
//! ladder `n = 2^k` and extrapolated.
//!
//! The gap `M^n(X^{(n,r)}) - R(r)` expands as `sum_j q_j(log n)/n^j` with
//! `deg q_j = 2j`. The limit is fitted through the top rungs of the ladder
//! after pulling every rung back by a fixed number of inverse steps.
//! Iteration runs in double-double unless binary64 is requested.

use super::extrapolate::{fit_limit, LogPowerBasis};
use super::{eta_real, kappa_sq_real, BranchingParams, FloatKind, MapPoly, PrecisionPolicy};
use crate::real::{Real, DD};
use crate::{Error, Result};
use serde::Serialize;

/// Candidate fit bases, richest first: degrees of the `log n` polynomials
/// at orders `1/n`, `1/n^2`, ... Binary64 rounding noise (about `1e-7` in
/// the Abel coordinate at `n = 2^20`) only supports the leading order.
pub(crate) const EXTENDED_BASES: &[&[u32]] = &[&[2, 4, 6], &[2, 4], &[2]];
pub(crate) const BINARY64_BASES: &[&[u32]] = &[&[2]];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderEstimate {
    pub value: f64,
    /// Change of the extrapolated value when the fit window moves down one rung.
    pub residual: f64,
    /// Largest `n` iterated.
    pub converged_n: u64,
    /// Raw `(n, M^n(X^{(n,r)}))` pairs.
    pub ladder: Vec<(u64, f64)>,
}

/// `M^n(X^{(n,r)})` for each `n` in `ns`.
pub fn ladder_values<T: Real>(params: BranchingParams, r: f64, ns: &[u64]) -> Result<Vec<T>> {
    params.require_critical()?;
    let map = MapPoly::<T>::new(params);
    let k2 = kappa_sq_real::<T>(params.b);
    let eta = eta_real::<T>(params.b);
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let nt = T::from_f64(n as f64);
        // An f64 logarithm shifts G by O(1e-15) only.
        let log_n = T::from_f64((n as f64).ln());
        let x = k2 * (T::one() / nt + (eta * log_n + T::from_f64(r)) / (nt * nt));
        if x.to_f64() <= 0.0 {
            return Err(Error::Domain(format!("X^(n,r) <= 0 at n = {n}, r = {r}")));
        }
        let mut z = x;
        for step in 0..n {
            z = map.eval(z);
            if !z.to_f64().is_finite() {
                return Err(Error::Overflow { completed: step, requested: n });
            }
        }
        out.push(z);
    }
    Ok(out)
}

/// `count` ladder sizes ending at `2^k_max`, spaced by `2^{1/per_octave}`,
/// ascending.
pub fn ladder_grid(k_max: u32, per_octave: u32, count: usize) -> Vec<u64> {
    let mut ns: Vec<u64> = (0..count)
        .map(|j| (2f64.powf(k_max as f64 - j as f64 / per_octave as f64)).round() as u64)
        .collect();
    ns.reverse();
    ns
}

/// Richest basis whose fit window (plus one rung for the residual) starts
/// at `n >= max(16, 2|r|)`, keeping `|log n + r|/n` small over the window.
pub(crate) fn choose_basis(k_max: u32, r: f64, candidates: &[&[u32]]) -> Option<LogPowerBasis> {
    let n_floor = 16f64.max(-2.0 * r);
    candidates.iter().map(|d| LogPowerBasis::new(d.to_vec())).find(|basis| {
        let rungs = basis.unknowns() as u32 + 1;
        rungs <= k_max + 1 && 2f64.powi((k_max + 1 - rungs) as i32) >= n_floor
    })
}

/// Backward steps `J` taking `v` to at most `kappa^2/4`.
pub(crate) fn backward_depth<T: Real>(map: &MapPoly<T>, v: T, kappa_sq: f64) -> usize {
    let mut z = v;
    let mut j = 0;
    while z.to_f64() > 0.25 * kappa_sq && j < 64 {
        z = map.inverse(z);
        j += 1;
    }
    j
}

fn ladder_estimate<T: Real>(params: BranchingParams, r: f64, k_max: u32, candidates: &[&[u32]]) -> Result<LadderEstimate> {
    let basis = choose_basis(k_max, r, candidates)
        .ok_or_else(|| Error::InvalidParams(format!("ladder to 2^{k_max} too short for r = {r}")))?;
    let rungs = basis.unknowns() + 1;
    let ns = ladder_grid(k_max, 1, rungs);
    let vals = ladder_values::<T>(params, r, &ns)?;
    let map = MapPoly::<T>::new(params);
    // Fit M^{-J}(V_n), whose limit is M^{-J}(R(r)), in the range where the
    // expansion coefficients are small; then map the limit forward.
    let j = backward_depth(&map, *vals.last().expect("nonempty ladder"), kappa_sq_real::<f64>(params.b));
    let pulled: Vec<T> = vals
        .iter()
        .map(|&v| (0..j).fold(v, |z, _| map.inverse(z)))
        .collect();
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let k = basis.unknowns();
    let singular = || Error::NotConverged {
        what: "ladder extrapolation (singular fit)".into(),
        achieved: f64::NAN,
    };
    let head = fit_limit(&nf[1..], &pulled[1..], &basis).ok_or_else(singular)?;
    let prev = fit_limit(&nf[..k], &pulled[..k], &basis).ok_or_else(singular)?;
    let push = |w: T| (0..j).fold(w, |z, _| map.eval(z));
    let value = push(head);
    let residual = (value - push(prev)).abs().to_f64();
    Ok(LadderEstimate {
        value: value.to_f64(),
        residual,
        converged_n: 1u64 << k_max,
        ladder: ns.iter().zip(&vals).map(|(&n, v)| (n, v.to_f64())).collect(),
    })
}

/// `R_b(r)` by the iteration ladder. Fails with `NotConverged` when the
/// extrapolation residual exceeds `cross_tol * max(1, R)`.
pub fn r_limit(params: BranchingParams, r: f64, policy: &PrecisionPolicy) -> Result<LadderEstimate> {
    policy.validate()?;
    let est = match policy.float_kind {
        FloatKind::Binary64 => ladder_estimate::<f64>(params, r, policy.ladder_max_exponent, BINARY64_BASES)?,
        FloatKind::Extended { .. } => ladder_estimate::<DD>(params, r, policy.ladder_max_exponent, EXTENDED_BASES)?,
    };
    if !(est.residual <= policy.cross_tol * est.value.abs().max(1.0)) {
        return Err(Error::NotConverged {
            what: format!("r_limit at r = {r}"),
            achieved: est.residual,
        });
    }
    Ok(est)
}

/// `R_b'(r) = lim (kappa^2/n^2) prod_{k=1}^n (1 + R_b(r-k))^{b-1}`.
///
/// The shifted values satisfy `R_b(r-k) = M_b^{-k}(R_b(r))`, so the product
/// is `kappa^2 D_b(R_b(r))`.
pub fn r_limit_derivative(params: BranchingParams, r: f64, policy: &PrecisionPolicy) -> Result<f64> {
    let base = r_limit(params, r, policy)?;
    let (d, _) = super::d_product(params, base.value)?;
    Ok(kappa_sq_real::<f64>(params.b) * d)
}

//! Limit moments `R_b^(m)(r)` by the iteration ladder and by the shifted
//! series, and their `r`-derivatives.

use super::build::{build_pm, split_uv};
use super::iterate::MomentSystem;
use super::poly::CompiledPoly;
use crate::disorder::{beta_schedule, initial_moment, BetaSchedule, DisorderModel, ScheduleForm};
use crate::maps::extrapolate::fit_limit;
use crate::maps::{
    backward_depth, choose_basis, d_product, eta_real, kappa_sq_real, ladder_grid, BranchingParams, FloatKind, MapPoly,
    PrecisionPolicy, BINARY64_BASES, EXTENDED_BASES,
};
use crate::real::{Real, DD};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Smallest number of series terms summed before the tail test applies.
pub const SERIES_MIN_TERMS: usize = 200;
const SERIES_MAX_TERMS: usize = 20_000;

/// `(r, R^(2..=m_max)(r))` with per-entry diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRow {
    pub r: f64,
    pub values: Vec<f64>,
    /// Change of each extrapolated entry when the fit window moves down one rung.
    pub residuals: Vec<f64>,
    pub converged_n: u64,
    /// Every residual is within `cross_tol * max(1, |value|)`.
    pub converged: bool,
}

impl LimitRow {
    /// `R^(m)(r)`.
    pub fn get(&self, m: u32) -> f64 {
        self.values[m as usize - 2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitTable {
    pub b: u32,
    pub m_max: u32,
    pub rows: Vec<LimitRow>,
}

impl LimitTable {
    /// Rows for every `r` in `rs`, computed concurrently. Rows that fail
    /// (overflow, domain) are returned separately with their error.
    pub fn compute(
        b: u32,
        m_max: u32,
        model: &DisorderModel,
        rs: &[f64],
        policy: &PrecisionPolicy,
    ) -> (Self, Vec<(f64, Error)>) {
        let results: Vec<(f64, Result<LimitRow>)> =
            rs.par_iter().map(|&r| (r, limit_moments_row(b, m_max, model, r, policy))).collect();
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (r, res) in results {
            match res {
                Ok(row) => rows.push(row),
                Err(e) => failures.push((r, e)),
            }
        }
        (Self { b, m_max, rows }, failures)
    }

    pub fn row(&self, r: f64) -> Option<&LimitRow> {
        self.rows.iter().find(|row| row.r == r)
    }

    /// Entries are positive and strictly increasing in `r` between rows.
    pub fn is_positive_increasing(&self) -> bool {
        let mut rows: Vec<&LimitRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.r.total_cmp(&b.r));
        rows.iter().all(|row| row.values.iter().all(|&v| v > 0.0))
            && rows.windows(2).all(|w| w[0].values.iter().zip(&w[1].values).all(|(a, b)| a < b))
    }
}

/// Moment vector after `n` generations started from the schedule at `n`.
/// `rho^(2)` starts at `X^{(n,r)}` exactly, which is what the
/// variance-matched schedule realizes.
fn ladder_point<T: Real>(sys: &MomentSystem<T>, schedule: &BetaSchedule, n: u64) -> Result<Vec<T>> {
    let beta = beta_schedule(schedule, n)?;
    let b = schedule.b;
    let nt = T::from_f64(n as f64);
    let eta = eta_real::<T>(b);
    let x = kappa_sq_real::<T>(b) * (T::one() / nt + (eta * T::from_f64((n as f64).ln()) + T::from_f64(schedule.r)) / (nt * nt));
    let mut init = vec![x];
    for m in 3..=sys.m_max() {
        init.push(T::from_f64(initial_moment(&schedule.model, beta, m)?));
    }
    sys.iterate(&init, n)
}

fn ladder_row<T: Real + Send + Sync>(
    b: u32,
    m_max: u32,
    model: &DisorderModel,
    r: f64,
    k_max: u32,
    candidates: &[&[u32]],
) -> Result<LimitRow> {
    let sys = MomentSystem::<T>::new(b, m_max)?;
    let schedule = BetaSchedule::new(b, *model, r)?.with_form(ScheduleForm::VarianceMatched);
    let basis = choose_basis(k_max, r, candidates)
        .ok_or_else(|| Error::InvalidParams(format!("ladder to 2^{k_max} too short for r = {r}")))?;
    let k = basis.unknowns();
    let ns = ladder_grid(k_max, 1, k + 1);
    let vals: Vec<Vec<T>> = ns.par_iter().map(|&n| ladder_point(&sys, &schedule, n)).collect::<Result<_>>()?;
    // Same transform as the variance ladder: pull back until rho^(2) is
    // small, fit each component, push the fitted vector forward.
    let map = MapPoly::<T>::new(BranchingParams::critical(b)?);
    let j = backward_depth(&map, vals.last().expect("nonempty ladder")[0], kappa_sq_real::<f64>(b));
    let pulled: Vec<Vec<T>> = vals
        .iter()
        .map(|v| (0..j).fold(v.clone(), |z, _| sys.inverse_step(&z)))
        .collect();
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let singular = || Error::NotConverged {
        what: "moment ladder extrapolation (singular fit)".into(),
        achieved: f64::NAN,
    };
    let comps = (m_max - 1) as usize;
    let mut head = Vec::with_capacity(comps);
    let mut prev = Vec::with_capacity(comps);
    for c in 0..comps {
        let col: Vec<T> = pulled.iter().map(|v| v[c]).collect();
        head.push(fit_limit(&nf[1..], &col[1..], &basis).ok_or_else(singular)?);
        prev.push(fit_limit(&nf[..k], &col[..k], &basis).ok_or_else(singular)?);
    }
    let push = |v: Vec<T>| sys.iterate(&v, j as u64);
    let head = push(head)?;
    let prev = push(prev)?;
    let values: Vec<f64> = head.iter().map(|v| v.to_f64()).collect();
    let residuals: Vec<f64> = head.iter().zip(&prev).map(|(a, b)| (*a - *b).abs().to_f64()).collect();
    Ok(LimitRow { r, values, residuals, converged_n: 1u64 << k_max, converged: false })
}

/// The row without the convergence gate.
pub fn limit_moments_row(
    b: u32,
    m_max: u32,
    model: &DisorderModel,
    r: f64,
    policy: &PrecisionPolicy,
) -> Result<LimitRow> {
    policy.validate()?;
    if m_max < 2 {
        return Err(Error::InvalidParams(format!("m_max must be >= 2, got {m_max}")));
    }
    let k_max = policy.ladder_max_exponent;
    let mut row = match policy.float_kind {
        FloatKind::Binary64 => ladder_row::<f64>(b, m_max, model, r, k_max, BINARY64_BASES)?,
        FloatKind::Extended { .. } => ladder_row::<DD>(b, m_max, model, r, k_max, EXTENDED_BASES)?,
    };
    row.converged = row
        .values
        .iter()
        .zip(&row.residuals)
        .all(|(v, e)| *e <= policy.cross_tol * v.abs().max(1.0));
    Ok(row)
}

/// `R^(2..=m_max)(r)`: for each ladder size `n = 2^k`, start the moment
/// recursion from the disorder law at the variance-matched schedule,
/// iterate `n` generations and extrapolate each component.
pub fn limit_moments(
    b: u32,
    m_max: u32,
    model: &DisorderModel,
    r: f64,
    policy: &PrecisionPolicy,
) -> Result<LimitRow> {
    let row = limit_moments_row(b, m_max, model, r, policy)?;
    if !row.converged {
        let worst = row.residuals.iter().cloned().fold(0.0, f64::max);
        return Err(Error::NotConverged { what: format!("limit_moments at r = {r}"), achieved: worst });
    }
    Ok(row)
}

/// Backward orbit `R^(2..=m)(r - k)`, `k = 0..len`, generated from
/// `R^(2)(r)` alone.
///
/// `R^(2)(r-k) = M_b^{-k}(R^(2)(r))`. For `j >= 3`, `R^(j)(r-k)` is the
/// shifted series `sum_i V_j prod (1/b^{j-2} + U_j)` summed from the far end
/// of the orbit, i.e. `R^(j)(r-k) = P_j(R(r-k-1))` started from zero at
/// `k = len`. Each factor is at most about `1/b`, so the start is forgotten
/// geometrically.
fn orbit(b: u32, m: u32, base: f64, len: usize) -> Result<Vec<Vec<f64>>> {
    let map = MapPoly::<f64>::new(BranchingParams::critical(b)?);
    let polys: Vec<CompiledPoly<f64>> = (3..=m)
        .map(|j| build_pm(b, j).map(|p| CompiledPoly::new(&p.extend(m as usize))))
        .collect::<Result<_>>()?;
    let mut pts = vec![vec![0.0; m as usize - 1]; len + 1];
    let mut x = base;
    for pt in pts.iter_mut() {
        pt[0] = x;
        x = map.inverse(x);
    }
    for k in (0..len).rev() {
        let next = pts[k + 1].clone();
        for (i, p) in polys.iter().enumerate() {
            pts[k][i + 1] = p.eval(&next);
        }
    }
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Ratio of the last two increments.
    pub last_ratio: f64,
    /// Geometric bound on the omitted tail.
    pub tail_bound: f64,
}

fn table_base(table: &LimitTable, r: f64) -> Result<f64> {
    table
        .row(r)
        .map(|row| row.get(2))
        .ok_or_else(|| Error::InvalidParams(format!("limit table has no row at r = {r}")))
}

/// `R^(m)(r) = sum_{k>=1} V_m(R(r-k)) prod_{j=1}^{k-1} (1/b^{m-2} + U_m(R(r-j)))`
/// for `m >= 3`, using only `R^(2)(r)` from `table`; the shifted values are
/// filled recursively along the backward orbit.
pub fn limit_moments_series(
    b: u32,
    m: u32,
    r: f64,
    table: &LimitTable,
    policy: &PrecisionPolicy,
) -> Result<SeriesValue> {
    if m < 3 {
        return Err(Error::InvalidParams(format!("the shifted series needs m >= 3, got {m}")));
    }
    let base = table_base(table, r)?;
    let pm = build_pm(b, m)?;
    let (u, v) = split_uv(&pm, b, m)?;
    let u = CompiledPoly::<f64>::new(&u);
    let v = CompiledPoly::<f64>::new(&v);
    let lin = (b as f64).powi(m as i32 - 2).recip();
    let mut len = 4 * SERIES_MIN_TERMS;
    loop {
        let pts = orbit(b, m, base, len)?;
        let avail = len - SERIES_MIN_TERMS;
        let mut sum = 0.0;
        let mut prod = 1.0;
        let mut last = f64::NAN;
        let mut ratio = f64::NAN;
        let mut factor;
        for k in 1..=avail {
            let term = v.eval(&pts[k]) * prod;
            if k > 1 && last != 0.0 {
                ratio = term / last;
            }
            sum += term;
            last = term;
            factor = lin + u.eval(&pts[k]);
            prod *= factor;
            if prod > 1.0 {
                return Err(Error::SeriesDiverged { term: k, factor: prod });
            }
            if k >= SERIES_MIN_TERMS && term.abs() < policy.series_tail_tol * sum.abs() {
                return Ok(SeriesValue {
                    value: sum,
                    terms: k,
                    last_ratio: ratio,
                    tail_bound: term.abs() * factor / (1.0 - factor),
                });
            }
        }
        if len >= SERIES_MAX_TERMS {
            return Err(Error::NotConverged { what: format!("series for R^({m}) at r = {r}"), achieved: last.abs() });
        }
        len *= 2;
    }
}

/// `(R^(2)'(r), ..., R^(m_max)'(r))`.
///
/// `R^(2)' = kappa^2 D_b(R^(2)(r))` and, with `A = (dP_i/dy_j)_{3<=i,j<=m}` and
/// `g = (dP_i/dy_2)_{3<=i<=m}`,
/// `(R^(3..m))'(r) = sum_{k>=1} A(r-1) ... A(r-k+1) g(r-k) R^(2)'(r-k)`.
pub fn moment_derivatives(
    b: u32,
    m_max: u32,
    r: f64,
    table: &LimitTable,
    policy: &PrecisionPolicy,
) -> Result<Vec<f64>> {
    let params = BranchingParams::critical(b)?;
    let base = table_base(table, r)?;
    let k2 = kappa_sq_real::<f64>(b);
    let d0 = k2 * d_product(params, base)?.0;
    if m_max == 2 {
        return Ok(vec![d0]);
    }
    let mv = m_max as usize;
    let dim = mv - 2;
    let polys: Vec<_> = (3..=m_max).map(|i| build_pm(b, i).map(|p| p.extend(mv))).collect::<Result<_>>()?;
    // partials[i][j] = dP_{i+3}/dy_{j+2}.
    let partials: Vec<Vec<CompiledPoly<f64>>> = polys
        .iter()
        .map(|p| (2..=mv).map(|j| CompiledPoly::new(&p.partial(j))).collect())
        .collect();
    let map = MapPoly::<f64>::new(params);
    let mut len = 4 * SERIES_MIN_TERMS;
    loop {
        let pts = orbit(b, m_max, base, len)?;
        let avail = len - SERIES_MIN_TERMS;
        let mut sum = vec![0.0; dim];
        // q = A(r-1) ... A(r-k+1), row-major.
        let mut q: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut d = d0;
        for k in 1..=avail {
            let pt = &pts[k];
            // R^(2)'(r-k) = R^(2)'(r-k+1)/M_b'(R^(2)(r-k)).
            d /= map.derivative(pt[0]);
            let g: Vec<f64> = partials.iter().map(|row| row[0].eval(pt) * d).collect();
            let term: Vec<f64> = q.iter().map(|qi| qi.iter().zip(&g).map(|(a, b)| a * b).sum()).collect();
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
            let a: Vec<Vec<f64>> =
                partials.iter().map(|row| row[1..].iter().map(|p| p.eval(pt)).collect()).collect();
            q = (0..dim)
                .map(|i| (0..dim).map(|j| (0..dim).map(|l| q[i][l] * a[l][j]).sum()).collect())
                .collect();
            let small = term.iter().zip(&sum).all(|(t, s)| t.abs() < policy.series_tail_tol * s.abs());
            if k >= SERIES_MIN_TERMS && small {
                let mut out = vec![d0];
                out.extend(sum);
                return Ok(out);
            }
        }
        if len >= SERIES_MAX_TERMS {
            return Err(Error::NotConverged { what: format!("derivative series at r = {r}"), achieved: f64::NAN });
        }
        len *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::r_limit;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    #[test]
    fn variance_component_matches_r_limit() {
        let g = DisorderModel::StandardGaussian;
        for (b, r) in [(2u32, -10.0), (3, -2.0), (2, 0.5)] {
            let row = limit_moments(b, 3, &g, r, &policy()).unwrap();
            let want = r_limit(BranchingParams::critical(b).unwrap(), r, &policy()).unwrap().value;
            assert!((row.get(2) - want).abs() <= 1e-10 * want.max(1.0), "b={b} r={r}: {} vs {want}", row.get(2));
        }
    }

    #[test]
    fn shift_equation_holds() {
        let g = DisorderModel::StandardGaussian;
        let b = 2;
        let rows: Vec<LimitRow> = [-3.0, -2.0].iter().map(|&r| limit_moments(b, 4, &g, r, &policy()).unwrap()).collect();
        let sys = MomentSystem::<f64>::new(b, 4).unwrap();
        let pushed = sys.step(&rows[0].values);
        for (a, c) in pushed.iter().zip(&rows[1].values) {
            assert!((a - c).abs() <= 1e-8 * c.abs(), "{a} vs {c}");
        }
    }

    #[test]
    fn series_agrees_with_ladder() {
        let g = DisorderModel::StandardGaussian;
        let (table, fails) = LimitTable::compute(2, 4, &g, &[-10.0], &policy());
        assert!(fails.is_empty());
        let row = &table.rows[0];
        for m in 3..=4 {
            let s = limit_moments_series(2, m, -10.0, &table, &policy()).unwrap();
            assert!((s.value / row.get(m) - 1.0).abs() < 1e-8, "m={m}: {s:?} vs {}", row.get(m));
            // Increments shrink like 1/b^{m-2}.
            assert!((s.last_ratio * 2f64.powi(m as i32 - 2) - 1.0).abs() < 0.1, "{s:?}");
        }
    }

    #[test]
    fn model_independent() {
        let g = limit_moments(2, 4, &DisorderModel::StandardGaussian, -5.0, &policy()).unwrap();
        let rad = limit_moments(2, 4, &DisorderModel::Rademacher, -5.0, &policy()).unwrap();
        for i in 0..3 {
            let slack = 2.0 * (g.residuals[i] + rad.residuals[i]) + 1e-12 * g.values[i];
            assert!((g.values[i] - rad.values[i]).abs() <= slack, "{g:?} vs {rad:?}");
        }
    }

    #[test]
    fn table_is_positive_increasing() {
        let (table, fails) = LimitTable::compute(2, 4, &DisorderModel::StandardGaussian, &[-20.0, -8.0, -4.0, -1.0], &policy());
        assert!(fails.is_empty());
        assert!(table.is_positive_increasing(), "{table:?}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = DisorderModel::StandardGaussian;
        let (b, r, h) = (2u32, -15.0, 1e-3);
        let (table, _) = LimitTable::compute(b, 3, &g, &[r], &policy());
        let d = moment_derivatives(b, 3, r, &table, &policy()).unwrap();
        let up = limit_moments(b, 3, &g, r + h, &policy()).unwrap();
        let dn = limit_moments(b, 3, &g, r - h, &policy()).unwrap();
        for (i, di) in d.iter().enumerate() {
            let fd = (up.values[i] - dn.values[i]) / (2.0 * h);
            assert!(*di > 0.0);
            assert!((di / fd - 1.0).abs() < 1e-3, "component {i}: {di} vs {fd}");
        }
        let want = crate::maps::r_limit_derivative(BranchingParams::critical(b).unwrap(), r, &policy()).unwrap();
        assert!((d[0] - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn series_for_b3() {
        let g = DisorderModel::StandardGaussian;
        let (table, _) = LimitTable::compute(3, 4, &g, &[-20.0], &policy());
        let s = limit_moments_series(3, 4, -20.0, &table, &policy()).unwrap();
        assert!((s.value / table.rows[0].get(4) - 1.0).abs() < 1e-4, "{s:?}");
    }

    #[test]
    fn series_rejects_low_order() {
        let (table, _) = LimitTable::compute(2, 2, &DisorderModel::StandardGaussian, &[-10.0], &policy());
        assert!(limit_moments_series(2, 2, -10.0, &table, &policy()).is_err());
    }
}

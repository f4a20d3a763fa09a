//! Large-`|r|` behaviour of the limit moments, uniform moment ratios along
//! finite-`n` trajectories, and the variance dichotomy around `t = kappa_b`.

use super::iterate::MomentSystem;
use super::limits::LimitTable;
use crate::disorder::{beta_schedule, initial_moment, BetaSchedule, DisorderModel, ScheduleForm};
use crate::maps::{critical_constants, kappa_sq_real, BranchingParams, MapPoly, PrecisionPolicy};
use crate::{Error, Result};
use serde::Serialize;

/// `kappa_b^m m!/(2^{m/2} (m/2)!)`: `kappa_b^m` times the `m`-th Gaussian
/// moment.
pub fn gaussian_constant(b: u32, m: u32) -> Result<f64> {
    if m % 2 != 0 || m == 0 {
        return Err(Error::InvalidParams(format!("gaussian constant needs even m >= 2, got {m}")));
    }
    BranchingParams::critical(b)?;
    let kappa_sq = kappa_sq_real::<f64>(b);
    // (m-1)!! = m!/(2^{m/2} (m/2)!)
    let double_factorial: f64 = (1..m).step_by(2).map(f64::from).product();
    Ok(kappa_sq.powi(m as i32 / 2) * double_factorial)
}

/// True when `seq` shows no growth: its relative spread is within 1%, it
/// never increases, or its last increment is at most half its first.
pub fn no_growth_trend(seq: &[f64]) -> bool {
    if seq.len() < 2 {
        return true;
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let max = seq.iter().cloned().fold(f64::MIN, f64::max);
    let min = seq.iter().cloned().fold(f64::MAX, f64::min);
    let scale = seq.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max - min <= 0.01 * scale {
        return true;
    }
    if seq.windows(2).all(|w| w[1] <= w[0]) {
        return true;
    }
    let first = seq[1] - seq[0];
    let last = seq[seq.len() - 1] - seq[seq.len() - 2];
    last.abs() <= 0.5 * first.abs()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub r: f64,
    pub value: f64,
    /// `|r|^p R^(m)(r)` with `p = ceil(m/2)`.
    pub scaled: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentScan {
    pub m: u32,
    pub power: u32,
    /// Predicted limit of `scaled` for even `m`.
    pub constant: Option<f64>,
    /// Points ordered by increasing `|r|`.
    pub points: Vec<ScanPoint>,
    /// `scaled/constant - 1` at the largest `|r|` (even `m`).
    pub relative_error: Option<f64>,
    /// [`no_growth_trend`] of the scaled sequence.
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub b: u32,
    pub m_max: u32,
    pub scans: Vec<MomentScan>,
    /// Ladder points whose limit row could not be computed.
    pub failures: Vec<(f64, String)>,
}

impl AsymptoticsReport {
    pub fn scan(&self, m: u32) -> Option<&MomentScan> {
        self.scans.iter().find(|s| s.m == m)
    }
}

/// Scaled limit moments `|r|^{ceil(m/2)} R^(m)(r)` along `r_ladder`.
pub fn asymptotics_scan(
    b: u32,
    m_max: u32,
    r_ladder: &[f64],
    model: &DisorderModel,
    policy: &PrecisionPolicy,
) -> Result<AsymptoticsReport> {
    if let Some(r) = r_ladder.iter().find(|&&r| !(r <= -5.0)) {
        return Err(Error::InvalidParams(format!("asymptotic scan needs r <= -5, got {r}")));
    }
    let (mut table, failures) = LimitTable::compute(b, m_max, model, r_ladder, policy);
    table.rows.sort_by(|a, c| c.r.total_cmp(&a.r));
    let scans = (2..=m_max)
        .map(|m| {
            let power = m.div_ceil(2);
            let points: Vec<ScanPoint> = table
                .rows
                .iter()
                .map(|row| {
                    let value = row.get(m);
                    ScanPoint {
                        r: row.r,
                        value,
                        scaled: row.r.abs().powi(power as i32) * value,
                        residual: row.residuals[m as usize - 2],
                    }
                })
                .collect();
            let constant = gaussian_constant(b, m).ok();
            let relative_error = constant.zip(points.last()).map(|(c, p)| p.scaled / c - 1.0);
            let scaled: Vec<f64> = points.iter().map(|p| p.scaled).collect();
            MomentScan { m, power, constant, bounded: no_growth_trend(&scaled), points, relative_error }
        })
        .collect();
    Ok(AsymptoticsReport {
        b,
        m_max,
        scans,
        failures: failures.into_iter().map(|(r, e)| (r, e.to_string())).collect(),
    })
}

/// `max_{1<=k<=n} |rho_k^(m)|/(rho_k^(2))^{m/2}` along the trajectory started
/// from the variance-matched schedule at `(n, r)`.
pub fn moment_bound_ratio(b: u32, m: u32, model: &DisorderModel, r: f64, n: u64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParams(format!("moment order must be >= 2, got {m}")));
    }
    let schedule = BetaSchedule::new(b, *model, r)?.with_form(ScheduleForm::VarianceMatched);
    let beta = beta_schedule(&schedule, n)?;
    let init: Vec<f64> = (2..=m).map(|j| initial_moment(model, beta, j)).collect::<Result<_>>()?;
    let sys = MomentSystem::<f64>::new(b, m)?;
    let half = m as f64 / 2.0;
    let mut worst = 0.0f64;
    sys.iterate_with(&init, n, |_, y| {
        worst = worst.max(y[m as usize - 2].abs() / y[0].powf(half));
    })?;
    Ok(worst)
}

/// Iterates above this are classified as diverging.
pub const DIVERGENCE_LEVEL: f64 = 1e3;
/// Iterates below this are classified as vanishing.
pub const VANISHING_LEVEL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Vanishing,
    Diverging,
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomyEntry {
    pub t: f64,
    /// `(n, M_b^n(t^2/n))`, with `inf` once the divergence level is passed.
    pub trajectory: Vec<(u64, f64)>,
    /// Classification at the largest `n`.
    pub regime: Regime,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub b: u32,
    pub kappa: f64,
    pub entries: Vec<DichotomyEntry>,
}

fn classify(v: f64) -> Regime {
    if !(v <= DIVERGENCE_LEVEL) {
        Regime::Diverging
    } else if v < VANISHING_LEVEL {
        Regime::Vanishing
    } else {
        Regime::Marginal
    }
}

/// `M_b^n(t^2/n)` for each `t` and `n`; the largest `n` decides the regime.
pub fn dichotomy_scan(b: u32, t_values: &[f64], n_ladder: &[u64]) -> Result<DichotomyReport> {
    let params = BranchingParams::critical(b)?;
    let n_top = *n_ladder.iter().max().ok_or_else(|| Error::InvalidParams("empty n ladder".into()))?;
    let map = MapPoly::<f64>::new(params);
    let entries = t_values
        .iter()
        .map(|&t| {
            let trajectory: Vec<(u64, f64)> = n_ladder
                .iter()
                .map(|&n| {
                    let mut x = t * t / n as f64;
                    for _ in 0..n {
                        x = map.eval(x);
                        if !(x <= DIVERGENCE_LEVEL) {
                            return (n, f64::INFINITY);
                        }
                    }
                    (n, x)
                })
                .collect();
            let last = trajectory.iter().find(|(n, _)| *n == n_top).map_or(f64::NAN, |p| p.1);
            DichotomyEntry { t, regime: classify(last), trajectory }
        })
        .collect();
    Ok(DichotomyReport { b, kappa: critical_constants(params).kappa, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_constants() {
        assert!((gaussian_constant(2, 2).unwrap() - 2.0).abs() < 1e-14);
        assert!((gaussian_constant(2, 4).unwrap() - 12.0).abs() < 1e-13);
        assert!((gaussian_constant(3, 6).unwrap() - 15.0).abs() < 1e-13);
        assert!((gaussian_constant(3, 4).unwrap() - 3.0).abs() < 1e-14);
        assert!(gaussian_constant(2, 3).is_err());
    }

    #[test]
    fn growth_trend_helper() {
        assert!(no_growth_trend(&[1.0, 1.005, 1.002]));
        assert!(no_growth_trend(&[3.0, 2.0, 1.5]));
        assert!(no_growth_trend(&[1.0, 2.0, 2.4, 2.5]));
        assert!(!no_growth_trend(&[1.0, 2.0, 3.0, 4.0]));
        assert!(!no_growth_trend(&[1.0, 1.5, 2.5, 4.5]));
        assert!(!no_growth_trend(&[1.0, f64::INFINITY]));
    }

    #[test]
    fn ratio_for_variance_is_one() {
        let v = moment_bound_ratio(2, 2, &DisorderModel::StandardGaussian, -10.0, 256).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_is_bounded_along_the_ladder() {
        for m in [3u32, 4] {
            let seq: Vec<f64> = (8..=14)
                .map(|k| moment_bound_ratio(2, m, &DisorderModel::StandardGaussian, -10.0, 1 << k).unwrap())
                .collect();
            assert!(no_growth_trend(&seq), "m={m}: {seq:?}");
        }
    }

    #[test]
    fn dichotomy_classes() {
        for b in [2u32, 3] {
            let kappa = critical_constants(BranchingParams::critical(b).unwrap()).kappa;
            let rep = dichotomy_scan(b, &[0.9 * kappa, kappa, 1.1 * kappa], &[1 << 12, 1 << 16]).unwrap();
            let regimes: Vec<Regime> = rep.entries.iter().map(|e| e.regime).collect();
            assert_eq!(regimes, [Regime::Vanishing, Regime::Marginal, Regime::Diverging], "b={b}");
        }
    }

    #[test]
    fn scan_rejects_positive_side() {
        let err = asymptotics_scan(2, 4, &[-10.0, -2.0], &DisorderModel::StandardGaussian, &PrecisionPolicy::default());
        assert!(err.is_err());
    }

    #[test]
    fn even_moments_approach_gaussian_constant() {
        let rep = asymptotics_scan(2, 4, &[-25.0, -50.0, -100.0], &DisorderModel::StandardGaussian, &PrecisionPolicy::default())
            .unwrap();
        assert!(rep.failures.is_empty(), "{:?}", rep.failures);
        let s4 = rep.scan(4).unwrap();
        let errs: Vec<f64> = s4.points.iter().map(|p| (p.scaled / 12.0 - 1.0).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(rep.scan(3).unwrap().bounded);
        let s2 = rep.scan(2).unwrap();
        assert!(s2.relative_error.unwrap().abs() < 0.1);
    }
}

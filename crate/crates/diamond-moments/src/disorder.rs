//! Bond-disorder laws, moments of the normalized bond weight
//! `e^{beta w}/E[e^{beta w}]`, and the critical inverse-temperature schedule.
//!
//! Every law is standardized (mean 0, variance 1) and has an entire
//! moment-generating function. Arguments are capped at [`BETA_MAX`] only to
//! keep `exp` finite.

use crate::maps::root::illinois;
use crate::maps::{critical_constants, BranchingParams};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest `|beta|` accepted by [`log_mgf`] for every model.
pub const BETA_MAX: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderModel {
    StandardGaussian,
    /// `+-1` with probability 1/2 each.
    Rademacher,
    /// `(X - p)/sqrt(p(1-p))` with `X ~ Bernoulli(p)`.
    StandardizedBernoulli { p: f64 },
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    StandardizedUniform,
}

impl DisorderModel {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let m = Self::StandardizedBernoulli { p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::StandardizedBernoulli { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidParams(format!("bernoulli p must lie in (0, 1), got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn beta_max(&self) -> f64 {
        BETA_MAX
    }

    /// Finite support as `(atom, probability)` pairs, if any.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            Self::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Self::StandardizedBernoulli { p } => {
                let sd = (p * (1.0 - p)).sqrt();
                Some(vec![(-p / sd, 1.0 - p), ((1.0 - p) / sd, p)])
            }
            _ => None,
        }
    }

    /// One draw of the standardized variable.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::StandardGaussian => rng.sample(StandardNormal),
            Self::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StandardizedBernoulli { p } => {
                let sd = (p * (1.0 - p)).sqrt();
                if rng.gen::<f64>() < p {
                    (1.0 - p) / sd
                } else {
                    -p / sd
                }
            }
            Self::StandardizedUniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
        }
    }

    /// Excess kurtosis `E[w^4] - 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        match *self {
            Self::StandardGaussian => 0.0,
            Self::Rademacher => -2.0,
            Self::StandardizedBernoulli { p } => {
                let pq = p * (1.0 - p);
                (1.0 - 6.0 * pq) / pq
            }
            Self::StandardizedUniform => -1.2,
        }
    }
}

impl fmt::Display for DisorderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StandardGaussian => write!(f, "gaussian"),
            Self::Rademacher => write!(f, "rademacher"),
            Self::StandardizedBernoulli { p } => write!(f, "bernoulli:{p}"),
            Self::StandardizedUniform => write!(f, "uniform"),
        }
    }
}

/// Accepts `gaussian`, `rademacher`, `bernoulli:<p>` and `uniform`.
impl FromStr for DisorderModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "standard_gaussian" | "normal" => Ok(Self::StandardGaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform" | "standardized_uniform" => Ok(Self::StandardizedUniform),
            _ => {
                let p = s
                    .strip_prefix("bernoulli:")
                    .or_else(|| s.strip_prefix("standardized_bernoulli:"))
                    .ok_or_else(|| Error::Config(format!("unknown disorder model '{s}'")))?;
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad bernoulli parameter '{p}'")))?;
                Self::bernoulli(p).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

fn check_beta(model: &DisorderModel, beta: f64, what: &str) -> Result<()> {
    model.validate()?;
    if !(beta.abs() <= model.beta_max()) {
        return Err(Error::Domain(format!(
            "{what}: |beta| = {} exceeds beta_max = {}",
            beta.abs(),
            model.beta_max()
        )));
    }
    Ok(())
}

/// `ln(sinh t / t)`; Taylor coefficients `2^{2k} B_{2k}/(2k (2k)!)`.
fn log_sinhc(t: f64) -> f64 {
    const C: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 180.0,
        1.0 / 2835.0,
        -1.0 / 37800.0,
        1.0 / 467775.0,
        -691.0 / 3831077250.0,
    ];
    let t2 = t * t;
    if t.abs() < 0.1 {
        t2 * C.iter().rev().fold(0.0, |acc, &c| acc * t2 + c)
    } else {
        (t.sinh() / t).ln()
    }
}

/// `Lambda(beta) = ln E[e^{beta w}]`.
pub fn log_mgf(model: &DisorderModel, beta: f64) -> Result<f64> {
    check_beta(model, beta, "log_mgf")?;
    Ok(log_mgf_unchecked(model, beta))
}

fn log_mgf_unchecked(model: &DisorderModel, beta: f64) -> f64 {
    match *model {
        DisorderModel::StandardGaussian => 0.5 * beta * beta,
        DisorderModel::Rademacher => {
            let a = beta.abs();
            if a < 1.0 {
                0.5 * a.sinh().powi(2).ln_1p()
            } else {
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
        }
        DisorderModel::StandardizedBernoulli { p } => {
            let q = 1.0 - p;
            let sd = (p * q).sqrt();
            let t = beta / sd;
            // ln(q e^{-p t} + p e^{q t}), factored about the larger exponent.
            if t >= 0.0 {
                if t < 30.0 {
                    -p * t + (p * t.exp_m1()).ln_1p()
                } else {
                    q * t + p.ln() + (q / p * (-t).exp()).ln_1p()
                }
            } else if t > -30.0 {
                q * t + (q * (-t).exp_m1()).ln_1p()
            } else {
                -p * t + q.ln() + (p / q * t.exp()).ln_1p()
            }
        }
        DisorderModel::StandardizedUniform => log_sinhc(3f64.sqrt() * beta),
    }
}

/// Skew `tau = E[w^3]`, exact per law.
pub fn skew(model: &DisorderModel) -> f64 {
    match *model {
        DisorderModel::StandardizedBernoulli { p } => (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt(),
        _ => 0.0,
    }
}

/// `Var(e^{beta w}/E[e^{beta w}]) = exp(Lambda(2 beta) - 2 Lambda(beta)) - 1`.
pub fn tilted_variance(model: &DisorderModel, beta: f64) -> Result<f64> {
    check_beta(model, 2.0 * beta, "tilted_variance")?;
    Ok(tilted_gap(model, beta, 2).exp_m1())
}

/// `Lambda(k beta) - k Lambda(beta)`.
fn tilted_gap(model: &DisorderModel, beta: f64, k: u32) -> f64 {
    log_mgf_unchecked(model, k as f64 * beta) - k as f64 * log_mgf_unchecked(model, beta)
}

/// `E[(e^{beta w}/E[e^{beta w}] - 1)^m]` by binomial expansion over
/// `exp(Lambda(k beta) - k Lambda(beta)) - 1`. The absolute rounding error is
/// about `2^m eps max_k |Lambda(k beta) - k Lambda(beta)|`.
pub fn initial_moment(model: &DisorderModel, beta: f64, m: u32) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParams(format!("moment order must be >= 2, got {m}")));
    }
    check_beta(model, m as f64 * beta, "initial_moment")?;
    let mut binom = 1.0;
    let mut acc = 0.0;
    // Terms k = 0, 1 vanish because exp(0) - 1 = 0.
    for k in 0..=m {
        if k >= 2 {
            let sign = if (m - k) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * tilted_gap(model, beta, k).exp_m1();
        }
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    Ok(acc)
}

/// How the schedule realizes the target tilted variance
/// `X^{(n,r)} = kappa^2 (1/n + eta log n/n^2 + r/n^2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleForm {
    /// `kappa/sqrt n - tau kappa^2/(2n) + kappa (eta log n + r)/n^{3/2}`, taken
    /// literally. Its tilted variance carries `2 eta log n/n^2`, not `eta log n/n^2`.
    FourTerm,
    /// Expansion of `V(beta) = X^{(n,r)}` to order `n^{-3/2}`:
    /// `kappa/sqrt n - tau kappa^2/(2n) + [kappa (eta log n + r)/2
    /// - kappa^3 (1/2 + 7 k4/12 - 5 tau^2/4)/2]/n^{3/2}` with `k4` the excess
    /// kurtosis. Then `V - X = O(log^2 n/n^{5/2})`.
    #[default]
    Expanded,
    /// Root of `V(beta) = X^{(n,r)}`, so the slack term vanishes exactly.
    VarianceMatched,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub b: u32,
    pub tau: f64,
    pub r: f64,
    pub model: DisorderModel,
    pub form: ScheduleForm,
}

impl BetaSchedule {
    /// Schedule for `model` with its exact skew and the default form.
    pub fn new(b: u32, model: DisorderModel, r: f64) -> Result<Self> {
        BranchingParams::critical(b)?;
        model.validate()?;
        Ok(Self {
            b,
            tau: skew(&model),
            r,
            model,
            form: ScheduleForm::default(),
        })
    }

    pub fn with_form(mut self, form: ScheduleForm) -> Self {
        self.form = form;
        self
    }

    /// Overrides the skew term (the model's law is unchanged).
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// `X^{(n,r)}` with the `o(1/n^2)` term set to zero.
    pub fn target_variance(&self, n: u64) -> f64 {
        let c = critical_constants(BranchingParams { b: self.b, s: self.b });
        let nf = n as f64;
        c.kappa_sq() * (1.0 / nf + (c.eta * nf.ln() + self.r) / (nf * nf))
    }
}

/// `beta_{n,r}` for the schedule's form.
pub fn beta_schedule(schedule: &BetaSchedule, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("schedule needs n >= 2, got {n}")));
    }
    let c = critical_constants(BranchingParams { b: schedule.b, s: schedule.b });
    let (k, eta, tau) = (c.kappa, c.eta, schedule.tau);
    let nf = n as f64;
    let log_n = nf.ln();
    let head = k / nf.sqrt() - tau * k * k / (2.0 * nf);
    let beta = match schedule.form {
        ScheduleForm::FourTerm => head + k * (eta * log_n + schedule.r) / nf.powf(1.5),
        ScheduleForm::Expanded => {
            let k4 = schedule.model.excess_kurtosis();
            let quartic = 0.5 + 7.0 * k4 / 12.0 - 1.25 * tau * tau;
            head + (0.5 * k * (eta * log_n + schedule.r) - 0.5 * k.powi(3) * quartic) / nf.powf(1.5)
        }
        ScheduleForm::VarianceMatched => variance_matched(schedule, n)?,
    };
    let cap = 0.5 * schedule.model.beta_max();
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("schedule gives beta = {beta} <= 0 at n = {n}, r = {}", schedule.r)));
    }
    if beta > cap {
        return Err(Error::Domain(format!("schedule gives beta = {beta} > {cap} at n = {n}")));
    }
    Ok(beta)
}

fn variance_matched(schedule: &BetaSchedule, n: u64) -> Result<f64> {
    let target = schedule.target_variance(n);
    if !(target > 0.0) {
        return Err(Error::Domain(format!(
            "target variance {target} <= 0 at n = {n}, r = {}",
            schedule.r
        )));
    }
    let model = schedule.model;
    let cap = 0.5 * model.beta_max();
    // V(beta) is increasing in beta > 0; bracket upward from sqrt(target).
    let mut hi = target.sqrt().min(cap);
    while tilted_gap(&model, hi, 2).exp_m1() < target {
        if hi >= cap {
            return Err(Error::Domain(format!("target variance {target} unreachable below beta = {cap}")));
        }
        hi = (2.0 * hi).min(cap);
    }
    // Solve in log-variance to keep relative accuracy at tiny beta.
    let ln_target = target.ln();
    illinois(
        |b| if b <= 0.0 { -f64::INFINITY } else { tilted_gap(&model, b, 2).exp_m1().ln() - ln_target },
        0.0,
        hi,
        4.0 * f64::EPSILON,
        0.0,
        400,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VFormDiagnostic {
    pub n: u64,
    pub beta: f64,
    pub variance: f64,
    pub target: f64,
    /// `n^2 (V - X)`.
    pub scaled_n2: f64,
    /// `n^{3/2} (V - X)`.
    pub scaled_n32: f64,
}

/// Gap between the tilted variance at `beta_schedule(n)` and `X^{(n,r)}`.
pub fn v_form_check(model: &DisorderModel, schedule: &BetaSchedule, n: u64) -> Result<VFormDiagnostic> {
    let beta = beta_schedule(schedule, n)?;
    let variance = tilted_variance(model, beta)?;
    let target = schedule.target_variance(n);
    let nf = n as f64;
    Ok(VFormDiagnostic {
        n,
        beta,
        variance,
        target,
        scaled_n2: nf * nf * (variance - target),
        scaled_n32: nf.powf(1.5) * (variance - target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MODELS: [DisorderModel; 5] = [
        DisorderModel::StandardGaussian,
        DisorderModel::Rademacher,
        DisorderModel::StandardizedBernoulli { p: 0.3 },
        DisorderModel::StandardizedBernoulli { p: 0.2 },
        DisorderModel::StandardizedUniform,
    ];

    #[test]
    fn closed_forms() {
        let g = DisorderModel::StandardGaussian;
        assert!((log_mgf(&g, 0.7).unwrap() - 0.245).abs() < 1e-16);
        let r = DisorderModel::Rademacher;
        for beta in [0.3, 0.99, 1.0, 3.0, -2.5] {
            let want = f64::cosh(beta).ln();
            assert!((log_mgf(&r, beta).unwrap() / want - 1.0).abs() < 1e-14);
        }
        let tiny = 1e-4f64;
        let series = tiny.powi(2) / 2.0 - tiny.powi(4) / 12.0;
        assert!((log_mgf(&r, tiny).unwrap() / series - 1.0).abs() < 1e-14);
        let v = tilted_variance(&r, 0.5).unwrap();
        assert!((v - 0.5f64.tanh().powi(2)).abs() < 1e-15);
        assert!((v - 0.21355227).abs() < 1e-8);
        assert!((tilted_variance(&g, 0.4).unwrap() - (0.16f64).exp_m1()).abs() < 1e-16);
        let u = DisorderModel::StandardizedUniform;
        for beta in [0.1, 1.0, 5.0] {
            let t = 3f64.sqrt() * beta;
            let want = (t.sinh() / t).ln();
            assert!((log_mgf(&u, beta).unwrap() / want - 1.0).abs() < 1e-12);
        }
        let t2 = 3.0 * 0.01f64.powi(2);
        let series = t2 / 6.0 - t2 * t2 / 180.0 + t2.powi(3) / 2835.0;
        assert!((log_mgf(&u, 0.01).unwrap() / series - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_mgf_against_two_point_sum() {
        for p in [0.3, 0.2, 0.01] {
            let m = DisorderModel::bernoulli(p).unwrap();
            for beta in [0.0, 0.5, -0.5, 2.0, -3.0, 10.0] {
                let direct: f64 = m.atoms().unwrap().iter().map(|(w, q)| q * (beta * w).exp()).sum::<f64>().ln();
                assert!((log_mgf(&m, beta).unwrap() - direct).abs() < 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn normalization_at_origin() {
        for m in MODELS {
            assert_eq!(log_mgf(&m, 0.0).unwrap(), 0.0);
            assert_eq!(tilted_variance(&m, 0.0).unwrap(), 0.0);
            let h = 1e-3;
            let d1 = (log_mgf(&m, h).unwrap() - log_mgf(&m, -h).unwrap()) / (2.0 * h);
            let d2 = (log_mgf(&m, h).unwrap() + log_mgf(&m, -h).unwrap()) / (h * h);
            assert!(d1.abs() < 1e-5 * (1.0 + skew(&m).abs()), "{m}: {d1}");
            assert!((d2 - 1.0).abs() < 1e-5 * (1.0 + m.excess_kurtosis().abs()), "{m}: {d2}");
        }
    }

    #[test]
    fn skew_and_kurtosis_match_atoms() {
        assert_eq!(skew(&DisorderModel::StandardGaussian), 0.0);
        assert_eq!(skew(&DisorderModel::Rademacher), 0.0);
        assert_eq!(skew(&DisorderModel::StandardizedUniform), 0.0);
        assert!((skew(&DisorderModel::bernoulli(0.2).unwrap()) - 1.5).abs() < 1e-15);
        for m in [DisorderModel::Rademacher, DisorderModel::bernoulli(0.2).unwrap()] {
            let at = m.atoms().unwrap();
            let mom = |k: i32| at.iter().map(|(w, q)| q * w.powi(k)).sum::<f64>();
            assert!(mom(1).abs() < 1e-15 && (mom(2) - 1.0).abs() < 1e-14);
            assert!((mom(3) - skew(&m)).abs() < 1e-14);
            assert!((mom(4) - 3.0 - m.excess_kurtosis()).abs() < 1e-13);
        }
    }

    #[test]
    fn domain_is_enforced() {
        let g = DisorderModel::StandardGaussian;
        assert!(matches!(log_mgf(&g, 20.5), Err(Error::Domain(_))));
        assert!(matches!(tilted_variance(&g, 10.5), Err(Error::Domain(_))));
        assert!(matches!(initial_moment(&g, 5.0, 6), Err(Error::Domain(_))));
        assert!(DisorderModel::bernoulli(1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for m in MODELS {
            assert_eq!(m.to_string().parse::<DisorderModel>().unwrap(), m);
        }
        assert!("cauchy".parse::<DisorderModel>().is_err());
        assert!("bernoulli:1.5".parse::<DisorderModel>().is_err());
    }

    #[test]
    fn second_initial_moment_is_tilted_variance() {
        for m in MODELS {
            for beta in [0.0, 1e-3, 0.2, 1.3] {
                assert_eq!(initial_moment(&m, beta, 2).unwrap(), tilted_variance(&m, beta).unwrap());
            }
        }
    }

    #[test]
    fn rademacher_initial_moments_by_enumeration() {
        // W - 1 = +-tanh(beta) with probability 1/2 each.
        let r = DisorderModel::Rademacher;
        let t = 0.5f64.tanh();
        assert!(initial_moment(&r, 0.5, 3).unwrap().abs() < 1e-15);
        assert!((initial_moment(&r, 0.5, 4).unwrap() - t.powi(4)).abs() < 1e-15);
        assert!((initial_moment(&r, 0.5, 6).unwrap() - t.powi(6)).abs() < 1e-15);
        let m = DisorderModel::bernoulli(0.3).unwrap();
        let beta = 0.4;
        let lam = log_mgf(&m, beta).unwrap();
        for k in 2..=5 {
            let direct: f64 =
                m.atoms().unwrap().iter().map(|(w, q)| q * (beta * w - lam).exp_m1().powi(k)).sum();
            assert!((initial_moment(&m, beta, k as u32).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn initial_moments_scale_like_n_to_minus_m_over_2() {
        for m in [DisorderModel::StandardGaussian, DisorderModel::bernoulli(0.2).unwrap()] {
            let s = BetaSchedule::new(2, m, 0.0).unwrap();
            for k in [3u32, 4, 6] {
                let scaled: Vec<f64> = [256u64, 1024, 4096, 16384]
                    .iter()
                    .map(|&n| {
                        let beta = beta_schedule(&s, n).unwrap();
                        initial_moment(&m, beta, k).unwrap().abs() * (n as f64).powf(k as f64 / 2.0)
                    })
                    .collect();
                let (lo, hi) = scaled.iter().fold((f64::MAX, 0f64), |(a, b), &v| (a.min(v), b.max(v)));
                assert!(hi < 200.0, "{m} m={k}: {scaled:?}");
                // Even moments settle at a nonzero constant; odd ones may decay further.
                assert!(k % 2 == 1 || lo > 0.5 * hi, "{m} m={k}: {scaled:?}");
            }
        }
    }

    #[test]
    fn literal_schedule_value() {
        let s = BetaSchedule::new(2, DisorderModel::StandardGaussian, 0.0)
            .unwrap()
            .with_form(ScheduleForm::FourTerm);
        let k = 2f64.sqrt();
        let want = k / 10.0 + k * 100f64.ln() / 1000.0;
        let got = beta_schedule(&s, 100).unwrap();
        assert!((got - want).abs() < 1e-16);
        assert!((got - 0.14793405).abs() < 1e-8, "{got}");
    }

    #[test]
    fn schedule_leading_orders() {
        let bern = DisorderModel::bernoulli(0.2).unwrap();
        for form in [ScheduleForm::FourTerm, ScheduleForm::Expanded, ScheduleForm::VarianceMatched] {
            let s3 = BetaSchedule::new(3, DisorderModel::StandardGaussian, 0.0).unwrap().with_form(form);
            let n = 1u64 << 30;
            assert!((beta_schedule(&s3, n).unwrap() * (n as f64).sqrt() - 1.0).abs() < 1e-3);
            // sqrt(n) (beta sqrt(n) - kappa)/kappa -> -tau kappa/2.
            let s = BetaSchedule::new(2, bern, 0.0).unwrap().with_form(form);
            let k = 2f64.sqrt();
            let scaled = |n: u64| {
                let nf = n as f64;
                nf.sqrt() * (beta_schedule(&s, n).unwrap() * nf.sqrt() - k) / k
            };
            let want = -1.5 * k / 2.0;
            assert!((scaled(1 << 24) - want).abs() < (scaled(1 << 12) - want).abs());
            assert!((scaled(1 << 30) - want).abs() < 2e-3, "{form:?}: {}", scaled(1 << 30));
        }
    }

    #[test]
    fn skew_term_lowers_schedule() {
        let g = DisorderModel::StandardGaussian;
        // The expanded form adds +5 tau^2 kappa^3/(8 n^{3/2}), which the skew
        // term dominates once sqrt(n) > 5 tau kappa/4.
        for (form, k0) in [(ScheduleForm::FourTerm, 1), (ScheduleForm::Expanded, 3)] {
            let s0 = BetaSchedule::new(2, g, 0.0).unwrap().with_form(form);
            let s1 = s0.with_tau(1.5);
            for k in k0..=24 {
                let n = 1u64 << k;
                if let (Ok(a), Ok(b)) = (beta_schedule(&s0, n), beta_schedule(&s1, n)) {
                    assert!(b < a, "n = {n}");
                }
            }
        }
    }

    #[test]
    fn negative_beta_is_rejected() {
        let s = BetaSchedule::new(2, DisorderModel::StandardGaussian, -1e6).unwrap();
        assert!(matches!(beta_schedule(&s, 4), Err(Error::Domain(_))));
        let s = s.with_form(ScheduleForm::VarianceMatched);
        assert!(matches!(beta_schedule(&s, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn variance_matched_hits_target() {
        for m in MODELS {
            for r in [-5.0, 0.0, 3.0] {
                let s = BetaSchedule::new(2, m, r).unwrap().with_form(ScheduleForm::VarianceMatched);
                for n in [16u64, 1024, 1 << 20] {
                    let d = v_form_check(&m, &s, n).unwrap();
                    assert!((d.variance / d.target - 1.0).abs() < 1e-13, "{m} r={r} n={n}: {d:?}");
                }
            }
        }
    }

    fn ladder_residuals(model: DisorderModel, schedule: BetaSchedule, scale_n2: bool) -> Vec<f64> {
        (8..=20)
            .step_by(4)
            .map(|k| {
                let d = v_form_check(&model, &schedule, 1u64 << k).unwrap();
                if scale_n2 {
                    d.scaled_n2
                } else {
                    d.scaled_n32
                }
            })
            .collect()
    }

    #[test]
    fn expanded_form_vanishes_in_v_form() {
        for m in [DisorderModel::StandardGaussian, DisorderModel::bernoulli(0.2).unwrap()] {
            let s = BetaSchedule::new(2, m, 0.0).unwrap();
            let res = ladder_residuals(m, s, true);
            assert!(res.windows(2).all(|w| w[1].abs() < w[0].abs()), "{m}: {res:?}");
            assert!(res.last().unwrap().abs() < 0.5, "{m}: {res:?}");
        }
    }

    #[test]
    fn dropping_the_skew_term_breaks_v_form() {
        let m = DisorderModel::bernoulli(0.2).unwrap();
        let s = BetaSchedule::new(2, m, 0.0).unwrap().with_tau(0.0);
        let res = ladder_residuals(m, s, false);
        // V - X ~ tau kappa^3/n^{3/2} = 4.24/n^{3/2}.
        for v in &res {
            assert!((v - 1.5 * 2f64.sqrt().powi(3)).abs() < 0.5, "{res:?}");
        }
    }

    #[test]
    fn literal_form_doubles_the_log_term() {
        let m = DisorderModel::StandardGaussian;
        let s = BetaSchedule::new(2, m, 0.0).unwrap().with_form(ScheduleForm::FourTerm);
        // n^2 (V - X) ~ kappa^2 eta log n + const.
        let d1 = v_form_check(&m, &s, 1 << 16).unwrap().scaled_n2;
        let d2 = v_form_check(&m, &s, 1 << 20).unwrap().scaled_n2;
        let slope = (d2 - d1) / (4.0 * std::f64::consts::LN_2);
        assert!((slope - 2.0).abs() < 0.05, "{slope}");
    }

    proptest! {
        #[test]
        fn log_mgf_is_convex(idx in 0usize..5, b1 in -9.0f64..9.0, b2 in -9.0f64..9.0) {
            let m = MODELS[idx];
            let mid = log_mgf(&m, 0.5 * (b1 + b2)).unwrap();
            let avg = 0.5 * (log_mgf(&m, b1).unwrap() + log_mgf(&m, b2).unwrap());
            prop_assert!(mid <= avg + 1e-12 * avg.abs().max(1.0));
        }

        #[test]
        fn tilted_variance_increases_with_abs_beta(idx in 0usize..5, a in 1e-4f64..9.0, f in 1.001f64..1.1) {
            let m = MODELS[idx];
            let b = (a * f).min(10.0);
            prop_assume!(b > a);
            prop_assert!(tilted_variance(&m, b).unwrap() > tilted_variance(&m, a).unwrap());
            prop_assert!(tilted_variance(&m, -b).unwrap() > tilted_variance(&m, -a).unwrap());
        }

        #[test]
        fn schedule_scaling_limit(idx in 0usize..5, r in -3.0f64..3.0) {
            let m = MODELS[idx];
            let s = BetaSchedule::new(2, m, r).unwrap();
            let n = 1u64 << 28;
            prop_assert!((beta_schedule(&s, n).unwrap() * (n as f64).sqrt() / 2f64.sqrt() - 1.0).abs() < 1e-3);
        }
    }
}

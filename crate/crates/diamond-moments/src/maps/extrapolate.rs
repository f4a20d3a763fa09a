//! Limit extrapolation for sequences `a_n = a + sum_j q_j(log n) / n^j`
//! with polynomial `q_j`, as produced by iterating a marginally repelling
//! map from a `1/n`-scaled start.

use crate::real::{solve_dense, Real};

/// `degrees[j]` is the largest power of `log n` multiplying `n^{-(j+1)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogPowerBasis {
    pub degrees: Vec<u32>,
}

impl LogPowerBasis {
    pub fn new(degrees: Vec<u32>) -> Self {
        Self { degrees }
    }

    /// Unknowns including the limit itself.
    pub fn unknowns(&self) -> usize {
        1 + self.degrees.iter().map(|d| *d as usize + 1).sum::<usize>()
    }

    fn row<T: Real>(&self, n: f64) -> Vec<T> {
        let l = n.ln();
        let mut row = vec![T::one()];
        let mut inv = T::one();
        let n_t = T::from_f64(n);
        for &d in &self.degrees {
            inv = inv / n_t;
            let mut lp = T::one();
            for _ in 0..=d {
                row.push(inv * lp);
                lp = lp * T::from_f64(l);
            }
        }
        row
    }
}

/// Interpolates the model through exactly `basis.unknowns()` points and
/// returns the constant term. Columns are scaled to unit max-norm first.
pub fn fit_limit<T: Real>(ns: &[f64], values: &[T], basis: &LogPowerBasis) -> Option<T> {
    let k = basis.unknowns();
    if ns.len() != k || values.len() != k {
        return None;
    }
    let mut a: Vec<Vec<T>> = ns.iter().map(|&n| basis.row::<T>(n)).collect();
    let mut scale = vec![T::one(); k];
    for (c, s) in scale.iter_mut().enumerate() {
        let m = a.iter().map(|r| r[c].abs().to_f64()).fold(0.0, f64::max);
        if m > 0.0 {
            *s = T::from_f64(m);
        }
    }
    for r in a.iter_mut() {
        for (c, s) in scale.iter().enumerate() {
            r[c] = r[c] / *s;
        }
    }
    let x = solve_dense(a, values.to_vec())?;
    Some(x[0] / scale[0])
}

/// Extrapolated limit from the trailing window, plus the change against the
/// window shifted back by one point as an error estimate.
pub fn extrapolate_tail<T: Real>(ns: &[f64], values: &[T], basis: &LogPowerBasis) -> Option<(T, f64)> {
    let k = basis.unknowns();
    let len = ns.len();
    if len < k + 1 {
        return None;
    }
    let head = fit_limit(&ns[len - k..], &values[len - k..], basis)?;
    let prev = fit_limit(&ns[len - k - 1..len - 1], &values[len - k - 1..len - 1], basis)?;
    Some((head, (head - prev).abs().to_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::DD;

    #[test]
    fn recovers_synthetic_limit() {
        let basis = LogPowerBasis::new(vec![2, 4]);
        let ns: Vec<f64> = (10..=20).map(|k| (1u64 << k) as f64).collect();
        let vals: Vec<DD> = ns
            .iter()
            .map(|&n| {
                let l = n.ln();
                DD::from_f64(3.25)
                    + DD::from_f64(0.7 + 0.2 * l - 0.05 * l * l) / DD::from_f64(n)
                    + DD::from_f64(1.0 - l + 0.3 * l.powi(4)) / DD::from_f64(n * n)
            })
            .collect();
        let (v, err) = extrapolate_tail(&ns, &vals, &basis).unwrap();
        assert!((v.to_f64() - 3.25).abs() < 1e-20_f64.max(1e-13));
        assert!(err < 1e-12);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let basis = LogPowerBasis::new(vec![1]);
        assert!(fit_limit::<f64>(&[2.0, 4.0], &[1.0, 1.0], &basis).is_none());
    }
}

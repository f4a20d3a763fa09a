//! Exact-in-distribution samples of `W_n` and exhaustive enumeration over
//! finite disorder supports.

use crate::disorder::{log_mgf, DisorderModel};
use crate::{Error, Result};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default cap on bond draws per exact sample.
pub const DEFAULT_BOND_BUDGET: u64 = 1 << 26;
/// Largest number of disorder configurations [`enumerate_small`] visits.
pub const ENUMERATION_CAP: u64 = 10_000_000;

fn bond_count(b: u32, n: u32) -> Option<u64> {
    u64::from(b).checked_mul(u64::from(b))?.checked_pow(n)
}

/// One sample of `W_n(beta)` on `D_n` with `s = b`, using fresh disorder on
/// every bond. Deterministic in `seed`.
pub fn sample_w_exact(b: u32, model: &DisorderModel, beta: f64, n: u32, seed: u64) -> Result<f64> {
    sample_w_exact_with_budget(b, model, beta, n, seed, DEFAULT_BOND_BUDGET)
}

pub fn sample_w_exact_with_budget(
    b: u32,
    model: &DisorderModel,
    beta: f64,
    n: u32,
    seed: u64,
    budget: u64,
) -> Result<f64> {
    if b < 2 {
        return Err(Error::InvalidParams(format!("need b >= 2, got {b}")));
    }
    model.validate()?;
    let bonds = bond_count(b, n).filter(|&k| k <= budget).ok_or_else(|| Error::BudgetExceeded {
        needed: format!("({})^{n} bond draws", b * b),
        budget: budget.to_string(),
    })?;
    debug_assert!(bonds >= 1);
    let lambda = log_mgf(model, beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(subtree(b, n, &mut |r: &mut ChaCha8Rng| (beta * model.sample(r) - lambda).exp(), &mut rng))
}

fn subtree<F: FnMut(&mut ChaCha8Rng) -> f64>(b: u32, level: u32, leaf: &mut F, rng: &mut ChaCha8Rng) -> f64 {
    if level == 0 {
        return leaf(rng);
    }
    let mut sum = 0.0;
    for _ in 0..b {
        let mut prod = 1.0;
        for _ in 0..b {
            prod *= subtree(b, level - 1, leaf, rng);
        }
        sum += prod;
    }
    sum / b as f64
}

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} has no rational value")))
}

/// Normalized bond weights `w_i` and probabilities `p_i` in exact
/// arithmetic. The binary64 values of `e^{beta a_i}` are taken as exact and
/// rescaled so that `sum p_i w_i = 1` holds exactly.
pub fn exact_weights(model: &DisorderModel, beta: f64) -> Result<Vec<(BigRational, BigRational)>> {
    let atoms = model
        .atoms()
        .ok_or_else(|| Error::InvalidParams(format!("{model} has no finite support")))?;
    let mut probs: Vec<BigRational> = atoms[..atoms.len() - 1].iter().map(|a| rational(a.1)).collect::<Result<_>>()?;
    let rest = BigRational::one() - probs.iter().fold(BigRational::zero(), |s, p| s + p);
    probs.push(rest);
    let raw: Vec<BigRational> = atoms.iter().map(|a| rational((beta * a.0).exp())).collect::<Result<_>>()?;
    let mean = raw.iter().zip(&probs).fold(BigRational::zero(), |s, (w, p)| s + w * p);
    Ok(raw.into_iter().map(|w| w / &mean).zip(probs).collect())
}

/// `rho_0^(2..=m_max)` of the exact bond weights.
pub fn exact_initial_moments(model: &DisorderModel, beta: f64, m_max: u32) -> Result<Vec<BigRational>> {
    let weights = exact_weights(model, beta)?;
    Ok(centered_moments(weights.iter().map(|(w, p)| (w.clone(), p.clone())), m_max))
}

fn centered_moments(dist: impl Iterator<Item = (BigRational, BigRational)>, m_max: u32) -> Vec<BigRational> {
    let mut acc = vec![BigRational::zero(); m_max as usize - 1];
    let one = BigRational::one();
    for (w, p) in dist {
        let d = w - &one;
        let mut pow = &d * &d * &p;
        for a in acc.iter_mut() {
            *a += &pow;
            pow *= &d;
        }
    }
    acc
}

/// Exact `rho_n^(2..=m_max)` of `W_n` on `D_n` (`s = b`) by visiting every
/// disorder configuration of a finitely supported law.
pub fn enumerate_small(b: u32, model: &DisorderModel, beta: f64, n: u32, m_max: u32) -> Result<Vec<BigRational>> {
    if b < 2 || m_max < 2 {
        return Err(Error::InvalidParams(format!("need b >= 2 and m_max >= 2, got b={b}, m_max={m_max}")));
    }
    let weights = exact_weights(model, beta)?;
    let support = weights.len() as u64;
    let bonds = bond_count(b, n).ok_or_else(|| Error::CapExceeded(format!("D_{n} with b={b} is too large")))?;
    let configs = u32::try_from(bonds)
        .ok()
        .and_then(|e| support.checked_pow(e))
        .filter(|&c| c <= ENUMERATION_CAP)
        .ok_or_else(|| {
            Error::CapExceeded(format!("{support}^{bonds} configurations exceed {ENUMERATION_CAP}"))
        })?;
    let bonds = bonds as usize;
    let bu = b as usize;
    let inv_b = BigRational::new(1.into(), b.into());
    let mut digits = vec![0usize; bonds];
    let mut dist = Vec::with_capacity(configs as usize);
    for _ in 0..configs {
        let mut level: Vec<BigRational> = digits.iter().map(|&d| weights[d].0.clone()).collect();
        let prob = digits.iter().fold(BigRational::one(), |p, &d| p * &weights[d].1);
        // Bonds of one branch are contiguous, branches of one bond likewise.
        while level.len() > 1 {
            level = level
                .chunks(bu * bu)
                .map(|block| {
                    let sum = block
                        .chunks(bu)
                        .map(|branch| branch.iter().fold(BigRational::one(), |p, w| p * w))
                        .fold(BigRational::zero(), |s, v| s + v);
                    sum * &inv_b
                })
                .collect();
        }
        dist.push((level.pop().expect("one root"), prob));
        for d in digits.iter_mut() {
            *d += 1;
            if *d < weights.len() {
                break;
            }
            *d = 0;
        }
    }
    let mean = dist.iter().fold(BigRational::zero(), |s, (w, p)| s + w * p);
    if !mean.is_one() {
        return Err(Error::Structure(format!("enumerated mean {mean} is not 1")));
    }
    Ok(centered_moments(dist.into_iter(), m_max))
}

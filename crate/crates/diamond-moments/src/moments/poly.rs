//! Sparse multivariate polynomials in `y_2, ..., y_m` with exact rational
//! coefficients.
//!
//! Exponent vectors have length `m - 1`; entry `i` is the power of
//! `y_{i+2}`. Zero coefficients are never stored.

use crate::real::Real;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePolynomial {
    m: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

/// Graded lexicographic order: total degree first, then `y_2` before `y_3`
/// and so on.
pub fn grlex_cmp(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// `sum_j j e_j` for an exponent vector over `y_2..`.
pub fn weight(exp: &[u32]) -> u32 {
    exp.iter().enumerate().map(|(i, &e)| (i as u32 + 2) * e).sum()
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| if q.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// Rounds `q` to the nearest `T`, using a second word when `T` has one.
pub fn rational_to_real<T: Real>(q: &BigRational) -> T {
    let hi = rational_to_f64(q);
    if !hi.is_finite() {
        return T::from_f64(hi);
    }
    let rem = q - BigRational::from_float(hi).expect("finite");
    T::from_f64(hi) + T::from_f64(rational_to_f64(&rem))
}

impl SparsePolynomial {
    /// The zero polynomial over `y_2..y_m`.
    pub fn zero(m: usize) -> Self {
        assert!(m >= 2, "variable set starts at y_2");
        Self { m, terms: BTreeMap::new() }
    }

    pub fn constant(m: usize, c: BigRational) -> Self {
        let mut p = Self::zero(m);
        p.add_term(vec![0; m - 1], c);
        p
    }

    pub fn one(m: usize) -> Self {
        Self::constant(m, BigRational::one())
    }

    /// The variable `y_j`, `2 <= j <= m`.
    pub fn var(m: usize, j: usize) -> Self {
        assert!((2..=m).contains(&j), "y_{j} outside y_2..y_{m}");
        let mut exp = vec![0; m - 1];
        exp[j - 2] = 1;
        let mut p = Self::zero(m);
        p.add_term(exp, BigRational::one());
        p
    }

    pub fn from_terms(m: usize, terms: impl IntoIterator<Item = (Vec<u32>, BigRational)>) -> Result<Self> {
        let mut p = Self::zero(m);
        for (exp, c) in terms {
            if exp.len() != m - 1 {
                return Err(Error::Structure(format!(
                    "exponent vector of length {} for variables y_2..y_{m}",
                    exp.len()
                )));
            }
            p.add_term(exp, c);
        }
        Ok(p)
    }

    pub fn max_index(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in graded lexicographic order.
    pub fn terms_grlex(&self) -> Vec<(&Vec<u32>, &BigRational)> {
        let mut v: Vec<_> = self.terms.iter().collect();
        v.sort_by(|a, b| grlex_cmp(a.0, b.0));
        v
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exp: &[u32]) -> BigRational {
        self.terms.get(exp).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Largest total degree, or `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn add_term(&mut self, exp: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    /// The same polynomial over `y_2..y_{m'}` with `m' >= m`.
    pub fn extend(&self, m: usize) -> Self {
        assert!(m >= self.m);
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut e = e.clone();
                e.resize(m - 1, 0);
                (e, c.clone())
            })
            .collect();
        Self { m, terms }
    }

    fn aligned(&self, other: &Self) -> (Self, Self) {
        let m = self.m.max(other.m);
        (self.extend(m), other.extend(m))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (mut a, b) = self.aligned(other);
        for (e, c) in b.terms {
            a.add_term(e, c);
        }
        a
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.m);
        }
        Self {
            m: self.m,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = self.aligned(other);
        let mut out = Self::zero(a.m);
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.m);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Terms whose exponent vector satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(&[u32]) -> bool) -> Self {
        Self {
            m: self.m,
            terms: self.terms.iter().filter(|(e, _)| keep(e)).map(|(e, c)| (e.clone(), c.clone())).collect(),
        }
    }

    /// Exact quotient by `y_j`; fails if some term lacks `y_j`.
    pub fn divide_by_var(&self, j: usize) -> Result<Self> {
        let i = j - 2;
        let mut out = Self::zero(self.m);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                return Err(Error::Structure(format!("term {e:?} is not divisible by y_{j}")));
            }
            let mut e = e.clone();
            e[i] -= 1;
            out.add_term(e, c.clone());
        }
        Ok(out)
    }

    /// `d/dy_j`.
    pub fn partial(&self, j: usize) -> Self {
        let i = j - 2;
        let mut out = Self::zero(self.m);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                out.add_term(e2, c * BigRational::from_integer(BigInt::from(e[i])));
            }
        }
        out
    }

    /// Exact evaluation; `y[i]` is the value of `y_{i+2}`.
    pub fn eval_exact(&self, y: &[BigRational]) -> BigRational {
        assert!(y.len() + 1 >= self.m, "need values for y_2..y_{}", self.m);
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t *= num_traits::pow(y[i].clone(), k as usize);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, y: &[f64]) -> f64 {
        CompiledPoly::<f64>::new(self).eval(y)
    }

    /// JSON record `{"b", "m", "terms": [{"exp", "coef": "num/den"}]}`.
    pub fn to_record(&self, b: u32, m: u32) -> PolyRecord {
        PolyRecord {
            b,
            m,
            terms: self
                .terms_grlex()
                .into_iter()
                .map(|(e, c)| TermRecord {
                    exp: e.clone(),
                    coef: format!("{}/{}", c.numer(), c.denom()),
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &PolyRecord) -> Result<Self> {
        let m = rec.m as usize;
        if m < 2 {
            return Err(Error::Structure(format!("record declares m = {m} < 2")));
        }
        let mut terms = Vec::with_capacity(rec.terms.len());
        for t in &rec.terms {
            terms.push((t.exp.clone(), parse_rational(&t.coef)?));
        }
        Self::from_terms(m, terms)
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Structure(format!("bad rational literal '{s}'"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyRecord {
    pub b: u32,
    pub m: u32,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub exp: Vec<u32>,
    pub coef: String,
}

/// A polynomial lowered to floating coefficients for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly<T: Real> {
    /// `(coefficient, [(variable offset, power)])`.
    terms: Vec<(T, Vec<(usize, u32)>)>,
    max_pow: Vec<u32>,
}

impl<T: Real> CompiledPoly<T> {
    pub fn new(p: &SparsePolynomial) -> Self {
        let mut max_pow = vec![0; p.m - 1];
        let terms = p
            .terms
            .iter()
            .map(|(e, c)| {
                let factors: Vec<(usize, u32)> =
                    e.iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, &k)| (i, k)).collect();
                for &(i, k) in &factors {
                    max_pow[i] = max_pow[i].max(k);
                }
                (rational_to_real::<T>(c), factors)
            })
            .collect();
        Self { terms, max_pow }
    }

    /// Largest power of each variable, used to size power tables.
    pub fn max_powers(&self) -> &[u32] {
        &self.max_pow
    }

    /// Evaluation given `powers[i][k] = y_{i+2}^k`.
    pub fn eval_powers(&self, powers: &[Vec<T>]) -> T {
        let mut acc = T::zero();
        for (c, f) in &self.terms {
            let mut t = *c;
            for &(i, k) in f {
                t = t * powers[i][k as usize];
            }
            acc = acc + t;
        }
        acc
    }

    pub fn eval(&self, y: &[T]) -> T {
        let powers = power_table(y, &self.max_pow);
        self.eval_powers(&powers)
    }
}

/// `table[i][k] = y[i]^k` for `k <= max_pow[i]`.
pub fn power_table<T: Real>(y: &[T], max_pow: &[u32]) -> Vec<Vec<T>> {
    max_pow
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut row = Vec::with_capacity(k as usize + 1);
            row.push(T::one());
            for _ in 0..k {
                let last = *row.last().expect("nonempty");
                row.push(last * y[i]);
            }
            row
        })
        .collect()
}

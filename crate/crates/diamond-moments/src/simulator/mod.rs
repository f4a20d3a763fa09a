//! Ground truth for the moment recursion: exact samples and exhaustive
//! enumeration of the normalized partition function on diamond graphs, and
//! a population-dynamics pool for the distributional recursion.
//!
//! All sampling is seeded and uses counter-addressed ChaCha streams, so
//! results do not depend on the rayon worker count.

mod exact;
mod pool;
mod stats;

pub use exact::{
    enumerate_small, exact_initial_moments, exact_weights, sample_w_exact, sample_w_exact_with_budget,
    DEFAULT_BOND_BUDGET, ENUMERATION_CAP,
};
pub use pool::{
    pool_evolve, pool_evolve_with, read_pool_binary, write_pool_binary, write_pool_csv, GenerationStat, PoolOptions,
    SamplePool, POOL_MAGIC,
};
pub use stats::{empirical_moments, EmpiricalMoments, MIN_SAMPLES};

use crate::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, Pow};
use serde::Serialize;

/// Exact sizes of the diamond graph `D_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub b: u32,
    pub s: u32,
    pub n: u32,
    /// `(b s)^n`.
    #[serde(serialize_with = "decimal")]
    pub bond_count: BigUint,
    /// `|Gamma_{k+1}| = b |Gamma_k|^s`, `|Gamma_0| = 1`.
    #[serde(serialize_with = "decimal")]
    pub path_count: BigUint,
    /// `s^n`.
    #[serde(serialize_with = "decimal")]
    pub path_length: BigUint,
}

/// Big counts are written as decimal strings.
fn decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

pub fn graph_stats(b: u32, s: u32, n: u32) -> Result<GraphStats> {
    if b < 2 || s < 2 {
        return Err(Error::InvalidParams(format!("need b >= 2 and s >= 2, got b={b}, s={s}")));
    }
    let mut paths = BigUint::one();
    for _ in 0..n {
        paths = BigUint::from(b) * Pow::pow(&paths, s);
    }
    Ok(GraphStats {
        b,
        s,
        n,
        bond_count: Pow::pow(BigUint::from(b * s), n),
        path_count: paths,
        path_length: Pow::pow(BigUint::from(s), n),
    })
}

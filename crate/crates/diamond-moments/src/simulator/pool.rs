//! Population dynamics for `W_{n+1} = (1/b) sum_i prod_j W_n^(i,j)` with
//! `s = b`.
//!
//! Every draw of sample `i` in generation `g` comes from the ChaCha stream
//! `g` of the seed's key, starting at word `i << 16`, so a pool is a pure
//! function of `(seed, parameters)` whatever the rayon worker count.

use crate::disorder::{log_mgf, DisorderModel};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{Read, Write};

/// First four header bytes of a binary pool snapshot.
pub const POOL_MAGIC: [u8; 4] = *b"DMPW";
const WORDS_PER_SAMPLE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoolOptions {
    /// Divide each new generation by its sample mean. Without this the pool
    /// mean is a repelling direction (`m -> m^b`) and sampling noise in it
    /// doubles every generation at `b = 2`.
    pub renormalize: bool,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self { renormalize: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenerationStat {
    pub generation: u32,
    /// Sample mean before any renormalization.
    pub mean: f64,
    /// `sd/sqrt(N)` of that mean.
    pub mean_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePool {
    pub b: u32,
    pub beta: f64,
    pub model: DisorderModel,
    pub seed: u64,
    pub generation: u32,
    pub samples: Vec<f64>,
    pub renormalized: bool,
    /// One entry per generation, `0..=generation`.
    pub history: Vec<GenerationStat>,
}

fn stream(seed: u64, generation: u32, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(generation));
    rng.set_word_pos((index as u128) << WORDS_PER_SAMPLE);
    rng
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn pool_evolve(
    b: u32,
    model: &DisorderModel,
    beta: f64,
    generations: u32,
    pool_size: usize,
    seed: u64,
) -> Result<SamplePool> {
    pool_evolve_with(b, model, beta, generations, pool_size, seed, PoolOptions::default())
}

/// Generation 0 holds normalized bond weights; each later sample combines
/// `b * b` members of the previous generation drawn uniformly with
/// replacement.
pub fn pool_evolve_with(
    b: u32,
    model: &DisorderModel,
    beta: f64,
    generations: u32,
    pool_size: usize,
    seed: u64,
    opts: PoolOptions,
) -> Result<SamplePool> {
    if b < 2 {
        return Err(Error::InvalidParams(format!("need b >= 2, got {b}")));
    }
    if pool_size < 1000 {
        return Err(Error::InvalidParams(format!("pool size must be >= 1000, got {pool_size}")));
    }
    model.validate()?;
    let lambda = log_mgf(model, beta)?;
    let mut pool: Vec<f64> = (0..pool_size)
        .into_par_iter()
        .map(|i| (beta * model.sample(&mut stream(seed, 0, i)) - lambda).exp())
        .collect();
    let mut history = Vec::with_capacity(generations as usize + 1);
    let (mean, se) = mean_and_se(&pool);
    history.push(GenerationStat { generation: 0, mean, mean_se: se });
    let inv_b = 1.0 / b as f64;
    for g in 1..=generations {
        let prev = &pool;
        let mut next: Vec<f64> = (0..pool_size)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, g, i);
                let mut sum = 0.0;
                for _ in 0..b {
                    let mut prod = 1.0;
                    for _ in 0..b {
                        prod *= prev[rng.gen_range(0..pool_size)];
                    }
                    sum += prod;
                }
                sum * inv_b
            })
            .collect();
        let (mean, se) = mean_and_se(&next);
        history.push(GenerationStat { generation: g, mean, mean_se: se });
        if opts.renormalize {
            next.iter_mut().for_each(|w| *w /= mean);
        }
        pool = next;
    }
    Ok(SamplePool {
        b,
        beta,
        model: *model,
        seed,
        generation: generations,
        samples: pool,
        renormalized: opts.renormalize,
        history,
    })
}

/// 16-byte header (magic, `u32` generation, `u64` count) then the samples,
/// all little-endian.
pub fn write_pool_binary<W: Write>(pool: &SamplePool, mut out: W) -> Result<()> {
    out.write_all(&POOL_MAGIC)?;
    out.write_all(&pool.generation.to_le_bytes())?;
    out.write_all(&(pool.samples.len() as u64).to_le_bytes())?;
    for w in &pool.samples {
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

/// `(generation, samples)` from a binary snapshot.
pub fn read_pool_binary<R: Read>(mut input: R) -> Result<(u32, Vec<f64>)> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..4] != POOL_MAGIC {
        return Err(Error::Config("not a pool snapshot (bad magic)".into()));
    }
    let generation = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let mut samples = Vec::with_capacity(count as usize);
    let mut word = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut word)?;
        samples.push(f64::from_le_bytes(word));
    }
    Ok((generation, samples))
}

/// `index,w` rows with 17 significant digits.
pub fn write_pool_csv<W: Write>(pool: &SamplePool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["index", "w"]).map_err(io)?;
    for (i, v) in pool.samples.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:.16e}")]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::empirical_moments;

    #[test]
    fn deterministic_across_worker_counts() {
        let g = DisorderModel::StandardGaussian;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pool_evolve(2, &g, 0.2, 5, 4000, 9).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_ne!(a.samples, pool_evolve(2, &g, 0.2, 5, 4000, 10).unwrap().samples);
    }

    #[test]
    fn mean_stays_near_one() {
        let pool = pool_evolve(2, &DisorderModel::Rademacher, 0.2, 12, 20_000, 1).unwrap();
        for s in &pool.history {
            assert!((s.mean - 1.0).abs() <= 4.0 * s.mean_se, "{s:?}");
        }
        assert!(pool.samples.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn raw_pool_mean_drifts() {
        // Without renormalization the mean error roughly doubles per step.
        let opts = PoolOptions { renormalize: false };
        let pool = pool_evolve_with(2, &DisorderModel::StandardGaussian, 0.3, 30, 2000, 3, opts).unwrap();
        let last = pool.history.last().unwrap();
        assert!((last.mean - 1.0).abs() > 0.5, "{last:?}");
    }

    #[test]
    fn first_generation_matches_variance_map() {
        let (model, beta) = (DisorderModel::Rademacher, 0.5);
        let pool = pool_evolve(2, &model, beta, 1, 200_000, 5).unwrap();
        let e = empirical_moments(&pool.samples, 2).unwrap();
        let (v, se) = e.get(2);
        assert!((v - 0.236_354_55).abs() < 4.0 * se, "{v} +- {se}");
    }

    #[test]
    fn binary_round_trip() {
        let pool = pool_evolve(2, &DisorderModel::StandardGaussian, 0.1, 2, 1000, 0).unwrap();
        let mut buf = Vec::new();
        write_pool_binary(&pool, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 1000);
        let (g, s) = read_pool_binary(buf.as_slice()).unwrap();
        assert_eq!((g, s), (2, pool.samples.clone()));
        let mut csv = Vec::new();
        write_pool_csv(&pool, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("index,w\n"));
        assert_eq!(text.lines().count(), 1001);
        let v: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, pool.samples[0]);
    }

    #[test]
    fn small_pool_rejected() {
        assert!(pool_evolve(2, &DisorderModel::StandardGaussian, 0.1, 2, 999, 0).is_err());
    }
}

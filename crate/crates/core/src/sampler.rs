//! Seeded Monte Carlo draws of per-slot photon counts.
//!
//! Each slot takes exactly two `u64` words from a ChaCha20 stream seeded with
//! `ChaCha20Rng::seed_from_u64(seed)` (stream 0): the first selects Alice's
//! count by inverse CDF over the truncated `P(n)`, the second selects Bob's
//! share by inverse CDF over `Binomial(n, p²)`. Slot `i` therefore starts at
//! word position `4·i`, which lets chunks of the stream be generated
//! independently and concatenated into the single-stream result.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::eavesdrop::{binomial_split_table, SplitterConfig, TripartiteMoments};
use crate::error::{domain, Result};
use crate::state::TmccState;

/// Identifier of the generator and seed-derivation rule recorded in every stream.
pub const RNG_ALGORITHM: &str = "chacha20-seed_from_u64-stream0-2xu64-per-slot";

const WORDS_PER_SLOT: u128 = 4;
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotSample {
    pub n_a: u32,
    pub n_b: u32,
    pub n_e: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<SlotSample>,
    pub seed: u64,
    pub lambda_mag: f64,
    pub p: f64,
    pub algorithm: &'static str,
}

impl SampleStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Columnar text dump: `#`-prefixed header, then one whitespace separated
    /// `slot_index n_a n_b n_e` line per slot.
    pub fn write_columns<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# slot_index n_a n_b n_e")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(out, "{i} {} {} {}", s.n_a, s.n_b, s.n_e)?;
        }
        Ok(())
    }
}

/// Precomputed inverse-CDF tables for one (state, splitter) pair.
#[derive(Debug, Clone)]
pub struct SlotSampler {
    photon_cdf: Vec<f64>,
    split_cdf: Vec<Vec<f64>>,
}

fn cumulative(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    weights
        .into_iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// First index whose cumulative weight exceeds `u · total`.
fn invert(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl SlotSampler {
    pub fn new(state: &TmccState, cfg: &SplitterConfig) -> Self {
        let split = binomial_split_table(state.n_max(), cfg.transmittance(), cfg.reflectance());
        Self {
            photon_cdf: cumulative(state.probabilities()),
            split_cdf: split.into_iter().map(cumulative).collect(),
        }
    }

    /// Slots `start..start + len` of the stream for `seed`.
    pub fn sample_range(&self, seed: u64, start: usize, len: usize) -> Vec<SlotSample> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_word_pos(start as u128 * WORDS_PER_SLOT);
        (0..len)
            .map(|_| {
                let n = invert(&self.photon_cdf, unit(rng.next_u64()));
                let k = invert(&self.split_cdf[n], unit(rng.next_u64()));
                SlotSample {
                    n_a: n as u32,
                    n_b: k as u32,
                    n_e: (n - k) as u32,
                }
            })
            .collect()
    }
}

/// Draws `count` i.i.d. slots from the exact joint law.
pub fn sample_slots(
    state: &TmccState,
    cfg: &SplitterConfig,
    count: usize,
    seed: u64,
) -> Result<SampleStream> {
    if count == 0 {
        return Err(domain("slot count must be at least 1"));
    }
    let sampler = SlotSampler::new(state, cfg);
    let chunks: Vec<Vec<SlotSample>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            sampler.sample_range(seed, start, CHUNK.min(count - start))
        })
        .collect();
    Ok(SampleStream {
        samples: chunks.concat(),
        seed,
        lambda_mag: state.lambda_mag(),
        p: cfg.p(),
        algorithm: RNG_ALGORITHM,
    })
}

/// Exact integer sums over a set of count pairs.
#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    n: i128,
    x: i128,
    y: i128,
    xx: i128,
    yy: i128,
    xy: i128,
}

impl PairSums {
    fn push(&mut self, x: u32, y: u32) {
        let (x, y) = (i128::from(x), i128::from(y));
        self.n += 1;
        self.x += x;
        self.y += y;
        self.xx += x * x;
        self.yy += y * y;
        self.xy += x * y;
    }

    /// Pearson correlation; `None` if either side is constant.
    fn pearson(&self) -> Option<f64> {
        // n²·cov and n²·var, exact in integers.
        let cov = self.n * self.xy - self.x * self.y;
        let var_x = self.n * self.xx - self.x * self.x;
        let var_y = self.n * self.yy - self.y * self.y;
        if var_x == 0 || var_y == 0 {
            return None;
        }
        Some(cov as f64 / ((var_x as f64) * (var_y as f64)).sqrt())
    }
}

/// Pearson correlation of paired counts; `None` for fewer than two pairs or
/// a constant side.
pub fn pearson_counts(pairs: impl IntoIterator<Item = (u32, u32)>) -> Option<f64> {
    let mut sums = PairSums::default();
    for (x, y) in pairs {
        sums.push(x, y);
    }
    if sums.n < 2 {
        return None;
    }
    sums.pearson()
}

/// Sample moments of a stream in the layout of the analytic moments.
pub fn empirical_stats(stream: &SampleStream) -> Result<TripartiteMoments> {
    stats_of_slice(&stream.samples)
}

/// [`empirical_stats`] over an arbitrary slice of slots.
pub fn stats_of_slice(samples: &[SlotSample]) -> Result<TripartiteMoments> {
    if samples.is_empty() {
        return Err(domain("cannot compute statistics of an empty stream"));
    }
    let mut ab = PairSums::default();
    let mut ae = PairSums::default();
    for s in samples {
        ab.push(s.n_a, s.n_b);
        ae.push(s.n_a, s.n_e);
    }
    let n = ab.n as f64;
    let per = |v: i128| v as f64 / n;
    let mut m = TripartiteMoments::from_raw(
        [per(ab.x), per(ab.y), per(ae.y)],
        [per(ab.xx), per(ab.yy), per(ae.yy)],
        [per(ab.xy), per(ae.xy)],
    );
    // Exact-integer covariances and correlations replace the float differences.
    let n2 = n * n;
    m.g_ab = (ab.n * ab.xy - ab.x * ab.y) as f64 / n2;
    m.g_ae = (ae.n * ae.xy - ae.x * ae.y) as f64 / n2;
    m.rho_ab = ab.pearson();
    m.rho_ae = ae.pearson();
    Ok(m)
}

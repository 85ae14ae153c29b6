//! Threshold key generation over the twin-beam channel.
//!
//! Each party compares its per-slot photon count with the publicly known mean
//! `⟨N⟩`: above is a `1`, below is a `0`, equal is sifted out. A seed-derived
//! subset of slots is disclosed to estimate the Alice-Bob correlation; those
//! slots never enter the key.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::eavesdrop::{SplitterConfig, TripartiteMoments};
use crate::error::{domain, Error, Result};
use crate::sampler::{pearson_counts, sample_slots, stats_of_slice, SampleStream};
use crate::state::{TmccState, DEFAULT_TAIL_EPSILON};

pub const DEFAULT_RHO_MIN: f64 = 0.9;
pub const DEFAULT_DISCLOSE_FRACTION: f64 = 0.1;
/// Minimum disclosed sample for a statistically meaningful correlation estimate.
pub const MIN_MEANINGFUL_DISCLOSED: f64 = 100.0;

/// ChaCha20 stream id used to pick the disclosed slots (sampling uses 0).
const DISCLOSURE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub lambda_mag: f64,
    pub slot_count: usize,
    /// Overrides the default threshold `⟨N⟩`.
    pub threshold: Option<f64>,
    pub disclose_fraction: f64,
    pub rho_min: f64,
    pub tail_epsilon: f64,
}

impl ProtocolConfig {
    pub fn new(lambda_mag: f64, slot_count: usize) -> Self {
        Self {
            lambda_mag,
            slot_count,
            threshold: None,
            disclose_fraction: DEFAULT_DISCLOSE_FRACTION,
            rho_min: DEFAULT_RHO_MIN,
            tail_epsilon: DEFAULT_TAIL_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_count == 0 {
            return Err(domain("slot count must be at least 1"));
        }
        if !(self.disclose_fraction > 0.0 && self.disclose_fraction < 1.0) {
            return Err(domain(format!(
                "disclose fraction must lie in (0, 1), got {}",
                self.disclose_fraction
            )));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(domain(format!("rho_min must lie in (0, 1), got {}", self.rho_min)));
        }
        if let Some(t) = self.threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(domain(format!("threshold must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn disclosed_count(&self) -> usize {
        ((self.disclose_fraction * self.slot_count as f64).round() as usize).min(self.slot_count)
    }

    pub fn is_statistically_meaningful(&self) -> bool {
        self.disclose_fraction * self.slot_count as f64 >= MIN_MEANINGFUL_DISCLOSED
    }

    pub fn state(&self) -> Result<TmccState> {
        TmccState::new(self.lambda_mag, 0.0, self.tail_epsilon)
    }

    pub fn resolved_threshold(&self, state: &TmccState) -> f64 {
        self.threshold.unwrap_or_else(|| state.mean_photon())
    }
}

/// Sifted bits with the slot each one came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyMaterial {
    pub bits: Vec<bool>,
    pub kept_slots: Vec<usize>,
}

impl KeyMaterial {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits packed most-significant first, last byte zero-padded.
    pub fn packed(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |byte, (i, &bit)| byte | (u8::from(bit) << (7 - i)))
            })
            .collect()
    }

    pub fn ones_fraction(&self) -> Option<f64> {
        if self.bits.is_empty() {
            return None;
        }
        Some(self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64)
    }
}

fn extract_indexed(counts: impl IntoIterator<Item = (usize, u32)>, threshold: f64) -> KeyMaterial {
    let mut key = KeyMaterial::default();
    for (slot, count) in counts {
        let c = f64::from(count);
        if c > threshold {
            key.bits.push(true);
        } else if c < threshold {
            key.bits.push(false);
        } else {
            continue;
        }
        key.kept_slots.push(slot);
    }
    key
}

/// Threshold bits from a count sequence; counts equal to `threshold` are dropped.
pub fn extract_bits(counts: &[u32], threshold: f64) -> KeyMaterial {
    extract_indexed(counts.iter().copied().enumerate(), threshold)
}

/// Fraction of matching bits over slots kept by both keys.
pub fn agreement_rate(a: &KeyMaterial, b: &KeyMaterial) -> Result<f64> {
    let (mut i, mut j) = (0, 0);
    let (mut common, mut equal) = (0usize, 0usize);
    while i < a.kept_slots.len() && j < b.kept_slots.len() {
        match a.kept_slots[i].cmp(&b.kept_slots[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                equal += usize::from(a.bits[i] == b.bits[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if common == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(equal as f64 / common as f64)
}

/// Marginal bit probabilities implied by `P(n)` for a given threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitBalance {
    pub p0: f64,
    pub p1: f64,
    pub p_discard: f64,
}

pub fn bit_balance(state: &TmccState, threshold: f64) -> BitBalance {
    let mut out = BitBalance { p0: 0.0, p1: 0.0, p_discard: 0.0 };
    for (n, w) in state.probabilities().into_iter().enumerate() {
        let n = n as f64;
        if n < threshold {
            out.p0 += w;
        } else if n > threshold {
            out.p1 += w;
        } else {
            out.p_discard += w;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub threshold: f64,
    pub alice_key: KeyMaterial,
    pub bob_key: KeyMaterial,
    pub eve_key: KeyMaterial,
    /// `None` when the two keys share no kept slot.
    pub agreement_ab: Option<f64>,
    pub agreement_ae: Option<f64>,
    pub disclosed_slots: Vec<usize>,
    pub disclosed_rho: Option<f64>,
    /// `None` when fewer than two slots were disclosed.
    pub eavesdropping_detected: Option<bool>,
    pub empirical: TripartiteMoments,
    pub stream: SampleStream,
}

/// Seed-derived disclosed slot indices, ascending.
fn disclosed_slots(slot_count: usize, amount: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(DISCLOSURE_STREAM);
    let mut picked = index::sample(&mut rng, slot_count, amount).into_vec();
    picked.sort_unstable();
    picked
}

/// Detection rule over the disclosed pairs.
///
/// With a defined correlation the verdict is `rho < rho_min`. If a side is
/// constant the correlation is undefined and the verdict falls back to an
/// exact comparison: the unattacked channel gives `n_a = n_b` on every slot.
fn verdict(pairs: &[(u32, u32)], rho: Option<f64>, rho_min: f64) -> Option<bool> {
    if pairs.len() < 2 {
        return None;
    }
    Some(match rho {
        Some(r) => r < rho_min,
        None => pairs.iter().any(|(a, b)| a != b),
    })
}

pub fn run_session(cfg: &ProtocolConfig, splitter: &SplitterConfig, seed: u64) -> Result<SessionReport> {
    cfg.validate()?;
    let state = cfg.state()?;
    let threshold = cfg.resolved_threshold(&state);
    let stream = sample_slots(&state, splitter, cfg.slot_count, seed)?;
    let samples = &stream.samples;

    let disclosed = disclosed_slots(cfg.slot_count, cfg.disclosed_count(), seed);
    let pairs: Vec<(u32, u32)> = disclosed.iter().map(|&i| (samples[i].n_a, samples[i].n_b)).collect();
    let disclosed_rho = pearson_counts(pairs.iter().copied());
    let eavesdropping_detected = verdict(&pairs, disclosed_rho, cfg.rho_min);

    let mut is_disclosed = vec![false; samples.len()];
    for &i in &disclosed {
        is_disclosed[i] = true;
    }
    let key_for = |pick: fn(&crate::sampler::SlotSample) -> u32| {
        let counts = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !is_disclosed[*i])
            .map(|(i, s)| (i, pick(s)));
        extract_indexed(counts, threshold)
    };
    let alice_key = key_for(|s| s.n_a);
    let bob_key = key_for(|s| s.n_b);
    let eve_key = key_for(|s| s.n_e);

    Ok(SessionReport {
        threshold,
        agreement_ab: agreement_rate(&alice_key, &bob_key).ok(),
        agreement_ae: agreement_rate(&alice_key, &eve_key).ok(),
        alice_key,
        bob_key,
        eve_key,
        disclosed_slots: disclosed,
        disclosed_rho,
        eavesdropping_detected,
        empirical: stats_of_slice(samples)?,
        stream,
    })
}

/// Aggregate over an ensemble of sessions at one splitter setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSummary {
    pub q: f64,
    pub sessions: usize,
    /// Fraction of sessions flagged; undetermined verdicts count as not flagged.
    pub detection_rate: f64,
    pub mean_disclosed_rho: Option<f64>,
    pub mean_agreement_ab: Option<f64>,
    pub mean_n_e: f64,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs sessions for seeds `base_seed, base_seed + 1, …` and summarizes them.
pub fn detection_experiment(
    cfg: &ProtocolConfig,
    splitter: &SplitterConfig,
    sessions: usize,
    base_seed: u64,
) -> Result<DetectionSummary> {
    if sessions == 0 {
        return Err(domain("at least one session per point is required"));
    }
    let reports = (0..sessions as u64)
        .into_par_iter()
        .map(|i| {
            run_session(cfg, splitter, base_seed.wrapping_add(i)).map(|r| {
                (r.eavesdropping_detected, r.disclosed_rho, r.agreement_ab, r.empirical.mean_e)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = reports.iter().filter(|r| r.0 == Some(true)).count();
    Ok(DetectionSummary {
        q: splitter.q(),
        sessions,
        detection_rate: flagged as f64 / sessions as f64,
        mean_disclosed_rho: mean_of(reports.iter().filter_map(|r| r.1)),
        mean_agreement_ab: mean_of(reports.iter().filter_map(|r| r.2)),
        mean_n_e: mean_of(reports.iter().map(|r| r.3)).unwrap_or(0.0),
    })
}

//! Truncated Fock-basis model of the pair-coherent (TMCC) state
//! `|λ⟩ = I₀(2|λ|)^{-1/2} Σ λⁿ/n! |n,n⟩`.
//!
//! Both modes always carry the same photon number, so the state is fully
//! described by the single-mode law `P(n) = |λ|^{2n} / ((n!)² I₀(2|λ|))`,
//! stored as `ln P(n)` up to a truncation order chosen from a rigorous
//! geometric tail bound.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::special_fn::{bessel_ratio, ln_factorials, log_bessel_i0};

/// Default bound on the probability mass dropped by truncation.
pub const DEFAULT_TAIL_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TmccState {
    lambda_mag: f64,
    lambda_phase: f64,
    n_max: usize,
    log_pmf: Vec<f64>,
    tail_epsilon: f64,
}

/// Covariance and relative correlation of the two mode photon counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCorrelation {
    pub g: f64,
    pub rho: f64,
}

impl TmccState {
    /// Builds the state truncated at the smallest `n_max` for which
    /// `P(n_max)·r/(1−r) ≤ tail_epsilon / 2`, `r = |λ|²/(n_max+1)²`.
    ///
    /// The other half of `tail_epsilon` absorbs rounding in the stored
    /// log-probabilities, which reaches a few `1e-14` near `|λ| = 100`.
    pub fn new(lambda_mag: f64, lambda_phase: f64, tail_epsilon: f64) -> Result<Self> {
        if !lambda_mag.is_finite() || lambda_mag < 0.0 {
            return Err(domain(format!("|lambda| must be finite and >= 0, got {lambda_mag}")));
        }
        if !lambda_phase.is_finite() {
            return Err(domain("lambda phase must be finite"));
        }
        if !(tail_epsilon > 0.0 && tail_epsilon < 1.0) {
            return Err(domain(format!("tail_epsilon must lie in (0, 1), got {tail_epsilon}")));
        }

        if lambda_mag == 0.0 {
            return Ok(Self {
                lambda_mag,
                lambda_phase,
                n_max: 0,
                log_pmf: vec![0.0],
                tail_epsilon,
            });
        }

        let log_norm = log_bessel_i0(2.0 * lambda_mag)?;
        let two_ln_mag = 2.0 * lambda_mag.ln();
        let mag2 = lambda_mag * lambda_mag;
        let mut log_pmf = Vec::new();
        let mut ln_fact = 0.0;
        let mut n = 0usize;
        loop {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let lp = n as f64 * two_ln_mag - 2.0 * ln_fact - log_norm;
            log_pmf.push(lp);

            let next = (n + 1) as f64;
            if next > lambda_mag {
                let r = mag2 / (next * next);
                let tail = lp.exp() * r / (1.0 - r);
                if tail <= 0.5 * tail_epsilon {
                    break;
                }
            }
            n += 1;
        }

        Ok(Self {
            lambda_mag,
            lambda_phase,
            n_max: n,
            log_pmf,
            tail_epsilon,
        })
    }

    pub fn with_default_epsilon(lambda_mag: f64) -> Result<Self> {
        Self::new(lambda_mag, 0.0, DEFAULT_TAIL_EPSILON)
    }

    pub fn lambda_mag(&self) -> f64 {
        self.lambda_mag
    }

    pub fn lambda_phase(&self) -> f64 {
        self.lambda_phase
    }

    /// The complex eigenvalue of `a₁a₂`.
    pub fn lambda(&self) -> Complex64 {
        Complex64::from_polar(self.lambda_mag, self.lambda_phase)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn tail_epsilon(&self) -> f64 {
        self.tail_epsilon
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    /// `P(n)`; zero beyond the truncation order.
    pub fn pmf(&self, n: usize) -> f64 {
        self.log_pmf.get(n).map_or(0.0, |lp| lp.exp())
    }

    /// Linear-domain probabilities `P(0..=n_max)`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_pmf.iter().map(|lp| lp.exp()).collect()
    }

    /// Brute-force `Σ f(n) P(n)` over the truncated support.
    pub fn number_expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.log_pmf
            .iter()
            .enumerate()
            .map(|(n, lp)| f(n) * lp.exp())
            .sum()
    }

    /// `⟨N⟩ = |λ| I₁(2|λ|) / I₀(2|λ|)`, identical for both modes.
    pub fn mean_photon(&self) -> f64 {
        if self.lambda_mag == 0.0 {
            return 0.0;
        }
        self.lambda_mag * self.ratio()
    }

    /// `⟨N²⟩ = ⟨N_A N_B⟩ = |λ|²`.
    pub fn second_moment(&self) -> f64 {
        self.lambda_mag * self.lambda_mag
    }

    /// `σ² = |λ|² (1 − (I₁/I₀)²)`.
    pub fn variance(&self) -> f64 {
        if self.lambda_mag == 0.0 {
            return 0.0;
        }
        let r = self.ratio();
        self.second_moment() * (1.0 - r) * (1.0 + r)
    }

    /// `g_AB = ⟨N_A N_B⟩ − ⟨N_A⟩⟨N_B⟩` and `ρ_AB = g_AB / (σ_A σ_B)`.
    pub fn correlation_ab(&self) -> Result<ModeCorrelation> {
        let var = self.variance();
        if var <= 0.0 {
            return Err(Error::UndefinedCorrelation("vacuum state"));
        }
        let mean = self.mean_photon();
        let g = self.second_moment() - mean * mean;
        Ok(ModeCorrelation { g, rho: g / var })
    }

    /// `⟨λ| a₁†^{j1} a₁^{k1} a₂†^{j2} a₂^{k2} |λ⟩` summed over the stored
    /// Fock amplitudes.
    ///
    /// Only terms with `k1 − j1 = k2 − j2` survive, since both modes must
    /// return to the same diagonal `|m,m⟩` component.
    pub fn expect_moment(&self, j1: usize, k1: usize, j2: usize, k2: usize) -> Complex64 {
        let shift = k1 as i64 - j1 as i64;
        if shift != k2 as i64 - j2 as i64 {
            return Complex64::new(0.0, 0.0);
        }
        let n_max = self.n_max;
        let top = n_max + j1.max(j2);
        let lf = ln_factorials(top);

        let start = k1.max(k2);
        let mut total = 0.0;
        for n in start..=n_max {
            let m = n as i64 - shift;
            if m < 0 || m as usize > n_max {
                continue;
            }
            let m = m as usize;
            // a^k|n⟩ = √(n!/(n−k)!)|n−k⟩, a†^j|n'⟩ = √((n'+j)!/n'!)|n'+j⟩
            let ladder = |k: usize, j: usize| {
                let mid = n - k;
                0.5 * (lf[n] - lf[mid] + lf[mid + j] - lf[mid])
            };
            let log_mag = 0.5 * (self.log_pmf[n] + self.log_pmf[m]) + ladder(k1, j1) + ladder(k2, j2);
            total += log_mag.exp();
        }
        // conj(c_m) c_n carries phase (n − m)·arg λ.
        Complex64::from_polar(total, shift as f64 * self.lambda_phase)
    }

    fn ratio(&self) -> f64 {
        bessel_ratio(2.0 * self.lambda_mag).expect("validated |lambda| is finite and non-negative")
    }
}

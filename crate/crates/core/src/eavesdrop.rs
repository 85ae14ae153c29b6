//! Passive beamsplitter attack on Bob's beam.
//!
//! Eve inserts a splitter with amplitude transmission `p` (reflection `q`,
//! `p² + q² = 1`) so that `a₂ = p·a_B + q·a_E`. Applied to the vacuum
//! generation form of the state this turns every Fock term `|n,n⟩` into
//! `|n⟩_A ⊗ Σ_k C(n,k)^{1/2} p^k q^{n−k} |k⟩_B |n−k⟩_E`, so given Alice's
//! count `n`, Bob's count is `Binomial(n, p²)` and Eve gets the remainder.

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::special_fn::ln_factorials;
use crate::state::TmccState;

/// Values of `p` or `q` within this distance of 0 are snapped to exactly 0.
const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitterConfig {
    p: f64,
    q: f64,
    psi: f64,
    p2: f64,
    q2: f64,
}

impl SplitterConfig {
    /// Splitter with amplitude transmission `p ∈ [0, 1]` towards Bob.
    pub fn from_p(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("splitter amplitude p must lie in [0, 1], got {p}")));
        }
        let p2 = p * p;
        let q2 = 1.0 - p2;
        Ok(Self { p, q: q2.sqrt(), psi: p.acos(), p2, q2 })
    }

    /// Splitter with intensity transmission `p² ∈ [0, 1]`.
    pub fn from_transmittance(p2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p2) {
            return Err(domain(format!("transmittance must lie in [0, 1], got {p2}")));
        }
        let p = p2.sqrt();
        let q2 = 1.0 - p2;
        Ok(Self { p, q: q2.sqrt(), psi: p.acos(), p2, q2 })
    }

    /// Splitter with `p = cos ψ`, `ψ ∈ [0, π/2]`.
    pub fn from_psi(psi: f64) -> Result<Self> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(psi.is_finite() && (-SNAP..=half_pi + SNAP).contains(&psi)) {
            return Err(domain(format!("splitter angle psi must lie in [0, pi/2], got {psi}")));
        }
        let psi = psi.clamp(0.0, half_pi);
        let (mut q, mut p) = psi.sin_cos();
        if p < SNAP {
            p = 0.0;
            q = 1.0;
        }
        if q < SNAP {
            q = 0.0;
            p = 1.0;
        }
        Ok(Self { p, q, psi, p2: p * p, q2: q * q })
    }

    /// No splitter in the line.
    pub fn absent() -> Self {
        Self { p: 1.0, q: 0.0, psi: 0.0, p2: 1.0, q2: 0.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// `p²`, fraction of the intensity reaching Bob.
    pub fn transmittance(&self) -> f64 {
        self.p2
    }

    /// `q²`, fraction of the intensity diverted to Eve.
    pub fn reflectance(&self) -> f64 {
        self.q2
    }

    pub fn is_passive(&self) -> bool {
        self.q == 0.0
    }
}

/// Means, second moments and pairwise correlations of the three counts.
///
/// `rho_*` is `None` when either variance vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripartiteMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_e: f64,
    pub m2_a: f64,
    pub m2_b: f64,
    pub m2_e: f64,
    pub cross_ab: f64,
    pub cross_ae: f64,
    pub g_ab: f64,
    pub g_ae: f64,
    pub rho_ab: Option<f64>,
    pub rho_ae: Option<f64>,
}

impl TripartiteMoments {
    /// Fills covariances and correlations from the raw moments.
    pub fn from_raw(
        [mean_a, mean_b, mean_e]: [f64; 3],
        [m2_a, m2_b, m2_e]: [f64; 3],
        [cross_ab, cross_ae]: [f64; 2],
    ) -> Self {
        let var = |m2: f64, mean: f64| m2 - mean * mean;
        let var_a = var(m2_a, mean_a);
        let var_b = var(m2_b, mean_b);
        let var_e = var(m2_e, mean_e);
        let g_ab = cross_ab - mean_a * mean_b;
        let g_ae = cross_ae - mean_a * mean_e;
        Self {
            mean_a,
            mean_b,
            mean_e,
            m2_a,
            m2_b,
            m2_e,
            cross_ab,
            cross_ae,
            g_ab,
            g_ae,
            rho_ab: relative(g_ab, var_a, var_b),
            rho_ae: relative(g_ae, var_a, var_e),
        }
    }

    pub fn var_a(&self) -> f64 {
        self.m2_a - self.mean_a * self.mean_a
    }

    pub fn var_b(&self) -> f64 {
        self.m2_b - self.mean_b * self.mean_b
    }

    pub fn var_e(&self) -> f64 {
        self.m2_e - self.mean_e * self.mean_e
    }
}

pub(crate) fn relative(cov: f64, var_x: f64, var_y: f64) -> Option<f64> {
    if var_x > 0.0 && var_y > 0.0 {
        Some(cov / (var_x * var_y).sqrt())
    } else {
        None
    }
}

/// Closed-form tripartite moments of the split state.
pub fn split_moments(state: &TmccState, cfg: &SplitterConfig) -> TripartiteMoments {
    let t = cfg.transmittance();
    let r = cfg.reflectance();
    let mean = state.mean_photon();
    let m2 = state.second_moment();
    TripartiteMoments::from_raw(
        [mean, t * mean, r * mean],
        [m2, t * t * m2 + t * r * mean, r * r * m2 + t * r * mean],
        [t * m2, r * m2],
    )
}

/// Joint law of `(n_A, n_B, n_E)` with `n_B + n_E = n_A ≤ n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    /// `rows[n][k] = P(n_A = n, n_B = k, n_E = n − k)`.
    rows: Vec<Vec<f64>>,
}

/// `P(k | n) = C(n,k) t^k r^{n−k}` for every `n ≤ n_max`, in the linear domain.
pub(crate) fn binomial_split_table(n_max: usize, t: f64, r: f64) -> Vec<Vec<f64>> {
    let lf = ln_factorials(n_max);
    let (ln_t, ln_r) = (t.ln(), r.ln());
    // k·ln(0) is -inf for k > 0, but 0^0 = 1.
    let xlny = |k: usize, ln_y: f64| if k == 0 { 0.0 } else { k as f64 * ln_y };
    (0..=n_max)
        .map(|n| {
            (0..=n)
                .map(|k| (lf[n] - lf[k] - lf[n - k] + xlny(k, ln_t) + xlny(n - k, ln_r)).exp())
                .collect()
        })
        .collect()
}

/// Expands the split state into its tripartite photon-number table.
pub fn joint_pmf(state: &TmccState, cfg: &SplitterConfig) -> JointPmf {
    let split = binomial_split_table(state.n_max(), cfg.transmittance(), cfg.reflectance());
    let rows = split
        .into_iter()
        .enumerate()
        .map(|(n, cond)| {
            let pn = state.pmf(n);
            cond.into_iter().map(|w| pn * w).collect()
        })
        .collect();
    JointPmf { rows }
}

impl JointPmf {
    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    /// `P(n_A, n_B, n_A − n_B)`; zero outside the support.
    pub fn prob(&self, n_a: usize, n_b: usize) -> f64 {
        self.rows
            .get(n_a)
            .and_then(|row| row.get(n_b))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(n_A, n_B, n_E, probability)` over the whole table.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(n, row)| row.iter().enumerate().map(move |(k, &w)| (n, k, n - k, w)))
    }

    /// Marginal `P(n_A = n)`.
    pub fn marginal_a(&self, n: usize) -> f64 {
        self.rows.get(n).map_or(0.0, |row| row.iter().sum())
    }

    pub fn total_mass(&self) -> f64 {
        self.iter().map(|(.., w)| w).sum()
    }

    /// Moments by direct summation over the table.
    pub fn moments(&self) -> TripartiteMoments {
        let mut s = [0.0f64; 8];
        for (a, b, e, w) in self.iter() {
            let (a, b, e) = (a as f64, b as f64, e as f64);
            s[0] += a * w;
            s[1] += b * w;
            s[2] += e * w;
            s[3] += a * a * w;
            s[4] += b * b * w;
            s[5] += e * e * w;
            s[6] += a * b * w;
            s[7] += a * e * w;
        }
        TripartiteMoments::from_raw([s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7]])
    }
}

/// One grid point of the correlation surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub lambda: f64,
    pub psi: f64,
    pub splitter: SplitterConfig,
    pub moments: TripartiteMoments,
}

/// Analytic correlations over `lambda_grid × psi_grid`, λ-major order.
pub fn correlation_surface(lambda_grid: &[f64], psi_grid: &[f64]) -> Result<Vec<SurfaceRow>> {
    if lambda_grid.is_empty() || psi_grid.is_empty() {
        return Err(domain("correlation surface grids must be non-empty"));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(domain(format!("surface |lambda| values must be > 0, got {bad}")));
    }
    let splitters = psi_grid
        .iter()
        .map(|&psi| SplitterConfig::from_psi(psi))
        .collect::<Result<Vec<_>>>()?;
    let states = lambda_grid
        .iter()
        .map(|&l| TmccState::with_default_epsilon(l))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<(usize, usize)> = (0..states.len())
        .flat_map(|i| (0..splitters.len()).map(move |j| (i, j)))
        .collect();
    Ok(points
        .par_iter()
        .map(|&(i, j)| SurfaceRow {
            lambda: lambda_grid[i],
            psi: splitters[j].psi(),
            splitter: splitters[j],
            moments: split_moments(&states[i], &splitters[j]),
        })
        .collect())
}

//! Exponentially scaled modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Everything downstream consumes `e^{-x} I_ν(x)`, `ln I₀(x)` or the ratio
//! `I₁/I₀`; raw `I₀(x)` overflows an `f64` near `x ≈ 713`, i.e. `|λ| ≈ 355`.
//!
//! Below [`SERIES_CROSSOVER`] the ascending power series is summed directly
//! (all terms positive, no cancellation). At and above it the Hankel asymptotic
//! expansion is used, truncated at its smallest term; at `x = 25` that term is
//! already below `1e-20`.

use crate::error::{domain, Result};

/// Arguments below this use the power series, the rest the asymptotic expansion.
pub const SERIES_CROSSOVER: f64 = 25.0;

fn check_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(domain(format!("Bessel argument must be finite and >= 0, got {x}")));
    }
    Ok(())
}

/// `e^{-x} I₀(x)`.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(if x < SERIES_CROSSOVER {
        series_i0(x) * (-x).exp()
    } else {
        asymptotic_scaled(0, x)
    })
}

/// `e^{-x} I₁(x)`.
pub fn bessel_i1_scaled(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(if x < SERIES_CROSSOVER {
        series_i1(x) * (-x).exp()
    } else {
        asymptotic_scaled(1, x)
    })
}

/// `I₁(x) / I₀(x)`, in `[0, 1)`.
pub fn bessel_ratio(x: f64) -> Result<f64> {
    check_arg(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(bessel_i1_scaled(x)? / bessel_i0_scaled(x)?)
}

/// `ln I₀(x)`, finite for every finite `x`.
pub fn log_bessel_i0(x: f64) -> Result<f64> {
    Ok(x + bessel_i0_scaled(x)?.ln())
}

/// Unscaled `Σ (x/2)^{2k} / (k!)²`.
pub(crate) fn series_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > f64::EPSILON * 1e-2 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Unscaled `Σ (x/2)^{2k+1} / (k!(k+1)!)`.
pub(crate) fn series_i1(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    let mut k = 1.0;
    while term > f64::EPSILON * 1e-2 * sum {
        term *= q / (k * (k + 1.0));
        sum += term;
        k += 1.0;
    }
    sum
}

/// `e^{-x} I_ν(x) ~ (2πx)^{-1/2} Σ_k (-1)^k a_k(ν) x^{-k}` for large `x`.
pub(crate) fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(order * order);
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = term * -(mu - odd * odd) / (8.0 * k * x);
        // Divergent series: stop at the smallest term.
        if next.abs() >= term.abs() || next.abs() < f64::EPSILON * 1e-3 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values from 40-digit arbitrary precision evaluation.
    const I0S: [(f64, f64); 6] = [
        (2.0, 0.308_508_322_553_671_04),
        (4.0, 0.207_001_921_223_986_70),
        (10.0, 0.127_833_337_163_428_61),
        (25.0, 0.080_196_773_547_436_708),
        (40.0, 0.063_278_279_875_235_330),
        (200.0, 0.028_227_159_949_111_916),
    ];
    const I1S: [(f64, f64); 6] = [
        (2.0, 0.215_269_289_248_937_66),
        (4.0, 0.178_750_839_502_435_33),
        (10.0, 0.121_262_681_384_455_52),
        (25.0, 0.078_576_113_319_292_772),
        (40.0, 0.062_482_229_074_442_061),
        (200.0, 0.028_156_503_394_832_918),
    ];

    #[test]
    fn reference_values() {
        for (x, want) in I0S {
            assert!(rel(bessel_i0_scaled(x).unwrap(), want) < 1e-13, "i0s({x})");
        }
        for (x, want) in I1S {
            assert!(rel(bessel_i1_scaled(x).unwrap(), want) < 1e-13, "i1s({x})");
        }
    }

    #[test]
    fn zero_argument() {
        assert_eq!(bessel_i0_scaled(0.0).unwrap(), 1.0);
        assert_eq!(bessel_i1_scaled(0.0).unwrap(), 0.0);
        assert_eq!(bessel_ratio(0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i0(0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        for x in [-1.0, f64::NAN, f64::INFINITY] {
            assert!(bessel_i0_scaled(x).is_err());
            assert!(bessel_i1_scaled(x).is_err());
            assert!(bessel_ratio(x).is_err());
            assert!(log_bessel_i0(x).is_err());
        }
    }

    #[test]
    fn series_and_asymptotic_overlap() {
        let mut x = 20.0;
        while x <= 40.0 {
            let s0 = series_i0(x) * (-x).exp();
            let s1 = series_i1(x) * (-x).exp();
            assert!(rel(asymptotic_scaled(0, x), s0) < 1e-9, "I0 at {x}");
            assert!(rel(asymptotic_scaled(1, x), s1) < 1e-9, "I1 at {x}");
            x += 0.5;
        }
    }

    #[test]
    fn branches_agree_at_crossover() {
        let x = SERIES_CROSSOVER;
        assert!(rel(asymptotic_scaled(0, x), series_i0(x) * (-x).exp()) < 1e-13);
        assert!(rel(asymptotic_scaled(1, x), series_i1(x) * (-x).exp()) < 1e-13);
    }

    #[test]
    fn ln_factorials_small() {
        let t = ln_factorials(5);
        assert_eq!(t[0], 0.0);
        assert!((t[5] - 120f64.ln()).abs() < 1e-14);
    }
}

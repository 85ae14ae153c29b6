//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p tmcc-cli --test acceptance`.

use std::f64::consts::FRAC_PI_2;
use std::process::Command;
use std::time::{Duration, Instant};

use statrs::distribution::{ChiSquared, ContinuousCDF};
use tmcc_core::sampler::stats_of_slice;
use tmcc_core::{
    detection_experiment, empirical_stats, joint_pmf, run_session, sample_slots, split_moments, ProtocolConfig,
    SlotSample, SplitterConfig, TmccState, TripartiteMoments,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn state(mag: f64) -> TmccState {
    TmccState::with_default_epsilon(mag).expect("valid |lambda|")
}

fn bessel_ratio_oracle(x: f64) -> f64 {
    // I1/I0 via the power series, evaluated independently of the library.
    let (mut i0, mut i1) = (0.0, 0.0);
    let mut term0 = 1.0; // (x/2)^{2k} / (k!)^2
    for k in 0..200 {
        let kf = k as f64;
        i0 += term0;
        i1 += term0 * (x / 2.0) / (kf + 1.0);
        term0 *= (x / 2.0).powi(2) / ((kf + 1.0) * (kf + 1.0));
    }
    i1 / i0
}

const GRID: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

fn moment_identities() -> Check {
    let mut worst: f64 = 0.0;
    for mag in GRID {
        let s = state(mag);
        let m1 = s.number_expectation(|n| n as f64);
        let m2 = s.number_expectation(|n| (n * n) as f64);
        let r = bessel_ratio_oracle(2.0 * mag);
        let e2 = rel(m2, mag * mag);
        let ev = rel(m2 - m1 * m1, mag * mag * (1.0 - r * r));
        ensure(e2 <= 1e-10, format!("|lambda|={mag}: <N^2> rel err {e2:e}"))?;
        ensure(ev <= 1e-10, format!("|lambda|={mag}: variance rel err {ev:e}"))?;
        worst = worst.max(e2).max(ev);
    }
    Ok(format!("max rel err {worst:.1e}"))
}

fn perfect_correlation() -> Check {
    for mag in GRID {
        let rho = state(mag).correlation_ab().map_err(|e| e.to_string())?.rho;
        ensure((rho - 1.0).abs() <= 1e-12, format!("|lambda|={mag}: analytic rho {rho}"))?;
    }
    for (i, mag) in GRID.into_iter().enumerate() {
        let stream = sample_slots(&state(mag), &SplitterConfig::absent(), 100_000, 1000 + i as u64)
            .map_err(|e| e.to_string())?;
        let rho = empirical_stats(&stream).map_err(|e| e.to_string())?.rho_ab;
        ensure(rho == Some(1.0), format!("|lambda|={mag}: empirical rho {rho:?}"))?;
    }
    Ok("analytic within 1e-12, empirical exactly 1".into())
}

fn eigenvalue_property() -> Check {
    let mut worst: f64 = 0.0;
    for (mag, phase) in [(0.5, 0.3), (1.0, 1.1), (2.0, -2.4)] {
        let s = TmccState::new(mag, phase, 1e-12).map_err(|e| e.to_string())?;
        let lam = s.lambda();
        // ‖(a₁a₂ − λ)|λ⟩‖² = ⟨a₁†a₂†a₁a₂⟩ − λ̄⟨a₁a₂⟩ − λ⟨a₁†a₂†⟩ + |λ|²
        let residual = s.expect_moment(1, 1, 1, 1) - lam.conj() * s.expect_moment(0, 1, 0, 1)
            - lam * s.expect_moment(1, 0, 1, 0)
            + lam.norm_sqr();
        let bound = 1e-9 * mag * mag;
        ensure(residual.norm() <= bound, format!("|lambda|={mag}: residual {}", residual.norm()))?;
        worst = worst.max(residual.norm() / (mag * mag));
    }
    Ok(format!("max residual/|lambda|^2 {worst:.1e}"))
}

fn fields(m: &TripartiteMoments) -> [(&'static str, Option<f64>); 12] {
    [
        ("mean_a", Some(m.mean_a)),
        ("mean_b", Some(m.mean_b)),
        ("mean_e", Some(m.mean_e)),
        ("m2_a", Some(m.m2_a)),
        ("m2_b", Some(m.m2_b)),
        ("m2_e", Some(m.m2_e)),
        ("cross_ab", Some(m.cross_ab)),
        ("cross_ae", Some(m.cross_ae)),
        ("g_ab", Some(m.g_ab)),
        ("g_ae", Some(m.g_ae)),
        ("rho_ab", m.rho_ab),
        ("rho_ae", m.rho_ae),
    ]
}

fn splitter_moments() -> Check {
    for mag in GRID {
        let s = state(mag);
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let cfg = SplitterConfig::from_transmittance(t).map_err(|e| e.to_string())?;
            let closed = fields(&split_moments(&s, &cfg));
            let summed = fields(&joint_pmf(&s, &cfg).moments());
            for ((name, c), (_, j)) in closed.iter().zip(&summed) {
                match (c, j) {
                    (Some(c), Some(j)) => {
                        // zero-valued entries (e.g. Eve's moments at p² = 1) compared absolutely
                        let err = if c.abs() < 1e-300 { j.abs() } else { rel(*j, *c) };
                        ensure(err <= 1e-9, format!("|lambda|={mag} p2={t} {name}: {c} vs {j}"))?;
                    }
                    (None, None) => {}
                    _ => return Err(format!("|lambda|={mag} p2={t} {name}: definedness differs")),
                }
            }
        }
    }
    let s = state(1.0);
    let cfg = SplitterConfig::from_transmittance(0.5).map_err(|e| e.to_string())?;
    let rho = split_moments(&s, &cfg).rho_ab.ok_or("rho_ab undefined")?;
    let r = bessel_ratio_oracle(2.0);
    let (mean, var) = (r, 1.0 - r * r);
    let closed = 0.5f64.sqrt() * var.sqrt() / (0.5 * var + 0.5 * mean).sqrt();
    // 30-digit evaluation of the closed form: 0.650959515069...
    const RHO_BALANCED: f64 = 0.650_959_5;
    ensure((rho - closed).abs() <= 1e-12, format!("rho_ab {rho} vs closed form {closed}"))?;
    ensure((rho - RHO_BALANCED).abs() <= 1e-6, format!("rho_ab {rho} vs {RHO_BALANCED}"))?;
    Ok(format!("20 grid points within 1e-9; rho_ab(1, 0.5) = {rho:.10}"))
}

fn batch_errors(samples: &[SlotSample]) -> Vec<Option<f64>> {
    let batches = 100;
    let size = samples.len() / batches;
    let per: Vec<_> = samples
        .chunks(size)
        .take(batches)
        .map(|c| fields(&stats_of_slice(c).expect("non-empty batch")).map(|(_, v)| v))
        .collect();
    (0..12)
        .map(|i| {
            let vals: Vec<f64> = per.iter().map(|b| b[i]).collect::<Option<_>>()?;
            let mean = vals.iter().sum::<f64>() / batches as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
            Some((var / batches as f64).sqrt())
        })
        .collect()
}

fn monte_carlo_fidelity() -> Check {
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for (k, mag) in GRID.into_iter().enumerate() {
        let s = state(mag);
        for (j, t) in [0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
            let cfg = SplitterConfig::from_transmittance(t).map_err(|e| e.to_string())?;
            let stream = sample_slots(&s, &cfg, n, 5000 + 10 * k as u64 + j as u64).map_err(|e| e.to_string())?;
            let got = fields(&empirical_stats(&stream).map_err(|e| e.to_string())?);
            let want = fields(&split_moments(&s, &cfg));
            let se = batch_errors(&stream.samples);
            for (((name, g), (_, w)), e) in got.iter().zip(&want).zip(&se) {
                match (g, w, e) {
                    (Some(g), Some(w), Some(e)) if *e > 0.0 => {
                        let z = (g - w).abs() / e;
                        ensure(z <= 4.0, format!("|lambda|={mag} p2={t} {name}: {z:.2} SE"))?;
                        worst = worst.max(z);
                    }
                    (Some(g), Some(w), _) => {
                        ensure((g - w).abs() <= 1e-12, format!("|lambda|={mag} p2={t} {name}: {g} vs {w}"))?
                    }
                    (None, None, _) => {}
                    _ => return Err(format!("|lambda|={mag} p2={t} {name}: definedness differs")),
                }
            }
        }

        let stream = sample_slots(&s, &SplitterConfig::absent(), n, 6000 + k as u64).map_err(|e| e.to_string())?;
        let mut observed = vec![0usize; s.n_max() + 1];
        for x in &stream.samples {
            observed[x.n_a as usize] += 1;
        }
        let expected: Vec<f64> = s.probabilities().iter().map(|p| p * n as f64).collect();
        let last = expected.iter().rposition(|&e| e >= 5.0).expect("some populated bin");
        let mut bins: Vec<(f64, f64)> = (0..last).map(|i| (observed[i] as f64, expected[i])).collect();
        bins.push((
            observed[last..].iter().sum::<usize>() as f64,
            expected[last..].iter().sum::<f64>(),
        ));
        let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let critical = ChiSquared::new((bins.len() - 1) as f64)
            .map_err(|e| e.to_string())?
            .inverse_cdf(0.999);
        ensure(stat < critical, format!("|lambda|={mag}: chi2 {stat:.2} >= {critical:.2}"))?;
    }
    Ok(format!("16 configurations, worst deviation {worst:.2} SE; chi-square passed"))
}

fn protocol_without_eve() -> Check {
    let cfg = ProtocolConfig::new(1.0, 10_000);
    let mut bits = 0;
    for seed in 0..100 {
        let r = run_session(&cfg, &SplitterConfig::absent(), seed).map_err(|e| e.to_string())?;
        ensure(
            r.alice_key.bits == r.bob_key.bits && !r.alice_key.is_empty(),
            format!("seed {seed}: keys differ"),
        )?;
        bits += r.alice_key.len();
    }
    Ok(format!("100 sessions identical, {bits} key bits total"))
}

fn detection_behavior() -> Check {
    let mut cfg = ProtocolConfig::new(1.0, 100_000);
    cfg.rho_min = 0.9;
    let mut rates = Vec::new();
    for q2 in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let splitter = SplitterConfig::from_transmittance(1.0 - q2).map_err(|e| e.to_string())?;
        let summary = detection_experiment(&cfg, &splitter, 100, 0).map_err(|e| e.to_string())?;
        rates.push((q2, summary.detection_rate));
    }
    ensure(rates[0].1 == 0.0, format!("rate at q = 0 is {}", rates[0].1))?;
    for &(q2, rate) in &rates[2..] {
        ensure(rate >= 0.99, format!("rate at q^2 = {q2} is {rate}"))?;
    }
    ensure(rates.windows(2).all(|w| w[0].1 <= w[1].1), format!("not monotone: {rates:?}"))?;
    let listing: Vec<String> = rates.iter().map(|(q2, r)| format!("{q2}:{r}")).collect();
    Ok(format!("rates by q^2 {}", listing.join(" ")))
}

fn tmcc(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tmcc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    Ok(out.stdout)
}

fn surface_structure() -> Check {
    let csv = String::from_utf8(tmcc(&["sweep", "--precision", "17"])?).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    ensure(lines.next() == Some("lambda,psi,p,g_ab,g_ae,rho_ab,rho_ae"), "header")?;
    let rows: Vec<Vec<Option<f64>>> = lines
        .map(|l| l.split(',').map(|v| v.parse().ok()).collect())
        .collect();
    ensure(rows.len() == 50 * 50, format!("{} rows", rows.len()))?;
    for (i, lambda_rows) in rows.chunks(50).enumerate() {
        let first = &lambda_rows[0];
        let last = &lambda_rows[49];
        ensure(first[1] == Some(0.0) && first[5] == Some(1.0), format!("lambda row {i}: psi = 0 rho_ab"))?;
        ensure(
            (last[1].unwrap_or(0.0) - FRAC_PI_2).abs() < 1e-12 && last[6] == Some(1.0) && last[5].is_none(),
            format!("lambda row {i}: psi = pi/2 endpoint"),
        )?;
        // ψ ↔ π/2 − ψ swaps p² and q², hence Bob and Eve.
        for k in 0..50 {
            let (a, b) = (&lambda_rows[k], &lambda_rows[49 - k]);
            for (x, y) in [(a[3], b[4]), (a[5], b[6])] {
                match (x, y) {
                    (Some(x), Some(y)) => ensure(
                        (x - y).abs() <= 1e-9 * x.abs().max(1e-300),
                        format!("lambda row {i}, psi index {k}: {x} vs {y}"),
                    )?,
                    (None, None) => {}
                    _ => return Err(format!("lambda row {i}, psi index {k}: definedness")),
                }
            }
        }
        // ρ_AE rises monotonically towards 1 as ψ → π/2.
        let rho_ae: Vec<f64> = lambda_rows[1..].iter().map(|r| r[6].unwrap_or(f64::NAN)).collect();
        ensure(rho_ae.windows(2).all(|w| w[0] <= w[1] + 1e-15), format!("lambda row {i}: rho_ae not monotone"))?;
    }
    Ok("2500 rows; endpoints and exchange symmetry hold".into())
}

fn reproducibility() -> Check {
    let dir = std::env::temp_dir().join(format!("tmcc-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let dump = dir.join("slots.txt");
    let dump = dump.to_str().ok_or("non-utf8 temp path")?;
    let runs: [Vec<&str>; 4] = [
        vec!["stats", "--lambda", "2.5"],
        vec!["sweep", "--lambda", "0.1:5:20", "--psi", "0:1.5707963267948966:20"],
        vec!["session", "--slots", "20000", "--p", "0.9", "--seed", "42", "--dump-slots", dump],
        vec!["detect", "--slots", "2000", "--seeds", "20", "--seed", "7"],
    ];
    for args in &runs {
        let first = tmcc(args)?;
        let first_dump = std::fs::read(dump).ok();
        let second = tmcc(args)?;
        ensure(first == second, format!("{} output differs", args[0]))?;
        ensure(first_dump == std::fs::read(dump).ok(), "slot dump differs")?;
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok("4 commands byte-identical across reruns".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 moment identities", moment_identities, Some(Duration::from_secs(1))),
        ("2 perfect correlation", perfect_correlation, None),
        ("3 eigenvalue property", eigenvalue_property, Some(Duration::from_secs(1))),
        ("4 splitter moments", splitter_moments, Some(Duration::from_secs(5))),
        ("5 Monte Carlo fidelity", monte_carlo_fidelity, Some(Duration::from_secs(30))),
        ("6 protocol without eavesdropper", protocol_without_eve, Some(Duration::from_secs(30))),
        ("7 detection behavior", detection_behavior, Some(Duration::from_secs(120))),
        ("8 correlation surfaces", surface_structure, Some(Duration::from_secs(5))),
        ("9 reproducibility", reproducibility, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("runtime {elapsed:.2?} exceeds {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("[PASS] {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

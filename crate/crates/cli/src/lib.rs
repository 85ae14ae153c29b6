//! `tmcc` command implementations.
//!
//! Every command renders into a `String` first so that output bytes depend
//! only on the parsed arguments; [`run`] then writes it to `--out` or stdout.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use tmcc_core::protocol::{DEFAULT_DISCLOSE_FRACTION, DEFAULT_RHO_MIN};
use tmcc_core::sampler::RNG_ALGORITHM;
use tmcc_core::{
    correlation_surface, detection_experiment, run_session, KeyMaterial, ProtocolConfig, SplitterConfig,
    TmccState, TripartiteMoments, DEFAULT_TAIL_EPSILON,
};

pub const SWEEP_HEADER: &str = "lambda,psi,p,g_ab,g_ae,rho_ab,rho_ae";
pub const DETECT_HEADER: &str = "lambda,q,detection_rate,mean_disclosed_rho,mean_agreement_ab,mean_n_e";

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "tmcc", version, about = "Twin-beam (pair-coherent) key distribution simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format; defaults to csv, except `session` which defaults to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Significant digits for floating-point output.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=17))]
    pub precision: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Photon statistics of a single state.
    #[command(allow_negative_numbers = true)]
    Stats(StatsArgs),
    /// Analytic correlation surfaces over a (lambda, psi) grid.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// One protocol session, optionally under attack.
    #[command(allow_negative_numbers = true)]
    Session(SessionArgs),
    /// Detection rates over an ensemble of seeds for several interception strengths.
    #[command(allow_negative_numbers = true)]
    Detect(DetectArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_TAIL_EPSILON)]
    pub tail_epsilon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Comma-separated values or `start:end:count`.
    #[arg(long, default_value = "0.1:5:50")]
    pub lambda: String,
    /// Splitter angles (radians), comma-separated or `start:end:count`; default 50 points over [0, pi/2].
    #[arg(long, conflicts_with = "p")]
    pub psi: Option<String>,
    /// Splitter amplitudes instead of angles.
    #[arg(long)]
    pub p: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProtocolArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 10_000)]
    pub slots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RHO_MIN)]
    pub rho_min: f64,
    #[arg(long, default_value_t = DEFAULT_DISCLOSE_FRACTION)]
    pub disclose_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_TAIL_EPSILON)]
    pub tail_epsilon: f64,
    /// Bit threshold; defaults to the mean photon number.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl ProtocolArgs {
    fn config(&self) -> ProtocolConfig {
        ProtocolConfig {
            lambda_mag: self.lambda,
            slot_count: self.slots,
            threshold: self.threshold,
            disclose_fraction: self.disclose_fraction,
            rho_min: self.rho_min,
            tail_epsilon: self.tail_epsilon,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SessionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub protocol: ProtocolArgs,
    /// Splitter amplitude towards Bob (1 = no eavesdropper).
    #[arg(long, conflicts_with = "psi")]
    pub p: Option<f64>,
    /// Splitter angle, p = cos(psi).
    #[arg(long)]
    pub psi: Option<f64>,
    /// Write per-slot counts to this file.
    #[arg(long)]
    pub dump_slots: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub protocol: ProtocolArgs,
    /// Eve's amplitude fractions q, comma-separated or `start:end:count`.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub q: String,
    /// Sessions per grid point, seeds `seed..seed + seeds`.
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
}

/// Rounds to `digits` significant digits and prints the shortest form.
pub fn fmt_num(x: f64, digits: u8) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", usize::from(digits) - 1, x)
        .parse()
        .expect("formatted float parses");
    let mag = rounded.abs();
    if (1e-5..1e16).contains(&mag) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

fn round_num(x: f64, digits: u8) -> Value {
    let rounded: f64 = fmt_num(x, digits).parse().expect("formatted float parses");
    json!(rounded)
}

fn fmt_opt(x: Option<f64>, digits: u8) -> String {
    x.map(|v| fmt_num(v, digits)).unwrap_or_default()
}

fn num_opt(x: Option<f64>, digits: u8) -> Value {
    x.map_or(Value::Null, |v| round_num(v, digits))
}

/// Parses `a,b,c` or `start:end:count` (inclusive, evenly spaced).
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, end, count] => {
            let start: f64 = start.trim().parse().with_context(|| format!("bad grid start in {text:?}"))?;
            let end: f64 = end.trim().parse().with_context(|| format!("bad grid end in {text:?}"))?;
            let count: usize = count.trim().parse().with_context(|| format!("bad grid count in {text:?}"))?;
            match count {
                0 => bail!("grid {text:?} has no points"),
                1 => vec![start],
                _ => (0..count)
                    .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                    .collect(),
            }
        }
        [_] => text
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value {v:?}")))
            .collect::<Result<_>>()?,
        _ => bail!("grid {text:?} must be a comma list or start:end:count"),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        bail!("grid {text:?} must contain finite values");
    }
    Ok(grid)
}

fn splitter(p: Option<f64>, psi: Option<f64>) -> Result<SplitterConfig> {
    Ok(match (p, psi) {
        (Some(_), Some(_)) => bail!("--p and --psi are mutually exclusive"),
        (Some(p), None) => SplitterConfig::from_p(p)?,
        (None, Some(psi)) => SplitterConfig::from_psi(psi)?,
        (None, None) => SplitterConfig::absent(),
    })
}

fn wrap_json(cli: &Cli, result: Value) -> String {
    let doc = json!({ "config": cli, "result": result });
    let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
    s.push('\n');
    s
}

fn moments_fields(m: &TripartiteMoments) -> [(&'static str, Option<f64>); 12] {
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

pub fn cmd_stats(cli: &Cli, args: &StatsArgs) -> Result<String> {
    let digits = cli.precision;
    let state = TmccState::new(args.lambda, 0.0, args.tail_epsilon)?;
    let corr = state.correlation_ab().ok();
    let scalars = [
        ("lambda", Some(args.lambda)),
        ("tail_epsilon", Some(args.tail_epsilon)),
        ("n_max", Some(state.n_max() as f64)),
        ("mean_n", Some(state.mean_photon())),
        ("second_moment", Some(state.second_moment())),
        ("variance", Some(state.variance())),
        ("g_ab", Some(corr.map_or(0.0, |c| c.g))),
        ("rho_ab", corr.map(|c| c.rho)),
    ];
    let pmf = state.probabilities();
    Ok(match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = String::from("quantity,value\n");
            for (k, v) in scalars {
                writeln!(out, "{k},{}", fmt_opt(v, digits))?;
            }
            for (n, p) in pmf.iter().enumerate() {
                writeln!(out, "pmf_{n},{}", fmt_num(*p, digits))?;
            }
            out
        }
        Format::Json => {
            let mut obj: Map<String, Value> =
                scalars.iter().map(|(k, v)| (k.to_string(), num_opt(*v, digits))).collect();
            obj.insert("n_max".into(), json!(state.n_max()));
            obj.insert("pmf".into(), pmf.iter().map(|p| round_num(*p, digits)).collect());
            wrap_json(cli, Value::Object(obj))
        }
    })
}

pub fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<String> {
    let digits = cli.precision;
    let lambdas = parse_grid(&args.lambda)?;
    let psis = match (&args.psi, &args.p) {
        (Some(_), Some(_)) => bail!("--p and --psi are mutually exclusive"),
        (Some(psi), None) => parse_grid(psi)?,
        (None, Some(p)) => parse_grid(p)?
            .into_iter()
            .map(|p| SplitterConfig::from_p(p).map(|s| s.psi()))
            .collect::<tmcc_core::Result<_>>()?,
        (None, None) => (0..50).map(|i| i as f64 * FRAC_PI_2 / 49.0).collect(),
    };
    let rows = correlation_surface(&lambdas, &psis)?;
    Ok(match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = format!("{SWEEP_HEADER}\n");
            for r in &rows {
                let m = &r.moments;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_num(r.lambda, digits),
                    fmt_num(r.psi, digits),
                    fmt_num(r.splitter.p(), digits),
                    fmt_num(m.g_ab, digits),
                    fmt_num(m.g_ae, digits),
                    fmt_opt(m.rho_ab, digits),
                    fmt_opt(m.rho_ae, digits),
                )?;
            }
            out
        }
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "lambda": round_num(r.lambda, digits),
                        "psi": round_num(r.psi, digits),
                        "p": round_num(r.splitter.p(), digits),
                        "g_ab": round_num(r.moments.g_ab, digits),
                        "g_ae": round_num(r.moments.g_ae, digits),
                        "rho_ab": num_opt(r.moments.rho_ab, digits),
                        "rho_ae": num_opt(r.moments.rho_ae, digits),
                    })
                })
                .collect();
            wrap_json(cli, Value::Array(list))
        }
    })
}

fn key_fields(name: &str, key: &KeyMaterial) -> [(String, Value); 2] {
    [
        (format!("{name}_key_bits"), json!(key.len())),
        (format!("{name}_key_hex"), json!(hex::encode(key.packed()))),
    ]
}

pub fn cmd_session(cli: &Cli, args: &SessionArgs) -> Result<String> {
    let digits = cli.precision;
    let splitter = splitter(args.p, args.psi)?;
    let cfg = args.protocol.config();
    let report = run_session(&cfg, &splitter, args.protocol.seed)?;

    if let Some(path) = &args.dump_slots {
        let file = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        report.stream.write_columns(&mut w)?;
        std::io::Write::flush(&mut w)?;
    }

    let mut fields: Vec<(String, Value)> = vec![
        ("lambda".into(), round_num(cfg.lambda_mag, digits)),
        ("p".into(), round_num(splitter.p(), digits)),
        ("q".into(), round_num(splitter.q(), digits)),
        ("slots".into(), json!(cfg.slot_count)),
        ("seed".into(), json!(args.protocol.seed)),
        ("rng".into(), json!(RNG_ALGORITHM)),
        ("threshold".into(), round_num(report.threshold, digits)),
        ("disclosed_slots".into(), json!(report.disclosed_slots.len())),
        ("disclosed_rho".into(), num_opt(report.disclosed_rho, digits)),
        ("rho_min".into(), round_num(cfg.rho_min, digits)),
        ("eavesdropping_detected".into(), json!(report.eavesdropping_detected)),
        ("agreement_ab".into(), num_opt(report.agreement_ab, digits)),
        ("agreement_ae".into(), num_opt(report.agreement_ae, digits)),
    ];
    fields.extend(key_fields("alice", &report.alice_key));
    fields.extend(key_fields("bob", &report.bob_key));
    fields.extend(key_fields("eve", &report.eve_key));
    fields.extend(
        moments_fields(&report.empirical)
            .into_iter()
            .map(|(k, v)| (format!("empirical_{k}"), num_opt(v, digits))),
    );

    Ok(match cli.format.unwrap_or(Format::Json) {
        Format::Json => wrap_json(cli, Value::Object(fields.into_iter().collect())),
        Format::Csv => {
            let mut out = String::from("field,value\n");
            for (k, v) in fields {
                let v = match v {
                    Value::Null => String::new(),
                    Value::String(s) => s,
                    Value::Number(n) if n.is_f64() => fmt_num(n.as_f64().expect("f64 number"), digits),
                    other => other.to_string(),
                };
                writeln!(out, "{k},{v}")?;
            }
            out
        }
    })
}

pub fn cmd_detect(cli: &Cli, args: &DetectArgs) -> Result<String> {
    let digits = cli.precision;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let cfg = args.protocol.config();
    cfg.validate()?;
    let splitters = parse_grid(&args.q)?
        .into_iter()
        .map(|q| {
            if !(0.0..=1.0).contains(&q) {
                bail!("q must lie in [0, 1], got {q}");
            }
            Ok(SplitterConfig::from_p((1.0 - q * q).sqrt())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = splitters
        .par_iter()
        .map(|s| detection_experiment(&cfg, s, args.seeds, args.protocol.seed))
        .collect::<tmcc_core::Result<Vec<_>>>()?;

    Ok(match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = format!("{DETECT_HEADER}\n");
            for s in &summaries {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt_num(cfg.lambda_mag, digits),
                    fmt_num(s.q, digits),
                    fmt_num(s.detection_rate, digits),
                    fmt_opt(s.mean_disclosed_rho, digits),
                    fmt_opt(s.mean_agreement_ab, digits),
                    fmt_num(s.mean_n_e, digits),
                )?;
            }
            out
        }
        Format::Json => {
            let list: Vec<Value> = summaries
                .iter()
                .map(|s| {
                    json!({
                        "lambda": round_num(cfg.lambda_mag, digits),
                        "q": round_num(s.q, digits),
                        "detection_rate": round_num(s.detection_rate, digits),
                        "mean_disclosed_rho": num_opt(s.mean_disclosed_rho, digits),
                        "mean_agreement_ab": num_opt(s.mean_agreement_ab, digits),
                        "mean_n_e": round_num(s.mean_n_e, digits),
                    })
                })
                .collect();
            wrap_json(cli, Value::Array(list))
        }
    })
}

/// Renders the command's output.
pub fn render(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Stats(a) => cmd_stats(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Session(a) => cmd_session(cli, a),
        Command::Detect(a) => cmd_detect(cli, a),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let text = render(cli)?;
    match &cli.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

//! Command-line front end: DoF curves, single constructions, seed sweeps and
//! the lemma battery.
//!
//! Exit codes: 0 success, 1 verification or lemma failure, 2 usage error,
//! 3 construction failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrc_align::dof::{asymptotic_dof, outer_bound_per_user, per_relay_dim, ratio_capacity_tight};
use mrc_align::lemmas::{run_battery, LemmaBattery};
use mrc_align::pipeline::{build, BuildOptions, Construction};
use mrc_align::wire::ratio_text;
use mrc_align::{Error, Rational};
use num_rational::Ratio;
use rayon::prelude::*;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;

/// SNR points of the rate-slope check.
pub const SLOPE_SNR_DB: [f64; 3] = [40.0, 50.0, 60.0];
/// Relative slope error accepted for one seed.
pub const SLOPE_TOLERANCE: f64 = 0.05;
/// Fraction of seeds whose slope must be within tolerance.
pub const SLOPE_QUORUM: f64 = 0.9;

/// Largest denominator of the default ratio grid.
pub const DEFAULT_GRID_DENOMINATOR: i64 = 48;

#[derive(Debug, Parser)]
#[command(name = "mrc-align", version, about = "Signal-space alignment for MIMO multiway relay channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a DoF curve against M/N as CSV.
    Curve(CurveArgs),
    /// Construct and verify one instance; JSON dump.
    Build(BuildArgs),
    /// Construct and verify over many seeds; JSON summary.
    Verify(VerifyArgs),
    /// Run the Monte Carlo lemma battery; JSON results.
    Lemmas(LemmaArgs),
}

/// User count: an integer of at least 3, or `inf` for the large-K limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserCount {
    Finite(usize),
    Infinite,
}

fn parse_user_count(s: &str) -> Result<UserCount, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(UserCount::Infinite);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 3 => Ok(UserCount::Finite(k)),
        Ok(k) => Err(format!("K must be at least 3, got {k}")),
        Err(_) => Err(format!("expected an integer or `inf`, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveMode {
    Outer,
    Basic,
    Improved,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_parser = parse_user_count)]
    pub k: UserCount,
    #[arg(long, value_enum)]
    pub mode: CurveMode,
    /// Comma-separated ratios (`7/16`, `0.3`), or `grid:Q` for every reduced
    /// p/q in (0, 1] with q <= Q. Defaults to `grid:48`.
    #[arg(long)]
    pub ratios: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Halve every emitted DoF value.
    #[arg(long)]
    pub half_duplex: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable relay antennas to reach a corner point where that helps.
    #[arg(long)]
    pub improved: bool,
    /// Repeat one channel draw on every extension slot.
    #[arg(long)]
    pub identical_blocks: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub k: u64,
    /// Number of seeds, run as `first-seed .. first-seed + seeds`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long)]
    pub improved: bool,
    /// Also estimate the sum-rate slope at 40, 50 and 60 dB.
    #[arg(long)]
    pub snr_sweep: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON parameter grid; missing sections use the built-in grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Output text plus exit code of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub text: String,
}

impl Outcome {
    fn new(code: i32, text: String) -> Self {
        Self { code, text }
    }
}

/// Runs a parsed command and writes its output to `--out` or `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let (outcome, out) = match cli.command {
        Command::Curve(a) => (cmd_curve(&a), a.out),
        Command::Build(a) => (cmd_build(&a), a.out),
        Command::Verify(a) => (cmd_verify(&a), a.out),
        Command::Lemmas(a) => (cmd_lemmas(&a), a.out),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = emit(&outcome.text, out.as_deref(), stdout) {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_USAGE;
    }
    outcome.code
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

/// Parses a ratio list or grid description into sorted, deduplicated positive
/// rationals.
pub fn parse_ratios(arg: Option<&str>) -> Result<Vec<Rational>, String> {
    let arg = arg.unwrap_or("grid:48").trim();
    let mut out = if let Some(q) = arg.strip_prefix("grid:") {
        let q: i64 = q
            .trim()
            .parse()
            .map_err(|_| format!("invalid grid denominator {q:?}"))?;
        if q < 1 {
            return Err("grid denominator must be positive".into());
        }
        default_grid(q)
    } else {
        arg.split(',').map(parse_ratio).collect::<Result<Vec<_>, _>>()?
    };
    out.sort();
    out.dedup();
    Ok(out)
}

/// Every reduced `p/q` in `(0, 1]` with `q <= max_den`.
pub fn default_grid(max_den: i64) -> Vec<Rational> {
    let mut out: Vec<Rational> = (1..=max_den)
        .flat_map(|q| (1..=q).map(move |p| Ratio::new(p, q)))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn parse_ratio(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let r = if s.contains('/') {
        ratio_text::parse(s).ok_or_else(|| format!("invalid ratio {s:?}"))?
    } else {
        parse_decimal(s).ok_or_else(|| format!("invalid ratio {s:?}"))?
    };
    if r <= Rational::from_integer(0) {
        return Err(format!("ratio must be positive, got {s}"));
    }
    Ok(r)
}

/// Exact value of a plain decimal such as `0.375`.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() || frac.len() > 15 {
        return None;
    }
    let digits = |t: &str| t.chars().all(|c| c.is_ascii_digit());
    if !digits(int) || !digits(frac) {
        return None;
    }
    let scale = 10i64.checked_pow(frac.len() as u32)?;
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let part: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Ratio::new(whole.checked_mul(scale)?.checked_add(part)?, scale))
}

/// One CSV row of a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub ratio: Rational,
    pub value: Rational,
    pub mode: &'static str,
    pub capacity_tight: bool,
}

pub const CURVE_HEADER: &str = "ratio_num,ratio_den,ratio,value_num,value_den,value,mode,capacity_tight";

fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl CurvePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.ratio.numer(),
            self.ratio.denom(),
            to_f64(self.ratio),
            self.value.numer(),
            self.value.denom(),
            to_f64(self.value),
            self.mode,
            self.capacity_tight
        )
    }
}

/// Value of a curve at one ratio: `d_user / N` for finite K, `d_sum / N` in
/// the large-K limit.
pub fn curve_point(k: UserCount, mode: CurveMode, ratio: Rational, half_duplex: bool) -> Result<CurvePoint, Error> {
    let half = if half_duplex { Ratio::new(1, 2) } else { Ratio::from_integer(1) };
    let point = match (k, mode) {
        (UserCount::Finite(k), CurveMode::Outer) => {
            let (p, q) = (*ratio.numer() as u64, *ratio.denom() as u64);
            let d = outer_bound_per_user(p, q, k)?;
            CurvePoint {
                ratio,
                value: d.d_user / Rational::from_integer(q as i64),
                mode: "outer",
                capacity_tight: false,
            }
        }
        (UserCount::Finite(k), m) => {
            let improved = m == CurveMode::Improved;
            CurvePoint {
                ratio,
                value: per_relay_dim(ratio, k, improved)?,
                mode: if improved { "improved" } else { "basic" },
                capacity_tight: ratio_capacity_tight(ratio, k),
            }
        }
        (UserCount::Infinite, CurveMode::Outer) => CurvePoint {
            ratio,
            value: Rational::from_integer(2),
            mode: "outer",
            capacity_tight: false,
        },
        (UserCount::Infinite, m) => {
            let improved = m == CurveMode::Improved;
            CurvePoint {
                ratio,
                value: asymptotic_dof(ratio, improved)?,
                mode: if improved { "asymptotic-improved" } else { "asymptotic-basic" },
                capacity_tight: ratio >= Ratio::new(1, 2),
            }
        }
    };
    Ok(CurvePoint {
        value: point.value * half,
        ..point
    })
}

pub fn cmd_curve(args: &CurveArgs) -> Result<Outcome, String> {
    let ratios = parse_ratios(args.ratios.as_deref())?;
    let mut text = String::from(CURVE_HEADER);
    text.push('\n');
    for r in ratios {
        let p = curve_point(args.k, args.mode, r, args.half_duplex).map_err(|e| e.to_string())?;
        text.push_str(&p.csv_row());
        text.push('\n');
    }
    Ok(Outcome::new(EXIT_OK, text))
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidMatrix => "InvalidMatrix",
        Error::NoConvergence => "NoConvergence",
        Error::ShapeMismatch(_) => "ShapeMismatch",
        Error::InvalidConfig(_) => "InvalidConfig",
        Error::InvalidDeactivation { .. } => "InvalidDeactivation",
        Error::InvalidPatternOrder { .. } => "InvalidPatternOrder",
        Error::SupplyExhausted { .. } => "SupplyExhausted",
        Error::AlignmentDegenerate { .. } => "AlignmentDegenerate",
        Error::ExtensionOverflow { .. } => "ExtensionOverflow",
        Error::InternalPlanError(_) => "InternalPlanError",
        Error::IndependenceViolation(_) => "IndependenceViolation",
        Error::ProjectorCollapse { .. } => "ProjectorCollapse",
        Error::InvalidSweep(_) => "InvalidSweep",
        Error::InvalidLemmaParams(_) => "InvalidLemmaParams",
    }
}

fn error_json(e: &Error) -> Value {
    json!({"kind": error_kind(e), "message": e.to_string()})
}

fn options(m: u64, n: u64, k: u64, seed: u64, improved: bool) -> BuildOptions {
    BuildOptions::new(m as usize, n as usize, k as usize, seed).improved(improved)
}

fn summary(c: &Construction) -> Value {
    json!({
        "pass": c.report.pass && c.report.counted_d_sum == c.plan.predicted.d_sum,
        "verified": c.report.pass,
        "d_sum": c.report.counted_d_sum.to_string(),
        "expected_d_sum": c.plan.predicted.d_sum.to_string(),
        "d_user": (c.report.counted_d_sum / Rational::from_integer(c.plan.k as i64)).to_string(),
        "extension": c.plan.extension,
        "active_relay": c.plan.active_relay,
        "units": c.units.len(),
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// A construction passes when every stream verifies and the counted sum DoF
/// equals the formula.
pub fn construction_passes(c: &Construction) -> bool {
    c.report.pass && c.report.counted_d_sum == c.plan.predicted.d_sum
}

pub fn cmd_build(args: &BuildArgs) -> Result<Outcome, String> {
    let mut opts = options(args.m, args.n, args.k, args.seed, args.improved);
    opts.identical_blocks = args.identical_blocks;
    let config = json!({
        "m": args.m, "n": args.n, "k": args.k, "seed": args.seed,
        "improved": args.improved, "identical_blocks": args.identical_blocks,
    });
    match build(&opts) {
        Ok(c) => {
            let doc = json!({
                "config": config,
                "summary": summary(&c),
                "plan": c.plan,
                "channels": c.channels,
                "units": c.units,
                "downlink_units": c.downlink_units(),
                "report": c.report,
            });
            let code = if construction_passes(&c) { EXIT_OK } else { EXIT_FAIL };
            Ok(Outcome::new(code, pretty(&doc)))
        }
        Err(e) => Ok(Outcome::new(
            EXIT_CONSTRUCTION,
            pretty(&json!({"config": config, "error": error_json(&e)})),
        )),
    }
}

/// Result of one seed of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: Result<(bool, Rational, Option<f64>), Error>,
}

/// Builds every seed in parallel; results come back in seed order.
pub fn sweep(m: u64, n: u64, k: u64, seeds: std::ops::Range<u64>, improved: bool, snr_sweep: bool) -> Vec<SeedRun> {
    seeds
        .into_par_iter()
        .map(|seed| {
            let outcome = build(&options(m, n, k, seed, improved)).and_then(|c| {
                let slope = if snr_sweep { Some(c.slope(&SLOPE_SNR_DB)?) } else { None };
                Ok((construction_passes(&c), c.report.counted_d_sum, slope))
            });
            SeedRun { seed, outcome }
        })
        .collect()
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Outcome, String> {
    let runs = sweep(
        args.m,
        args.n,
        args.k,
        args.first_seed..args.first_seed + args.seeds,
        args.improved,
        args.snr_sweep,
    );
    let expected = mrc_align::alignment::plan_alignment(args.m as usize, args.n as usize, args.k as usize, args.improved)
        .map(|p| p.predicted.d_sum.to_string())
        .ok();
    let mut passed = 0;
    let mut errors = 0;
    let mut slope_ok = 0;
    let mut rows = Vec::new();
    for r in &runs {
        match &r.outcome {
            Ok((pass, d_sum, slope)) => {
                passed += *pass as usize;
                let mut row = json!({"seed": r.seed, "pass": pass, "d_sum": d_sum.to_string()});
                if let Some(s) = slope {
                    let target = to_f64(*d_sum);
                    let ok = target > 0.0 && ((s - target) / target).abs() <= SLOPE_TOLERANCE;
                    slope_ok += ok as usize;
                    row["slope"] = json!(s);
                    row["slope_ok"] = json!(ok);
                }
                rows.push(row);
            }
            Err(e) => {
                errors += 1;
                rows.push(json!({"seed": r.seed, "pass": false, "error": error_json(e)}));
            }
        }
    }
    let n = runs.len();
    let slope_pass = !args.snr_sweep || slope_ok as f64 >= SLOPE_QUORUM * n as f64;
    let mut doc = json!({
        "config": {"m": args.m, "n": args.n, "k": args.k, "improved": args.improved,
                   "first_seed": args.first_seed, "seeds": args.seeds},
        "expected_d_sum": expected,
        "passed": passed,
        "failed": n - passed - errors,
        "errors": errors,
        "runs": rows,
    });
    if args.snr_sweep {
        doc["slope"] = json!({"snr_db": SLOPE_SNR_DB, "within_tolerance": slope_ok, "pass": slope_pass});
    }
    let code = if errors > 0 {
        EXIT_CONSTRUCTION
    } else if passed < n || !slope_pass {
        EXIT_FAIL
    } else {
        EXIT_OK
    };
    Ok(Outcome::new(code, pretty(&doc)))
}

pub fn cmd_lemmas(args: &LemmaArgs) -> Result<Outcome, String> {
    let battery = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<LemmaBattery>(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => LemmaBattery::default(),
    };
    let results = run_battery(&battery, args.trials as usize, args.seed).map_err(|e| e.to_string())?;
    let failures: usize = results.iter().map(|r| r.failures).sum();
    let doc = json!({
        "trials": args.trials,
        "seed": args.seed,
        "failures": failures,
        "results": results,
    });
    Ok(Outcome::new(if failures == 0 { EXIT_OK } else { EXIT_FAIL }, pretty(&doc)))
}

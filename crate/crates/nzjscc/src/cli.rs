//! Command-line front end: bounds, optimizer sweeps, fidelity curves, and
//! Monte Carlo checks, emitting CSV or JSON for external plotting.
//!
//! Exit codes: 0 success, 1 usage or validation, 2 failed `--check`,
//! 3 internal consistency failure.

use crate::bounds::{lower_bound_pmin, QStar};
use crate::error::{Error, Result};
use crate::optimizer::{
    candidate_qualities, scaled_margin, sweep_point, to_db, GridSpec, PaRule, SchemeParams,
    SweepRow,
};
use crate::profiles::{Profile, QualityGrid, Spacing};
use crate::schemes::{matrix_analog_distortion, HybridParams, LayeredParams, MatrixScheme};
use crate::search;
use crate::simulator::{simulate_matrix_analog, simulate_uncoded, SimConfig, SimResult};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::PathBuf;

/// Parses arguments from the process environment, runs the chosen
/// subcommand, and returns the exit code for `std::process::exit`.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code =
                if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    0
                } else {
                    1
                };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Error::InternalConsistency(msg)) => {
            eprintln!("internal consistency failure: {msg}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "nzjscc",
    version,
    about = "Power bounds, hybrid scheme optimization, and channel simulation \
             for analog sources at vanishing bandwidth"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimum-power lower bound for a fidelity profile.
    Bounds(BoundsArgs),
    /// Cheapest compliant hybrid scheme for order-two profiles, with the
    /// lower bound and the gap alongside.
    Optimize(OptimizeArgs),
    /// Achieved fidelity of a scheme against a profile over a quality grid.
    Curve(CurveArgs),
    /// Monte Carlo estimate of transmission distortion.
    Simulate(SimArgs),
}

#[derive(Args)]
struct AlphaFlags {
    /// Single profile steepness; mutually exclusive with the sweep flags.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sweep start (default 1e-2 when any sweep flag is given).
    #[arg(long)]
    alpha_min: Option<f64>,
    /// Sweep end (default 1e4).
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Sweep length (default 50, log spaced).
    #[arg(long)]
    alpha_points: Option<usize>,
}

enum AlphaSelection {
    Single(f64),
    Sweep { min: f64, max: f64, points: usize },
}

impl AlphaFlags {
    fn any_sweep(&self) -> bool {
        self.alpha_min.is_some() || self.alpha_max.is_some() || self.alpha_points.is_some()
    }

    fn resolve(&self) -> Result<AlphaSelection> {
        match (self.alpha, self.any_sweep()) {
            (Some(_), true) => Err(Error::Invalid(
                "--alpha and the --alpha-min/--alpha-max/--alpha-points sweep are mutually \
                 exclusive"
                    .into(),
            )),
            (Some(a), false) => Ok(AlphaSelection::Single(a)),
            (None, true) => {
                let min = self.alpha_min.unwrap_or(1e-2);
                let max = self.alpha_max.unwrap_or(1e4);
                let points = self.alpha_points.unwrap_or(50);
                if !(min > 0.0 && min < max && max.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "alpha sweep must satisfy 0 < min < max, got [{min}, {max}]"
                    )));
                }
                if points < 2 {
                    return Err(Error::Invalid(format!(
                        "alpha sweep needs at least 2 points, got {points}"
                    )));
                }
                Ok(AlphaSelection::Sweep { min, max, points })
            }
            (None, false) => Err(Error::Invalid(
                "provide --alpha for a single value or --alpha-min/--alpha-max/--alpha-points \
                 for a sweep"
                    .into(),
            )),
        }
    }
}

impl AlphaSelection {
    fn values(&self) -> Vec<f64> {
        match *self {
            AlphaSelection::Single(a) => vec![a],
            AlphaSelection::Sweep { min, max, points } => search::log_space(min, max, points),
        }
    }

    fn params_json(&self) -> Value {
        match *self {
            AlphaSelection::Single(a) => json!({ "alpha": a }),
            AlphaSelection::Sweep { min, max, points } => {
                json!({ "alpha_min": min, "alpha_max": max, "alpha_points": points })
            }
        }
    }
}

#[derive(Args)]
struct GridFlags {
    #[arg(long, default_value_t = 1e-4)]
    q_min: f64,
    #[arg(long, default_value_t = 1e4)]
    q_max: f64,
    #[arg(long, default_value_t = 2000)]
    q_points: usize,
}

impl GridFlags {
    fn to_grid(&self) -> Result<QualityGrid> {
        QualityGrid::new(self.q_min, self.q_max, self.q_points, Spacing::Log)
    }

    fn params_json(&self) -> Value {
        json!({ "q_min": self.q_min, "q_max": self.q_max, "q_points": self.q_points })
    }
}

#[derive(Args)]
struct OutFlags {
    /// Write to this file instead of stdout; CSV output gets a
    /// `<PATH>.manifest.json` sidecar.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct BoundsArgs {
    /// order1 | order2 | table:PATH
    #[arg(long)]
    profile: String,
    #[command(flatten)]
    alpha: AlphaFlags,
    #[command(flatten)]
    grid: GridFlags,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    alpha: AlphaFlags,
    /// closed: both constraints in closed form; exact: maximize the
    /// above-threshold requirement numerically (tighter, slower).
    #[arg(long, value_enum, default_value_t = PaRuleFlag::Closed)]
    pa_rule: PaRuleFlag,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum PaRuleFlag {
    Closed,
    Exact,
}

impl PaRuleFlag {
    fn to_rule(self) -> PaRule {
        match self {
            PaRuleFlag::Closed => PaRule::ClosedForm,
            PaRuleFlag::Exact => PaRule::Exact,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PaRuleFlag::Closed => "closed",
            PaRuleFlag::Exact => "exact",
        }
    }
}

#[derive(Args)]
struct CurveArgs {
    /// Analog power of the scheme.
    #[arg(long)]
    pa: f64,
    /// Digital layer power (hybrid scheme; needs --q1).
    #[arg(long)]
    p1: Option<f64>,
    /// Digital layer threshold quality (hybrid scheme; needs --p1).
    #[arg(long)]
    q1: Option<f64>,
    /// Layered scheme as repeated POWER:QUALITY pairs; mutually exclusive
    /// with --p1/--q1.
    #[arg(long, value_name = "P:Q")]
    layers: Vec<String>,
    /// order1 | order2 | table:PATH
    #[arg(long)]
    profile: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    grid: GridFlags,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum SimMode {
    Uncoded,
    Matrix,
}

#[derive(Args)]
struct SimArgs {
    /// Source samples per channel use.
    #[arg(long)]
    n: u32,
    /// Analog transmit power per channel use.
    #[arg(long)]
    power: f64,
    /// Digital layer power seen as interference.
    #[arg(long, default_value_t = 0.0)]
    p1: f64,
    /// Channel noise variance.
    #[arg(long)]
    noise: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit 2 unless the sample mean is within 4 standard errors of the
    /// closed form.
    #[arg(long)]
    check: bool,
    #[arg(long, value_enum, default_value_t = SimMode::Uncoded)]
    mode: SimMode,
    /// Channel uses per block in matrix mode (the encoder is a seeded
    /// random m x n matrix scaled to --power).
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation output is always JSON.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    params: Value,
    artifact_version: String,
    seed: Option<u64>,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(subcommand: &str, params: Value, seed: Option<u64>, out: &Option<PathBuf>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            params,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            outputs: out.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.cmd {
        Cmd::Bounds(args) => cmd_bounds(args),
        Cmd::Optimize(args) => cmd_optimize(args),
        Cmd::Curve(args) => cmd_curve(args),
        Cmd::Simulate(args) => cmd_simulate(args),
    }
}

fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

fn parse_profile(kind: &str, alpha: Option<f64>) -> Result<Profile> {
    if let Some(path) = kind.strip_prefix("table:") {
        if alpha.is_some() {
            return Err(Error::Invalid("--alpha does not apply to table profiles".into()));
        }
        return Profile::from_csv_path(path.as_ref());
    }
    let alpha = alpha.ok_or_else(|| {
        Error::Invalid(format!("--alpha is required for the {kind} profile"))
    })?;
    match kind {
        "order1" => Profile::order1(alpha),
        "order2" => Profile::order2(alpha),
        other => Err(Error::Invalid(format!(
            "unknown profile {other:?}; expected order1, order2, or table:PATH"
        ))),
    }
}

/// Writes `text` to the file or stdout. File CSV output gets a manifest
/// sidecar at `<path>.manifest.json`; JSON output embeds its manifest, and
/// plain-stdout CSV has no artifact to accompany.
fn emit(text: &str, out: &Option<PathBuf>, sidecar: Option<&RunManifest>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            if let Some(manifest) = sidecar {
                let mut manifest_path = path.as_os_str().to_owned();
                manifest_path.push(".manifest.json");
                let mut body = serde_json::to_string_pretty(manifest)
                    .map_err(|e| Error::Format(e.to_string()))?;
                body.push('\n');
                std::fs::write(manifest_path, body)?;
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json(envelope: &Value, out: &Option<PathBuf>) -> Result<()> {
    let mut body =
        serde_json::to_string_pretty(envelope).map_err(|e| Error::Format(e.to_string()))?;
    body.push('\n');
    emit(&body, out, None)
}

fn cmd_bounds(args: &BoundsArgs) -> Result<i32> {
    let grid = args.grid.to_grid()?;
    let is_table = args.profile.starts_with("table:");

    let (rows, alpha_params) = if is_table {
        if args.alpha.alpha.is_some() || args.alpha.any_sweep() {
            return Err(Error::Invalid("--alpha does not apply to table profiles".into()));
        }
        let profile = parse_profile(&args.profile, None)?;
        (vec![(None, lower_bound_pmin(&profile, &grid)?)], Value::Null)
    } else {
        let selection = args.alpha.resolve()?;
        let mut rows = Vec::new();
        for a in selection.values() {
            let profile = parse_profile(&args.profile, Some(a))?;
            rows.push((Some(a), lower_bound_pmin(&profile, &grid)?));
        }
        (rows, selection.params_json())
    };

    let mut params = json!({
        "profile": args.profile,
        "format": format_name(args.out.format),
    });
    merge(&mut params, &alpha_params);
    merge(&mut params, &args.grid.params_json());
    let manifest = RunManifest::new("bounds", params, None, &args.out.out);

    match args.out.format {
        Format::Csv => {
            let mut text = String::from("alpha,p_lower,q_star\n");
            for (alpha, r) in &rows {
                let alpha_col = alpha.map(fmt12).unwrap_or_default();
                let q_star_col = match r.q_star {
                    QStar::AtZero => "0".to_string(),
                    QStar::AtInfinity => "inf".to_string(),
                    QStar::At(q) => fmt12(q),
                };
                writeln!(text, "{alpha_col},{},{q_star_col}", fmt12(r.p_lower))
                    .expect("string write");
            }
            emit(&text, &args.out.out, Some(&manifest))?;
        }
        Format::Json => {
            let json_rows: Vec<Value> = rows
                .iter()
                .map(|(alpha, r)| {
                    let (q_star, limit) = match r.q_star {
                        QStar::AtZero => (Value::Null, json!("zero")),
                        QStar::AtInfinity => (Value::Null, json!("infinity")),
                        QStar::At(q) => (json!(q), Value::Null),
                    };
                    json!({
                        "alpha": alpha,
                        "p_lower": r.p_lower,
                        "q_star": q_star,
                        "limit": limit,
                        "attained": r.attained,
                    })
                })
                .collect();
            emit_json(&json!({ "manifest": manifest, "rows": json_rows }), &args.out.out)?;
        }
    }
    Ok(0)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<i32> {
    let selection = args.alpha.resolve()?;
    let rule = args.pa_rule.to_rule();
    let spec = GridSpec::default();
    let rows: Vec<SweepRow> = selection
        .values()
        .into_iter()
        .map(|alpha| sweep_point(alpha, rule, &spec))
        .collect::<Result<_>>()?;

    let mut params = json!({
        "pa_rule": args.pa_rule.name(),
        "format": format_name(args.out.format),
    });
    merge(&mut params, &selection.params_json());
    let manifest = RunManifest::new("optimize", params, None, &args.out.out);

    match args.out.format {
        Format::Csv => {
            let mut text =
                String::from("alpha,p_lower,p_upper,p_lower_db,p_upper_db,gap_db,p_a,p_1,q_1\n");
            for r in &rows {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{}",
                    fmt12(r.alpha),
                    fmt12(r.p_lower),
                    fmt12(r.p_upper),
                    fmt12(to_db(r.p_lower)),
                    fmt12(to_db(r.p_upper)),
                    fmt12(r.gap_db),
                    fmt12(r.p_a),
                    fmt12(r.p_1),
                    fmt12(r.q_1)
                )
                .expect("string write");
            }
            emit(&text, &args.out.out, Some(&manifest))?;
        }
        Format::Json => {
            let json_rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "alpha": r.alpha,
                        "p_lower": r.p_lower,
                        "p_upper": r.p_upper,
                        "p_lower_db": to_db(r.p_lower),
                        "p_upper_db": to_db(r.p_upper),
                        "gap_db": r.gap_db,
                        "p_a": r.p_a,
                        "p_1": r.p_1,
                        "q_1": r.q_1,
                    })
                })
                .collect();
            emit_json(&json!({ "manifest": manifest, "rows": json_rows }), &args.out.out)?;
        }
    }
    Ok(0)
}

fn parse_layers(specs: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut powers = Vec::with_capacity(specs.len());
    let mut thresholds = Vec::with_capacity(specs.len());
    for s in specs {
        let (p, q) = s
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("layer must be POWER:QUALITY, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("layer value {v:?} is not a number")))
        };
        powers.push(parse(p)?);
        thresholds.push(parse(q)?);
    }
    Ok((powers, thresholds))
}

fn cmd_curve(args: &CurveArgs) -> Result<i32> {
    let scheme = match (&args.p1, &args.q1, args.layers.is_empty()) {
        (Some(_), Some(_), false) | (Some(_), None, false) | (None, Some(_), false) => {
            return Err(Error::Invalid("--layers is mutually exclusive with --p1/--q1".into()))
        }
        (Some(p1), Some(q1), true) => {
            SchemeParams::Hybrid(HybridParams::new(args.pa, *p1, *q1)?)
        }
        (None, None, false) => {
            let (powers, thresholds) = parse_layers(&args.layers)?;
            SchemeParams::Layered(LayeredParams::new(args.pa, powers, thresholds)?)
        }
        _ => {
            return Err(Error::Invalid(
                "describe the scheme with --p1 and --q1, or with repeated --layers".into(),
            ))
        }
    };
    let profile = parse_profile(&args.profile, args.alpha)?;
    let grid = args.grid.to_grid()?;

    let scheme_params = match &scheme {
        SchemeParams::Hybrid(hp) => json!({ "pa": hp.p_a, "p1": hp.p_1, "q1": hp.q_1 }),
        SchemeParams::Layered(lp) => json!({
            "pa": lp.p_a,
            "layers": lp
                .layer_powers
                .iter()
                .zip(&lp.thresholds)
                .map(|(p, q)| json!([p, q]))
                .collect::<Vec<_>>(),
        }),
    };
    let mut params = json!({
        "profile": args.profile,
        "alpha": args.alpha,
        "format": format_name(args.out.format),
    });
    merge(&mut params, &scheme_params);
    merge(&mut params, &args.grid.params_json());
    let manifest = RunManifest::new("curve", params, None, &args.out.out);

    let mut rows = Vec::new();
    for q in candidate_qualities(&scheme, &grid) {
        let f_scheme = scheme.fidelity(q)?;
        let f_profile = profile.eval(q)?;
        rows.push((q, f_scheme, f_profile, scaled_margin(f_scheme, f_profile)));
    }

    match args.out.format {
        Format::Csv => {
            let mut text = String::from("q,f_scheme,f_profile,margin\n");
            for (q, f_scheme, f_profile, margin) in &rows {
                writeln!(
                    text,
                    "{},{},{},{}",
                    fmt12(*q),
                    fmt12(*f_scheme),
                    fmt12(*f_profile),
                    fmt12(*margin)
                )
                .expect("string write");
            }
            emit(&text, &args.out.out, Some(&manifest))?;
        }
        Format::Json => {
            let json_rows: Vec<Value> = rows
                .iter()
                .map(|(q, f_scheme, f_profile, margin)| {
                    json!({
                        "q": q,
                        "f_scheme": f_scheme,
                        "f_profile": f_profile,
                        "margin": margin,
                    })
                })
                .collect();
            emit_json(&json!({ "manifest": manifest, "rows": json_rows }), &args.out.out)?;
        }
    }
    Ok(0)
}

/// A seeded random encoder for matrix-mode simulation: m x n standard
/// normal entries on a stream no trial chunk uses, rescaled so the analog
/// power per channel use equals `power`.
fn random_matrix_scheme(m: usize, n: u32, power: f64, p_1: f64, seed: u64) -> Result<MatrixScheme> {
    if m == 0 {
        return Err(Error::Invalid("matrix mode needs at least one channel use".into()));
    }
    let n = n as usize;
    if n == 0 {
        return Err(Error::Invalid("need at least one source sample per channel use".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut k = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let frob2 = k.iter().map(|x| x * x).sum::<f64>();
    if frob2 > 0.0 {
        k *= (power * m as f64 / frob2).sqrt();
    } else {
        k.fill(0.0);
    }
    MatrixScheme::new(k, nalgebra::DMatrix::identity(n, n), p_1)
}

fn cmd_simulate(args: &SimArgs) -> Result<i32> {
    if args.format == Some(Format::Csv) {
        return Err(Error::Invalid("simulate emits JSON; --format csv is not available".into()));
    }
    if args.mode == SimMode::Uncoded && args.m != 1 {
        return Err(Error::Invalid("--m applies only to --mode matrix".into()));
    }

    let (result, closed_form): (SimResult, f64) = match args.mode {
        SimMode::Uncoded => {
            let cfg =
                SimConfig::new(args.n, args.power, args.p1, args.noise, args.trials, args.seed)?;
            let closed = crate::schemes::uncoded_distortion(
                cfg.power,
                cfg.p_1 + cfg.noise,
                1.0 / cfg.n as f64,
            )?;
            (simulate_uncoded(&cfg)?, closed)
        }
        SimMode::Matrix => {
            let ms = random_matrix_scheme(args.m, args.n, args.power, args.p1, args.seed)?;
            let closed = matrix_analog_distortion(&ms, args.noise)?;
            (simulate_matrix_analog(&ms, args.noise, args.trials, args.seed)?, closed)
        }
    };

    let mode_name = match args.mode {
        SimMode::Uncoded => "uncoded",
        SimMode::Matrix => "matrix",
    };
    let mut params = json!({
        "mode": mode_name,
        "n": args.n,
        "power": args.power,
        "p1": args.p1,
        "noise": args.noise,
        "trials": args.trials,
        "seed": args.seed,
        "check": args.check,
    });
    if args.mode == SimMode::Matrix {
        merge(&mut params, &json!({ "m": args.m }));
    }
    let manifest = RunManifest::new("simulate", params, Some(args.seed), &args.out);

    let gap = (result.mean_distortion - closed_form).abs();
    let passed = gap <= 4.0 * result.std_error;
    let mut envelope = json!({
        "manifest": manifest,
        "result": result,
        "closed_form": closed_form,
    });
    if args.check {
        merge(
            &mut envelope,
            &json!({
                "check": {
                    "passed": passed,
                    "gap": gap,
                    "tolerance": 4.0 * result.std_error,
                }
            }),
        );
    }
    emit_json(&envelope, &args.out)?;
    Ok(if args.check && !passed { 2 } else { 0 })
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// Folds `extra`'s top-level keys into `base` (both must be objects, or
/// `extra` null for a no-op).
fn merge(base: &mut Value, extra: &Value) {
    if extra.is_null() {
        return;
    }
    let (Value::Object(base), Value::Object(extra)) = (base, extra) else {
        unreachable!("manifest params are built as objects");
    };
    for (k, v) in extra {
        base.insert(k.clone(), v.clone());
    }
}

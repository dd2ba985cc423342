//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::compose::{self, CompositionScenario};
use crate::error::GdpError;
use crate::gdpt::{self, MeasurementConfig, Strategy};
use crate::identify::{self, HeadTailQuery, Side};
use crate::numfmt::real;
use crate::profiles::{self, PrivacyProfile, TradeoffEquation};
use crate::transform::{self, ClipRectifySpec, SubsampleSpec};

/// Number of samples in emitted curves.
const CURVE_POINTS: usize = 256;
const CURVE_START: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Pretty,
}

#[derive(Debug, Parser)]
#[command(name = "gdpkit", version, about = "Privacy profiles on the Gaussian DP scale")]
struct Cli {
    /// Output format; defaults to a per-command choice.
    #[arg(long, global = true, env = "GDPKIT_FORMAT", value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample delta(eps) of a profile.
    Profile {
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, default_value_t = 10.0)]
        eps_max: f64,
    },
    /// Sample the pointwise GDP transformation of a profile.
    Gdpt {
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, default_value_t = 10.0)]
        eps_max: f64,
        #[arg(long, default_value_t = 1e-6)]
        margin: f64,
        #[arg(long, default_value_t = gdpt::DEFAULT_MU_MAX)]
        mu_max: f64,
    },
    /// Certified bracket on the smallest mu over a head interval.
    Measure {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Tail-limit classification, optionally with a head or tail check.
    Identify {
        #[command(flatten)]
        profile: ProfileArgs,
        /// Candidate mu for a head or tail check.
        #[arg(long)]
        check_mu: Option<f64>,
        #[arg(long, value_enum, default_value_t = SideArg::Head)]
        side: SideArg,
        /// Head horizon or tail start of the check.
        #[arg(long, default_value_t = 10.0)]
        boundary: f64,
        #[arg(long, default_value_t = 1000.0)]
        c: f64,
    },
    /// Subsample and/or clip-and-rectify a profile, then measure the result.
    Amplify {
        #[command(flatten)]
        profile: ProfileArgs,
        /// Poisson sampling rate.
        #[arg(long)]
        gamma: Option<f64>,
        /// Clip-and-rectify with this verified head horizon.
        #[arg(long)]
        clip_eps_h: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        y_lo: f64,
        #[arg(long, default_value_t = 1.0)]
        y_hi: f64,
        #[command(flatten)]
        measure: AmplifyMeasureArgs,
    },
    /// GDP composition of explicit mu values or of k pure-DP steps.
    Compose {
        /// Comma-separated mu values.
        #[arg(long, value_delimiter = ',')]
        mus: Vec<f64>,
        /// Per-step pure-DP level, converted to GDP.
        #[arg(long)]
        eps_pure: Option<f64>,
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// Report eps(delta) of the composed curve at these levels.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
    },
    /// Composition table for k homogeneous pure-DP steps.
    Table {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k: u32,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        eps_h: f64,
        #[arg(long, default_value_t = 1000.0)]
        c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include delta -> eps curves (JSON only).
        #[arg(long)]
        curves: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Laplace,
    Sgd,
    Icea,
    Pure,
    Gdp,
    LogRatio,
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Naive,
    Shuffled,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long, value_enum, required_unless_present = "profile_file")]
    family: Option<FamilyArg>,
    /// CSV file with header `eps,delta`.
    #[arg(long, conflicts_with = "family")]
    profile_file: Option<PathBuf>,
    /// Pure-DP level: sensitivity/scale for laplace, eps0 for pure, per-step eps for optimal.
    #[arg(long)]
    eps_pure: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    mu: Option<f64>,
    /// Constant of the log-ratio family.
    #[arg(long)]
    ratio_c: Option<f64>,
    /// Fold count for the optimal family.
    #[arg(long)]
    k: Option<u32>,
    /// Tighten the profile with the implication order.
    #[arg(long)]
    refine: bool,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long, default_value_t = 10.0)]
    eps_h: f64,
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    #[arg(long, default_value_t = gdpt::DEFAULT_MU_MAX)]
    mu_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Shuffled)]
    strategy: StrategyArg,
}

#[derive(Debug, Args)]
struct AmplifyMeasureArgs {
    #[arg(long, default_value_t = 100.0)]
    eps_h: f64,
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    #[arg(long, default_value_t = gdpt::DEFAULT_MU_MAX)]
    mu_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl MeasureArgs {
    fn config(&self) -> MeasurementConfig {
        let strategy = match self.strategy {
            StrategyArg::Naive => Strategy::Naive,
            StrategyArg::Shuffled => Strategy::Shuffled,
        };
        MeasurementConfig { eps_h: self.eps_h, c: self.c, mu_max: self.mu_max, seed: self.seed, strategy }
    }
}

/// Failure of a command, mapped to an exit code.
enum Failure {
    Usage(String),
    /// A computed verdict that still produced structured output.
    Verdict(Rendered),
}

impl From<GdpError> for Failure {
    fn from(e: GdpError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn need<T>(v: Option<T>, flag: &str, family: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for --family {family}")))
}

fn build_profile(args: &ProfileArgs) -> Result<PrivacyProfile, Failure> {
    let p = if let Some(path) = &args.profile_file {
        profiles::load_tabulated_path(path)?
    } else {
        let family = args.family.ok_or_else(|| Failure::Usage("--family or --profile-file is required".into()))?;
        match family {
            FamilyArg::Laplace => profiles::builtin_profile(&TradeoffEquation::Laplace {
                sensitivity: need(args.eps_pure, "eps-pure", "laplace")?,
                scale: 1.0,
            })?,
            FamilyArg::Sgd => profiles::builtin_profile(&TradeoffEquation::SgdLike {
                a: need(args.a, "a", "sgd")?,
                b: need(args.b, "b", "sgd")?,
                sigma: need(args.sigma, "sigma", "sgd")?,
            })?,
            FamilyArg::Icea => profiles::builtin_profile(&TradeoffEquation::Icea {
                m: need(args.m, "m", "icea")?,
                n: need(args.n, "n", "icea")?,
            })?,
            FamilyArg::Pure => PrivacyProfile::pure_dp(need(args.eps_pure, "eps-pure", "pure")?)?,
            FamilyArg::Gdp => PrivacyProfile::gdp_curve(need(args.mu, "mu", "gdp")?)?,
            FamilyArg::LogRatio => profiles::builtin_profile(&TradeoffEquation::LogRatio {
                c: need(args.ratio_c, "ratio-c", "log-ratio")?,
                sigma: need(args.sigma, "sigma", "log-ratio")?,
            })?,
            FamilyArg::Optimal => compose::optimal_profile_pure(
                need(args.eps_pure, "eps-pure", "optimal")?,
                need(args.k, "k", "optimal")?,
            )?,
        }
    };
    Ok(if args.refine { p.refine() } else { p })
}

/// Output in all three formats; the chosen one is printed.
struct Rendered {
    json: Value,
    csv: String,
    pretty: String,
}

impl Rendered {
    fn pick(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).unwrap_or_default();
                s.push('\n');
                s
            }
            Format::Csv => self.csv.clone(),
            Format::Pretty => self.pretty.clone(),
        }
    }
}

/// Flat `key,value` records rendered for CSV and pretty output.
fn records(pairs: &[(&str, String)]) -> (String, String) {
    let mut csv = String::from("key,value\n");
    let mut pretty = String::new();
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in pairs {
        csv.push_str(&format!("{k},{v}\n"));
        pretty.push_str(&format!("{k:<width$}  {v}\n"));
    }
    (csv, pretty)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn geometric(eps_max: f64) -> Result<Vec<f64>, Failure> {
    if !(eps_max > CURVE_START && eps_max.is_finite()) {
        return Err(Failure::Usage(format!("--eps-max must exceed {CURVE_START}")));
    }
    let ratio = (eps_max / CURVE_START).ln() / (CURVE_POINTS - 1) as f64;
    Ok((0..CURVE_POINTS).map(|i| CURVE_START * (ratio * i as f64).exp()).collect())
}

fn curve(points: &[(f64, f64)]) -> Rendered {
    let mut csv = String::from("eps,value\n");
    let mut pretty = format!("{:<24}  {}\n", "eps", "value");
    for (e, v) in points {
        csv.push_str(&format!("{},{}\n", real(*e), real(*v)));
        pretty.push_str(&format!("{:<24}  {}\n", real(*e), real(*v)));
    }
    let json = Value::Array(
        points.iter().map(|(e, v)| json!({ "eps": real_json(*e), "value": real_json(*v) })).collect(),
    );
    Rendered { json, csv, pretty }
}

fn real_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(real(x))
    }
}

fn ceiling_verdict(e: &GdpError) -> Option<Rendered> {
    let GdpError::CeilingExceeded { mu_max, eps, delta } = *e else { return None };
    let json = json!({
        "verdict": "ceiling_exceeded",
        "mu_max": mu_max,
        "eps": eps,
        "delta": delta,
        "message": e.to_string(),
    });
    let (csv, pretty) = records(&[
        ("verdict", "ceiling_exceeded".into()),
        ("mu_max", real(mu_max)),
        ("eps", real(eps)),
        ("delta", real(delta)),
    ]);
    Some(Rendered { json, csv, pretty })
}

fn measurement(r: &gdpt::MeasurementResult) -> Rendered {
    measurement_with(r, Vec::new())
}

fn measurement_with(r: &gdpt::MeasurementResult, mut pairs: Vec<(&str, String)>) -> Rendered {
    let json = to_json(r);
    pairs.extend([
        ("mu_lo", real(r.bracket.mu_lo)),
        ("mu_hi", real(r.bracket.mu_hi)),
        ("c", real(r.config.c)),
        ("eps_h", real(r.config.eps_h)),
        ("n", r.grid_n.to_string()),
        ("d", real(r.grid_d)),
        ("strategy", r.config.strategy.as_str().into()),
        ("seed", r.config.seed.to_string()),
        ("binary_search_count", r.binary_search_count.to_string()),
        ("mu_max", real(r.config.mu_max)),
        ("rng", gdpt::RNG_ID.into()),
    ]);
    let (csv, pretty) = records(&pairs);
    Rendered { json, csv, pretty }
}

fn measure_or_verdict(p: &PrivacyProfile, cfg: &MeasurementConfig) -> Result<gdpt::MeasurementResult, Failure> {
    gdpt::head_measure(p, cfg).map_err(|e| match ceiling_verdict(&e) {
        Some(v) => Failure::Verdict(v),
        None => e.into(),
    })
}

fn run(command: &Command) -> Result<(Rendered, Format), Failure> {
    match command {
        Command::Profile { profile, eps_max } => {
            let p = build_profile(profile)?;
            let pts: Vec<(f64, f64)> = geometric(*eps_max)?.into_iter().map(|e| (e, p.delta(e))).collect();
            Ok((curve(&pts), Format::Csv))
        }
        Command::Gdpt { profile, eps_max, margin, mu_max } => {
            let p = build_profile(profile)?;
            let mut pts = Vec::with_capacity(CURVE_POINTS);
            let mut exceeded = false;
            for e in geometric(*eps_max)? {
                match gdpt::gdpt_eval_with(&p, e, *margin, *mu_max) {
                    Ok(b) => pts.push((e, b.mu_hi)),
                    Err(GdpError::CeilingExceeded { .. }) => {
                        exceeded = true;
                        pts.push((e, f64::INFINITY));
                    }
                    Err(err) => return Err(err.into()),
                }
            }
            let out = curve(&pts);
            if exceeded {
                return Err(Failure::Verdict(out));
            }
            Ok((out, Format::Csv))
        }
        Command::Measure { profile, measure } => {
            let p = build_profile(profile)?;
            let r = measure_or_verdict(&p, &measure.config())?;
            Ok((measurement(&r), Format::Json))
        }
        Command::Identify { profile, check_mu, side, boundary, c } => {
            let p = build_profile(profile)?;
            let class = identify::classify(&p);
            let mut json = to_json(&class);
            let mut pairs = vec![
                ("verdict", to_json(&class.verdict).as_str().unwrap_or_default().to_string()),
                ("mu_lower_bound", real(class.mu_lower_bound)),
                ("kind", to_json(&class.evidence.kind).as_str().unwrap_or_default().to_string()),
                ("trend", to_json(&class.evidence.trend).as_str().unwrap_or_default().to_string()),
                ("mu_t", real(class.evidence.mu_t)),
            ];
            if let Some(mu) = check_mu {
                let side = match side {
                    SideArg::Head => Side::Head,
                    SideArg::Tail => Side::Tail,
                };
                let q = HeadTailQuery { boundary_eps: *boundary, mu: *mu, side };
                let outcome = identify::check_condition(&p, &q, *c);
                json["check"] = json!({ "query": to_json(&q), "outcome": to_json(&outcome) });
                pairs.push(("check", to_json(&outcome).as_str().unwrap_or_default().to_string()));
            }
            let (csv, pretty) = records(&pairs);
            Ok((Rendered { json, csv, pretty }, Format::Json))
        }
        Command::Amplify { profile, gamma, clip_eps_h, y_lo, y_hi, measure } => {
            let mut p = build_profile(profile)?;
            let mut steps = Vec::new();
            if let Some(g) = gamma {
                p = transform::poisson_subsample(&p, &SubsampleSpec::new(*g)?)?;
                steps.push(json!({ "subsample": { "gamma": g } }));
            }
            if let Some(h) = clip_eps_h {
                let spec = ClipRectifySpec::new(*h, *y_lo, *y_hi)?;
                p = transform::clip_rectify(&p, &spec)?;
                steps.push(json!({ "clip_rectify": { "eps_h": h, "y_lo": y_lo, "y_hi": y_hi, "laplace_scale": spec.laplace_scale() } }));
            }
            let class = identify::classify(&p);
            let cfg = MeasurementConfig {
                eps_h: measure.eps_h,
                c: measure.c,
                mu_max: measure.mu_max,
                seed: measure.seed,
                strategy: Strategy::Shuffled,
            };
            let r = measure_or_verdict(&p, &cfg)?;
            let verdict = to_json(&class.verdict).as_str().unwrap_or_default().to_string();
            let m = measurement_with(&r, vec![("verdict", verdict.clone())]);
            let json = json!({ "transforms": steps, "verdict": verdict, "measurement": m.json });
            Ok((Rendered { json, ..m }, Format::Json))
        }
        Command::Compose { mus, eps_pure, k, deltas } => {
            let mut all = mus.clone();
            let mut per_step = None;
            if let Some(e) = eps_pure {
                let mu = transform::pure_to_gdp(*e)?;
                per_step = Some(mu);
                all.extend(std::iter::repeat_n(mu, *k as usize));
            }
            if all.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(Failure::Usage("mu values must be finite and >= 0".into()));
            }
            if all.is_empty() {
                return Err(Failure::Usage("give --mus or --eps-pure".into()));
            }
            let mu = compose::gdp_compose(&all);
            let eps: Vec<f64> =
                deltas.iter().map(|&d| compose::gdp_eps_for_delta(mu, d)).collect::<Result<_, _>>()?;
            let json = json!({
                "mu": mu,
                "per_step_mu": per_step,
                "deltas": deltas,
                "eps": eps,
            });
            let mut pairs = vec![("mu", real(mu))];
            if let Some(m) = per_step {
                pairs.push(("per_step_mu", real(m)));
            }
            let labels: Vec<String> = deltas.iter().map(|d| format!("eps@{}", real(*d))).collect();
            for (label, e) in labels.iter().zip(&eps) {
                pairs.push((label.as_str(), real(*e)));
            }
            let (csv, pretty) = records(&pairs);
            Ok((Rendered { json, csv, pretty }, Format::Json))
        }
        Command::Table { eps, k, deltas, eps_h, c, seed, curves } => {
            let s = CompositionScenario::new(*eps, *k, deltas.clone())?;
            let cfg = MeasurementConfig { eps_h: *eps_h, c: *c, seed: *seed, ..MeasurementConfig::default() };
            let report = compose::build_report(&s, &cfg).map_err(|e| match ceiling_verdict(&e) {
                Some(v) => Failure::Verdict(v),
                None => e.into(),
            })?;
            let mut json = to_json(&report);
            if !curves {
                if let Some(obj) = json.as_object_mut() {
                    obj.remove("curves");
                }
            }
            let csv = report.to_csv();
            Ok((Rendered { json, pretty: pretty_table(&csv), csv }, Format::Csv))
        }
    }
}

/// Column-aligned rendering of a CSV table.
fn pretty_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|s| s.len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r.iter().enumerate().map(|(j, s)| format!("{s:<w$}", w = widths[j])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Runs one invocation; returns the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match run(&cli.command) {
        Ok((rendered, default)) => {
            let _ = out.write_all(rendered.pick(cli.format.unwrap_or(default)).as_bytes());
            0
        }
        Err(Failure::Verdict(rendered)) => {
            let _ = out.write_all(rendered.pick(cli.format.unwrap_or(Format::Json)).as_bytes());
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

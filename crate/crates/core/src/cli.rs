//! Command-line experiment runner. Every artifact starts with the resolved
//! configuration, so a rerun with the same flags reproduces it byte for byte.

use std::ffi::OsString;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::attack::{
    attack_pipeline_with, AttackError, AttackOutcome, Disclosure, Pairing, PipelineOptions,
    Protocol, Transcript,
};
use crate::estimators::{
    chsh_at, scan_curve, theta_grid, ChshReport, ChshSettings, CorrelationSource, EstimatorError,
    Model, MonteCarlo,
};
use crate::geometry::{sample_plane_angle, sample_unit_sphere, PlaneAngle, UnitVec3};
use crate::protocols::{singlet_correlation, Setting};
use crate::random::{streams, RandomStream};
use crate::textfmt::{round9, sig9};

#[derive(Debug, Parser)]
#[command(name = "bellsim", version, about = "Shared-random-variable Bell experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical and closed-form correlation over a grid of angles.
    Correlate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100_000)]
        n_samples: u64,
        /// Grid points from 0 to π inclusive.
        #[arg(long, default_value_t = 17)]
        points: usize,
    },
    /// CHSH values at four coplanar settings, analytic and sampled.
    Chsh {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1_000_000)]
        n_samples: u64,
        /// `a,a′,b,b′` in radians.
        #[arg(long)]
        settings: Option<String>,
    },
    /// Svozil correlation against the singlet and linear references.
    SvozilCurve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100_000)]
        n_samples: u64,
        #[arg(long, default_value_t = 33)]
        points: usize,
    },
    /// Sweep attack recovering Alice's axis.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Steps per half turn; the sweep step is π/N.
        #[arg(long, default_value_t = 360)]
        n_sweep: usize,
        /// Alice's setting: `x,y,z` on the sphere or an angle in radians on
        /// the circle. Drawn from the seed when absent.
        #[arg(long)]
        alice: Option<String>,
        #[arg(long, value_enum, default_value_t = PairingArg::Adjacent)]
        pairing: PairingArg,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Svozil shift in radians, in [0, π/2].
    #[arg(long)]
    pub omega: Option<f64>,
    /// Integer seed, or `random` to draw one.
    #[arg(long, default_value = "0")]
    pub seed: SeedArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Never changes the output.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolArg {
    Tb,
    Svozil,
    Ntb,
    Ns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingArg {
    Adjacent,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

impl FromStr for SeedArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "random" {
            Ok(SeedArg::Random)
        } else {
            s.parse()
                .map(SeedArg::Fixed)
                .map_err(|_| format!("expected an unsigned integer or `random`, got `{s}`"))
        }
    }
}

impl SeedArg {
    fn resolve(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Random => rand::random(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// 2 for rejected input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Estimator(EstimatorError::Pool(_)) => 1,
            CliError::Estimator(_) => 2,
            CliError::Attack(AttackError::InvalidSchedule(_) | AttackError::SettingMismatch(_)) => 2,
            CliError::Attack(_) | CliError::Io { .. } | CliError::Pool(_) => 1,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bellsim: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let workers = match &cli.command {
        Command::Correlate { common, .. }
        | Command::Chsh { common, .. }
        | Command::SvozilCurve { common, .. }
        | Command::Attack { common, .. } => common.workers,
    };
    if workers == 0 {
        dispatch(&cli.command)
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        pool.install(|| dispatch(&cli.command))
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Correlate { common, n_samples, points } => cmd_correlate(common, *n_samples, *points),
        Command::Chsh { common, n_samples, settings } => cmd_chsh(common, *n_samples, settings.as_deref()),
        Command::SvozilCurve { common, n_samples, points } => cmd_svozil_curve(common, *n_samples, *points),
        Command::Attack { common, n_sweep, alice, pairing } => {
            cmd_attack(common, *n_sweep, alice.as_deref(), *pairing)
        }
    }
}

/// The resolved configuration embedded in every artifact. Worker count and
/// output path are left out: neither changes the content.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: &'static str,
    pub protocol: ProtocolArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settings: Option<ChshSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sweep: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alice: Option<Setting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing: Option<PairingArg>,
    pub seed: u64,
    pub format: Format,
    pub version: &'static str,
}

impl ExperimentConfig {
    fn new(subcommand: &'static str, protocol: ProtocolArg, common: &CommonArgs, seed: u64) -> Self {
        ExperimentConfig {
            subcommand,
            protocol,
            omega: common.omega,
            n_samples: None,
            points: None,
            settings: None,
            n_sweep: None,
            delta: None,
            alice: None,
            pairing: None,
            seed,
            format: common.format,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn is_svozil_family(p: ProtocolArg) -> bool {
    matches!(p, ProtocolArg::Svozil | ProtocolArg::Ns)
}

fn check_omega(protocol: ProtocolArg, omega: Option<f64>) -> Result<Option<f64>, CliError> {
    match (is_svozil_family(protocol), omega) {
        (true, None) => Err(invalid("--omega is required for the svozil and ns protocols")),
        (false, Some(_)) => Err(invalid("--omega only applies to the svozil and ns protocols")),
        (true, Some(w)) if !(0.0..=FRAC_PI_2).contains(&w) => {
            Err(invalid(format!("--omega must lie in [0, pi/2], got {w}")))
        }
        (_, w) => Ok(w),
    }
}

fn model_for(protocol: ProtocolArg, omega: Option<f64>) -> Model {
    match omega {
        Some(omega) if is_svozil_family(protocol) => Model::Svozil { omega },
        _ => Model::Tb,
    }
}

fn check_count(name: &str, n: u64) -> Result<(), CliError> {
    if n == 0 {
        Err(invalid(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// A value in an output table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => sig9(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) => serde_json::Number::from_f64(round9(*x))
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Cell::Int(n) => Value::from(*n),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format, config: &ExperimentConfig) -> String {
        match format {
            Format::Csv => {
                let mut out = String::new();
                let _ = writeln!(out, "# bellsim {}", config.subcommand);
                let _ = writeln!(out, "# config: {}", config.to_json());
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let map: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.json()))
                            .collect();
                        Value::Object(map)
                    })
                    .collect();
                let doc = serde_json::json!({
                    "config": serde_json::to_value(config).expect("config serializes"),
                    "rows": rows,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("json");
                s.push('\n');
                s
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn cmd_correlate(common: &CommonArgs, n_samples: u64, points: usize) -> Result<(), CliError> {
    let protocol = common.protocol.unwrap_or(ProtocolArg::Tb);
    let omega = check_omega(protocol, common.omega)?;
    check_count("--n-samples", n_samples)?;
    check_count("--points", points as u64)?;
    let seed = common.seed.resolve();
    let model = model_for(protocol, omega);
    let rows = scan_curve(&model, &theta_grid(points), &MonteCarlo::new(n_samples, seed))?;

    let mut config = ExperimentConfig::new("correlate", protocol, common, seed);
    config.n_samples = Some(n_samples);
    config.points = Some(points);
    let mut table = Table::new(&["theta", "empirical", "analytic", "stderr", "n", "seed"]);
    for r in rows {
        table.push(vec![
            Cell::Float(r.theta),
            Cell::Float(r.empirical),
            Cell::Float(r.analytic),
            Cell::Float(r.stderr),
            Cell::Int(r.n),
            Cell::Int(r.seed),
        ]);
    }
    emit(common.out.as_deref(), &table.render(common.format, &config))
}

fn parse_settings(text: &str) -> Result<ChshSettings, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("--settings expects four numbers, got `{text}`")))?;
    match values[..] {
        [a, a_prime, b, b_prime] if values.iter().all(|v| v.is_finite()) => Ok(ChshSettings {
            a,
            a_prime,
            b,
            b_prime,
        }),
        _ => Err(invalid(format!("--settings expects four finite angles, got `{text}`"))),
    }
}

fn chsh_row(source: &str, r: &ChshReport, n: u64, seed: u64) -> Vec<Cell> {
    let mut row = vec![Cell::Text(source.into())];
    row.extend(r.correlations.iter().map(|&e| Cell::Float(e)));
    row.extend(r.s_values.iter().map(|&s| Cell::Float(s)));
    row.extend([
        Cell::Float(r.s_max),
        Cell::Float(r.two_term),
        Cell::Int(n),
        Cell::Int(seed),
    ]);
    row
}

fn cmd_chsh(common: &CommonArgs, n_samples: u64, settings: Option<&str>) -> Result<(), CliError> {
    let protocol = common.protocol.unwrap_or(ProtocolArg::Tb);
    let omega = check_omega(protocol, common.omega)?;
    check_count("--n-samples", n_samples)?;
    let settings = settings.map(parse_settings).transpose()?.unwrap_or(ChshSettings::STANDARD);
    let seed = common.seed.resolve();
    let model = model_for(protocol, omega);
    let analytic = chsh_at(&model, &settings, &CorrelationSource::Analytic)?;
    let sampled = chsh_at(
        &model,
        &settings,
        &CorrelationSource::MonteCarlo(MonteCarlo::new(n_samples, seed)),
    )?;

    let mut config = ExperimentConfig::new("chsh", protocol, common, seed);
    config.n_samples = Some(n_samples);
    config.settings = Some(settings);
    let mut table = Table::new(&[
        "source",
        "e_ab",
        "e_ab_prime",
        "e_a_prime_b",
        "e_a_prime_b_prime",
        "s1",
        "s2",
        "s3",
        "s4",
        "s_max",
        "two_term",
        "n",
        "seed",
    ]);
    table.push(chsh_row("analytic", &analytic, 0, seed));
    table.push(chsh_row("monte_carlo", &sampled, n_samples, seed));
    emit(common.out.as_deref(), &table.render(common.format, &config))
}

fn cmd_svozil_curve(common: &CommonArgs, n_samples: u64, points: usize) -> Result<(), CliError> {
    let protocol = common.protocol.unwrap_or(ProtocolArg::Svozil);
    if !is_svozil_family(protocol) {
        return Err(invalid("svozil-curve needs --protocol svozil or ns"));
    }
    let omega = check_omega(protocol, common.omega)?;
    check_count("--n-samples", n_samples)?;
    check_count("--points", points as u64)?;
    let seed = common.seed.resolve();
    let model = model_for(protocol, omega);
    let rows = scan_curve(&model, &theta_grid(points), &MonteCarlo::new(n_samples, seed))?;

    let mut config = ExperimentConfig::new("svozil-curve", protocol, common, seed);
    config.n_samples = Some(n_samples);
    config.points = Some(points);
    let mut table = Table::new(&[
        "theta", "empirical", "analytic", "linear", "singlet", "stderr", "n", "seed",
    ]);
    for r in rows {
        table.push(vec![
            Cell::Float(r.theta),
            Cell::Float(r.empirical),
            Cell::Float(r.analytic),
            Cell::Float(2.0 * r.theta / std::f64::consts::PI - 1.0),
            Cell::Float(singlet_correlation(r.theta)),
            Cell::Float(r.stderr),
            Cell::Int(r.n),
            Cell::Int(r.seed),
        ]);
    }
    emit(common.out.as_deref(), &table.render(common.format, &config))
}

fn parse_alice(text: &str, circle: bool) -> Result<Setting, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("--alice: cannot parse `{text}`")))?;
    match (circle, &values[..]) {
        (true, [angle]) if angle.is_finite() => Ok(Setting::Circle(PlaneAngle::new(*angle))),
        (false, [x, y, z]) => UnitVec3::normalize(*x, *y, *z)
            .map(Setting::Sphere)
            .map_err(|e| invalid(format!("--alice: {e}"))),
        (true, _) => Err(invalid("--alice takes one angle in radians on the circle")),
        (false, _) => Err(invalid("--alice takes x,y,z on the sphere")),
    }
}

/// Path of the transcript written next to `out` for one sweep.
pub fn transcript_path(out: &Path, transcript: &Transcript) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "attack".into());
    out.with_file_name(format!(
        "{stem}.transcript.{}.csv",
        transcript.schedule.geometry.label()
    ))
}

fn setting_components(s: &Setting) -> [Cell; 4] {
    let v = s.to_vec3();
    let azimuth = match s {
        Setting::Circle(a) => a.radians(),
        Setting::Sphere(v) => PlaneAngle::new(v.azimuth()).radians(),
    };
    [
        Cell::Float(v.x()),
        Cell::Float(v.y()),
        Cell::Float(v.z()),
        Cell::Float(azimuth),
    ]
}

fn attack_table(protocol: ProtocolArg, alice: &Setting, outcome: &AttackOutcome, delta: f64) -> Table {
    let mut table = Table::new(&[
        "protocol",
        "method",
        "sweeps",
        "true_x",
        "true_y",
        "true_z",
        "true_azimuth",
        "estimate_x",
        "estimate_y",
        "estimate_z",
        "estimate_azimuth",
        "sign_resolved",
        "error",
        "error_over_delta",
        "uncertainty",
        "within_uncertainty",
        "rounds",
        "cbit_count",
        "cbits_per_round",
    ]);
    let estimate = &outcome.estimate;
    let shown = estimate.signed_direction.unwrap_or(estimate.axis);
    let error = estimate.angular_error(alice);
    let sweeps: Vec<&str> = outcome.sweeps().iter().map(|g| g.label()).collect();
    let method = serde_json::to_value(outcome.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let mut row = vec![
        Cell::Text(format!("{protocol:?}").to_lowercase()),
        Cell::Text(method),
        Cell::Text(sweeps.join(" ")),
    ];
    row.extend(setting_components(alice));
    row.extend(setting_components(&shown));
    row.extend([
        Cell::Bool(estimate.sign_resolved),
        Cell::Float(error),
        Cell::Float(error / delta),
        Cell::Float(estimate.uncertainty),
        Cell::Bool(error <= estimate.uncertainty),
        Cell::Int(outcome.rounds() as u64),
        Cell::Int(outcome.cbit_count() as u64),
        Cell::Float(outcome.cbits_per_round()),
    ]);
    table.push(row);
    table
}

fn cmd_attack(
    common: &CommonArgs,
    n_sweep: usize,
    alice: Option<&str>,
    pairing: PairingArg,
) -> Result<(), CliError> {
    let protocol_arg = common.protocol.unwrap_or(ProtocolArg::Tb);
    let omega = check_omega(protocol_arg, common.omega)?;
    if n_sweep < 8 {
        return Err(invalid(format!("--n-sweep must be at least 8, got {n_sweep}")));
    }
    let protocol = match (protocol_arg, omega) {
        (ProtocolArg::Tb, _) => Protocol::Tb,
        (ProtocolArg::Ntb, _) => Protocol::Ntb,
        (ProtocolArg::Svozil, Some(omega)) => Protocol::Svozil { omega },
        (ProtocolArg::Ns, Some(omega)) => Protocol::Ns { omega },
        _ => unreachable!("omega checked above"),
    };
    if protocol.is_circle() && pairing == PairingArg::Orthogonal {
        return Err(invalid("--pairing applies to sphere sweeps only"));
    }
    let seed = common.seed.resolve();
    let alice = match alice {
        Some(text) => parse_alice(text, protocol.is_circle())?,
        None => {
            let mut stream = RandomStream::with_stream(seed, streams::SETTINGS);
            if protocol.is_circle() {
                Setting::Circle(sample_plane_angle(&mut stream))
            } else {
                Setting::Sphere(sample_unit_sphere(&mut stream))
            }
        }
    };
    let options = PipelineOptions {
        pairing: match pairing {
            PairingArg::Adjacent => Pairing::AdjacentOffset,
            PairingArg::Orthogonal => Pairing::OrthogonalPair,
        },
        ..PipelineOptions::default()
    };
    let outcome = attack_pipeline_with(protocol, alice, n_sweep, Some(Disclosure::AlongEstimate), options)?;

    let delta = std::f64::consts::PI / n_sweep as f64;
    let mut config = ExperimentConfig::new("attack", protocol_arg, common, seed);
    config.n_sweep = Some(n_sweep);
    config.delta = Some(delta);
    config.alice = Some(alice);
    config.pairing = (!protocol.is_circle()).then_some(pairing);

    if let Some(out) = common.out.as_deref() {
        for t in &outcome.transcripts {
            let mut text = String::new();
            let _ = writeln!(text, "# bellsim attack transcript");
            let _ = writeln!(text, "# config: {}", config.to_json());
            let _ = writeln!(
                text,
                "# sweep: {} channel: {}",
                serde_json::to_string(&t.schedule.geometry).expect("json"),
                serde_json::to_string(&t.channel).expect("json"),
            );
            text.push_str(&t.to_csv());
            emit(Some(&transcript_path(out, t)), &text)?;
        }
    }
    let table = attack_table(protocol_arg, &alice, &outcome, delta);
    emit(common.out.as_deref(), &table.render(common.format, &config))
}

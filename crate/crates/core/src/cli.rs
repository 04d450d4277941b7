//! Command-line front end.
//!
//! Scenario files are TOML documents deserialised into [`ScenarioConfig`];
//! `--set a.b=value` edits the parsed document before deserialisation, so
//! overrides obey the same schema (and the same unknown-key rejection) as the
//! file itself.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::sim::{self, presets, RunResult, ScenarioConfig, SweepParameter};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const MOVING_AVERAGE_FILE: &str = "moving_average.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Parser)]
#[command(
    name = "lsa-sim",
    version,
    about = "Fair LSA spectrum allocation simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its output bundle.
    Run(RunArgs),
    /// Run one scenario per parameter value.
    Sweep(SweepArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in preset name (see `presets`).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub source: Source,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set enforcement.omega=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-operator moving-average series.
    #[arg(long)]
    pub moving_average: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// omega, penalty_exponent or seed.
    #[arg(long)]
    pub parameter: SweepParameter,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub moving_average: bool,
}

/// Process exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidInput(_) | Error::DegenerateShares => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Presets => {
            print!("{}", cmd_presets());
            Ok(())
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_scenario(&args.scenario)?;
    let result = sim::run_scenario(&cfg)?;
    write_bundle(&args.out, &result, args.moving_average)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_scenario(&args.scenario)?;
    let runs = sim::sweep(&cfg, args.parameter, &args.values)?;
    fs::create_dir_all(&args.out)?;
    for (i, run) in runs.iter().enumerate() {
        write_bundle(
            &args.out.join(format!("value_{i:03}")),
            run,
            args.moving_average,
        )?;
    }
    write_sweep_table(
        &args.out.join(SWEEP_FILE),
        args.parameter,
        &args.values,
        &runs,
    )
}

pub fn cmd_presets() -> String {
    let mut out = String::new();
    for name in presets::NAMES {
        let cfg = presets::get(name).expect("listed preset exists");
        let supplies: Vec<String> = cfg.supply.at(0).iter().map(|b| format!("{b}")).collect();
        out.push_str(&format!(
            "{name:<10} protocol={:<12} N={} M={} W={} T={} supplies={}  {}\n",
            serde_plain(&cfg.protocol),
            cfg.operators,
            cfg.incumbents,
            cfg.window,
            cfg.instants,
            supplies.join("/"),
            presets::describe(name).unwrap_or(""),
        ));
    }
    out
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

/// Reads the scenario named by `args` and applies `--set` and `--seed`.
pub fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let mut doc: toml::Table = match (&args.source.config, &args.source.preset) {
        (Some(path), _) => parse_toml(&fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?)?,
        (None, Some(name)) => {
            let cfg = presets::get(name).ok_or_else(|| {
                Error::config(
                    "preset",
                    format!("unknown preset {name:?}; run `presets` for the list"),
                )
            })?;
            toml::Table::try_from(&cfg).map_err(|e| Error::config("preset", e.to_string()))?
        }
        (None, None) => {
            return Err(Error::config(
                "config",
                "either --config or --preset is required",
            ))
        }
    };
    for kv in &args.overrides {
        apply_override(&mut doc, kv)?;
    }
    if let Some(seed) = args.seed {
        doc.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    let cfg = config_from_table(doc)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_toml(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config("config", e.to_string().trim().to_string()))
}

pub fn config_from_table(doc: toml::Table) -> Result<ScenarioConfig> {
    ScenarioConfig::deserialize(toml::Value::Table(doc))
        .map_err(|e| Error::config("config", e.to_string().trim().to_string()))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg = config_from_table(parse_toml(text)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sets the dotted `key` in `doc` to `value`, parsed as a TOML value when
/// possible and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| Error::config("--set", format!("expected KEY=VALUE, got {kv:?}")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config("--set", format!("malformed key {key:?}")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("{p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Decimal rendering with at least nine significant digits that parses back
/// to the same `f64`.
pub fn format_decimal(x: f64) -> String {
    let mut s = x.to_string();
    let significant = s
        .chars()
        .filter(|c| c.is_ascii_digit())
        .skip_while(|&c| c == '0')
        .count();
    let missing = 9usize.saturating_sub(significant.max(1));
    if missing > 0 {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n(
            '0',
            missing + if x == 0.0 { 1 } else { 0 },
        ));
    }
    s
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: String,
    pub seed: u64,
    pub operators: usize,
    pub incumbents: usize,
    pub window: usize,
    pub instants: usize,
    pub metrics: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<RoundSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl Summary {
    pub fn from_result(r: &RunResult) -> Self {
        let rounds = (!r.rounds.is_empty()).then(|| RoundSummary {
            mean: r.rounds.iter().sum::<usize>() as f64 / r.rounds.len() as f64,
            min: *r.rounds.iter().min().expect("non-empty"),
            max: *r.rounds.iter().max().expect("non-empty"),
        });
        Summary {
            protocol: serde_plain(&r.config.protocol),
            seed: r.config.seed,
            operators: r.config.operators,
            incumbents: r.config.incumbents,
            window: r.config.window,
            instants: r.config.instants,
            metrics: r.report.clone(),
            rounds,
        }
    }
}

/// Writes trace, summary, config echo and optionally the moving averages.
pub fn write_bundle(dir: &Path, result: &RunResult, moving_average: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trace(&dir.join(TRACE_FILE), result)?;
    let summary = serde_json::to_string_pretty(&Summary::from_result(result))?;
    fs::write(dir.join(SUMMARY_FILE), summary + "\n")?;
    let echo = toml::to_string(&result.config).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(dir.join(CONFIG_FILE), echo)?;
    if moving_average {
        write_moving_average(&dir.join(MOVING_AVERAGE_FILE), result)?;
    }
    Ok(())
}

/// One row per (instant, operator, incumbent); operators and incumbents are
/// numbered from 1.
pub fn write_trace(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "instant",
        "operator",
        "incumbent",
        "demand",
        "allocated",
        "violation",
    ])?;
    for rec in result.trace.instants() {
        for (n, row) in rec.allocated.iter().enumerate() {
            for (m, &a) in row.iter().enumerate() {
                w.write_record([
                    rec.instant.to_string(),
                    (n + 1).to_string(),
                    (m + 1).to_string(),
                    format_decimal(rec.demand[n]),
                    format_decimal(a),
                    u8::from(rec.violations[n]).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parsed row of a trace file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub instant: u64,
    pub operator: usize,
    pub incumbent: usize,
    pub demand: f64,
    pub allocated: f64,
    pub violation: u8,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()?)
}

/// Columns: the last instant of each window, then one column per operator.
pub fn write_moving_average(path: &Path, result: &RunResult) -> Result<()> {
    let series = &result.report.moving_average;
    let window = result.report.moving_average_window;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["instant".to_string()];
    header.extend((1..=series.len()).map(|n| format!("operator_{n}")));
    w.write_record(&header)?;
    let len = series.first().map_or(0, Vec::len);
    for k in 0..len {
        let mut row = vec![(k + window).to_string()];
        row.extend(series.iter().map(|s| format_decimal(s[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sweep_table(
    path: &Path,
    parameter: SweepParameter,
    values: &[f64],
    runs: &[RunResult],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let (n_ops, n_incs) = runs
        .first()
        .map_or((0, 0), |r| (r.config.operators, r.config.incumbents));
    let mut header = vec![parameter.to_string(), "seed".into()];
    header.extend((1..=n_ops).map(|n| format!("share_{n}")));
    header.extend((1..=n_incs).map(|m| format!("unallocated_{m}")));
    header.extend(["dissatisfaction".into(), "jain_index".into()]);
    w.write_record(&header)?;
    for (v, r) in values.iter().zip(runs) {
        let m = &r.report;
        let mut row = vec![format_decimal(*v), r.config.seed.to_string()];
        row.extend(m.mean_share.iter().map(|&s| format_decimal(s)));
        row.extend(m.unallocated.iter().map(|u| format_decimal(u.value)));
        row.push(format_decimal(m.dissatisfaction.value));
        row.push(m.jain_index.map(format_decimal).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

//! Command-line front end: `validate`, `run`, `montecarlo`, `curves`.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input (including bad
//! flags and overrides), 3 a scenario that fails validation, 4 a runtime
//! failure (simulation error or unwritable output).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tokenomics_core::curves;
use tokenomics_core::fixed::Fixed;
use tokenomics_core::output;
use tokenomics_core::sim::{self, Execution, Scenario, SimError};

pub mod overrides;

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "tokenomics", version, about = "NFT burn-reward economy simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-path override, e.g. `groups.0.q=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check every group's ladder against the rarity factor ceiling.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run one scenario and write its report.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full event log as events.jsonl.
        #[arg(long)]
        events: bool,
    },
    /// Run seeds `seed..seed+runs` and write the aggregate.
    Montecarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        /// Run one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Emit figure data as CSV.
    Curves {
        #[arg(long, value_enum)]
        curve: Curve,
        /// Directory for `<curve>.csv`; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated `p` values (fig4).
        #[arg(long, value_delimiter = ',')]
        p: Vec<Fixed>,
        /// Comma-separated inflation factors (fig4).
        #[arg(long = "inflation", value_delimiter = ',')]
        inflation: Vec<Fixed>,
        /// Comma-separated pool depths (fig1).
        #[arg(long, value_delimiter = ',')]
        liquidity: Vec<Fixed>,
        /// Amount bought in each fig1 row.
        #[arg(long, default_value = "1")]
        trade: Fixed,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Curve {
    Fig1,
    Fig4,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// Printed to stdout before the error (e.g. a failing validation table).
    pub report: Option<String>,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: EXIT_PARSE, message: message.into(), report: None }
    }
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, message: message.into(), report: None }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into(), report: None }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(_) => Failure::validation(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<output::OutputError> for Failure {
    fn from(e: output::OutputError) -> Self {
        Failure::runtime(e.to_string())
    }
}

/// Reads the scenario, applies `--set` and `--seed`, and deserializes.
/// Errors here are parse errors; semantic validation happens later.
pub fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let path = &args.scenario;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let sets =
        args.set.iter().map(|s| overrides::Override::parse(s)).collect::<Result<Vec<_>, _>>().map_err(|e| Failure::parse(e.to_string()))?;
    let located = |e: tokenomics_core::sim::ScenarioError| {
        let at = if e.path.is_empty() || e.path == "." { String::new() } else { format!(" at `{}`", e.path) };
        Failure::parse(format!("{}{at}: {}", path.display(), e.message))
    };
    if sets.is_empty() && args.seed.is_none() {
        return Scenario::from_json(&text).map_err(located);
    }
    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    for o in &sets {
        o.apply(&mut doc).map_err(|e| Failure::parse(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        overrides::Override::parse(&format!("seed={seed}"))
            .expect("well formed")
            .apply(&mut doc)
            .map_err(|e| Failure::parse(e.to_string()))?;
    }
    Scenario::from_value(doc).map_err(located)
}

/// Per-level verdicts; the second value is true when every group is
/// accepted (inflation-safe or flagged inflationary).
pub fn validation_report(scenario: &Scenario) -> (String, bool) {
    let mut out = String::new();
    let mut ok = true;
    for v in scenario.ladder_checks() {
        let _ = writeln!(out, "group {} (inflationary: {})", v.group.0, v.inflationary);
        for l in &v.check.levels {
            let ceiling = l.ceiling.map_or("-".to_string(), |c| c.to_string());
            let _ = writeln!(
                out,
                "  level {}: p={} r={} ceiling={} expected_next={} current={} {}",
                l.level,
                l.p,
                l.r,
                ceiling,
                l.expected_next,
                l.current,
                if l.pass { "PASS" } else { "FAIL" }
            );
        }
        let verdict = if v.check.is_safe() {
            "PASS".to_string()
        } else {
            let levels: Vec<String> = v.check.violations().map(|l| l.level.to_string()).collect();
            let tag = if v.inflationary { "FAIL (allowed: inflationary)" } else { "FAIL" };
            format!("{tag} at level(s) {}", levels.join(", "))
        };
        ok &= v.accepted();
        let _ = writeln!(out, "group {}: {verdict}", v.group.0);
    }
    (out, ok)
}

pub fn cmd_validate(args: &ScenarioArgs) -> Result<String, Failure> {
    let scenario = load_scenario(args)?;
    scenario.check_structure().map_err(|e| Failure::validation(e.to_string()))?;
    let (text, ok) = validation_report(&scenario);
    if ok {
        Ok(text.trim_end().to_string())
    } else {
        let failing: Vec<&str> = text.lines().filter(|l| l.starts_with("group ") && l.contains(": FAIL at")).collect();
        let mut f = Failure::validation(format!("ladder above the rarity factor ceiling: {}", failing.join("; ")));
        f.report = Some(text);
        Err(f)
    }
}

pub fn cmd_run(args: &ScenarioArgs, out: &Path, events: bool) -> Result<String, Failure> {
    let scenario = load_scenario(args)?;
    scenario.validate().map_err(|e| Failure::validation(e.to_string()))?;
    let report = sim::run_scenario(&scenario)?;
    output::write_run(out, &report)?;
    if events {
        output::write_events(&out.join("events.jsonl"), &report)?;
    }
    Ok(report.summary_line())
}

pub fn cmd_montecarlo(args: &ScenarioArgs, out: &Path, runs: u64, sequential: bool) -> Result<String, Failure> {
    if runs == 0 {
        return Err(Failure::parse("--runs must be at least 1"));
    }
    let scenario = load_scenario(args)?;
    scenario.validate().map_err(|e| Failure::validation(e.to_string()))?;
    let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
    let report = sim::monte_carlo_with(&scenario, runs, execution)?;
    output::write_monte_carlo(out, &report)?;
    let last = report.series.last().expect("step 0 is always present");
    let spots: Vec<String> = last.groups.iter().map(|g| format!("g{}={}", g.group.0, g.spot_ratio.mean)).collect();
    let drift: Vec<String> = report.groups.iter().map(|g| format!("g{}={:.6}±{:.6}", g.group.0, g.drift_mean, g.drift_std_error)).collect();
    Ok(format!(
        "runs={} steps={} mean_spot[{}] burns={} drift[{}]",
        report.runs,
        report.steps,
        spots.join(" "),
        report.total_burns,
        drift.join(" ")
    ))
}

pub fn cmd_curves(curve: Curve, p: &[Fixed], inflation: &[Fixed], liquidity: &[Fixed], trade: Fixed) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: curves::CurveError| Failure::validation(e.to_string());
    match curve {
        Curve::Fig1 => {
            let grid = if liquidity.is_empty() { curves::default_liquidity_grid() } else { liquidity.to_vec() };
            for row in curves::slippage(&grid, trade).map_err(bad)? {
                w.serialize(row).map_err(|e| Failure::runtime(e.to_string()))?;
            }
        }
        Curve::Fig4 => {
            let p = if p.is_empty() { curves::default_p_grid() } else { p.to_vec() };
            let i = if inflation.is_empty() { curves::default_inflations() } else { inflation.to_vec() };
            for row in curves::rarity_ceiling(&p, &i).map_err(bad)? {
                w.serialize(row).map_err(|e| Failure::runtime(e.to_string()))?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn execute(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run { scenario, out, events } => cmd_run(&scenario, &out, events),
        Command::Montecarlo { scenario, out, runs, sequential } => cmd_montecarlo(&scenario, &out, runs, sequential),
        Command::Curves { curve, out, p, inflation, liquidity, trade } => {
            let csv = cmd_curves(curve, &p, &inflation, &liquidity, trade)?;
            match out {
                None => Ok(csv.trim_end().to_string()),
                Some(dir) => {
                    let name = match curve {
                        Curve::Fig1 => "fig1.csv",
                        Curve::Fig4 => "fig4.csv",
                    };
                    std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
                    let path = dir.join(name);
                    std::fs::write(&path, csv).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
                    Ok(format!("wrote {}", path.display()))
                }
            }
        }
    }
}

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { 0 });
        }
    };
    match execute(cli) {
        Ok(text) => {
            // a closed pipe (e.g. `| head`) is not a failure
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            if let Some(report) = &f.report {
                let _ = write!(std::io::stdout(), "{report}");
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

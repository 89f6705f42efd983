//! Report files: CSV series with a one-line header, JSON summaries.
//!
//! A run writes `timeseries.csv`, `nft_counts.csv`, `rewards.csv` and
//! `summary.json`; a Monte Carlo batch writes `mc_timeseries.csv` and
//! `mc_summary.json`. Output is a pure function of the report.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::amm::SlippagePoint;
use crate::curves::CeilingPoint;
use crate::rarity::UpgradeKind;
use crate::sim::{EventKind, MonteCarloReport, SimulationReport, Stat};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

type Result<T> = std::result::Result<T, OutputError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    write_csv_or_header(path, &[], rows)
}

/// Like `write_csv`, but writes `header` alone when there are no rows.
fn write_csv_or_header<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let csv_err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut empty = true;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
        empty = false;
    }
    if empty && !header.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    step: u64,
    group: u32,
    spot_ratio: String,
    ideal_ratio: String,
    deviation: String,
    inflation: String,
    cp_reserve: String,
    gov_reserve: String,
    k: &'a str,
    reward_reserve: String,
    cp_users: String,
    circulating: u64,
    minted: u64,
    burned: u64,
    nft_value: String,
    system_value: String,
    gov_price: String,
    arbitrage_profit: String,
}

#[derive(Serialize)]
struct CountRow {
    step: u64,
    group: u32,
    rarity: usize,
    circulating: u64,
}

const REWARD_HEADER: [&str; 6] = ["step", "group", "event", "amount", "I", "reserve_balance"];

#[derive(Serialize)]
struct RewardRow {
    step: u64,
    group: u32,
    event: &'static str,
    amount: String,
    #[serde(rename = "I")]
    inflation: String,
    reserve_balance: String,
}

pub fn write_run(dir: &Path, report: &SimulationReport) -> Result<()> {
    ensure_dir(dir)?;
    let series = report.series.iter().flat_map(|s| {
        s.groups.iter().map(move |g| SeriesRow {
            step: s.step,
            group: g.group.0,
            spot_ratio: g.spot_ratio.to_string(),
            ideal_ratio: g.ideal_ratio.to_string(),
            deviation: g.deviation.to_string(),
            inflation: g.inflation.to_string(),
            cp_reserve: g.cp_reserve.to_string(),
            gov_reserve: g.gov_reserve.to_string(),
            k: &g.k,
            reward_reserve: g.reward_reserve.to_string(),
            cp_users: g.cp_users.to_string(),
            circulating: g.circulating_total(),
            minted: g.minted,
            burned: g.burned,
            nft_value: g.nft_value.to_string(),
            system_value: g.system_value.to_string(),
            gov_price: s.gov_price.to_string(),
            arbitrage_profit: s.arbitrage_profit.to_string(),
        })
    });
    write_csv(&dir.join("timeseries.csv"), series)?;

    let counts = report.series.iter().flat_map(|s| {
        s.groups.iter().flat_map(move |g| {
            g.circulating.iter().enumerate().map(move |(rarity, &circulating)| CountRow {
                step: s.step,
                group: g.group.0,
                rarity,
                circulating,
            })
        })
    });
    write_csv(&dir.join("nft_counts.csv"), counts)?;

    let rewards = report.events.iter().filter_map(|e| {
        let (group, event, amount, inflation, reserve) = match &e.kind {
            EventKind::Upgrade { group, outcome, inflation, reserve_balance, .. } => match outcome.kind {
                UpgradeKind::Failure { reward } => (group, "burn", reward, *inflation, reserve_balance),
                UpgradeKind::Success { .. } => return None,
            },
            EventKind::Purchase { group, price, inflation, reserve_balance, .. } => {
                (group, "purchase", *price, *inflation, reserve_balance)
            }
            EventKind::InflationUpdate { group, factor, reserve_balance } => (group, "I_update", *factor, *factor, reserve_balance),
            _ => return None,
        };
        Some(RewardRow {
            step: e.step,
            group: group.0,
            event,
            amount: amount.to_string(),
            inflation: inflation.to_string(),
            reserve_balance: reserve.to_string(),
        })
    });
    write_csv_or_header(&dir.join("rewards.csv"), &REWARD_HEADER, rewards)?;

    write_json(&dir.join("summary.json"), &report.summary)
}

/// Writes the full event log as one JSON object per line.
pub fn write_events(path: &Path, report: &SimulationReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for e in &report.events {
        let line = serde_json::to_string(e).expect("events serialize");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct McRow {
    step: u64,
    group: u32,
    runs: u64,
    spot_ratio: String,
    spot_ratio_se: f64,
    deviation: String,
    deviation_se: f64,
    inflation: String,
    inflation_se: f64,
    reward_reserve: String,
    reward_reserve_se: f64,
    cp_users: String,
    cp_users_se: f64,
    circulating: String,
    circulating_se: f64,
    burned: String,
    burned_se: f64,
    system_value: String,
    system_value_se: f64,
    arbitrage_profit: String,
    arbitrage_profit_se: f64,
}

fn m(s: Stat) -> String {
    s.mean.to_string()
}

pub fn write_monte_carlo(dir: &Path, report: &MonteCarloReport) -> Result<()> {
    ensure_dir(dir)?;
    let rows = report.series.iter().flat_map(|s| {
        s.groups.iter().map(move |g| McRow {
            step: s.step,
            group: g.group.0,
            runs: g.runs,
            spot_ratio: m(g.spot_ratio),
            spot_ratio_se: g.spot_ratio.std_error,
            deviation: m(g.deviation),
            deviation_se: g.deviation.std_error,
            inflation: m(g.inflation),
            inflation_se: g.inflation.std_error,
            reward_reserve: m(g.reward_reserve),
            reward_reserve_se: g.reward_reserve.std_error,
            cp_users: m(g.cp_users),
            cp_users_se: g.cp_users.std_error,
            circulating: m(g.circulating),
            circulating_se: g.circulating.std_error,
            burned: m(g.burned),
            burned_se: g.burned.std_error,
            system_value: m(g.system_value),
            system_value_se: g.system_value.std_error,
            arbitrage_profit: m(s.arbitrage_profit),
            arbitrage_profit_se: s.arbitrage_profit.std_error,
        })
    });
    write_csv(&dir.join("mc_timeseries.csv"), rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        runs: u64,
        base_seed: u64,
        steps: u64,
        arbitrage_profit: Stat,
        total_burns: u64,
        groups: &'a [crate::sim::McGroupSummary],
    }
    let summary = Summary {
        runs: report.runs,
        base_seed: report.base_seed,
        steps: report.steps,
        arbitrage_profit: report.arbitrage_profit,
        total_burns: report.total_burns,
        groups: &report.groups,
    };
    write_json(&dir.join("mc_summary.json"), &summary)
}

pub fn write_slippage(path: &Path, rows: &[SlippagePoint]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_ceiling(path: &Path, rows: &[CeilingPoint]) -> Result<()> {
    write_csv(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_scenario, Scenario};

    const SCENARIO: &str = r#"{
        "seed": 5, "steps": 30, "external_gov_price": "10",
        "groups": [{
            "ladder": {"base_value": "10", "levels": [{"p": "0.5", "r": "1.2"}, {"p": "0.5", "r": "1.2"}]},
            "cp_total": "100000", "q": "0.5", "gov_liquidity": "5000", "ideal_ratio": "0.1", "initial_mint": 20
        }],
        "agents": [{"kind": "upgrader", "policy": {"kind": "always"}, "rebuy": true}]
    }"#;

    fn tmp(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("tokenomics-output-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn run_files_have_headers_and_rows() {
        let report = run_scenario(&Scenario::from_json(SCENARIO).unwrap()).unwrap();
        let dir = tmp("run");
        write_run(&dir, &report).unwrap();
        let ts = fs::read_to_string(dir.join("timeseries.csv")).unwrap();
        assert!(ts.starts_with("step,group,spot_ratio,"));
        assert_eq!(ts.lines().count(), 1 + 31);
        let counts = fs::read_to_string(dir.join("nft_counts.csv")).unwrap();
        assert_eq!(counts.lines().count(), 1 + 31 * 3);
        let rewards = fs::read_to_string(dir.join("rewards.csv")).unwrap();
        assert!(rewards.starts_with("step,group,event,amount,I,reserve_balance"));
        assert!(rewards.contains(",burn,"));
        assert!(rewards.contains(",purchase,"));
        assert!(rewards.contains(",I_update,"));
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["steps"], 30);
        write_events(&dir.join("events.jsonl"), &report).unwrap();
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unwritable_dir_errors() {
        let report = run_scenario(&Scenario::from_json(SCENARIO).unwrap()).unwrap();
        let file = tmp("file");
        fs::write(&file, "x").unwrap();
        assert!(matches!(write_run(&file.join("sub"), &report), Err(OutputError::Io { .. })));
        fs::remove_file(&file).unwrap();
    }
}

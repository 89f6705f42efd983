//! Batches of independent runs and their aggregate.
//!
//! Run `i` uses seed `seed + i`. Runs share nothing, so they may execute in
//! parallel; results are folded in run order, and the means are exact
//! fixed-point sums, so the aggregate does not depend on scheduling.

use serde::Serialize;

use crate::fixed::{Fixed, Wide};
use crate::ledger::GroupId;
use crate::rarity;

use super::engine::{run_scenario, Result, SimError};
use super::report::{AttemptStats, GroupRecord, SimulationReport};
use super::scenario::{Scenario, ScenarioError};

/// Runs folded per batch; bounds how many full reports are alive at once.
const BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Parallel across runs when built with the `parallel` feature,
    /// sequential otherwise.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Mean (floored to the fixed-point grid) and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: Fixed,
    pub std_error: f64,
}

#[derive(Clone, Debug, Default)]
struct Acc {
    n: u64,
    sum: Wide,
    sum_f: f64,
    sum_sq: f64,
}

impl Acc {
    fn push(&mut self, v: Fixed) {
        self.n += 1;
        self.sum += v.wide();
        let f = v.to_f64();
        self.sum_f += f;
        self.sum_sq += f * f;
    }

    fn stat(&self) -> Stat {
        if self.n == 0 {
            return Stat { mean: Fixed::ZERO, std_error: 0.0 };
        }
        let mean = Fixed::from_wide(self.sum / Wide::from(self.n)).expect("mean of fixed values fits");
        Stat { mean, std_error: std_error(self.n, self.sum_f, self.sum_sq) }
    }
}

fn std_error(n: u64, sum: f64, sum_sq: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
    (var / n).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McGroupStep {
    pub group: GroupId,
    pub runs: u64,
    pub spot_ratio: Stat,
    pub deviation: Stat,
    pub inflation: Stat,
    pub cp_reserve: Stat,
    pub gov_reserve: Stat,
    pub reward_reserve: Stat,
    pub cp_users: Stat,
    pub circulating: Stat,
    pub burned: Stat,
    pub nft_value: Stat,
    pub system_value: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McStep {
    pub step: u64,
    pub arbitrage_profit: Stat,
    pub groups: Vec<McGroupStep>,
}

/// Observed burns at one level against the failure PMF.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub level: u32,
    pub count: u64,
    pub frequency: f64,
    pub expected: Fixed,
    /// Binomial standard deviation of the frequency.
    pub sigma: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McGroupSummary {
    pub group: GroupId,
    pub entered_at_base: u64,
    pub at_top: u64,
    pub blocked_burns: u64,
    pub histogram: Vec<HistogramBin>,
    pub final_deviation: Stat,
    pub drift_mean: f64,
    pub drift_std_error: f64,
    pub attempts: Vec<AttemptStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub runs: u64,
    pub base_seed: u64,
    pub steps: u64,
    pub arbitrage_profit: Stat,
    pub total_burns: u64,
    pub groups: Vec<McGroupSummary>,
    pub series: Vec<McStep>,
}

#[derive(Clone, Debug, Default)]
struct GroupStepAcc {
    spot_ratio: Acc,
    deviation: Acc,
    inflation: Acc,
    cp_reserve: Acc,
    gov_reserve: Acc,
    reward_reserve: Acc,
    cp_users: Acc,
    circulating: Acc,
    burned: Acc,
    nft_value: Acc,
    system_value: Acc,
}

impl GroupStepAcc {
    fn push(&mut self, r: &GroupRecord) {
        self.spot_ratio.push(r.spot_ratio);
        self.deviation.push(r.deviation);
        self.inflation.push(r.inflation);
        self.cp_reserve.push(r.cp_reserve);
        self.gov_reserve.push(r.gov_reserve);
        self.reward_reserve.push(r.reward_reserve);
        self.cp_users.push(r.cp_users);
        self.circulating.push(Fixed::from_int(r.circulating_total()));
        self.burned.push(Fixed::from_int(r.burned));
        self.nft_value.push(r.nft_value);
        self.system_value.push(r.system_value);
    }

    fn finish(&self, group: GroupId) -> McGroupStep {
        McGroupStep {
            group,
            runs: self.spot_ratio.n,
            spot_ratio: self.spot_ratio.stat(),
            deviation: self.deviation.stat(),
            inflation: self.inflation.stat(),
            cp_reserve: self.cp_reserve.stat(),
            gov_reserve: self.gov_reserve.stat(),
            reward_reserve: self.reward_reserve.stat(),
            cp_users: self.cp_users.stat(),
            circulating: self.circulating.stat(),
            burned: self.burned.stat(),
            nft_value: self.nft_value.stat(),
            system_value: self.system_value.stat(),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct GroupSummaryAcc {
    entered: u64,
    at_top: u64,
    blocked: u64,
    histogram: Vec<u64>,
    final_deviation: Acc,
    drift_n: u64,
    drift_sum: f64,
    drift_sq: f64,
    attempts: Vec<AttemptStats>,
}

/// Folds run reports into a [`MonteCarloReport`].
pub struct Aggregator {
    scenario: Scenario,
    runs: u64,
    base_seed: u64,
    profit: Acc,
    total_burns: u64,
    // indexed by step, then by group id
    series: Vec<(Acc, Vec<Option<GroupStepAcc>>)>,
    groups: Vec<Option<GroupSummaryAcc>>,
}

impl Aggregator {
    pub fn new(scenario: &Scenario) -> Self {
        let n = scenario.groups.len();
        Aggregator {
            scenario: scenario.clone(),
            runs: 0,
            base_seed: scenario.seed,
            profit: Acc::default(),
            total_burns: 0,
            series: (0..=scenario.steps).map(|_| (Acc::default(), vec![None; n])).collect(),
            groups: vec![None; n],
        }
    }

    pub fn push(&mut self, report: &SimulationReport) {
        self.runs += 1;
        self.profit.push(report.summary.arbitrage_profit);
        self.total_burns += report.summary.total_burns;
        for (rec, (profit, groups)) in report.series.iter().zip(self.series.iter_mut()) {
            profit.push(rec.arbitrage_profit);
            for g in &rec.groups {
                groups[g.group.0 as usize].get_or_insert_with(Default::default).push(g);
            }
        }
        for g in &report.summary.groups {
            let acc = self.groups[g.group.0 as usize].get_or_insert_with(|| GroupSummaryAcc {
                histogram: vec![0; g.burn_histogram.len()],
                attempts: g.attempts.iter().map(|a| AttemptStats { from_rarity: a.from_rarity, ..Default::default() }).collect(),
                ..Default::default()
            });
            acc.entered += g.entered_at_base;
            acc.at_top += g.at_top;
            acc.blocked += g.blocked_burns;
            for (h, c) in acc.histogram.iter_mut().zip(&g.burn_histogram) {
                *h += c;
            }
            acc.final_deviation.push(g.final_deviation);
            acc.drift_n += 1;
            acc.drift_sum += g.drift;
            acc.drift_sq += g.drift * g.drift;
            for (a, b) in acc.attempts.iter_mut().zip(&g.attempts) {
                a.merge(b);
            }
        }
    }

    pub fn finish(self) -> MonteCarloReport {
        let series = self
            .series
            .iter()
            .enumerate()
            .map(|(step, (profit, groups))| McStep {
                step: step as u64,
                arbitrage_profit: profit.stat(),
                groups: groups.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| g.finish(GroupId(i as u32)))).collect(),
            })
            .collect();
        let groups = self
            .groups
            .iter()
            .enumerate()
            .filter_map(|(i, acc)| {
                let acc = acc.as_ref()?;
                let ladder = self.scenario.groups[i].ladder().ok()?;
                let total = acc.entered.max(1) as f64;
                let histogram = acc
                    .histogram
                    .iter()
                    .enumerate()
                    .map(|(k, &count)| {
                        let level = k as u32 + 1;
                        let expected = rarity::failure_pmf(&ladder, level).unwrap_or(Fixed::ZERO);
                        let e = expected.to_f64();
                        let sigma = (e * (1.0 - e) / total).sqrt();
                        let frequency = count as f64 / total;
                        let z = if sigma > 0.0 { (frequency - e) / sigma } else { 0.0 };
                        HistogramBin { level, count, frequency, expected, sigma, z }
                    })
                    .collect();
                let drift_mean = if acc.drift_n == 0 { 0.0 } else { acc.drift_sum / acc.drift_n as f64 };
                Some(McGroupSummary {
                    group: GroupId(i as u32),
                    entered_at_base: acc.entered,
                    at_top: acc.at_top,
                    blocked_burns: acc.blocked,
                    histogram,
                    final_deviation: acc.final_deviation.stat(),
                    drift_mean,
                    drift_std_error: std_error(acc.drift_n, acc.drift_sum, acc.drift_sq),
                    attempts: acc.attempts.clone(),
                })
            })
            .collect();
        MonteCarloReport {
            runs: self.runs,
            base_seed: self.base_seed,
            steps: self.scenario.steps,
            arbitrage_profit: self.profit.stat(),
            total_burns: self.total_burns,
            groups,
            series,
        }
    }
}

/// The scenario for run `index` of a batch.
pub fn run_variant(scenario: &Scenario, index: u64) -> Scenario {
    let mut s = scenario.clone();
    s.seed = scenario.seed.wrapping_add(index);
    s.record_events = false;
    s
}

pub fn monte_carlo(scenario: &Scenario, runs: u64) -> Result<MonteCarloReport> {
    monte_carlo_with(scenario, runs, Execution::default())
}

pub fn monte_carlo_with(scenario: &Scenario, runs: u64, execution: Execution) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(SimError::Scenario(ScenarioError { path: "runs".into(), message: "at least one run is required".into() }));
    }
    scenario.validate()?;
    let mut agg = Aggregator::new(scenario);
    let mut start = 0;
    while start < runs {
        let end = runs.min(start + BATCH as u64);
        for report in run_batch(scenario, start..end, execution) {
            agg.push(&report?);
        }
        start = end;
    }
    Ok(agg.finish())
}

fn run_batch(scenario: &Scenario, range: std::ops::Range<u64>, execution: Execution) -> Vec<Result<SimulationReport>> {
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        use rayon::prelude::*;
        return range.into_par_iter().map(|i| run_scenario(&run_variant(scenario, i))).collect();
    }
    let _ = execution;
    range.map(|i| run_scenario(&run_variant(scenario, i))).collect()
}

/// Mean and standard error of `x` where `x` is given as fixed-point samples;
/// for callers that aggregate their own metrics.
pub fn fixed_stat(samples: impl IntoIterator<Item = Fixed>) -> Stat {
    let mut acc = Acc::default();
    for s in samples {
        acc.push(s);
    }
    acc.stat()
}

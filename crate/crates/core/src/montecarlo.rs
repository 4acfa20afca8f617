//! Monte Carlo feeder studies over PV and battery penetration levels: each
//! run draws which households own which DER and where they connect, then
//! runs a power-flow time series and the problem detectors.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Scenario, SLOTS_PER_DAY};
use crate::hems::Schedule;
use crate::powerflow::{
    detect_thermal_overload, detect_voltage_problems, run_timeseries, Network, PowerflowError,
    SweepOptions,
};
use crate::seed::rng_for;

const ALLOCATION_STREAM: u64 = 0x616c_6c6f;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study: {0}")]
    Config(String),
    #[error("household `{id}` has no {scenario} schedule")]
    MissingSeries { id: String, scenario: Scenario },
    #[error("schedule store: {0}")]
    Store(String),
    #[error("{households} households cannot fill {points} load points")]
    TooFewHouseholds { households: usize, points: usize },
    #[error(transparent)]
    Powerflow(#[from] PowerflowError),
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("summary file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Split `n` items by `shares` with the largest-remainder rule; ties go to the
/// earlier share.
pub fn largest_remainder(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    if total <= 0.0 {
        let mut out = vec![0; shares.len()];
        if let Some(first) = out.first_mut() {
            *first = n;
        }
        return out;
    }
    let quotas: Vec<f64> = shares.iter().map(|s| s / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = n.saturating_sub(counts.iter().sum::<usize>());
    for &k in order.iter().take(missing) {
        counts[k] += 1;
    }
    counts
}

/// Number of households in Scenarios I, II and III at PV penetration `p`%
/// and battery penetration `b`% among PV owners.
pub fn scenario_counts(n: usize, p: f64, b: f64) -> [usize; 3] {
    let split = largest_remainder(n, &[100.0 - p, p]);
    let pv = largest_remainder(split[1], &[100.0 - b, b]);
    [split[0], pv[0], pv[1]]
}

fn check_level(what: &str, v: f64) -> Result<(), StudyError> {
    if (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(StudyError::Config(format!("{what} level {v} is outside 0..=100")))
    }
}

/// Scenario of each of `n` households: counts from [`scenario_counts`],
/// positions a uniform shuffle drawn from `rng_seed`.
pub fn allocate_scenarios(n: usize, p: f64, b: f64, rng_seed: u64) -> Result<Vec<Scenario>, StudyError> {
    check_level("PV", p)?;
    check_level("battery", b)?;
    let mut rng = rng_for(rng_seed, &[ALLOCATION_STREAM]);
    Ok(allocate_with(n, p, b, &mut rng))
}

fn allocate_with<R: rand::Rng>(n: usize, p: f64, b: f64, rng: &mut R) -> Vec<Scenario> {
    let counts = scenario_counts(n, p, b);
    let mut out: Vec<Scenario> = Scenario::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&s, c)| std::iter::repeat_n(s, c))
        .collect();
    out.shuffle(rng);
    out
}

/// Net grid import (import minus export) of every household under each
/// scenario, over a common run of days.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScheduleStore {
    pub start_day: usize,
    pub slots: usize,
    pub households: Vec<StoredHousehold>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredHousehold {
    pub id: String,
    /// Indexed by scenario.
    pub net_import: [Option<Vec<f64>>; 3],
}

impl ScheduleStore {
    /// Add one household's schedule under `scenario`, creating the household
    /// on first sight.
    pub fn insert(&mut self, scenario: Scenario, s: &Schedule) -> Result<(), StudyError> {
        if self.households.is_empty() {
            self.start_day = s.start_day;
            self.slots = s.len();
        } else if (s.start_day, s.len()) != (self.start_day, self.slots) {
            return Err(StudyError::Store(format!(
                "schedule of `{}` covers day {} for {} slots, store holds day {} for {} slots",
                s.customer_id,
                s.start_day,
                s.len(),
                self.start_day,
                self.slots
            )));
        }
        let h = match self.households.iter().position(|h| h.id == s.customer_id) {
            Some(k) => &mut self.households[k],
            None => {
                self.households.push(StoredHousehold {
                    id: s.customer_id.clone(),
                    net_import: [None, None, None],
                });
                self.households.last_mut().expect("just pushed")
            }
        };
        h.net_import[scenario.index()] = Some(s.net_import());
        Ok(())
    }

    fn check(&self, scenarios: &[Scenario]) -> Result<(), StudyError> {
        if self.households.is_empty() || self.slots == 0 || !self.slots.is_multiple_of(SLOTS_PER_DAY) {
            return Err(StudyError::Store("no whole days of schedules".into()));
        }
        for h in &self.households {
            for &sc in scenarios {
                if h.net_import[sc.index()].is_none() {
                    return Err(StudyError::MissingSeries {
                        id: h.id.clone(),
                        scenario: sc,
                    });
                }
            }
        }
        Ok(())
    }
}

fn default_pv_levels() -> Vec<f64> {
    vec![0.0, 25.0, 50.0, 75.0]
}

fn default_batt_levels() -> Vec<f64> {
    vec![0.0, 40.0, 80.0]
}

fn default_runs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default = "default_pv_levels")]
    pub pv_levels: Vec<f64>,
    #[serde(default = "default_batt_levels")]
    pub batt_levels: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Tariff the stored schedules were optimized under; carried into outputs.
    #[serde(default)]
    pub tariff: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub sweep: SweepOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            pv_levels: default_pv_levels(),
            batt_levels: default_batt_levels(),
            runs: default_runs(),
            tariff: String::new(),
            master_seed: 0,
            sweep: SweepOptions::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.runs == 0 {
            return Err(StudyError::Config("runs must be at least 1".into()));
        }
        if self.pv_levels.is_empty() {
            return Err(StudyError::Config("no PV levels".into()));
        }
        for &p in &self.pv_levels {
            check_level("PV", p)?;
        }
        for &b in &self.batt_levels {
            check_level("battery", b)?;
        }
        if self.pv_levels.iter().any(|&p| p > 0.0) && self.batt_levels.is_empty() {
            return Err(StudyError::Config("no battery levels".into()));
        }
        Ok(())
    }

    /// Penetration pairs in sweep order; battery levels apply only with PV.
    pub fn combos(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &p in &self.pv_levels {
            if p > 0.0 {
                out.extend(self.batt_levels.iter().map(|&b| (p, b)));
            } else {
                out.push((p, 0.0));
            }
        }
        out
    }

    fn scenarios_needed(&self) -> Vec<Scenario> {
        let combos = self.combos();
        let mut need = vec![Scenario::I];
        if combos.iter().any(|&(p, b)| p > 0.0 && b < 100.0) {
            need.push(Scenario::II);
        }
        if combos.iter().any(|&(p, b)| p > 0.0 && b > 0.0) {
            need.push(Scenario::III);
        }
        need
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub p: f64,
    pub b: f64,
    pub run: usize,
    pub max_head_loading_pct: f64,
    pub customers_with_voltage_problems_pct: f64,
    #[serde(skip)]
    pub nonconverged: usize,
    /// Household placed on each load point, in network order.
    #[serde(skip)]
    pub placement: Vec<usize>,
    #[serde(skip)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Distribution {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |f: f64| {
            let pos = f * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Distribution {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub p: f64,
    pub b: f64,
    pub runs: usize,
    pub max_head_loading_pct: Distribution,
    pub customers_with_voltage_problems_pct: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub tariff: String,
    pub master_seed: u64,
    pub rows: Vec<RunResult>,
    pub summaries: Vec<ComboSummary>,
    /// Snapshots that did not converge, summed over runs.
    pub nonconverged: usize,
}

impl StudyResults {
    pub fn summary(&self, p: f64, b: f64) -> Option<&ComboSummary> {
        self.summaries.iter().find(|s| s.p == p && s.b == b)
    }
}

/// Summaries of raw rows, one per (p, b) in order of first appearance.
pub fn summarize(rows: &[RunResult]) -> Vec<ComboSummary> {
    let mut order: Vec<(f64, f64)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&RunResult>> = BTreeMap::new();
    for r in rows {
        let k = match order.iter().position(|&(p, b)| p == r.p && b == r.b) {
            Some(k) => k,
            None => {
                order.push((r.p, r.b));
                order.len() - 1
            }
        };
        groups.entry(k).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, g)| {
            let mut g = g;
            g.sort_by_key(|r| r.run);
            let loading: Vec<f64> = g.iter().map(|r| r.max_head_loading_pct).collect();
            let volts: Vec<f64> = g.iter().map(|r| r.customers_with_voltage_problems_pct).collect();
            ComboSummary {
                p: order[k].0,
                b: order[k].1,
                runs: g.len(),
                max_head_loading_pct: Distribution::of(&loading),
                customers_with_voltage_problems_pct: Distribution::of(&volts),
            }
        })
        .collect()
}

fn level_key(v: f64) -> u64 {
    (v * 1000.0).round() as u64
}

/// One run: draw scenarios and placement from the run's own seed, solve the
/// time series and apply both detectors.
pub fn run_one(
    cfg: &StudyConfig,
    net: &Network,
    store: &ScheduleStore,
    p: f64,
    b: f64,
    run: usize,
) -> Result<RunResult, StudyError> {
    let points = net.load_points.len();
    let n = store.households.len();
    if n < points {
        return Err(StudyError::TooFewHouseholds {
            households: n,
            points,
        });
    }
    let mut rng = rng_for(cfg.master_seed, &[level_key(p), level_key(b), run as u64]);
    let mut chosen: Vec<usize> = (0..n).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(points);
    let scenarios = allocate_with(points, p, b, &mut rng);
    let injections: Vec<Vec<f64>> = chosen
        .iter()
        .zip(&scenarios)
        .map(|(&h, sc)| {
            store.households[h].net_import[sc.index()]
                .clone()
                .ok_or_else(|| StudyError::MissingSeries {
                    id: store.households[h].id.clone(),
                    scenario: *sc,
                })
        })
        .collect::<Result<_, _>>()?;
    let ts = run_timeseries(net, store.start_day, &injections, &cfg.sweep)?;
    let thermal = detect_thermal_overload(&ts.head_current, net.head_rating)?;
    let volts = detect_voltage_problems(&ts);
    Ok(RunResult {
        p,
        b,
        run,
        max_head_loading_pct: 100.0 * thermal.worst / net.head_rating,
        customers_with_voltage_problems_pct: 100.0 * volts.flagged_share(),
        nonconverged: ts.nonconverged.len(),
        placement: chosen,
        scenarios,
    })
}

/// Every run of every penetration pair. Runs execute in parallel; rows come
/// back ordered by pair, then run index.
pub fn run_study(cfg: &StudyConfig, net: &Network, store: &ScheduleStore) -> Result<StudyResults, StudyError> {
    cfg.validate()?;
    store.check(&cfg.scenarios_needed())?;
    let jobs: Vec<(f64, f64, usize)> = cfg
        .combos()
        .into_iter()
        .flat_map(|(p, b)| (0..cfg.runs).map(move |r| (p, b, r)))
        .collect();
    let rows: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(p, b, r)| run_one(cfg, net, store, p, b, r))
        .collect::<Result<_, _>>()?;
    let nonconverged = rows.iter().map(|r| r.nonconverged).sum();
    Ok(StudyResults {
        tariff: cfg.tariff.clone(),
        master_seed: cfg.master_seed,
        summaries: summarize(&rows),
        rows,
        nonconverged,
    })
}

#[derive(Serialize, Deserialize)]
struct RawRow {
    p: f64,
    b: f64,
    run: usize,
    max_head_loading_pct: f64,
    customers_with_voltage_problems_pct: f64,
}

/// `p,b,run,max_head_loading_pct,customers_with_voltage_problems_pct`.
pub fn write_raw_csv<W: Write>(out: W, rows: &[RunResult]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(RawRow {
            p: r.p,
            b: r.b,
            run: r.run,
            max_head_loading_pct: r.max_head_loading_pct,
            customers_with_voltage_problems_pct: r.customers_with_voltage_problems_pct,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: std::io::Read>(input: R) -> Result<Vec<RunResult>, StudyError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| {
            let row: RawRow = row?;
            Ok(RunResult {
                p: row.p,
                b: row.b,
                run: row.run,
                max_head_loading_pct: row.max_head_loading_pct,
                customers_with_voltage_problems_pct: row.customers_with_voltage_problems_pct,
                nonconverged: 0,
                placement: Vec::new(),
                scenarios: Vec::new(),
            })
        })
        .collect()
}

pub fn write_summary_json<W: Write>(out: W, results: &StudyResults) -> Result<(), StudyError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        tariff: &'a str,
        master_seed: u64,
        nonconverged_snapshots: usize,
        summaries: &'a [ComboSummary],
    }
    serde_json::to_writer_pretty(
        out,
        &Doc {
            tariff: &results.tariff,
            master_seed: results.master_seed,
            nonconverged_snapshots: results.nonconverged,
            summaries: &results.summaries,
        },
    )?;
    Ok(())
}

/// Box-plot data per penetration pair: loading and voltage-problem share
/// quartiles against a `p/b` label.
pub fn write_plot_csv<W: Write>(out: W, results: &StudyResults) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tariff",
        "combo",
        "p",
        "b",
        "metric",
        "min",
        "q1",
        "median",
        "q3",
        "max",
    ])?;
    for s in &results.summaries {
        let combo = format!("{}/{}", s.p, s.b);
        for (metric, d) in [
            ("max_head_loading_pct", &s.max_head_loading_pct),
            ("customers_with_voltage_problems_pct", &s.customers_with_voltage_problems_pct),
        ] {
            w.write_record([
                results.tariff.clone(),
                combo.clone(),
                s.p.to_string(),
                s.b.to_string(),
                metric.to_string(),
                d.min.to_string(),
                d.q1.to_string(),
                d.median.to_string(),
                d.q3.to_string(),
                d.max.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fourteen_arithmetic() {
        assert_eq!(scenario_counts(100, 50.0, 40.0), [50, 30, 20]);
        assert_eq!(scenario_counts(30, 0.0, 80.0), [30, 0, 0]);
        assert_eq!(scenario_counts(30, 100.0, 100.0), [0, 0, 30]);
        assert_eq!(scenario_counts(30, 75.0, 40.0), [8, 13, 9]);
        let a = allocate_scenarios(100, 50.0, 40.0, 3).unwrap();
        let count = |s| a.iter().filter(|&&x| x == s).count();
        assert_eq!((count(Scenario::I), count(Scenario::II), count(Scenario::III)), (50, 30, 20));
        assert_ne!(a, allocate_scenarios(100, 50.0, 40.0, 4).unwrap());
        assert!(allocate_scenarios(10, 120.0, 0.0, 1).is_err());
    }

    #[test]
    fn combos_skip_battery_levels_without_pv() {
        let cfg = StudyConfig::default();
        let c = cfg.combos();
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], (0.0, 0.0));
        assert_eq!(c[1], (25.0, 0.0));
    }

    #[test]
    fn quartiles() {
        let d = Distribution::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((d.min, d.q1, d.median, d.q3, d.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let d = Distribution::of(&[1.0, 2.0]);
        assert_eq!(d.median, 1.5);
    }
}

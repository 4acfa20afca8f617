//! Synthetic demand, PV and hot water traces fitted to historical data.

mod cluster;
mod hotwater;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CustomerTraces, DomainError, SLOTS_PER_DAY};
use crate::seed::derive_seed;

pub use cluster::{
    cluster_profiles, fit_cluster_model, sample_net_load_trace, sample_trace_with_states, Cluster,
    ClusterModel, DailyProfile, SampledTrace, Season,
};
pub use hotwater::{
    fit_hotwater_model, fit_weibull, interval_slots, sample_hotwater_day, sample_hotwater_day_with,
    sample_hotwater_days, sample_hotwater_events, DrawEvent, HotWaterModel, HwInterval,
    HW_INTERVALS,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history covers {days} days, at least {needed} needed")]
    InsufficientHistory { days: usize, needed: usize },
    #[error("clustering did not settle within {0} iterations")]
    NoConvergence(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model document version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("history file: {0}")]
    Format(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("history file: {0}")]
    Csv(#[from] csv::Error),
    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub concentration: f64,
    pub n_states: usize,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            concentration: 4.0,
            n_states: 20,
        }
    }
}

/// Everything needed to generate a pool, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisModels {
    pub version: u32,
    /// Base demand, kW.
    pub demand: ClusterModel,
    /// PV output normalized by each system's observed maximum.
    pub pv: ClusterModel,
    pub hot_water: HotWaterModel,
}

impl SynthesisModels {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(SynthesisError::Version {
                found: self.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        self.demand.validate()?;
        self.pv.validate()?;
        self.hot_water.validate()
    }

    pub fn to_json(&self) -> Result<String, SynthesisError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, SynthesisError> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

fn daily_profiles(start_day: usize, series: &[f64]) -> impl Iterator<Item = DailyProfile> + '_ {
    series
        .chunks(SLOTS_PER_DAY)
        .enumerate()
        .map(move |(d, v)| DailyProfile {
            day: start_day + d,
            values: v.to_vec(),
        })
}

/// Fit demand, normalized PV and hot water models to customer histories.
pub fn fit_models(
    histories: &[(String, CustomerTraces)],
    params: &SynthesisParams,
) -> Result<SynthesisModels, SynthesisError> {
    if histories.is_empty() {
        return Err(SynthesisError::EmptyHistory);
    }
    let mut demand = Vec::new();
    let mut pv = Vec::new();
    let mut draws = Vec::new();
    for (_, t) in histories {
        t.validate()?;
        demand.extend(daily_profiles(t.start_day, &t.base_demand));
        let top = t.pv.iter().copied().fold(0.0, f64::max);
        if top > 0.0 {
            let norm: Vec<f64> = t.pv.iter().map(|v| v / top).collect();
            pv.extend(daily_profiles(t.start_day, &norm).collect::<Vec<_>>());
        }
        draws.extend_from_slice(&t.hw_draw);
    }
    if pv.is_empty() {
        return Err(SynthesisError::InvalidParameter(
            "no history contains PV output".into(),
        ));
    }
    Ok(SynthesisModels {
        version: MODEL_FORMAT_VERSION,
        demand: fit_cluster_model(&demand, params.concentration, params.n_states)?,
        pv: fit_cluster_model(&pv, params.concentration, params.n_states)?,
        hot_water: fit_hotwater_model(&draws)?,
    })
}

/// Generate one customer's traces; `pv_size` in kWp scales the normalized PV.
pub fn sample_customer_traces(
    models: &SynthesisModels,
    seed: u64,
    index: u64,
    pv_size: Option<f64>,
    start_day: usize,
    days: usize,
) -> Result<CustomerTraces, SynthesisError> {
    let demand = sample_net_load_trace(&models.demand, derive_seed(seed, &[index, 0]), days)?;
    let pv = match pv_size {
        Some(kwp) => sample_net_load_trace(&models.pv, derive_seed(seed, &[index, 1]), days)?
            .into_iter()
            .map(|v| (v * kwp).max(0.0))
            .collect(),
        None => vec![0.0; days * SLOTS_PER_DAY],
    };
    let hw_draw = sample_hotwater_days(&models.hot_water, derive_seed(seed, &[index, 2]), days)?;
    let traces = CustomerTraces {
        start_day,
        base_demand: demand.into_iter().map(|v| v.max(0.0)).collect(),
        pv,
        hw_draw,
    };
    traces.validate()?;
    Ok(traces)
}

#[derive(Debug, Serialize, Deserialize)]
struct HistoryRow {
    customer_id: String,
    day: usize,
    slot: usize,
    demand_kw: f64,
    pv_kw: f64,
    hw_draw_l: f64,
}

/// Histories in order of first appearance; each customer's rows must be
/// contiguous and chronological.
pub fn read_history_csv<R: Read>(input: R) -> Result<Vec<(String, CustomerTraces)>, SynthesisError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<(String, CustomerTraces)> = Vec::new();
    for row in r.deserialize() {
        let row: HistoryRow = row?;
        if out.last().is_none_or(|(id, _)| *id != row.customer_id) {
            if out.iter().any(|(id, _)| *id == row.customer_id) {
                return Err(SynthesisError::Format(format!(
                    "rows of customer `{}` are not contiguous",
                    row.customer_id
                )));
            }
            out.push((
                row.customer_id.clone(),
                CustomerTraces {
                    start_day: row.day,
                    base_demand: Vec::new(),
                    pv: Vec::new(),
                    hw_draw: Vec::new(),
                },
            ));
        }
        let t = &mut out.last_mut().expect("pushed above").1;
        let k = t.base_demand.len();
        let (day, slot) = (t.start_day + k / SLOTS_PER_DAY, k % SLOTS_PER_DAY + 1);
        if (row.day, row.slot) != (day, slot) {
            return Err(SynthesisError::Format(format!(
                "customer `{}`: expected day {day} slot {slot}, found day {} slot {}",
                row.customer_id, row.day, row.slot
            )));
        }
        t.base_demand.push(row.demand_kw);
        t.pv.push(row.pv_kw);
        t.hw_draw.push(row.hw_draw_l);
    }
    if out.is_empty() {
        return Err(SynthesisError::EmptyHistory);
    }
    for (_, t) in &out {
        t.validate()?;
    }
    Ok(out)
}

pub fn write_history_csv<W: Write>(
    out: W,
    histories: &[(String, CustomerTraces)],
) -> Result<(), SynthesisError> {
    let mut w = csv::Writer::from_writer(out);
    for (id, t) in histories {
        for k in 0..t.base_demand.len() {
            w.serialize(HistoryRow {
                customer_id: id.clone(),
                day: t.start_day + k / SLOTS_PER_DAY,
                slot: k % SLOTS_PER_DAY + 1,
                demand_kw: t.base_demand[k],
                pv_kw: t.pv[k],
                hw_draw_l: t.hw_draw[k],
            })?;
        }
    }
    w.flush().map_err(|e| SynthesisError::Format(e.to_string()))?;
    Ok(())
}

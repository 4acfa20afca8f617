//! Household scheduling of a battery and an electric water heater against a
//! retail tariff, solved window by window over a rolling horizon.

mod io;
mod model;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    month_of_day, BatteryParams, CustomerRecord, CustomerTraces, DomainError, EwhParams,
    DT_HOURS, SLOTS_PER_DAY,
};
use crate::solver::{MilpLimits, MilpStatus, SolverError};

pub use io::{read_schedules_csv, write_schedules_csv, write_stats_json};
pub use model::{build_hems_problem, HemsProblem, VarLayout};

#[derive(Debug, Error)]
pub enum HemsError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("customer `{id}`: base demand {max_demand:.3} kW exceeds grid limit {limit:.3} kW")]
    GridLimit {
        id: String,
        max_demand: f64,
        limit: f64,
    },
    #[error("customer `{id}`: water heater cannot hold its temperature band on day {day}")]
    ThermalInfeasible { id: String, day: usize },
    #[error("hot water draw of {draw} L exceeds the {volume} L tank")]
    DrawExceedsTank { draw: f64, volume: f64 },
    #[error("customer `{id}`: window starting day {first_day} ended with status {status:?}")]
    Window {
        id: String,
        first_day: usize,
        status: MilpStatus,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("schedule file: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Battery state of charge after one slot, kWh.
pub fn step_battery_soc(e_prev: f64, p_ch: f64, p_dis: f64, b: &BatteryParams) -> f64 {
    e_prev + DT_HOURS * (b.eta_charge * p_ch - p_dis / b.eta_discharge)
}

/// Tank temperature after one slot with heating power `p` kW and `draw` litres
/// replaced by inlet water.
pub fn step_ewh_temp(t_prev: f64, p: f64, draw: f64, w: &EwhParams) -> Result<f64, HemsError> {
    if draw > w.volume {
        return Err(HemsError::DrawExceedsTank {
            draw,
            volume: w.volume,
        });
    }
    Ok(t_prev
        + w.psi() * p
        + w.lambda() * (w.t_ambient - t_prev)
        + w.phi(draw) * (w.t_inlet - t_prev))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Daily,
    #[default]
    Monthly,
}

/// State carried between windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub soc: f64,
    pub temp: f64,
}

#[derive(Debug, Clone)]
pub struct HemsInstance {
    pub customer: CustomerRecord,
    pub traces: CustomerTraces,
    pub horizon: Horizon,
    /// Lower bound on the peak variable, kW: the month-to-date peak when a
    /// month is split into several windows.
    pub peak_coupling: f64,
    /// Overrides the record's initial battery charge and tank temperature.
    pub initial: Option<InitialState>,
}

impl HemsInstance {
    pub fn new(customer: CustomerRecord, traces: CustomerTraces, horizon: Horizon) -> Self {
        Self {
            customer,
            traces,
            horizon,
            peak_coupling: 0.0,
            initial: None,
        }
    }

    pub fn initial_state(&self) -> InitialState {
        self.initial.unwrap_or(InitialState {
            soc: self
                .customer
                .battery
                .as_ref()
                .map_or(0.0, |b| b.soc_initial),
            temp: self.customer.ewh.t_initial,
        })
    }

    /// Checks run before any solve: record and trace validity, the grid limit
    /// and whether full heating can keep the tank inside its band.
    pub fn validate(&self) -> Result<(), HemsError> {
        self.customer.validate()?;
        self.traces.validate()?;
        let id = &self.customer.id;
        let max_demand = self.traces.base_demand.iter().copied().fold(0.0, f64::max);
        if max_demand > self.customer.grid_limit {
            return Err(HemsError::GridLimit {
                id: id.clone(),
                max_demand,
                limit: self.customer.grid_limit,
            });
        }
        // Later windows start no colder than the terminal target t_initial, so
        // checking each window from there is conservative.
        let w = &self.customer.ewh;
        for (k, (first_day, days)) in windows(&self.traces, self.horizon).into_iter().enumerate() {
            let t0 = if k == 0 {
                self.initial_state().temp
            } else {
                w.t_initial
            };
            let offset = (first_day - self.traces.start_day) * SLOTS_PER_DAY;
            let draws = &self.traces.hw_draw[offset..offset + days * SLOTS_PER_DAY];
            if let Err(slot) = full_heating_check(w, t0, draws, 1.0)? {
                return Err(HemsError::ThermalInfeasible {
                    id: id.clone(),
                    day: first_day + slot / SLOTS_PER_DAY,
                });
            }
        }
        Ok(())
    }
}

/// Run the tank at the most heat it can take each slot, with draws scaled by
/// `scale`. `Ok(Err(slot))` names the first slot that falls below the band,
/// or the last slot when the run ends colder than `t_initial`.
fn full_heating_check(
    w: &EwhParams,
    t0: f64,
    draws: &[f64],
    scale: f64,
) -> Result<Result<(), usize>, HemsError> {
    let tol = 1e-9;
    let mut t = t0;
    for (s, &d) in draws.iter().enumerate() {
        let draw = d * scale;
        let idle = step_ewh_temp(t, 0.0, draw, w)?;
        let room = ((w.t_max - idle) / w.psi()).clamp(0.0, w.max_electrical_power());
        t = step_ewh_temp(t, room, draw, w)?;
        if t < w.t_min - tol {
            return Ok(Err(s));
        }
    }
    if t < w.t_initial - tol {
        return Ok(Err(draws.len() - 1));
    }
    Ok(Ok(()))
}

/// Scale down the draws of any day on which even continuous heating from
/// `t_initial` cannot hold the tank inside its band and back at `t_initial`
/// by midnight. Returns the 0-based offsets of the days changed.
pub fn fit_draws_to_tank(w: &EwhParams, draws: &mut [f64]) -> Vec<usize> {
    let feasible = |day: &[f64], scale: f64| {
        matches!(full_heating_check(w, w.t_initial, day, scale), Ok(Ok(())))
    };
    let mut changed = Vec::new();
    for (d, day) in draws.chunks_mut(SLOTS_PER_DAY).enumerate() {
        if feasible(day, 1.0) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(day, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Stay clear of the exact boundary the bisection converges to.
        day.iter_mut().for_each(|v| *v *= 0.99 * lo);
        changed.push(d);
    }
    changed
}

/// Optimized half-hourly operation of one customer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub customer_id: String,
    pub start_day: usize,
    pub grid_import: Vec<f64>,
    pub grid_export: Vec<f64>,
    pub batt_charge: Vec<f64>,
    pub batt_discharge: Vec<f64>,
    pub soc: Vec<f64>,
    pub ewh_power: Vec<f64>,
    pub ewh_temp: Vec<f64>,
    /// Not persisted to CSV; empty after reading a schedule file.
    pub ewh_duty: Vec<f64>,
    /// Not persisted to CSV; empty after reading a schedule file.
    pub total_demand: Vec<f64>,
    /// Peak variable per month (demand tariffs only).
    pub peak_var: BTreeMap<usize, f64>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.grid_import.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_import.is_empty()
    }

    pub fn days(&self) -> usize {
        self.len() / SLOTS_PER_DAY
    }

    /// Net grid exchange per slot, import positive.
    pub fn net_import(&self) -> Vec<f64> {
        self.grid_import
            .iter()
            .zip(&self.grid_export)
            .map(|(i, e)| i - e)
            .collect()
    }

    fn append(&mut self, other: Schedule) {
        if self.is_empty() {
            self.start_day = other.start_day;
            self.customer_id = other.customer_id.clone();
        }
        self.grid_import.extend(other.grid_import);
        self.grid_export.extend(other.grid_export);
        self.batt_charge.extend(other.batt_charge);
        self.batt_discharge.extend(other.batt_discharge);
        self.soc.extend(other.soc);
        self.ewh_power.extend(other.ewh_power);
        self.ewh_temp.extend(other.ewh_temp);
        self.ewh_duty.extend(other.ewh_duty);
        self.total_demand.extend(other.total_demand);
        for (m, p) in other.peak_var {
            let e = self.peak_var.entry(m).or_insert(p);
            *e = e.max(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub first_day: usize,
    pub days: usize,
    pub status: MilpStatus,
    pub objective: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub lp_iterations: usize,
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Debug, Clone)]
pub struct HemsRun {
    pub schedule: Schedule,
    pub windows: Vec<WindowStats>,
}

impl HemsRun {
    pub fn total_objective(&self) -> f64 {
        self.windows.iter().map(|w| w.objective).sum()
    }
}

/// Solve one window described entirely by `inst`.
pub fn solve_window(inst: &HemsInstance, limits: &MilpLimits) -> Result<(Schedule, WindowStats), HemsError> {
    let problem = build_hems_problem(inst)?;
    let sol = crate::solver::solve_milp(&problem.milp, limits)?;
    let usable = match sol.status {
        MilpStatus::Optimal => true,
        MilpStatus::LimitReached => !sol.values.is_empty(),
        _ => false,
    };
    if !usable {
        return Err(HemsError::Window {
            id: inst.customer.id.clone(),
            first_day: inst.traces.start_day,
            status: sol.status,
        });
    }
    let schedule = problem.extract(inst, &sol.values);
    let stats = WindowStats {
        first_day: inst.traces.start_day,
        days: inst.traces.days(),
        status: sol.status,
        objective: sol.objective,
        gap: sol.gap,
        nodes_explored: sol.nodes_explored,
        lp_iterations: sol.lp_iterations,
        variables: problem.milp.lp.num_vars(),
        constraints: problem.milp.lp.num_constraints(),
    };
    Ok((schedule, stats))
}

/// Consecutive windows `(first_day, days)` tiling the traces.
pub fn windows(traces: &CustomerTraces, horizon: Horizon) -> Vec<(usize, usize)> {
    let first = traces.start_day;
    let last = first + traces.days() - 1;
    let mut out = Vec::new();
    let mut day = first;
    while day <= last {
        let len = match horizon {
            Horizon::Daily => 1,
            Horizon::Monthly => {
                let m = month_of_day(day).expect("validated traces");
                let mut end = day;
                while end < last && month_of_day(end + 1).expect("validated traces") == m {
                    end += 1;
                }
                end - day + 1
            }
        };
        out.push((day, len));
        day += len;
    }
    out
}

/// Solve every window in order, threading battery charge, tank temperature
/// and, for demand tariffs, the month-to-date peak into the next window.
pub fn run_rolling_horizon(inst: &HemsInstance, limits: &MilpLimits) -> Result<HemsRun, HemsError> {
    inst.validate()?;
    let mut state = inst.initial_state();
    let mut peak = inst.peak_coupling;
    let mut month = month_of_day(inst.traces.start_day)?;
    let mut schedule = Schedule::default();
    let mut stats = Vec::new();
    for (first_day, days) in windows(&inst.traces, inst.horizon) {
        let m = month_of_day(first_day)?;
        if m != month {
            month = m;
            peak = 0.0;
        }
        let window = HemsInstance {
            customer: inst.customer.clone(),
            traces: inst.traces.window(first_day, days),
            horizon: inst.horizon,
            peak_coupling: peak,
            initial: Some(state),
        };
        let (part, st) = solve_window(&window, limits)?;
        state = InitialState {
            soc: *part.soc.last().expect("non-empty window"),
            temp: *part.ewh_temp.last().expect("non-empty window"),
        };
        peak = part.grid_import.iter().copied().fold(peak, f64::max);
        schedule.append(part);
        stats.push(st);
    }
    schedule.customer_id = inst.customer.id.clone();
    Ok(HemsRun {
        schedule,
        windows: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_step_examples() {
        let b = BatteryParams::with_capacity(10.0);
        assert!((step_battery_soc(2.0, 2.0, 0.0, &b) - 2.948_683).abs() < 1e-6);
        assert!((step_battery_soc(5.0, 0.0, 2.0, &b) - 3.945_907).abs() < 1e-6);
        assert_eq!(step_battery_soc(3.3, 0.0, 0.0, &b), 3.3);
    }

    #[test]
    fn ewh_step_examples() {
        let w = EwhParams::standard();
        let t = step_ewh_temp(60.0, 3.6, 0.0, &w).unwrap();
        // 1800 / 668.8 * 3.6 heating, 3.6 * 1.768 * 0.5 / 668.8 * 40 loss
        let expected = 60.0 + 1800.0 / 668.8 * 3.6 - 3.6 * 1.768 * 0.5 / 668.8 * 40.0;
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 69.499).abs() < 1e-3);

        let w2 = EwhParams {
            t_ambient: 60.0,
            ..EwhParams::standard()
        };
        let t = step_ewh_temp(60.0, 0.0, 8.0, &w2).unwrap();
        assert!((t - 57.75).abs() < 1e-12);

        let w3 = EwhParams {
            t_ambient: 65.0,
            ..EwhParams::standard()
        };
        assert_eq!(step_ewh_temp(65.0, 0.0, 0.0, &w3).unwrap(), 65.0);
        assert!(step_ewh_temp(65.0, 0.0, 161.0, &w3).is_err());
    }

    #[test]
    fn window_tiling() {
        let traces = CustomerTraces {
            start_day: 30,
            base_demand: vec![0.0; 5 * SLOTS_PER_DAY],
            pv: vec![0.0; 5 * SLOTS_PER_DAY],
            hw_draw: vec![0.0; 5 * SLOTS_PER_DAY],
        };
        assert_eq!(windows(&traces, Horizon::Monthly), vec![(30, 2), (32, 3)]);
        assert_eq!(windows(&traces, Horizon::Daily).len(), 5);
    }
}

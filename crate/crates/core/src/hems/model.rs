//! Constraint builder for one scheduling window.

use std::collections::BTreeMap;

use crate::domain::{month_of_day, Scenario, DT_HOURS, SLOTS_PER_DAY};
use crate::solver::{MilpProblem, Relation};

use super::{HemsError, HemsInstance, Schedule};

/// Variable indices of a built window, one entry per slot unless noted.
#[derive(Debug, Clone, Default)]
pub struct VarLayout {
    pub grid_import: Vec<usize>,
    /// Empty in Scenario I, where export is impossible.
    pub grid_export: Vec<usize>,
    pub grid_dir: Vec<usize>,
    pub batt_charge: Vec<usize>,
    pub batt_discharge: Vec<usize>,
    pub batt_dir: Vec<usize>,
    pub soc: Vec<usize>,
    pub ewh_duty: Vec<usize>,
    pub ewh_temp: Vec<usize>,
    pub peak: Option<usize>,
    /// Row index of the energy balance of each slot.
    pub balance_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HemsProblem {
    pub milp: MilpProblem,
    pub layout: VarLayout,
}

/// Variables per slot: grid import/export with a direction binary, battery
/// charge/discharge with a mode binary and end-of-slot charge, heater duty and
/// end-of-slot tank temperature. Demand tariffs add one peak variable.
pub fn build_hems_problem(inst: &HemsInstance) -> Result<HemsProblem, HemsError> {
    inst.customer.validate()?;
    inst.traces.validate()?;
    let c = &inst.customer;
    let tr = &inst.traces;
    let w = &c.ewh;
    let n = tr.base_demand.len();
    let init = inst.initial_state();
    let has_pv = c.scenario != Scenario::I;
    let battery = match c.scenario {
        Scenario::III => c.battery.as_ref(),
        _ => None,
    };
    let eta_i = c.inverter_eta;
    let g_max = c.grid_limit;
    let q = w.max_electrical_power();
    let (psi, lambda) = (w.psi(), w.lambda());

    let mut p = MilpProblem::new();
    let mut lay = VarLayout::default();
    let demand_rate = c.tariff.demand_rate();
    if c.tariff.kind.has_demand_charge() {
        lay.peak = Some(p.lp.add_var(inst.peak_coupling.max(0.0), g_max, demand_rate));
    }

    for k in 0..n {
        let slot = k % SLOTS_PER_DAY + 1;
        let price = c.tariff.price_at_slot(slot)?;
        let gp = p.lp.add_var(0.0, g_max, DT_HOURS * price);
        lay.grid_import.push(gp);
        let mut balance = vec![(gp, 1.0)];
        if has_pv {
            let gm = p.lp.add_var(0.0, g_max, -DT_HOURS * c.tariff.fit);
            let dg = p.add_binary(0.0);
            p.lp.add_constraint(vec![(gp, 1.0), (dg, -g_max)], Relation::Le, 0.0);
            p.lp.add_constraint(vec![(gm, 1.0), (dg, g_max)], Relation::Le, g_max);
            balance.push((gm, -1.0));
            lay.grid_export.push(gm);
            lay.grid_dir.push(dg);
        }
        if let Some(b) = battery {
            let bc = p.lp.add_var(0.0, b.p_charge_max, 0.0);
            let bd = p.lp.add_var(0.0, b.p_discharge_max, 0.0);
            let sb = p.add_binary(0.0);
            let soc = p.lp.add_var(b.soc_min, b.capacity, 0.0);
            p.lp
                .add_constraint(vec![(bc, 1.0), (sb, -b.p_charge_max)], Relation::Le, 0.0);
            p.lp.add_constraint(
                vec![(bd, 1.0), (sb, b.p_discharge_max)],
                Relation::Le,
                b.p_discharge_max,
            );
            let mut row = vec![
                (soc, 1.0),
                (bc, -DT_HOURS * b.eta_charge),
                (bd, DT_HOURS / b.eta_discharge),
            ];
            let rhs = if k == 0 {
                init.soc
            } else {
                row.push((lay.soc[k - 1], -1.0));
                0.0
            };
            p.lp.add_constraint(row, Relation::Eq, rhs);
            balance.push((bc, -eta_i));
            balance.push((bd, eta_i));
            lay.batt_charge.push(bc);
            lay.batt_discharge.push(bd);
            lay.batt_dir.push(sb);
            lay.soc.push(soc);
        }

        let u = p.lp.add_var(0.0, 1.0, 0.0);
        let last = k + 1 == n;
        let t_lo = if last { w.t_min.max(w.t_initial) } else { w.t_min };
        let temp = p.lp.add_var(t_lo, w.t_max, 0.0);
        let phi = w.phi(tr.hw_draw[k]);
        if phi > 1.0 {
            return Err(HemsError::DrawExceedsTank {
                draw: tr.hw_draw[k],
                volume: w.volume,
            });
        }
        let keep = 1.0 - lambda - phi;
        let mut row = vec![(temp, 1.0), (u, -psi * q)];
        let mut rhs = lambda * w.t_ambient + phi * w.t_inlet;
        if k == 0 {
            rhs += keep * init.temp;
        } else {
            row.push((lay.ewh_temp[k - 1], -keep));
        }
        p.lp.add_constraint(row, Relation::Eq, rhs);
        balance.push((u, -q));
        lay.ewh_duty.push(u);
        lay.ewh_temp.push(temp);

        let pv = if has_pv { tr.pv[k] } else { 0.0 };
        let balance_row = p
            .lp
            .add_constraint(balance, Relation::Eq, tr.base_demand[k] - eta_i * pv);
        lay.balance_rows.push(balance_row);

        if let Some(pk) = lay.peak {
            p.lp.add_constraint(vec![(gp, 1.0), (pk, -1.0)], Relation::Le, 0.0);
        }
    }
    Ok(HemsProblem { milp: p, layout: lay })
}

impl HemsProblem {
    /// Read a schedule out of solver values, snapping round-off onto bounds.
    pub fn extract(&self, inst: &HemsInstance, x: &[f64]) -> Schedule {
        let lp = &self.milp.lp;
        let get = |j: usize| x[j].clamp(lp.lower()[j], lp.upper()[j]);
        let series = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&j| get(j)).collect() };
        let n = self.layout.grid_import.len();
        let zeros = vec![0.0; n];
        let or_zero = |idx: &[usize]| if idx.is_empty() { zeros.clone() } else { series(idx) };
        let q = inst.customer.ewh.max_electrical_power();
        let duty = series(&self.layout.ewh_duty);
        let ewh_power: Vec<f64> = duty.iter().map(|u| u * q).collect();
        let soc = if self.layout.soc.is_empty() {
            vec![inst.initial_state().soc; n]
        } else {
            series(&self.layout.soc)
        };
        let total_demand = inst
            .traces
            .base_demand
            .iter()
            .zip(&ewh_power)
            .map(|(b, e)| b + e)
            .collect();
        let mut peak_var = BTreeMap::new();
        if let Some(pk) = self.layout.peak {
            let month = month_of_day(inst.traces.start_day).expect("validated traces");
            peak_var.insert(month, get(pk));
        }
        Schedule {
            customer_id: inst.customer.id.clone(),
            start_day: inst.traces.start_day,
            grid_import: series(&self.layout.grid_import),
            grid_export: or_zero(&self.layout.grid_export),
            batt_charge: or_zero(&self.layout.batt_charge),
            batt_discharge: or_zero(&self.layout.batt_discharge),
            soc,
            ewh_power,
            ewh_temp: series(&self.layout.ewh_temp),
            ewh_duty: duty,
            total_demand,
            peak_var,
        }
    }
}

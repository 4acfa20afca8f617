use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::SLOTS_PER_DAY;

use super::{HemsError, Schedule, WindowStats};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    customer_id: String,
    day: usize,
    slot: usize,
    grid_import_kw: f64,
    grid_export_kw: f64,
    batt_charge_kw: f64,
    batt_discharge_kw: f64,
    soc_kwh: f64,
    ewh_kw: f64,
    ewh_temp_c: f64,
}

pub fn write_schedules_csv<W: Write>(out: W, schedules: &[Schedule]) -> Result<(), HemsError> {
    let mut w = csv::Writer::from_writer(out);
    for s in schedules {
        for k in 0..s.len() {
            w.serialize(Row {
                customer_id: s.customer_id.clone(),
                day: s.start_day + k / SLOTS_PER_DAY,
                slot: k % SLOTS_PER_DAY + 1,
                grid_import_kw: s.grid_import[k],
                grid_export_kw: s.grid_export[k],
                batt_charge_kw: s.batt_charge[k],
                batt_discharge_kw: s.batt_discharge[k],
                soc_kwh: s.soc[k],
                ewh_kw: s.ewh_power[k],
                ewh_temp_c: s.ewh_temp[k],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Schedules in order of first appearance; rows of a customer must be
/// contiguous and chronological.
pub fn read_schedules_csv<R: Read>(input: R) -> Result<Vec<Schedule>, HemsError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<Schedule> = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let start_new = out.last().is_none_or(|s| s.customer_id != row.customer_id);
        if start_new {
            if out.iter().any(|s| s.customer_id == row.customer_id) {
                return Err(HemsError::Format(format!(
                    "rows of customer `{}` are not contiguous",
                    row.customer_id
                )));
            }
            out.push(Schedule {
                customer_id: row.customer_id.clone(),
                start_day: row.day,
                ..Default::default()
            });
        }
        let s = out.last_mut().expect("pushed above");
        let k = s.len();
        if row.day != s.start_day + k / SLOTS_PER_DAY || row.slot != k % SLOTS_PER_DAY + 1 {
            return Err(HemsError::Format(format!(
                "customer `{}`: expected day {} slot {}, found day {} slot {}",
                row.customer_id,
                s.start_day + k / SLOTS_PER_DAY,
                k % SLOTS_PER_DAY + 1,
                row.day,
                row.slot
            )));
        }
        s.grid_import.push(row.grid_import_kw);
        s.grid_export.push(row.grid_export_kw);
        s.batt_charge.push(row.batt_charge_kw);
        s.batt_discharge.push(row.batt_discharge_kw);
        s.soc.push(row.soc_kwh);
        s.ewh_power.push(row.ewh_kw);
        s.ewh_temp.push(row.ewh_temp_c);
    }
    if let Some(s) = out.iter().find(|s| s.len() % SLOTS_PER_DAY != 0) {
        return Err(HemsError::Format(format!(
            "customer `{}` does not cover whole days",
            s.customer_id
        )));
    }
    Ok(out)
}

/// Per-window solver statistics keyed by run label.
pub fn write_stats_json<W: Write>(
    out: W,
    stats: &BTreeMap<String, Vec<WindowStats>>,
) -> Result<(), HemsError> {
    serde_json::to_writer_pretty(out, stats)
        .map_err(|e| HemsError::Format(e.to_string()))
}

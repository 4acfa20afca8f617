//! Plot-ready tables gathered from the earlier stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use lvtariff::billing::{daily_peaks, monthly_peaks};
use lvtariff::domain::{PeakVariant, Scenario, TariffKind, TariffSchedule};
use lvtariff::hems::Schedule;
use lvtariff::montecarlo::{read_raw_csv, summarize, Distribution};

use crate::stages::Context;
use crate::Result;

#[derive(Deserialize)]
struct BillLine {
    customer_id: String,
    month: String,
    total: f64,
}

#[derive(Serialize)]
struct CostRow<'a> {
    tariff: &'a str,
    customer_id: &'a str,
    sc1: f64,
    sc2: f64,
    sc3: f64,
}

#[derive(Serialize)]
struct MonthlyPeakRow<'a> {
    tariff: &'a str,
    scenario: &'static str,
    customer_id: &'a str,
    month: usize,
    peak_kw: f64,
}

#[derive(Serialize)]
struct ClippingRow<'a> {
    energy_tariff: &'a str,
    demand_tariff: &'a str,
    scenario: &'static str,
    customer_id: &'a str,
    day: usize,
    energy_peak_kw: f64,
    demand_peak_kw: f64,
}

#[derive(Serialize)]
struct DistributionRow<'a> {
    tariff: &'a str,
    p: f64,
    b: f64,
    metric: &'static str,
    runs: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
}

/// The energy-only tariff a demand tariff is compared against.
fn counterpart(kind: TariffKind) -> Option<TariffKind> {
    match kind {
        TariffKind::FlatD => Some(TariffKind::Flat),
        TariffKind::ToUD => Some(TariffKind::ToU),
        _ => None,
    }
}

fn annual_totals(cx: &mut Context, tariff: &str, sc: Scenario) -> Result<BTreeMap<String, f64>> {
    let path = cx.layout.bills(tariff, sc);
    let mut r = csv::Reader::from_reader(cx.open(&path)?);
    let mut out = BTreeMap::new();
    for line in r.deserialize() {
        let line: BillLine = line.map_err(|e| cx.fail(format!("{}: {e}", path.display())))?;
        if line.month == "annual" {
            out.insert(line.customer_id, line.total);
        }
    }
    Ok(out)
}

pub(crate) fn run(cx: &mut Context) -> Result<()> {
    let tariffs: Vec<TariffSchedule> = cx.tariffs()?;
    let mut schedules: BTreeMap<(usize, Scenario), Vec<Schedule>> = BTreeMap::new();
    for (t, tariff) in tariffs.iter().enumerate() {
        for sc in Scenario::ALL {
            schedules.insert((t, sc), cx.load_schedules(&tariff.name, sc)?);
        }
    }

    let mut costs = Vec::new();
    for tariff in &tariffs {
        let per_sc = Scenario::ALL
            .iter()
            .map(|&sc| annual_totals(cx, &tariff.name, sc))
            .collect::<Result<Vec<_>>>()?;
        for (id, &sc1) in &per_sc[0] {
            let (Some(&sc2), Some(&sc3)) = (per_sc[1].get(id), per_sc[2].get(id)) else {
                return Err(cx.fail(format!("{}: customer `{id}` lacks a bill for every scenario", tariff.name)));
            };
            costs.push((tariff.name.clone(), id.clone(), [sc1, sc2, sc3]));
        }
    }
    cx.create(&cx.layout.report("annual_costs.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        for (tariff, id, c) in &costs {
            out.serialize(CostRow {
                tariff,
                customer_id: id,
                sc1: c[0],
                sc2: c[1],
                sc3: c[2],
            })?;
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;

    let mut monthly = Vec::new();
    for (&(t, sc), list) in &schedules {
        for s in list {
            let peaks = monthly_peaks(s.start_day, &s.grid_import, PeakVariant::MonthlyMax)
                .map_err(|e| cx.fail(format!("{}: {e}", s.customer_id)))?;
            for (month, peak) in peaks {
                monthly.push((t, sc, s.customer_id.clone(), month, peak));
            }
        }
    }
    cx.create(&cx.layout.report("monthly_peaks.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        for (t, sc, id, month, peak) in &monthly {
            out.serialize(MonthlyPeakRow {
                tariff: &tariffs[*t].name,
                scenario: sc.label(),
                customer_id: id,
                month: *month,
                peak_kw: *peak,
            })?;
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;

    let pairs: Vec<(usize, usize)> = tariffs
        .iter()
        .enumerate()
        .filter_map(|(d, demand)| {
            let want = counterpart(demand.kind)?;
            let e = tariffs.iter().position(|t| t.kind == want)?;
            Some((e, d))
        })
        .collect();
    cx.create(&cx.layout.report("peak_clipping.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        for &(e, d) in &pairs {
            for sc in Scenario::ALL {
                for (se, sd) in schedules[&(e, sc)].iter().zip(&schedules[&(d, sc)]) {
                    let (pe, pd) = (daily_peaks(&se.grid_import), daily_peaks(&sd.grid_import));
                    for (k, (a, b)) in pe.iter().zip(&pd).enumerate() {
                        out.serialize(ClippingRow {
                            energy_tariff: &tariffs[e].name,
                            demand_tariff: &tariffs[d].name,
                            scenario: sc.label(),
                            customer_id: &se.customer_id,
                            day: se.start_day + k,
                            energy_peak_kw: *a,
                            demand_peak_kw: *b,
                        })?;
                    }
                }
            }
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;

    // Study outputs are optional: a report without a study run simply has no
    // distribution rows.
    let mut dists = Vec::new();
    for tariff in &tariffs {
        let path = cx.layout.study_raw(&tariff.name);
        if !path.is_file() {
            continue;
        }
        let rows = read_raw_csv(cx.open(&path)?).map_err(|e| cx.fail(format!("{}: {e}", path.display())))?;
        for s in summarize(&rows) {
            dists.push((tariff.name.clone(), s));
        }
    }
    cx.create(&cx.layout.report("loading_voltage.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        for (tariff, s) in &dists {
            let metrics: [(&'static str, &Distribution); 2] = [
                ("max_head_loading_pct", &s.max_head_loading_pct),
                ("customers_with_voltage_problems_pct", &s.customers_with_voltage_problems_pct),
            ];
            for (metric, d) in metrics {
                out.serialize(DistributionRow {
                    tariff,
                    p: s.p,
                    b: s.b,
                    metric,
                    runs: s.runs,
                    min: d.min,
                    q1: d.q1,
                    median: d.median,
                    q3: d.q3,
                    max: d.max,
                    mean: d.mean,
                })?;
            }
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;
    Ok(())
}

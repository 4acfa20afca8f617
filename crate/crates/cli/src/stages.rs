use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use lvtariff::billing::{annual_cost, write_bills_csv};
use lvtariff::domain::{CustomerTraces, Scenario, TariffSchedule};
use lvtariff::fixtures::{fixture_set, households, Household};
use lvtariff::hems::{
    fit_draws_to_tank, read_schedules_csv, run_rolling_horizon, write_schedules_csv,
    write_stats_json, HemsInstance, Schedule, WindowStats,
};
use lvtariff::montecarlo::{
    allocate_scenarios, run_study, write_plot_csv, write_raw_csv, write_summary_json,
    ScheduleStore, StudyConfig,
};
use lvtariff::powerflow::{
    detect_thermal_overload, detect_voltage_problems, run_timeseries, write_timeseries_csv,
    Network, ThermalReport,
};
use lvtariff::synthesis::{
    fit_models, read_history_csv, sample_customer_traces, write_history_csv, SynthesisModels,
};

use crate::{report, Layout, PipelineConfig, PipelineError, Result, Stage};

/// Files a stage read and wrote.
#[derive(Debug, Default)]
pub struct StageIo {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub fn run(stage: Stage, cfg: &PipelineConfig, layout: &Layout) -> Result<StageIo> {
    let dir = layout.stage_dir(stage);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| PipelineError::data(stage, format!("{}: {e}", dir.display())))?;
    }
    let mut cx = Context {
        stage,
        cfg,
        layout,
        io: StageIo::default(),
    };
    match stage {
        Stage::Synth => synth(&mut cx)?,
        Stage::Optimize => optimize(&mut cx)?,
        Stage::Bill => bill(&mut cx)?,
        Stage::Powerflow => powerflow(&mut cx)?,
        Stage::Study => study(&mut cx)?,
        Stage::Report => report::run(&mut cx)?,
    }
    Ok(cx.io)
}

pub(crate) struct Context<'a> {
    pub stage: Stage,
    pub cfg: &'a PipelineConfig,
    pub layout: &'a Layout,
    pub io: StageIo,
}

impl Context<'_> {
    pub fn fail(&self, e: impl std::fmt::Display) -> PipelineError {
        PipelineError::data(self.stage, e)
    }

    /// Open a file this stage depends on, recording it as an input.
    pub fn open(&mut self, path: &Path) -> Result<BufReader<File>> {
        let f = File::open(path).map_err(|e| {
            self.fail(format!(
                "missing input {} ({e}); run the stage that produces it first",
                path.display()
            ))
        })?;
        self.io.inputs.push(path.to_path_buf());
        Ok(BufReader::new(f))
    }

    /// Write one output file through `write`, recording it.
    pub fn create<F, E>(&mut self, path: &Path, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::result::Result<(), E>,
        E: std::fmt::Display,
    {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| self.fail(format!("{}: {e}", parent.display())))?;
        }
        let f = File::create(path).map_err(|e| self.fail(format!("{}: {e}", path.display())))?;
        self.io.outputs.push(path.to_path_buf());
        let mut w = BufWriter::new(f);
        write(&mut w).map_err(|e| self.fail(format!("{}: {e}", path.display())))?;
        w.flush().map_err(|e| self.fail(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn tariffs(&self) -> Result<Vec<TariffSchedule>> {
        self.cfg.load_tariffs()
    }

    pub fn load_pool(&mut self) -> Result<Vec<(Household, CustomerTraces)>> {
        let hh: Vec<Household> = {
            let r = self.open(&self.layout.households())?;
            serde_json::from_reader(r).map_err(|e| self.fail(format!("households: {e}")))?
        };
        let traces = {
            let r = self.open(&self.layout.pool())?;
            read_history_csv(r).map_err(|e| self.fail(e))?
        };
        if hh.len() != traces.len() || hh.iter().zip(&traces).any(|(h, (id, _))| &h.id != id) {
            return Err(self.fail("households and pool traces list different customers"));
        }
        Ok(hh.into_iter().zip(traces.into_iter().map(|(_, t)| t)).collect())
    }

    pub fn load_schedules(&mut self, tariff: &str, sc: Scenario) -> Result<Vec<Schedule>> {
        let path = self.layout.schedules(tariff, sc);
        let r = self.open(&path)?;
        read_schedules_csv(r).map_err(|e| self.fail(format!("{}: {e}", path.display())))
    }

    pub fn load_store(&mut self, tariff: &str) -> Result<ScheduleStore> {
        let mut store = ScheduleStore::default();
        for sc in Scenario::ALL {
            for s in self.load_schedules(tariff, sc)? {
                store.insert(sc, &s).map_err(|e| self.fail(e))?;
            }
        }
        Ok(store)
    }

    pub fn network(&mut self) -> Result<Network> {
        match &self.cfg.network {
            Some(p) => {
                let p = p.clone();
                self.io.inputs.push(p.clone());
                Network::from_path(&p).map_err(|e| PipelineError::powerflow(self.stage, e))
            }
            None => Ok(Network::desk_feeder()),
        }
    }
}

fn synth(cx: &mut Context) -> Result<()> {
    let cfg = cx.cfg;
    let seeds = cfg.seeds();
    let models = if let Some(p) = &cfg.models {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut cx.open(p)?, &mut text).map_err(|e| cx.fail(e))?;
        SynthesisModels::from_json(&text).map_err(|e| cx.fail(e))?
    } else {
        let history: Vec<(String, CustomerTraces)> = match &cfg.history {
            Some(p) => read_history_csv(cx.open(p)?).map_err(|e| cx.fail(e))?,
            None => {
                let f = &cfg.fixture;
                fixture_set(f.customers, f.start_day, f.days, seeds.fixture)
                    .into_iter()
                    .map(|(h, t)| (h.id, t))
                    .collect()
            }
        };
        fit_models(&history, &cfg.synthesis).map_err(|e| cx.fail(e))?
    };
    let json = models.to_json().map_err(|e| cx.fail(e))?;
    cx.create(&cx.layout.models(), |w| w.write_all(json.as_bytes()))?;

    let pool = &cfg.pool;
    let hh = households(pool.customers, seeds.households);
    let traces: Vec<(String, CustomerTraces)> = hh
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let mut t = sample_customer_traces(&models, seeds.pool, i as u64, Some(h.pv_size), pool.start_day, pool.days)?;
            // Sampled draws can exceed what the tank can serve; trim those days.
            fit_draws_to_tank(&h.ewh, &mut t.hw_draw);
            Ok((h.id.clone(), t))
        })
        .collect::<std::result::Result<_, lvtariff::synthesis::SynthesisError>>()
        .map_err(|e| cx.fail(e))?;
    cx.create(&cx.layout.pool(), |w| write_history_csv(w, &traces))?;
    cx.create(&cx.layout.households(), |w| {
        serde_json::to_writer_pretty(&mut *w, &hh)?;
        w.write_all(b"\n").map_err(serde_json::Error::io)
    })?;
    Ok(())
}

fn optimize(cx: &mut Context) -> Result<()> {
    let pool = cx.load_pool()?;
    let cfg = cx.cfg;
    for tariff in cx.tariffs()? {
        let jobs: Vec<(usize, Scenario)> = Scenario::ALL
            .into_iter()
            .flat_map(|sc| (0..pool.len()).map(move |i| (i, sc)))
            .collect();
        let runs = jobs
            .par_iter()
            .map(|&(i, sc)| {
                let (h, t) = &pool[i];
                let inst = HemsInstance::new(h.record(sc, tariff.clone()), t.clone(), cfg.horizon);
                run_rolling_horizon(&inst, &cfg.solver)
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::hems(cx.stage, e))?;
        let mut stats: BTreeMap<String, Vec<WindowStats>> = BTreeMap::new();
        for sc in Scenario::ALL {
            let schedules: Vec<Schedule> = jobs
                .iter()
                .zip(&runs)
                .filter(|((_, s), _)| *s == sc)
                .map(|(_, r)| r.schedule.clone())
                .collect();
            cx.create(&cx.layout.schedules(&tariff.name, sc), |w| write_schedules_csv(w, &schedules))?;
        }
        for (&(i, sc), r) in jobs.iter().zip(&runs) {
            stats.insert(format!("{}/{}", pool[i].0.id, sc.label()), r.windows.clone());
        }
        cx.create(&cx.layout.solver_stats(&tariff.name), |w| write_stats_json(w, &stats))?;
    }
    Ok(())
}

fn bill(cx: &mut Context) -> Result<()> {
    for tariff in cx.tariffs()? {
        for sc in Scenario::ALL {
            let bills = cx
                .load_schedules(&tariff.name, sc)?
                .iter()
                .map(|s| {
                    annual_cost(&tariff, s.start_day, &s.grid_import, &s.grid_export)
                        .map(|b| (s.customer_id.clone(), tariff.name.clone(), b))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| cx.fail(e))?;
            cx.create(&cx.layout.bills(&tariff.name, sc), |w| write_bills_csv(w, &bills))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Detectors<'a> {
    tariff: &'a str,
    pv_pct: f64,
    batt_pct: f64,
    customers: Vec<String>,
    scenarios: Vec<Scenario>,
    thermal: ThermalReport,
    head_rating_a: f64,
    violating_days: Vec<usize>,
    flagged: Vec<bool>,
    flagged_pct: f64,
    nonconverged: Vec<(usize, usize)>,
    max_mismatch_pu: f64,
}

/// One time series per tariff: the first customers of the pool on the load
/// points, scenarios drawn at the configured penetration.
fn powerflow(cx: &mut Context) -> Result<()> {
    let net = cx.network()?;
    let cfg = cx.cfg;
    let points = net.load_points.len();
    let pf = &cfg.powerflow;
    let scenarios = allocate_scenarios(points, pf.pv_pct, pf.batt_pct, cfg.seeds().powerflow)
        .map_err(|e| PipelineError::study(cx.stage, e))?;
    for tariff in cx.tariffs()? {
        let store = cx.load_store(&tariff.name)?;
        if store.households.len() < points {
            return Err(cx.fail(format!(
                "{} customers in the pool, the network has {points} load points",
                store.households.len()
            )));
        }
        let injections: Vec<Vec<f64>> = store.households[..points]
            .iter()
            .zip(&scenarios)
            .map(|(h, sc)| h.net_import[sc.index()].clone().expect("store holds all scenarios"))
            .collect();
        let ts = run_timeseries(&net, store.start_day, &injections, &cfg.study.sweep)
            .map_err(|e| PipelineError::powerflow(cx.stage, e))?;
        let thermal = detect_thermal_overload(&ts.head_current, net.head_rating)
            .map_err(|e| PipelineError::powerflow(cx.stage, e))?;
        let volts = detect_voltage_problems(&ts);
        cx.create(&cx.layout.timeseries(&tariff.name), |w| write_timeseries_csv(w, &net, &ts))?;
        let report = Detectors {
            tariff: &tariff.name,
            pv_pct: pf.pv_pct,
            batt_pct: pf.batt_pct,
            customers: store.households[..points].iter().map(|h| h.id.clone()).collect(),
            scenarios: scenarios.clone(),
            thermal,
            head_rating_a: net.head_rating,
            flagged_pct: 100.0 * volts.flagged_share(),
            violating_days: volts.violating_days,
            flagged: volts.flagged,
            nonconverged: ts.nonconverged.clone(),
            max_mismatch_pu: ts.max_mismatch_pu,
        };
        cx.create(&cx.layout.detectors(&tariff.name), |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            w.write_all(b"\n").map_err(serde_json::Error::io)
        })?;
    }
    Ok(())
}

fn study(cx: &mut Context) -> Result<()> {
    let net = cx.network()?;
    let cfg = cx.cfg;
    for tariff in cx.tariffs()? {
        let store = cx.load_store(&tariff.name)?;
        let study_cfg = StudyConfig {
            tariff: tariff.name.clone(),
            master_seed: cfg.seeds().study,
            ..cfg.study.clone()
        };
        let results = run_study(&study_cfg, &net, &store).map_err(|e| PipelineError::study(cx.stage, e))?;
        cx.create(&cx.layout.study_raw(&tariff.name), |w| write_raw_csv(w, &results.rows))?;
        cx.create(&cx.layout.study_summary(&tariff.name), |w| write_summary_json(w, &results))?;
        cx.create(&cx.layout.study_plot(&tariff.name), |w| write_plot_csv(w, &results))?;
    }
    Ok(())
}

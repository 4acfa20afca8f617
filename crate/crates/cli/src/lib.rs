//! Pipeline front end: config loading, stage execution and the run manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lvtariff::domain::TariffSchedule;
use lvtariff::hems::{HemsError, Horizon};
use lvtariff::montecarlo::{StudyConfig, StudyError};
use lvtariff::powerflow::PowerflowError;
use lvtariff::seed::derive_seed;
use lvtariff::solver::MilpLimits;
use lvtariff::synthesis::SynthesisParams;

mod layout;
mod manifest;
mod report;
mod stages;

pub use layout::Layout;
pub use manifest::{sha256_file, Manifest, StageRecord, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synth,
    Optimize,
    Bill,
    Powerflow,
    Study,
    Report,
}

impl Stage {
    /// Execution order.
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::Optimize,
        Stage::Bill,
        Stage::Powerflow,
        Stage::Study,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Optimize => "optimize",
            Stage::Bill => "bill",
            Stage::Powerflow => "powerflow",
            Stage::Study => "study",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} stage: {message}")]
    Data { stage: Stage, message: String },
    #[error("{stage} stage: solver failure: {message}")]
    Solver { stage: Stage, message: String },
    #[error("{stage} stage: power flow failure: {message}")]
    Powerflow { stage: Stage, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Solver { .. } => 4,
            PipelineError::Powerflow { .. } => 5,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::Data { stage, .. }
            | PipelineError::Solver { stage, .. }
            | PipelineError::Powerflow { stage, .. } => Some(*stage),
        }
    }

    pub(crate) fn data(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            message: e.to_string(),
        }
    }

    pub(crate) fn hems(stage: Stage, e: HemsError) -> Self {
        match e {
            HemsError::Window { .. } | HemsError::Solver(_) => PipelineError::Solver {
                stage,
                message: e.to_string(),
            },
            other => Self::data(stage, other),
        }
    }

    pub(crate) fn powerflow(stage: Stage, e: PowerflowError) -> Self {
        match e {
            PowerflowError::Io(_) | PowerflowError::Csv(_) => Self::data(stage, e),
            other => PipelineError::Powerflow {
                stage,
                message: other.to_string(),
            },
        }
    }

    pub(crate) fn study(stage: Stage, e: StudyError) -> Self {
        match e {
            StudyError::Powerflow(p) => Self::powerflow(stage, p),
            StudyError::Config(m) => PipelineError::Config(m),
            other => Self::data(stage, other),
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Built-in fixture households used to fit the models when no measured
/// history is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub customers: usize,
    pub start_day: usize,
    pub days: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            customers: 10,
            start_day: 1,
            days: 90,
        }
    }
}

/// The synthetic customer pool the later stages work on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub customers: usize,
    pub start_day: usize,
    pub days: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            customers: 30,
            start_day: 1,
            days: 30,
        }
    }
}

/// Penetration pair for the single power-flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerflowConfig {
    pub pv_pct: f64,
    pub batt_pct: f64,
}

impl Default for PowerflowConfig {
    fn default() -> Self {
        Self {
            pv_pct: 50.0,
            batt_pct: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Measured history CSV to fit the synthesis models on.
    pub history: Option<PathBuf>,
    /// Used instead of `history` when that is absent.
    pub fixture: FixtureConfig,
    /// Previously fitted models; skips fitting altogether.
    pub models: Option<PathBuf>,
    /// Network JSON; the bundled 30-customer feeder when absent.
    pub network: Option<PathBuf>,
    pub out: PathBuf,
    pub stages: Vec<Stage>,
    /// Preset names or paths to tariff JSON documents.
    pub tariffs: Vec<String>,
    pub seed: u64,
    pub synthesis: SynthesisParams,
    pub pool: PoolConfig,
    pub horizon: Horizon,
    pub solver: MilpLimits,
    /// `tariff` and `master_seed` are filled in per tariff.
    pub study: StudyConfig,
    pub powerflow: PowerflowConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            history: None,
            fixture: FixtureConfig::default(),
            models: None,
            network: None,
            out: PathBuf::from("out"),
            stages: Stage::ALL.to_vec(),
            tariffs: ["Flat", "ToU", "FlatD", "ToUD"].map(String::from).to_vec(),
            seed: 1,
            synthesis: SynthesisParams::default(),
            pool: PoolConfig::default(),
            horizon: Horizon::Daily,
            solver: MilpLimits::default(),
            study: StudyConfig::default(),
            powerflow: PowerflowConfig::default(),
        }
    }
}

/// Per-stream seeds, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub fixture: u64,
    pub households: u64,
    pub pool: u64,
    pub powerflow: u64,
    pub study: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            fixture: derive_seed(master, &[1]),
            households: derive_seed(master, &[2]),
            pool: derive_seed(master, &[3]),
            powerflow: derive_seed(master, &[4]),
            study: derive_seed(master, &[5]),
        }
    }
}

impl PipelineConfig {
    /// Read a JSON config; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.history.as_mut().map(rebase);
        cfg.models.as_mut().map(rebase);
        cfg.network.as_mut().map(rebase);
        rebase(&mut cfg.out);
        for t in &mut cfg.tariffs {
            if is_tariff_file(t) && Path::new(t).is_relative() {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    /// Selected stages in execution order, without repeats.
    pub fn ordered_stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| self.stages.contains(s))
            .collect()
    }

    pub fn load_tariffs(&self) -> Result<Vec<TariffSchedule>> {
        let tariffs: Vec<TariffSchedule> = self
            .tariffs
            .iter()
            .map(|t| {
                let loaded = if is_tariff_file(t) {
                    TariffSchedule::from_path(Path::new(t))
                } else {
                    TariffSchedule::preset(t)
                };
                loaded
                    .and_then(|s| s.validate().map(|_| s))
                    .map_err(|e| PipelineError::Config(format!("tariff `{t}`: {e}")))
            })
            .collect::<Result<_>>()?;
        for (i, t) in tariffs.iter().enumerate() {
            if tariffs[..i].iter().any(|o| o.name == t.name) {
                return Err(PipelineError::Config(format!("tariff `{}` listed twice", t.name)));
            }
            if t.name.is_empty() || t.name.contains(['/', '\\']) || t.name.starts_with('.') {
                return Err(PipelineError::Config(format!(
                    "tariff name `{}` cannot be used as a directory name",
                    t.name
                )));
            }
        }
        Ok(tariffs)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.stages.is_empty() {
            return fail("no stages selected".into());
        }
        if self.tariffs.is_empty() {
            return fail("no tariffs listed".into());
        }
        self.load_tariffs()?;
        if self.pool.customers == 0 || self.pool.days == 0 {
            return fail("pool needs at least one customer and one day".into());
        }
        let last_day = self.pool.start_day + self.pool.days - 1;
        if self.pool.start_day == 0 || last_day > lvtariff::domain::DAYS_PER_YEAR {
            return fail(format!(
                "pool days {}..={last_day} fall outside the year",
                self.pool.start_day
            ));
        }
        if self.history.is_none() && self.models.is_none() {
            let f = &self.fixture;
            if f.customers == 0 || f.days == 0 || f.start_day == 0 {
                return fail("fixture needs customers, a start day and days".into());
            }
            if f.start_day + f.days - 1 > lvtariff::domain::DAYS_PER_YEAR {
                return fail("fixture days fall outside the year".into());
            }
        }
        self.study
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let p = &self.powerflow;
        for v in [p.pv_pct, p.batt_pct] {
            if !(0.0..=100.0).contains(&v) {
                return fail(format!("power-flow penetration {v} outside 0..=100"));
            }
        }
        for (what, path) in [
            ("history", &self.history),
            ("models", &self.models),
            ("network", &self.network),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return fail(format!("{what} file {} not found", p.display()));
                }
            }
        }
        Ok(())
    }
}

fn is_tariff_file(t: &str) -> bool {
    t.ends_with(".json")
}

/// Run the selected stages in order, writing `manifest.json` into the output
/// directory after every stage. The first failing stage stops the run and is
/// recorded as failed; its partial outputs are listed as incomplete.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| PipelineError::Config(format!("output directory {}: {e}", cfg.out.display())))?;
    let layout = Layout::new(&cfg.out);
    let mut manifest = Manifest::start(cfg, &layout)?;
    for stage in cfg.ordered_stages() {
        manifest.begin(stage);
        manifest.save(&layout)?;
        match stages::run(stage, cfg, &layout) {
            Ok(io) => manifest.finish(stage, &layout, &io.inputs, &io.outputs, None)?,
            Err(e) => {
                let partial = layout.existing_outputs(stage);
                manifest.finish(stage, &layout, &[], &partial, Some(&e))?;
                manifest.save(&layout)?;
                return Err(e);
            }
        }
        manifest.save(&layout)?;
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_run_in_pipeline_order() {
        let cfg = PipelineConfig {
            stages: vec![Stage::Report, Stage::Synth, Stage::Report, Stage::Bill],
            ..PipelineConfig::default()
        };
        assert_eq!(cfg.ordered_stages(), vec![Stage::Synth, Stage::Bill, Stage::Report]);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = std::env::temp_dir().join(format!("lvtariff-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(&path, r#"{"out": "results", "network": "feeder.json", "tariffs": ["ToU", "mine.json"]}"#).unwrap();
        let cfg = PipelineConfig::from_path(&path).unwrap();
        assert_eq!(cfg.out, dir.join("results"));
        assert_eq!(cfg.network, Some(dir.join("feeder.json")));
        assert_eq!(cfg.tariffs[0], "ToU");
        assert_eq!(PathBuf::from(&cfg.tariffs[1]), dir.join("mine.json"));
        assert_eq!(cfg.pool, PoolConfig::default());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_keys_and_presets_are_config_errors() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 3}"#).is_err());
        let cfg = PipelineConfig {
            tariffs: vec!["ToU".into(), "ToU".into()],
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
        let cfg = PipelineConfig {
            tariffs: vec!["FlatD4".into(), "ToU-network".into()],
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn seeds_are_distinct_streams() {
        let s = Seeds::from_master(3);
        let all = [s.fixture, s.households, s.pool, s.powerflow, s.study];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(s, Seeds::from_master(3));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Layout, PipelineConfig, PipelineError, Result, Seeds, Stage};

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    /// Started but not finished; left behind if the process dies.
    Incomplete,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    /// SHA-256 of each file the stage read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each file the stage wrote.
    pub outputs: BTreeMap<String, String>,
    /// Files a failed stage left behind; not to be trusted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub incomplete_outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything needed to repeat a run: the resolved config, the derived
/// seeds, input hashes and per-stage output hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Hash of the config with `out` and `stages` cleared, so that runs of
    /// single stages against one output directory share an identity.
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    /// SHA-256 of external input files (history, models, network, tariffs).
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub complete: bool,
}

fn config_identity(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.out = PathBuf::new();
    c.stages.clear();
    let text = serde_json::to_string(&c).expect("config serializes");
    hex(&Sha256::digest(text.as_bytes()))
}

impl Manifest {
    /// Fresh manifest, keeping records of other stages from an earlier
    /// manifest in the same directory when the config matches.
    pub fn start(cfg: &PipelineConfig, layout: &Layout) -> Result<Self> {
        let config_sha256 = config_identity(cfg);
        let mut inputs = BTreeMap::new();
        let files = [&cfg.history, &cfg.models, &cfg.network]
            .into_iter()
            .flatten()
            .cloned()
            .chain(cfg.tariffs.iter().filter(|t| t.ends_with(".json")).map(PathBuf::from));
        for p in files {
            let digest = sha256_file(&p)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            inputs.insert(p.display().to_string(), digest);
        }
        let previous: Option<Manifest> = fs::read_to_string(layout.manifest())
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let stages = match previous {
            Some(m) if m.config_sha256 == config_sha256 => m
                .stages
                .into_iter()
                .filter(|r| !cfg.stages.contains(&r.stage))
                .collect(),
            _ => Vec::new(),
        };
        let mut m = Self {
            tool: "lvtariff".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256,
            config: cfg.clone(),
            seeds: cfg.seeds(),
            inputs,
            stages,
            complete: false,
        };
        m.refresh();
        Ok(m)
    }

    fn record_mut(&mut self, stage: Stage) -> &mut StageRecord {
        let k = match self.stages.iter().position(|r| r.stage == stage) {
            Some(k) => k,
            None => {
                self.stages.push(StageRecord {
                    stage,
                    status: StageStatus::Incomplete,
                    inputs: BTreeMap::new(),
                    outputs: BTreeMap::new(),
                    incomplete_outputs: BTreeMap::new(),
                    error: None,
                });
                self.stages.sort_by_key(|r| r.stage);
                self.stages
                    .iter()
                    .position(|r| r.stage == stage)
                    .expect("just inserted")
            }
        };
        &mut self.stages[k]
    }

    fn refresh(&mut self) {
        self.complete = !self.stages.is_empty()
            && self.stages.iter().all(|r| r.status == StageStatus::Complete);
    }

    pub fn begin(&mut self, stage: Stage) {
        let r = self.record_mut(stage);
        r.status = StageStatus::Incomplete;
        r.inputs.clear();
        r.outputs.clear();
        r.incomplete_outputs.clear();
        r.error = None;
        self.refresh();
    }

    pub fn finish(
        &mut self,
        stage: Stage,
        layout: &Layout,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        error: Option<&PipelineError>,
    ) -> Result<()> {
        let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| {
                    sha256_file(p)
                        .map(|h| (layout.display(p), h))
                        .map_err(|e| PipelineError::data(stage, format!("{}: {e}", p.display())))
                })
                .collect()
        };
        let inputs = hash_all(inputs)?;
        let outputs = hash_all(outputs)?;
        let r = self.record_mut(stage);
        r.inputs = inputs;
        match error {
            None => {
                r.status = StageStatus::Complete;
                r.outputs = outputs;
            }
            Some(e) => {
                r.status = StageStatus::Failed;
                r.incomplete_outputs = outputs;
                r.error = Some(e.to_string());
            }
        }
        self.refresh();
        Ok(())
    }

    pub fn save(&self, layout: &Layout) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(layout.manifest(), text + "\n")
            .map_err(|e| PipelineError::Config(format!("{}: {e}", layout.manifest().display())))
    }

    pub fn load(layout: &Layout) -> Option<Self> {
        let text = fs::read_to_string(layout.manifest()).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}

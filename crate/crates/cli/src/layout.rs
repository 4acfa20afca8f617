use std::fs;
use std::path::{Path, PathBuf};

use lvtariff::domain::Scenario;

use crate::Stage;

/// Where every artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(match stage {
            Stage::Synth => "synth",
            Stage::Optimize => "optimize",
            Stage::Bill => "bills",
            Stage::Powerflow => "powerflow",
            Stage::Study => "study",
            Stage::Report => "report",
        })
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn models(&self) -> PathBuf {
        self.stage_dir(Stage::Synth).join("models.json")
    }

    pub fn pool(&self) -> PathBuf {
        self.stage_dir(Stage::Synth).join("pool.csv")
    }

    pub fn households(&self) -> PathBuf {
        self.stage_dir(Stage::Synth).join("households.json")
    }

    pub fn schedules(&self, tariff: &str, sc: Scenario) -> PathBuf {
        self.stage_dir(Stage::Optimize)
            .join(tariff)
            .join(format!("{}.csv", sc.label()))
    }

    pub fn solver_stats(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Optimize).join(tariff).join("stats.json")
    }

    pub fn bills(&self, tariff: &str, sc: Scenario) -> PathBuf {
        self.stage_dir(Stage::Bill)
            .join(tariff)
            .join(format!("{}.csv", sc.label()))
    }

    pub fn timeseries(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Powerflow).join(tariff).join("timeseries.csv")
    }

    pub fn detectors(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Powerflow).join(tariff).join("detectors.json")
    }

    pub fn study_raw(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Study).join(tariff).join("raw.csv")
    }

    pub fn study_summary(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Study).join(tariff).join("summary.json")
    }

    pub fn study_plot(&self, tariff: &str) -> PathBuf {
        self.stage_dir(Stage::Study).join(tariff).join("plot.csv")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.stage_dir(Stage::Report).join(name)
    }

    /// Path as recorded in the manifest: relative to the output directory
    /// when inside it, with `/` separators.
    pub fn display(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Every file currently under a stage's directory, sorted.
    pub fn existing_outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut pending = vec![self.stage_dir(stage)];
        while let Some(dir) = pending.pop() {
            let Ok(entries) = fs::read_dir(&dir) else {
                continue;
            };
            for entry in entries.flatten() {
                let p = entry.path();
                if p.is_dir() {
                    pending.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }
}

//! Run manifests written next to every output.

use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::resample::SamplerKind;
use crate::sweep::{cell_seed, SweepGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Interrupted,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeed {
    pub sampler: SamplerKind,
    pub budget: usize,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub build: String,
    pub command: String,
    pub dataset_hash: Option<String>,
    /// Effective configuration, enough to rerun the command.
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub cell_seeds: Vec<CellSeed>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: RunStatus,
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `out.svg` -> `out.svg.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn grid_cell_seeds(grid: &SweepGrid) -> Vec<CellSeed> {
    grid.cells()
        .0
        .iter()
        .map(|c| CellSeed {
            sampler: c.sampler,
            budget: c.budget,
            k: c.k,
            epsilon: c.epsilon,
            seed: cell_seed(grid.seed, c.sampler, c.budget, c.k, c.epsilon),
        })
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, tool_version: &str, build: &str, config: serde_json::Value) -> Self {
        Self {
            tool_version: tool_version.into(),
            build: build.into(),
            command: command.into(),
            dataset_hash: None,
            config,
            master_seed: None,
            cell_seeds: Vec::new(),
            started_at: unix_now(),
            finished_at: None,
            status: RunStatus::Running,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, status: RunStatus) {
        self.status = status;
        self.finished_at = Some(unix_now());
    }

    /// Writes through a temporary file so readers never see a torn manifest.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, json + "\n")?;
        std::fs::rename(&tmp, path)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

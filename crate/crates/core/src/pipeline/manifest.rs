//! The run record: what each stage read, wrote and called.
//!
//! Artifact paths are relative to the output directory. A stage's `inputs`
//! map artifact paths to the hashes it consumed; each must match an output
//! of an earlier stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::gateway::wire::sha256_hex;
use crate::gateway::CallRecord;
use crate::planner::{AlphaChoice, TemplateId};
use crate::schedule::{inversion_timestep, InversionConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl ArtifactRecord {
    /// Hashes the file at `root/path`.
    pub fn of(root: &Path, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        Ok(Self { sha256: file_sha256(&root.join(&path))?, path })
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Hash of the config slice, upstream artifact hashes and template ids
    /// the stage depends on. Equal hashes allow the cached outputs to be reused.
    pub input_hash: String,
    pub inputs: BTreeMap<PathBuf, String>,
    pub outputs: Vec<ArtifactRecord>,
    pub seeds: BTreeMap<String, u64>,
    pub duration_ms: f64,
    /// Reused from an earlier run rather than recomputed.
    pub cached: bool,
    pub calls: Vec<CallRecord>,
    /// Stage-specific notes: prompts, model answers, detections, α.
    pub details: serde_json::Value,
}

impl StageRecord {
    pub fn output(&self, path: &Path) -> Option<&ArtifactRecord> {
        self.outputs.iter().find(|a| a.path == path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub version: u32,
    pub mode: String,
    pub config: RunConfig,
    pub templates: Vec<TemplateId>,
    pub stages: Vec<StageRecord>,
    pub alpha: Option<AlphaChoice>,
    pub t_inv: Option<usize>,
}

impl PipelineManifest {
    pub fn new(mode: &str, config: &RunConfig, templates: Vec<TemplateId>) -> Self {
        Self { version: MANIFEST_VERSION, mode: mode.into(), config: config.clone(), templates, stages: Vec::new(), alpha: None, t_inv: None }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Adds or replaces the record for `record.stage`.
    pub fn record(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|s| s.stage == record.stage) {
            Some(slot) => *slot = record,
            None => self.stages.push(record),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Checks that every output exists with its recorded hash, that every
    /// input was produced by an earlier stage with the same hash, and that the
    /// recorded α lies in range and maps to the recorded `t_inv`.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let mut produced: BTreeMap<&Path, &str> = BTreeMap::new();
        for stage in &self.stages {
            for (path, hash) in &stage.inputs {
                match produced.get(path.as_path()) {
                    Some(h) if h == hash => {}
                    Some(_) => {
                        return Err(Error::Manifest(format!(
                            "stage `{}` consumed {} with a hash that differs from its producer's",
                            stage.stage,
                            path.display()
                        )))
                    }
                    None => {
                        return Err(Error::Manifest(format!(
                            "stage `{}` consumed {}, which no earlier stage produced",
                            stage.stage,
                            path.display()
                        )))
                    }
                }
            }
            for artifact in &stage.outputs {
                let actual = file_sha256(&root.join(&artifact.path))
                    .map_err(|e| Error::Manifest(format!("{}: {e}", artifact.path.display())))?;
                if actual != artifact.sha256 {
                    return Err(Error::Manifest(format!("{} changed since it was recorded", artifact.path.display())));
                }
                produced.insert(&artifact.path, &artifact.sha256);
            }
        }
        if let Some(choice) = &self.alpha {
            let range = self.config.alpha_range;
            if !range.contains(choice.value) {
                return Err(Error::Manifest(format!("alpha {} outside [{}, {}]", choice.value, range.lo, range.hi)));
            }
            let schedule = self.config.schedule.build()?;
            let expected = inversion_timestep(&InversionConfig::new(choice.value, range, self.config.seed), &schedule);
            if self.t_inv != Some(expected) {
                return Err(Error::Manifest(format!("t_inv {:?} does not match alpha {} (expected {expected})", self.t_inv, choice.value)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(stage: &str, inputs: &[(&str, &str)], outputs: Vec<ArtifactRecord>) -> StageRecord {
        StageRecord {
            stage: stage.into(),
            input_hash: String::new(),
            inputs: inputs.iter().map(|(p, h)| (PathBuf::from(p), h.to_string())).collect(),
            outputs,
            seeds: BTreeMap::new(),
            duration_ms: 0.0,
            cached: false,
            calls: vec![],
            details: serde_json::Value::Null,
        }
    }

    #[test]
    fn completeness() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "a").unwrap();
        std::fs::write(dir.path().join("b.txt"), "b").unwrap();
        let a = ArtifactRecord::of(dir.path(), "a.txt").unwrap();
        let b = ArtifactRecord::of(dir.path(), "b.txt").unwrap();
        let mut m = PipelineManifest::new("run", &RunConfig::default(), vec![]);
        m.record(record("one", &[], vec![a.clone()]));
        m.record(record("two", &[("a.txt", &a.sha256)], vec![b]));
        m.verify(dir.path()).unwrap();

        let mut wrong = m.clone();
        wrong.stages[1].inputs.insert("a.txt".into(), "0".repeat(64));
        assert!(wrong.verify(dir.path()).is_err());

        let mut orphan = m.clone();
        orphan.stages[1].inputs.insert("c.txt".into(), a.sha256.clone());
        assert!(orphan.verify(dir.path()).is_err());

        std::fs::write(dir.path().join("b.txt"), "changed").unwrap();
        assert!(m.verify(dir.path()).is_err());
    }

    #[test]
    fn alpha_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = PipelineManifest::new("run", &RunConfig::default(), vec![]);
        m.alpha = Some(AlphaChoice { value: 0.8, source: crate::planner::AlphaSource::Fixed, response: None });
        m.t_inv = Some(800);
        m.verify(dir.path()).unwrap();
        m.t_inv = Some(700);
        assert!(m.verify(dir.path()).is_err());
        m.alpha = Some(AlphaChoice { value: 0.95, source: crate::planner::AlphaSource::Fixed, response: None });
        m.t_inv = Some(950);
        assert!(m.verify(dir.path()).is_err());
    }
}

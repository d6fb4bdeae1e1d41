//! Experiment configs, runners and run manifests behind the `qpwgan` CLI.

mod config;
mod discrete;
mod gmm;
mod io;
mod nn;
pub mod oracle;
mod potential;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    ExperimentConfig, ExperimentKind, NnDistanceConfig, OracleCheckConfig, Overrides,
    PotentialGeneratorConfig, RunSpec, ToyDiscreteConfig, ToyGmmConfig,
};
pub use io::{read_points_csv, write_points_csv};
pub use oracle::{OracleReport, PropertyResult};

use crate::error::{Error, Result};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

/// Written as `manifest.json` at the end of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: ExperimentKind,
    /// SHA-256 of the resolved config serialized with sorted keys.
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
    pub passed: bool,
}

/// Result of one experiment run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    /// Set by `oracle-check`.
    pub report: Option<OracleReport>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.passed {
            EXIT_OK
        } else {
            EXIT_PROPERTY_FAILURE
        }
    }
}

/// Hash of a config that does not depend on the key order of its source.
/// The output directory is left out, so the same experiment written to two
/// places hashes the same.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("out");
    }
    // serde_json::Value keeps object keys sorted.
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let tmp = dir.join("manifest.json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(manifest)? + "\n")?;
    std::fs::rename(&tmp, dir.join("manifest.json"))?;
    Ok(())
}

/// Runs a resolved config and writes its outputs plus the manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = now_unix();
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let hash = config_hash(cfg)?;
    let (mut files, passed, report) = match cfg {
        ExperimentConfig::OracleCheck(c) => {
            let (files, report) = oracle::run(c, &out)?;
            (files, report.passed, Some(report))
        }
        ExperimentConfig::ToyDiscrete(c) => (discrete::run(c, &out)?, true, None),
        ExperimentConfig::ToyGmm(c) => (gmm::run(c, &out)?, true, None),
        ExperimentConfig::PotentialGenerator(c) => (potential::run(c, &out)?, true, None),
        ExperimentConfig::NnDistance(c) => (nn::run(c, &out)?, true, None),
    };
    files.push("manifest.json".into());
    files.sort();
    let manifest = RunManifest {
        experiment: cfg.kind(),
        config_hash: hash,
        seed: cfg.seed(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        files,
        passed,
    };
    write_manifest(&out, &manifest)?;
    Ok(RunSummary {
        out_dir: out,
        manifest,
        report,
    })
}

//! Run manifests: the TOML file every CLI subcommand reads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cases::{build_case, CaseConfig, CaseOverrides};
use crate::output::VtkEncoding;
use crate::verify::FdConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Optimize,
    VerifySensitivity,
    MemoryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Builder name from [`crate::cases::CASE_NAMES`]; ignored when `case_config` is given.
    pub case: String,
    /// Checked against the subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Write a snapshot every this many outer iterations (or steps for `solve` of unsteady cases).
    #[serde(default = "one")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub vtk: VtkEncoding,
    #[serde(default)]
    pub overrides: CaseOverrides,
    #[serde(default)]
    pub fd: FdConfig,
    /// Full case description; replaces the builder when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_config: Option<CaseConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> usize {
    1
}

impl RunManifest {
    pub fn new(case: &str) -> Self {
        Self {
            case: case.into(),
            mode: None,
            output_dir: default_output(),
            snapshot_every: 1,
            vtk: VtkEncoding::default(),
            overrides: CaseOverrides::default(),
            fd: FdConfig::default(),
            case_config: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        self.fd.validate()
    }

    /// Fails when the manifest names a different mode than the one requested.
    pub fn check_mode(&self, requested: Mode) -> Result<()> {
        match self.mode {
            Some(m) if m != requested => Err(Error::Config(format!(
                "manifest mode {m:?} does not match the {requested:?} command"
            ))),
            _ => Ok(()),
        }
    }

    pub fn case_config(&self) -> Result<CaseConfig> {
        match &self.case_config {
            Some(c) => {
                c.lint()?;
                Ok(c.clone())
            }
            None => build_case(&self.case, &self.overrides),
        }
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output(&self) -> Result<PathBuf> {
        let dir = &self.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let probe = dir.join(".lkstopo-write-test");
        std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
        std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
        Ok(dir.clone())
    }
}

//! Run configuration: a TOML file supplies defaults, command-line flags override.
//!
//! The file comes from `--config`, else from `$REX_FORGE_CONFIG`.

use std::path::{Path, PathBuf};

use rex_forge_core::explain::{ExplainConfig, MissPolicy};
use rex_forge_core::interp::{ExecConfig, Quantifier};
use rex_forge_core::scene::DEFAULT_MIN_IOU;
use serde::Deserialize;

use crate::error::ForgeError;
use crate::formats::read_text;

pub const CONFIG_ENV: &str = "REX_FORGE_CONFIG";

/// Every setting is optional so a file and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub scenes: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub programs: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub min_iou: Option<f64>,
    pub quantifier: Option<String>,
    pub on_miss: Option<String>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, ForgeError> {
        toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))
    }

    /// Loads the file named by `explicit`, else by the environment, else nothing.
    ///
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self, ForgeError> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(ForgeError::MissingInput(path));
        }
        let mut settings =
            Self::from_toml(&read_text(&path)?).map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            settings.rebase(base);
        }
        Ok(settings)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.scenes,
            &mut self.regions,
            &mut self.programs,
            &mut self.templates,
            &mut self.mapping,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Values set in `flags` win over values in `self`.
    pub fn overlay(self, flags: Settings) -> Settings {
        Settings {
            scenes: flags.scenes.or(self.scenes),
            regions: flags.regions.or(self.regions),
            programs: flags.programs.or(self.programs),
            templates: flags.templates.or(self.templates),
            mapping: flags.mapping.or(self.mapping),
            out: flags.out.or(self.out),
            min_iou: flags.min_iou.or(self.min_iou),
            quantifier: flags.quantifier.or(self.quantifier),
            on_miss: flags.on_miss.or(self.on_miss),
            fraction: flags.fraction.or(self.fraction),
            seed: flags.seed.or(self.seed),
            workers: flags.workers.or(self.workers),
        }
    }
}

/// Fully resolved settings for `compile`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenes: PathBuf,
    pub regions: PathBuf,
    pub programs: PathBuf,
    pub templates: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub min_iou: f64,
    pub quantifier: Quantifier,
    pub on_miss: MissPolicy,
    pub seed: u64,
    pub workers: usize,
}

pub fn required(value: Option<PathBuf>, name: &str) -> Result<PathBuf, ForgeError> {
    let path = value.ok_or_else(|| ForgeError::Config(format!("--{name} is required")))?;
    existing(path)
}

pub fn existing(path: PathBuf) -> Result<PathBuf, ForgeError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(ForgeError::MissingInput(path))
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl RunConfig {
    pub fn resolve(s: Settings) -> Result<Self, ForgeError> {
        let min_iou = s.min_iou.unwrap_or(DEFAULT_MIN_IOU);
        if !(0.0..=1.0).contains(&min_iou) {
            return Err(ForgeError::Config(format!("min_iou {min_iou} is outside [0, 1]")));
        }
        let quantifier = match s.quantifier.as_deref() {
            Some(q) => q.parse().map_err(ForgeError::Config)?,
            None => Quantifier::default(),
        };
        let on_miss = match s.on_miss.as_deref() {
            Some(m) => m.parse().map_err(ForgeError::Config)?,
            None => MissPolicy::default(),
        };
        let workers = s.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(ForgeError::Config("workers must be at least 1".into()));
        }
        Ok(Self {
            scenes: required(s.scenes, "scenes")?,
            regions: required(s.regions, "regions")?,
            programs: required(s.programs, "programs")?,
            templates: s.templates.map(existing).transpose()?,
            mapping: s.mapping.map(existing).transpose()?,
            out: s.out,
            min_iou,
            quantifier,
            on_miss,
            seed: s.seed.unwrap_or(0),
            workers,
        })
    }

    pub fn exec_config(&self) -> ExecConfig {
        ExecConfig {
            quantifier: self.quantifier,
            ..ExecConfig::default()
        }
    }

    pub fn explain_config(&self) -> ExplainConfig {
        ExplainConfig {
            min_iou: self.min_iou,
            on_miss: self.on_miss,
            ..ExplainConfig::default()
        }
    }
}

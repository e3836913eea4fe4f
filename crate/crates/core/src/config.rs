//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys and malformed
//! values are rejected with the offending line and key. The resolved
//! configuration renders back to a sorted snapshot that parses to the same
//! values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Dim2;
use crate::harness::train::{Supervision, TrainConfig};
use crate::localize::ThresholdConfig;
use crate::model::ModelSizes;
use crate::separate::{SeparationConfig, SeparationScope};
use crate::synth::SynthConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Count,
    Seed,
    Real,
    Scope,
    Supervision,
    Switch,
    SeedList,
    Path,
}

/// Every accepted key with its type and default.
const KEYS: &[(&str, Kind, &str)] = &[
    ("alpha", Kind::Real, "0.1"),
    ("batch_size", Kind::Count, "8"),
    ("cam_score", Kind::Real, "0.45"),
    ("change_shift", Kind::Real, "0.3"),
    ("channels", Kind::Count, "8"),
    ("eval_interval", Kind::Count, "100"),
    ("features", Kind::Count, "8"),
    ("height", Kind::Count, "64"),
    ("instance_count_max", Kind::Count, "10"),
    ("instance_count_min", Kind::Count, "4"),
    ("instance_radius_max", Kind::Count, "5"),
    ("instance_radius_min", Kind::Count, "2"),
    ("iterations", Kind::Count, "2000"),
    ("learning_rate", Kind::Real, "0.05"),
    ("min_gap", Kind::Count, "3"),
    ("n_test", Kind::Count, "128"),
    ("n_train", Kind::Count, "1024"),
    ("n_val", Kind::Count, "64"),
    ("out_dir", Kind::Path, "runs/default"),
    ("p_unchanged_scene", Kind::Real, "0.5"),
    ("scope", Kind::Scope, "CC+CU+UU"),
    ("seed", Kind::Seed, "0"),
    ("seeds", Kind::SeedList, "0,1,2"),
    ("separation", Kind::Switch, "on"),
    ("supervision", Kind::Supervision, "weak"),
    ("t_high", Kind::Real, "0.6"),
    ("t_low", Kind::Real, "0.4"),
    ("texture_noise_sd", Kind::Real, "0.05"),
    ("warmup_iterations", Kind::Count, "200"),
    ("width", Kind::Count, "64"),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter()
        .find(|(k, ..)| *k == key)
        .map(|(_, kind, _)| *kind)
}

fn check_value(kind: Kind, v: &str) -> std::result::Result<(), String> {
    let ok = match kind {
        Kind::Count => v.parse::<usize>().is_ok(),
        Kind::Seed => v.parse::<u64>().is_ok(),
        Kind::Real => v.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Scope => v.parse::<SeparationScope>().is_ok(),
        Kind::Supervision => v.parse::<Supervision>().is_ok(),
        Kind::Switch => matches!(v, "on" | "off"),
        Kind::SeedList => !v.is_empty() && v.split(',').all(|s| s.trim().parse::<u64>().is_ok()),
        Kind::Path => !v.is_empty(),
    };
    if ok {
        return Ok(());
    }
    let expected = match kind {
        Kind::Count => "a non-negative integer",
        Kind::Seed => "an unsigned 64-bit integer",
        Kind::Real => "a finite number",
        Kind::Scope => "one of CC, CC+CU, CC+CU+UU",
        Kind::Supervision => "weak or full",
        Kind::Switch => "on or off",
        Kind::SeedList => "a comma-separated list of seeds",
        Kind::Path => "a non-empty path",
    };
    Err(format!("expected {expected}, got {v:?}"))
}

/// Resolved key/value pairs. Every key is always present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, _, d)| (*k, d.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, ..)| *k)
    }

    /// Defaults overridden by the assignments in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|msg| Error::ConfigParse { line: i + 1, msg })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let kind = kind_of(key).ok_or_else(|| format!("unknown key {key:?}"))?;
        check_value(kind, value).map_err(|e| format!("key {key}: {e}"))?;
        let slot = self.values.get_mut(key).expect("every key has a default");
        *slot = value.to_string();
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override {assignment:?} is not key=value"))
        })?;
        self.set(k.trim(), v.trim())
            .map_err(|msg| Error::InvalidConfig(format!("override {assignment:?}: {msg}")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn count(&self, key: &str) -> usize {
        self.values[key].parse().expect("checked on set")
    }

    fn real(&self, key: &str) -> f64 {
        self.values[key].parse().expect("checked on set")
    }

    pub fn seed(&self) -> u64 {
        self.values["seed"].parse().expect("checked on set")
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.values["seeds"]
            .split(',')
            .map(|s| s.trim().parse().expect("checked on set"))
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.values["out_dir"])
    }

    /// Builds and validates the training configuration.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let keyed = |key: &str, e: Error| Error::InvalidConfig(format!("{key}: {e}"));
        let dims = Dim2::new(self.count("height"), self.count("width"))
            .map_err(|e| keyed("height/width", e))?;
        let model = ModelSizes::new(self.count("channels"), self.count("features"))
            .map_err(|e| keyed("channels/features", e))?;
        let synth = SynthConfig {
            dims,
            instance_count_range: (
                self.count("instance_count_min"),
                self.count("instance_count_max"),
            ),
            instance_radius_range: (
                self.count("instance_radius_min"),
                self.count("instance_radius_max"),
            ),
            min_gap: self.count("min_gap"),
            texture_noise_sd: self.real("texture_noise_sd"),
            change_shift: self.real("change_shift"),
            p_unchanged_scene: self.real("p_unchanged_scene"),
            seed: self.seed(),
        };
        let thresholds = ThresholdConfig::new(
            self.real("t_high"),
            self.real("t_low"),
            self.real("cam_score"),
        )
        .map_err(|e| keyed("t_high/t_low/cam_score", e))?;
        let separation = match self.values["separation"].as_str() {
            "off" => None,
            _ => Some(
                SeparationConfig::new(
                    self.real("alpha"),
                    self.values["scope"].parse().expect("checked on set"),
                    self.count("warmup_iterations"),
                )
                .map_err(|e| keyed("alpha", e))?,
            ),
        };
        let cfg = TrainConfig {
            model,
            synth,
            thresholds,
            separation,
            supervision: self.values["supervision"].parse().expect("checked on set"),
            iterations: self.count("iterations"),
            batch_size: self.count("batch_size"),
            learning_rate: self.real("learning_rate"),
            eval_interval: self.count("eval_interval"),
            n_train: self.count("n_train"),
            n_val: self.count("n_val"),
            n_test: self.count("n_test"),
            seed: self.seed(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sorted `key = value` lines.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            writeln!(s, "{k} = {v}").expect("write to string");
        }
        s
    }
}

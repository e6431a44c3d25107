//! Run configuration: one TOML document with a section per module, plus
//! `key=value` overrides addressed by dotted path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorers::ExplorerConfig;
use crate::local_policy::PolicyParams;
use crate::matcher::MatcherConfig;
use crate::pnp::RansacConfig;
use crate::sim::{GenConfig, Kinematics, NoiseModel, SensorConfig};
use crate::switch::{PairSampling, SwitchConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Explorer plus switch and exploit when on; explorer with the naive stop when off.
    pub sling: bool,
    pub max_steps: usize,
    /// Meters of geodesic distance within which a Stop succeeds.
    pub success_radius: f64,
    /// Failed Stops forgiven before the episode ends.
    pub stop_budget: usize,
    /// Steps after a failed Stop during which the switch is not consulted.
    pub retry_cooldown: usize,
    pub workers: usize,
    /// Label written to the summary's fold column.
    pub fold: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sling: true,
            max_steps: 500,
            success_radius: 1.0,
            stop_budget: 0,
            retry_cooldown: 4,
            workers: 1,
            fold: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Largest stop budget; the table covers 0..=max.
    pub max_stop_budget: usize,
    pub pairs: PairSampling,
    /// Multipliers on the configured noise model.
    pub noise_scales: Vec<f64>,
    pub heading_bin_deg: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            max_stop_budget: 8,
            pairs: PairSampling::default(),
            noise_scales: vec![0.0, 0.5, 1.0, 2.0],
            heading_bin_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub format_version: u32,
    pub seed: u64,
    pub sensor: SensorConfig,
    pub generation: GenConfig,
    pub kinematics: Kinematics,
    pub noise: NoiseModel,
    pub matcher: MatcherConfig,
    pub ransac: RansacConfig,
    pub switch: SwitchConfig,
    pub policy: PolicyParams,
    pub explorer: ExplorerConfig,
    pub run: RunConfig,
    pub studies: StudyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: 0,
            sensor: SensorConfig::default(),
            generation: GenConfig::default(),
            kinematics: Kinematics::default(),
            noise: NoiseModel::default(),
            matcher: MatcherConfig::default(),
            ransac: RansacConfig::default(),
            switch: SwitchConfig::default(),
            policy: PolicyParams::default(),
            explorer: ExplorerConfig::default(),
            run: RunConfig::default(),
            studies: StudyConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.sensor.validate()?;
        self.generation.validate()?;
        self.kinematics.validate()?;
        self.noise.validate()?;
        self.matcher.validate()?;
        self.ransac.validate()?;
        self.switch.validate()?;
        self.policy.validate()?;
        self.explorer.validate()?;
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be >= 1".into()));
        }
        if self.run.max_steps == 0 || !(self.run.success_radius > 0.0) {
            return Err(Error::Config("run.max_steps and run.success_radius must be positive".into()));
        }
        if self.studies.noise_scales.iter().any(|s| !(*s >= 0.0)) || !(self.studies.heading_bin_deg > 0.0) {
            return Err(Error::Config("studies.noise_scales must be >= 0 and heading_bin_deg > 0".into()));
        }
        Ok(())
    }

    /// Defaults, overlaid with the TOML text, then with each `key=value`.
    pub fn from_toml_with_overrides(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(Config::default()).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(text) = text {
            let file: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            merge(&mut value, file, "")?;
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Config = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Self::from_toml_with_overrides(text.as_deref(), overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Value, over: toml::Value, path: &str) -> Result<()> {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &child)?,
                    None => return Err(Error::Config(format!("unknown key `{child}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Sets `a.b.c=value`. The value is parsed as a TOML literal and falls back
/// to a bare string.
pub fn apply_override(value: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parsed = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| Error::Config(format!("`{key}` does not name a setting")))?;
        let slot = table.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        if i + 1 == parts.len() {
            // Integers are accepted where floats are expected.
            *slot = match (&*slot, parsed) {
                (toml::Value::Float(_), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
                (_, v) => v,
            };
            return Ok(());
        }
        cur = slot;
    }
    Err(Error::Config(format!("empty override key in `{spec}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml().unwrap();
        let back = Config::from_toml_with_overrides(Some(&text), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_and_partial_files() {
        let cfg = Config::from_toml_with_overrides(
            Some("[switch]\nn_th = 20\n"),
            &["switch.d_th=3".into(), "explorer.kind=oracle".into(), "run.sling=false".into()],
        )
        .unwrap();
        assert_eq!(cfg.switch.n_th, 20);
        assert_eq!(cfg.switch.d_th, 3.0);
        assert_eq!(cfg.explorer.kind, crate::explorers::ExplorerKind::Oracle);
        assert!(!cfg.run.sling);
        assert_eq!(cfg.matcher, MatcherConfig::default());
    }

    #[test]
    fn bad_keys_and_values_are_config_errors() {
        for o in ["switch.nth=3", "switch.n_th=2", "nonsense", "run.workers=0"] {
            assert!(matches!(Config::from_toml_with_overrides(None, &[o.into()]), Err(Error::Config(_))), "{o}");
        }
        assert!(Config::from_toml_with_overrides(Some("[switchh]\nn_th = 3"), &[]).is_err());
        assert!(Config::from_toml_with_overrides(Some("format_version = 2"), &[]).is_err());
    }
}

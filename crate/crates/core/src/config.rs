//! Run configuration: a flat, typed key-value text file (TOML sections) with
//! every tunable in the system. Unknown keys are rejected. Environment
//! variables override file keys through the documented `CARVE_` prefix with
//! `__` as the section separator (`CARVE_SCHEDULE__TOTAL_ITERS=200`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::mode::GradientMode;
use crate::renderer::SamplerConfig;
use crate::training::optim::AdamConfig;
use crate::training::schedule::ScheduleConfig;

pub const ENV_PREFIX: &str = "CARVE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Hidden width of the one-hidden-layer SDF MLP (paper: depth only;
    /// width 64 is this artifact's default).
    pub sdf_hidden: usize,
    /// Geometric feature width fed to the color MLP.
    pub geo_features: usize,
    /// Color MLP hidden width (four hidden layers).
    pub color_hidden: usize,
    pub color_layers: usize,
    /// Per-image appearance embedding length (0 disables; enable for
    /// exposure-varying captures).
    pub embed_dim: usize,
    /// SDF initialized as a sphere of this radius.
    pub sphere_radius: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            sdf_hidden: 64,
            geo_features: 15,
            color_hidden: 64,
            color_layers: 4,
            embed_dim: 0,
            sphere_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rays_per_step: usize,
    /// Views held out from training (taken from the end of the view list).
    pub holdout_views: usize,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            rays_per_step: 128,
            holdout_views: 2,
            checkpoint_interval: 1000,
            log_interval: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub scene: String,
    pub n_views: usize,
    pub width: u32,
    pub height: u32,
    pub rig: String,
    pub camera_distance: f64,
    pub exposure: bool,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            scene: "sphere".to_string(),
            n_views: 16,
            width: 64,
            height: 64,
            rig: "orbit".to_string(),
            camera_distance: 2.5,
            exposure: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub resolution: u32,
    /// One bisection refinement of crossing edges (off by default).
    pub refine: bool,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            resolution: 128,
            refine: false,
        }
    }
}

/// Every tunable in the system. Defaults are the desk-scale budget
/// (minutes on a laptop CPU); the paper-scale values are noted on each
/// field's type ([`ScheduleConfig::paper`], encoding `2^5..2^11` with 16
/// levels, channel size 8, tables `2^22`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Gradient mode: AG, AG+P, NG, or NG+P.
    pub mode: String,
    /// Rendering background color (matches the synthetic datasets).
    pub background: [f64; 3],
    pub encoding: EncodingConfig,
    pub network: NetworkSection,
    pub sampler: SamplerConfig,
    pub schedule: ScheduleConfig,
    pub optim: AdamConfig,
    pub train: TrainSection,
    pub generate: GenerateSection,
    pub extract: ExtractSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: "NG+P".to_string(),
            background: [0.08, 0.08, 0.1],
            encoding: EncodingConfig::default(),
            network: NetworkSection::default(),
            sampler: SamplerConfig::default(),
            schedule: ScheduleConfig::default(),
            optim: AdamConfig::default(),
            train: TrainSection::default(),
            generate: GenerateSection::default(),
            extract: ExtractSection::default(),
        }
    }
}

impl RunConfig {
    pub fn gradient_mode(&self) -> Result<GradientMode> {
        GradientMode::parse(&self.mode)
    }

    pub fn field_config(&self, n_images: usize) -> FieldConfig {
        FieldConfig {
            sdf_hidden: self.network.sdf_hidden,
            geo_features: self.network.geo_features,
            color_hidden: self.network.color_hidden,
            color_layers: self.network.color_layers,
            embed_dim: self.network.embed_dim,
            n_images,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gradient_mode()?;
        self.encoding.validate()?;
        crate::synthetic::SceneKind::parse(&self.generate.scene)?;
        crate::synthetic::CameraRig::parse(&self.generate.rig)?;
        if self.sampler.n_uniform < 2 {
            return Err(Error::Config("sampler.n_uniform must be >= 2".into()));
        }
        if self.schedule.total_iters == 0 {
            return Err(Error::Config("schedule.total_iters must be positive".into()));
        }
        if self.schedule.initial_active_levels == 0
            || self.schedule.initial_active_levels > self.encoding.levels
        {
            return Err(Error::Config(
                "schedule.initial_active_levels must be in [1, encoding.levels]".into(),
            ));
        }
        if self.train.rays_per_step == 0 {
            return Err(Error::Config("train.rays_per_step must be positive".into()));
        }
        if self.extract.resolution < 8 {
            return Err(Error::Config("extract.resolution must be >= 8".into()));
        }
        if self.network.sphere_radius <= 0.0 || self.network.sphere_radius >= 1.0 {
            return Err(Error::Config("network.sphere_radius must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Parses a TOML config, then applies `CARVE_*` environment overrides.
    pub fn from_toml(text: &str, env: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in env {
            let Some(path) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let parts: Vec<String> = path.split("__").map(|p| p.to_ascii_lowercase()).collect();
            let parsed: toml::Value = value
                .parse::<i64>()
                .map(toml::Value::Integer)
                .or_else(|_| value.parse::<f64>().map(toml::Value::Float))
                .or_else(|_| value.parse::<bool>().map(toml::Value::Boolean))
                .unwrap_or_else(|_| toml::Value::String(value.clone()));
            let mut node = &mut table;
            for part in &parts[..parts.len() - 1] {
                node = node
                    .entry(part.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| {
                        Error::Config(format!("{key}: '{part}' is not a config section"))
                    })?;
            }
            node.insert(parts.last().unwrap().clone(), parsed);
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let env: Vec<(String, String)> = std::env::vars().collect();
        Self::from_toml(&text, &env)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical serialization; stamped into checkpoints
    /// and eval reports.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_toml().as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gradient_mode().unwrap(), GradientMode::NgP);
    }

    #[test]
    fn round_trip_through_toml_is_identical() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text, &[]).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("bogus_key = 1", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::from_toml("[train]\nbogus = 2", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn env_overrides_apply() {
        let env = vec![
            ("CARVE_SEED".to_string(), "42".to_string()),
            ("CARVE_MODE".to_string(), "AG".to_string()),
            (
                "CARVE_SCHEDULE__TOTAL_ITERS".to_string(),
                "123".to_string(),
            ),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = RunConfig::from_toml("", &env).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.gradient_mode().unwrap(), GradientMode::Ag);
        assert_eq!(cfg.schedule.total_iters, 123);
    }

    #[test]
    fn env_override_of_unknown_key_rejected() {
        let env = vec![("CARVE_NOPE".to_string(), "1".to_string())];
        assert!(RunConfig::from_toml("", &env).is_err());
    }

    #[test]
    fn invalid_mode_rejected() {
        assert!(RunConfig::from_toml("mode = \"XG\"", &[]).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}

use crate::boundary::AttackConfig;
use crate::directions::DEFAULT_DONOR_SIGMA;
use crate::error::{Error, Result};
use crate::oracle::{ExternalModel, NoiseModel, QualityModel, SharpnessModel, DEFAULT_BUDGET};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Overrides the configured oracle with an external endpoint when set.
pub const ENDPOINT_ENV: &str = "JNDATTACK_ORACLE_ENDPOINT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Sharpness {
        #[serde(default = "default_sharpness_gain")]
        gain: f64,
        #[serde(default = "default_bias")]
        bias: f64,
    },
    Noise {
        #[serde(default = "default_noise_gain")]
        gain: f64,
        #[serde(default = "default_bias")]
        bias: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    External {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_sharpness_gain() -> f64 {
    SharpnessModel::default().gain
}

fn default_noise_gain() -> f64 {
    NoiseModel::default().gain
}

fn default_bias() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    30.0
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Sharpness {
            gain: default_sharpness_gain(),
            bias: default_bias(),
        }
    }
}

impl OracleSpec {
    pub fn sharpness() -> Self {
        Self::default()
    }

    pub fn noise() -> Self {
        OracleSpec::Noise {
            gain: default_noise_gain(),
            bias: default_bias(),
            scale: default_scale(),
        }
    }

    pub fn external(endpoint: impl Into<String>) -> Self {
        OracleSpec::External {
            endpoint: endpoint.into(),
            timeout_secs: default_timeout(),
        }
    }

    /// Applies the endpoint environment override, if present.
    pub fn with_env_override(self) -> Self {
        match std::env::var(ENDPOINT_ENV) {
            Ok(endpoint) if !endpoint.is_empty() => match self {
                OracleSpec::External { timeout_secs, .. } => OracleSpec::External { endpoint, timeout_secs },
                _ => OracleSpec::external(endpoint),
            },
            _ => self,
        }
    }

    pub fn build(&self) -> Result<Box<dyn QualityModel>> {
        Ok(match self {
            OracleSpec::Sharpness { gain, bias } => Box::new(SharpnessModel { gain: *gain, bias: *bias }),
            OracleSpec::Noise { gain, bias, scale } => Box::new(NoiseModel {
                gain: *gain,
                bias: *bias,
                scale: *scale,
            }),
            OracleSpec::External { endpoint, timeout_secs } => {
                if !(*timeout_secs > 0.0 && timeout_secs.is_finite()) {
                    return Err(Error::Config(format!("timeout_secs {timeout_secs} must be positive")));
                }
                Box::new(ExternalModel::new(endpoint, Duration::from_secs_f64(*timeout_secs))?)
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DonorSource {
    /// The built-in procedural textures.
    #[default]
    Procedural,
    /// Every PNG in a directory of high-quality images.
    Directory {
        path: PathBuf,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

fn default_sigma() -> f64 {
    DEFAULT_DONOR_SIGMA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub attack: AttackConfig,
    pub budget: u64,
    pub oracle: OracleSpec,
    pub donors: DonorSource,
    pub crop_seed: u64,
    pub crop_size: usize,
    /// Worker threads; 0 uses one per CPU.
    pub workers: usize,
    pub lpips_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            attack: AttackConfig::default(),
            budget: DEFAULT_BUDGET,
            oracle: OracleSpec::default(),
            donors: DonorSource::default(),
            crop_seed: 0,
            crop_size: 224,
            workers: 0,
            lpips_endpoint: None,
            output_dir: None,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.attack.validate()?;
        if !(0.0..=100.0).contains(&self.attack.split_threshold) {
            return Err(Error::Config("split_threshold must lie in [0, 100]".into()));
        }
        if self.crop_size < crate::imageops::Image::MIN_SIDE {
            return Err(Error::Config(format!("crop_size {} is too small", self.crop_size)));
        }
        Ok(())
    }

    /// The configuration as echoed into reports: everything except the
    /// output location, so reports do not depend on where they are written.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}

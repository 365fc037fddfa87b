//! Model configuration loaded from a JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Graph convolution family used throughout the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvType {
    Spiral,
    Spectral,
}

/// Training variant: fully regressed node transforms, graph-node supervision,
/// or regressed translations with rotations solved in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingVariant {
    #[serde(alias = "EDL")]
    Edl,
    #[serde(alias = "GL")]
    Gl,
    #[serde(alias = "LP")]
    Lp,
}

impl TrainingVariant {
    /// Channels the decoder's final convolution emits per graph node:
    /// 3 Euler angles + 3 translations, or 3 node positions for Gl.
    pub fn output_channels(self) -> usize {
        match self {
            TrainingVariant::Edl | TrainingVariant::Lp => 6,
            TrainingVariant::Gl => 3,
        }
    }
}

fn default_widths() -> Vec<usize> {
    vec![16, 32, 64, 128]
}

fn default_batch_size() -> usize {
    8
}

fn default_epochs() -> usize {
    50
}

fn default_learning_rate() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub conv_type: ConvType,
    pub training_variant: TrainingVariant,
    /// Encoder channel width per downsampling module; the decoder mirrors
    /// them. Extra entries beyond the hierarchy's module count are ignored.
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    /// Hierarchy level that carries the deformation graph (1 or 2).
    pub graph_level: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Stops training after this many optimizer steps even mid-epoch.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Fixed spiral length for every level; None picks per-level defaults.
    #[serde(default)]
    pub spiral_length: Option<usize>,
    /// Seeds parameter init and dataset shuffling.
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| ModelError::Config(msg);
        if self.latent_dim == 0 {
            return Err(bad("latent_dim must be >= 1".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(bad("widths must be nonempty and positive".into()));
        }
        if !(1..=2).contains(&self.graph_level) {
            return Err(bad(format!(
                "graph_level must be 1 or 2, got {}",
                self.graph_level
            )));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(bad("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.spiral_length == Some(0) {
            return Err(bad("spiral_length must be >= 1 when set".into()));
        }
        Ok(())
    }

    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ModelConfig =
            serde_json::from_str(&text).map_err(|e| ModelError::Format {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_file<P: AsRef<Path>>(&self, path: P) -> Result<(), ModelError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Convenience constructor used by tests and examples.
pub fn basic_config(
    latent_dim: usize,
    conv_type: ConvType,
    variant: TrainingVariant,
    widths: Vec<usize>,
    graph_level: usize,
) -> ModelConfig {
    ModelConfig {
        latent_dim,
        conv_type,
        training_variant: variant,
        widths,
        graph_level,
        batch_size: default_batch_size(),
        epochs: default_epochs(),
        learning_rate: default_learning_rate(),
        max_steps: None,
        spiral_length: None,
        seed: 0,
    }
}

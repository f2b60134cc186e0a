//! Transformer-encoder masked reconstruction model.
//!
//! Pre-norm blocks (layer norm → multi-head self-attention → residual, layer
//! norm → GELU feed-forward → residual), sinusoidal positions added after the
//! input projection, a final layer norm and a linear projection back to the
//! feature dimension. Gradients are computed analytically.

mod adam;
mod checkpoint;
mod encoder;
mod gradcheck;
mod loss;
mod params;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{max_abs_diff, Checkpoint, OptimizerState, FORMAT_VERSION};
pub use encoder::{positional_encoding, EncoderModel, ForwardPass};
pub use gradcheck::{gradient_check, groups_covered, GradSample};
pub use loss::{l1_loss, l1_loss_grad, LossScope};
pub use params::{param_group, EncoderParams, LayerParams, ParamTensors};
pub use train::{extract_representations, loss_curve_csv, pretrain, TrainConfig, TrainUtterance, Trainer};

use crate::masking::MaskError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{frames} frames exceed max_frames = {max}")]
    TooLong { frames: usize, max: usize },
    #[error("masked-only loss needs at least one masked frame")]
    EmptyMask,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("loss diverged at step {step}")]
    DivergedLoss { step: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("checkpoint format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptBlob(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub max_frames: usize,
}

impl Default for EncoderConfig {
    /// Desk-scale size.
    fn default() -> Self {
        EncoderConfig {
            input_dim: 80,
            d_model: 64,
            num_layers: 2,
            num_heads: 2,
            ff_dim: 128,
            dropout: 0.0,
            max_frames: 4096,
        }
    }
}

impl EncoderConfig {
    /// Full-size configuration: 3 layers, 3072-wide feed-forward, dropout 0.1,
    /// with 12 heads over a 768-wide model.
    pub fn full_size() -> Self {
        EncoderConfig {
            input_dim: 80,
            d_model: 768,
            num_layers: 3,
            num_heads: 12,
            ff_dim: 3072,
            dropout: 0.1,
            max_frames: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.input_dim == 0
            || self.d_model == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.ff_dim == 0
            || self.max_frames == 0
        {
            return bad("all dimensions must be at least 1".into());
        }
        if self.d_model % self.num_heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.num_heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

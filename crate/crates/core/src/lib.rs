//! Masked-reconstruction speech representation learning at desk scale.
//!
//! The pipeline runs waveform → log-mel features → voice activity detection
//! and phoneme alignment → mask generation → L1 reconstruction pre-training
//! of a transformer encoder → frozen-representation probes → spectrogram and
//! mask-coverage analysis.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root pick `f32` for everyday use and `f64` for gradient checking.

pub mod alignment;
pub mod analysis;
pub mod audio;
pub mod features;
pub mod masking;
pub mod model;
pub mod probes;
pub mod scalar;
pub mod seed;
pub mod vad;

pub use alignment::{AlignmentError, PhonemeAlignment, PhonemeSpan, SilenceSet};

pub use audio::{AudioError, SynthCorpusSpec, SynthUtterance, Waveform};
pub use features::{FeatureConfig, FeatureError, FeatureMatrix};
pub use masking::{
    FrameState, MaskError, MaskMode, MaskPolicy, MaskPolicyConfig, MaskRun, MaskSequence,
    RunOrigin,
};
pub use analysis::{AnalysisError, MaskStats, SharpnessReport};
pub use probes::{Probe, ProbeConfig, ProbeError, ProbeResult, ProbeTask};
pub use model::{
    Adam, Checkpoint, EncoderConfig, EncoderModel, LossScope, ModelError, TrainConfig, Trainer,
};
pub use scalar::Scalar;
pub use vad::{SpeechLists, VadConfig, VadError, VadLabels};

pub type Waveform32 = Waveform<f32>;
pub type Waveform64 = Waveform<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type EncoderModel32 = EncoderModel<f32>;
pub type EncoderModel64 = EncoderModel<f64>;
pub type Trainer32 = Trainer<f32>;
pub type Probe32 = Probe<f32>;

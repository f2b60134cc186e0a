//! PCM audio I/O and the labelled synthetic corpus.

mod corpus;
mod synth;
mod wav;

use std::io;

use thiserror::Error;

use crate::scalar::Scalar;

pub use corpus::{read_corpus_manifest, write_corpus, ManifestEntry, CORPUS_MANIFEST};
pub use synth::{synth_corpus, SynthCorpusSpec, SynthUtterance};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mono signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<S> {
    samples: Vec<S>,
    sample_rate: u32,
}

impl<S: Scalar> Waveform<S> {
    pub fn new(samples: Vec<S>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > S::one())
        {
            return Err(AudioError::InvalidWaveform(format!(
                "sample {i} is {} (must be finite and within [-1, 1])",
                samples[i]
            )));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![S::zero(); len], sample_rate)
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiplies every sample by `gain`, clipping to `[-1, 1]`.
    pub fn scaled(&self, gain: S) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|&s| (s * gain).max(-S::one()).min(S::one()))
            .collect();
        Waveform { samples, sample_rate: self.sample_rate }
    }

    pub fn cast<T: Scalar>(&self) -> Waveform<T> {
        Waveform {
            samples: self.samples.iter().map(|&s| T::lit(s.to_f64_lossy())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_nan() {
        assert!(Waveform::<f32>::new(vec![0.0, 1.5], 16000).is_err());
        assert!(Waveform::<f32>::new(vec![f32::NAN], 16000).is_err());
        assert!(Waveform::<f32>::new(vec![0.0], 0).is_err());
        assert!(Waveform::<f32>::new(vec![-1.0, 1.0], 16000).is_ok());
    }
}

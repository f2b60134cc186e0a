//! Energy-threshold voice activity detection.
//!
//! Per frame: RMS level in dBFS over the feature framing, compared against
//! `theta`. Speech runs are then widened by `hangover` frames on both sides
//! and runs shorter than `min_speech_run` are dropped.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::audio::Waveform;
use crate::features::FeatureConfig;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum VadError {
    #[error("waveform of {len} samples is shorter than one frame ({frame_length})")]
    TooShort { len: usize, frame_length: usize },
    #[error("invalid VAD config: {0}")]
    InvalidConfig(String),
    #[error("malformed VAD label file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    /// Threshold in dB relative to full scale.
    pub theta: f64,
    pub hangover: usize,
    pub min_speech_run: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig { theta: -45.0, hangover: 1, min_speech_run: 3 }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        if self.min_speech_run == 0 {
            return Err(VadError::InvalidConfig("min_speech_run must be at least 1".into()));
        }
        if self.theta.is_nan() {
            return Err(VadError::InvalidConfig("theta is NaN".into()));
        }
        Ok(())
    }
}

/// Per-frame speech decisions (`true` = speech).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadLabels {
    labels: Vec<bool>,
}

impl VadLabels {
    pub fn new(labels: Vec<bool>) -> Self {
        VadLabels { labels }
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn speech_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Fraction of frames on which `self` and `other` agree.
    pub fn accuracy_against(&self, other: &VadLabels) -> f64 {
        assert_eq!(self.len(), other.len(), "label sequences differ in length");
        if self.is_empty() {
            return 1.0;
        }
        let agree = self.labels.iter().zip(&other.labels).filter(|(a, b)| a == b).count();
        agree as f64 / self.len() as f64
    }

    /// One `0`/`1` line per frame.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 2);
        for &l in &self.labels {
            s.push(if l { '1' } else { '0' });
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, VadError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| match l.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(VadError::Malformed(format!("line {}: {other:?}", i + 1))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(VadLabels::new)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, VadError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), VadError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Speech list A and non-speech list B: a sorted partition of `0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeechLists {
    pub speech: Vec<usize>,
    pub nonspeech: Vec<usize>,
}

impl SpeechLists {
    pub fn num_frames(&self) -> usize {
        self.speech.len() + self.nonspeech.len()
    }

    /// Per-frame membership in the speech list.
    pub fn speech_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_frames()];
        for &t in &self.speech {
            m[t] = true;
        }
        m
    }
}

pub fn speech_lists(v: &VadLabels) -> SpeechLists {
    let (mut speech, mut nonspeech) = (Vec::new(), Vec::new());
    for (t, &l) in v.labels().iter().enumerate() {
        if l {
            speech.push(t)
        } else {
            nonspeech.push(t)
        }
    }
    SpeechLists { speech, nonspeech }
}

/// Per-frame RMS level in dBFS (`-inf` for digital silence).
pub fn frame_levels_db<S: Scalar>(w: &Waveform<S>, feat_cfg: &FeatureConfig) -> Result<Vec<f64>, VadError> {
    let frames = feat_cfg.num_frames(w.len()).ok_or(VadError::TooShort {
        len: w.len(),
        frame_length: feat_cfg.frame_length,
    })?;
    let s = w.samples();
    Ok((0..frames)
        .map(|t| {
            let win = &s[t * feat_cfg.hop..t * feat_cfg.hop + feat_cfg.frame_length];
            let ms = win.iter().map(|&v| v.to_f64_lossy().powi(2)).sum::<f64>() / win.len() as f64;
            10.0 * ms.log10()
        })
        .collect())
}

/// Thresholded decisions before smoothing.
pub fn raw_decisions(levels_db: &[f64], theta: f64) -> Vec<bool> {
    levels_db.iter().map(|&db| db > theta).collect()
}

/// Hangover widening followed by short-run removal.
pub fn smooth_decisions(raw: &[bool], hangover: usize, min_speech_run: usize) -> Vec<bool> {
    let n = raw.len();
    let mut out = vec![false; n];
    for (t, _) in raw.iter().enumerate().filter(|(_, &r)| r) {
        let lo = t.saturating_sub(hangover);
        let hi = (t + hangover).min(n - 1);
        out[lo..=hi].iter_mut().for_each(|o| *o = true);
    }
    let mut t = 0;
    while t < n {
        if !out[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && out[t] {
            t += 1;
        }
        if t - start < min_speech_run {
            out[start..t].iter_mut().for_each(|o| *o = false);
        }
    }
    out
}

pub fn vad_labels<S: Scalar>(
    w: &Waveform<S>,
    feat_cfg: &FeatureConfig,
    vad_cfg: &VadConfig,
) -> Result<VadLabels, VadError> {
    vad_cfg.validate()?;
    let levels = frame_levels_db(w, feat_cfg)?;
    let raw = raw_decisions(&levels, vad_cfg.theta);
    Ok(VadLabels::new(smooth_decisions(&raw, vad_cfg.hangover, vad_cfg.min_speech_run)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(len: usize, amp: f64) -> Waveform<f64> {
        let s = (0..len).map(|i| amp * (i as f64 * 2.0 * std::f64::consts::PI * 440.0 / 16000.0).sin());
        Waveform::new(s.collect(), 16000).unwrap()
    }

    #[test]
    fn silence_and_full_scale() {
        let fc = FeatureConfig::default();
        let z = Waveform::<f64>::zeros(8000, 16000).unwrap();
        assert_eq!(vad_labels(&z, &fc, &VadConfig::default()).unwrap().speech_count(), 0);
        let v = vad_labels(&sine(8000, 1.0), &fc, &VadConfig::default()).unwrap();
        assert_eq!(v.speech_count(), v.len());
    }

    #[test]
    fn too_short() {
        let z = Waveform::<f64>::zeros(10, 16000).unwrap();
        assert!(matches!(
            vad_labels(&z, &FeatureConfig::default(), &VadConfig::default()),
            Err(VadError::TooShort { .. })
        ));
    }

    #[test]
    fn smoothing_examples() {
        let raw = [false, false, false, true, false, false, false, false];
        assert_eq!(smooth_decisions(&raw, 0, 1), raw.to_vec());
        assert_eq!(smooth_decisions(&raw, 1, 1), vec![false, false, true, true, true, false, false, false]);
        assert_eq!(smooth_decisions(&raw, 0, 2), vec![false; 8]);
        assert_eq!(smooth_decisions(&raw, 1, 4), vec![false; 8]);
    }

    #[test]
    fn lists_examples() {
        let l = speech_lists(&VadLabels::new(vec![false, false, true, true, false]));
        assert_eq!(l.speech, vec![2, 3]);
        assert_eq!(l.nonspeech, vec![0, 1, 4]);
        let l = speech_lists(&VadLabels::new(vec![true; 4]));
        assert_eq!(l.speech, vec![0, 1, 2, 3]);
        assert!(l.nonspeech.is_empty());
    }

    #[test]
    fn label_file_round_trip() {
        let v = VadLabels::new(vec![true, false, true]);
        assert_eq!(v.to_text(), "1\n0\n1\n");
        assert_eq!(VadLabels::parse(&v.to_text()).unwrap(), v);
        assert!(VadLabels::parse("1\n2\n").is_err());
    }

    proptest! {
        #[test]
        fn partition_property(labels in prop::collection::vec(any::<bool>(), 0..200)) {
            let v = VadLabels::new(labels.clone());
            let l = speech_lists(&v);
            prop_assert_eq!(l.speech.len() + l.nonspeech.len(), labels.len());
            let mut all: Vec<usize> = l.speech.iter().chain(&l.nonspeech).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            prop_assert!(l.speech.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(l.nonspeech.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(l.speech.iter().all(|&t| labels[t]));
        }

        #[test]
        fn identity_smoothing(raw in prop::collection::vec(any::<bool>(), 1..100)) {
            prop_assert_eq!(smooth_decisions(&raw, 0, 1), raw);
        }

        #[test]
        fn raw_count_monotone_in_theta(levels in prop::collection::vec(-120.0f64..0.0, 1..100),
                                       a in -100.0f64..0.0, b in -100.0f64..0.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let n = |th| raw_decisions(&levels, th).iter().filter(|&&x| x).count();
            prop_assert!(n(hi) <= n(lo));
        }
    }
}

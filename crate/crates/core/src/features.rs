//! Log-mel filterbank features.
//!
//! Hann window, `fft_size`-point power spectrum, HTK-scale triangular mel
//! filters (peak weight 1), natural log with a floor.

use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::Waveform;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("waveform of {len} samples is shorter than one frame ({frame_length})")]
    TooShort { len: usize, frame_length: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("malformed feature file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub num_mel: usize,
    pub mel_low: f64,
    /// `None` means half the sample rate.
    pub mel_high: Option<f64>,
    pub log_floor: f64,
    /// Per-utterance mean/variance normalisation of every bin.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_length: 400,
            hop: 160,
            fft_size: 512,
            num_mel: 80,
            mel_low: 0.0,
            mel_high: None,
            log_floor: 1e-10,
            normalize: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if !(0 < self.hop && self.hop <= self.frame_length && self.frame_length <= self.fft_size) {
            return bad(format!(
                "need 0 < hop ({}) <= frame_length ({}) <= fft_size ({})",
                self.hop, self.frame_length, self.fft_size
            ));
        }
        if self.num_mel == 0 {
            return bad("num_mel must be at least 1".into());
        }
        let nyquist = sample_rate as f64 / 2.0;
        let high = self.mel_high(sample_rate);
        if !(self.mel_low >= 0.0 && self.mel_low < high && high <= nyquist) {
            return bad(format!("need 0 <= mel_low ({}) < mel_high ({high}) <= {nyquist}", self.mel_low));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    pub fn mel_high(&self, sample_rate: u32) -> f64 {
        self.mel_high.unwrap_or(sample_rate as f64 / 2.0)
    }

    /// `1 + floor((len - frame_length) / hop)`, or `None` when shorter than a frame.
    pub fn num_frames(&self, len: usize) -> Option<usize> {
        (len >= self.frame_length).then(|| 1 + (len - self.frame_length) / self.hop)
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequency in Hz of each mel filter.
pub fn mel_centers(cfg: &FeatureConfig, sample_rate: u32) -> Vec<f64> {
    mel_edges(cfg, sample_rate)[1..=cfg.num_mel].to_vec()
}

fn mel_edges(cfg: &FeatureConfig, sample_rate: u32) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.mel_low), hz_to_mel(cfg.mel_high(sample_rate)));
    let step = (hi - lo) / (cfg.num_mel + 1) as f64;
    (0..cfg.num_mel + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// Triangular filter weights, `num_mel × (fft_size / 2 + 1)`.
pub fn mel_filterbank<S: Scalar>(cfg: &FeatureConfig, sample_rate: u32) -> Array2<S> {
    let bins = cfg.fft_size / 2 + 1;
    let edges = mel_edges(cfg, sample_rate);
    let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
    Array2::from_shape_fn((cfg.num_mel, bins), |(m, k)| {
        let f = k as f64 * bin_hz;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let w = if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        };
        S::lit(w)
    })
}

fn hann<S: Scalar>(n: usize) -> Vec<S> {
    if n == 1 {
        return vec![S::one()];
    }
    (0..n)
        .map(|i| S::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// `T × F` matrix of per-frame features (log-mel energies, or reconstructions of them).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S> {
    values: Array2<S>,
    frame_rate: f64,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn new(values: Array2<S>, frame_rate: f64) -> Result<Self, FeatureError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(FeatureError::Malformed(format!("non-finite value {v}")));
        }
        Ok(FeatureMatrix { values, frame_rate })
    }

    /// Skips the finiteness scan; for internal producers that guarantee it.
    pub(crate) fn from_trusted(values: Array2<S>, frame_rate: f64) -> Self {
        FeatureMatrix { values, frame_rate }
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn values(&self) -> &Array2<S> {
        &self.values
    }

    pub fn into_values(self) -> Array2<S> {
        self.values
    }

    pub fn with_values(&self, values: Array2<S>) -> Self {
        FeatureMatrix { values, frame_rate: self.frame_rate }
    }

    pub fn cast<T: Scalar>(&self) -> FeatureMatrix<T> {
        FeatureMatrix {
            values: self.values.mapv(|v| T::lit(v.to_f64_lossy())),
            frame_rate: self.frame_rate,
        }
    }

    /// Header line `T F frame_rate`, then row-major little-endian `f32`s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{} {} {}\n", self.num_frames(), self.dim(), self.frame_rate).into_bytes();
        out.reserve(self.values.len() * 4);
        for v in self.values.iter() {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        let bad = |m: &str| FeatureError::Malformed(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad("header must be `T F frame_rate`"));
        }
        let t: usize = parts[0].parse().map_err(|_| bad("bad T"))?;
        let f: usize = parts[1].parse().map_err(|_| bad("bad F"))?;
        let rate: f64 = parts[2].parse().map_err(|_| bad("bad frame_rate"))?;
        let body = &bytes[nl + 1..];
        if body.len() != t * f * 4 {
            return Err(FeatureError::Malformed(format!(
                "expected {} data bytes, found {}",
                t * f * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| S::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let values = Array2::from_shape_vec((t, f), data).map_err(|e| bad(&e.to_string()))?;
        Self::new(values, rate)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Per-bin zero-mean, unit-variance normalisation over time.
pub fn normalize_utterance<S: Scalar>(values: &mut Array2<S>) {
    let t = S::lit(values.nrows().max(1) as f64);
    let mean: Array1<S> = values.sum_axis(Axis(0)) / t;
    for (j, m) in mean.iter().enumerate() {
        let mut col = values.column_mut(j);
        col.mapv_inplace(|v| v - *m);
        let var = col.iter().map(|&v| v * v).sum::<S>() / t;
        let sd = var.sqrt().max(S::lit(1e-8));
        col.mapv_inplace(|v| v / sd);
    }
}

/// Log-mel filterbank features of `w`.
pub fn fbank<S: Scalar>(w: &Waveform<S>, cfg: &FeatureConfig) -> Result<FeatureMatrix<S>, FeatureError> {
    cfg.validate(w.sample_rate())?;
    let frames = cfg.num_frames(w.len()).ok_or(FeatureError::TooShort {
        len: w.len(),
        frame_length: cfg.frame_length,
    })?;
    let bank = mel_filterbank::<S>(cfg, w.sample_rate());
    let window = hann::<S>(cfg.frame_length);
    let fft = FftPlanner::<S>::new().plan_fft_forward(cfg.fft_size);
    let bins = cfg.fft_size / 2 + 1;
    let floor = S::lit(cfg.log_floor);
    let samples = w.samples();

    let mut values = Array2::<S>::zeros((frames, cfg.num_mel));
    let mut buf = vec![Complex::new(S::zero(), S::zero()); cfg.fft_size];
    let mut power = Array1::<S>::zeros(bins);
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < cfg.frame_length {
                Complex::new(samples[start + i] * window[i], S::zero())
            } else {
                Complex::new(S::zero(), S::zero())
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        let energies = bank.dot(&power);
        for (out, e) in values.row_mut(t).iter_mut().zip(energies.iter()) {
            *out = e.max(floor).ln();
        }
    }
    if cfg.normalize {
        normalize_utterance(&mut values);
    }
    Ok(FeatureMatrix::from_trusted(values, w.sample_rate() as f64 / cfg.hop as f64))
}

//! Single-file checkpoints: a `key=value` manifest, a `\0` byte, then the
//! parameters (and optionally the Adam moments) as little-endian `f32`.

use std::path::Path;

use super::params::{EncoderParams, ParamTensors};
use super::{Adam, EncoderConfig, EncoderModel, ModelError};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Ordered manifest entries.
    pub manifest: Vec<(String, String)>,
    pub blob: Vec<u8>,
}

/// Optimizer state as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: EncoderParams<S>,
    pub v: EncoderParams<S>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptBlob(msg.into())
}

fn push_tensors<S: Scalar>(blob: &mut Vec<u8>, p: &EncoderParams<S>) {
    for (_, t) in p.tensors() {
        for &v in t.iter() {
            blob.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
}

fn read_tensors<S: Scalar>(template: &mut EncoderParams<S>, bytes: &[u8]) -> usize {
    let mut at = 0;
    for (_, t) in template.tensors_mut() {
        for v in t.iter_mut() {
            let b: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
            *v = S::of_f32(f32::from_le_bytes(b));
            at += 4;
        }
    }
    at
}

impl Checkpoint {
    /// Captures a model, optional optimizer state and any extra metadata.
    pub fn capture<S: Scalar>(
        model: &EncoderModel<S>,
        adam: Option<&Adam<S, EncoderParams<S>>>,
        extra: &[(String, String)],
    ) -> Self {
        let c = &model.config;
        let mut manifest: Vec<(String, String)> = vec![
            ("format_version".into(), FORMAT_VERSION.to_string()),
            ("encoder.input_dim".into(), c.input_dim.to_string()),
            ("encoder.d_model".into(), c.d_model.to_string()),
            ("encoder.num_layers".into(), c.num_layers.to_string()),
            ("encoder.num_heads".into(), c.num_heads.to_string()),
            ("encoder.ff_dim".into(), c.ff_dim.to_string()),
            ("encoder.dropout".into(), c.dropout.to_string()),
            ("encoder.max_frames".into(), c.max_frames.to_string()),
        ];
        for (name, t) in model.params.tensors() {
            manifest.push((format!("tensor.{name}"), format!("{}x{}", t.nrows(), t.ncols())));
        }
        let mut blob = Vec::with_capacity(model.params.num_scalars() * 4 * if adam.is_some() { 3 } else { 1 });
        push_tensors(&mut blob, &model.params);
        match adam {
            Some(a) => {
                manifest.push(("optimizer".into(), "adam".into()));
                manifest.push(("adam.lr".into(), a.lr.to_string()));
                manifest.push(("adam.beta1".into(), a.beta1.to_string()));
                manifest.push(("adam.beta2".into(), a.beta2.to_string()));
                manifest.push(("adam.eps".into(), a.eps.to_string()));
                manifest.push(("adam.step".into(), a.step.to_string()));
                push_tensors(&mut blob, &a.m);
                push_tensors(&mut blob, &a.v);
            }
            None => manifest.push(("optimizer".into(), "none".into())),
        }
        manifest.extend(extra.iter().cloned());
        Checkpoint { manifest, blob }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<T, ModelError> {
        self.get(key)
            .ok_or_else(|| corrupt(format!("manifest lacks {key}")))?
            .parse()
            .map_err(|_| corrupt(format!("bad value for {key}")))
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig, ModelError> {
        let cfg = EncoderConfig {
            input_dim: self.parse_key("encoder.input_dim")?,
            d_model: self.parse_key("encoder.d_model")?,
            num_layers: self.parse_key("encoder.num_layers")?,
            num_heads: self.parse_key("encoder.num_heads")?,
            ff_dim: self.parse_key("encoder.ff_dim")?,
            dropout: self.parse_key("encoder.dropout")?,
            max_frames: self.parse_key("encoder.max_frames")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn has_optimizer(&self) -> bool {
        self.get("optimizer") == Some("adam")
    }

    /// Parameter template with shapes checked against the manifest.
    fn template<S: Scalar>(&self, cfg: &EncoderConfig) -> Result<EncoderParams<S>, ModelError> {
        let p = EncoderParams::<S>::init(cfg, &mut rng_from_seed(0));
        for (name, t) in p.tensors() {
            let want = format!("{}x{}", t.nrows(), t.ncols());
            match self.get(&format!("tensor.{name}")) {
                Some(s) if s == want => {}
                Some(s) => return Err(corrupt(format!("tensor {name} declared {s}, expected {want}"))),
                None => return Err(corrupt(format!("manifest lacks tensor {name}"))),
            }
        }
        let expected = p.num_scalars() * 4 * if self.has_optimizer() { 3 } else { 1 };
        if self.blob.len() != expected {
            return Err(corrupt(format!("blob has {} bytes, declared shapes need {expected}", self.blob.len())));
        }
        Ok(p)
    }

    pub fn model<S: Scalar>(&self) -> Result<EncoderModel<S>, ModelError> {
        let cfg = self.encoder_config()?;
        let mut params = self.template::<S>(&cfg)?;
        read_tensors(&mut params, &self.blob);
        if !params.all_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        EncoderModel::from_params(cfg, params)
    }

    pub fn optimizer<S: Scalar>(&self) -> Result<Option<OptimizerState<S>>, ModelError> {
        if !self.has_optimizer() {
            return Ok(None);
        }
        let cfg = self.encoder_config()?;
        let mut m = self.template::<S>(&cfg)?;
        let mut v = m.clone();
        let n = self.blob.len() / 3;
        read_tensors(&mut m, &self.blob[n..2 * n]);
        read_tensors(&mut v, &self.blob[2 * n..]);
        Ok(Some(OptimizerState {
            lr: self.parse_key("adam.lr")?,
            beta1: self.parse_key("adam.beta1")?,
            beta2: self.parse_key("adam.beta2")?,
            eps: self.parse_key("adam.eps")?,
            step: self.parse_key("adam.step")?,
            m,
            v,
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.manifest {
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.push(0);
        out.extend_from_slice(&self.blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let sep = bytes.iter().position(|&b| b == 0).ok_or_else(|| corrupt("no manifest separator"))?;
        let text = std::str::from_utf8(&bytes[..sep]).map_err(|_| corrupt("manifest is not UTF-8"))?;
        let mut manifest = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("manifest line without '=': {line}")))?;
            manifest.push((k.to_string(), v.to_string()));
        }
        let ck = Checkpoint { manifest, blob: bytes[sep + 1..].to_vec() };
        match ck.get("format_version") {
            Some(v) if v == FORMAT_VERSION.to_string() => {}
            Some(v) => return Err(ModelError::VersionMismatch { found: v.to_string(), expected: FORMAT_VERSION }),
            None => return Err(ModelError::VersionMismatch { found: "none".into(), expected: FORMAT_VERSION }),
        }
        if ck.blob.len() % 4 != 0 {
            return Err(corrupt("blob length is not a multiple of 4"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Largest absolute difference between two parameter sets.
pub fn max_abs_diff<S: Scalar>(a: &EncoderParams<S>, b: &EncoderParams<S>) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|((_, x), (_, y))| x.iter().zip(y.iter()).map(|(p, q)| (*p - *q).abs().to_f64_lossy()))
        .fold(0.0, f64::max)
}

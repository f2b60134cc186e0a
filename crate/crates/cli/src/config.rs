//! Run configuration: `section.key = value` lines merged with command-line
//! overrides and resolved into the typed per-module configs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use masklab_core::{
    EncoderConfig, FeatureConfig, LossScope, MaskMode, MaskPolicy, MaskPolicyConfig, ProbeConfig, ProbeTask,
    SynthCorpusSpec, TrainConfig, VadConfig,
};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Default grid of the ρ sweep.
pub const DEFAULT_RHO_GRID: [f64; 5] = [0.80, 0.85, 0.90, 0.95, 1.00];

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    Budget,
    Span,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Rho => "rho",
            SweepParam::Budget => "budget",
            SweepParam::Span => "span",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rho" => Some(SweepParam::Rho),
            "budget" => Some(SweepParam::Budget),
            "span" => Some(SweepParam::Span),
            _ => None,
        }
    }

    /// Config key the parameter overrides.
    pub fn key(self) -> String {
        format!("mask.{}", self.name())
    }

    pub fn check(self, v: f64) -> Result<(), String> {
        let ok = match self {
            SweepParam::Rho | SweepParam::Budget => (0.0..=1.0).contains(&v),
            SweepParam::Span => v >= 1.0 && v.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{v} is not a valid value for {}", self.name()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub policies: Vec<MaskPolicy>,
    pub tasks: Vec<ProbeTask>,
    pub pretrain_steps: usize,
    pub probe_steps: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            param: SweepParam::Rho,
            values: DEFAULT_RHO_GRID.to_vec(),
            policies: vec![MaskPolicy::SpeechLevel, MaskPolicy::Combined],
            tasks: vec![ProbeTask::PhonemeL, ProbeTask::Phoneme1H],
            pretrain_steps: 2000,
            probe_steps: 500,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("sweep.values is empty".into());
        }
        if self.policies.is_empty() || self.tasks.is_empty() {
            return Err("sweep.policies and sweep.tasks must be nonempty".into());
        }
        if self.pretrain_steps == 0 || self.probe_steps == 0 {
            return Err("sweep step counts must be at least 1".into());
        }
        self.values.iter().try_for_each(|&v| self.param.check(v))
    }
}

/// Probe stage settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSettings {
    pub tasks: Vec<ProbeTask>,
    pub config: ProbeConfig,
    /// Also score a randomly initialised encoder of the same shape.
    pub include_untrained: bool,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            tasks: vec![ProbeTask::PhonemeL, ProbeTask::Phoneme1H, ProbeTask::SpeakerF, ProbeTask::SpeakerU],
            config: ProbeConfig::default(),
            include_untrained: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
    pub synth: SynthCorpusSpec,
    pub features: FeatureConfig,
    pub vad: VadConfig,
    pub mask: MaskPolicyConfig,
    pub model: EncoderConfig,
    pub train: TrainConfig,
    pub probe: ProbeSettings,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("masklab-out"),
            force: false,
            synth: SynthCorpusSpec::default(),
            features: FeatureConfig::default(),
            vad: VadConfig::default(),
            mask: MaskPolicyConfig::default(),
            model: EncoderConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeSettings::default(),
            sweep: SweepSpec::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn boolean(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

fn range(key: &str, v: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = v.split_once('-').ok_or_else(|| format!("{key}: expected lo-hi, got {v:?}"))?;
    Ok(num(key, a.trim())?..=num(key, b.trim())?)
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| format!("{key}: unknown entry {s:?}")))
        .collect()
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

fn show_range(r: &RangeInclusive<usize>) -> String {
    format!("{}-{}", r.start(), r.end())
}

impl RunConfig {
    /// Every setting in canonical string form. The key set is the set of
    /// accepted keys.
    pub fn settings(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: &dyn Display| {
            m.insert(k.to_string(), v.to_string());
        };
        put("seed", &self.seed);
        let s = &self.synth;
        put("synth.num_utterances", &s.num_utterances);
        put("synth.num_phoneme_classes", &s.num_phoneme_classes);
        put("synth.num_speakers", &s.num_speakers);
        put("synth.phoneme_duration", &show_range(&s.phoneme_duration_range));
        put("synth.silence_gap", &show_range(&s.silence_gap_range));
        put("synth.words_per_utterance", &show_range(&s.words_per_utterance));
        put("synth.phonemes_per_word", &show_range(&s.phonemes_per_word));
        put("synth.lexicon_size", &s.lexicon_size);
        put("synth.coarticulation_frames", &s.coarticulation_frames);
        put("synth.noise_level", &s.noise_level);
        put("synth.silence_noise_level", &s.silence_noise_level);
        put("synth.sample_rate", &s.sample_rate);
        let f = &self.features;
        put("features.frame_length", &f.frame_length);
        put("features.hop", &f.hop);
        put("features.fft_size", &f.fft_size);
        put("features.num_mel", &f.num_mel);
        put("features.mel_low", &f.mel_low);
        put("features.mel_high", &f.mel_high.map_or("nyquist".to_string(), |v| v.to_string()));
        put("features.log_floor", &f.log_floor);
        put("features.normalize", &f.normalize);
        put("vad.theta", &self.vad.theta);
        put("vad.hangover", &self.vad.hangover);
        put("vad.min_speech_run", &self.vad.min_speech_run);
        let k = &self.mask;
        put("mask.policy", &k.policy.name());
        put("mask.span", &k.span);
        put("mask.budget", &k.budget);
        put("mask.rho", &k.rho);
        put("mask.mode", &k.mode.name());
        put("mask.include_silence_phones", &k.include_silence_phones);
        let e = &self.model;
        put("model.d_model", &e.d_model);
        put("model.num_layers", &e.num_layers);
        put("model.num_heads", &e.num_heads);
        put("model.ff_dim", &e.ff_dim);
        put("model.dropout", &e.dropout);
        put("model.max_frames", &e.max_frames);
        let t = &self.train;
        put("train.learning_rate", &t.learning_rate);
        put("train.adam_beta1", &t.adam_beta1);
        put("train.adam_beta2", &t.adam_beta2);
        put("train.adam_eps", &t.adam_eps);
        put("train.batch_size", &t.batch_size);
        put("train.num_steps", &t.num_steps);
        put("train.loss_scope", &t.loss_scope.name());
        let p = &self.probe;
        put("probe.tasks", &join(&p.tasks, |t| t.name().to_string()));
        put("probe.hidden_dim", &p.config.hidden_dim);
        put("probe.learning_rate", &p.config.learning_rate);
        put("probe.num_steps", &p.config.num_steps);
        put("probe.batch_size", &p.config.batch_size);
        put("probe.include_untrained", &p.include_untrained);
        let w = &self.sweep;
        put("sweep.param", &w.param.name());
        put("sweep.values", &join(&w.values, |v| v.to_string()));
        put("sweep.policies", &join(&w.policies, |p| p.name().to_string()));
        put("sweep.tasks", &join(&w.tasks, |t| t.name().to_string()));
        put("sweep.pretrain_steps", &w.pretrain_steps);
        put("sweep.probe_steps", &w.probe_steps);
        m
    }

    /// Sets one key. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "synth.num_utterances" => self.synth.num_utterances = num(key, v)?,
            "synth.num_phoneme_classes" => self.synth.num_phoneme_classes = num(key, v)?,
            "synth.num_speakers" => self.synth.num_speakers = num(key, v)?,
            "synth.phoneme_duration" => self.synth.phoneme_duration_range = range(key, v)?,
            "synth.silence_gap" => self.synth.silence_gap_range = range(key, v)?,
            "synth.words_per_utterance" => self.synth.words_per_utterance = range(key, v)?,
            "synth.phonemes_per_word" => self.synth.phonemes_per_word = range(key, v)?,
            "synth.lexicon_size" => self.synth.lexicon_size = num(key, v)?,
            "synth.coarticulation_frames" => self.synth.coarticulation_frames = num(key, v)?,
            "synth.noise_level" => self.synth.noise_level = num(key, v)?,
            "synth.silence_noise_level" => self.synth.silence_noise_level = num(key, v)?,
            "synth.sample_rate" => self.synth.sample_rate = num(key, v)?,
            "features.frame_length" => self.features.frame_length = num(key, v)?,
            "features.hop" => self.features.hop = num(key, v)?,
            "features.fft_size" => self.features.fft_size = num(key, v)?,
            "features.num_mel" => self.features.num_mel = num(key, v)?,
            "features.mel_low" => self.features.mel_low = num(key, v)?,
            "features.mel_high" => {
                self.features.mel_high = if v == "nyquist" { None } else { Some(num(key, v)?) }
            }
            "features.log_floor" => self.features.log_floor = num(key, v)?,
            "features.normalize" => self.features.normalize = boolean(key, v)?,
            "vad.theta" => self.vad.theta = num(key, v)?,
            "vad.hangover" => self.vad.hangover = num(key, v)?,
            "vad.min_speech_run" => self.vad.min_speech_run = num(key, v)?,
            "mask.policy" => {
                self.mask.policy = MaskPolicy::parse(v).ok_or_else(|| format!("{key}: unknown policy {v:?}"))?
            }
            "mask.span" => self.mask.span = num(key, v)?,
            "mask.budget" => self.mask.budget = num(key, v)?,
            "mask.rho" => self.mask.rho = num(key, v)?,
            "mask.mode" => self.mask.mode = MaskMode::parse(v).ok_or_else(|| format!("{key}: unknown mode {v:?}"))?,
            "mask.include_silence_phones" => self.mask.include_silence_phones = boolean(key, v)?,
            "model.d_model" => self.model.d_model = num(key, v)?,
            "model.num_layers" => self.model.num_layers = num(key, v)?,
            "model.num_heads" => self.model.num_heads = num(key, v)?,
            "model.ff_dim" => self.model.ff_dim = num(key, v)?,
            "model.dropout" => self.model.dropout = num(key, v)?,
            "model.max_frames" => self.model.max_frames = num(key, v)?,
            "train.learning_rate" => self.train.learning_rate = num(key, v)?,
            "train.adam_beta1" => self.train.adam_beta1 = num(key, v)?,
            "train.adam_beta2" => self.train.adam_beta2 = num(key, v)?,
            "train.adam_eps" => self.train.adam_eps = num(key, v)?,
            "train.batch_size" => self.train.batch_size = num(key, v)?,
            "train.num_steps" => self.train.num_steps = num(key, v)?,
            "train.loss_scope" => {
                self.train.loss_scope = LossScope::parse(v).ok_or_else(|| format!("{key}: unknown scope {v:?}"))?
            }
            "probe.tasks" => self.probe.tasks = list(key, v, ProbeTask::parse)?,
            "probe.hidden_dim" => self.probe.config.hidden_dim = num(key, v)?,
            "probe.learning_rate" => self.probe.config.learning_rate = num(key, v)?,
            "probe.num_steps" => self.probe.config.num_steps = num(key, v)?,
            "probe.batch_size" => self.probe.config.batch_size = num(key, v)?,
            "probe.include_untrained" => self.probe.include_untrained = boolean(key, v)?,
            "sweep.param" => {
                self.sweep.param = SweepParam::parse(v).ok_or_else(|| format!("{key}: unknown parameter {v:?}"))?
            }
            "sweep.values" => self.sweep.values = list(key, v, |s| s.parse().ok())?,
            "sweep.policies" => self.sweep.policies = list(key, v, MaskPolicy::parse)?,
            "sweep.tasks" => self.sweep.tasks = list(key, v, ProbeTask::parse)?,
            "sweep.pretrain_steps" => self.sweep.pretrain_steps = num(key, v)?,
            "sweep.probe_steps" => self.sweep.probe_steps = num(key, v)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies `overrides` on top of the defaults, then checks every module
    /// config.
    pub fn resolve(overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (k, v) in overrides {
            cfg.set(k, v).map_err(CliError::Config)?;
        }
        cfg.sync_seeds();
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }

    /// Copies the global seed into every module config.
    fn sync_seeds(&mut self) {
        self.synth.seed = self.seed;
        self.mask.seed = self.seed;
        self.train.seed = self.seed;
        self.probe.config.seed = self.seed;
        self.model.input_dim = self.features.num_mel;
        self.synth.frame_length = self.features.frame_length;
        self.synth.hop = self.features.hop;
    }

    pub fn validate(&self) -> Result<(), String> {
        self.synth.validate().map_err(|e| e.to_string())?;
        self.features.validate(self.synth.sample_rate).map_err(|e| e.to_string())?;
        self.vad.validate().map_err(|e| e.to_string())?;
        self.mask.validate().map_err(|e| e.to_string())?;
        self.model.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        let mut probe = self.probe.config.clone();
        for &task in &self.probe.tasks {
            probe.task = task;
            probe.validate().map_err(|e| e.to_string())?;
        }
        self.sweep.validate()
    }

    /// Copy with one more override applied.
    pub fn with(&self, key: &str, value: &str) -> Result<Self, CliError> {
        let mut c = self.clone();
        c.set(key, value).map_err(CliError::Config)?;
        c.sync_seeds();
        c.validate().map_err(CliError::Config)?;
        Ok(c)
    }

    /// SHA-256 over the canonical settings of the given sections (`""` is the
    /// top level), hex encoded.
    pub fn hash_of(&self, sections: &[&str]) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.settings() {
            let section = k.split_once('.').map_or("", |(s, _)| s);
            if sections.contains(&section) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash of every setting.
    pub fn config_hash(&self) -> String {
        self.hash_of(&["", "synth", "features", "vad", "mask", "model", "train", "probe", "sweep"])
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a key
/// given twice is an error.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(CliError::Config(format!("line {}: key {k:?} given twice", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// `key=value` from the command line.
pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))
}

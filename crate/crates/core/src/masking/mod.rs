//! Mask sequences and the four policies that generate them.
//!
//! Every policy draws starting points until `round(p·T)` frames are masked.
//! Random and speech-level policies mask `C` frames from each start; the
//! phoneme-level policy masks whole aligned phonemes; the combined policy
//! masks the whole phoneme under a speech start and `C` frames from a
//! non-speech start. Speech/non-speech start choice follows a running quota:
//! after `k` starts exactly `round(ρ·k)` came from the speech list.

mod apply;
mod policies;

use std::fmt;

use thiserror::Error;

pub use apply::apply_mask;
pub use policies::{gen_combined_mask, gen_phoneme_level_mask, gen_random_mask, gen_speech_level_mask};

use crate::alignment::PhonemeAlignment;
use crate::seed::utterance_seed;
use crate::vad::SpeechLists;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("invalid mask config: {0}")]
    InvalidConfig(String),
    #[error("utterance has no frames")]
    NoFrames,
    #[error("alignment has no phoneme eligible for masking")]
    NoEligiblePhonemes,
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("mask covers {mask} frames but features have {features}")]
    LengthMismatch { mask: usize, features: usize },
    #[error("malformed mask dump (line {line}): {msg}")]
    Malformed { line: usize, msg: String },
    #[error("{policy} policy requires {what}")]
    MissingInput { policy: MaskPolicy, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskPolicy {
    Random,
    SpeechLevel,
    PhonemeLevel,
    Combined,
}

impl MaskPolicy {
    pub const ALL: [MaskPolicy; 4] =
        [MaskPolicy::Random, MaskPolicy::SpeechLevel, MaskPolicy::PhonemeLevel, MaskPolicy::Combined];

    pub fn name(self) -> &'static str {
        match self {
            MaskPolicy::Random => "random",
            MaskPolicy::SpeechLevel => "speech",
            MaskPolicy::PhonemeLevel => "phoneme",
            MaskPolicy::Combined => "combined",
        }
    }

    /// Display name used in result tables.
    pub fn table_name(self) -> &'static str {
        match self {
            MaskPolicy::Random => "Random",
            MaskPolicy::SpeechLevel => "Speech-Level",
            MaskPolicy::PhonemeLevel => "Phoneme-Level",
            MaskPolicy::Combined => "Speech&Phoneme-Level",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Some(MaskPolicy::Random),
            "speech" | "speech-level" | "speechlevel" => Some(MaskPolicy::SpeechLevel),
            "phoneme" | "phoneme-level" | "phonemelevel" => Some(MaskPolicy::PhonemeLevel),
            "combined" | "speech-phoneme" | "speech&phoneme" => Some(MaskPolicy::Combined),
            _ => None,
        }
    }

    pub fn needs_speech_lists(self) -> bool {
        matches!(self, MaskPolicy::SpeechLevel | MaskPolicy::Combined)
    }

    pub fn needs_alignment(self) -> bool {
        matches!(self, MaskPolicy::PhonemeLevel | MaskPolicy::Combined)
    }
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How selected frames are altered when the mask is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    ZeroAll,
    /// Per run: 80% zeroed, 10% frames replaced by random unmasked frames, 10% kept.
    Stochastic801010,
}

impl MaskMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "zeroall" | "zero_all" => Some(MaskMode::ZeroAll),
            "stochastic" | "801010" | "stochastic801010" => Some(MaskMode::Stochastic801010),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskMode::ZeroAll => "zero",
            MaskMode::Stochastic801010 => "stochastic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPolicyConfig {
    pub policy: MaskPolicy,
    /// Span width `C` in frames.
    pub span: usize,
    /// Target masked fraction `p` of the frames.
    pub budget: f64,
    /// Speech proportion `ρ` of starting points.
    pub rho: f64,
    pub mode: MaskMode,
    pub include_silence_phones: bool,
    pub seed: u64,
}

impl Default for MaskPolicyConfig {
    fn default() -> Self {
        MaskPolicyConfig {
            policy: MaskPolicy::Random,
            span: 7,
            budget: 0.15,
            rho: 0.9,
            mode: MaskMode::ZeroAll,
            include_silence_phones: false,
            seed: 0,
        }
    }
}

impl MaskPolicyConfig {
    pub fn validate(&self) -> Result<(), MaskError> {
        if self.span == 0 {
            return Err(MaskError::InvalidConfig("span C must be at least 1".into()));
        }
        // p = 0 is allowed as the degenerate empty-mask case
        if !(0.0..=1.0).contains(&self.budget) {
            return Err(MaskError::InvalidConfig(format!("budget {} outside [0, 1]", self.budget)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(MaskError::InvalidConfig(format!("rho {} outside [0, 1]", self.rho)));
        }
        Ok(())
    }

    /// `round(p·T)`.
    pub fn target(&self, num_frames: usize) -> usize {
        (self.budget * num_frames as f64).round() as usize
    }

    /// Copy whose seed is `hash(seed, utt_id)`.
    pub fn for_utterance(&self, utt_id: &str) -> Self {
        MaskPolicyConfig { seed: utterance_seed(self.seed, utt_id), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameState {
    Unmasked,
    MaskedZero,
    /// Replaced by the features of the given (unmasked) frame.
    MaskedReplace(usize),
    MaskedKeep,
}

impl FrameState {
    pub fn is_masked(self) -> bool {
        self != FrameState::Unmasked
    }

    pub fn code(self) -> String {
        match self {
            FrameState::Unmasked => "U".into(),
            FrameState::MaskedZero => "Z".into(),
            FrameState::MaskedReplace(src) => format!("R:{src}"),
            FrameState::MaskedKeep => "K".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RunOrigin {
    RandomSpan,
    SpeechSpan,
    SilenceSpan,
    PhonemeSpan(String),
}

impl fmt::Display for RunOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOrigin::RandomSpan => f.write_str("RandomSpan"),
            RunOrigin::SpeechSpan => f.write_str("SpeechSpan"),
            RunOrigin::SilenceSpan => f.write_str("SilenceSpan"),
            RunOrigin::PhonemeSpan(l) => write!(f, "PhonemeSpan:{l}"),
        }
    }
}

impl RunOrigin {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RandomSpan" => Some(RunOrigin::RandomSpan),
            "SpeechSpan" => Some(RunOrigin::SpeechSpan),
            "SilenceSpan" => Some(RunOrigin::SilenceSpan),
            _ => s.strip_prefix("PhonemeSpan:").map(|l| RunOrigin::PhonemeSpan(l.to_string())),
        }
    }
}

/// Maximal masked interval `start..=end` with the policy decision that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRun {
    pub start: usize,
    pub end: usize,
    pub origin: RunOrigin,
}

impl MaskRun {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Bookkeeping recorded by the generators for auditing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskMeta {
    /// `round(p·T)`.
    pub target: usize,
    pub starts_from_speech: usize,
    pub starts_from_nonspeech: usize,
    /// Every candidate start was drawn before reaching the target.
    pub exhausted: bool,
    /// A list ran dry and the other list supplied the remaining starts.
    pub fell_back: bool,
    /// Longest span a single start can mask.
    pub max_span: usize,
}

impl MaskMeta {
    pub fn total_starts(&self) -> usize {
        self.starts_from_speech + self.starts_from_nonspeech
    }
}

/// Per-frame states plus the disjoint, sorted runs covering the masked frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    states: Vec<FrameState>,
    runs: Vec<MaskRun>,
    pub meta: MaskMeta,
}

impl MaskSequence {
    pub fn empty(num_frames: usize) -> Self {
        MaskSequence { states: vec![FrameState::Unmasked; num_frames], runs: Vec::new(), meta: MaskMeta::default() }
    }

    /// Builds a mask from runs, every masked frame in state `MaskedZero`.
    pub fn from_runs(num_frames: usize, runs: Vec<MaskRun>) -> Result<Self, MaskError> {
        let mut states = vec![FrameState::Unmasked; num_frames];
        for r in &runs {
            if r.start > r.end || r.end >= num_frames {
                return Err(MaskError::InconsistentInputs(format!(
                    "run {}..={} invalid for {num_frames} frames",
                    r.start, r.end
                )));
            }
            states[r.start..=r.end].iter_mut().for_each(|s| *s = FrameState::MaskedZero);
        }
        let m = MaskSequence { states, runs, meta: MaskMeta::default() };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn from_parts(states: Vec<FrameState>, runs: Vec<MaskRun>, meta: MaskMeta) -> Self {
        MaskSequence { states, runs, meta }
    }

    /// Checks the run/state invariants.
    pub fn validate(&self) -> Result<(), MaskError> {
        let bad = |m: String| Err(MaskError::InconsistentInputs(m));
        let mut covered = vec![false; self.states.len()];
        let mut prev_end: Option<usize> = None;
        for r in &self.runs {
            if r.start > r.end || r.end >= self.states.len() {
                return bad(format!("run {}..={} out of range", r.start, r.end));
            }
            if prev_end.is_some_and(|p| r.start <= p) {
                return bad(format!("run {}..={} overlaps or is unsorted", r.start, r.end));
            }
            prev_end = Some(r.end);
            covered[r.start..=r.end].iter_mut().for_each(|c| *c = true);
        }
        for (t, (s, c)) in self.states.iter().zip(&covered).enumerate() {
            if s.is_masked() != *c {
                return bad(format!("frame {t} state {s:?} disagrees with runs"));
            }
            if let FrameState::MaskedReplace(src) = s {
                if *src >= self.states.len() || self.states[*src].is_masked() {
                    return bad(format!("frame {t} replaced from masked or invalid frame {src}"));
                }
            }
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FrameState] {
        &self.states
    }

    pub fn runs(&self) -> &[MaskRun] {
        &self.runs
    }

    pub fn is_masked(&self, t: usize) -> bool {
        self.states[t].is_masked()
    }

    pub fn masked_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_masked()).count()
    }

    pub fn masked_frames(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&t| self.is_masked(t)).collect()
    }

    /// Copy with replaced per-frame states; runs and metadata are kept.
    pub(crate) fn with_states(&self, states: Vec<FrameState>) -> Self {
        MaskSequence { states, runs: self.runs.clone(), meta: self.meta.clone() }
    }

    /// One run per line: `origin<TAB>start<TAB>end`.
    pub fn runs_to_tsv(&self) -> String {
        self.runs.iter().map(|r| format!("{}\t{}\t{}\n", r.origin, r.start, r.end)).collect()
    }

    pub fn runs_from_tsv(text: &str, num_frames: usize) -> Result<Self, MaskError> {
        let mut runs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| MaskError::Malformed { line: i + 1, msg };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad("expected `origin<TAB>start<TAB>end`".into()));
            }
            let origin = RunOrigin::parse(f[0]).ok_or_else(|| bad(format!("unknown origin {:?}", f[0])))?;
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad frame index {s:?}")));
            runs.push(MaskRun { start: num(f[1])?, end: num(f[2])?, origin });
        }
        Self::from_runs(num_frames, runs)
    }

    /// One state code per line (`U`, `Z`, `R:<src>`, `K`).
    pub fn states_to_text(&self) -> String {
        self.states.iter().map(|s| s.code() + "\n").collect()
    }
}

/// Inputs a policy may need besides the frame count.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskInputs<'a> {
    pub lists: Option<&'a SpeechLists>,
    pub alignment: Option<&'a PhonemeAlignment>,
}

/// Dispatches to the generator for `cfg.policy`.
pub fn generate_mask(
    num_frames: usize,
    inputs: MaskInputs<'_>,
    cfg: &MaskPolicyConfig,
) -> Result<MaskSequence, MaskError> {
    let lists = || {
        inputs
            .lists
            .ok_or(MaskError::MissingInput { policy: cfg.policy, what: "speech lists" })
    };
    let alignment = || {
        inputs
            .alignment
            .ok_or(MaskError::MissingInput { policy: cfg.policy, what: "a phoneme alignment" })
    };
    match cfg.policy {
        MaskPolicy::Random => gen_random_mask(num_frames, cfg),
        MaskPolicy::SpeechLevel => gen_speech_level_mask(num_frames, lists()?, cfg),
        MaskPolicy::PhonemeLevel => gen_phoneme_level_mask(alignment()?, cfg),
        MaskPolicy::Combined => gen_combined_mask(alignment()?, lists()?, cfg),
    }
}

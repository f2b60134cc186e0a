//! Phoneme alignments: contiguous labelled frame spans covering an utterance.
//!
//! File format: one span per line, `label<TAB>begin_frame<TAB>end_frame`
//! (inclusive, zero-based); lines starting with `#` are comments.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("malformed alignment (line {line}): {msg}")]
    MalformedAlignment { line: usize, msg: String },
    #[error("spans not contiguous at frame {frame}: {msg}")]
    GapOrOverlap { frame: usize, msg: String },
    #[error("alignment covers {covered} frames, expected {expected}")]
    LengthMismatch { covered: usize, expected: usize },
    #[error("frame {frame} out of range for {num_frames} frames")]
    OutOfRange { frame: usize, num_frames: usize },
    #[error("cannot read alignment: {0}")]
    Io(String),
}

/// Labels treated as silence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilenceSet(BTreeSet<String>);

impl Default for SilenceSet {
    fn default() -> Self {
        SilenceSet(["sil", "sp", ""].iter().map(|s| s.to_string()).collect())
    }
}

impl SilenceSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        SilenceSet(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSpan {
    pub label: String,
    pub begin: usize,
    /// Inclusive.
    pub end: usize,
    pub is_silence: bool,
}

impl PhonemeSpan {
    pub fn new(label: impl Into<String>, begin: usize, end: usize, is_silence: bool) -> Self {
        PhonemeSpan { label: label.into(), begin, end, is_silence }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.begin <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeAlignment {
    utt_id: String,
    spans: Vec<PhonemeSpan>,
    num_frames: usize,
}

impl PhonemeAlignment {
    /// Validates sortedness, contiguity and coverage of `0..num_frames`.
    pub fn new(
        utt_id: impl Into<String>,
        spans: Vec<PhonemeSpan>,
        num_frames: usize,
    ) -> Result<Self, AlignmentError> {
        let mut next = 0;
        for s in &spans {
            if s.begin > s.end {
                return Err(AlignmentError::GapOrOverlap {
                    frame: s.begin,
                    msg: format!("span {:?} ends before it begins", s.label),
                });
            }
            if s.begin != next {
                let msg = if s.begin < next {
                    format!("span {:?} overlaps the previous span", s.label)
                } else {
                    format!("frames {next}..{} are not covered", s.begin - 1)
                };
                return Err(AlignmentError::GapOrOverlap { frame: s.begin.min(next), msg });
            }
            next = s.end + 1;
        }
        if next != num_frames {
            return Err(AlignmentError::LengthMismatch { covered: next, expected: num_frames });
        }
        Ok(PhonemeAlignment { utt_id: utt_id.into(), spans, num_frames })
    }

    pub fn parse(
        utt_id: &str,
        text: &str,
        num_frames: usize,
        silence: &SilenceSet,
    ) -> Result<Self, AlignmentError> {
        let mut spans = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let malformed = |msg: String| AlignmentError::MalformedAlignment { line: i + 1, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(malformed(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| malformed(format!("bad frame index {s:?}")))
            };
            let label = fields[0].trim().to_string();
            let is_silence = silence.contains(&label);
            spans.push(PhonemeSpan::new(label, num(fields[1])?, num(fields[2])?, is_silence));
        }
        Self::new(utt_id, spans, num_frames)
    }

    pub fn to_tsv(&self) -> String {
        self.spans
            .iter()
            .map(|s| format!("{}\t{}\t{}\n", s.label, s.begin, s.end))
            .collect()
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn spans(&self) -> &[PhonemeSpan] {
        &self.spans
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Index into `spans()` of the span containing frame `t`.
    pub fn span_index_at(&self, t: usize) -> Result<usize, AlignmentError> {
        if t >= self.num_frames {
            return Err(AlignmentError::OutOfRange { frame: t, num_frames: self.num_frames });
        }
        Ok(self.spans.partition_point(|s| s.end < t))
    }

    pub fn phoneme_at(&self, t: usize) -> Result<&PhonemeSpan, AlignmentError> {
        self.span_index_at(t).map(|i| &self.spans[i])
    }

    /// Per-frame span index.
    pub fn frame_to_span(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_frames);
        for (i, s) in self.spans.iter().enumerate() {
            out.extend(std::iter::repeat(i).take(s.len()));
        }
        out
    }
}

pub fn parse_alignment(path: impl AsRef<Path>, num_frames: usize) -> Result<PhonemeAlignment, AlignmentError> {
    parse_alignment_with(path, num_frames, &SilenceSet::default())
}

pub fn parse_alignment_with(
    path: impl AsRef<Path>,
    num_frames: usize,
    silence: &SilenceSet,
) -> Result<PhonemeAlignment, AlignmentError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AlignmentError::Io(format!("{}: {e}", path.display())))?;
    let utt_id = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".tsv").trim_end_matches(".align"))
        .unwrap_or_default();
    PhonemeAlignment::parse(utt_id, &text, num_frames, silence)
}

//! Mask-coverage statistics, a temporal sharpness metric for reconstructed
//! spectrograms, and spectrogram dumps (binary PGM plus CSV).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::alignment::PhonemeAlignment;
use crate::features::FeatureMatrix;
use crate::masking::{MaskSequence, RunOrigin};
use crate::scalar::Scalar;
use crate::vad::SpeechLists;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("no masked frame has masked neighbours on both sides within its run")]
    NoInteriorFrames,
    #[error("malformed matrix CSV: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskStats {
    pub num_frames: usize,
    pub masked_fraction: f64,
    /// Share of masked frames that are speech; 0 when nothing is masked.
    pub speech_masked_fraction: f64,
    /// Run length → number of runs.
    pub run_length_histogram: BTreeMap<usize, usize>,
    /// Share of phoneme-origin runs that coincide with an aligned span; absent
    /// without an alignment or without such runs.
    pub whole_phoneme_rate: Option<f64>,
}

impl MaskStats {
    pub fn num_runs(&self) -> usize {
        self.run_length_histogram.values().sum()
    }

    /// `key=value` report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_frames={}", self.num_frames);
        let _ = writeln!(s, "masked_fraction={}", self.masked_fraction);
        let _ = writeln!(s, "speech_masked_fraction={}", self.speech_masked_fraction);
        let hist: Vec<String> = self.run_length_histogram.iter().map(|(l, n)| format!("{l}:{n}")).collect();
        let _ = writeln!(s, "run_length_histogram={}", hist.join(","));
        if let Some(r) = self.whole_phoneme_rate {
            let _ = writeln!(s, "whole_phoneme_rate={r}");
        }
        s
    }
}

/// Coverage statistics, recomputed from the runs every call.
pub fn mask_stats(
    mask: &MaskSequence,
    lists: &SpeechLists,
    alignment: Option<&PhonemeAlignment>,
) -> Result<MaskStats, AnalysisError> {
    let t = mask.num_frames();
    if lists.num_frames() != t {
        return Err(AnalysisError::InconsistentInputs(format!("mask has {t} frames, speech lists {}", lists.num_frames())));
    }
    if let Some(a) = alignment {
        if a.num_frames() != t {
            return Err(AnalysisError::InconsistentInputs(format!("mask has {t} frames, alignment {}", a.num_frames())));
        }
    }
    let speech = lists.speech_mask();
    let mut masked = 0usize;
    let mut masked_speech = 0usize;
    let mut hist = BTreeMap::new();
    let (mut phoneme_runs, mut exact) = (0usize, 0usize);
    for r in mask.runs() {
        masked += r.len();
        masked_speech += (r.start..=r.end).filter(|&f| speech[f]).count();
        *hist.entry(r.len()).or_insert(0) += 1;
        if let (RunOrigin::PhonemeSpan(_), Some(a)) = (&r.origin, alignment) {
            phoneme_runs += 1;
            if a.spans().iter().any(|s| s.begin == r.start && s.end == r.end) {
                exact += 1;
            }
        }
    }
    Ok(MaskStats {
        num_frames: t,
        masked_fraction: if t == 0 { 0.0 } else { masked as f64 / t as f64 },
        speech_masked_fraction: if masked == 0 { 0.0 } else { masked_speech as f64 / masked as f64 },
        run_length_histogram: hist,
        whole_phoneme_rate: (alignment.is_some() && phoneme_runs > 0).then(|| exact as f64 / phoneme_runs as f64),
    })
}

/// Mean of `|x[t+1,f] − 2x[t,f] + x[t−1,f]|` over every bin `f` and every
/// masked frame `t` whose two neighbours belong to the same run.
pub fn sharpness<S: Scalar>(x: &FeatureMatrix<S>, mask: &MaskSequence) -> Result<f64, AnalysisError> {
    if mask.num_frames() != x.num_frames() {
        return Err(AnalysisError::InconsistentInputs(format!(
            "mask has {} frames, matrix {}",
            mask.num_frames(),
            x.num_frames()
        )));
    }
    let v = x.values();
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in mask.runs() {
        for t in r.start + 1..r.end {
            for f in 0..v.ncols() {
                let d = v[[t + 1, f]] - S::lit(2.0) * v[[t, f]] + v[[t - 1, f]];
                sum += d.abs().to_f64_lossy();
            }
            count += v.ncols();
        }
    }
    if count == 0 {
        return Err(AnalysisError::NoInteriorFrames);
    }
    Ok(sum / count as f64)
}

/// Centred 3-frame moving average; end frames average their two available
/// frames.
pub fn moving_average_3<S: Scalar>(x: &FeatureMatrix<S>) -> FeatureMatrix<S> {
    let v = x.values();
    let t = v.nrows();
    let out = Array2::from_shape_fn(v.dim(), |(i, f)| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(t - 1);
        let sum = (lo..=hi).map(|k| v[[k, f]]).fold(S::zero(), |a, b| a + b);
        sum / S::lit((hi - lo + 1) as f64)
    });
    x.with_values(out)
}

/// Per-policy sharpness of reconstructions alongside the ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SharpnessReport {
    /// `(policy, reconstructed, ground_truth)`.
    pub rows: Vec<(String, f64, f64)>,
}

impl SharpnessReport {
    pub fn push(&mut self, policy: impl Into<String>, reconstructed: f64, ground_truth: f64) {
        self.rows.push((policy.into(), reconstructed, ground_truth));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,reconstructed,ground_truth\n");
        for (p, r, g) in &self.rows {
            let _ = writeln!(s, "{p},{r},{g}");
        }
        s
    }
}

/// P5 graymap: one column per frame, highest bin at the top, plus a bottom
/// marker row that is white under masked frames and black elsewhere. Values
/// are min-max normalised over the matrix; a constant matrix is mid-gray.
pub fn spectrogram_pgm<S: Scalar>(x: &FeatureMatrix<S>, mask: Option<&MaskSequence>) -> Vec<u8> {
    let v = x.values();
    let (t, f) = v.dim();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
        let a = a.to_f64_lossy();
        (lo.min(a), hi.max(a))
    });
    let level = |a: S| -> u8 {
        if hi > lo {
            ((a.to_f64_lossy() - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    };
    let mut out = format!("P5\n{t} {}\n255\n", f + 1).into_bytes();
    for bin in (0..f).rev() {
        out.extend((0..t).map(|frame| level(v[[frame, bin]])));
    }
    out.extend((0..t).map(|frame| if mask.is_some_and(|m| m.is_masked(frame)) { 255 } else { 0 }));
    out
}

/// One line per frame, comma-separated, shortest round-trip decimal form.
pub fn matrix_csv<S: Scalar>(x: &FeatureMatrix<S>) -> String {
    let mut s = String::new();
    for row in x.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix_csv<S: Scalar>(text: &str, frame_rate: f64) -> Result<FeatureMatrix<S>, AnalysisError> {
    let mut rows: Vec<Vec<S>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map(S::lit))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AnalysisError::Malformed(format!("line {}: {e}", i + 1)))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(AnalysisError::Malformed(format!("line {} has {} columns", i + 1, row.len())));
        }
        rows.push(row);
    }
    let f = rows.first().map_or(0, Vec::len);
    let flat: Vec<S> = rows.iter().flatten().copied().collect();
    let values = Array2::from_shape_vec((rows.len(), f), flat).map_err(|e| AnalysisError::Malformed(e.to_string()))?;
    FeatureMatrix::new(values, frame_rate).map_err(|e| AnalysisError::Malformed(e.to_string()))
}

/// Writes `<stem>.pgm` and `<stem>.csv`; returns both paths.
pub fn dump_spectrogram<S: Scalar>(
    x: &FeatureMatrix<S>,
    mask: Option<&MaskSequence>,
    stem: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), AnalysisError> {
    let stem = stem.as_ref();
    let pgm = stem.with_extension("pgm");
    let csv = stem.with_extension("csv");
    std::fs::write(&pgm, spectrogram_pgm(x, mask))?;
    std::fs::write(&csv, matrix_csv(x))?;
    Ok((pgm, csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MaskRun;
    use crate::vad::{speech_lists, VadLabels};

    fn run(start: usize, end: usize, origin: RunOrigin) -> MaskRun {
        MaskRun { start, end, origin }
    }

    fn fm(t: usize, f: usize, g: impl Fn(usize, usize) -> f64) -> FeatureMatrix<f64> {
        FeatureMatrix::new(Array2::from_shape_fn((t, f), |(a, b)| g(a, b)), 100.0).unwrap()
    }

    #[test]
    fn counts_from_runs() {
        let m = MaskSequence::from_runs(100, vec![run(0, 6, RunOrigin::RandomSpan), run(10, 16, RunOrigin::RandomSpan)])
            .unwrap();
        let lists = speech_lists(&VadLabels::new((0..100).map(|t| t < 10).collect()));
        let s = mask_stats(&m, &lists, None).unwrap();
        assert!((s.masked_fraction - 0.14).abs() < 1e-12);
        assert_eq!(s.run_length_histogram, BTreeMap::from([(7, 2)]));
        assert_eq!(s.speech_masked_fraction, 0.5);
        assert_eq!(s.whole_phoneme_rate, None);
        assert_eq!(s.num_runs(), 2);
        let short = speech_lists(&VadLabels::new(vec![true; 99]));
        assert!(matches!(mask_stats(&m, &short, None), Err(AnalysisError::InconsistentInputs(_))));
    }

    #[test]
    fn sharpness_hand_values() {
        let m = MaskSequence::from_runs(12, vec![run(2, 9, RunOrigin::RandomSpan)]).unwrap();
        assert_eq!(sharpness(&fm(12, 3, |_, _| 2.5), &m).unwrap(), 0.0);
        let alt = fm(12, 3, |t, _| if t % 2 == 0 { 1.0 } else { -1.0 });
        assert_eq!(sharpness(&alt, &m).unwrap(), 4.0);
        assert!(sharpness(&fm(12, 3, |t, f| 0.3 * t as f64 - f as f64), &m).unwrap() < 1e-12);
        let tiny = MaskSequence::from_runs(12, vec![run(2, 3, RunOrigin::RandomSpan)]).unwrap();
        assert!(matches!(sharpness(&alt, &tiny), Err(AnalysisError::NoInteriorFrames)));
    }

    #[test]
    fn pgm_layout_and_constant_gray() {
        let x = fm(10, 80, |t, f| (t * f) as f64);
        let m = MaskSequence::from_runs(10, vec![run(3, 5, RunOrigin::RandomSpan)]).unwrap();
        let bytes = spectrogram_pgm(&x, Some(&m));
        let header = b"P5\n10 81\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 10 * 81);
        let marker = &bytes[bytes.len() - 10..];
        assert_eq!(marker, &[0, 0, 0, 255, 255, 255, 0, 0, 0, 0]);
        let flat = spectrogram_pgm(&fm(10, 80, |_, _| -3.0), None);
        assert!(flat[header.len()..header.len() + 800].iter().all(|&b| b == 128));
        assert_eq!(spectrogram_pgm(&x, Some(&m)), bytes);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let x = fm(7, 5, |t, f| ((t * 31 + f * 7) as f64).sin() * 1e3 / (f as f64 + 0.3));
        let back: FeatureMatrix<f64> = parse_matrix_csv(&matrix_csv(&x), 100.0).unwrap();
        assert_eq!(back.values(), x.values());
        let x32 = x.cast::<f32>();
        let back32: FeatureMatrix<f32> = parse_matrix_csv(&matrix_csv(&x32), 100.0).unwrap();
        assert_eq!(back32.values(), x32.values());
        assert!(parse_matrix_csv::<f64>("1,2\n3\n", 100.0).is_err());
    }
}

//! Fully labelled synthetic speech-like corpus.
//!
//! An utterance is leading silence, then words (runs of contiguous phoneme
//! segments) separated by silence gaps, then trailing silence. Every segment
//! is laid out on the feature frame grid, so the alignment is exact.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng as _;

use super::{AudioError, Waveform};
use crate::alignment::{PhonemeAlignment, PhonemeSpan};
use crate::scalar::Scalar;
use crate::seed::SeedHasher;
use crate::vad::VadLabels;

/// Label written for silence segments.
pub const SILENCE_LABEL: &str = "sil";

const NUM_FORMANTS: usize = 4;
const ENVELOPE_FLOOR: f64 = 0.01;
const SPEECH_RMS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusSpec {
    pub num_utterances: usize,
    pub num_phoneme_classes: usize,
    pub num_speakers: usize,
    /// Phoneme segment length in frames.
    pub phoneme_duration_range: RangeInclusive<usize>,
    /// Silence segment length in frames.
    pub silence_gap_range: RangeInclusive<usize>,
    pub words_per_utterance: RangeInclusive<usize>,
    pub phonemes_per_word: RangeInclusive<usize>,
    /// Words are drawn from a fixed lexicon of this many phoneme strings, so
    /// neighbouring phonemes predict each other. 0 draws every phoneme
    /// independently.
    pub lexicon_size: usize,
    /// Half-width, in frames, of the spectral cross-fade between adjacent
    /// phonemes of a word.
    pub coarticulation_frames: usize,
    /// Peak amplitude of the uniform noise added to words.
    pub noise_level: f64,
    /// Peak amplitude of the uniform noise in silence gaps.
    pub silence_noise_level: f64,
    pub sample_rate: u32,
    pub frame_length: usize,
    pub hop: usize,
    pub seed: u64,
}

impl Default for SynthCorpusSpec {
    fn default() -> Self {
        SynthCorpusSpec {
            num_utterances: 50,
            num_phoneme_classes: 12,
            num_speakers: 8,
            phoneme_duration_range: 8..=25,
            silence_gap_range: 5..=20,
            words_per_utterance: 2..=3,
            phonemes_per_word: 3..=6,
            lexicon_size: 4,
            coarticulation_frames: 4,
            noise_level: 0.01,
            silence_noise_level: 0.001,
            sample_rate: 16000,
            frame_length: 400,
            hop: 160,
            seed: 1,
        }
    }
}

impl SynthCorpusSpec {
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: String| Err(AudioError::InvalidSpec(m));
        for (name, r) in [
            ("phoneme_duration_range", &self.phoneme_duration_range),
            ("silence_gap_range", &self.silence_gap_range),
            ("words_per_utterance", &self.words_per_utterance),
            ("phonemes_per_word", &self.phonemes_per_word),
        ] {
            if r.is_empty() || *r.start() == 0 {
                return bad(format!("{name} must be nonempty with a positive lower bound"));
            }
        }
        if self.num_phoneme_classes < 2 {
            return bad("num_phoneme_classes must be at least 2".into());
        }
        if self.num_speakers < 2 {
            return bad("num_speakers must be at least 2".into());
        }
        for (name, v) in [("noise_level", self.noise_level), ("silence_noise_level", self.silence_noise_level)] {
            if !(v >= 0.0 && v < 0.5) {
                return bad(format!("{name} {v} outside [0, 0.5)"));
            }
        }
        if 2 * self.coarticulation_frames > *self.phoneme_duration_range.start() {
            return bad("coarticulation transitions would overlap inside the shortest phoneme".into());
        }
        if self.sample_rate == 0 || self.hop == 0 || self.hop > self.frame_length {
            return bad("framing requires 0 < hop <= frame_length and a positive sample rate".into());
        }
        Ok(())
    }

    /// Waveform length whose framing yields exactly `frames` frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.frame_length
    }

    /// Phoneme classes of lexicon entry `k`.
    pub fn lexicon_word(&self, k: usize) -> Vec<usize> {
        let mut rng = SeedHasher::new(self.seed).str("lexicon").u64(k as u64).rng();
        let n = rng.gen_range(self.phonemes_per_word.clone());
        (0..n).map(|_| rng.gen_range(0..self.num_phoneme_classes)).collect()
    }

    /// Samples owned by frame `t`: a hop-wide slice centred on its window.
    fn owned_start(&self, t: usize) -> usize {
        t * self.hop + (self.frame_length - self.hop) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance<S> {
    pub waveform: Waveform<S>,
    pub alignment: PhonemeAlignment,
    pub vad_truth: VadLabels,
    pub speaker_id: usize,
    pub utt_id: String,
}

/// Formant centres and bandwidths (Hz) and peak gains of phoneme class `k`.
///
/// Depends only on `k`, so the same class sounds alike in every corpus.
fn class_formants(k: usize) -> [(f64, f64, f64); NUM_FORMANTS] {
    let mut rng = SeedHasher::new(0x70_686f_6e65).u64(k as u64).rng();
    let mut out = [(0.0, 0.0, 0.0); NUM_FORMANTS];
    for (i, p) in out.iter_mut().enumerate() {
        // one formant per log-frequency band keeps them apart
        let lo = (250.0f64).ln() + i as f64 * 0.9;
        let f = (lo + rng.gen::<f64>() * 0.9).exp();
        *p = (f, 0.08 * f + 40.0, 0.4 + 0.6 * rng.gen::<f64>());
    }
    out
}

struct SpeakerVoice {
    pitch_factor: f64,
    tilt: f64,
    f0: f64,
}

fn speaker_voice(s: usize, num_speakers: usize) -> SpeakerVoice {
    let x = s as f64 / (num_speakers - 1) as f64;
    SpeakerVoice {
        pitch_factor: 0.94 + 0.12 * x,
        // amplitude multiplier (f / 1 kHz)^tilt
        tilt: -0.8 + 1.6 * ((s * 5) % num_speakers) as f64 / (num_speakers - 1) as f64,
        f0: 90.0 + 110.0 * x,
    }
}

/// Harmonic amplitudes of class `k` for `voice`, scaled to the speech RMS.
fn harmonic_amplitudes(k: usize, voice: &SpeakerVoice, freqs: &[f64], gain: f64) -> Vec<f64> {
    let formants = class_formants(k);
    let amps: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let env: f64 = formants
                .iter()
                .map(|&(fc, bw, a)| {
                    let x = (f - fc * voice.pitch_factor) / bw;
                    a / (1.0 + x * x)
                })
                .sum::<f64>()
                + ENVELOPE_FLOOR;
            env * (f / 1000.0).powf(voice.tilt)
        })
        .collect();
    let rms = (amps.iter().map(|a| a * a).sum::<f64>() / 2.0).sqrt().max(1e-9);
    amps.into_iter().map(|a| a * SPEECH_RMS * gain / rms).collect()
}

/// Renders one word: a harmonic source with continuous phase whose spectral
/// envelope follows the phoneme classes, cross-fading over `transition`
/// samples on each side of every internal boundary.
fn render_word(
    out: &mut [f64],
    phonemes: &[(usize, std::ops::Range<usize>)],
    voice: &SpeakerVoice,
    nyquist: f64,
    sample_rate: f64,
    transition: usize,
    rng: &mut crate::seed::Rng,
) {
    let freqs: Vec<f64> = (1..).map(|h| voice.f0 * h as f64).take_while(|&f| f < nyquist * 0.9).collect();
    // per-harmonic phasors advanced by rotation, one random start phase each
    let mut phasors: Vec<(f64, f64)> = freqs
        .iter()
        .map(|_| {
            let ph = rng.gen::<f64>() * 2.0 * PI;
            (ph.cos(), ph.sin())
        })
        .collect();
    let rotations: Vec<(f64, f64)> = freqs
        .iter()
        .map(|f| {
            let w = 2.0 * PI * f / sample_rate;
            (w.cos(), w.sin())
        })
        .collect();
    let amps: Vec<Vec<f64>> = phonemes
        .iter()
        .map(|(k, _)| harmonic_amplitudes(*k, voice, &freqs, 0.8 + 0.4 * rng.gen::<f64>()))
        .collect();
    for (i, (_, range)) in phonemes.iter().enumerate() {
        for n in range.clone() {
            let (d0, d1) = (n - range.start, range.end - n);
            let (other, w) = if i > 0 && d0 < transition {
                (i - 1, 0.5 * (1.0 - d0 as f64 / transition as f64))
            } else if i + 1 < phonemes.len() && d1 <= transition {
                (i + 1, 0.5 * (1.0 - d1 as f64 / transition as f64))
            } else {
                (i, 0.0)
            };
            let mut v = 0.0;
            for ((p, &(c, s)), (a, b)) in phasors.iter_mut().zip(&rotations).zip(amps[i].iter().zip(&amps[other])) {
                v += ((1.0 - w) * a + w * b) * p.1;
                *p = (p.0 * c - p.1 * s, p.0 * s + p.1 * c);
            }
            out[n] = v;
        }
    }
}

enum Segment {
    Silence(usize),
    Word(Vec<(usize, usize)>),
}

fn synth_one<S: Scalar>(spec: &SynthCorpusSpec, index: usize) -> Result<SynthUtterance<S>, AudioError> {
    let mut rng = SeedHasher::new(spec.seed).str("utterance").u64(index as u64).rng();
    let speaker_id = index % spec.num_speakers;
    let utt_id = format!("s{speaker_id:02}_u{index:04}");

    let draw = |r: &RangeInclusive<usize>, rng: &mut crate::seed::Rng| rng.gen_range(r.clone());
    let mut segments = vec![Segment::Silence(draw(&spec.silence_gap_range, &mut rng))];
    let words = draw(&spec.words_per_utterance, &mut rng);
    for w in 0..words {
        if w > 0 {
            segments.push(Segment::Silence(draw(&spec.silence_gap_range, &mut rng)));
        }
        let classes = if spec.lexicon_size == 0 {
            let n = draw(&spec.phonemes_per_word, &mut rng);
            (0..n).map(|_| rng.gen_range(0..spec.num_phoneme_classes)).collect()
        } else {
            spec.lexicon_word(rng.gen_range(0..spec.lexicon_size))
        };
        let word = classes.into_iter().map(|class| (class, draw(&spec.phoneme_duration_range, &mut rng))).collect();
        segments.push(Segment::Word(word));
    }
    segments.push(Segment::Silence(draw(&spec.silence_gap_range, &mut rng)));

    let total_frames: usize = segments
        .iter()
        .map(|s| match s {
            Segment::Silence(n) => *n,
            Segment::Word(w) => w.iter().map(|p| p.1).sum(),
        })
        .sum();
    let num_samples = spec.samples_for_frames(total_frames);
    let mut signal = vec![0.0f64; num_samples];
    let mut spans = Vec::with_capacity(segments.len());
    let voice = speaker_voice(speaker_id, spec.num_speakers);
    let nyquist = spec.sample_rate as f64 / 2.0;
    let mut speech_ranges = Vec::new();

    let transition = spec.coarticulation_frames * spec.hop;
    let sample_range = |b: usize, e: usize| {
        let s0 = if b == 0 { 0 } else { spec.owned_start(b) };
        let s1 = if e + 1 == total_frames { num_samples } else { spec.owned_start(e + 1) };
        s0..s1
    };
    let mut frame = 0;
    for seg in &segments {
        match seg {
            Segment::Silence(n) => {
                let r = sample_range(frame, frame + n - 1);
                spans.push(PhonemeSpan::new(SILENCE_LABEL, frame, frame + n - 1, true));
                for v in &mut signal[r] {
                    *v += spec.silence_noise_level * (2.0 * rng.gen::<f64>() - 1.0);
                }
                frame += n;
            }
            Segment::Word(word) => {
                let mut phonemes = Vec::with_capacity(word.len());
                for &(k, n) in word {
                    spans.push(PhonemeSpan::new(format!("p{k:02}"), frame, frame + n - 1, false));
                    phonemes.push((k, sample_range(frame, frame + n - 1)));
                    frame += n;
                }
                let r = phonemes[0].1.start..phonemes[phonemes.len() - 1].1.end;
                render_word(&mut signal, &phonemes, &voice, nyquist, spec.sample_rate as f64, transition, &mut rng);
                for v in &mut signal[r.clone()] {
                    *v += spec.noise_level * (2.0 * rng.gen::<f64>() - 1.0);
                }
                speech_ranges.push((r.start, r.end));
            }
        }
    }

    // a frame is speech when its analysis window overlaps speech samples
    let labels = (0..total_frames)
        .map(|t| {
            let (w0, w1) = (t * spec.hop, t * spec.hop + spec.frame_length);
            speech_ranges.iter().any(|&(a, b)| w0 < b && a < w1)
        })
        .collect();

    let samples = signal.into_iter().map(|v| S::lit(v.clamp(-1.0, 1.0))).collect();
    Ok(SynthUtterance {
        waveform: Waveform::new(samples, spec.sample_rate)?,
        alignment: PhonemeAlignment::new(utt_id.clone(), spans, total_frames)
            .expect("synthetic spans are contiguous by construction"),
        vad_truth: VadLabels::new(labels),
        speaker_id,
        utt_id,
    })
}

/// Generates `spec.num_utterances` utterances; output depends only on `spec`.
pub fn synth_corpus<S: Scalar>(spec: &SynthCorpusSpec) -> Result<Vec<SynthUtterance<S>>, AudioError> {
    spec.validate()?;
    (0..spec.num_utterances).map(|i| synth_one(spec, i)).collect()
}

use std::f64::consts::PI;

use masklab_core::audio::{decode_wav, encode_wav, read_wav, synth_corpus, write_wav};
use masklab_core::features::{fbank, hz_to_mel, mel_centers};
use masklab_core::vad::{frame_levels_db, raw_decisions, smooth_decisions, vad_labels};
use masklab_core::{FeatureConfig, FeatureMatrix, SynthCorpusSpec, VadConfig, Waveform};
use proptest::prelude::*;

fn sine(len: usize, hz: f64, amp: f64) -> Waveform<f64> {
    Waveform::new((0..len).map(|i| amp * (2.0 * PI * hz * i as f64 / 16000.0).sin()).collect(), 16000).unwrap()
}

#[test]
fn wav_round_trip_of_a_full_scale_tone() {
    let w = sine(16000, 440.0, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    write_wav(&w, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 44 + 32000);
    let back: Waveform<f64> = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate(), 16000);
    let worst = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wav_round_trip_within_one_step(samples in prop::collection::vec(-1.0f64..=1.0, 0..2000), rate in 8000u32..48000) {
        let w = Waveform::new(samples, rate).unwrap();
        let back: Waveform<f64> = decode_wav(&encode_wav(&w)).unwrap();
        prop_assert_eq!(back.len(), w.len());
        prop_assert_eq!(back.sample_rate(), rate);
        for (a, b) in w.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn frame_count_law(len in 400usize..6000) {
        let w = Waveform::<f32>::zeros(len, 16000).unwrap();
        let x = fbank(&w, &FeatureConfig::default()).unwrap();
        prop_assert_eq!(x.num_frames(), 1 + (len - 400) / 160);
        prop_assert_eq!(x.dim(), 80);
    }

    #[test]
    fn louder_input_never_lowers_a_log_mel_value(seed in any::<u64>(), gain in 1.01f64..20.0) {
        let mut rng = masklab_core::seed::rng_from_seed(seed);
        use rand::Rng as _;
        let s: Vec<f64> = (0..2400).map(|_| rng.gen_range(-0.04..0.04)).collect();
        let w = Waveform::new(s, 16000).unwrap();
        let cfg = FeatureConfig::default();
        let a = fbank(&w, &cfg).unwrap();
        let b = fbank(&w.scaled(gain), &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!(y > x || (*y == floor && *x == floor), "{x} -> {y}");
        }
    }

    #[test]
    fn smoothing_identity_and_hangover(raw in prop::collection::vec(any::<bool>(), 1..200), h in 0usize..6) {
        prop_assert_eq!(smooth_decisions(&raw, 0, 1), raw.clone());
        // widening only adds speech frames when nothing is removed
        let wide = smooth_decisions(&raw, h, 1);
        for (t, &r) in raw.iter().enumerate() {
            if r {
                prop_assert!(wide[t]);
            }
            let near = (t.saturating_sub(h)..=(t + h).min(raw.len() - 1)).any(|k| raw[k]);
            prop_assert_eq!(wide[t], near);
        }
    }
}

#[test]
fn tone_energy_lands_in_the_nearest_mel_bin() {
    let cfg = FeatureConfig::default();
    let x = fbank(&sine(8000, 1000.0, 1.0), &cfg).unwrap();
    let centers = mel_centers(&cfg, 16000);
    let target = hz_to_mel(1000.0);
    let nearest = (0..centers.len())
        .min_by(|&a, &b| (hz_to_mel(centers[a]) - target).abs().total_cmp(&(hz_to_mel(centers[b]) - target).abs()))
        .unwrap();
    for row in x.values().rows() {
        let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, nearest);
    }
}

#[test]
fn feature_dump_round_trip() {
    let spec = SynthCorpusSpec { num_utterances: 2, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    for u in synth_corpus::<f32>(&spec).unwrap() {
        let x = fbank(&u.waveform, &FeatureConfig::default()).unwrap();
        let path = dir.path().join(format!("{}.feat", u.utt_id));
        x.write(&path).unwrap();
        assert_eq!(FeatureMatrix::<f32>::read(&path).unwrap(), x);
    }
}

/// RMS level recomputed directly from the samples.
fn levels(w: &Waveform<f32>) -> Vec<f64> {
    let s = w.samples();
    (0..=(s.len() - 400) / 160)
        .map(|t| {
            let e: f64 = s[t * 160..t * 160 + 400].iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / 400.0;
            10.0 * e.log10()
        })
        .collect()
}

#[test]
fn vad_against_ground_truth_and_threshold_grid() {
    let spec = SynthCorpusSpec::default();
    let utts = synth_corpus::<f32>(&spec).unwrap();
    assert_eq!(utts.len(), 50);
    let fc = FeatureConfig::default();
    let vc = VadConfig::default();
    assert_eq!(vc.theta, -45.0);
    let mut acc = 0.0;
    for u in &utts {
        let v = vad_labels(&u.waveform, &fc, &vc).unwrap();
        let truth = u.vad_truth.labels();
        assert_eq!(v.len(), truth.len());
        acc += v.labels().iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;

        let lv = frame_levels_db(&u.waveform, &fc).unwrap();
        let oracle = levels(&u.waveform);
        assert_eq!(lv.len(), oracle.len());
        for (a, b) in lv.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 || (a.is_infinite() && b.is_infinite()));
        }
        let mut prev: Option<Vec<bool>> = None;
        for k in 0..10 {
            let theta = -70.0 + 5.0 * k as f64;
            let raw = raw_decisions(&lv, theta);
            if let Some(p) = &prev {
                assert!(raw.iter().zip(p).all(|(&now, &before)| !now || before), "{} at {theta}", u.utt_id);
            }
            prev = Some(raw);
        }
    }
    let mean = acc / utts.len() as f64;
    assert!(mean >= 0.95, "mean frame accuracy {mean}");
}

#[test]
fn digital_silence_and_full_scale_tone() {
    let fc = FeatureConfig::default();
    let vc = VadConfig::default();
    let zero = Waveform::<f32>::zeros(4000, 16000).unwrap();
    assert_eq!(vad_labels(&zero, &fc, &vc).unwrap().speech_count(), 0);
    let tone = sine(4000, 300.0, 1.0);
    let v = vad_labels(&tone, &fc, &vc).unwrap();
    assert_eq!(v.speech_count(), v.len());
}

#[test]
fn synthetic_alignments_and_truth_agree() {
    let spec = SynthCorpusSpec { num_utterances: 100, seed: 1, ..Default::default() };
    let fc = FeatureConfig::default();
    for u in synth_corpus::<f32>(&spec).unwrap() {
        let a = &u.alignment;
        let t = fbank(&u.waveform, &fc).unwrap().num_frames();
        assert_eq!(a.num_frames(), t);
        assert_eq!(u.vad_truth.len(), t);
        for f in 0..t {
            let s = a.phoneme_at(f).unwrap();
            assert!(s.begin <= f && f <= s.end);
            if !s.is_silence {
                assert!(u.vad_truth.labels()[f], "{} frame {f}", u.utt_id);
            }
        }
        assert!(a.phoneme_at(t).is_err());
        let labels = u.vad_truth.labels();
        let regions = |want: bool| (0..t).filter(|&f| labels[f] == want && (f == 0 || labels[f - 1] != want)).count();
        assert!(regions(true) >= 1 && regions(false) >= 2, "{}", u.utt_id);
    }
}

#[test]
fn corpus_is_reproducible_bit_for_bit() {
    let spec = SynthCorpusSpec { num_utterances: 4, seed: 12, ..Default::default() };
    let a = synth_corpus::<f32>(&spec).unwrap();
    let b = synth_corpus::<f32>(&spec).unwrap();
    assert_eq!(a, b);
    let bytes = |u: &masklab_core::SynthUtterance<f32>| encode_wav(&u.waveform);
    assert_eq!(a.iter().map(bytes).collect::<Vec<_>>(), b.iter().map(bytes).collect::<Vec<_>>());
    let c = synth_corpus::<f32>(&SynthCorpusSpec { seed: 13, ..spec }).unwrap();
    assert_ne!(a, c);
}

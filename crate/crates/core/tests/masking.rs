use masklab_core::analysis::mask_stats;
use masklab_core::features::fbank;
use masklab_core::masking::{apply_mask, generate_mask, MaskInputs};
use masklab_core::vad::{speech_lists, vad_labels};
use masklab_core::{
    FeatureConfig, FeatureMatrix, FrameState, MaskMode, MaskPolicy, MaskPolicyConfig, MaskSequence, PhonemeAlignment,
    PhonemeSpan, RunOrigin, SilenceSet, SpeechLists, SynthCorpusSpec, VadConfig, VadLabels,
};
use ndarray::Array2;
use proptest::prelude::*;

const POLICIES: [MaskPolicy; 4] =
    [MaskPolicy::Random, MaskPolicy::SpeechLevel, MaskPolicy::PhonemeLevel, MaskPolicy::Combined];

#[derive(Debug, Clone)]
struct Case {
    durations: Vec<usize>,
    silent: Vec<bool>,
    vad: Vec<bool>,
    span: usize,
    budget: f64,
    rho: f64,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (prop::collection::vec((1usize..30, any::<bool>()), 1..25), 1usize..16, 0.01f64..=1.0, 0.0f64..=1.0, any::<u64>())
        .prop_flat_map(|(segs, span, budget, rho, seed)| {
            let t: usize = segs.iter().map(|s| s.0).sum();
            (Just(segs), prop::collection::vec(any::<bool>(), t), Just(span), Just(budget), Just(rho), Just(seed))
        })
        .prop_map(|(segs, vad, span, budget, rho, seed)| Case {
            durations: segs.iter().map(|s| s.0).collect(),
            silent: segs.iter().map(|s| s.1).collect(),
            vad,
            span,
            budget,
            rho,
            seed,
        })
}

fn alignment(c: &Case) -> PhonemeAlignment {
    let mut text = String::new();
    let mut b = 0;
    for (i, (&d, &sil)) in c.durations.iter().zip(&c.silent).enumerate() {
        let label = if sil { "sil".to_string() } else { format!("p{}", i % 5) };
        text.push_str(&format!("{label}\t{b}\t{}\n", b + d - 1));
        b += d;
    }
    PhonemeAlignment::parse("u", &text, b, &SilenceSet::default()).unwrap()
}

fn eligible(a: &PhonemeAlignment) -> Vec<&PhonemeSpan> {
    a.spans().iter().filter(|s| !s.is_silence).collect()
}

/// Frames covered by the runs, recomputed from scratch.
fn union(m: &MaskSequence) -> Vec<bool> {
    let mut v = vec![false; m.num_frames()];
    for r in m.runs() {
        v[r.start..=r.end].iter_mut().for_each(|x| *x = true);
    }
    v
}

fn round(x: f64) -> usize {
    x.round() as usize
}

fn check(c: &Case, policy: MaskPolicy) -> Result<(), TestCaseError> {
    let a = alignment(c);
    let t = a.num_frames();
    let lists = speech_lists(&VadLabels::new(c.vad.clone()));
    let cfg = MaskPolicyConfig { policy, span: c.span, budget: c.budget, rho: c.rho, seed: c.seed, ..Default::default() };
    let inputs = MaskInputs { lists: Some(&lists), alignment: Some(&a) };
    let eligible = eligible(&a);
    let m = match generate_mask(t, inputs, &cfg) {
        Ok(m) => m,
        Err(e) => {
            prop_assert!(policy == MaskPolicy::PhonemeLevel && eligible.is_empty(), "{policy:?}: {e}");
            return Ok(());
        }
    };

    // runs sorted, disjoint, union equals the masked frames
    for w in m.runs().windows(2) {
        prop_assert!(w[0].end < w[1].start);
    }
    let cover = union(&m);
    for f in 0..t {
        prop_assert_eq!(cover[f], m.states()[f].is_masked());
    }

    // budget
    let target = round(c.budget * t as f64);
    let longest = eligible.iter().map(|s| s.len()).max().unwrap_or(0);
    let max_span = match policy {
        MaskPolicy::Random | MaskPolicy::SpeechLevel => c.span,
        MaskPolicy::PhonemeLevel => longest,
        MaskPolicy::Combined => longest.max(c.span),
    };
    let count = m.masked_count();
    prop_assert!(count <= target + max_span.saturating_sub(1), "{policy:?} count {count} target {target}");
    if count < target {
        prop_assert!(m.meta.exhausted, "{policy:?} stopped short without exhausting candidates");
        match policy {
            MaskPolicy::Random => prop_assert!(false, "random masks every frame before exhausting"),
            MaskPolicy::PhonemeLevel => {
                for s in &eligible {
                    prop_assert!(cover[s.begin..=s.end].iter().all(|&x| x));
                }
            }
            _ => prop_assert_eq!(m.meta.total_starts(), t),
        }
    }

    // ρ quota
    if matches!(policy, MaskPolicy::SpeechLevel | MaskPolicy::Combined) && !m.meta.fell_back {
        let k = m.meta.total_starts();
        prop_assert_eq!(m.meta.starts_from_speech, round(c.rho * k as f64));
    }

    // run tags
    let in_a = lists.speech_mask();
    for r in m.runs() {
        match (&r.origin, policy) {
            (RunOrigin::RandomSpan, MaskPolicy::Random) => prop_assert!(r.len() >= 1),
            (RunOrigin::SpeechSpan, MaskPolicy::SpeechLevel) => prop_assert!(in_a[r.start]),
            (RunOrigin::SilenceSpan, MaskPolicy::SpeechLevel) => prop_assert!(!in_a[r.start]),
            (RunOrigin::SilenceSpan, MaskPolicy::Combined) => {
                prop_assert!(!in_a[r.start]);
                prop_assert!(r.len() <= c.span);
            }
            (RunOrigin::PhonemeSpan(l), MaskPolicy::PhonemeLevel | MaskPolicy::Combined) => {
                prop_assert!(eligible.iter().any(|s| &s.label == l && s.begin == r.start && s.end == r.end));
            }
            (o, p) => prop_assert!(false, "{p:?} produced a {o} run"),
        }
    }

    // no alignment span is partially masked by phoneme runs
    if policy == MaskPolicy::PhonemeLevel {
        for s in a.spans() {
            let n = cover[s.begin..=s.end].iter().filter(|&&x| x).count();
            prop_assert!(n == 0 || n == s.len());
        }
        let stats = mask_stats(&m, &lists, Some(&a)).unwrap();
        prop_assert!(stats.whole_phoneme_rate.map_or(true, |r| r == 1.0));
    }

    // determinism
    prop_assert_eq!(&generate_mask(t, inputs, &cfg).unwrap(), &m);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn every_policy_keeps_its_invariants(c in case()) {
        for p in POLICIES {
            check(&c, p)?;
        }
    }

    #[test]
    fn applying_a_mask_leaves_unmasked_frames_bit_identical(c in case(), stochastic in any::<bool>()) {
        let a = alignment(&c);
        let t = a.num_frames();
        let lists = speech_lists(&VadLabels::new(c.vad.clone()));
        let mode = if stochastic { MaskMode::Stochastic801010 } else { MaskMode::ZeroAll };
        let cfg = MaskPolicyConfig {
            policy: MaskPolicy::SpeechLevel, span: c.span, budget: c.budget, rho: c.rho, seed: c.seed, mode,
            ..Default::default()
        };
        let m = generate_mask(t, MaskInputs { lists: Some(&lists), alignment: None }, &cfg).unwrap();
        let x = FeatureMatrix::new(Array2::from_shape_fn((t, 3), |(i, j)| (i * 3 + j) as f32 + 0.5), 100.0).unwrap();
        let (y, applied) = apply_mask(&x, &m, &cfg).unwrap();
        prop_assert_eq!(union(&applied), union(&m));
        for f in 0..t {
            let (row_x, row_y) = (x.values().row(f), y.values().row(f));
            match applied.states()[f] {
                FrameState::Unmasked | FrameState::MaskedKeep => prop_assert_eq!(row_x, row_y),
                FrameState::MaskedZero => prop_assert!(row_y.iter().all(|&v| v == 0.0)),
                FrameState::MaskedReplace(src) => {
                    prop_assert!(!m.is_masked(src));
                    prop_assert_eq!(x.values().row(src), row_y);
                }
            }
        }
        // one fate per run
        for r in applied.runs() {
            let kind = |s: FrameState| std::mem::discriminant(&s);
            prop_assert!(applied.states()[r.start..=r.end].iter().all(|&s| kind(s) == kind(applied.states()[r.start])));
        }
    }

    #[test]
    fn partition_of_random_labels(labels in prop::collection::vec(any::<bool>(), 0..300)) {
        let l = speech_lists(&VadLabels::new(labels.clone()));
        prop_assert_eq!(l.speech.len() + l.nonspeech.len(), labels.len());
        prop_assert!(l.speech.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(l.nonspeech.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(l.speech.iter().all(|&t| labels[t]));
        prop_assert!(l.nonspeech.iter().all(|&t| !labels[t]));
    }
}

/// Estimated VAD lists, alignment and frame count for every synthetic utterance.
fn synthetic(n: usize) -> Vec<(PhonemeAlignment, SpeechLists, usize, String)> {
    let spec = SynthCorpusSpec { num_utterances: n, seed: 7, ..Default::default() };
    let fc = FeatureConfig::default();
    masklab_core::audio::synth_corpus::<f32>(&spec)
        .unwrap()
        .into_iter()
        .map(|u| {
            let t = fbank(&u.waveform, &fc).unwrap().num_frames();
            assert_eq!(t, u.alignment.num_frames());
            let v = vad_labels(&u.waveform, &fc, &VadConfig::default()).unwrap();
            (u.alignment, speech_lists(&v), t, u.utt_id)
        })
        .collect()
}

#[test]
fn synthetic_corpus_audits() {
    let base = MaskPolicyConfig { seed: 3, ..Default::default() };
    for (a, lists, t, id) in synthetic(200) {
        let inputs = MaskInputs { lists: Some(&lists), alignment: Some(&a) };
        let in_a = lists.speech_mask();

        let cfg = MaskPolicyConfig { policy: MaskPolicy::PhonemeLevel, ..base.clone() }.for_utterance(&id);
        let m = generate_mask(t, inputs, &cfg).unwrap();
        assert_eq!(mask_stats(&m, &lists, Some(&a)).unwrap().whole_phoneme_rate, Some(1.0), "{id}");

        let cfg = MaskPolicyConfig { policy: MaskPolicy::Combined, ..base.clone() }.for_utterance(&id);
        for r in generate_mask(t, inputs, &cfg).unwrap().runs() {
            let exact = a.spans().iter().any(|s| !s.is_silence && s.begin == r.start && s.end == r.end);
            let short_from_b = r.len() <= cfg.span && !in_a[r.start];
            assert!(exact || short_from_b, "{id}: run {}..={} {}", r.start, r.end, r.origin);
        }

        let cfg = MaskPolicyConfig { policy: MaskPolicy::SpeechLevel, rho: 1.0, ..base.clone() }.for_utterance(&id);
        let m = generate_mask(t, inputs, &cfg).unwrap();
        assert!(m.runs().iter().all(|r| r.origin == RunOrigin::SpeechSpan && in_a[r.start]), "{id}");
        let stats = mask_stats(&m, &lists, None).unwrap();
        assert!(stats.speech_masked_fraction > 0.0);
    }
}

#[test]
fn per_utterance_seeds_do_not_depend_on_order() {
    let utts = synthetic(6);
    let cfg = MaskPolicyConfig { policy: MaskPolicy::Combined, seed: 11, ..Default::default() };
    let masks = |order: Vec<usize>| -> Vec<(String, MaskSequence)> {
        let mut out: Vec<_> = order
            .into_iter()
            .map(|i| {
                let (a, l, t, id) = &utts[i];
                let inputs = MaskInputs { lists: Some(l), alignment: Some(a) };
                (id.clone(), generate_mask(*t, inputs, &cfg.for_utterance(id)).unwrap())
            })
            .collect();
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out
    };
    assert_eq!(masks((0..6).collect()), masks((0..6).rev().collect()));
}

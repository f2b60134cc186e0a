use log::warn;
use rand::Rng as _;

use super::{FrameState, MaskError, MaskMeta, MaskPolicyConfig, MaskRun, MaskSequence, RunOrigin};
use crate::alignment::PhonemeAlignment;
use crate::seed::{rng_from_seed, Rng};
use crate::vad::SpeechLists;

/// Uniform sampling without replacement, drawn lazily.
struct Draw {
    pool: Vec<usize>,
}

impl Draw {
    fn new(pool: Vec<usize>) -> Self {
        Draw { pool }
    }

    fn next(&mut self, rng: &mut Rng) -> Option<usize> {
        if self.pool.is_empty() {
            return None;
        }
        let i = rng.gen_range(0..self.pool.len());
        Some(self.pool.swap_remove(i))
    }

}

/// Running speech/non-speech quota: after `k` starts, `round(ρ·k)` are speech.
struct Quota {
    rho: f64,
    starts: usize,
    speech: usize,
}

impl Quota {
    fn new(rho: f64) -> Self {
        Quota { rho, starts: 0, speech: 0 }
    }

    fn wants_speech(&self) -> bool {
        (self.rho * (self.starts + 1) as f64).round() as usize > self.speech
    }

    fn record(&mut self, speech: bool) {
        self.starts += 1;
        self.speech += speech as usize;
    }
}

/// Picks the next start from A or B according to the quota, falling back
/// to the other list when the preferred one is empty.
fn draw_start(
    quota: &mut Quota,
    speech: &mut Draw,
    nonspeech: &mut Draw,
    meta: &mut MaskMeta,
    rng: &mut Rng,
) -> Option<(usize, bool)> {
    let want = quota.wants_speech();
    let (first, second) = if want { (&mut *speech, &mut *nonspeech) } else { (&mut *nonspeech, &mut *speech) };
    let (frame, from_speech) = match first.next(rng) {
        Some(f) => (f, want),
        None => {
            let f = second.next(rng)?;
            if !meta.fell_back {
                warn!(
                    "{} list exhausted; drawing remaining starts from the other list",
                    if want { "speech" } else { "non-speech" }
                );
            }
            meta.fell_back = true;
            (f, !want)
        }
    };
    quota.record(from_speech);
    if from_speech {
        meta.starts_from_speech += 1;
    } else {
        meta.starts_from_nonspeech += 1;
    }
    Some((frame, from_speech))
}

struct Proposed {
    start: usize,
    end: usize,
    origin: RunOrigin,
}

/// Accumulates masked frames and the spans that produced them.
struct Builder {
    covered: Vec<bool>,
    count: usize,
    spans: Vec<Proposed>,
}

impl Builder {
    fn new(num_frames: usize) -> Self {
        Builder { covered: vec![false; num_frames], count: 0, spans: Vec::new() }
    }

    fn mark(&mut self, start: usize, end: usize) {
        for c in &mut self.covered[start..=end] {
            if !*c {
                *c = true;
                self.count += 1;
            }
        }
    }

    /// Masks `start..=end` even where already masked.
    fn add_span(&mut self, start: usize, end: usize, origin: RunOrigin) {
        self.mark(start, end);
        self.spans.push(Proposed { start, end, origin });
    }

    /// Masks the longest prefix of `start..=max_end` made of frames that are
    /// neither masked nor blocked.
    fn add_prefix(&mut self, start: usize, max_end: usize, origin: RunOrigin, blocked: &[bool]) {
        let free = |t: usize| !self.covered[t] && !blocked[t];
        if !free(start) {
            return;
        }
        let mut end = start;
        while end < max_end && free(end + 1) {
            end += 1;
        }
        self.add_span(start, end, origin);
    }

    /// Merges overlapping spans. A merged run takes the origin of its leftmost
    /// span (earliest drawn on ties), so every run's first frame is the start
    /// its origin was drawn from.
    fn finish(mut self, meta: MaskMeta) -> MaskSequence {
        // stable sort keeps draw order among equal starts
        self.spans.sort_by_key(|s| s.start);
        let mut runs: Vec<MaskRun> = Vec::new();
        for s in self.spans {
            match runs.last_mut() {
                Some(r) if s.start <= r.end => r.end = r.end.max(s.end),
                _ => runs.push(MaskRun { start: s.start, end: s.end, origin: s.origin }),
            }
        }
        let states = self
            .covered
            .iter()
            .map(|&c| if c { FrameState::MaskedZero } else { FrameState::Unmasked })
            .collect();
        MaskSequence::from_parts(states, runs, meta)
    }
}

fn check_lists(num_frames: usize, lists: &SpeechLists) -> Result<(), MaskError> {
    let mut seen = vec![false; num_frames];
    for &t in lists.speech.iter().chain(&lists.nonspeech) {
        if t >= num_frames || seen[t] {
            return Err(MaskError::InconsistentInputs(format!(
                "speech lists do not partition 0..{num_frames} (frame {t})"
            )));
        }
        seen[t] = true;
    }
    if lists.num_frames() != num_frames {
        return Err(MaskError::InconsistentInputs(format!(
            "speech lists cover {} frames, expected {num_frames}",
            lists.num_frames()
        )));
    }
    Ok(())
}

/// Random starts, `C` frames from each.
pub fn gen_random_mask(num_frames: usize, cfg: &MaskPolicyConfig) -> Result<MaskSequence, MaskError> {
    cfg.validate()?;
    if num_frames == 0 {
        return Err(MaskError::NoFrames);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let target = cfg.target(num_frames);
    let mut meta = MaskMeta { target, max_span: cfg.span, ..Default::default() };
    let mut builder = Builder::new(num_frames);
    let mut starts = Draw::new((0..num_frames).collect());
    while builder.count < target {
        let Some(s) = starts.next(&mut rng) else {
            meta.exhausted = true;
            break;
        };
        builder.add_span(s, (s + cfg.span - 1).min(num_frames - 1), RunOrigin::RandomSpan);
    }
    Ok(builder.finish(meta))
}

/// Starts split between speech list A and non-speech list B by the `ρ`
/// quota, `C` frames from each.
pub fn gen_speech_level_mask(
    num_frames: usize,
    lists: &SpeechLists,
    cfg: &MaskPolicyConfig,
) -> Result<MaskSequence, MaskError> {
    cfg.validate()?;
    if num_frames == 0 {
        return Err(MaskError::NoFrames);
    }
    check_lists(num_frames, lists)?;
    let mut rng = rng_from_seed(cfg.seed);
    let target = cfg.target(num_frames);
    let mut meta = MaskMeta { target, max_span: cfg.span, ..Default::default() };
    let mut builder = Builder::new(num_frames);
    let mut speech = Draw::new(lists.speech.clone());
    let mut nonspeech = Draw::new(lists.nonspeech.clone());
    let mut quota = Quota::new(cfg.rho);
    while builder.count < target {
        let Some((s, from_speech)) = draw_start(&mut quota, &mut speech, &mut nonspeech, &mut meta, &mut rng)
        else {
            meta.exhausted = true;
            break;
        };
        let origin = if from_speech { RunOrigin::SpeechSpan } else { RunOrigin::SilenceSpan };
        builder.add_span(s, (s + cfg.span - 1).min(num_frames - 1), origin);
    }
    Ok(builder.finish(meta))
}

fn eligible(a: &PhonemeAlignment, cfg: &MaskPolicyConfig) -> Vec<usize> {
    (0..a.spans().len())
        .filter(|&i| cfg.include_silence_phones || !a.spans()[i].is_silence)
        .collect()
}

/// Whole phonemes, chosen uniformly without replacement.
pub fn gen_phoneme_level_mask(a: &PhonemeAlignment, cfg: &MaskPolicyConfig) -> Result<MaskSequence, MaskError> {
    cfg.validate()?;
    let num_frames = a.num_frames();
    if num_frames == 0 {
        return Err(MaskError::NoFrames);
    }
    let candidates = eligible(a, cfg);
    if candidates.is_empty() {
        return Err(MaskError::NoEligiblePhonemes);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let target = cfg.target(num_frames);
    let max_span = candidates.iter().map(|&i| a.spans()[i].len()).max().unwrap_or(0);
    let mut meta = MaskMeta { target, max_span, ..Default::default() };
    let mut builder = Builder::new(num_frames);
    let mut draw = Draw::new(candidates);
    while builder.count < target {
        let Some(i) = draw.next(&mut rng) else {
            meta.exhausted = true;
            break;
        };
        let span = &a.spans()[i];
        meta.starts_from_speech += 1;
        builder.add_span(span.begin, span.end, RunOrigin::PhonemeSpan(span.label.clone()));
    }
    Ok(builder.finish(meta))
}

/// Speech starts mask the whole phoneme containing them; non-speech starts
/// mask up to `C` frames, stopping before any masked frame or eligible
/// phoneme so that phoneme runs stay exact.
///
/// A speech start inside an ineligible (silence) phoneme, or inside a phoneme
/// that is already masked, counts as a start but masks nothing.
pub fn gen_combined_mask(
    a: &PhonemeAlignment,
    lists: &SpeechLists,
    cfg: &MaskPolicyConfig,
) -> Result<MaskSequence, MaskError> {
    cfg.validate()?;
    let num_frames = a.num_frames();
    if lists.num_frames() != num_frames {
        return Err(MaskError::InconsistentInputs(format!(
            "alignment has {num_frames} frames, speech lists {}",
            lists.num_frames()
        )));
    }
    if num_frames == 0 {
        return Err(MaskError::NoFrames);
    }
    check_lists(num_frames, lists)?;

    let candidates = eligible(a, cfg);
    let mut is_eligible = vec![false; a.spans().len()];
    candidates.iter().for_each(|&i| is_eligible[i] = true);
    let frame_span = a.frame_to_span();
    let blocked: Vec<bool> = frame_span.iter().map(|&i| is_eligible[i]).collect();

    let mut rng = rng_from_seed(cfg.seed);
    let target = cfg.target(num_frames);
    let longest = candidates.iter().map(|&i| a.spans()[i].len()).max().unwrap_or(0);
    let mut meta = MaskMeta { target, max_span: longest.max(cfg.span), ..Default::default() };
    let mut builder = Builder::new(num_frames);
    let mut speech = Draw::new(lists.speech.clone());
    let mut nonspeech = Draw::new(lists.nonspeech.clone());
    let mut quota = Quota::new(cfg.rho);
    while builder.count < target {
        let Some((s, from_speech)) = draw_start(&mut quota, &mut speech, &mut nonspeech, &mut meta, &mut rng)
        else {
            meta.exhausted = true;
            break;
        };
        if from_speech {
            let i = frame_span[s];
            let span = &a.spans()[i];
            if is_eligible[i] && !builder.covered[span.begin] {
                builder.add_span(span.begin, span.end, RunOrigin::PhonemeSpan(span.label.clone()));
            }
        } else {
            let max_end = (s + cfg.span - 1).min(num_frames - 1);
            builder.add_prefix(s, max_end, RunOrigin::SilenceSpan, &blocked);
        }
    }
    Ok(builder.finish(meta))
}

//! Classifiers trained on frozen encoder representations.
//!
//! Four tasks: frame-wise phoneme classification with a linear layer or one
//! hidden layer, and speaker classification frame-wise or per utterance
//! (mean-pooled). Features are standardised with training-set statistics,
//! then softmax cross-entropy is minimised with Adam on random minibatches.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::alignment::PhonemeAlignment;
use crate::features::FeatureMatrix;
use crate::model::{extract_representations, Adam, EncoderModel, ModelError, ParamTensors};
use crate::scalar::Scalar;
use crate::seed::{utterance_seed, SeedHasher};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("utterance {index}: {labels} labels for {frames} frames")]
    LabelMismatch { index: usize, labels: usize, frames: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("representation width {found}, probe expects {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeTask {
    PhonemeL,
    Phoneme1H,
    SpeakerF,
    SpeakerU,
}

impl ProbeTask {
    pub const ALL: [ProbeTask; 4] = [ProbeTask::PhonemeL, ProbeTask::Phoneme1H, ProbeTask::SpeakerF, ProbeTask::SpeakerU];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTask::PhonemeL => "phoneme_l",
            ProbeTask::Phoneme1H => "phoneme_1h",
            ProbeTask::SpeakerF => "speaker_f",
            ProbeTask::SpeakerU => "speaker_u",
        }
    }

    /// Column heading used in result tables.
    pub fn table_name(self) -> &'static str {
        match self {
            ProbeTask::PhonemeL => "Phoneme-L",
            ProbeTask::Phoneme1H => "Phoneme-1H",
            ProbeTask::SpeakerF => "Speaker-F",
            ProbeTask::SpeakerU => "Speaker-U",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let k = s.to_ascii_lowercase().replace(['-', '_'], "");
        ProbeTask::ALL.into_iter().find(|t| t.name().replace('_', "") == k)
    }

    pub fn is_phoneme(self) -> bool {
        matches!(self, ProbeTask::PhonemeL | ProbeTask::Phoneme1H)
    }

    pub fn is_utterance_level(self) -> bool {
        self == ProbeTask::SpeakerU
    }
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.table_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub task: ProbeTask,
    /// Hidden units of the one-hidden-layer classifier.
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub num_steps: usize,
    /// Examples (frames or utterances) per step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            task: ProbeTask::PhonemeL,
            hidden_dim: 128,
            learning_rate: 1e-3,
            num_steps: 500,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.task == ProbeTask::Phoneme1H && self.hidden_dim == 0 {
            return Err(ProbeError::InvalidConfig("hidden_dim must be at least 1".into()));
        }
        if self.num_steps == 0 || self.batch_size == 0 {
            return Err(ProbeError::InvalidConfig("num_steps and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ProbeError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Labels of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeLabels {
    Frames(Vec<usize>),
    Utterance(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct ProbeParams<S>(Vec<Array2<S>>);

impl<S: Scalar> ParamTensors<S> for ProbeParams<S> {
    fn tensors(&self) -> Vec<(String, &Array2<S>)> {
        self.0.iter().enumerate().map(|(i, t)| (i.to_string(), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<S>)> {
        self.0.iter_mut().enumerate().map(|(i, t)| (i.to_string(), t)).collect()
    }
}

/// A trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe<S> {
    pub task: ProbeTask,
    pub num_classes: usize,
    mean: Array1<S>,
    inv_std: Array1<S>,
    /// `[w, b]` for the linear probe, `[w1, b1, w2, b2]` with a hidden layer.
    params: Vec<Array2<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub task: ProbeTask,
    pub accuracy: f64,
    pub num_examples: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl ProbeResult {
    pub fn from_predictions(task: ProbeTask, truth: &[usize], predicted: &[usize], num_classes: usize) -> Self {
        let k = truth.iter().chain(predicted).map(|&c| c + 1).max().unwrap_or(0).max(num_classes);
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let hits: usize = (0..k).map(|i| confusion[i][i]).sum();
        let n = truth.len();
        ProbeResult { task, accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 }, num_examples: n, confusion }
    }
}

/// Flattens per-utterance representations into examples. Utterance-level
/// tasks mean-pool each utterance.
pub fn probe_examples<S: Scalar>(
    task: ProbeTask,
    reps: &[Array2<S>],
    labels: &[ProbeLabels],
) -> Result<(Array2<S>, Vec<usize>), ProbeError> {
    if reps.len() != labels.len() {
        return Err(ProbeError::LabelMismatch { index: reps.len().min(labels.len()), labels: labels.len(), frames: reps.len() });
    }
    let dim = reps.first().map_or(0, |r| r.ncols());
    let mut rows: Vec<S> = Vec::new();
    let mut y = Vec::new();
    for (i, (r, l)) in reps.iter().zip(labels).enumerate() {
        if r.ncols() != dim {
            return Err(ProbeError::DimMismatch { found: r.ncols(), expected: dim });
        }
        if task.is_utterance_level() {
            let label = match l {
                ProbeLabels::Utterance(c) => *c,
                ProbeLabels::Frames(f) => match f.first() {
                    Some(&c) if f.iter().all(|&x| x == c) && f.len() == r.nrows() => c,
                    _ => return Err(ProbeError::LabelMismatch { index: i, labels: f.len(), frames: r.nrows() }),
                },
            };
            if r.nrows() == 0 {
                return Err(ProbeError::LabelMismatch { index: i, labels: 1, frames: 0 });
            }
            rows.extend(mean_pool(r).iter());
            y.push(label);
        } else {
            let f = match l {
                ProbeLabels::Frames(f) => f,
                ProbeLabels::Utterance(_) => return Err(ProbeError::LabelMismatch { index: i, labels: 1, frames: r.nrows() }),
            };
            if f.len() != r.nrows() {
                return Err(ProbeError::LabelMismatch { index: i, labels: f.len(), frames: r.nrows() });
            }
            rows.extend(r.iter());
            y.extend_from_slice(f);
        }
    }
    let x = Array2::from_shape_vec((y.len(), dim), rows).expect("row-major layout");
    Ok((x, y))
}

/// Mean over frames.
pub fn mean_pool<S: Scalar>(r: &Array2<S>) -> Array1<S> {
    r.mean_axis(Axis(0)).expect("at least one frame")
}

fn softmax_xent_grad<S: Scalar>(logits: &Array2<S>, y: &[usize]) -> (f64, Array2<S>) {
    let n = S::lit(y.len() as f64);
    let mut g = logits.clone();
    let mut loss = 0.0;
    for (mut row, &c) in g.rows_mut().into_iter().zip(y) {
        let max = row.fold(S::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        loss -= row[c].to_f64_lossy().max(1e-30).ln();
        row[c] -= S::one();
        row.mapv_inplace(|v| v / n);
    }
    (loss / y.len() as f64, g)
}

fn relu<S: Scalar>(v: S) -> S {
    v.max(S::zero())
}

fn init_layer<S: Scalar>(rows: usize, cols: usize, rng: &mut crate::seed::Rng) -> Array2<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| S::lit(rng.gen_range(-limit..limit)))
}

impl<S: Scalar> Probe<S> {
    fn standardize(&self, x: &Array2<S>) -> Array2<S> {
        (x - &self.mean) * &self.inv_std
    }

    fn logits_from_standard(&self, z: &Array2<S>) -> (Array2<S>, Option<Array2<S>>) {
        forward(&self.params, z)
    }

    pub fn logits(&self, x: &Array2<S>) -> Result<Array2<S>, ProbeError> {
        if x.ncols() != self.mean.len() {
            return Err(ProbeError::DimMismatch { found: x.ncols(), expected: self.mean.len() });
        }
        Ok(self.logits_from_standard(&self.standardize(x)).0)
    }

    pub fn predict(&self, x: &Array2<S>) -> Result<Vec<usize>, ProbeError> {
        let logits = self.logits(x)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, S::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect())
    }
}

fn forward<S: Scalar>(params: &[Array2<S>], z: &Array2<S>) -> (Array2<S>, Option<Array2<S>>) {
    match params {
        [w, b] => (z.dot(w) + b, None),
        [w1, b1, w2, b2] => {
            let pre = z.dot(w1) + b1;
            let h = pre.mapv(relu);
            (h.dot(w2) + b2, Some(pre))
        }
        _ => unreachable!("probe has one or two layers"),
    }
}

/// Gradients of the mean cross-entropy on one minibatch.
fn gradients<S: Scalar>(params: &[Array2<S>], z: &Array2<S>, y: &[usize]) -> (f64, Vec<Array2<S>>) {
    let (logits, pre) = forward(params, z);
    let (loss, d_logits) = softmax_xent_grad(&logits, y);
    let col_sum = |m: &Array2<S>| m.sum_axis(Axis(0)).insert_axis(Axis(0));
    match (params, pre) {
        ([_, _], None) => (loss, vec![z.t().dot(&d_logits), col_sum(&d_logits)]),
        ([_, _, w2, _], Some(pre)) => {
            let h = pre.mapv(relu);
            let mut dh = d_logits.dot(&w2.t());
            ndarray::Zip::from(&mut dh).and(&pre).for_each(|d, &p| {
                if p <= S::zero() {
                    *d = S::zero()
                }
            });
            (loss, vec![z.t().dot(&dh), col_sum(&dh), h.t().dot(&d_logits), col_sum(&d_logits)])
        }
        _ => unreachable!("probe has one or two layers"),
    }
}

/// Trains a classifier for `cfg.task`. The representations are only read.
pub fn train_probe<S: Scalar>(reps: &[Array2<S>], labels: &[ProbeLabels], cfg: &ProbeConfig) -> Result<Probe<S>, ProbeError> {
    cfg.validate()?;
    let (x, y) = probe_examples(cfg.task, reps, labels)?;
    train_probe_on(&x, &y, cfg)
}

/// Trains on an already flattened example matrix.
pub fn train_probe_on<S: Scalar>(x: &Array2<S>, y: &[usize], cfg: &ProbeConfig) -> Result<Probe<S>, ProbeError> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(ProbeError::EmptyTrainSet);
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(ProbeError::SingleClass);
    }
    let num_classes = y.iter().max().unwrap() + 1;
    let n = S::lit(y.len() as f64);
    let mean = x.sum_axis(Axis(0)) / n;
    let var = (x - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| if v > S::lit(1e-12) { S::one() / v.sqrt() } else { S::one() });

    let mut rng = SeedHasher::new(cfg.seed).str("probe").str(cfg.task.name()).rng();
    let d = x.ncols();
    let params = if cfg.task == ProbeTask::Phoneme1H {
        vec![
            init_layer(d, cfg.hidden_dim, &mut rng),
            Array2::zeros((1, cfg.hidden_dim)),
            init_layer(cfg.hidden_dim, num_classes, &mut rng),
            Array2::zeros((1, num_classes)),
        ]
    } else {
        vec![init_layer(d, num_classes, &mut rng), Array2::zeros((1, num_classes))]
    };
    let mut probe = Probe { task: cfg.task, num_classes, mean, inv_std, params };
    let z = probe.standardize(x);

    let mut p = ProbeParams(std::mem::take(&mut probe.params));
    let mut adam = Adam::new(&p, cfg.learning_rate, 0.9, 0.999, 1e-8);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut cursor = order.len();
    let bs = cfg.batch_size.min(y.len());
    for _ in 0..cfg.num_steps {
        if cursor + bs > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let zb = z.select(Axis(0), idx);
        let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        let (_, g) = gradients(&p.0, &zb, &yb);
        adam.update(&mut p, &ProbeParams(g));
    }
    probe.params = p.0;
    Ok(probe)
}

pub fn eval_probe<S: Scalar>(probe: &Probe<S>, reps: &[Array2<S>], labels: &[ProbeLabels]) -> Result<ProbeResult, ProbeError> {
    let (x, y) = probe_examples(probe.task, reps, labels)?;
    eval_probe_on(probe, &x, &y)
}

pub fn eval_probe_on<S: Scalar>(probe: &Probe<S>, x: &Array2<S>, y: &[usize]) -> Result<ProbeResult, ProbeError> {
    if y.is_empty() {
        return Err(ProbeError::EmptyEvalSet);
    }
    let predicted = probe.predict(x)?;
    Ok(ProbeResult::from_predictions(probe.task, y, &predicted, probe.num_classes))
}

/// Deterministic 80/20 partition: utterances are ordered by
/// `hash(seed, utt_id)` and the first fifth (rounded, at least one) is held out.
///
/// Returns `(train, eval)` indices, each in ascending order.
pub fn split_by_utterance(utt_ids: &[&str], seed: u64) -> (Vec<usize>, Vec<usize>) {
    split_with_fraction(utt_ids, seed, 0.2)
}

pub fn split_with_fraction(utt_ids: &[&str], seed: u64, eval_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut keyed: Vec<(u64, &str, usize)> = utt_ids.iter().enumerate().map(|(i, id)| (utterance_seed(seed, id), *id, i)).collect();
    keyed.sort();
    let n_eval = if utt_ids.is_empty() { 0 } else { ((eval_fraction * utt_ids.len() as f64).round() as usize).clamp(1, utt_ids.len()) };
    let mut eval: Vec<usize> = keyed[..n_eval].iter().map(|k| k.2).collect();
    let mut train: Vec<usize> = keyed[n_eval..].iter().map(|k| k.2).collect();
    eval.sort_unstable();
    train.sort_unstable();
    (train, eval)
}

/// Maps phoneme labels to class indices, sorted by label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhonemeInventory(BTreeMap<String, usize>);

impl PhonemeInventory {
    pub fn from_alignments<'a>(alignments: impl IntoIterator<Item = &'a PhonemeAlignment>) -> Self {
        let mut labels: Vec<String> = alignments.into_iter().flat_map(|a| a.spans().iter().map(|s| s.label.clone())).collect();
        labels.sort();
        labels.dedup();
        PhonemeInventory(labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.0.get(label).copied()
    }

    /// One class per frame; labels missing from the inventory are skipped by
    /// returning `None`.
    pub fn frame_labels(&self, a: &PhonemeAlignment) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(a.num_frames());
        for s in a.spans() {
            let c = self.index(&s.label)?;
            out.extend(std::iter::repeat(c).take(s.len()));
        }
        Some(out)
    }
}

/// One utterance for encoder evaluation.
#[derive(Debug, Clone)]
pub struct ProbeUtterance<S> {
    pub utt_id: String,
    pub features: FeatureMatrix<S>,
    pub phonemes: Vec<usize>,
    pub speaker: usize,
}

impl<S> ProbeUtterance<S> {
    pub fn labels(&self, task: ProbeTask) -> ProbeLabels {
        match task {
            ProbeTask::PhonemeL | ProbeTask::Phoneme1H => ProbeLabels::Frames(self.phonemes.clone()),
            ProbeTask::SpeakerF => ProbeLabels::Frames(vec![self.speaker; self.phonemes.len()]),
            ProbeTask::SpeakerU => ProbeLabels::Utterance(self.speaker),
        }
    }
}

/// Extracts frozen last-layer representations, splits by utterance, trains on
/// the training part and scores the held-out part.
pub fn evaluate_encoder<S: Scalar>(
    model: &EncoderModel<S>,
    utts: &[ProbeUtterance<S>],
    cfg: &ProbeConfig,
    split_seed: u64,
) -> Result<ProbeResult, ProbeError> {
    let reps = utts
        .iter()
        .map(|u| extract_representations(model, &u.features))
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_representations(&reps, utts, cfg, split_seed)
}

pub fn evaluate_representations<S: Scalar>(
    reps: &[Array2<S>],
    utts: &[ProbeUtterance<S>],
    cfg: &ProbeConfig,
    split_seed: u64,
) -> Result<ProbeResult, ProbeError> {
    let ids: Vec<&str> = utts.iter().map(|u| u.utt_id.as_str()).collect();
    let (train, eval) = split_by_utterance(&ids, split_seed);
    let pick = |idx: &[usize]| -> (Vec<Array2<S>>, Vec<ProbeLabels>) {
        (idx.iter().map(|&i| reps[i].clone()).collect(), idx.iter().map(|&i| utts[i].labels(cfg.task)).collect())
    };
    let (tr_x, tr_y) = pick(&train);
    let (ev_x, ev_y) = pick(&eval);
    let probe = train_probe(&tr_x, &tr_y, cfg)?;
    eval_probe(&probe, &ev_x, &ev_y)
}

/// `policy,task,accuracy,num_examples` rows.
pub fn results_csv(rows: &[(String, ProbeResult)]) -> String {
    let mut s = String::from("policy,task,accuracy,num_examples\n");
    for (policy, r) in rows {
        s.push_str(&format!("{policy},{},{:.6},{}\n", r.task.table_name(), r.accuracy, r.num_examples));
    }
    s
}

/// Human-readable table with accuracies in percent.
pub fn results_table(rows: &[(String, ProbeResult)]) -> String {
    let width = rows.iter().map(|(p, _)| p.len()).max().unwrap_or(6).max(6);
    let mut s = format!("{:<width$}  {:<10}  {:>8}\n", "Policy", "Task", "Acc(%)");
    for (policy, r) in rows {
        s.push_str(&format!("{policy:<width$}  {:<10}  {:>8.1}\n", r.task.table_name(), 100.0 * r.accuracy));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn cfg(task: ProbeTask, steps: usize) -> ProbeConfig {
        ProbeConfig { task, num_steps: steps, batch_size: 64, learning_rate: 1e-2, ..Default::default() }
    }

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let mut rng = rng_from_seed(1);
        let x = Array2::from_shape_fn((200, 5), |(i, j)| if j == 0 { if i % 2 == 0 { 1.0 } else { -1.0 } } else { rng.gen_range(-1.0..1.0) });
        let y: Vec<usize> = (0..200).map(|i| i % 2).collect();
        for task in [ProbeTask::PhonemeL, ProbeTask::Phoneme1H] {
            let p = train_probe_on::<f64>(&x, &y, &cfg(task, 300)).unwrap();
            let r = eval_probe_on(&p, &x, &y).unwrap();
            assert_eq!(r.accuracy, 1.0);
            assert_eq!(r.confusion, vec![vec![100, 0], vec![0, 100]]);
        }
    }

    #[test]
    fn shuffled_labels_score_at_chance() {
        let mut rng = rng_from_seed(2);
        let n = 6000;
        let x = Array2::from_shape_fn((n, 16), |_| rng.gen_range(-1.0f32..1.0));
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..12)).collect();
        let (tr, ev) = (4800, n);
        let p = train_probe_on(&x.slice(ndarray::s![..tr, ..]).to_owned(), &y[..tr], &cfg(ProbeTask::PhonemeL, 300)).unwrap();
        let r = eval_probe_on(&p, &x.slice(ndarray::s![tr..ev, ..]).to_owned(), &y[tr..]).unwrap();
        assert!((r.accuracy - 1.0 / 12.0).abs() <= 0.05, "{}", r.accuracy);
    }

    #[test]
    fn trivial_results() {
        let truth = [0, 1, 2, 3, 0, 1, 2, 3];
        let r = ProbeResult::from_predictions(ProbeTask::PhonemeL, &truth, &truth, 4);
        assert_eq!(r.accuracy, 1.0);
        assert!((0..4).all(|i| r.confusion[i][i] == 2));
        let r = ProbeResult::from_predictions(ProbeTask::PhonemeL, &truth, &[1; 8], 4);
        assert_eq!(r.accuracy, 0.25);
        assert_eq!(r.confusion.iter().map(|row| row.iter().sum::<usize>()).collect::<Vec<_>>(), vec![2; 4]);
    }

    #[test]
    fn pooling_identical_frames_returns_the_frame() {
        let frame = Array1::from(vec![0.5f32, -1.25, 3.0]);
        let r = Array2::from_shape_fn((7, 3), |(_, j)| frame[j]);
        assert_eq!(mean_pool(&r), frame);
        let (x, y) = probe_examples(ProbeTask::SpeakerU, &[r], &[ProbeLabels::Utterance(4)]).unwrap();
        assert_eq!((x.row(0).to_owned(), y), (frame, vec![4]));
    }

    #[test]
    fn errors() {
        let r = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            train_probe(&[r.clone()], &[ProbeLabels::Frames(vec![0, 1])], &cfg(ProbeTask::PhonemeL, 1)),
            Err(ProbeError::LabelMismatch { .. })
        ));
        assert!(matches!(
            train_probe(&[r.clone()], &[ProbeLabels::Frames(vec![1, 1, 1])], &cfg(ProbeTask::PhonemeL, 1)),
            Err(ProbeError::SingleClass)
        ));
        let p = train_probe(&[r], &[ProbeLabels::Frames(vec![0, 1, 0])], &cfg(ProbeTask::PhonemeL, 1)).unwrap();
        assert!(matches!(eval_probe(&p, &[], &[]), Err(ProbeError::EmptyEvalSet)));
        assert!(ProbeConfig { task: ProbeTask::Phoneme1H, hidden_dim: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ids: Vec<String> = (0..50).map(|i| format!("s{:02}_u{i:04}", i % 8)).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let (tr, ev) = split_by_utterance(&refs, 7);
        assert_eq!((tr.len(), ev.len()), (40, 10));
        assert!(tr.iter().all(|i| !ev.contains(i)));
        assert_eq!(split_by_utterance(&refs, 7), (tr.clone(), ev.clone()));
        let mut reversed = refs.clone();
        reversed.reverse();
        let (_, ev_r) = split_by_utterance(&reversed, 7);
        let mut a: Vec<&str> = ev.iter().map(|&i| refs[i]).collect();
        let mut b: Vec<&str> = ev_r.iter().map(|&i| reversed[i]).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(split_by_utterance(&refs, 8).1, ev);
    }

    #[test]
    fn task_names_round_trip() {
        for t in ProbeTask::ALL {
            assert_eq!(ProbeTask::parse(t.name()), Some(t));
            assert_eq!(ProbeTask::parse(t.table_name()), Some(t));
        }
    }
}

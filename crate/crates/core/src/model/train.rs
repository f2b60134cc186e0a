use ndarray::Array2;
use rand::seq::SliceRandom;

use super::checkpoint::Checkpoint;
use super::loss::{l1_loss_grad, LossScope};
use super::params::{EncoderParams, ParamTensors};
use super::{Adam, EncoderConfig, EncoderModel, ModelError};
use crate::alignment::PhonemeAlignment;
use crate::features::FeatureMatrix;
use crate::masking::{apply_mask, generate_mask, MaskInputs, MaskPolicyConfig};
use crate::scalar::Scalar;
use crate::seed::SeedHasher;
use crate::vad::SpeechLists;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Utterances per step.
    pub batch_size: usize,
    pub num_steps: usize,
    pub loss_scope: LossScope,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            num_steps: 2000,
            loss_scope: LossScope::MaskedOnly,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.num_steps == 0 {
            return bad("num_steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// One pre-training utterance with whatever the mask policy needs.
#[derive(Debug, Clone)]
pub struct TrainUtterance<S> {
    pub utt_id: String,
    pub features: FeatureMatrix<S>,
    pub lists: Option<SpeechLists>,
    pub alignment: Option<PhonemeAlignment>,
}

/// Stateful pre-training loop.
///
/// Batch choice, masks and dropout are derived from `(seed, step, utt_id)`,
/// so a trainer restored from a checkpoint continues exactly where the
/// original left off.
#[derive(Debug, Clone)]
pub struct Trainer<S: Scalar> {
    pub model: EncoderModel<S>,
    pub adam: Adam<S, EncoderParams<S>>,
    pub train_cfg: TrainConfig,
    pub mask_cfg: MaskPolicyConfig,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(enc_cfg: EncoderConfig, train_cfg: TrainConfig, mask_cfg: MaskPolicyConfig) -> Result<Self, ModelError> {
        train_cfg.validate()?;
        mask_cfg.validate()?;
        let mut rng = SeedHasher::new(train_cfg.seed).str("init").rng();
        let model = EncoderModel::new(enc_cfg, &mut rng)?;
        Ok(Self::with_model(model, train_cfg, mask_cfg))
    }

    pub fn with_model(model: EncoderModel<S>, train_cfg: TrainConfig, mask_cfg: MaskPolicyConfig) -> Self {
        let adam = Adam::new(
            &model.params,
            train_cfg.learning_rate,
            train_cfg.adam_beta1,
            train_cfg.adam_beta2,
            train_cfg.adam_eps,
        );
        Trainer { model, adam, train_cfg, mask_cfg }
    }

    /// Restores model and optimizer state; the learning rate and betas come
    /// from the checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint, train_cfg: TrainConfig, mask_cfg: MaskPolicyConfig) -> Result<Self, ModelError> {
        let model = ck.model::<S>()?;
        let mut t = Self::with_model(model, train_cfg, mask_cfg);
        if let Some(o) = ck.optimizer::<S>()? {
            t.adam = Adam::from_state(o.lr, o.beta1, o.beta2, o.eps, o.step, o.m, o.v);
        }
        Ok(t)
    }

    pub fn checkpoint(&self, extra: &[(String, String)]) -> Checkpoint {
        let mut meta = vec![
            ("train.seed".to_string(), self.train_cfg.seed.to_string()),
            ("train.loss_scope".to_string(), self.train_cfg.loss_scope.name().to_string()),
            ("mask.policy".to_string(), self.mask_cfg.policy.name().to_string()),
            ("mask.rho".to_string(), self.mask_cfg.rho.to_string()),
            ("mask.seed".to_string(), self.mask_cfg.seed.to_string()),
        ];
        meta.extend(extra.iter().cloned());
        Checkpoint::capture(&self.model, Some(&self.adam), &meta)
    }

    pub fn steps_done(&self) -> u64 {
        self.adam.step
    }

    /// Indices of the utterances used at `step`.
    pub fn batch_indices(&self, step: u64, corpus_len: usize) -> Vec<usize> {
        let mut rng = SeedHasher::new(self.train_cfg.seed).str("batch").u64(step).rng();
        let mut idx: Vec<usize> = (0..corpus_len).collect();
        if self.train_cfg.batch_size >= corpus_len {
            return idx;
        }
        let (picked, _) = idx.partial_shuffle(&mut rng, self.train_cfg.batch_size);
        picked.to_vec()
    }

    /// Mask configuration for one utterance at one step.
    pub fn mask_config_at(&self, step: u64, utt_id: &str) -> MaskPolicyConfig {
        MaskPolicyConfig {
            seed: SeedHasher::new(self.mask_cfg.seed).u64(step).str(utt_id).finish(),
            ..self.mask_cfg.clone()
        }
    }

    /// Loss and summed gradients of a batch; the utterance losses are averaged
    /// and their gradients accumulated in batch order.
    pub fn batch_gradient(
        &self,
        corpus: &[TrainUtterance<S>],
        indices: &[usize],
        step: u64,
    ) -> Result<(f64, EncoderParams<S>), ModelError> {
        let mut grads = self.model.params.zeros_like();
        let mut losses = Vec::with_capacity(indices.len());
        let mut per_utt = Vec::with_capacity(indices.len());
        for &i in indices {
            let u = &corpus[i];
            let mcfg = self.mask_config_at(step, &u.utt_id);
            let t = u.features.num_frames();
            let inputs = MaskInputs { lists: u.lists.as_ref(), alignment: u.alignment.as_ref() };
            let mask = generate_mask(t, inputs, &mcfg)?;
            if self.train_cfg.loss_scope == LossScope::MaskedOnly && mask.masked_count() == 0 {
                continue;
            }
            let (masked, _) = apply_mask(&u.features, &mask, &mcfg)?;
            let mut drop_rng = SeedHasher::new(self.train_cfg.seed).str("dropout").u64(step).str(&u.utt_id).rng();
            let pass = self.model.forward_pass(masked.values().view(), true, Some(&mut drop_rng))?;
            let (loss, d_out) = l1_loss_grad(u.features.values(), &pass.output, &mask, self.train_cfg.loss_scope)?;
            per_utt.push((pass, d_out));
            losses.push(loss);
        }
        if losses.is_empty() {
            return Err(ModelError::EmptyMask);
        }
        let scale = S::one() / S::lit(losses.len() as f64);
        for (pass, d_out) in &per_utt {
            let g = self.model.backward(pass, Some(d_out), &[]);
            grads.add_scaled(&g, scale);
        }
        let loss = losses.iter().map(|l| l.to_f64_lossy()).sum::<f64>() / losses.len() as f64;
        Ok((loss, grads))
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn step(&mut self, corpus: &[TrainUtterance<S>]) -> Result<f64, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let step = self.adam.step;
        let indices = self.batch_indices(step, corpus.len());
        let (loss, grads) = self.batch_gradient(corpus, &indices, step)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(ModelError::DivergedLoss { step: step as usize });
        }
        self.adam.update(&mut self.model.params, &grads);
        Ok(loss)
    }

    pub fn run(&mut self, corpus: &[TrainUtterance<S>], steps: usize) -> Result<Vec<f64>, ModelError> {
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let l = self.step(corpus)?;
            if log::log_enabled!(log::Level::Debug) && self.adam.step % 100 == 0 {
                log::debug!("step {} loss {l:.5}", self.adam.step);
            }
            losses.push(l);
        }
        Ok(losses)
    }
}

/// Trains a fresh encoder for `train_cfg.num_steps` steps.
pub fn pretrain<S: Scalar>(
    corpus: &[TrainUtterance<S>],
    mask_cfg: &MaskPolicyConfig,
    enc_cfg: &EncoderConfig,
    train_cfg: &TrainConfig,
) -> Result<(EncoderModel<S>, Vec<f64>), ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut trainer = Trainer::new(enc_cfg.clone(), train_cfg.clone(), mask_cfg.clone())?;
    let losses = trainer.run(corpus, train_cfg.num_steps)?;
    Ok((trainer.model, losses))
}

/// Last-layer hidden states, inference mode, no masking.
pub fn extract_representations<S: Scalar>(model: &EncoderModel<S>, x: &FeatureMatrix<S>) -> Result<Array2<S>, ModelError> {
    let pass = model.forward_pass(x.values().view(), false, None)?;
    Ok(pass.last_hidden().clone())
}

/// Loss curve as `step,loss` CSV.
pub fn loss_curve_csv(losses: &[f64], first_step: usize) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{l:e}\n", first_step + i + 1));
    }
    s
}

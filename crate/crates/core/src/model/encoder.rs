use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::params::{EncoderParams, LayerParams};
use super::{EncoderConfig, ModelError};
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;
use crate::seed::Rng;

const LN_EPS: f64 = 1e-5;

/// The masked-reconstruction network and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<S> {
    pub config: EncoderConfig,
    pub params: EncoderParams<S>,
}

struct NormCache<S> {
    normed: Array2<S>,
    inv_std: Array1<S>,
}

struct LayerCache<S> {
    ln1: NormCache<S>,
    a: Array2<S>,
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    probs: Vec<Array2<S>>,
    context: Array2<S>,
    attn_drop: Option<Array2<S>>,
    ln2: NormCache<S>,
    c: Array2<S>,
    pre_act: Array2<S>,
    act: Array2<S>,
    ff_drop: Option<Array2<S>>,
    out: Array2<S>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct ForwardPass<S> {
    input: Array2<S>,
    layers: Vec<LayerCache<S>>,
    lnf: NormCache<S>,
    z: Array2<S>,
    pub output: Array2<S>,
}

impl<S: Scalar> ForwardPass<S> {
    /// Residual-stream output of every layer, `T × d_model` each.
    pub fn hidden(&self) -> Vec<&Array2<S>> {
        self.layers.iter().map(|l| &l.out).collect()
    }

    pub fn last_hidden(&self) -> &Array2<S> {
        &self.layers.last().expect("at least one layer").out
    }
}

/// Sinusoidal positions, `frames × d`.
pub fn positional_encoding<S: Scalar>(frames: usize, d: usize) -> Array2<S> {
    let inv_freq: Vec<f64> = (0..d).map(|j| 10000f64.powf(-2.0 * (j / 2) as f64 / d as f64)).collect();
    Array2::from_shape_fn((frames, d), |(t, j)| {
        let angle = t as f64 * inv_freq[j];
        S::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

fn layer_norm<S: Scalar>(x: &Array2<S>, gain: &Array2<S>, bias: &Array2<S>) -> (Array2<S>, NormCache<S>) {
    let d = S::lit(x.ncols() as f64);
    let eps = S::lit(LN_EPS);
    let mut normed = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in normed.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<S>() / d;
        *is = S::one() / (var + eps).sqrt();
        let r = *is;
        row.mapv_inplace(|v| v * r);
    }
    let y = &normed * gain + bias;
    (y, NormCache { normed, inv_std })
}

/// Returns d(input); accumulates gain/bias gradients.
fn layer_norm_backward<S: Scalar>(
    dy: &Array2<S>,
    cache: &NormCache<S>,
    gain: &Array2<S>,
    d_gain: &mut Array2<S>,
    d_bias: &mut Array2<S>,
) -> Array2<S> {
    *d_gain += &(dy * &cache.normed).sum_axis(Axis(0)).insert_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = S::lit(dy.ncols() as f64);
    let mut dx = dy * gain;
    for ((mut row, xhat), &is) in dx.rows_mut().into_iter().zip(cache.normed.rows()).zip(&cache.inv_std) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<S>() / d;
        Zip::from(&mut row).and(&xhat).for_each(|g, &xh| *g = is * (*g - mean_d - xh * mean_dx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

fn gelu<S: Scalar>(x: S) -> S {
    let (c, k, half) = (S::lit(GELU_C), S::lit(GELU_K), S::lit(0.5));
    half * x * (S::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let (c, k, half) = (S::lit(GELU_C), S::lit(GELU_K), S::lit(0.5));
    let th = (c * (x + k * x * x * x)).tanh();
    half * (S::one() + th) + half * x * (S::one() - th * th) * c * (S::one() + S::lit(3.0) * k * x * x)
}

fn softmax_rows<S: Scalar>(m: &mut Array2<S>) {
    for mut row in m.rows_mut() {
        let max = row.fold(S::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn dropout_mask<S: Scalar>(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Array2<S> {
    let keep = S::lit(1.0 / (1.0 - p));
    Array2::from_shape_fn((rows, cols), |_| if rng.gen::<f64>() < p { S::zero() } else { keep })
}

fn col_sum<S: Scalar>(m: &Array2<S>) -> Array2<S> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl<S: Scalar> EncoderModel<S> {
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let params = EncoderParams::init(&config, rng);
        Ok(EncoderModel { config, params })
    }

    pub fn from_params(config: EncoderConfig, params: EncoderParams<S>) -> Result<Self, ModelError> {
        config.validate()?;
        let m = EncoderModel { config, params };
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<(), ModelError> {
        let reference = EncoderParams::<S>::init(&self.config, &mut crate::seed::rng_from_seed(0));
        use super::ParamTensors;
        let mine = self.params.tensors();
        let want = reference.tensors();
        if mine.len() != want.len() {
            return Err(ModelError::ShapeMismatch(format!("{} tensors, expected {}", mine.len(), want.len())));
        }
        for ((n, a), (_, b)) in mine.iter().zip(&want) {
            if a.dim() != b.dim() {
                return Err(ModelError::ShapeMismatch(format!("{n}: {:?} vs {:?}", a.dim(), b.dim())));
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> EncoderModel<T> {
        EncoderModel { config: self.config.clone(), params: self.params.cast() }
    }

    fn check_input(&self, x: ArrayView2<S>) -> Result<(), ModelError> {
        if x.ncols() != self.config.input_dim {
            return Err(ModelError::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        if x.nrows() > self.config.max_frames {
            return Err(ModelError::TooLong { frames: x.nrows(), max: self.config.max_frames });
        }
        if x.nrows() == 0 {
            return Err(ModelError::ShapeMismatch("input has no frames".into()));
        }
        Ok(())
    }

    /// Reconstruction `X̃` and the per-layer hidden states.
    ///
    /// Dropout is active only when `training` is set and a generator is given.
    pub fn forward(
        &self,
        x: &FeatureMatrix<S>,
        training: bool,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<(FeatureMatrix<S>, Vec<Array2<S>>), ModelError> {
        let pass = self.forward_pass(x.values().view(), training, dropout_rng)?;
        let hidden = pass.hidden().into_iter().cloned().collect();
        Ok((x.with_values(pass.output), hidden))
    }

    pub fn forward_pass(
        &self,
        x: ArrayView2<S>,
        training: bool,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<ForwardPass<S>, ModelError> {
        self.check_input(x)?;
        let cfg = &self.config;
        let p = &self.params;
        let t = x.nrows();
        let dh = cfg.head_dim();
        let scale = S::lit(1.0 / (dh as f64).sqrt());
        let use_dropout = training && cfg.dropout > 0.0 && dropout_rng.is_some();

        let mut h = x.dot(&p.w_in) + &p.b_in + positional_encoding::<S>(t, cfg.d_model);
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for lp in &p.layers {
            let (a, ln1) = layer_norm(&h, &lp.ln1_gain, &lp.ln1_bias);
            let q = a.dot(&lp.w_q) + &lp.b_q;
            let k = a.dot(&lp.w_k) + &lp.b_k;
            let v = a.dot(&lp.w_v) + &lp.b_v;
            let mut context = Array2::zeros((t, cfg.d_model));
            let mut probs = Vec::with_capacity(cfg.num_heads);
            for head in 0..cfg.num_heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut scores);
                context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let mut attn = context.dot(&lp.w_o) + &lp.b_o;
            let attn_drop = if use_dropout {
                let m = dropout_mask(t, cfg.d_model, cfg.dropout, dropout_rng.as_deref_mut().unwrap());
                attn *= &m;
                Some(m)
            } else {
                None
            };
            let mid = &h + &attn;
            let (c, ln2) = layer_norm(&mid, &lp.ln2_gain, &lp.ln2_bias);
            let pre_act = c.dot(&lp.w_ff1) + &lp.b_ff1;
            let act = pre_act.mapv(gelu);
            let mut ff = act.dot(&lp.w_ff2) + &lp.b_ff2;
            let ff_drop = if use_dropout {
                let m = dropout_mask(t, cfg.d_model, cfg.dropout, dropout_rng.as_deref_mut().unwrap());
                ff *= &m;
                Some(m)
            } else {
                None
            };
            h = mid + ff;
            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                context,
                attn_drop,
                ln2,
                c,
                pre_act,
                act,
                ff_drop,
                out: h.clone(),
            });
        }
        let (z, lnf) = layer_norm(&h, &p.lnf_gain, &p.lnf_bias);
        let output = z.dot(&p.w_out) + &p.b_out;
        Ok(ForwardPass { input: x.to_owned(), layers, lnf, z, output })
    }

    /// Parameter gradients given the gradient of the loss with respect to the
    /// output (`d_output`) and, optionally, with respect to layer outputs.
    ///
    /// `d_hidden[l]`, when present, is added to the gradient flowing into the
    /// output of layer `l`.
    pub fn backward(
        &self,
        pass: &ForwardPass<S>,
        d_output: Option<&Array2<S>>,
        d_hidden: &[Option<Array2<S>>],
    ) -> EncoderParams<S> {
        use super::ParamTensors;
        let cfg = &self.config;
        let p = &self.params;
        let mut g = p.zeros_like();
        let t = pass.input.nrows();
        let dh_width = cfg.head_dim();
        let scale = S::lit(1.0 / (dh_width as f64).sqrt());

        let mut dh = Array2::<S>::zeros((t, cfg.d_model));
        if let Some(dy) = d_output {
            g.w_out = pass.z.t().dot(dy);
            g.b_out = col_sum(dy);
            let dz = dy.dot(&p.w_out.t());
            dh = layer_norm_backward(&dz, &pass.lnf, &p.lnf_gain, &mut g.lnf_gain, &mut g.lnf_bias);
        }

        for (l, (lp, cache)) in p.layers.iter().zip(&pass.layers).enumerate().rev() {
            if let Some(Some(extra)) = d_hidden.get(l) {
                dh += extra;
            }
            let gl: &mut LayerParams<S> = &mut g.layers[l];

            // feed-forward branch
            let mut d_ff = dh.clone();
            if let Some(m) = &cache.ff_drop {
                d_ff *= m;
            }
            gl.w_ff2 = cache.act.t().dot(&d_ff);
            gl.b_ff2 = col_sum(&d_ff);
            let mut d_pre = d_ff.dot(&lp.w_ff2.t());
            Zip::from(&mut d_pre).and(&cache.pre_act).for_each(|d, &x| *d = *d * gelu_grad(x));
            gl.w_ff1 = cache.c.t().dot(&d_pre);
            gl.b_ff1 = col_sum(&d_pre);
            let dc = d_pre.dot(&lp.w_ff1.t());
            let d_mid = dh + layer_norm_backward(&dc, &cache.ln2, &lp.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);

            // attention branch
            let mut d_attn = d_mid.clone();
            if let Some(m) = &cache.attn_drop {
                d_attn *= m;
            }
            gl.w_o = cache.context.t().dot(&d_attn);
            gl.b_o = col_sum(&d_attn);
            let d_context = d_attn.dot(&lp.w_o.t());
            let mut dq = Array2::<S>::zeros((t, cfg.d_model));
            let mut dk = Array2::<S>::zeros((t, cfg.d_model));
            let mut dv = Array2::<S>::zeros((t, cfg.d_model));
            for (head, probs) in cache.probs.iter().enumerate() {
                let cols = s![.., head * dh_width..(head + 1) * dh_width];
                let dctx = d_context.slice(cols);
                let mut dp = dctx.dot(&cache.v.slice(cols).t());
                dv.slice_mut(cols).assign(&probs.t().dot(&dctx));
                // softmax backward, row by row
                Zip::from(dp.rows_mut()).and(probs.rows()).for_each(|mut drow, prow| {
                    let dot = drow.iter().zip(prow).map(|(&a, &b)| a * b).sum::<S>();
                    Zip::from(&mut drow).and(&prow).for_each(|d, &pr| *d = pr * (*d - dot) * scale);
                });
                dq.slice_mut(cols).assign(&dp.dot(&cache.k.slice(cols)));
                dk.slice_mut(cols).assign(&dp.t().dot(&cache.q.slice(cols)));
            }
            gl.w_q = cache.a.t().dot(&dq);
            gl.b_q = col_sum(&dq);
            gl.w_k = cache.a.t().dot(&dk);
            gl.b_k = col_sum(&dk);
            gl.w_v = cache.a.t().dot(&dv);
            gl.b_v = col_sum(&dv);
            let da = dq.dot(&lp.w_q.t()) + dk.dot(&lp.w_k.t()) + dv.dot(&lp.w_v.t());
            dh = d_mid + layer_norm_backward(&da, &cache.ln1, &lp.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias);
        }

        g.w_in = pass.input.t().dot(&dh);
        g.b_in = col_sum(&dh);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamTensors;
    use crate::seed::rng_from_seed;

    fn input(t: usize, f: usize) -> FeatureMatrix<f64> {
        FeatureMatrix::new(Array2::from_shape_fn((t, f), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.3 - 1.0), 100.0)
            .unwrap()
    }

    #[test]
    fn shapes() {
        let m = EncoderModel::<f64>::new(EncoderConfig::default(), &mut rng_from_seed(1)).unwrap();
        let (y, hidden) = m.forward(&input(10, 80), false, None).unwrap();
        assert_eq!((y.num_frames(), y.dim()), (10, 80));
        assert_eq!(hidden.len(), 2);
        assert!(hidden.iter().all(|h| h.dim() == (10, 64)));
    }

    #[test]
    fn degenerate_forward_returns_output_bias() {
        let mut m = EncoderModel::<f64>::new(EncoderConfig::default(), &mut rng_from_seed(1)).unwrap();
        for (_, t) in m.params.tensors_mut() {
            t.fill(0.0);
        }
        let bias = Array2::from_shape_fn((1, 80), |(_, j)| j as f64 * 0.25 - 3.0);
        m.params.b_out.assign(&bias);
        let (y, _) = m.forward(&input(6, 80), false, None).unwrap();
        for row in y.values().rows() {
            assert_eq!(row, bias.row(0));
        }
    }

    #[test]
    fn swapping_frames_changes_those_outputs() {
        let m = EncoderModel::<f64>::new(EncoderConfig::default(), &mut rng_from_seed(2)).unwrap();
        let x = input(12, 80);
        let mut swapped = x.values().clone();
        let (r3, r8) = (x.values().row(3).to_owned(), x.values().row(8).to_owned());
        swapped.row_mut(3).assign(&r8);
        swapped.row_mut(8).assign(&r3);
        let (y, _) = m.forward(&x, false, None).unwrap();
        let (ys, _) = m.forward(&x.with_values(swapped), false, None).unwrap();
        // without positions, a swapped input would give exactly swapped outputs
        let d: f64 = (&y.values().row(3) - &ys.values().row(8)).mapv(f64::abs).sum();
        assert!(d > 1e-6);
        assert_ne!(y.values().row(3), ys.values().row(3));
    }

    #[test]
    fn input_errors() {
        let m = EncoderModel::<f64>::new(EncoderConfig { max_frames: 8, ..Default::default() }, &mut rng_from_seed(1))
            .unwrap();
        assert!(matches!(m.forward(&input(4, 40), false, None), Err(ModelError::ShapeMismatch(_))));
        assert!(matches!(m.forward(&input(9, 80), false, None), Err(ModelError::TooLong { .. })));
        assert!(EncoderConfig { num_heads: 3, ..Default::default() }.validate().is_err());
        assert!(EncoderConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_only_when_training() {
        let cfg = EncoderConfig { dropout: 0.5, ..Default::default() };
        let m = EncoderModel::<f64>::new(cfg, &mut rng_from_seed(3)).unwrap();
        let x = input(5, 80);
        let (a, _) = m.forward(&x, false, Some(&mut rng_from_seed(4))).unwrap();
        let (b, _) = m.forward(&x, false, None).unwrap();
        let (c, _) = m.forward(&x, true, Some(&mut rng_from_seed(4))).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn check_model(seed: u64) -> (EncoderModel<f64>, Array2<f64>, Array2<f64>) {
        let cfg = EncoderConfig { input_dim: 6, d_model: 8, num_layers: 2, num_heads: 2, ff_dim: 12, ..Default::default() };
        let mut rng = rng_from_seed(seed);
        let mut m = EncoderModel::<f64>::new(cfg, &mut rng).unwrap();
        // move norms and biases off their initial values so their gradients are generic
        for (_, t) in m.params.tensors_mut() {
            t.mapv_inplace(|v| v + rng.gen_range(-0.2..0.2));
        }
        let x = Array2::from_shape_fn((7, 6), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((7, 6), |_| rng.gen_range(-3.0..3.0));
        (m, x, y)
    }

    #[test]
    fn analytic_gradients_match_differences() {
        use crate::model::{gradient_check, groups_covered, LossScope};
        use crate::masking::MaskSequence;
        let (m, x, y) = check_model(11);
        let samples =
            gradient_check(&m, &x, &y, &MaskSequence::empty(7), LossScope::AllFrames, 120, 1e-5, &mut rng_from_seed(1))
                .unwrap();
        assert!(samples.len() >= 120);
        assert_eq!(groups_covered(&samples).len(), 4 + 16 + 2);
        for s in &samples {
            assert!(s.relative_error(1e-6) <= 1e-3, "{s:?}");
        }
    }

    #[test]
    fn parameters_past_a_tap_get_no_gradient() {
        let (m, x, _) = check_model(12);
        let pass = m.forward_pass(x.view(), false, None).unwrap();
        let tap = Array2::from_elem((7, 8), 1.0);
        let g = m.backward(&pass, None, &[Some(tap)]);
        for (name, t) in g.tensors() {
            let zero = t.iter().all(|&v| v == 0.0);
            let beyond = name.starts_with("layers.1.") || name.starts_with("final_ln") || name.starts_with("output");
            assert_eq!(zero, beyond, "{name}");
        }
    }
}

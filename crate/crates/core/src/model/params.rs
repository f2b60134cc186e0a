use ndarray::Array2;
use rand::Rng as _;

use super::EncoderConfig;
use crate::scalar::Scalar;
use crate::seed::Rng;

/// A set of named 2-D tensors (biases and norm gains are `1 × n`).
pub trait ParamTensors<S: Scalar>: Clone {
    fn tensors(&self) -> Vec<(String, &Array2<S>)>;

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<S>)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(S::zero());
        }
        z
    }

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other * scale`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: S) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub ln1_gain: Array2<S>,
    pub ln1_bias: Array2<S>,
    pub w_q: Array2<S>,
    pub b_q: Array2<S>,
    pub w_k: Array2<S>,
    pub b_k: Array2<S>,
    pub w_v: Array2<S>,
    pub b_v: Array2<S>,
    pub w_o: Array2<S>,
    pub b_o: Array2<S>,
    pub ln2_gain: Array2<S>,
    pub ln2_bias: Array2<S>,
    pub w_ff1: Array2<S>,
    pub b_ff1: Array2<S>,
    pub w_ff2: Array2<S>,
    pub b_ff2: Array2<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<S> {
    pub w_in: Array2<S>,
    pub b_in: Array2<S>,
    pub layers: Vec<LayerParams<S>>,
    pub lnf_gain: Array2<S>,
    pub lnf_bias: Array2<S>,
    pub w_out: Array2<S>,
    pub b_out: Array2<S>,
}

macro_rules! layer_fields {
    ($m:ident, $self:expr, $prefix:expr, $push:expr) => {
        $push(format!("{}ln1_gain", $prefix), $m!($self.ln1_gain));
        $push(format!("{}ln1_bias", $prefix), $m!($self.ln1_bias));
        $push(format!("{}attn.w_q", $prefix), $m!($self.w_q));
        $push(format!("{}attn.b_q", $prefix), $m!($self.b_q));
        $push(format!("{}attn.w_k", $prefix), $m!($self.w_k));
        $push(format!("{}attn.b_k", $prefix), $m!($self.b_k));
        $push(format!("{}attn.w_v", $prefix), $m!($self.w_v));
        $push(format!("{}attn.b_v", $prefix), $m!($self.b_v));
        $push(format!("{}attn.w_o", $prefix), $m!($self.w_o));
        $push(format!("{}attn.b_o", $prefix), $m!($self.b_o));
        $push(format!("{}ln2_gain", $prefix), $m!($self.ln2_gain));
        $push(format!("{}ln2_bias", $prefix), $m!($self.ln2_bias));
        $push(format!("{}ff.w1", $prefix), $m!($self.w_ff1));
        $push(format!("{}ff.b1", $prefix), $m!($self.b_ff1));
        $push(format!("{}ff.w2", $prefix), $m!($self.w_ff2));
        $push(format!("{}ff.b2", $prefix), $m!($self.b_ff2));
    };
}

macro_rules! by_ref {
    ($e:expr) => {
        &$e
    };
}

macro_rules! by_mut {
    ($e:expr) => {
        &mut $e
    };
}

impl<S: Scalar> ParamTensors<S> for EncoderParams<S> {
    fn tensors(&self) -> Vec<(String, &Array2<S>)> {
        let mut out: Vec<(String, &Array2<S>)> = Vec::new();
        let mut push = |n: String, t| out.push((n, t));
        push("input.w".into(), &self.w_in);
        push("input.b".into(), &self.b_in);
        for (i, l) in self.layers.iter().enumerate() {
            layer_fields!(by_ref, l, format!("layers.{i}."), push);
        }
        push("final_ln.gain".into(), &self.lnf_gain);
        push("final_ln.bias".into(), &self.lnf_bias);
        push("output.w".into(), &self.w_out);
        push("output.b".into(), &self.b_out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<S>)> {
        let mut out: Vec<(String, &mut Array2<S>)> = Vec::new();
        let mut push = |n: String, t| out.push((n, t));
        push("input.w".into(), &mut self.w_in);
        push("input.b".into(), &mut self.b_in);
        for (i, l) in self.layers.iter_mut().enumerate() {
            layer_fields!(by_mut, l, format!("layers.{i}."), push);
        }
        push("final_ln.gain".into(), &mut self.lnf_gain);
        push("final_ln.bias".into(), &mut self.lnf_bias);
        push("output.w".into(), &mut self.w_out);
        push("output.b".into(), &mut self.b_out);
        out
    }
}

/// Tensor name with any `layers.<i>.` prefix removed.
pub fn param_group(name: &str) -> &str {
    match name.strip_prefix("layers.") {
        Some(rest) => rest.split_once('.').map_or(rest, |(_, g)| g),
        None => name,
    }
}

fn xavier<S: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Array2<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| S::lit(rng.gen_range(-limit..limit)))
}

fn zeros<S: Scalar>(n: usize) -> Array2<S> {
    Array2::zeros((1, n))
}

fn ones<S: Scalar>(n: usize) -> Array2<S> {
    Array2::from_elem((1, n), S::one())
}

impl<S: Scalar> EncoderParams<S> {
    /// Xavier-uniform weights, zero biases, unit norm gains.
    pub fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let (d, f, h) = (cfg.d_model, cfg.ff_dim, cfg.input_dim);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerParams {
                ln1_gain: ones(d),
                ln1_bias: zeros(d),
                w_q: xavier(d, d, rng),
                b_q: zeros(d),
                w_k: xavier(d, d, rng),
                b_k: zeros(d),
                w_v: xavier(d, d, rng),
                b_v: zeros(d),
                w_o: xavier(d, d, rng),
                b_o: zeros(d),
                ln2_gain: ones(d),
                ln2_bias: zeros(d),
                w_ff1: xavier(d, f, rng),
                b_ff1: zeros(f),
                w_ff2: xavier(f, d, rng),
                b_ff2: zeros(d),
            })
            .collect();
        EncoderParams {
            w_in: xavier(h, d, rng),
            b_in: zeros(d),
            layers,
            lnf_gain: ones(d),
            lnf_bias: zeros(d),
            w_out: xavier(d, h, rng),
            b_out: zeros(h),
        }
    }

    pub fn cast<T: Scalar>(&self) -> EncoderParams<T> {
        let c = |a: &Array2<S>| a.mapv(|v| T::lit(v.to_f64_lossy()));
        EncoderParams {
            w_in: c(&self.w_in),
            b_in: c(&self.b_in),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gain: c(&l.ln1_gain),
                    ln1_bias: c(&l.ln1_bias),
                    w_q: c(&l.w_q),
                    b_q: c(&l.b_q),
                    w_k: c(&l.w_k),
                    b_k: c(&l.b_k),
                    w_v: c(&l.w_v),
                    b_v: c(&l.b_v),
                    w_o: c(&l.w_o),
                    b_o: c(&l.b_o),
                    ln2_gain: c(&l.ln2_gain),
                    ln2_bias: c(&l.ln2_bias),
                    w_ff1: c(&l.w_ff1),
                    b_ff1: c(&l.b_ff1),
                    w_ff2: c(&l.w_ff2),
                    b_ff2: c(&l.b_ff2),
                })
                .collect(),
            lnf_gain: c(&self.lnf_gain),
            lnf_bias: c(&self.lnf_bias),
            w_out: c(&self.w_out),
            b_out: c(&self.b_out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn names_shapes_and_groups() {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::<f32>::init(&cfg, &mut rng_from_seed(0));
        let t = p.tensors();
        assert_eq!(t.len(), 4 + 16 * cfg.num_layers + 2);
        assert_eq!(t[0].1.dim(), (80, 64));
        assert_eq!(t.last().unwrap().1.dim(), (1, 80));
        assert_eq!(param_group("layers.1.attn.w_q"), "attn.w_q");
        assert_eq!(param_group("output.w"), "output.w");
        let names: Vec<String> = t.iter().map(|(n, _)| n.clone()).collect();
        let mut q = p.clone();
        let names_mut: Vec<String> = q.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
    }
}

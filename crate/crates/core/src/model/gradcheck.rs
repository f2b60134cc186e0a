use ndarray::Array2;
use rand::Rng as _;

use super::loss::{l1_loss, l1_loss_grad, LossScope};
use super::params::{param_group, ParamTensors};
use super::{EncoderModel, ModelError};
use crate::masking::MaskSequence;
use crate::scalar::Scalar;
use crate::seed::Rng;

/// One compared coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub tensor: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// `|a − n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

/// Compares analytic gradients of the L1 reconstruction loss with central
/// differences of step `h`.
///
/// Every tensor is sampled at least once; the rest of the `samples` budget is
/// spread uniformly over all coordinates.
pub fn gradient_check<S: Scalar>(
    model: &EncoderModel<S>,
    input: &Array2<S>,
    target: &Array2<S>,
    mask: &MaskSequence,
    scope: LossScope,
    samples: usize,
    h: f64,
    rng: &mut Rng,
) -> Result<Vec<GradSample>, ModelError> {
    let pass = model.forward_pass(input.view(), false, None)?;
    let (_, d_out) = l1_loss_grad(target, &pass.output, mask, scope)?;
    let grads = model.backward(&pass, Some(&d_out), &[]);
    let shapes: Vec<(String, (usize, usize))> = model.params.tensors().iter().map(|(n, t)| (n.clone(), t.dim())).collect();
    let total: usize = shapes.iter().map(|(_, (r, c))| r * c).sum();

    let mut picks: Vec<(usize, (usize, usize))> = shapes
        .iter()
        .enumerate()
        .map(|(i, (_, (r, c)))| (i, (rng.gen_range(0..*r), rng.gen_range(0..*c))))
        .collect();
    while picks.len() < samples {
        let mut k = rng.gen_range(0..total);
        for (i, (_, (r, c))) in shapes.iter().enumerate() {
            if k < r * c {
                picks.push((i, (k / c, k % c)));
                break;
            }
            k -= r * c;
        }
    }

    let loss_at = |m: &EncoderModel<S>| -> Result<f64, ModelError> {
        let p = m.forward_pass(input.view(), false, None)?;
        Ok(l1_loss(target, &p.output, mask, scope)?.to_f64_lossy())
    };
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(picks.len());
    for (i, idx) in picks {
        let orig = model.params.tensors()[i].1[idx];
        let set = |m: &mut EncoderModel<S>, v: S| m.params.tensors_mut()[i].1[idx] = v;
        set(&mut probe, orig + S::lit(h));
        let plus = loss_at(&probe)?;
        set(&mut probe, orig - S::lit(h));
        let minus = loss_at(&probe)?;
        set(&mut probe, orig);
        out.push(GradSample {
            tensor: shapes[i].0.clone(),
            index: idx,
            analytic: grads.tensors()[i].1[idx].to_f64_lossy(),
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    Ok(out)
}

/// Distinct parameter groups (layer index dropped) present in `samples`.
pub fn groups_covered(samples: &[GradSample]) -> std::collections::BTreeSet<String> {
    samples.iter().map(|s| param_group(&s.tensor).to_string()).collect()
}

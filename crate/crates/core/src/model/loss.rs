use ndarray::Array2;

use super::ModelError;
use crate::masking::MaskSequence;
use crate::scalar::Scalar;

/// Which positions the L1 reconstruction loss is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossScope {
    #[default]
    MaskedOnly,
    AllFrames,
}

impl LossScope {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "maskedonly" | "masked" => Some(LossScope::MaskedOnly),
            "allframes" | "all" => Some(LossScope::AllFrames),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossScope::MaskedOnly => "masked_only",
            LossScope::AllFrames => "all_frames",
        }
    }
}

fn selected_rows(mask: &MaskSequence, scope: LossScope, t: usize) -> Result<Vec<usize>, ModelError> {
    if mask.num_frames() != t {
        return Err(ModelError::ShapeMismatch(format!("mask has {} frames, features {t}", mask.num_frames())));
    }
    match scope {
        LossScope::AllFrames => Ok((0..t).collect()),
        LossScope::MaskedOnly => {
            let rows = mask.masked_frames();
            if rows.is_empty() {
                Err(ModelError::EmptyMask)
            } else {
                Ok(rows)
            }
        }
    }
}

fn check_shapes<S>(x: &Array2<S>, y: &Array2<S>) -> Result<(), ModelError> {
    if x.dim() != y.dim() {
        return Err(ModelError::ShapeMismatch(format!("{:?} vs {:?}", x.dim(), y.dim())));
    }
    Ok(())
}

/// Mean of `|x − x̃|` over the selected frames and every feature bin.
pub fn l1_loss<S: Scalar>(
    x: &Array2<S>,
    x_tilde: &Array2<S>,
    mask: &MaskSequence,
    scope: LossScope,
) -> Result<S, ModelError> {
    check_shapes(x, x_tilde)?;
    let rows = selected_rows(mask, scope, x.nrows())?;
    let mut sum = S::zero();
    for &t in &rows {
        for (&a, &b) in x.row(t).iter().zip(x_tilde.row(t)) {
            sum += (a - b).abs();
        }
    }
    let loss = sum / S::lit((rows.len() * x.ncols()) as f64);
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok(loss)
}

/// Loss and its gradient with respect to `x̃`. The subgradient at 0 is 0.
pub fn l1_loss_grad<S: Scalar>(
    x: &Array2<S>,
    x_tilde: &Array2<S>,
    mask: &MaskSequence,
    scope: LossScope,
) -> Result<(S, Array2<S>), ModelError> {
    let loss = l1_loss(x, x_tilde, mask, scope)?;
    let rows = selected_rows(mask, scope, x.nrows())?;
    let w = S::one() / S::lit((rows.len() * x.ncols()) as f64);
    let mut grad = Array2::zeros(x.dim());
    for &t in &rows {
        for ((g, &a), &b) in grad.row_mut(t).iter_mut().zip(x.row(t)).zip(x_tilde.row(t)) {
            let d = b - a;
            *g = if d > S::zero() {
                w
            } else if d < S::zero() {
                -w
            } else {
                S::zero()
            };
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{MaskRun, RunOrigin};
    use ndarray::array;

    fn mask(t: usize, b: usize, e: usize) -> MaskSequence {
        MaskSequence::from_runs(t, vec![MaskRun { start: b, end: e, origin: RunOrigin::RandomSpan }]).unwrap()
    }

    #[test]
    fn hand_examples() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let y = array![[0.0, 1.0], [3.0, 1.0]];
        let all = MaskSequence::empty(2);
        assert_eq!(l1_loss(&x, &x, &all, LossScope::AllFrames).unwrap(), 0.0);
        assert_eq!(l1_loss(&x, &(&x + 1.0), &all, LossScope::AllFrames).unwrap(), 1.0);
        assert_eq!(l1_loss(&x, &y, &all, LossScope::AllFrames).unwrap(), 0.75);
        assert_eq!(l1_loss(&x, &y, &mask(2, 1, 1), LossScope::MaskedOnly).unwrap(), 1.0);
        assert!(matches!(l1_loss(&x, &y, &all, LossScope::MaskedOnly), Err(ModelError::EmptyMask)));
    }

    #[test]
    fn masked_only_ignores_unmasked_rows() {
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i + j) as f64);
        let y = &x + 0.5;
        let mut z = y.clone();
        z.row_mut(0).fill(100.0);
        z.row_mut(5).fill(-7.0);
        let m = mask(6, 2, 4);
        assert_eq!(l1_loss(&x, &y, &m, LossScope::MaskedOnly).unwrap(), l1_loss(&x, &z, &m, LossScope::MaskedOnly).unwrap());
        let (_, g) = l1_loss_grad(&x, &z, &m, LossScope::MaskedOnly).unwrap();
        assert!(g.row(0).iter().chain(g.row(5)).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_residual_has_zero_gradient() {
        let x = Array2::from_elem((4, 2), 0.3);
        let (l, g) = l1_loss_grad(&x, &x, &MaskSequence::empty(4), LossScope::AllFrames).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

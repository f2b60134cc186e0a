use rand::Rng as _;

use super::{FrameState, MaskError, MaskMode, MaskPolicyConfig, MaskSequence};
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;
use crate::seed::SeedHasher;

/// Applies `mask` to `x` under `cfg.mode`.
///
/// Returns the altered features and the mask with the per-frame states that
/// were realised. Unmasked frames are copied bit for bit.
pub fn apply_mask<S: Scalar>(
    x: &FeatureMatrix<S>,
    mask: &MaskSequence,
    cfg: &MaskPolicyConfig,
) -> Result<(FeatureMatrix<S>, MaskSequence), MaskError> {
    if mask.num_frames() != x.num_frames() {
        return Err(MaskError::LengthMismatch { mask: mask.num_frames(), features: x.num_frames() });
    }
    let mut states = vec![FrameState::Unmasked; mask.num_frames()];
    match cfg.mode {
        MaskMode::ZeroAll => {
            for r in mask.runs() {
                states[r.start..=r.end].iter_mut().for_each(|s| *s = FrameState::MaskedZero);
            }
        }
        MaskMode::Stochastic801010 => {
            let mut rng = SeedHasher::new(cfg.seed).str("apply").rng();
            let sources: Vec<usize> = (0..mask.num_frames()).filter(|&t| !mask.is_masked(t)).collect();
            for r in mask.runs() {
                let u: f64 = rng.gen();
                for state in &mut states[r.start..=r.end] {
                    *state = if u < 0.8 || (u < 0.9 && sources.is_empty()) {
                        FrameState::MaskedZero
                    } else if u < 0.9 {
                        FrameState::MaskedReplace(sources[rng.gen_range(0..sources.len())])
                    } else {
                        FrameState::MaskedKeep
                    };
                }
            }
        }
    }

    let src = x.values();
    let mut out = src.clone();
    for (t, s) in states.iter().enumerate() {
        match *s {
            FrameState::Unmasked | FrameState::MaskedKeep => {}
            FrameState::MaskedZero => out.row_mut(t).fill(S::zero()),
            FrameState::MaskedReplace(j) => out.row_mut(t).assign(&src.row(j)),
        }
    }
    Ok((x.with_values(out), mask.with_states(states)))
}

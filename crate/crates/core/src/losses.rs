//! Training objectives: multi-label binary cross-entropy, the two mask
//! focus penalties, and their weighted combination.
//!
//! The focus penalties are raw L1 sums over pixels, not means. With raw sums
//! the weight of the mask term grows with resolution; if you change the input
//! size, rescale lambda by 1/(H*W) to keep the balance comparable.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs.
pub const PROB_EPS: f64 = 1e-12;

/// Which mask penalty the objective carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FocusMode {
    /// Classification loss only.
    Regular,
    /// Penalize any deviation of the saliency mask from the segmentation.
    Full,
    /// Penalize only saliency mass outside the segmentation.
    Half,
}

impl FocusMode {
    pub fn needs_mask(self) -> bool {
        !matches!(self, FocusMode::Regular)
    }
}

/// Decomposed objective value: `total = classification + lambda * privileged`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub classification: f64,
    pub privileged: f64,
    pub lambda: f64,
}

impl LossValue {
    pub fn new(classification: f64, privileged: f64, lambda: f64) -> Self {
        LossValue {
            total: classification + lambda * privileged,
            classification,
            privileged,
            lambda,
        }
    }
}

fn check_pair(vis: &Tensor, seg: &Tensor, context: &'static str) -> Result<()> {
    if vis.shape() != seg.shape() {
        return Err(Error::ShapeMismatch {
            context,
            left: vis.shape().to_vec(),
            right: seg.shape().to_vec(),
        });
    }
    Ok(())
}

/// L1 distance between the saliency mask and the segmentation mask: the
/// network is pushed to light up the whole segmented region and nothing else.
pub fn full_focus(vis: &Tensor, seg: &Tensor) -> Result<f64> {
    check_pair(vis, seg, "full_focus")?;
    Ok(vis
        .data()
        .iter()
        .zip(seg.data())
        .map(|(&v, &m)| (v - m).abs())
        .sum())
}

/// Subgradient of [`full_focus`] with respect to the saliency mask.
pub fn full_focus_grad(vis: &Tensor, seg: &Tensor) -> Result<Tensor> {
    check_pair(vis, seg, "full_focus_grad")?;
    let data = vis
        .data()
        .iter()
        .zip(seg.data())
        .map(|(&v, &m)| sign(v - m))
        .collect();
    Tensor::new(vis.shape(), data)
}

/// L1 norm of the saliency mass left outside the segmentation mask; mass
/// inside is unconstrained.
pub fn half_focus(vis: &Tensor, seg: &Tensor) -> Result<f64> {
    check_pair(vis, seg, "half_focus")?;
    Ok(vis
        .data()
        .iter()
        .zip(seg.data())
        .map(|(&v, &m)| (v - v * m).abs())
        .sum())
}

/// Subgradient of [`half_focus`] with respect to the saliency mask.
pub fn half_focus_grad(vis: &Tensor, seg: &Tensor) -> Result<Tensor> {
    check_pair(vis, seg, "half_focus_grad")?;
    let data = vis
        .data()
        .iter()
        .zip(seg.data())
        .map(|(&v, &m)| sign(v - v * m) * (1.0 - m))
        .collect();
    Tensor::new(vis.shape(), data)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy averaged over classes. Targets are 0/1 per class.
pub fn bce_multilabel(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    check_pair(probs, targets, "bce_multilabel")?;
    let k = probs.len() as f64;
    let mut acc = 0.0;
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let p = clamp_prob(p);
        acc += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(acc / k)
}

/// Gradient of [`bce_multilabel`] with respect to the probabilities. Zero
/// where the clamp binds.
pub fn bce_multilabel_grad(probs: &Tensor, targets: &Tensor) -> Result<Tensor> {
    check_pair(probs, targets, "bce_multilabel_grad")?;
    let k = probs.len() as f64;
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &y)| {
            if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                0.0
            } else {
                (-(y / p) + (1.0 - y) / (1.0 - p)) / k
            }
        })
        .collect();
    Tensor::new(probs.shape(), data)
}

/// Combine classification and mask penalties for one sample.
pub fn total_loss(
    probs: &Tensor,
    targets: &Tensor,
    vis: Option<&Tensor>,
    seg: Option<&Tensor>,
    mode: FocusMode,
    lambda: f64,
) -> Result<LossValue> {
    let classification = bce_multilabel(probs, targets)?;
    let privileged = match mode {
        FocusMode::Regular => 0.0,
        FocusMode::Full | FocusMode::Half => {
            let (vis, seg) = match (vis, seg) {
                (Some(v), Some(s)) => (v, s),
                _ => {
                    return Err(Error::Config(
                        "focus mode requires both a saliency mask and a segmentation mask".into(),
                    ))
                }
            };
            if mode == FocusMode::Full {
                full_focus(vis, seg)?
            } else {
                half_focus(vis, seg)?
            }
        }
    };
    Ok(LossValue::new(classification, privileged, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t(vals: &[f64]) -> Tensor {
        Tensor::new(&[1, 2, 2], vals.to_vec()).unwrap()
    }

    #[test]
    fn full_focus_zero_at_perfect_match() {
        let m = t(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(full_focus(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn full_focus_hand_case() {
        let vis = t(&[0.5, 0.2, 0.0, 1.0]);
        let seg = t(&[1.0, 0.0, 0.0, 1.0]);
        assert!((full_focus(&vis, &seg).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn full_focus_counts_missed_mask_pixels() {
        let vis = Tensor::zeros(&[1, 3, 3]);
        let mut seg = Tensor::zeros(&[1, 3, 3]);
        seg.set(&[0, 0, 1], 1.0);
        seg.set(&[0, 2, 2], 1.0);
        assert_eq!(full_focus(&vis, &seg).unwrap(), 2.0);
    }

    #[test]
    fn half_focus_vanishes_when_everything_is_inside() {
        let vis = t(&[0.3, 0.9, 0.1, 0.5]);
        let seg = Tensor::filled(&[1, 2, 2], 1.0);
        assert_eq!(half_focus(&vis, &seg).unwrap(), 0.0);

        let contained = t(&[0.0, 0.0, 0.0, 0.8]);
        let seg2 = t(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(half_focus(&contained, &seg2).unwrap(), 0.0);
    }

    #[test]
    fn half_focus_hand_case() {
        let vis = t(&[0.5, 0.2, 0.0, 1.0]);
        let seg = t(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(half_focus(&vis, &seg).unwrap(), 0.2);
    }

    #[test]
    fn half_focus_equals_outside_sum_for_binary_masks() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let vis =
                Tensor::new(&[1, 4, 4], (0..16).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
            let seg = Tensor::new(
                &[1, 4, 4],
                (0..16).map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }).collect(),
            )
            .unwrap();
            let outside: f64 = vis
                .data()
                .iter()
                .zip(seg.data())
                .filter(|(_, &m)| m == 0.0)
                .map(|(&v, _)| v)
                .sum();
            assert_eq!(half_focus(&vis, &seg).unwrap(), outside);
        }
    }

    #[test]
    fn bce_is_near_zero_on_perfect_predictions() {
        let y = Tensor::new(&[3], vec![1.0, 0.0, 1.0]).unwrap();
        let loss = bce_multilabel(&y, &y).unwrap();
        assert!(loss >= 0.0 && loss < 1e-11, "{loss}");
    }

    #[test]
    fn bce_at_half_is_log_two() {
        let p = Tensor::filled(&[4], 0.5);
        let y = Tensor::new(&[4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((bce_multilabel(&p, &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_single_class_closed_form() {
        let p = Tensor::new(&[1], vec![0.9]).unwrap();
        let y = Tensor::new(&[1], vec![1.0]).unwrap();
        assert!((bce_multilabel(&p, &y).unwrap() - (-(0.9f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn regular_mode_ignores_masks() {
        let p = Tensor::filled(&[2], 0.5);
        let y = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let lv = total_loss(&p, &y, None, None, FocusMode::Regular, 3.0).unwrap();
        assert_eq!(lv.total, lv.classification);
        assert_eq!(lv.privileged, 0.0);
    }

    #[test]
    fn zero_lambda_keeps_classification_only() {
        let p = Tensor::filled(&[2], 0.5);
        let y = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let vis = t(&[0.5, 0.2, 0.0, 1.0]);
        let seg = t(&[1.0, 0.0, 0.0, 1.0]);
        let lv = total_loss(&p, &y, Some(&vis), Some(&seg), FocusMode::Full, 0.0).unwrap();
        assert_eq!(lv.total, lv.classification);
        assert!(lv.privileged > 0.0);
    }

    #[test]
    fn half_mode_composes_with_unit_lambda() {
        let p = Tensor::filled(&[2], 0.5);
        let y = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let vis = t(&[0.5, 0.2, 0.0, 1.0]);
        let seg = t(&[1.0, 0.0, 0.0, 1.0]);
        let lv = total_loss(&p, &y, Some(&vis), Some(&seg), FocusMode::Half, 1.0).unwrap();
        assert!((lv.total - (lv.classification + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn missing_mask_in_focus_mode_is_an_error() {
        let p = Tensor::filled(&[2], 0.5);
        let y = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        assert!(total_loss(&p, &y, None, None, FocusMode::Full, 1.0).is_err());
    }

    #[test]
    fn lambda_scales_the_privileged_share_exactly() {
        let p = Tensor::filled(&[2], 0.7);
        let y = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let vis = t(&[0.5, 0.2, 0.0, 1.0]);
        let seg = t(&[1.0, 0.0, 0.0, 1.0]);
        for c in [2.0, 10.0, 0.25] {
            let base = total_loss(&p, &y, Some(&vis), Some(&seg), FocusMode::Full, 1.0).unwrap();
            let scaled = total_loss(&p, &y, Some(&vis), Some(&seg), FocusMode::Full, c).unwrap();
            let lhs = scaled.total - scaled.classification;
            let rhs = c * (base.total - base.classification);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn losses_are_nonnegative() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let vis =
                Tensor::new(&[1, 3, 3], (0..9).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
            let seg = Tensor::new(
                &[1, 3, 3],
                (0..9).map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }).collect(),
            )
            .unwrap();
            assert!(full_focus(&vis, &seg).unwrap() >= 0.0);
            assert!(half_focus(&vis, &seg).unwrap() >= 0.0);
        }
    }
}

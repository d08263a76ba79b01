//! Detector losses: soft Dice for masks, smooth L1 for boxes, cross-entropy
//! for classification, and the per-batch breakdown whose total is the plain
//! sum of the three terms.

use candle_core::{Tensor, D};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Classification, localization and mask terms; the multi-task total is
/// their unweighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_box: f64,
    pub l_mask: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.l_cls + self.l_box + self.l_mask
    }
}

/// Soft Dice loss `1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)` over a
/// probability grid and a binary target.
pub fn dice_loss(pred: &Array2<f32>, gt: &Array2<u8>, eps: f64) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::ShapeMismatch(pred.dim(), gt.dim()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidConfig("dice eps must be > 0".into()));
    }
    let mut inter = 0.0f64;
    let mut p_sum = 0.0f64;
    let mut g_sum = 0.0f64;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let g = (g != 0) as u8 as f64;
        inter += p as f64 * g;
        p_sum += p as f64;
        g_sum += g;
    }
    Ok(1.0 - (2.0 * inter + eps) / (p_sum + g_sum + eps))
}

/// Tensor soft Dice loss over matching-shape probability and target tensors.
pub fn dice_loss_t(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<Tensor> {
    if pred.shape() != gt.shape() {
        return Err(Error::InvalidConfig(format!(
            "dice_loss_t shapes {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let inter = (pred * gt)?.sum_all()?;
    let denom = (pred.sum_all()? + gt.sum_all()?)?;
    let num = (inter * 2.0)?.affine(1.0, eps)?;
    let one = Tensor::ones((), pred.dtype(), pred.device())?;
    Ok((one - (num / denom.affine(1.0, eps)?)?)?)
}

/// Elementwise smooth L1 (Huber with delta 1), reduced by mean.
pub fn smooth_l1(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let diff = (pred - target)?;
    let abs = diff.abs()?;
    let quadratic = (diff.sqr()? * 0.5)?;
    let linear = abs.affine(1.0, -0.5)?;
    let small = abs.lt(1.0f64)?;
    Ok(small.where_cond(&quadratic, &linear)?.mean_all()?)
}

/// Numerically stable binary cross-entropy on logits, reduced by mean:
/// `max(x,0) - x*t + ln(1 + exp(-|x|))`.
pub fn binary_ce_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let zeros = logits.zeros_like()?;
    let max_part = logits.maximum(&zeros)?;
    let prod = (logits * targets)?;
    let softplus = logits.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok(((max_part - prod)? + softplus)?.mean_all()?)
}

/// Mean cross-entropy of class logits `(N, K)` against integer labels.
pub fn cross_entropy_logits(logits: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let device = logits.device();
    let targets = Tensor::from_slice(labels, labels.len(), device)?;
    let log_sm = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok(candle_nn::loss::nll(&log_sm, &targets)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use ndarray::array;

    #[test]
    fn breakdown_total_is_exact_sum() {
        let b = LossBreakdown {
            l_cls: 0.125,
            l_box: 0.5,
            l_mask: 0.0625,
        };
        assert_eq!(b.total(), 0.125 + 0.5 + 0.0625);
    }

    #[test]
    fn dice_perfect_prediction_is_near_zero() {
        let gt = array![[1u8, 0], [0, 1]];
        let pred = gt.mapv(|v| v as f32);
        let loss = dice_loss(&pred, &gt, 1e-6).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn dice_inverted_prediction_is_near_one() {
        let gt = array![[1u8, 0], [0, 1]];
        let pred = gt.mapv(|v| 1.0 - v as f32);
        let loss = dice_loss(&pred, &gt, 1e-6).unwrap();
        assert!(loss > 1.0 - 1e-5);
    }

    #[test]
    fn dice_uniform_half_on_two_positives() {
        // 2x2 grid, 2 positives, uniform 0.5: 1 - (2*1+eps)/(2+2+eps) ~ 0.5
        let gt = array![[1u8, 1], [0, 0]];
        let pred = Array2::from_elem((2, 2), 0.5f32);
        let loss = dice_loss(&pred, &gt, 1e-6).unwrap();
        assert!((loss - 0.5).abs() < 1e-6);
    }

    use ndarray::Array2;

    #[test]
    fn dice_shape_mismatch_is_error() {
        let gt = Array2::<u8>::zeros((2, 3));
        let pred = Array2::<f32>::zeros((3, 2));
        assert!(dice_loss(&pred, &gt, 1e-6).is_err());
    }

    #[test]
    fn tensor_dice_matches_scalar_dice() {
        let dev = Device::Cpu;
        let gt = array![[1u8, 0, 1], [0, 1, 0]];
        let pred = array![[0.9f32, 0.2, 0.7], [0.1, 0.6, 0.3]];
        let want = dice_loss(&pred, &gt, 1e-6).unwrap();
        let pt = Tensor::from_slice(pred.as_slice().unwrap(), (2, 3), &dev).unwrap();
        let gtf = gt.mapv(|v| v as f32);
        let gt_t = Tensor::from_slice(gtf.as_slice().unwrap(), (2, 3), &dev).unwrap();
        let got = dice_loss_t(&pt, &gt_t, 1e-6)
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        assert!((got as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn smooth_l1_known_values() {
        let dev = Device::Cpu;
        let pred = Tensor::from_slice(&[0.5f32, 2.0, -3.0], 3, &dev).unwrap();
        let target = Tensor::zeros(3, DType::F32, &dev).unwrap();
        let got = smooth_l1(&pred, &target).unwrap().to_scalar::<f32>().unwrap();
        let want = (0.5 * 0.5 * 0.5 + (2.0 - 0.5) + (3.0 - 0.5)) / 3.0;
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn binary_ce_matches_direct_formula() {
        let dev = Device::Cpu;
        let logits = Tensor::from_slice(&[1.5f32, -0.7, 0.2], 3, &dev).unwrap();
        let targets = Tensor::from_slice(&[1.0f32, 0.0, 1.0], 3, &dev).unwrap();
        let got = binary_ce_logits(&logits, &targets)
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        let direct: f64 = [(1.5f64, 1.0f64), (-0.7, 0.0), (0.2, 1.0)]
            .iter()
            .map(|&(x, t)| {
                let p = 1.0 / (1.0 + (-x).exp());
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 3.0;
        assert!((got as f64 - direct).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let dev = Device::Cpu;
        let logits = Tensor::from_slice(&[2.0f32, 0.5, -1.0, 0.0], (2, 2), &dev).unwrap();
        let got = cross_entropy_logits(&logits, &[0, 1])
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        let row = |a: f64, b: f64, t: usize| {
            let m = a.max(b);
            let z = ((a - m).exp() + (b - m).exp()).ln() + m;
            -(if t == 0 { a } else { b } - z)
        };
        let want = (row(2.0, 0.5, 0) + row(-1.0, 0.0, 1)) / 2.0;
        assert!((got as f64 - want).abs() < 1e-5);
    }
}

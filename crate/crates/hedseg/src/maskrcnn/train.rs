//! Detector training: anchor matching and sampling, proposal generation,
//! RoI head targets, and the multi-task loss (classification + box
//! regression + Dice mask term).

use std::io::Write as _;
use std::path::PathBuf;

use candle_core::{DType, Tensor};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::detect::rpn_proposals;
use super::geometry::{encode_deltas, iou, match_anchors, Box2D, MatchLabel};
use super::loss::{binary_ce_logits, cross_entropy_logits, dice_loss_t, smooth_l1, LossBreakdown};
use super::model::Detector;
use crate::error::{Error, Result};
use crate::nn::Adam;

/// One training image with its instance annotations (full-frame binary mask
/// per instance).
#[derive(Debug, Clone)]
pub struct SegSample {
    pub image: Array3<f32>,
    pub gt_boxes: Vec<Box2D>,
    pub gt_masks: Vec<Array2<u8>>,
}

impl SegSample {
    /// Builds a sample with zero or one instance from a whole-organ mask:
    /// the instance box is the tight bounding box of the nonzero pixels.
    pub fn from_mask(image: Array3<f32>, mask: &Array2<u8>) -> Result<Self> {
        let (_, h, w) = image.dim();
        if mask.dim() != (h, w) {
            return Err(Error::ShapeMismatch((h, w), mask.dim()));
        }
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for ((r, c), &v) in mask.indexed_iter() {
            if v != 0 {
                bounds = Some(match bounds {
                    None => (r, c, r, c),
                    Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                });
            }
        }
        let (gt_boxes, gt_masks) = match bounds {
            Some((r0, c0, r1, c1)) => (
                vec![Box2D::new(
                    c0 as f32,
                    r0 as f32,
                    (c1 + 1) as f32,
                    (r1 + 1) as f32,
                )],
                vec![mask.mapv(|v| (v != 0) as u8)],
            ),
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            image,
            gt_boxes,
            gt_masks,
        })
    }
}

/// Nearest-neighbor crop of a full-frame mask into an `size x size` grid
/// over `b`, used as the mask head target.
pub fn mask_target(gt: &Array2<u8>, b: &Box2D, size: usize) -> Array2<f32> {
    let (h, w) = gt.dim();
    let (bh, bw) = (b.height(), b.width());
    Array2::from_shape_fn((size, size), |(i, j)| {
        let y = b.y1 + (i as f32 + 0.5) / size as f32 * bh;
        let x = b.x1 + (j as f32 + 0.5) / size as f32 * bw;
        let r = (y.floor() as isize).clamp(0, h as isize - 1) as usize;
        let c = (x.floor() as isize).clamp(0, w as isize - 1) as usize;
        (gt[(r, c)] != 0) as u8 as f32
    })
}

fn sample_balanced(
    pos: &mut Vec<usize>,
    neg: &mut Vec<usize>,
    batch: usize,
    pos_fraction: f32,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    pos.shuffle(rng);
    neg.shuffle(rng);
    let n_pos = pos.len().min((batch as f32 * pos_fraction).round() as usize);
    let n_neg = neg.len().min(batch - n_pos);
    (pos[..n_pos].to_vec(), neg[..n_neg].to_vec())
}

fn index_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let ids: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
    let ids = Tensor::from_vec(ids, idx.len(), t.device())?;
    Ok(t.index_select(&ids, 0)?)
}

/// Full multi-task loss for one image. `rng` drives anchor and RoI
/// sampling, so a fixed seed gives a reproducible loss sequence.
pub fn multitask_loss(
    det: &Detector,
    sample: &SegSample,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, LossBreakdown)> {
    let cfg = &det.cfg;
    let device = det.device().clone();
    let x = det.image_tensor(&sample.image)?;
    let pyramid = det.features(&x)?;
    let (obj_t, delta_t) = det.rpn_forward(&pyramid)?;
    let anchors = det.anchors()?;

    // region proposal losses
    let matched = match_anchors(&anchors, &sample.gt_boxes, cfg.rpn_pos_iou, cfg.rpn_neg_iou);
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &l) in matched.labels.iter().enumerate() {
        match l {
            MatchLabel::Positive => pos.push(i),
            MatchLabel::Negative => neg.push(i),
            MatchLabel::Ignore => {}
        }
    }
    let (pos, neg) = sample_balanced(&mut pos, &mut neg, cfg.rpn_batch, cfg.rpn_pos_fraction, rng);
    let sampled: Vec<usize> = pos.iter().chain(neg.iter()).copied().collect();
    let rpn_cls = if sampled.is_empty() {
        Tensor::zeros((), DType::F32, &device)?
    } else {
        let logits = index_rows(&obj_t, &sampled)?;
        let targets: Vec<f32> = (0..sampled.len())
            .map(|i| (i < pos.len()) as u8 as f32)
            .collect();
        let targets = Tensor::from_vec(targets, sampled.len(), &device)?;
        binary_ce_logits(&logits, &targets)?
    };
    let rpn_box = if pos.is_empty() {
        Tensor::zeros((), DType::F32, &device)?
    } else {
        let pred = index_rows(&delta_t, &pos)?;
        let targets: Vec<f32> = pos
            .iter()
            .flat_map(|&i| matched.targets[i])
            .collect();
        let targets = Tensor::from_vec(targets, (pos.len(), 4), &device)?;
        smooth_l1(&pred, &targets)?
    };

    // proposals for the RoI heads; gt boxes are appended so the heads see
    // positives from the first step
    let obj_scores: Vec<f32> = obj_t.detach().to_vec1()?;
    let deltas_flat: Vec<f32> = delta_t.detach().flatten_all()?.to_vec1()?;
    let mut proposals = rpn_proposals(det, &anchors, &obj_scores, &deltas_flat)?;
    proposals.extend(sample.gt_boxes.iter().copied());

    // label each proposal against the ground truth
    let mut fg: Vec<(usize, usize)> = Vec::new(); // (proposal, gt)
    let mut bg: Vec<usize> = Vec::new();
    for (pi, p) in proposals.iter().enumerate() {
        let mut best = 0.0f32;
        let mut best_gt = 0usize;
        for (gi, g) in sample.gt_boxes.iter().enumerate() {
            let v = iou(p, g);
            if v > best {
                best = v;
                best_gt = gi;
            }
        }
        if best >= cfg.head_pos_iou {
            fg.push((pi, best_gt));
        } else {
            bg.push(pi);
        }
    }
    let mut fg_idx: Vec<usize> = (0..fg.len()).collect();
    let (fg_pick, bg_pick) =
        sample_balanced(&mut fg_idx, &mut bg, cfg.roi_batch, cfg.roi_pos_fraction, rng);
    let fg: Vec<(usize, usize)> = fg_pick.iter().map(|&k| fg[k]).collect();

    let zero = Tensor::zeros((), DType::F32, &device)?;
    let (roi_cls, roi_box, mask_loss) = if fg.is_empty() && bg_pick.is_empty() {
        (zero.clone(), zero.clone(), zero.clone())
    } else {
        let mut roi_boxes: Vec<Box2D> = fg.iter().map(|&(pi, _)| proposals[pi]).collect();
        roi_boxes.extend(bg_pick.iter().map(|&pi| proposals[pi]));
        let mut labels: Vec<u32> = vec![1; fg.len()];
        labels.extend(std::iter::repeat(0).take(bg_pick.len()));

        let pooled = det.pool(&pyramid, &roi_boxes, cfg.box_pool)?;
        let (cls_logits, reg) = det.box_head(&pooled)?;
        let roi_cls = cross_entropy_logits(&cls_logits, &labels)?;

        let roi_box = if fg.is_empty() {
            zero.clone()
        } else {
            let idx: Vec<usize> = (0..fg.len()).collect();
            let pred = index_rows(&reg, &idx)?;
            let targets: Vec<f32> = fg
                .iter()
                .flat_map(|&(pi, gi)| encode_deltas(&sample.gt_boxes[gi], &proposals[pi]))
                .collect();
            let targets = Tensor::from_vec(targets, (fg.len(), 4), &device)?;
            smooth_l1(&pred, &targets)?
        };

        let mask_loss = if fg.is_empty() {
            zero.clone()
        } else {
            let fg_boxes: Vec<Box2D> = fg.iter().map(|&(pi, _)| proposals[pi]).collect();
            let mask_pooled = det.pool(&pyramid, &fg_boxes, cfg.mask_pool)?;
            let logits = det.mask_head(&mask_pooled)?;
            let probs = candle_nn::ops::sigmoid(&logits)?;
            let mut acc = zero.clone();
            for (k, &(pi, gi)) in fg.iter().enumerate() {
                let target = mask_target(&sample.gt_masks[gi], &proposals[pi], cfg.mask_size);
                let tdata: Vec<f32> = target.iter().copied().collect();
                let t = Tensor::from_vec(tdata, (cfg.mask_size, cfg.mask_size), &device)?;
                let p = probs
                    .narrow(0, k, 1)?
                    .reshape((cfg.mask_size, cfg.mask_size))?;
                acc = (acc + dice_loss_t(&p, &t, 1e-6)?)?;
            }
            (acc / fg.len() as f64)?
        };
        (roi_cls, roi_box, mask_loss)
    };

    let l_cls = (&rpn_cls + &roi_cls)?;
    let l_box = (&rpn_box + &roi_box)?;
    let breakdown = LossBreakdown {
        l_cls: l_cls.to_dtype(DType::F64)?.to_scalar()?,
        l_box: l_box.to_dtype(DType::F64)?.to_scalar()?,
        l_mask: mask_loss.to_dtype(DType::F64)?.to_scalar()?,
    };
    let total = ((l_cls + l_box)? + mask_loss)?;
    Ok((total, breakdown))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SegTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// CSV log with per-epoch mean train/validation losses.
    pub log_path: Option<PathBuf>,
    /// Latest weights, written every epoch (`.opt` state alongside).
    pub checkpoint_path: Option<PathBuf>,
    /// Weights of the epoch with the lowest validation total.
    pub best_path: Option<PathBuf>,
    pub resume_from: Option<PathBuf>,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
            log_path: None,
            checkpoint_path: None,
            best_path: None,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct SegTrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

fn mean_breakdown(items: &[LossBreakdown]) -> LossBreakdown {
    if items.is_empty() {
        return LossBreakdown::default();
    }
    let n = items.len() as f64;
    LossBreakdown {
        l_cls: items.iter().map(|b| b.l_cls).sum::<f64>() / n,
        l_box: items.iter().map(|b| b.l_box).sum::<f64>() / n,
        l_mask: items.iter().map(|b| b.l_mask).sum::<f64>() / n,
    }
}

fn opt_state_path(weights: &std::path::Path) -> PathBuf {
    weights.with_extension("opt.safetensors")
}

/// Trains the detector; validation samples only score the model. Returns
/// per-epoch loss means and the best-validation epoch.
pub fn train_seg(
    det: &mut Detector,
    train: &[SegSample],
    val: &[SegSample],
    cfg: &SegTrainConfig,
) -> Result<SegTrainReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("train_seg".into()));
    }
    let mut opt = Adam::new(&det.varmap, cfg.learning_rate)?;
    if let Some(resume) = &cfg.resume_from {
        det.varmap.load(resume)?;
        let state = opt_state_path(resume);
        if state.is_file() {
            opt.load_state(&state)?;
        }
    }
    let mut log = match &cfg.log_path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            writeln!(
                f,
                "epoch,train_cls,train_box,train_mask,train_total,val_cls,val_box,val_mask,val_total"
            )
            .map_err(|e| Error::io(p, e))?;
            Some((f, p.clone()))
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SegTrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: None,
    };
    let mut best_total = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut train_losses = Vec::with_capacity(train.len());
        for &i in &order {
            let (total, breakdown) = multitask_loss(det, &train[i], &mut rng)?;
            if cfg.learning_rate != 0.0 {
                let grads = total.backward()?;
                opt.step(&grads)?;
            }
            train_losses.push(breakdown);
        }
        // validation uses a per-epoch rng so the scores do not perturb the
        // training stream
        let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_add(1));
        let mut val_losses = Vec::with_capacity(val.len());
        for sample in val {
            let (_, breakdown) = multitask_loss(det, sample, &mut val_rng)?;
            val_losses.push(breakdown);
        }
        let rec = EpochRecord {
            epoch,
            train: mean_breakdown(&train_losses),
            val: mean_breakdown(&val_losses),
        };
        if let Some((f, p)) = &mut log {
            writeln!(
                f,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                epoch,
                rec.train.l_cls,
                rec.train.l_box,
                rec.train.l_mask,
                rec.train.total(),
                rec.val.l_cls,
                rec.val.l_box,
                rec.val.l_mask,
                rec.val.total()
            )
            .map_err(|e| Error::io(p.clone(), e))?;
        }
        if let Some(ckpt) = &cfg.checkpoint_path {
            det.save(ckpt)?;
            opt.save_state(&opt_state_path(ckpt))?;
        }
        let selector = if val.is_empty() {
            rec.train.total()
        } else {
            rec.val.total()
        };
        if selector < best_total {
            best_total = selector;
            report.best_epoch = Some(epoch);
            if let Some(best) = &cfg.best_path {
                det.save(best)?;
            }
        }
        report.epochs.push(rec);
    }
    Ok(report)
}

//! Inference: RPN proposals, scored and refined boxes, and full-frame
//! instance masks pasted from the mask head output.

use candle_core::Tensor;
use ndarray::{Array2, Array3};

use super::geometry::{decode_deltas, nms, Box2D};
use super::model::Detector;
use crate::error::Result;

/// One detected instance with its full-frame binary mask.
#[derive(Debug, Clone)]
pub struct InstanceDetection {
    pub box2d: Box2D,
    /// Object class, 1-based (0 is background and never emitted).
    pub class_id: usize,
    pub score: f32,
    pub mask: Array2<u8>,
}

/// Decodes, clips and suppresses RPN outputs into proposal boxes.
/// `deltas` is the flattened `(n_anchors, 4)` regression output.
pub(super) fn rpn_proposals(
    det: &Detector,
    anchors: &[Box2D],
    scores: &[f32],
    deltas: &[f32],
) -> Result<Vec<Box2D>> {
    let cfg = &det.cfg;
    let size = cfg.image_size as f32;
    let mut order: Vec<usize> = (0..anchors.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(cfg.pre_nms_top_n);
    let mut boxes = Vec::with_capacity(order.len());
    let mut box_scores = Vec::with_capacity(order.len());
    for &i in &order {
        let d = [
            deltas[i * 4],
            deltas[i * 4 + 1],
            deltas[i * 4 + 2],
            deltas[i * 4 + 3],
        ];
        let b = decode_deltas(&d, &anchors[i]).clip(size, size);
        if b.width() >= 1.0 && b.height() >= 1.0 {
            boxes.push(b);
            box_scores.push(scores[i]);
        }
    }
    let kept = nms(&boxes, &box_scores, cfg.rpn_nms_iou)?;
    Ok(kept
        .into_iter()
        .take(cfg.post_nms_top_n)
        .map(|i| boxes[i])
        .collect())
}

/// Resizes a `S x S` probability grid onto the box footprint in a
/// full-frame mask, thresholding at 0.5.
fn paste_mask(probs: &Array2<f32>, b: &Box2D, frame: (usize, usize)) -> Array2<u8> {
    let (h, w) = frame;
    let s = probs.dim().0;
    let mut out = Array2::<u8>::zeros((h, w));
    let r0 = (b.y1.floor().max(0.0)) as usize;
    let r1 = (b.y2.ceil().min(h as f32)) as usize;
    let c0 = (b.x1.floor().max(0.0)) as usize;
    let c1 = (b.x2.ceil().min(w as f32)) as usize;
    let (bh, bw) = (b.height(), b.width());
    for r in r0..r1 {
        for c in c0..c1 {
            // pixel center mapped into mask-grid coordinates
            let y = ((r as f32 + 0.5 - b.y1) / bh * s as f32 - 0.5)
                .clamp(0.0, (s - 1) as f32);
            let x = ((c as f32 + 0.5 - b.x1) / bw * s as f32 - 0.5)
                .clamp(0.0, (s - 1) as f32);
            let (i0, j0) = (y.floor() as usize, x.floor() as usize);
            let (i1, j1) = ((i0 + 1).min(s - 1), (j0 + 1).min(s - 1));
            let (fy, fx) = (y - i0 as f32, x - j0 as f32);
            let v = probs[(i0, j0)] * (1.0 - fy) * (1.0 - fx)
                + probs[(i0, j1)] * (1.0 - fy) * fx
                + probs[(i1, j0)] * fy * (1.0 - fx)
                + probs[(i1, j1)] * fy * fx;
            if v >= 0.5 {
                out[(r, c)] = 1;
            }
        }
    }
    out
}

/// Runs the detector on a `(3, H, W)` image and returns scored instances
/// above the configured score threshold, after per-class suppression.
pub fn detect(det: &Detector, image: &Array3<f32>) -> Result<Vec<InstanceDetection>> {
    let cfg = &det.cfg;
    let (_, h, w) = image.dim();
    let x = det.image_tensor(image)?;
    let pyramid = det.features(&x)?;
    let (obj_t, delta_t) = det.rpn_forward(&pyramid)?;
    let anchors = det.anchors()?;
    let scores: Vec<f32> = obj_t.to_vec1()?;
    let deltas: Vec<f32> = delta_t.flatten_all()?.to_vec1()?;
    let proposals = rpn_proposals(det, &anchors, &scores, &deltas)?;
    if proposals.is_empty() {
        return Ok(Vec::new());
    }

    let pooled = det.pool(&pyramid, &proposals, cfg.box_pool)?;
    let (cls_logits, reg) = det.box_head(&pooled)?;
    let probs: Vec<Vec<f32>> =
        candle_nn::ops::softmax(&cls_logits, candle_core::D::Minus1)?.to_vec2()?;
    let reg: Vec<f32> = reg.flatten_all()?.to_vec1()?;

    let size = cfg.image_size as f32;
    let mut detections: Vec<(Box2D, usize, f32)> = Vec::new();
    for class_id in 1..cfg.num_classes {
        let mut boxes = Vec::new();
        let mut class_scores = Vec::new();
        for (i, p) in proposals.iter().enumerate() {
            let score = probs[i][class_id];
            if score < cfg.score_threshold {
                continue;
            }
            let d = [reg[i * 4], reg[i * 4 + 1], reg[i * 4 + 2], reg[i * 4 + 3]];
            let b = decode_deltas(&d, p).clip(size, size);
            if b.is_valid() {
                boxes.push(b);
                class_scores.push(score);
            }
        }
        for k in nms(&boxes, &class_scores, cfg.head_nms_iou)? {
            detections.push((boxes[k], class_id, class_scores[k]));
        }
    }
    detections.sort_by(|a, b| b.2.total_cmp(&a.2));
    detections.truncate(cfg.max_detections);
    if detections.is_empty() {
        return Ok(Vec::new());
    }

    let final_boxes: Vec<Box2D> = detections.iter().map(|d| d.0).collect();
    let mask_pooled = det.pool(&pyramid, &final_boxes, cfg.mask_pool)?;
    let mask_logits = det.mask_head(&mask_pooled)?;
    let mask_probs = candle_nn::ops::sigmoid(&mask_logits)?;
    let mut out = Vec::with_capacity(detections.len());
    for (k, &(b, class_id, score)) in detections.iter().enumerate() {
        let grid: Tensor = mask_probs
            .narrow(0, k, 1)?
            .reshape((cfg.mask_size, cfg.mask_size))?;
        let grid = crate::nn::array2_from_tensor(&grid)?;
        out.push(InstanceDetection {
            box2d: b,
            class_id,
            score,
            mask: paste_mask(&grid, &b, (h, w)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskrcnn::model::{build_detector, DetectorConfig};

    #[test]
    fn paste_mask_full_probability_fills_box() {
        let probs = Array2::from_elem((8, 8), 1.0f32);
        let b = Box2D::new(2.0, 3.0, 10.0, 9.0);
        let mask = paste_mask(&probs, &b, (16, 16));
        for ((r, c), &v) in mask.indexed_iter() {
            let inside = r >= 3 && r < 9 && c >= 2 && c < 10;
            assert_eq!(v == 1, inside, "at ({r}, {c})");
        }
    }

    #[test]
    fn paste_mask_clips_to_frame() {
        let probs = Array2::from_elem((4, 4), 1.0f32);
        let b = Box2D::new(-3.0, -2.0, 5.0, 6.0);
        let mask = paste_mask(&probs, &b, (8, 8));
        assert!(mask.indexed_iter().all(|((r, c), &v)| {
            v == 0 || (r < 6 && c < 5)
        }));
        assert!(mask.iter().any(|&v| v == 1));
    }

    #[test]
    fn untrained_detector_runs_and_caps_detections() {
        let cfg = DetectorConfig::toy(128);
        let det = build_detector(&cfg, 2).unwrap();
        let image = Array3::from_elem((3, 128, 128), 0.4f32);
        let dets = detect(&det, &image).unwrap();
        assert!(dets.len() <= cfg.max_detections);
        for d in &dets {
            assert!(d.score >= cfg.score_threshold);
            assert_eq!(d.mask.dim(), (128, 128));
            assert!(d.class_id >= 1 && d.class_id < cfg.num_classes);
        }
    }
}

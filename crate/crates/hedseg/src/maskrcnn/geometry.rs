//! Boxes, anchors, IoU, delta coding, matching, and non-maximum suppression.

use crate::error::{Error, Result};

/// Axis-aligned box in half-open pixel coordinates, `x2 > x1`, `y2 > y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl Box2D {
    pub fn new(x1: f32, y1: f32, x2: f32, y2: f32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f32 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f32, f32) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn clip(&self, width: f32, height: f32) -> Box2D {
        Box2D {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x2 > self.x1 && self.y2 > self.y1
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &Box2D, b: &Box2D) -> f32 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Center/log-size regression targets `(dx, dy, dw, dh)` mapping `anchor`
/// onto `gt`.
pub fn encode_deltas(gt: &Box2D, anchor: &Box2D) -> [f32; 4] {
    // f64 internally so encode/decode round-trips to f32 precision
    let (acx, acy) = anchor.center();
    let (gcx, gcy) = gt.center();
    let (aw, ah) = (anchor.width() as f64, anchor.height() as f64);
    [
        ((gcx as f64 - acx as f64) / aw) as f32,
        ((gcy as f64 - acy as f64) / ah) as f32,
        (gt.width() as f64 / aw).ln() as f32,
        (gt.height() as f64 / ah).ln() as f32,
    ]
}

/// Inverse of [`encode_deltas`]: applies deltas to an anchor.
pub fn decode_deltas(deltas: &[f32; 4], anchor: &Box2D) -> Box2D {
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width() as f64, anchor.height() as f64);
    let cx = acx as f64 + deltas[0] as f64 * aw;
    let cy = acy as f64 + deltas[1] as f64 * ah;
    let w = aw * (deltas[2] as f64).exp();
    let h = ah * (deltas[3] as f64).exp();
    Box2D {
        x1: (cx - w / 2.0) as f32,
        y1: (cy - h / 2.0) as f32,
        x2: (cx + w / 2.0) as f32,
        y2: (cy + h / 2.0) as f32,
    }
}

/// Anchor layout for one pyramid level.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AnchorLevel {
    pub stride: usize,
    /// Anchor side lengths (square-root of area) in pixels.
    pub scales: Vec<f32>,
}

/// Generates anchors for every feature cell of every level, cell-major
/// within a level (row, column, then ratio x scale per cell).
///
/// The image size must be divisible by the coarsest stride.
pub fn generate_anchors(
    image_size: (usize, usize),
    levels: &[AnchorLevel],
    ratios: &[f32],
) -> Result<Vec<Box2D>> {
    let (h, w) = image_size;
    for level in levels {
        if level.stride == 0 {
            return Err(Error::InvalidConfig("anchor stride must be > 0".into()));
        }
    }
    let coarsest = levels.iter().map(|l| l.stride).max().unwrap_or(1);
    if h % coarsest != 0 || w % coarsest != 0 {
        return Err(Error::InvalidConfig(format!(
            "image size {h}x{w} not divisible by coarsest stride {coarsest}"
        )));
    }
    let mut anchors = Vec::new();
    for level in levels {
        let s = level.stride;
        let (fh, fw) = (h / s, w / s);
        for i in 0..fh {
            for j in 0..fw {
                let cy = (i as f32 + 0.5) * s as f32;
                let cx = (j as f32 + 0.5) * s as f32;
                for &ratio in ratios {
                    for &scale in &level.scales {
                        // ratio = height / width, preserving area scale^2
                        let aw = scale / ratio.sqrt();
                        let ah = scale * ratio.sqrt();
                        anchors.push(Box2D {
                            x1: cx - aw / 2.0,
                            y1: cy - ah / 2.0,
                            x2: cx + aw / 2.0,
                            y2: cy + ah / 2.0,
                        });
                    }
                }
            }
        }
    }
    Ok(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    Positive,
    Negative,
    Ignore,
}

/// Per-anchor matching result.
#[derive(Debug, Clone)]
pub struct AnchorMatch {
    pub labels: Vec<MatchLabel>,
    /// Index of the matched ground-truth box for positive anchors.
    pub gt_index: Vec<usize>,
    /// Regression targets for positive anchors (zeros elsewhere).
    pub targets: Vec<[f32; 4]>,
}

/// Labels each anchor positive (IoU >= `pos_iou`, or argmax anchor for some
/// ground-truth box), negative (max IoU < `neg_iou`), or ignored.
pub fn match_anchors(
    anchors: &[Box2D],
    gt_boxes: &[Box2D],
    pos_iou: f32,
    neg_iou: f32,
) -> AnchorMatch {
    let n = anchors.len();
    let mut labels = vec![MatchLabel::Negative; n];
    let mut gt_index = vec![0usize; n];
    let mut targets = vec![[0.0f32; 4]; n];
    if gt_boxes.is_empty() {
        return AnchorMatch {
            labels,
            gt_index,
            targets,
        };
    }
    let mut best_iou = vec![0.0f32; n];
    let mut best_gt = vec![0usize; n];
    let mut gt_best_iou = vec![0.0f32; gt_boxes.len()];
    for (ai, anchor) in anchors.iter().enumerate() {
        for (gi, gt) in gt_boxes.iter().enumerate() {
            let v = iou(anchor, gt);
            if v > best_iou[ai] {
                best_iou[ai] = v;
                best_gt[ai] = gi;
            }
            if v > gt_best_iou[gi] {
                gt_best_iou[gi] = v;
            }
        }
    }
    for ai in 0..n {
        labels[ai] = if best_iou[ai] >= pos_iou {
            MatchLabel::Positive
        } else if best_iou[ai] < neg_iou {
            MatchLabel::Negative
        } else {
            MatchLabel::Ignore
        };
    }
    // Force the best anchor for each gt positive so no gt goes unmatched.
    for (gi, &top) in gt_best_iou.iter().enumerate() {
        if top <= 0.0 {
            continue;
        }
        for (ai, anchor) in anchors.iter().enumerate() {
            if (iou(anchor, &gt_boxes[gi]) - top).abs() < 1e-6 {
                labels[ai] = MatchLabel::Positive;
                best_gt[ai] = gi;
            }
        }
    }
    for ai in 0..n {
        if labels[ai] == MatchLabel::Positive {
            gt_index[ai] = best_gt[ai];
            targets[ai] = encode_deltas(&gt_boxes[best_gt[ai]], &anchors[ai]);
        }
    }
    AnchorMatch {
        labels,
        gt_index,
        targets,
    }
}

/// Greedy non-maximum suppression; returns kept indices in descending score
/// order, ties broken by lower index.
pub fn nms(boxes: &[Box2D], scores: &[f32], iou_thresh: f32) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(Error::InvalidConfig(format!(
            "nms: {} boxes vs {} scores",
            boxes.len(),
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| iou(&boxes[i], &boxes[k]) <= iou_thresh) {
            kept.push(i);
        }
    }
    Ok(kept)
}

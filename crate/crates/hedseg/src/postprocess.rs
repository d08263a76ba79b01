//! Detection clean-up: keep the best liver detection, drop satellite
//! components, fill enclosed holes.

use ndarray::Array2;

use crate::maskrcnn::InstanceDetection;

/// A cleaned per-slice liver mask with the score of the detection it came
/// from (`None` when there was no detection).
#[derive(Debug, Clone)]
pub struct FinalMask {
    pub mask: Array2<u8>,
    pub score: Option<f32>,
}

/// Which refinement steps to apply; each is individually toggleable for
/// ablation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PostprocessConfig {
    pub keep_largest_component: bool,
    pub fill_holes: bool,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            keep_largest_component: true,
            fill_holes: true,
        }
    }
}

/// Keeps only the largest 8-connected foreground component. Empty input
/// stays empty; ties go to the component found first in row-major order.
pub fn largest_component(mask: &Array2<u8>) -> Array2<u8> {
    let (h, w) = mask.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let mut sizes: Vec<usize> = vec![0]; // label 0 = background
    let mut stack = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask[(r, c)] == 0 || labels[(r, c)] != 0 {
                continue;
            }
            let label = sizes.len() as u32;
            sizes.push(0);
            labels[(r, c)] = label;
            stack.push((r, c));
            while let Some((pr, pc)) = stack.pop() {
                sizes[label as usize] += 1;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (pr as i64 + dr, pc as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if mask[(nr, nc)] != 0 && labels[(nr, nc)] == 0 {
                            labels[(nr, nc)] = label;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
        }
    }
    let mut best: Option<u32> = None;
    for (l, &s) in sizes.iter().enumerate().skip(1) {
        if best.map_or(true, |b| s > sizes[b as usize]) {
            best = Some(l as u32);
        }
    }
    match best {
        Some(best) => labels.mapv(|l| (l == best) as u8),
        None => Array2::zeros((h, w)),
    }
}

/// Fills background regions not connected (4-connectivity) to the image
/// border. Boundary-touching background is never treated as a hole.
pub fn fill_holes(mask: &Array2<u8>) -> Array2<u8> {
    let (h, w) = mask.dim();
    let mut outside = Array2::<u8>::zeros((h, w));
    let mut stack = Vec::new();
    for r in 0..h {
        for c in [0, w - 1] {
            if mask[(r, c)] == 0 && outside[(r, c)] == 0 {
                outside[(r, c)] = 1;
                stack.push((r, c));
            }
        }
    }
    for c in 0..w {
        for r in [0, h - 1] {
            if mask[(r, c)] == 0 && outside[(r, c)] == 0 {
                outside[(r, c)] = 1;
                stack.push((r, c));
            }
        }
    }
    while let Some((r, c)) = stack.pop() {
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if mask[(nr, nc)] == 0 && outside[(nr, nc)] == 0 {
                outside[(nr, nc)] = 1;
                stack.push((nr, nc));
            }
        }
    }
    Array2::from_shape_fn((h, w), |(r, c)| {
        if mask[(r, c)] != 0 || outside[(r, c)] == 0 {
            1
        } else {
            0
        }
    })
}

/// Selects the highest-score liver detection and refines its mask. With no
/// detections the result is empty.
pub fn refine(detections: &[InstanceDetection], shape: (usize, usize), cfg: &PostprocessConfig) -> FinalMask {
    let best = detections
        .iter()
        .max_by(|a, b| a.score.total_cmp(&b.score));
    let Some(best) = best else {
        return FinalMask {
            mask: Array2::zeros(shape),
            score: None,
        };
    };
    let mut mask = best.mask.clone();
    if cfg.keep_largest_component {
        mask = largest_component(&mask);
    }
    if cfg.fill_holes {
        mask = fill_holes(&mask);
    }
    FinalMask {
        mask,
        score: Some(best.score),
    }
}

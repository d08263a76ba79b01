//! Modality-specific contrast enhancement.
//!
//! CT slices go through contrast-limited adaptive histogram equalization
//! followed by a pixelwise sigmoid, with a final shift that restores the
//! input's mean brightness. MR slices are sharpened with an unsharp mask.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{Modality, Slice};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CtEnhanceConfig {
    /// Histogram clip limit relative to the uniform bin count.
    pub clahe_clip_limit: f64,
    pub clahe_tiles: (usize, usize),
    pub sigmoid_gain: f64,
    /// Sigmoid midpoint in `[0,1]`; `None` means the input mean.
    pub sigmoid_center: Option<f64>,
}

impl Default for CtEnhanceConfig {
    fn default() -> Self {
        Self {
            clahe_clip_limit: 2.0,
            clahe_tiles: (8, 8),
            sigmoid_gain: 10.0,
            sigmoid_center: None,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MrEnhanceConfig {
    pub blur_sigma: f64,
    pub amount: f64,
}

impl Default for MrEnhanceConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 2.0,
            amount: 1.0,
        }
    }
}

const CLAHE_BINS: usize = 256;

/// Contrast-limited adaptive histogram equalization.
///
/// The image is divided into a `tiles` grid. Each tile's 256-bin histogram is
/// clipped at `clip_limit * n / 256` (n = tile pixel count), the excess is
/// redistributed uniformly, and the tile mapping is the midpoint CDF
/// `m(b) = (cdf(b) - hist(b)/2) / n`. Per-pixel output bilinearly
/// interpolates between the mappings of the four nearest tile centers. A
/// tile with zero intensity range maps pixels to themselves, so a constant
/// image is returned unchanged.
pub fn clahe(pixels: &Array2<f32>, clip_limit: f64, tiles: (usize, usize)) -> Result<Array2<f32>> {
    if clip_limit <= 0.0 {
        return Err(Error::InvalidConfig("clahe clip_limit must be > 0".into()));
    }
    let (h, w) = pixels.dim();
    let (tr, tc) = tiles;
    if tr == 0 || tc == 0 || tr > h || tc > w {
        return Err(Error::InvalidConfig(format!(
            "clahe tiles {tiles:?} invalid for {h}x{w} image"
        )));
    }

    let tile_h = h.div_ceil(tr);
    let tile_w = w.div_ceil(tc);

    // Per-tile mapping table, or None for a degenerate (constant) tile.
    struct Tile {
        center: (f64, f64),
        mapping: Option<Vec<f64>>,
    }
    let mut grid: Vec<Tile> = Vec::with_capacity(tr * tc);
    for ti in 0..tr {
        for tj in 0..tc {
            let r0 = ti * tile_h;
            let r1 = ((ti + 1) * tile_h).min(h);
            let c0 = tj * tile_w;
            let c1 = ((tj + 1) * tile_w).min(w);
            let view = pixels.slice(ndarray::s![r0..r1, c0..c1]);
            let n = view.len();
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            let mut hist = vec![0.0f64; CLAHE_BINS];
            for &v in view.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
                hist[bin_of(v)] += 1.0;
            }
            let mapping = if n == 0 || lo >= hi {
                None
            } else {
                let threshold = clip_limit * n as f64 / CLAHE_BINS as f64;
                let mut excess = 0.0;
                for b in hist.iter_mut() {
                    if *b > threshold {
                        excess += *b - threshold;
                        *b = threshold;
                    }
                }
                let bonus = excess / CLAHE_BINS as f64;
                let mut cdf = 0.0;
                let mut map = vec![0.0f64; CLAHE_BINS];
                for (b, m) in hist.iter().zip(map.iter_mut()) {
                    let count = b + bonus;
                    *m = (cdf + count / 2.0) / n as f64;
                    cdf += count;
                }
                Some(map)
            };
            grid.push(Tile {
                center: ((r0 + r1) as f64 / 2.0, (c0 + c1) as f64 / 2.0),
                mapping,
            });
        }
    }

    let tile_value = |ti: usize, tj: usize, x: f32| -> f64 {
        match &grid[ti * tc + tj].mapping {
            Some(map) => map[bin_of(x)],
            None => x as f64,
        }
    };

    let mut out = Array2::<f32>::zeros((h, w));
    for ((r, c), o) in out.indexed_iter_mut() {
        let x = pixels[(r, c)];
        // Bracketing tile rows/cols by center position, clamped at the hull.
        let (i0, i1, wy) = bracket(r as f64 + 0.5, tr, |i| grid[i * tc].center.0);
        let (j0, j1, wx) = bracket(c as f64 + 0.5, tc, |j| grid[j].center.1);
        let v00 = tile_value(i0, j0, x);
        let v01 = tile_value(i0, j1, x);
        let v10 = tile_value(i1, j0, x);
        let v11 = tile_value(i1, j1, x);
        let top = v00 * (1.0 - wx) + v01 * wx;
        let bot = v10 * (1.0 - wx) + v11 * wx;
        *o = (top * (1.0 - wy) + bot * wy).clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

fn bin_of(v: f32) -> usize {
    ((v as f64 * CLAHE_BINS as f64) as usize).min(CLAHE_BINS - 1)
}

/// Finds bracketing tile indices along one axis and the interpolation weight
/// toward the second index. Positions outside the tile-center hull clamp to
/// the nearest tile.
fn bracket(pos: f64, count: usize, center: impl Fn(usize) -> f64) -> (usize, usize, f64) {
    if pos <= center(0) {
        return (0, 0, 0.0);
    }
    if pos >= center(count - 1) {
        return (count - 1, count - 1, 0.0);
    }
    let mut i = 0;
    while center(i + 1) < pos {
        i += 1;
    }
    let c0 = center(i);
    let c1 = center(i + 1);
    (i, i + 1, (pos - c0) / (c1 - c0))
}

/// Separable Gaussian blur with a symmetric-reflection boundary and the
/// kernel truncated at `4*sigma`.
pub fn gaussian_blur(pixels: &Array2<f32>, sigma: f64) -> Array2<f32> {
    assert!(sigma > 0.0, "blur sigma must be > 0");
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0f64;
    for k in -radius..=radius {
        let v = (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in kernel.iter_mut() {
        *v /= sum;
    }

    let (h, w) = pixels.dim();
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };

    let mut tmp = Array2::<f32>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0f64;
            for (ki, kv) in kernel.iter().enumerate() {
                let cc = reflect(c as isize + ki as isize - radius, w as isize);
                acc += kv * pixels[(r, cc)] as f64;
            }
            tmp[(r, c)] = acc as f32;
        }
    }
    let mut out = Array2::<f32>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0f64;
            for (ki, kv) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + ki as isize - radius, h as isize);
                acc += kv * tmp[(rr, c)] as f64;
            }
            out[(r, c)] = acc as f32;
        }
    }
    out
}

/// Unsharp mask: `clamp(in + amount * (in - blur(in)), 0, 1)`.
pub fn unsharp(pixels: &Array2<f32>, blur_sigma: f64, amount: f64) -> Array2<f32> {
    if amount == 0.0 {
        return pixels.clone();
    }
    let blurred = gaussian_blur(pixels, blur_sigma);
    let mut out = pixels.clone();
    for (o, &b) in out.iter_mut().zip(blurred.iter()) {
        *o = (*o + amount as f32 * (*o - b)).clamp(0.0, 1.0);
    }
    out
}

/// CT enhancement: CLAHE, pixelwise sigmoid, then a shift that restores the
/// input's mean brightness to within 0.02 after clamping to `[0,1]`.
pub fn enhance_ct(slice: &Slice, cfg: &CtEnhanceConfig) -> Result<Slice> {
    if slice.modality != Modality::Ct {
        return Err(Error::InvalidConfig(format!(
            "enhance_ct requires a CT slice, got {}",
            slice.modality
        )));
    }
    let input_mean = mean(&slice.pixels);
    let equalized = clahe(&slice.pixels, cfg.clahe_clip_limit, cfg.clahe_tiles)?;
    let center = cfg.sigmoid_center.unwrap_or(input_mean);
    let gain = cfg.sigmoid_gain;
    let squashed = equalized.mapv(|v| (1.0 / (1.0 + (-gain * (v as f64 - center)).exp())) as f32);
    let restored = restore_mean(&squashed, input_mean);
    Ok(Slice {
        pixels: restored,
        ..slice.clone()
    })
}

/// MR enhancement: unsharp masking.
pub fn enhance_mr(slice: &Slice, cfg: &MrEnhanceConfig) -> Result<Slice> {
    if !slice.modality.is_mr() {
        return Err(Error::InvalidConfig(format!(
            "enhance_mr requires an MR slice, got {}",
            slice.modality
        )));
    }
    Ok(Slice {
        pixels: unsharp(&slice.pixels, cfg.blur_sigma, cfg.amount),
        ..slice.clone()
    })
}

pub fn mean(pixels: &Array2<f32>) -> f64 {
    pixels.iter().map(|&v| v as f64).sum::<f64>() / pixels.len() as f64
}

/// Shifts the image so that `mean(clamp(img + s, 0, 1))` equals the target.
/// The clamped mean is continuous and nondecreasing in the shift, so a
/// bisection converges to well below the 0.02 tolerance.
fn restore_mean(pixels: &Array2<f32>, target_mean: f64) -> Array2<f32> {
    let shifted_mean = |s: f64| {
        pixels
            .iter()
            .map(|&v| (v as f64 + s).clamp(0.0, 1.0))
            .sum::<f64>()
            / pixels.len() as f64
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for _ in 0..40 {
        let mid = (lo + hi) / 2.0;
        if shifted_mean(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (lo + hi) / 2.0;
    pixels.mapv(|v| ((v as f64 + s).clamp(0.0, 1.0)) as f32)
}

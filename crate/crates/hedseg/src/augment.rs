//! Training-time augmentation: horizontal flipping, sharpening, and elastic
//! deformation, applied consistently to image and mask.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::enhance::{gaussian_blur, unsharp};
use crate::error::{Error, Result};
use crate::ingest::Slice;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ElasticParams {
    /// Displacement scale in pixels.
    pub alpha: f64,
    /// Gaussian smoothness of the displacement field in pixels.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AugmentPolicy {
    pub enable_flip: bool,
    pub enable_sharpen: bool,
    pub sharpen_amount_range: (f64, f64),
    pub enable_elastic: bool,
    pub elastic_alpha_range: (f64, f64),
    pub elastic_sigma: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            enable_flip: true,
            enable_sharpen: true,
            sharpen_amount_range: (0.5, 1.5),
            enable_elastic: true,
            elastic_alpha_range: (0.5, 3.5),
            elastic_sigma: 0.4,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self {
            enable_flip: false,
            enable_sharpen: false,
            enable_elastic: false,
            ..Self::default()
        }
    }
}

/// Mirrors image and mask about the vertical axis: pixel (r, c) moves to
/// (r, W-1-c).
pub fn hflip(sample: &Slice) -> Slice {
    let flip = |a: &Array2<f32>| {
        let (h, w) = a.dim();
        Array2::from_shape_fn((h, w), |(r, c)| a[(r, w - 1 - c)])
    };
    let flip_mask = |a: &Array2<u8>| {
        let (h, w) = a.dim();
        Array2::from_shape_fn((h, w), |(r, c)| a[(r, w - 1 - c)])
    };
    Slice {
        pixels: flip(&sample.pixels),
        mask: sample.mask.as_ref().map(flip_mask),
        ..sample.clone()
    }
}

/// Unsharp-mask sharpening of the image only; the mask is untouched.
pub fn sharpen(sample: &Slice, blur_sigma: f64, amount: f64) -> Result<Slice> {
    if amount < 0.0 {
        return Err(Error::InvalidConfig("sharpen amount must be >= 0".into()));
    }
    Ok(Slice {
        pixels: unsharp(&sample.pixels, blur_sigma, amount),
        ..sample.clone()
    })
}

/// Draws the smoothed, scaled displacement fields `(dy, dx)` for an HxW
/// image: per-pixel i.i.d. uniform `[-1,1]` noise (dy drawn first, row-major),
/// Gaussian-smoothed with `sigma`, scaled by `alpha`.
pub fn elastic_fields(params: &ElasticParams, h: usize, w: usize) -> (Array2<f32>, Array2<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut draw = || Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0f32..=1.0));
    let dy = draw();
    let dx = draw();
    let scale = |f: Array2<f32>| gaussian_blur(&f, params.sigma).mapv(|v| v * params.alpha as f32);
    (scale(dy), scale(dx))
}

/// Warps image and mask by a smoothed random displacement field. The image
/// is sampled bilinearly, the mask by nearest neighbor (so it stays binary);
/// out-of-bounds coordinates reflect at the borders.
pub fn elastic_deform(sample: &Slice, params: &ElasticParams) -> Result<Slice> {
    if params.sigma <= 0.0 {
        return Err(Error::InvalidConfig("elastic sigma must be > 0".into()));
    }
    if params.alpha < 0.0 {
        return Err(Error::InvalidConfig("elastic alpha must be >= 0".into()));
    }
    if params.alpha == 0.0 {
        return Ok(sample.clone());
    }
    let (h, w) = sample.pixels.dim();
    let (dy, dx) = elastic_fields(params, h, w);

    let mut pixels = Array2::<f32>::zeros((h, w));
    for ((r, c), o) in pixels.indexed_iter_mut() {
        let sr = reflect_coord(r as f64 + dy[(r, c)] as f64, h);
        let sc = reflect_coord(c as f64 + dx[(r, c)] as f64, w);
        *o = bilinear(&sample.pixels, sr, sc);
    }
    let mask = sample.mask.as_ref().map(|m| {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let sr = reflect_coord(r as f64 + dy[(r, c)] as f64, h);
            let sc = reflect_coord(c as f64 + dx[(r, c)] as f64, w);
            m[(sr.round() as usize, sc.round() as usize)]
        })
    });
    Ok(Slice {
        pixels,
        mask,
        ..sample.clone()
    })
}

/// Reflects a continuous coordinate into `[0, n-1]`.
pub fn reflect_coord(mut p: f64, n: usize) -> f64 {
    let hi = (n - 1) as f64;
    if hi == 0.0 {
        return 0.0;
    }
    loop {
        if p < 0.0 {
            p = -p;
        } else if p > hi {
            p = 2.0 * hi - p;
        } else {
            return p;
        }
    }
}

/// Bilinear sample at a continuous in-bounds position.
pub fn bilinear(a: &Array2<f32>, r: f64, c: f64) -> f32 {
    let (h, w) = a.dim();
    let r0 = (r.floor() as usize).min(h - 1);
    let c0 = (c.floor() as usize).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let fr = (r - r0 as f64) as f32;
    let fc = (c - c0 as f64) as f32;
    let top = a[(r0, c0)] * (1.0 - fc) + a[(r0, c1)] * fc;
    let bot = a[(r1, c0)] * (1.0 - fc) + a[(r1, c1)] * fc;
    top * (1.0 - fr) + bot * fr
}

/// FNV-1a over bytes; stable across processes for seed derivation.
fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives the per-sample augmentation seed from the global seed and a
/// stable sample identifier.
pub fn sample_seed(global_seed: u64, sample_id: &str) -> u64 {
    fnv64(format!("{global_seed}:{sample_id}").as_bytes())
}

/// Emits the original sample plus the variants enabled by the policy.
/// Reproducible from `(global_seed, sample_id)` regardless of call order.
pub fn apply_policy(
    sample: &Slice,
    policy: &AugmentPolicy,
    global_seed: u64,
    sample_id: &str,
) -> Result<Vec<Slice>> {
    let seed = sample_seed(global_seed, sample_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![sample.clone()];
    if policy.enable_flip {
        out.push(hflip(sample));
    }
    if policy.enable_sharpen {
        let (lo, hi) = policy.sharpen_amount_range;
        if lo > hi {
            return Err(Error::InvalidConfig("empty sharpen amount range".into()));
        }
        let amount = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        out.push(sharpen(sample, 2.0, amount)?);
    }
    if policy.enable_elastic {
        let (lo, hi) = policy.elastic_alpha_range;
        if lo > hi {
            return Err(Error::InvalidConfig("empty elastic alpha range".into()));
        }
        let alpha = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        out.push(elastic_deform(
            sample,
            &ElasticParams {
                alpha,
                sigma: policy.elastic_sigma,
                seed: seed.wrapping_add(1),
            },
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Modality;
    use ndarray::array;

    fn sample(pixels: Array2<f32>, mask: Option<Array2<u8>>) -> Slice {
        Slice {
            patient_id: "t".into(),
            slice_index: 0,
            modality: Modality::Ct,
            pixels,
            mask,
        }
    }

    fn disk_mask(n: usize, radius: f64) -> Array2<u8> {
        let c = (n as f64 - 1.0) / 2.0;
        Array2::from_shape_fn((n, n), |(r, col)| {
            (((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt() <= radius) as u8
        })
    }

    #[test]
    fn hflip_is_involution() {
        let s = sample(
            Array2::from_shape_fn((5, 7), |(r, c)| (r * 7 + c) as f32 / 34.0),
            Some(disk_mask(5, 2.0).slice(ndarray::s![.., ..7.min(5)]).to_owned()),
        );
        let s = sample(s.pixels.clone(), Some(Array2::from_shape_fn((5, 7), |(r, c)| ((r + c) % 2) as u8)));
        let back = hflip(&hflip(&s));
        assert_eq!(back.pixels, s.pixels);
        assert_eq!(back.mask, s.mask);
    }

    #[test]
    fn hflip_moves_corner_pattern() {
        let s = sample(array![[1.0f32, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], None);
        let flipped = hflip(&s);
        assert_eq!(
            flipped.pixels,
            array![[0.0f32, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        );
    }

    #[test]
    fn sharpen_leaves_mask_untouched() {
        let mask = disk_mask(16, 5.0);
        let s = sample(
            Array2::from_shape_fn((16, 16), |(r, c)| ((r * c) % 9) as f32 / 8.0),
            Some(mask.clone()),
        );
        let out = sharpen(&s, 2.0, 1.2).unwrap();
        assert_eq!(out.mask.unwrap(), mask);
    }

    #[test]
    fn sharpen_amount_zero_is_identity() {
        let s = sample(Array2::from_shape_fn((8, 8), |(r, _)| r as f32 / 7.0), None);
        let out = sharpen(&s, 2.0, 0.0).unwrap();
        assert_eq!(out.pixels, s.pixels);
    }

    #[test]
    fn sharpen_rejects_negative_amount() {
        let s = sample(Array2::zeros((4, 4)), None);
        assert!(sharpen(&s, 2.0, -1.0).is_err());
    }

    #[test]
    fn elastic_alpha_zero_is_identity() {
        let s = sample(
            Array2::from_shape_fn((16, 16), |(r, c)| ((r + c) % 5) as f32 / 4.0),
            Some(disk_mask(16, 5.0)),
        );
        let out = elastic_deform(
            &s,
            &ElasticParams {
                alpha: 0.0,
                sigma: 0.4,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(out.pixels, s.pixels);
        assert_eq!(out.mask, s.mask);
    }

    #[test]
    fn elastic_same_seed_is_bit_identical() {
        let s = sample(
            Array2::from_shape_fn((32, 32), |(r, c)| ((r * 13 + c * 7) % 11) as f32 / 10.0),
            Some(disk_mask(32, 10.0)),
        );
        let p = ElasticParams {
            alpha: 3.0,
            sigma: 0.4,
            seed: 1234,
        };
        let a = elastic_deform(&s, &p).unwrap();
        let b = elastic_deform(&s, &p).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn elastic_rejects_bad_sigma() {
        let s = sample(Array2::zeros((8, 8)), None);
        assert!(elastic_deform(
            &s,
            &ElasticParams {
                alpha: 1.0,
                sigma: 0.0,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn elastic_matches_dense_warp_oracle() {
        // Second implementation of the warp: same fields, pointwise sampling
        // written independently.
        let s = sample(
            Array2::from_shape_fn((64, 64), |(r, c)| ((r * 31 + c * 17) % 23) as f32 / 22.0),
            Some(disk_mask(64, 20.0)),
        );
        let p = ElasticParams {
            alpha: 3.5,
            sigma: 0.4,
            seed: 77,
        };
        let out = elastic_deform(&s, &p).unwrap();
        let (dy, dx) = elastic_fields(&p, 64, 64);
        let mask = s.mask.as_ref().unwrap();
        for r in 0..64usize {
            for c in 0..64usize {
                let mut sr = r as f64 + dy[(r, c)] as f64;
                let mut sc = c as f64 + dx[(r, c)] as f64;
                while sr < 0.0 || sr > 63.0 {
                    sr = if sr < 0.0 { -sr } else { 126.0 - sr };
                }
                while sc < 0.0 || sc > 63.0 {
                    sc = if sc < 0.0 { -sc } else { 126.0 - sc };
                }
                let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
                let (r1, c1) = ((r0 + 1).min(63), (c0 + 1).min(63));
                let (fr, fc) = (sr - r0 as f64, sc - c0 as f64);
                let expect = s.pixels[(r0, c0)] as f64 * (1.0 - fr) * (1.0 - fc)
                    + s.pixels[(r0, c1)] as f64 * (1.0 - fr) * fc
                    + s.pixels[(r1, c0)] as f64 * fr * (1.0 - fc)
                    + s.pixels[(r1, c1)] as f64 * fr * fc;
                assert!(
                    (out.pixels[(r, c)] as f64 - expect).abs() < 1e-5,
                    "pixel ({r},{c})"
                );
                let expect_mask = mask[(sr.round() as usize, sc.round() as usize)];
                assert_eq!(out.mask.as_ref().unwrap()[(r, c)], expect_mask);
            }
        }
    }

    #[test]
    fn elastic_keeps_mask_binary_and_area_bounded() {
        let mask = disk_mask(64, 20.0);
        let area: u32 = mask.iter().map(|&v| v as u32).sum();
        let s = sample(mask.mapv(|v| v as f32), Some(mask));
        for (i, alpha) in [0.5, 1.5, 2.5, 3.5].iter().enumerate() {
            let out = elastic_deform(
                &s,
                &ElasticParams {
                    alpha: *alpha,
                    sigma: 0.4,
                    seed: i as u64,
                },
            )
            .unwrap();
            let m = out.mask.unwrap();
            assert!(m.iter().all(|&v| v <= 1));
            let out_area: u32 = m.iter().map(|&v| v as u32).sum();
            let ratio = out_area as f64 / area as f64;
            assert!((0.8..=1.2).contains(&ratio), "area ratio {ratio}");
        }
    }

    #[test]
    fn policy_disabled_yields_original_only() {
        let s = sample(Array2::zeros((8, 8)), None);
        let out = apply_policy(&s, &AugmentPolicy::disabled(), 0, "a").unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn policy_flip_only_yields_two() {
        let s = sample(Array2::zeros((8, 8)), None);
        let policy = AugmentPolicy {
            enable_flip: true,
            ..AugmentPolicy::disabled()
        };
        assert_eq!(apply_policy(&s, &policy, 0, "a").unwrap().len(), 2);
    }

    #[test]
    fn policy_full_is_reproducible() {
        let s = sample(
            Array2::from_shape_fn((32, 32), |(r, c)| ((r + 2 * c) % 9) as f32 / 8.0),
            Some(disk_mask(32, 9.0)),
        );
        let policy = AugmentPolicy::default();
        let a = apply_policy(&s, &policy, 42, "p0/3").unwrap();
        let b = apply_policy(&s, &policy, 42, "p0/3").unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.pixels, y.pixels);
            assert_eq!(x.mask, y.mask);
        }
    }
}

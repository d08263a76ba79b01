//! Quantization-free RoI pooling: each output bin averages bilinear samples
//! taken at regular sub-positions inside the bin.
//!
//! Feature pixel `(r, c)` is treated as a point sample at coordinate
//! `(r + 0.5, c + 0.5)`; sample positions are clamped to the pixel-center
//! hull. The interpolation weights depend only on the box, so the pooled
//! output is a fixed linear map of the features — the tensor path reuses the
//! same weights as a matmul, which keeps it differentiable.

use candle_core::Tensor;
use ndarray::Array3;

use super::geometry::Box2D;
use crate::error::{Error, Result};

/// Sparse interpolation weights for one RoI: per output bin, a list of
/// `(flat feature index, weight)` pairs.
#[derive(Debug, Clone)]
pub struct RoiAlignWeights {
    pub out_size: (usize, usize),
    pub feat_size: (usize, usize),
    pub bins: Vec<Vec<(usize, f32)>>,
}

impl RoiAlignWeights {
    /// Builds weights for a box given in feature-map coordinates.
    pub fn build(
        box_feat: &Box2D,
        feat_size: (usize, usize),
        out_size: (usize, usize),
        samples_per_bin: usize,
    ) -> Result<Self> {
        if box_feat.width() <= 0.0 || box_feat.height() <= 0.0 {
            return Err(Error::ZeroAreaBox);
        }
        if samples_per_bin == 0 {
            return Err(Error::InvalidConfig("samples_per_bin must be > 0".into()));
        }
        let (fh, fw) = feat_size;
        let (oh, ow) = out_size;
        let bin_h = box_feat.height() / oh as f32;
        let bin_w = box_feat.width() / ow as f32;
        let s = samples_per_bin;
        let norm = 1.0 / (s * s) as f32;
        let mut bins = Vec::with_capacity(oh * ow);
        for i in 0..oh {
            for j in 0..ow {
                let mut weights: Vec<(usize, f32)> = Vec::with_capacity(4 * s * s);
                for si in 0..s {
                    for sj in 0..s {
                        let y = box_feat.y1 + (i as f32 + (si as f32 + 0.5) / s as f32) * bin_h;
                        let x = box_feat.x1 + (j as f32 + (sj as f32 + 0.5) / s as f32) * bin_w;
                        // shift into pixel-center space and clamp to the hull
                        let yc = (y - 0.5).clamp(0.0, (fh - 1) as f32);
                        let xc = (x - 0.5).clamp(0.0, (fw - 1) as f32);
                        let r0 = yc.floor() as usize;
                        let c0 = xc.floor() as usize;
                        let r1 = (r0 + 1).min(fh - 1);
                        let c1 = (c0 + 1).min(fw - 1);
                        let fr = yc - r0 as f32;
                        let fc = xc - c0 as f32;
                        for (rr, cc, w) in [
                            (r0, c0, (1.0 - fr) * (1.0 - fc)),
                            (r0, c1, (1.0 - fr) * fc),
                            (r1, c0, fr * (1.0 - fc)),
                            (r1, c1, fr * fc),
                        ] {
                            if w != 0.0 {
                                accumulate(&mut weights, rr * fw + cc, w * norm);
                            }
                        }
                    }
                }
                bins.push(weights);
            }
        }
        Ok(Self {
            out_size,
            feat_size,
            bins,
        })
    }

    /// Dense `(oh*ow, fh*fw)` weight matrix as a tensor.
    pub fn dense_tensor(&self, device: &candle_core::Device) -> candle_core::Result<Tensor> {
        let (fh, fw) = self.feat_size;
        let (oh, ow) = self.out_size;
        let mut data = vec![0.0f32; oh * ow * fh * fw];
        for (bi, bin) in self.bins.iter().enumerate() {
            for &(fi, w) in bin {
                data[bi * fh * fw + fi] += w;
            }
        }
        Tensor::from_vec(data, (oh * ow, fh * fw), device)
    }
}

fn accumulate(weights: &mut Vec<(usize, f32)>, idx: usize, w: f32) {
    for entry in weights.iter_mut() {
        if entry.0 == idx {
            entry.1 += w;
            return;
        }
    }
    weights.push((idx, w));
}

/// Pools a `C x h x w` feature array over one box given in image
/// coordinates; `spatial_scale` is `1 / stride` of the feature map.
pub fn roi_align(
    feature: &Array3<f32>,
    box_img: &Box2D,
    spatial_scale: f32,
    output_size: (usize, usize),
    samples_per_bin: usize,
) -> Result<Array3<f32>> {
    let (ch, fh, fw) = feature.dim();
    let box_feat = Box2D::new(
        box_img.x1 * spatial_scale,
        box_img.y1 * spatial_scale,
        box_img.x2 * spatial_scale,
        box_img.y2 * spatial_scale,
    );
    let weights = RoiAlignWeights::build(&box_feat, (fh, fw), output_size, samples_per_bin)?;
    let (oh, ow) = output_size;
    let mut out = Array3::<f32>::zeros((ch, oh, ow));
    for c in 0..ch {
        for (bi, bin) in weights.bins.iter().enumerate() {
            let mut acc = 0.0f32;
            for &(fi, w) in bin {
                acc += w * feature[(c, fi / fw, fi % fw)];
            }
            out[(c, bi / ow, bi % ow)] = acc;
        }
    }
    Ok(out)
}

/// Tensor RoIAlign over a `C x h x w` feature tensor; differentiable with
/// respect to the features.
pub fn roi_align_t(
    feature: &Tensor,
    box_img: &Box2D,
    spatial_scale: f32,
    output_size: (usize, usize),
    samples_per_bin: usize,
) -> Result<Tensor> {
    let (ch, fh, fw) = feature.dims3()?;
    let box_feat = Box2D::new(
        box_img.x1 * spatial_scale,
        box_img.y1 * spatial_scale,
        box_img.x2 * spatial_scale,
        box_img.y2 * spatial_scale,
    );
    let weights = RoiAlignWeights::build(&box_feat, (fh, fw), output_size, samples_per_bin)?;
    let dense = weights.dense_tensor(feature.device())?; // (oh*ow, fh*fw)
    let flat = feature.reshape((ch, fh * fw))?; // (C, fh*fw)
    let pooled = flat.matmul(&dense.t()?)?; // (C, oh*ow)
    let (oh, ow) = output_size;
    Ok(pooled.reshape((ch, oh, ow))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_feature_pools_to_constant() {
        let feat = Array3::from_elem((2, 8, 8), 0.7f32);
        let out = roi_align(
            &feat,
            &Box2D::new(1.0, 1.0, 7.0, 6.0),
            1.0,
            (3, 3),
            2,
        )
        .unwrap();
        for &v in out.iter() {
            assert!((v - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_area_box_is_error() {
        let feat = Array3::zeros((1, 4, 4));
        assert!(matches!(
            roi_align(&feat, &Box2D::new(2.0, 2.0, 2.0, 5.0), 1.0, (2, 2), 1),
            Err(Error::ZeroAreaBox)
        ));
    }

    #[test]
    fn hand_case_four_by_four() {
        // values 0..15 row-major, box covering the whole map, 2x2 out,
        // 1 sample/bin: each bin samples the average of a 2x2 block.
        let feat = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| (r * 4 + c) as f32);
        let out = roi_align(&feat, &Box2D::new(0.0, 0.0, 4.0, 4.0), 1.0, (2, 2), 1).unwrap();
        // bin (0,0) samples at (1.0, 1.0) -> centers (0.5,0.5)..(1.5,1.5)
        let expect = [[2.5f32, 4.5], [10.5, 12.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((out[(0, i, j)] - expect[i][j]).abs() < 1e-6);
            }
        }
    }

    /// Direct bilinear oracle: recomputes every sample point by hand.
    fn oracle(
        feat: &Array3<f32>,
        b: &Box2D,
        scale: f32,
        (oh, ow): (usize, usize),
        s: usize,
    ) -> Array3<f32> {
        let (ch, fh, fw) = feat.dim();
        let (x1, y1, x2, y2) = (b.x1 * scale, b.y1 * scale, b.x2 * scale, b.y2 * scale);
        let (bh, bw) = ((y2 - y1) / oh as f32, (x2 - x1) / ow as f32);
        let mut out = Array3::<f32>::zeros((ch, oh, ow));
        for c in 0..ch {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0f64;
                    for si in 0..s {
                        for sj in 0..s {
                            let y = y1 + (i as f32 + (si as f32 + 0.5) / s as f32) * bh;
                            let x = x1 + (j as f32 + (sj as f32 + 0.5) / s as f32) * bw;
                            let yc = (y - 0.5).clamp(0.0, (fh - 1) as f32) as f64;
                            let xc = (x - 0.5).clamp(0.0, (fw - 1) as f32) as f64;
                            let (r0, c0) = (yc.floor() as usize, xc.floor() as usize);
                            let (r1, c1) = ((r0 + 1).min(fh - 1), (c0 + 1).min(fw - 1));
                            let (fr, fc) = (yc - r0 as f64, xc - c0 as f64);
                            acc += feat[(c, r0, c0)] as f64 * (1.0 - fr) * (1.0 - fc)
                                + feat[(c, r0, c1)] as f64 * (1.0 - fr) * fc
                                + feat[(c, r1, c0)] as f64 * fr * (1.0 - fc)
                                + feat[(c, r1, c1)] as f64 * fr * fc;
                        }
                    }
                    out[(c, i, j)] = (acc / (s * s) as f64) as f32;
                }
            }
        }
        out
    }

    #[test]
    fn random_cases_match_bilinear_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let feat = Array3::from_shape_fn((2, 12, 10), |_| rng.gen::<f32>());
            let x1 = rng.gen_range(0.0f32..30.0);
            let y1 = rng.gen_range(0.0f32..30.0);
            let b = Box2D::new(x1, y1, x1 + rng.gen_range(2.0..15.0), y1 + rng.gen_range(2.0..15.0));
            let out = roi_align(&feat, &b, 0.25, (7, 7), 2).unwrap();
            let want = oracle(&feat, &b, 0.25, (7, 7), 2);
            for (&a, &w) in out.iter().zip(want.iter()) {
                assert!((a - w).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn tensor_path_matches_array_path() {
        let dev = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let feat = Array3::from_shape_fn((3, 8, 8), |_| rng.gen::<f32>());
        let b = Box2D::new(3.0, 2.0, 25.0, 28.0);
        let want = roi_align(&feat, &b, 0.25, (7, 7), 2).unwrap();
        let t = Tensor::from_slice(feat.as_slice().unwrap(), (3, 8, 8), &dev).unwrap();
        let got = roi_align_t(&t, &b, 0.25, (7, 7), 2).unwrap();
        let got: Vec<f32> = got.flatten_all().unwrap().to_vec1().unwrap();
        for (&w, g) in want.iter().zip(got.iter()) {
            assert!((w - g).abs() < 1e-5);
        }
    }
}

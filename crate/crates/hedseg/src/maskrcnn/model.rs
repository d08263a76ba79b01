//! Detector network: a residual backbone with a feature pyramid, a region
//! proposal head shared across levels, and box/mask heads over RoIAligned
//! features. Proposal boxes are plain values (never part of the graph), so
//! every pooled feature stays differentiable with respect to the backbone.

use candle_core::{DType, Device, Tensor};
use candle_nn::{Conv2d, Conv2dConfig, Linear, Module, VarBuilder, VarMap};
use ndarray::Array3;

use super::geometry::{generate_anchors, AnchorLevel, Box2D};
use super::roi_align::roi_align_t;
use crate::error::{Error, Result};
use crate::nn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BackboneKind {
    /// Full-width residual backbone, sized for GPU training.
    Deep,
    /// Narrow backbone that trains in minutes on a CPU.
    Toy,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DetectorConfig {
    pub backbone: BackboneKind,
    /// Square input side; must be divisible by the coarsest stride (64).
    pub image_size: usize,
    /// Classes including background (background is class 0).
    pub num_classes: usize,
    pub stem_channels: usize,
    pub stage_widths: [usize; 4],
    pub blocks_per_stage: [usize; 4],
    pub fpn_channels: usize,
    pub box_head_hidden: usize,
    pub anchor_levels: Vec<AnchorLevel>,
    pub anchor_ratios: Vec<f32>,
    pub rpn_pos_iou: f32,
    pub rpn_neg_iou: f32,
    pub rpn_batch: usize,
    pub rpn_pos_fraction: f32,
    pub pre_nms_top_n: usize,
    pub post_nms_top_n: usize,
    pub rpn_nms_iou: f32,
    pub head_pos_iou: f32,
    pub roi_batch: usize,
    pub roi_pos_fraction: f32,
    pub head_nms_iou: f32,
    pub score_threshold: f32,
    pub max_detections: usize,
    pub box_pool: usize,
    pub mask_pool: usize,
    pub mask_size: usize,
    pub samples_per_bin: usize,
    /// Box side (sqrt of area) pooled from the middle pyramid level.
    pub canonical_box_size: f32,
}

fn pyramid_levels(base_scale: f32) -> Vec<AnchorLevel> {
    [4usize, 8, 16, 32, 64]
        .iter()
        .map(|&stride| AnchorLevel {
            stride,
            scales: vec![stride as f32 * base_scale],
        })
        .collect()
}

impl DetectorConfig {
    pub fn deep(image_size: usize) -> Self {
        Self {
            backbone: BackboneKind::Deep,
            image_size,
            num_classes: 2,
            stem_channels: 64,
            stage_widths: [64, 128, 256, 512],
            blocks_per_stage: [3, 4, 6, 3],
            fpn_channels: 256,
            box_head_hidden: 1024,
            anchor_levels: pyramid_levels(8.0),
            anchor_ratios: vec![0.5, 1.0, 2.0],
            rpn_pos_iou: 0.7,
            rpn_neg_iou: 0.3,
            rpn_batch: 256,
            rpn_pos_fraction: 0.5,
            pre_nms_top_n: 1000,
            post_nms_top_n: 200,
            rpn_nms_iou: 0.7,
            head_pos_iou: 0.5,
            roi_batch: 200,
            roi_pos_fraction: 0.25,
            head_nms_iou: 0.5,
            score_threshold: 0.7,
            max_detections: 20,
            box_pool: 7,
            mask_pool: 14,
            mask_size: 28,
            samples_per_bin: 2,
            canonical_box_size: 224.0,
        }
    }

    pub fn toy(image_size: usize) -> Self {
        Self {
            backbone: BackboneKind::Toy,
            stem_channels: 8,
            stage_widths: [16, 24, 32, 48],
            blocks_per_stage: [1, 1, 1, 1],
            fpn_channels: 32,
            box_head_hidden: 128,
            anchor_levels: pyramid_levels(4.0),
            rpn_batch: 64,
            pre_nms_top_n: 400,
            post_nms_top_n: 50,
            roi_batch: 32,
            max_detections: 10,
            canonical_box_size: 56.0,
            ..Self::deep(image_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coarsest = self
            .anchor_levels
            .iter()
            .map(|l| l.stride)
            .max()
            .unwrap_or(0);
        if self.anchor_levels.len() != 5 {
            return Err(Error::InvalidConfig(
                "detector expects five pyramid levels".into(),
            ));
        }
        if coarsest == 0 || self.image_size % coarsest != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_size {} not divisible by coarsest stride {coarsest}",
                self.image_size
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "num_classes must include background and one object class".into(),
            ));
        }
        if self.anchor_ratios.is_empty() {
            return Err(Error::InvalidConfig("anchor_ratios must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.rpn_pos_fraction)
            || !(0.0..=1.0).contains(&self.roi_pos_fraction)
        {
            return Err(Error::InvalidConfig("positive fractions must be in [0, 1]".into()));
        }
        if self.mask_size == 0 || self.box_pool == 0 || self.mask_pool == 0 {
            return Err(Error::InvalidConfig("pool sizes must be > 0".into()));
        }
        Ok(())
    }

    /// Anchors per feature cell.
    pub fn anchors_per_cell(&self) -> usize {
        self.anchor_ratios.len() * self.anchor_levels[0].scales.len()
    }
}

struct ResidualBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResidualBlock {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let y = self.conv2.forward(&self.conv1.forward(x)?.relu()?)?;
        (x + y)?.relu()
    }
}

pub struct Detector {
    pub cfg: DetectorConfig,
    pub varmap: VarMap,
    device: Device,
    stem: Conv2d,
    downsamples: Vec<Conv2d>,
    stages: Vec<Vec<ResidualBlock>>,
    laterals: Vec<Conv2d>,
    smooths: Vec<Conv2d>,
    rpn_conv: Conv2d,
    rpn_obj: Conv2d,
    rpn_delta: Conv2d,
    box_fc1: Linear,
    box_fc2: Linear,
    box_cls: Linear,
    box_reg: Linear,
    mask_conv1: Conv2d,
    mask_conv2: Conv2d,
    mask_out: Conv2d,
}

/// Builds the detector with seeded weights.
pub fn build_detector(cfg: &DetectorConfig, seed: u64) -> Result<Detector> {
    cfg.validate()?;
    let device = Device::Cpu;
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
    let pad1 = Conv2dConfig {
        padding: 1,
        ..Default::default()
    };
    let stride2 = Conv2dConfig {
        padding: 1,
        stride: 2,
        ..Default::default()
    };

    let stem = candle_nn::conv2d(3, cfg.stem_channels, 3, stride2, vb.pp("stem"))?;
    let mut downsamples = Vec::new();
    let mut stages = Vec::new();
    let mut in_ch = cfg.stem_channels;
    for (s, (&width, &blocks)) in cfg
        .stage_widths
        .iter()
        .zip(cfg.blocks_per_stage.iter())
        .enumerate()
    {
        downsamples.push(candle_nn::conv2d(
            in_ch,
            width,
            3,
            stride2,
            vb.pp(format!("stage{s}.down")),
        )?);
        let mut stage = Vec::new();
        for b in 0..blocks {
            stage.push(ResidualBlock {
                conv1: candle_nn::conv2d(width, width, 3, pad1, vb.pp(format!("stage{s}.b{b}.c1")))?,
                conv2: candle_nn::conv2d(width, width, 3, pad1, vb.pp(format!("stage{s}.b{b}.c2")))?,
            });
        }
        stages.push(stage);
        in_ch = width;
    }

    let fpn = cfg.fpn_channels;
    let mut laterals = Vec::new();
    let mut smooths = Vec::new();
    for (s, &width) in cfg.stage_widths.iter().enumerate() {
        laterals.push(candle_nn::conv2d(
            width,
            fpn,
            1,
            Default::default(),
            vb.pp(format!("fpn.lat{s}")),
        )?);
        smooths.push(candle_nn::conv2d(
            fpn,
            fpn,
            3,
            pad1,
            vb.pp(format!("fpn.smooth{s}")),
        )?);
    }

    let a = cfg.anchors_per_cell();
    let rpn_conv = candle_nn::conv2d(fpn, fpn, 3, pad1, vb.pp("rpn.conv"))?;
    let rpn_obj = candle_nn::conv2d(fpn, a, 1, Default::default(), vb.pp("rpn.obj"))?;
    let rpn_delta = candle_nn::conv2d(fpn, 4 * a, 1, Default::default(), vb.pp("rpn.delta"))?;

    let box_in = fpn * cfg.box_pool * cfg.box_pool;
    let hidden = cfg.box_head_hidden;
    let box_fc1 = candle_nn::linear(box_in, hidden, vb.pp("box.fc1"))?;
    let box_fc2 = candle_nn::linear(hidden, hidden, vb.pp("box.fc2"))?;
    let box_cls = candle_nn::linear(hidden, cfg.num_classes, vb.pp("box.cls"))?;
    let box_reg = candle_nn::linear(hidden, 4, vb.pp("box.reg"))?;

    let mask_conv1 = candle_nn::conv2d(fpn, fpn, 3, pad1, vb.pp("mask.c1"))?;
    let mask_conv2 = candle_nn::conv2d(fpn, fpn, 3, pad1, vb.pp("mask.c2"))?;
    let mask_out = candle_nn::conv2d(fpn, 1, 1, Default::default(), vb.pp("mask.out"))?;

    nn::deterministic_init(&varmap, seed)?;
    Ok(Detector {
        cfg: cfg.clone(),
        varmap,
        device,
        stem,
        downsamples,
        stages,
        laterals,
        smooths,
        rpn_conv,
        rpn_obj,
        rpn_delta,
        box_fc1,
        box_fc2,
        box_cls,
        box_reg,
        mask_conv1,
        mask_conv2,
        mask_out,
    })
}

impl Detector {
    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.varmap.save(path)?;
        Ok(())
    }

    pub fn load(&mut self, path: &std::path::Path) -> Result<()> {
        self.varmap.load(path)?;
        Ok(())
    }

    pub fn image_tensor(&self, image: &Array3<f32>) -> Result<Tensor> {
        let (c, h, w) = image.dim();
        if c != 3 {
            return Err(Error::InvalidConfig(format!(
                "detector expects 3-channel input, got {c}"
            )));
        }
        let data: Vec<f32> = image.iter().copied().collect();
        Ok(Tensor::from_vec(data, (1, c, h, w), &self.device)?)
    }

    /// Pyramid features `[P2..P6]` at strides 4, 8, 16, 32, 64 for a
    /// `(1, 3, H, W)` input.
    pub fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut feat = self.stem.forward(x)?.relu()?;
        let mut c_feats = Vec::with_capacity(4);
        for (down, stage) in self.downsamples.iter().zip(self.stages.iter()) {
            feat = down.forward(&feat)?.relu()?;
            for block in stage {
                feat = block.forward(&feat)?;
            }
            c_feats.push(feat.clone());
        }
        // top-down pathway
        let mut p = self.laterals[3].forward(&c_feats[3])?;
        let mut pyramid = vec![self.smooths[3].forward(&p)?];
        for s in (0..3).rev() {
            let (_, _, h, w) = c_feats[s].dims4()?;
            let up = nn::resize_bilinear(&p, h, w)?;
            p = (self.laterals[s].forward(&c_feats[s])? + up)?;
            pyramid.push(self.smooths[s].forward(&p)?);
        }
        pyramid.reverse(); // now P2, P3, P4, P5
        let p6 = pyramid[3].max_pool2d(2)?;
        pyramid.push(p6);
        Ok(pyramid)
    }

    /// Objectness logits `(n_anchors,)` and deltas `(n_anchors, 4)` aligned
    /// with [`generate_anchors`] ordering over all levels.
    pub fn rpn_forward(&self, pyramid: &[Tensor]) -> Result<(Tensor, Tensor)> {
        let a = self.cfg.anchors_per_cell();
        let mut obj_parts = Vec::new();
        let mut delta_parts = Vec::new();
        for feat in pyramid {
            let shared = self.rpn_conv.forward(feat)?.relu()?;
            let (_, _, h, w) = shared.dims4()?;
            // (1, A, h, w) -> (h, w, A) -> (h*w*A,)
            let obj = self
                .rpn_obj
                .forward(&shared)?
                .reshape((a, h, w))?
                .permute((1, 2, 0))?
                .reshape(h * w * a)?;
            // (1, 4A, h, w) -> (A, 4, h, w) -> (h, w, A, 4) -> (h*w*A, 4)
            let delta = self
                .rpn_delta
                .forward(&shared)?
                .reshape((a, 4, h, w))?
                .permute((2, 3, 0, 1))?
                .reshape((h * w * a, 4))?;
            obj_parts.push(obj.contiguous()?);
            delta_parts.push(delta.contiguous()?);
        }
        Ok((
            Tensor::cat(&obj_parts, 0)?,
            Tensor::cat(&delta_parts, 0)?,
        ))
    }

    /// All anchors for the configured input size.
    pub fn anchors(&self) -> Result<Vec<Box2D>> {
        generate_anchors(
            (self.cfg.image_size, self.cfg.image_size),
            &self.cfg.anchor_levels,
            &self.cfg.anchor_ratios,
        )
    }

    /// Pyramid level index (into `P2..P5`) a box is pooled from, by its
    /// square-root area relative to the canonical size.
    pub fn assign_level(&self, b: &Box2D) -> usize {
        let side = b.area().max(1e-6).sqrt();
        let k = 2.0 + (side / self.cfg.canonical_box_size).log2();
        (k.floor().clamp(0.0, 3.0)) as usize
    }

    /// RoIAligns each box from its assigned level; returns `(N, C, oh, ow)`.
    pub fn pool(
        &self,
        pyramid: &[Tensor],
        boxes: &[Box2D],
        out_size: usize,
    ) -> Result<Tensor> {
        let mut pooled = Vec::with_capacity(boxes.len());
        for b in boxes {
            let lvl = self.assign_level(b);
            let stride = self.cfg.anchor_levels[lvl].stride as f32;
            let feat = pyramid[lvl].squeeze(0)?;
            pooled.push(
                roi_align_t(
                    &feat,
                    b,
                    1.0 / stride,
                    (out_size, out_size),
                    self.cfg.samples_per_bin,
                )?
                .unsqueeze(0)?,
            );
        }
        Ok(Tensor::cat(&pooled, 0)?)
    }

    /// Class logits `(N, K)` and class-agnostic box deltas `(N, 4)` from
    /// `(N, C, box_pool, box_pool)` pooled features.
    pub fn box_head(&self, pooled: &Tensor) -> Result<(Tensor, Tensor)> {
        let (n, c, h, w) = pooled.dims4()?;
        let flat = pooled.reshape((n, c * h * w))?;
        let x = self.box_fc1.forward(&flat)?.relu()?;
        let x = self.box_fc2.forward(&x)?.relu()?;
        Ok((self.box_cls.forward(&x)?, self.box_reg.forward(&x)?))
    }

    /// Mask logits `(N, 1, mask_size, mask_size)` from
    /// `(N, C, mask_pool, mask_pool)` pooled features.
    pub fn mask_head(&self, pooled: &Tensor) -> Result<Tensor> {
        let x = self.mask_conv1.forward(pooled)?.relu()?;
        let x = self.mask_conv2.forward(&x)?.relu()?;
        let x = nn::resize_bilinear(&x, self.cfg.mask_size, self.cfg.mask_size)?;
        Ok(self.mask_out.forward(&x)?)
    }
}

//! Holistically-nested edge network: five convolutional stages at strides
//! 1, 2, 4, 8, 16, a 1-channel side head per stage upsampled to input
//! resolution, a learned 1x1 fusion of the five side logits, and
//! class-balanced cross-entropy deep supervision on every output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::{Conv2d, Conv2dConfig, Module, VarBuilder, VarMap};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Modality;
use crate::nn::{self, Adam};

pub const NUM_SIDE_OUTPUTS: usize = 6;
const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HedConfig {
    pub input_size: usize,
    pub stage_channels: [usize; 5],
    pub convs_per_stage: [usize; 5],
    /// Loss weight per output: five side heads (finest first) then the
    /// fused map.
    pub side_weights: [f64; 6],
    /// Which output index feeds the detector per modality. The fused map is
    /// index 5; index 0 is the finest side head.
    pub side_index_ct: usize,
    pub side_index_mr: usize,
    /// Boundary thickness of the supervision target, in pixels.
    pub target_thickness: usize,
}

impl Default for HedConfig {
    fn default() -> Self {
        Self {
            input_size: 512,
            stage_channels: [64, 128, 256, 512, 512],
            convs_per_stage: [2, 2, 3, 3, 3],
            side_weights: [1.0; 6],
            side_index_ct: 5,
            side_index_mr: 0,
            target_thickness: 2,
        }
    }
}

impl HedConfig {
    /// Reduced widths so training runs in seconds on a CPU.
    pub fn toy(input_size: usize) -> Self {
        Self {
            input_size,
            stage_channels: [8, 12, 16, 16, 16],
            convs_per_stage: [1, 1, 1, 1, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size % 16 != 0 {
            return Err(Error::InvalidConfig(
                "hed input_size must be divisible by 16".into(),
            ));
        }
        if self.stage_channels.iter().any(|&c| c == 0)
            || self.convs_per_stage.iter().any(|&c| c == 0)
        {
            return Err(Error::InvalidConfig(
                "hed stage widths and depths must be positive".into(),
            ));
        }
        if self.side_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig("hed side_weights must be >= 0".into()));
        }
        if self.side_index_ct >= NUM_SIDE_OUTPUTS || self.side_index_mr >= NUM_SIDE_OUTPUTS {
            return Err(Error::InvalidConfig("hed side index out of range".into()));
        }
        Ok(())
    }
}

/// The six per-pixel edge probability maps at input resolution: indices 0-4
/// are the side heads (finest to coarsest), index 5 the fused map.
#[derive(Debug, Clone)]
pub struct SideOutputs {
    pub maps: Vec<Array2<f32>>,
}

pub struct HedModel {
    pub cfg: HedConfig,
    pub varmap: VarMap,
    stages: Vec<Vec<Conv2d>>,
    side_heads: Vec<Conv2d>,
    fuse_head: Conv2d,
    device: Device,
}

/// Builds the edge model with seeded weights.
pub fn build_hed(cfg: &HedConfig, seed: u64) -> Result<HedModel> {
    cfg.validate()?;
    let device = Device::Cpu;
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
    let conv_cfg = Conv2dConfig {
        padding: 1,
        ..Default::default()
    };
    let mut stages = Vec::new();
    let mut side_heads = Vec::new();
    let mut in_ch = 1usize;
    for (s, (&width, &depth)) in cfg
        .stage_channels
        .iter()
        .zip(cfg.convs_per_stage.iter())
        .enumerate()
    {
        let mut convs = Vec::new();
        for k in 0..depth {
            convs.push(candle_nn::conv2d(
                in_ch,
                width,
                3,
                conv_cfg,
                vb.pp(format!("stage{s}.conv{k}")),
            )?);
            in_ch = width;
        }
        stages.push(convs);
        side_heads.push(candle_nn::conv2d(
            width,
            1,
            1,
            Default::default(),
            vb.pp(format!("side{s}")),
        )?);
    }
    let fuse_head = candle_nn::conv2d(5, 1, 1, Default::default(), vb.pp("fuse"))?;
    nn::deterministic_init(&varmap, seed)?;
    Ok(HedModel {
        cfg: cfg.clone(),
        varmap,
        stages,
        side_heads,
        fuse_head,
        device,
    })
}

impl HedModel {
    /// Forward pass on an `(N, 1, H, W)` tensor; returns the six logit maps
    /// at input resolution (sigmoid not yet applied).
    pub fn forward_t(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (_, _, h, w) = x.dims4()?;
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::InvalidConfig(format!(
                "hed input {h}x{w} must be divisible by 16"
            )));
        }
        let mut feat = x.clone();
        let mut side_logits = Vec::with_capacity(5);
        for (s, convs) in self.stages.iter().enumerate() {
            if s > 0 {
                feat = feat.max_pool2d(2)?;
            }
            for conv in convs {
                feat = conv.forward(&feat)?.relu()?;
            }
            let logits = self.side_heads[s].forward(&feat)?;
            side_logits.push(nn::resize_bilinear(&logits, h, w)?);
        }
        let stacked = Tensor::cat(&side_logits, 1)?; // (N, 5, H, W)
        let fused = self.fuse_head.forward(&stacked)?;
        side_logits.push(fused);
        Ok(side_logits)
    }

    /// Inference on a single slice, returning probability maps.
    pub fn forward(&self, pixels: &Array2<f32>) -> Result<SideOutputs> {
        let (h, w) = pixels.dim();
        let x = nn::tensor_from_array2(pixels, &self.device)?.reshape((1, 1, h, w))?;
        let logits = self.forward_t(&x)?;
        let mut maps = Vec::with_capacity(NUM_SIDE_OUTPUTS);
        for l in &logits {
            let probs = candle_nn::ops::sigmoid(l)?.reshape((h, w))?;
            maps.push(nn::array2_from_tensor(&probs)?);
        }
        Ok(SideOutputs { maps })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.varmap.save(path)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        self.varmap.load(path)?;
        Ok(())
    }

    pub fn device(&self) -> &Device {
        &self.device
    }
}

/// Binary dilation with a square structuring element of radius `r`.
fn dilate(mask: &Array2<u8>, r: usize) -> Array2<u8> {
    let (h, w) = mask.dim();
    let r = r as isize;
    Array2::from_shape_fn((h, w), |(row, col)| {
        for dr in -r..=r {
            for dc in -r..=r {
                let (nr, nc) = (row as isize + dr, col as isize + dc);
                if nr >= 0 && nc >= 0 && nr < h as isize && nc < w as isize {
                    if mask[(nr as usize, nc as usize)] != 0 {
                        return 1;
                    }
                }
            }
        }
        0
    })
}

/// Binary erosion; pixels outside the frame count as background, so mask
/// pixels touching the border erode away.
fn erode(mask: &Array2<u8>, r: usize) -> Array2<u8> {
    let (h, w) = mask.dim();
    let r = r as isize;
    Array2::from_shape_fn((h, w), |(row, col)| {
        for dr in -r..=r {
            for dc in -r..=r {
                let (nr, nc) = (row as isize + dr, col as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    return 0;
                }
                if mask[(nr as usize, nc as usize)] == 0 {
                    return 0;
                }
            }
        }
        1
    })
}

/// Supervision target: the morphological gradient of the organ mask,
/// `dilate(mask) \ erode(mask)` with a square element of radius
/// `max(1, ceil(thickness / 2))`.
pub fn edge_target_from_mask(mask: &Array2<u8>, thickness: usize) -> Array2<u8> {
    let r = thickness.div_ceil(2).max(1);
    let d = dilate(mask, r);
    let e = erode(mask, r);
    Array2::from_shape_fn(mask.dim(), |idx| (d[idx] == 1 && e[idx] == 0) as u8)
}

/// Class-balanced binary cross-entropy on probabilities:
/// `-(beta * sum_pos log p + (1 - beta) * sum_neg log(1 - p)) / n` with
/// `beta = #neg / n`. Predictions are clipped at 1e-7.
pub fn balanced_bce(pred: &Array2<f32>, target: &Array2<u8>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(pred.dim(), target.dim()));
    }
    let n = pred.len() as f64;
    let neg = target.iter().filter(|&&t| t == 0).count() as f64;
    let beta = neg / n;
    let mut pos_sum = 0.0f64;
    let mut neg_sum = 0.0f64;
    for (&p, &t) in pred.iter().zip(target.iter()) {
        let p = (p as f64).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        if t != 0 {
            pos_sum += p.ln();
        } else {
            neg_sum += (1.0 - p).ln();
        }
    }
    Ok(-(beta * pos_sum + (1.0 - beta) * neg_sum) / n)
}

/// Tensor version of [`balanced_bce`] over matching-shape probability and
/// binary target tensors; differentiable with respect to the prediction.
pub fn balanced_bce_t(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(Error::InvalidConfig(format!(
            "balanced_bce_t shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.elem_count() as f64;
    let pos: f64 = target.sum_all()?.to_dtype(DType::F64)?.to_scalar()?;
    let beta = (n - pos) / n;
    let p = pred.clamp(PROB_CLIP, 1.0 - PROB_CLIP)?;
    let one_minus = p.affine(-1.0, 1.0)?;
    let pos_term = (target * p.log()?)?.sum_all()?;
    let neg_term = (target.affine(-1.0, 1.0)? * one_minus.log()?)?.sum_all()?;
    let total = ((pos_term * beta)? + (neg_term * (1.0 - beta))?)?;
    Ok((total * (-1.0 / n))?)
}

/// Deeply supervised loss: the weighted sum of per-output balanced BCE
/// terms. Returns the total (as a graph tensor) and the unweighted per-map
/// losses.
pub fn hed_loss_t(
    outputs: &[Tensor],
    target: &Tensor,
    side_weights: &[f64],
) -> Result<(Tensor, Vec<f64>)> {
    if side_weights.len() != outputs.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} side weights, got {}",
            outputs.len(),
            side_weights.len()
        )));
    }
    let device = target.device();
    let mut total = Tensor::zeros((), DType::F32, device)?;
    let mut per_map = Vec::with_capacity(outputs.len());
    for (logits, &w) in outputs.iter().zip(side_weights.iter()) {
        let probs = candle_nn::ops::sigmoid(logits)?;
        let loss = balanced_bce_t(&probs, target)?;
        per_map.push(loss.to_dtype(DType::F64)?.to_scalar::<f64>()?);
        if w != 0.0 {
            total = (total + (loss * w)?)?;
        }
    }
    Ok((total, per_map))
}

/// Picks the edge map fed to the detector: the fused map for CT, the finest
/// side output for MR (both configurable).
pub fn select_edge_map<'a>(
    outputs: &'a SideOutputs,
    modality: Modality,
    cfg: &HedConfig,
) -> Result<&'a Array2<f32>> {
    let index = match modality {
        Modality::Ct => cfg.side_index_ct,
        Modality::MrT1In | Modality::MrT2 => cfg.side_index_mr,
    };
    outputs
        .maps
        .get(index)
        .ok_or_else(|| Error::InvalidConfig(format!("side output index {index} out of range")))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HedTrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// CSV loss log (iteration, six per-map losses, total).
    pub log_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Weights (and `.opt` state alongside) to resume from.
    pub resume_from: Option<PathBuf>,
}

impl Default for HedTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            learning_rate: 1e-3,
            seed: 0,
            log_path: None,
            checkpoint_path: None,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HedLossRecord {
    pub iteration: usize,
    pub per_map: Vec<f64>,
    pub total: f64,
}

fn opt_state_path(weights: &Path) -> PathBuf {
    weights.with_extension("opt.safetensors")
}

/// Trains the edge model one sample per step, cycling through a seeded
/// shuffle of the dataset. Returns the per-iteration loss curve.
pub fn train_hed(
    model: &mut HedModel,
    samples: &[(Array2<f32>, Array2<u8>)],
    cfg: &HedTrainConfig,
) -> Result<Vec<HedLossRecord>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("train_hed".into()));
    }
    let device = model.device.clone();
    let tensors: Vec<(Tensor, Tensor)> = samples
        .iter()
        .map(|(img, target)| {
            let (h, w) = img.dim();
            let x = nn::tensor_from_array2(img, &device)?.reshape((1, 1, h, w))?;
            let tgt = nn::tensor_from_array2(&target.mapv(|v| v as f32), &device)?
                .reshape((1, 1, h, w))?;
            Ok((x, tgt))
        })
        .collect::<Result<_>>()?;

    let mut opt = Adam::new(&model.varmap, cfg.learning_rate)?;
    if let Some(resume) = &cfg.resume_from {
        model.varmap.load(resume)?;
        let state = opt_state_path(resume);
        if state.is_file() {
            opt.load_state(&state)?;
        }
    }

    let mut order: Vec<usize> = (0..tensors.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut log = match &cfg.log_path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            writeln!(f, "iteration,side0,side1,side2,side3,side4,fused,total")
                .map_err(|e| Error::io(p, e))?;
            Some((f, p.clone()))
        }
        None => None,
    };

    let mut curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (x, target) = &tensors[order[cursor]];
        cursor += 1;

        let outputs = model.forward_t(x)?;
        let (total_t, per_map) = hed_loss_t(&outputs, target, &model.cfg.side_weights)?;
        let total = total_t.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if cfg.learning_rate != 0.0 {
            let grads = total_t.backward()?;
            opt.step(&grads)?;
        }
        if let Some((f, p)) = &mut log {
            let cells: Vec<String> = per_map.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "{},{},{total:.6}", it, cells.join(","))
                .map_err(|e| Error::io(p.clone(), e))?;
        }
        curve.push(HedLossRecord {
            iteration: it,
            per_map,
            total,
        });
    }

    if let Some(ckpt) = &cfg.checkpoint_path {
        model.save(ckpt)?;
        opt.save_state(&opt_state_path(ckpt))?;
    }
    Ok(curve)
}

//! Stage orchestration over a run directory. Every stage reads files
//! written by an earlier stage and writes its own outputs, so any stage can
//! be re-run in isolation; a missing prerequisite is reported as the stage
//! that should have produced it.
//!
//! Run directory layout:
//!
//! ```text
//! manifest.txt        converted slices (+ masks)
//! val_manifest.txt    held-out subset of the above
//! split.txt           patient-level train/val assignment
//! enhanced.txt        manifest of enhanced slices
//! fused.txt           manifest of detector inputs
//! slices/ enhanced/ edges/ fused/ pred_raw/ pred/
//! models/ logs/ reports/
//! run.txt             seed, config hash, completed stages
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Array3};

use crate::augment::AugmentPolicy;
use crate::enhance::{self, CtEnhanceConfig, MrEnhanceConfig};
use crate::error::{Error, Result};
use crate::eval::{self, ComparisonRow};
use crate::fuse;
use crate::hed::{self, HedConfig, HedTrainConfig};
use crate::ingest::{self, ManifestRecord, Modality, Slice, SplitSpec};
use crate::maskrcnn::{
    build_detector, detect, train_seg, DetectorConfig, SegSample, SegTrainConfig,
};
use crate::phantom::{self, PhantomSpec};
use crate::postprocess::{self, PostprocessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Convert,
    Enhance,
    TrainHed,
    Edges,
    Fuse,
    TrainSeg,
    Infer,
    Postprocess,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Convert,
        Stage::Enhance,
        Stage::TrainHed,
        Stage::Edges,
        Stage::Fuse,
        Stage::TrainSeg,
        Stage::Infer,
        Stage::Postprocess,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Convert => "convert",
            Stage::Enhance => "enhance",
            Stage::TrainHed => "train-hed",
            Stage::Edges => "edges",
            Stage::Fuse => "fuse",
            Stage::TrainSeg => "train-seg",
            Stage::Infer => "infer",
            Stage::Postprocess => "postprocess",
            Stage::Eval => "eval",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage {s:?}")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory of per-patient DICOM series directories.
    pub dicom_dir: Option<PathBuf>,
    /// Synthetic dataset to generate instead of reading DICOM.
    pub phantom: Option<PhantomSpec>,
    /// Modality hint for DICOM series without a usable modality tag, and
    /// the modality assumed for windowing.
    pub modality: String,
    pub train_patients: usize,
    pub val_patients: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dicom_dir: None,
            phantom: Some(PhantomSpec::default()),
            modality: "ct".into(),
            train_patients: 16,
            val_patients: 4,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HedStageConfig {
    /// Use the reduced-width network.
    pub toy: bool,
    pub iterations: usize,
    pub learning_rate: f64,
    pub network: HedConfig,
}

impl Default for HedStageConfig {
    fn default() -> Self {
        Self {
            toy: true,
            iterations: 200,
            learning_rate: 1e-3,
            network: HedConfig::toy(128),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SegStageConfig {
    pub toy: bool,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SegStageConfig {
    fn default() -> Self {
        Self {
            toy: true,
            epochs: 6,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FuseStageConfig {
    /// With edges disabled the detector trains on the enhanced image alone
    /// (the ablation baseline).
    pub use_edges: bool,
}

impl Default for FuseStageConfig {
    fn default() -> Self {
        Self { use_edges: true }
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub enhance_ct: CtEnhanceConfig,
    pub enhance_mr: MrEnhanceConfig,
    pub augment: Option<AugmentPolicy>,
    pub hed: HedStageConfig,
    pub fuse: FuseStageConfig,
    pub seg: SegStageConfig,
    pub postprocess: PostprocessConfig,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{path:?}: {e}")))
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| Error::InvalidConfig(format!("serialize config: {e}")))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// FNV-1a hash of the config's canonical TOML form.
pub fn config_hash(cfg: &RunConfig) -> u64 {
    let text = toml::to_string(cfg).unwrap_or_default();
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn require(path: &Path, produced_by: Stage) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingStage(produced_by.as_str().to_string()))
    }
}

fn slice_rel(prefix: &str, rec: &ManifestRecord) -> PathBuf {
    PathBuf::from(format!(
        "{prefix}/{}/{:04}.png",
        rec.patient_id, rec.slice_index
    ))
}

/// Records the seed, config hash and completed stages. A run directory
/// started under a different config is rejected.
fn update_run_manifest(run_dir: &Path, cfg: &RunConfig, completed: Stage) -> Result<()> {
    let path = run_dir.join("run.txt");
    let hash = format!("{:016x}", config_hash(cfg));
    let mut lines: Vec<String> = Vec::new();
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for line in text.lines() {
            if let Some(existing) = line.strip_prefix("config_hash=") {
                if existing != hash {
                    return Err(Error::InvalidConfig(format!(
                        "run directory {run_dir:?} was started with a different config"
                    )));
                }
            }
            lines.push(line.to_string());
        }
    } else {
        lines.push(format!("seed={}", cfg.seed));
        lines.push(format!("config_hash={hash}"));
    }
    let stage_line = format!("stage={} status=done", completed.as_str());
    if !lines.contains(&stage_line) {
        lines.push(stage_line);
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for line in &lines {
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn read_split(run_dir: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let path = run_dir.join("split.txt");
    require(&path, Stage::Convert)?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for line in text.lines() {
        if let Some(p) = line.strip_prefix("train=") {
            train.push(p.to_string());
        } else if let Some(p) = line.strip_prefix("val=") {
            val.push(p.to_string());
        }
    }
    Ok((train, val))
}

fn stage_convert(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = if let Some(spec) = &cfg.data.phantom {
        let mut spec = spec.clone();
        spec.seed = cfg.seed;
        phantom::generate_phantoms(&spec, run_dir)?
    } else if let Some(dicom_dir) = &cfg.data.dicom_dir {
        convert_dicom(run_dir, dicom_dir, cfg)?
    } else {
        return Err(Error::InvalidConfig(
            "convert needs either data.phantom or data.dicom_dir".into(),
        ));
    };

    let records = ingest::read_manifest(&manifest)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset("convert produced no slices".into()));
    }
    let patients: Vec<String> = records
        .iter()
        .map(|r| r.patient_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut spec = SplitSpec {
        train: cfg.data.train_patients,
        val: cfg.data.val_patients,
    };
    if spec.train + spec.val > patients.len() {
        // fall back to an 80/20 split when the configured counts exceed the
        // dataset (small smoke runs)
        spec.train = (patients.len() * 4 / 5).max(1).min(patients.len() - 1);
        spec.val = patients.len() - spec.train;
    }
    let split = ingest::split_patients(&patients, spec, cfg.seed)?;
    let split_path = run_dir.join("split.txt");
    let mut f = std::fs::File::create(&split_path).map_err(|e| Error::io(&split_path, e))?;
    for p in &split.train_patients {
        writeln!(f, "train={p}").map_err(|e| Error::io(&split_path, e))?;
    }
    for p in &split.val_patients {
        writeln!(f, "val={p}").map_err(|e| Error::io(&split_path, e))?;
    }

    let val_records: Vec<ManifestRecord> = records
        .iter()
        .filter(|r| split.val_patients.contains(&r.patient_id))
        .cloned()
        .collect();
    ingest::write_manifest(&val_records, &run_dir.join("val_manifest.txt"))?;
    Ok(())
}

fn convert_dicom(run_dir: &Path, dicom_dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let modality = Modality::parse(&cfg.data.modality)?;
    let window = if modality.is_mr() {
        ingest::WindowSpec::mr_default()
    } else {
        ingest::WindowSpec::ct_default()
    };
    let mut series_dirs: Vec<PathBuf> = std::fs::read_dir(dicom_dir)
        .map_err(|e| Error::io(dicom_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    series_dirs.sort();
    if series_dirs.is_empty() {
        return Err(Error::NoSeriesFound(dicom_dir.to_path_buf()));
    }
    let mut records = Vec::new();
    for dir in &series_dirs {
        let volume = ingest::load_volume(dir, Some(modality))?;
        for (idx, raw) in volume.slices.iter().enumerate() {
            let (pixels, _) = ingest::normalize(raw, &window)?;
            let rec = ManifestRecord {
                patient_id: volume.patient_id.clone(),
                slice_index: idx,
                modality: volume.modality,
                image: PathBuf::new(),
                mask: None,
            };
            let rel = slice_rel("slices", &rec);
            ingest::export_png(&pixels, &run_dir.join(&rel))?;
            records.push(ManifestRecord { image: rel, ..rec });
        }
    }
    let manifest = run_dir.join("manifest.txt");
    ingest::write_manifest(&records, &manifest)?;
    Ok(manifest)
}

fn stage_enhance(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("manifest.txt");
    require(&manifest, Stage::Convert)?;
    let records = ingest::read_manifest(&manifest)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        let slice = ingest::load_slice(run_dir, rec)?;
        let enhanced = if rec.modality.is_mr() {
            enhance::enhance_mr(&slice, &cfg.enhance_mr)?
        } else {
            enhance::enhance_ct(&slice, &cfg.enhance_ct)?
        };
        let rel = slice_rel("enhanced", rec);
        ingest::export_png(&enhanced.pixels, &run_dir.join(&rel))?;
        out.push(ManifestRecord {
            image: rel,
            ..rec.clone()
        });
    }
    ingest::write_manifest(&out, &run_dir.join("enhanced.txt"))
}

fn hed_network_config(cfg: &RunConfig, image_size: usize) -> HedConfig {
    let mut net = if cfg.hed.toy {
        HedConfig::toy(image_size)
    } else {
        cfg.hed.network.clone()
    };
    net.input_size = image_size;
    net.side_index_ct = cfg.hed.network.side_index_ct;
    net.side_index_mr = cfg.hed.network.side_index_mr;
    net.side_weights = cfg.hed.network.side_weights;
    net.target_thickness = cfg.hed.network.target_thickness;
    net
}

fn labeled_training_slices(
    run_dir: &Path,
    manifest: &Path,
    cfg: &RunConfig,
) -> Result<Vec<Slice>> {
    let (train, _) = read_split(run_dir)?;
    let records = ingest::read_manifest(manifest)?;
    let mut out = Vec::new();
    for rec in &records {
        if rec.mask.is_none() || !train.contains(&rec.patient_id) {
            continue;
        }
        let slice = ingest::load_slice(run_dir, rec)?;
        match &cfg.augment {
            Some(policy) => {
                let id = format!("{}/{}", rec.patient_id, rec.slice_index);
                out.extend(crate::augment::apply_policy(&slice, policy, cfg.seed, &id)?);
            }
            None => out.push(slice),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(
            "no labeled training slices; convert needs masks".into(),
        ));
    }
    Ok(out)
}

fn stage_train_hed(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("enhanced.txt");
    require(&manifest, Stage::Enhance)?;
    let slices = labeled_training_slices(run_dir, &manifest, cfg)?;
    let image_size = slices[0].pixels.dim().0;
    let net = hed_network_config(cfg, image_size);
    let samples: Vec<(Array2<f32>, Array2<u8>)> = slices
        .iter()
        .map(|s| {
            let target =
                hed::edge_target_from_mask(s.mask.as_ref().unwrap(), net.target_thickness);
            (s.pixels.clone(), target)
        })
        .collect();
    let mut model = hed::build_hed(&net, cfg.seed)?;
    let train_cfg = HedTrainConfig {
        iterations: cfg.hed.iterations,
        learning_rate: cfg.hed.learning_rate,
        seed: cfg.seed,
        log_path: Some(run_dir.join("logs/hed_loss.csv")),
        checkpoint_path: Some(run_dir.join("models/hed.safetensors")),
        resume_from: None,
    };
    hed::train_hed(&mut model, &samples, &train_cfg)?;
    Ok(())
}

fn stage_edges(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("enhanced.txt");
    require(&manifest, Stage::Enhance)?;
    let weights = run_dir.join("models/hed.safetensors");
    require(&weights, Stage::TrainHed)?;
    let records = ingest::read_manifest(&manifest)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset("enhanced manifest is empty".into()));
    }
    let first = ingest::load_slice(run_dir, &records[0])?;
    let net = hed_network_config(cfg, first.pixels.dim().0);
    let mut model = hed::build_hed(&net, cfg.seed)?;
    model.load(&weights)?;
    for rec in &records {
        let slice = ingest::load_slice(run_dir, rec)?;
        let outputs = model.forward(&slice.pixels)?;
        let edge = hed::select_edge_map(&outputs, rec.modality, &net)?;
        ingest::export_png(edge, &run_dir.join(slice_rel("edges", rec)))?;
    }
    Ok(())
}

fn stage_fuse(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("enhanced.txt");
    require(&manifest, Stage::Enhance)?;
    let records = ingest::read_manifest(&manifest)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        let slice = ingest::load_slice(run_dir, rec)?;
        let edge = if cfg.fuse.use_edges {
            let edge_path = run_dir.join(slice_rel("edges", rec));
            require(&edge_path, Stage::Edges)?;
            ingest::import_png(&edge_path)?
        } else {
            Array2::ones(slice.pixels.dim())
        };
        let fused = fuse::fuse(&slice, &edge)?;
        // all three channels are identical, so one grayscale plane stores
        // the sample losslessly
        let plane = fused.pixels.index_axis(ndarray::Axis(0), 0).to_owned();
        let rel = slice_rel("fused", rec);
        ingest::export_png(&plane, &run_dir.join(&rel))?;
        out.push(ManifestRecord {
            image: rel,
            ..rec.clone()
        });
    }
    ingest::write_manifest(&out, &run_dir.join("fused.txt"))
}

fn replicate(pixels: &Array2<f32>) -> Array3<f32> {
    let (h, w) = pixels.dim();
    let mut out = Array3::<f32>::zeros((3, h, w));
    for c in 0..3 {
        out.index_axis_mut(ndarray::Axis(0), c).assign(pixels);
    }
    out
}

fn detector_config(cfg: &RunConfig, image_size: usize) -> DetectorConfig {
    if cfg.seg.toy {
        DetectorConfig::toy(image_size)
    } else {
        DetectorConfig::deep(image_size)
    }
}

fn seg_samples(run_dir: &Path, records: &[ManifestRecord]) -> Result<Vec<SegSample>> {
    let mut out = Vec::new();
    for rec in records {
        let slice = ingest::load_slice(run_dir, rec)?;
        let Some(mask) = &slice.mask else { continue };
        out.push(SegSample::from_mask(replicate(&slice.pixels), mask)?);
    }
    Ok(out)
}

fn stage_train_seg(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("fused.txt");
    require(&manifest, Stage::Fuse)?;
    let (train_pat, val_pat) = read_split(run_dir)?;
    let records = ingest::read_manifest(&manifest)?;
    let train_recs: Vec<ManifestRecord> = records
        .iter()
        .filter(|r| train_pat.contains(&r.patient_id))
        .cloned()
        .collect();
    let val_recs: Vec<ManifestRecord> = records
        .iter()
        .filter(|r| val_pat.contains(&r.patient_id))
        .cloned()
        .collect();
    let train = seg_samples(run_dir, &train_recs)?;
    let val = seg_samples(run_dir, &val_recs)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no labeled detector training samples".into()));
    }
    let image_size = train[0].image.dim().1;
    let mut det = build_detector(&detector_config(cfg, image_size), cfg.seed)?;
    let train_cfg = SegTrainConfig {
        epochs: cfg.seg.epochs,
        learning_rate: cfg.seg.learning_rate,
        seed: cfg.seed,
        log_path: Some(run_dir.join("logs/seg_loss.csv")),
        checkpoint_path: Some(run_dir.join("models/detector.safetensors")),
        best_path: Some(run_dir.join("models/detector_best.safetensors")),
        resume_from: None,
    };
    train_seg(&mut det, &train, &val, &train_cfg)?;
    Ok(())
}

fn stage_infer(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("fused.txt");
    require(&manifest, Stage::Fuse)?;
    let best = run_dir.join("models/detector_best.safetensors");
    let latest = run_dir.join("models/detector.safetensors");
    let weights = if best.is_file() { best } else { latest };
    require(&weights, Stage::TrainSeg)?;
    let (_, val_pat) = read_split(run_dir)?;
    let records = ingest::read_manifest(&manifest)?;
    let val_recs: Vec<&ManifestRecord> = records
        .iter()
        .filter(|r| val_pat.contains(&r.patient_id))
        .collect();
    if val_recs.is_empty() {
        return Err(Error::EmptyDataset("no held-out slices to run on".into()));
    }
    let first = ingest::load_slice(run_dir, val_recs[0])?;
    let mut det = build_detector(&detector_config(cfg, first.pixels.dim().0), cfg.seed)?;
    det.load(&weights)?;
    for rec in val_recs {
        let slice = ingest::load_slice(run_dir, rec)?;
        let detections = detect(&det, &replicate(&slice.pixels))?;
        let best = detections
            .into_iter()
            .max_by(|a, b| a.score.total_cmp(&b.score));
        let mask = match best {
            Some(d) => d.mask,
            None => Array2::zeros(slice.pixels.dim()),
        };
        ingest::export_mask_png(&mask, &run_dir.join(slice_rel("pred_raw", rec)))?;
    }
    Ok(())
}

fn stage_postprocess(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("val_manifest.txt");
    require(&manifest, Stage::Convert)?;
    require(&run_dir.join("pred_raw"), Stage::Infer)?;
    for rec in &ingest::read_manifest(&manifest)? {
        let raw_path = run_dir.join(slice_rel("pred_raw", rec));
        require(&raw_path, Stage::Infer)?;
        let mut mask = ingest::import_mask_png(&raw_path)?;
        if cfg.postprocess.keep_largest_component {
            mask = postprocess::largest_component(&mask);
        }
        if cfg.postprocess.fill_holes {
            mask = postprocess::fill_holes(&mask);
        }
        ingest::export_mask_png(&mask, &run_dir.join(slice_rel("pred", rec)))?;
    }
    Ok(())
}

fn stage_eval(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = run_dir.join("val_manifest.txt");
    require(&manifest, Stage::Convert)?;
    require(&run_dir.join("pred"), Stage::Postprocess)?;
    let method = if cfg.fuse.use_edges {
        "edge-fused"
    } else {
        "baseline"
    };
    let report = eval::evaluate(&run_dir.join("pred"), &manifest, method)?;
    eval::write_report(&report, &run_dir.join("reports"))?;
    // a handful of overlays for visual inspection
    let records = ingest::read_manifest(&manifest)?;
    for rec in records.iter().take(4) {
        let Some(mask_rel) = &rec.mask else { continue };
        let gt = ingest::import_mask_png(&run_dir.join(mask_rel))?;
        let pred_path = run_dir.join(slice_rel("pred", rec));
        let pred = if pred_path.is_file() {
            ingest::import_mask_png(&pred_path)?
        } else {
            Array2::zeros(gt.dim())
        };
        let pixels = ingest::import_png(&run_dir.join(&rec.image))?;
        let out = run_dir.join(format!(
            "reports/overlays/{}_{:04}.png",
            rec.patient_id, rec.slice_index
        ));
        eval::overlay(&pixels, &pred, &gt, &out)?;
    }
    Ok(())
}

/// Runs the given stages in order against `run_dir`.
pub fn run_pipeline(run_dir: &Path, cfg: &RunConfig, stages: &[Stage]) -> Result<()> {
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    for &stage in stages {
        match stage {
            Stage::Convert => stage_convert(run_dir, cfg)?,
            Stage::Enhance => stage_enhance(run_dir, cfg)?,
            Stage::TrainHed => stage_train_hed(run_dir, cfg)?,
            Stage::Edges => stage_edges(run_dir, cfg)?,
            Stage::Fuse => stage_fuse(run_dir, cfg)?,
            Stage::TrainSeg => stage_train_seg(run_dir, cfg)?,
            Stage::Infer => stage_infer(run_dir, cfg)?,
            Stage::Postprocess => stage_postprocess(run_dir, cfg)?,
            Stage::Eval => stage_eval(run_dir, cfg)?,
        }
        update_run_manifest(run_dir, cfg, stage)?;
    }
    Ok(())
}

/// Runs every stage start to finish.
pub fn run_all(run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    run_pipeline(run_dir, cfg, &Stage::ALL)
}

/// Mean held-out Dice of a finished run.
pub fn run_mean_dice(run_dir: &Path) -> Result<f64> {
    let report = eval::evaluate(
        &run_dir.join("pred"),
        &run_dir.join("val_manifest.txt"),
        "run",
    )?;
    Ok(report.rows[0].mean_dice)
}

/// Trains the detector twice on the same data, once on the enhanced image
/// alone and once on the edge-fused input, and writes the comparison table
/// to `<run_dir>/ablation.md`.
pub fn run_ablation(run_dir: &Path, cfg: &RunConfig) -> Result<Vec<ComparisonRow>> {
    let mut baseline_cfg = cfg.clone();
    baseline_cfg.fuse.use_edges = false;
    let mut fused_cfg = cfg.clone();
    fused_cfg.fuse.use_edges = true;

    let baseline_dir = run_dir.join("baseline");
    let fused_dir = run_dir.join("fused");
    run_all(&baseline_dir, &baseline_cfg)?;
    run_all(&fused_dir, &fused_cfg)?;

    let baseline = eval::evaluate(
        &baseline_dir.join("pred"),
        &baseline_dir.join("val_manifest.txt"),
        "baseline",
    )?;
    let fused = eval::evaluate(
        &fused_dir.join("pred"),
        &fused_dir.join("val_manifest.txt"),
        "edge-fused",
    )?;
    let rows = eval::compare(&baseline, &fused)?;
    eval::write_comparison(&rows, &run_dir.join("ablation.md"))?;
    Ok(rows)
}

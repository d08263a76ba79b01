//! Dice evaluation: per-slice and per-patient scores, mean±std report rows,
//! side-by-side comparisons, and contour overlays.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{self, Modality};

/// One aggregate row: method, modality, slice count, mean and std of Dice.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub modality: Modality,
    pub n_slices: usize,
    pub mean_dice: f64,
    pub std_dice: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// (patient, mean Dice over that patient's slices)
    pub per_patient: Vec<(String, f64)>,
    /// (slice id "patient/index", Dice)
    pub per_slice: Vec<(String, f64)>,
    /// Ground-truth slices that had no prediction file and were scored
    /// against an empty prediction.
    pub missing_predictions: Vec<String>,
}

/// Dice coefficient `2|P∩G| / (|P|+|G|)`; 1.0 when both masks are empty.
pub fn dice_coefficient(pred: &Array2<u8>, gt: &Array2<u8>) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::ShapeMismatch(pred.dim(), gt.dim()));
    }
    let mut inter = 0u64;
    let mut p = 0u64;
    let mut g = 0u64;
    for (&a, &b) in pred.iter().zip(gt.iter()) {
        let a = (a != 0) as u64;
        let b = (b != 0) as u64;
        inter += a & b;
        p += a;
        g += b;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Scores every ground-truth slice in the manifest against the prediction
/// PNG at `<pred_dir>/<patient>/<index:04>.png`. Slices without a prediction
/// file are scored as empty predictions and recorded.
pub fn evaluate(pred_dir: &Path, gt_manifest: &Path, method: &str) -> Result<EvalReport> {
    let records = ingest::read_manifest(gt_manifest)?;
    let manifest_dir = gt_manifest.parent().unwrap_or(Path::new("."));
    let mut per_slice = Vec::new();
    let mut per_patient_acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut missing = Vec::new();
    let mut modality = None;
    for rec in &records {
        let Some(mask_rel) = &rec.mask else { continue };
        let gt = ingest::import_mask_png(&manifest_dir.join(mask_rel))?;
        let pred_path = pred_dir
            .join(&rec.patient_id)
            .join(format!("{:04}.png", rec.slice_index));
        let pred = if pred_path.is_file() {
            ingest::import_mask_png(&pred_path)?
        } else {
            missing.push(slice_id(rec));
            Array2::zeros(gt.dim())
        };
        let dice = dice_coefficient(&pred, &gt)?;
        per_slice.push((slice_id(rec), dice));
        per_patient_acc
            .entry(rec.patient_id.clone())
            .or_default()
            .push(dice);
        modality.get_or_insert(rec.modality);
    }
    if per_slice.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no ground-truth masks in {gt_manifest:?}"
        )));
    }
    let values: Vec<f64> = per_slice.iter().map(|(_, d)| *d).collect();
    let (mean, std) = mean_std(&values);
    Ok(EvalReport {
        rows: vec![ReportRow {
            method: method.to_string(),
            modality: modality.unwrap(),
            n_slices: per_slice.len(),
            mean_dice: mean,
            std_dice: std,
        }],
        per_patient: per_patient_acc
            .into_iter()
            .map(|(p, v)| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                (p, m)
            })
            .collect(),
        per_slice,
        missing_predictions: missing,
    })
}

fn slice_id(rec: &ingest::ManifestRecord) -> String {
    format!("{}/{}", rec.patient_id, rec.slice_index)
}

/// Unweighted mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One comparison line: the same slice set scored by two methods.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub modality: Modality,
    pub n_slices: usize,
    pub method_a: String,
    pub mean_a: f64,
    pub std_a: f64,
    pub method_b: String,
    pub mean_b: f64,
    pub std_b: f64,
    pub delta: f64,
}

/// Side-by-side comparison of two reports over the same slice set; `delta`
/// is `mean_b - mean_a`.
pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Vec<ComparisonRow>> {
    let ids_a: Vec<&String> = a.per_slice.iter().map(|(id, _)| id).collect();
    let ids_b: Vec<&String> = b.per_slice.iter().map(|(id, _)| id).collect();
    if ids_a != ids_b {
        return Err(Error::InvalidConfig(
            "compare requires identical slice sets".into(),
        ));
    }
    Ok(a.rows
        .iter()
        .zip(b.rows.iter())
        .map(|(ra, rb)| ComparisonRow {
            modality: ra.modality,
            n_slices: ra.n_slices,
            method_a: ra.method.clone(),
            mean_a: ra.mean_dice,
            std_a: ra.std_dice,
            method_b: rb.method.clone(),
            mean_b: rb.mean_dice,
            std_b: rb.std_dice,
            delta: rb.mean_dice - ra.mean_dice,
        })
        .collect())
}

/// Writes `metrics.csv` (slice-level) and `report.md` (aggregate rows shaped
/// method | modality | N | mean±std) under `out_dir`.
pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("metrics.csv");
    let mut csv = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(csv, "slice,dice").map_err(|e| Error::io(&csv_path, e))?;
    for (id, dice) in &report.per_slice {
        writeln!(csv, "{id},{dice:.6}").map_err(|e| Error::io(&csv_path, e))?;
    }
    let md_path = out_dir.join("report.md");
    let mut md = std::fs::File::create(&md_path).map_err(|e| Error::io(&md_path, e))?;
    writeln!(md, "| Method | Modality | N | Dice |").map_err(|e| Error::io(&md_path, e))?;
    writeln!(md, "|---|---|---|---|").map_err(|e| Error::io(&md_path, e))?;
    for row in &report.rows {
        writeln!(
            md,
            "| {} | {} | {} | {} |",
            row.method,
            row.modality,
            row.n_slices,
            format_mean_std(row.mean_dice, row.std_dice)
        )
        .map_err(|e| Error::io(&md_path, e))?;
    }
    writeln!(md).map_err(|e| Error::io(&md_path, e))?;
    writeln!(md, "Per-patient mean Dice:").map_err(|e| Error::io(&md_path, e))?;
    for (p, d) in &report.per_patient {
        writeln!(md, "- {p}: {d:.4}").map_err(|e| Error::io(&md_path, e))?;
    }
    if !report.missing_predictions.is_empty() {
        writeln!(
            md,
            "\nMissing predictions scored as empty: {}",
            report.missing_predictions.len()
        )
        .map_err(|e| Error::io(&md_path, e))?;
    }
    Ok(())
}

/// Writes the comparison delta table as markdown.
pub fn write_comparison(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "| Modality | N | {} | {} | Delta |",
        rows.first().map(|r| r.method_a.as_str()).unwrap_or("A"),
        rows.first().map(|r| r.method_b.as_str()).unwrap_or("B"))
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "|---|---|---|---|---|").map_err(|e| Error::io(path, e))?;
    for row in rows {
        writeln!(
            f,
            "| {} | {} | {} | {} | {:+.4} |",
            row.modality,
            row.n_slices,
            format_mean_std(row.mean_a, row.std_a),
            format_mean_std(row.mean_b, row.std_b),
            row.delta
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

/// Pixels of the mask with at least one 4-neighbor outside the mask
/// (image borders count as outside).
pub fn contour(mask: &Array2<u8>) -> Array2<u8> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        if mask[(r, c)] == 0 {
            return 0;
        }
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in neighbors {
            if nr >= h || nc >= w || mask[(nr, nc)] == 0 {
                return 1;
            }
        }
        0
    })
}

/// Renders the slice with the ground-truth contour in green and the
/// prediction contour in red, plus legend swatches in the top-left corner.
pub fn overlay(
    pixels: &Array2<f32>,
    pred: &Array2<u8>,
    gt: &Array2<u8>,
    path: &Path,
) -> Result<()> {
    if pixels.dim() != pred.dim() || pixels.dim() != gt.dim() {
        return Err(Error::ShapeMismatch(pixels.dim(), pred.dim()));
    }
    let (h, w) = pixels.dim();
    let gt_ring = contour(gt);
    let pred_ring = contour(pred);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for ((r, c), &v) in pixels.indexed_iter() {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut px = [g, g, g];
        if gt_ring[(r, c)] != 0 {
            px = [0, 255, 0];
        }
        if pred_ring[(r, c)] != 0 {
            px = [255, 0, 0];
        }
        img.put_pixel(c as u32, r as u32, image::Rgb(px));
    }
    // legend: green = ground truth, red = prediction
    for (i, color) in [[0u8, 255, 0], [255, 0, 0]].iter().enumerate() {
        for dr in 0..4u32.min(h as u32) {
            for dc in 0..4u32.min(w as u32) {
                let x = (2 + i as u32 * 6 + dc).min(w as u32 - 1);
                let y = (2 + dr).min(h as u32 - 1);
                img.put_pixel(x, y, image::Rgb(*color));
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path)?;
    Ok(())
}

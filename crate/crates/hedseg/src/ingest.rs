//! Dataset ingest: DICOM series reading, intensity normalization,
//! patient-level splits, and the PNG + manifest run format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dicom_dictionary_std::tags;
use dicom_object::open_file;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Image modality. CT intensities are Hounsfield units; MR intensities are
/// scanner-arbitrary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Modality {
    Ct,
    MrT1In,
    MrT2,
}

impl Modality {
    pub fn is_mr(self) -> bool {
        matches!(self, Modality::MrT1In | Modality::MrT2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ct => "ct",
            Modality::MrT1In => "mr-t1-in",
            Modality::MrT2 => "mr-t2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(Modality::Ct),
            "mr-t1-in" | "mr-t1" | "t1" => Ok(Modality::MrT1In),
            "mr-t2" | "t2" | "mr" => Ok(Modality::MrT2),
            other => Err(Error::UnknownModality(other.to_string())),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One patient's image stack as read from disk, before normalization.
#[derive(Debug, Clone)]
pub struct RawVolume {
    pub patient_id: String,
    pub modality: Modality,
    /// Slices ordered by acquisition position, each an integer intensity grid.
    pub slices: Vec<Array2<i32>>,
    /// Row/column pixel spacing in mm.
    pub pixel_spacing: (f64, f64),
    pub slice_thickness: f64,
}

/// One 2-D grayscale slice with pixels in `[0,1]` and an optional binary
/// liver mask.
#[derive(Debug, Clone)]
pub struct Slice {
    pub patient_id: String,
    pub slice_index: usize,
    pub modality: Modality,
    pub pixels: Array2<f32>,
    pub mask: Option<Array2<u8>>,
}

impl Slice {
    /// Checks the `[0,1]` pixel range and mask shape/binarity invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidConfig("pixel outside [0,1]".into()));
        }
        if let Some(mask) = &self.mask {
            if mask.dim() != self.pixels.dim() {
                return Err(Error::ShapeMismatch(self.pixels.dim(), mask.dim()));
            }
            if !mask.iter().all(|&v| v <= 1) {
                return Err(Error::InvalidConfig("mask value outside {0,1}".into()));
            }
        }
        Ok(())
    }
}

/// Patient-level train/validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_patients: Vec<String>,
    pub val_patients: Vec<String>,
}

/// Intensity window: a HU window for CT, a percentile window for MR.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub enum WindowSpec {
    /// Clamp HU to `[center - width/2, center + width/2]` and map to `[0,1]`.
    Ct { center: f64, width: f64 },
    /// Map the `[low, high]` intensity percentiles to `[0,1]` with clamping.
    Mr { low_percentile: f64, high_percentile: f64 },
}

impl WindowSpec {
    /// Common abdominal soft-tissue window.
    pub fn ct_default() -> Self {
        WindowSpec::Ct {
            center: 40.0,
            width: 400.0,
        }
    }

    pub fn mr_default() -> Self {
        WindowSpec::Mr {
            low_percentile: 0.01,
            high_percentile: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowSpec::Ct { width, .. } if width <= 0.0 => {
                Err(Error::InvalidConfig("CT window width must be > 0".into()))
            }
            WindowSpec::Mr {
                low_percentile: lo,
                high_percentile: hi,
            } if !(0.0..1.0).contains(&lo) || hi > 1.0 || lo >= hi => Err(Error::InvalidConfig(
                "MR percentiles must satisfy 0 <= low < high <= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Reads one DICOM series from a directory into an ordered volume.
///
/// All files must belong to a single series; slices are sorted by the slice
/// axis of `ImagePositionPatient` (falling back to `InstanceNumber` when no
/// position is present on any file).
pub fn load_volume(dir: &Path, modality_hint: Option<Modality>) -> Result<RawVolume> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::NoSeriesFound(dir.to_path_buf()));
    }

    struct Loaded {
        position: f64,
        pixels: Array2<i32>,
    }

    let mut series_uid: Option<String> = None;
    let mut patient_id = String::new();
    let mut modality: Option<Modality> = None;
    let mut pixel_spacing = (1.0, 1.0);
    let mut slice_thickness = 1.0;
    let mut dims: Option<(usize, usize)> = None;
    let mut any_position = false;
    let mut loaded: Vec<Loaded> = Vec::new();

    for path in &entries {
        let obj = open_file(path).map_err(|e| Error::Dicom(format!("{path:?}: {e}")))?;

        let uid = element_str(&obj, tags::SERIES_INSTANCE_UID).unwrap_or_default();
        match &series_uid {
            None => series_uid = Some(uid),
            Some(existing) if *existing != uid => {
                return Err(Error::MixedSeries(dir.to_path_buf()));
            }
            _ => {}
        }
        if patient_id.is_empty() {
            patient_id = element_str(&obj, tags::PATIENT_ID).unwrap_or_else(|| "unknown".into());
        }
        if modality.is_none() {
            modality = match element_str(&obj, tags::MODALITY).as_deref() {
                Some("CT") => Some(Modality::Ct),
                Some("MR") => Some(modality_hint.unwrap_or(Modality::MrT2)),
                _ => modality_hint,
            };
        }
        if let Some(sp) = element_str(&obj, tags::PIXEL_SPACING) {
            let parts: Vec<f64> = sp.split('\\').filter_map(|s| s.trim().parse().ok()).collect();
            if parts.len() == 2 {
                pixel_spacing = (parts[0], parts[1]);
            }
        }
        if let Some(th) = element_str(&obj, tags::SLICE_THICKNESS) {
            if let Ok(v) = th.trim().parse() {
                slice_thickness = v;
            }
        }

        let rows = element_u16(&obj, tags::ROWS)
            .ok_or_else(|| Error::Dicom(format!("{path:?}: missing Rows")))? as usize;
        let cols = element_u16(&obj, tags::COLUMNS)
            .ok_or_else(|| Error::Dicom(format!("{path:?}: missing Columns")))? as usize;
        match dims {
            None => dims = Some((rows, cols)),
            Some(expected) if expected != (rows, cols) => {
                return Err(Error::InconsistentDimensions {
                    expected,
                    got: (rows, cols),
                    path: path.clone(),
                });
            }
            _ => {}
        }

        let position = match element_str(&obj, tags::IMAGE_POSITION_PATIENT) {
            Some(p) => {
                let z: Option<f64> = p.split('\\').nth(2).and_then(|s| s.trim().parse().ok());
                match z {
                    Some(z) => {
                        any_position = true;
                        z
                    }
                    None => return Err(Error::MissingSpatialMetadata(path.clone())),
                }
            }
            None => match element_str(&obj, tags::INSTANCE_NUMBER) {
                Some(n) => n
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::MissingSpatialMetadata(path.clone()))?,
                None => return Err(Error::MissingSpatialMetadata(path.clone())),
            },
        };

        let pixels = decode_pixels(&obj, rows, cols, path)?;
        loaded.push(Loaded { position, pixels });
    }
    let _ = any_position;

    loaded.sort_by(|a, b| a.position.total_cmp(&b.position));

    Ok(RawVolume {
        patient_id,
        modality: modality.ok_or_else(|| {
            Error::Dicom(format!("{dir:?}: modality not in metadata and no hint given"))
        })?,
        slices: loaded.into_iter().map(|l| l.pixels).collect(),
        pixel_spacing,
        slice_thickness,
    })
}

fn element_str(obj: &dicom_object::DefaultDicomObject, tag: dicom_core::Tag) -> Option<String> {
    obj.element(tag).ok().and_then(|e| e.to_str().ok()).map(|s| s.to_string())
}

fn element_u16(obj: &dicom_object::DefaultDicomObject, tag: dicom_core::Tag) -> Option<u16> {
    obj.element(tag).ok().and_then(|e| e.to_int().ok())
}

/// Decodes uncompressed 16-bit pixel data, applying rescale slope/intercept
/// so CT values come out in HU.
fn decode_pixels(
    obj: &dicom_object::DefaultDicomObject,
    rows: usize,
    cols: usize,
    path: &Path,
) -> Result<Array2<i32>> {
    let bits = element_u16(obj, tags::BITS_ALLOCATED).unwrap_or(16);
    if bits != 16 {
        return Err(Error::Dicom(format!("{path:?}: only 16-bit pixel data supported")));
    }
    let signed = element_u16(obj, tags::PIXEL_REPRESENTATION).unwrap_or(0) == 1;
    let slope: f64 = element_str(obj, tags::RESCALE_SLOPE)
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(1.0);
    let intercept: f64 = element_str(obj, tags::RESCALE_INTERCEPT)
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0.0);

    let data = obj
        .element(tags::PIXEL_DATA)
        .map_err(|e| Error::Dicom(format!("{path:?}: missing PixelData: {e}")))?
        .to_bytes()
        .map_err(|e| Error::Dicom(format!("{path:?}: {e}")))?;
    if data.len() < rows * cols * 2 {
        return Err(Error::Dicom(format!("{path:?}: pixel data shorter than Rows*Columns")));
    }

    let mut out = Array2::<i32>::zeros((rows, cols));
    for (i, v) in out.iter_mut().enumerate() {
        let raw = u16::from_le_bytes([data[2 * i], data[2 * i + 1]]);
        let stored = if signed { raw as i16 as i32 } else { raw as i32 };
        *v = (stored as f64 * slope + intercept).round() as i32;
    }
    Ok(out)
}

/// Maps an integer intensity grid to `[0,1]` pixels under the given window.
///
/// A constant MR slice (degenerate percentile window) maps to all zeros and
/// the returned flag is set so callers can log it.
pub fn normalize(raw: &Array2<i32>, window: &WindowSpec) -> Result<(Array2<f32>, bool)> {
    window.validate()?;
    match *window {
        WindowSpec::Ct { center, width } => {
            let lo = center - width / 2.0;
            let out = raw.mapv(|v| (((v as f64 - lo) / width).clamp(0.0, 1.0)) as f32);
            Ok((out, false))
        }
        WindowSpec::Mr {
            low_percentile,
            high_percentile,
        } => {
            let lo = percentile(raw, low_percentile);
            let hi = percentile(raw, high_percentile);
            if hi <= lo {
                return Ok((Array2::zeros(raw.dim()), true));
            }
            let out = raw.mapv(|v| (((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0)) as f32);
            Ok((out, false))
        }
    }
}

/// Linear-interpolation percentile over all grid values, `fraction` in `[0,1]`.
pub fn percentile(values: &Array2<i32>, fraction: f64) -> f64 {
    let mut sorted: Vec<i32> = values.iter().copied().collect();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 1 {
        return sorted[0] as f64;
    }
    let pos = fraction * (n - 1) as f64;
    let idx = pos.floor() as usize;
    let frac = pos - idx as f64;
    if idx + 1 >= n {
        sorted[n - 1] as f64
    } else {
        sorted[idx] as f64 * (1.0 - frac) + sorted[idx + 1] as f64 * frac
    }
}

/// Requested patient counts per split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
}

/// Deterministic, patient-disjoint split: shuffles patients with the seeded
/// generator and takes the requested counts in order.
pub fn split_patients(patient_ids: &[String], spec: SplitSpec, seed: u64) -> Result<DatasetSplit> {
    if spec.train + spec.val > patient_ids.len() {
        return Err(Error::SplitTooLarge {
            requested: spec.train + spec.val,
            available: patient_ids.len(),
        });
    }
    let mut ids: Vec<String> = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train_patients = ids[..spec.train].to_vec();
    let val_patients = ids[spec.train..spec.train + spec.val].to_vec();
    Ok(DatasetSplit {
        train_patients,
        val_patients,
    })
}

/// Writes slice pixels as a 16-bit grayscale PNG. Round-tripping through
/// [`import_png`] reproduces every pixel to within `1/65535`.
pub fn export_png(pixels: &Array2<f32>, path: &Path) -> Result<()> {
    let (h, w) = pixels.dim();
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for ((r, c), &v) in pixels.indexed_iter() {
        let q = (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16;
        img.put_pixel(c as u32, r as u32, image::Luma([q]));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path)?;
    Ok(())
}

/// Reads a grayscale PNG (8- or 16-bit) back into `[0,1]` pixels.
pub fn import_png(path: &Path) -> Result<Array2<f32>> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let mut out = Array2::<f32>::zeros((h as usize, w as usize));
    for (c, r, p) in img.enumerate_pixels() {
        out[(r as usize, c as usize)] = p.0[0] as f32 / 65535.0;
    }
    Ok(out)
}

/// Writes a binary mask as an 8-bit PNG with values {0, 255}.
pub fn export_mask_png(mask: &Array2<u8>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for ((r, c), &v) in mask.indexed_iter() {
        img.put_pixel(c as u32, r as u32, image::Luma([if v > 0 { 255 } else { 0 }]));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path)?;
    Ok(())
}

/// Reads an 8-bit mask PNG back to {0,1} values (any nonzero pixel is 1).
pub fn import_mask_png(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let mut out = Array2::<u8>::zeros((h as usize, w as usize));
    for (c, r, p) in img.enumerate_pixels() {
        out[(r as usize, c as usize)] = (p.0[0] > 127) as u8;
    }
    Ok(out)
}

/// One manifest line: where a slice's image (and optional mask) live,
/// relative to the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub patient_id: String,
    pub slice_index: usize,
    pub modality: Modality,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

/// Writes manifest records in the line-delimited `key=value` format, one
/// record per line.
pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        write!(
            w,
            "patient={} index={} modality={} image={}",
            rec.patient_id,
            rec.slice_index,
            rec.modality,
            rec.image.display()
        )
        .map_err(|e| Error::io(path, e))?;
        if let Some(mask) = &rec.mask {
            write!(w, " mask={}", mask.display()).map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::ManifestParse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected key=value, got {part:?}"),
            })?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields.get(k).copied().ok_or_else(|| Error::ManifestParse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("missing field {k}"),
            })
        };
        records.push(ManifestRecord {
            patient_id: get("patient")?.to_string(),
            slice_index: get("index")?.parse().map_err(|e| Error::ManifestParse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad index: {e}"),
            })?,
            modality: Modality::parse(get("modality")?)?,
            image: PathBuf::from(get("image")?),
            mask: fields.get("mask").map(PathBuf::from),
        });
    }
    Ok(records)
}

/// Loads a manifest record's image and mask (paths resolved against the
/// manifest's directory) into a [`Slice`].
pub fn load_slice(manifest_dir: &Path, rec: &ManifestRecord) -> Result<Slice> {
    let pixels = import_png(&manifest_dir.join(&rec.image))?;
    let mask = match &rec.mask {
        Some(m) => Some(import_mask_png(&manifest_dir.join(m))?),
        None => None,
    };
    Ok(Slice {
        patient_id: rec.patient_id.clone(),
        slice_index: rec.slice_index,
        modality: rec.modality,
        pixels,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ct_window_midpoint_maps_to_half() {
        let raw = array![[40i32]];
        let (out, _) = normalize(&raw, &WindowSpec::ct_default()).unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ct_window_clamps_below() {
        let raw = array![[-1000i32, 3000]];
        let (out, _) = normalize(&raw, &WindowSpec::ct_default()).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
        assert_eq!(out[(0, 1)], 1.0);
    }

    #[test]
    fn mr_percentile_normalization_matches_oracle() {
        // 1000 distinct values; oracle computes the affine map directly.
        let raw = Array2::from_shape_vec((20, 50), (0..1000).collect()).unwrap();
        let window = WindowSpec::Mr {
            low_percentile: 0.01,
            high_percentile: 0.99,
        };
        let (out, degenerate) = normalize(&raw, &window).unwrap();
        assert!(!degenerate);
        let lo = percentile(&raw, 0.01);
        let hi = percentile(&raw, 0.99);
        for (&r, &o) in raw.iter().zip(out.iter()) {
            let expected = ((r as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) as f32;
            assert!((o - expected).abs() < 1e-6);
        }
        // value 990 sits at or above the 99th percentile
        let v990 = ((990.0 - lo) / (hi - lo)).clamp(0.0, 1.0);
        assert!(v990 >= 0.99);
    }

    #[test]
    fn constant_mr_slice_is_degenerate() {
        let raw = Array2::from_elem((4, 4), 7i32);
        let (out, degenerate) = normalize(&raw, &WindowSpec::mr_default()).unwrap();
        assert!(degenerate);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_stays_in_unit_interval() {
        let raw = Array2::from_shape_fn((16, 16), |(r, c)| (r as i32 * 7919 - c as i32 * 104729) % 5000);
        for window in [WindowSpec::ct_default(), WindowSpec::mr_default()] {
            let (out, _) = normalize(&raw, &window).unwrap();
            assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let ids: Vec<String> = (0..20).map(|i| format!("p{i:02}")).collect();
        let spec = SplitSpec { train: 16, val: 4 };
        let a = split_patients(&ids, spec, 42).unwrap();
        let b = split_patients(&ids, spec, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_patients.len(), 16);
        assert_eq!(a.val_patients.len(), 4);
        for p in &a.val_patients {
            assert!(!a.train_patients.contains(p));
        }
    }

    #[test]
    fn mr_split_seven_two() {
        let ids: Vec<String> = (0..9).map(|i| format!("m{i}")).collect();
        let s = split_patients(&ids, SplitSpec { train: 7, val: 2 }, 0).unwrap();
        assert_eq!((s.train_patients.len(), s.val_patients.len()), (7, 2));
    }

    #[test]
    fn split_rejects_oversubscription() {
        let ids: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        assert!(matches!(
            split_patients(&ids, SplitSpec { train: 21, val: 0 }, 0),
            Err(Error::SplitTooLarge { .. })
        ));
    }

    #[test]
    fn png_round_trip_zero_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.png");
        let pixels = Array2::<f32>::zeros((8, 8));
        export_png(&pixels, &path).unwrap();
        let back = import_png(&path).unwrap();
        assert_eq!(pixels, back);
    }

    #[test]
    fn png_round_trip_random_slice_within_quantum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        let pixels = Array2::from_shape_fn((16, 16), |(r, c)| {
            ((r * 31 + c * 17) % 97) as f32 / 96.0
        });
        export_png(&pixels, &path).unwrap();
        let back = import_png(&path).unwrap();
        for (&a, &b) in pixels.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 1.0 / 65535.0 + 1e-9);
        }
    }

    #[test]
    fn mask_png_is_binary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = array![[0u8, 1], [1, 0]];
        export_mask_png(&mask, &path).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        let vals: std::collections::BTreeSet<u8> = img.pixels().map(|p| p.0[0]).collect();
        assert!(vals.iter().all(|&v| v == 0 || v == 255));
        assert_eq!(import_mask_png(&path).unwrap(), mask);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let records = vec![
            ManifestRecord {
                patient_id: "p00".into(),
                slice_index: 0,
                modality: Modality::Ct,
                image: "slices/p00/0000.png".into(),
                mask: Some("slices/p00/0000_mask.png".into()),
            },
            ManifestRecord {
                patient_id: "p01".into(),
                slice_index: 3,
                modality: Modality::MrT2,
                image: "slices/p01/0003.png".into(),
                mask: None,
            },
        ];
        write_manifest(&records, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), records);
    }

    #[test]
    fn empty_directory_is_no_series() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_volume(dir.path(), None),
            Err(Error::NoSeriesFound(_))
        ));
    }
}

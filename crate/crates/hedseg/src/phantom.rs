//! Synthetic phantom dataset: each image holds one smooth "liver" ellipse
//! (the labeled class) plus unlabeled distractor shapes and additive noise,
//! with masks exact by construction. Used so training and acceptance runs
//! never require clinical data.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{self, ManifestRecord, Modality};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PhantomSpec {
    pub count: usize,
    pub image_size: usize,
    /// Liver ellipse semi-axis range as a fraction of the image size.
    pub liver_axis_range: (f64, f64),
    /// Maximum ratio between the two semi-axes.
    pub max_eccentricity: f64,
    pub distractor_count_range: (usize, usize),
    /// Additive uniform noise amplitude.
    pub noise_level: f64,
    pub slices_per_patient: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            count: 200,
            image_size: 128,
            liver_axis_range: (0.12, 0.28),
            max_eccentricity: 1.8,
            distractor_count_range: (1, 4),
            noise_level: 0.05,
            slices_per_patient: 10,
            seed: 0,
        }
    }
}

/// Rotated ellipse with an analytic interior predicate.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
}

impl Ellipse {
    /// True when image position (row, col) lies inside the ellipse.
    pub fn contains(&self, r: f64, c: f64) -> bool {
        let (cy, cx) = self.center;
        let (a, b) = self.semi_axes;
        let (dy, dx) = (r - cy, c - cx);
        let (sin, cos) = self.angle.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct PhantomImage {
    pub pixels: Array2<f32>,
    pub mask: Array2<u8>,
    pub ellipse: Ellipse,
}

/// Generates the full phantom set deterministically from `PhantomSpec::seed`.
pub fn phantom_images(spec: &PhantomSpec) -> Result<Vec<PhantomImage>> {
    if spec.image_size == 0 {
        return Err(Error::InvalidConfig("phantom image_size must be > 0".into()));
    }
    if spec.noise_level < 0.0 {
        return Err(Error::InvalidConfig("phantom noise_level must be >= 0".into()));
    }
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
        out.push(generate_one(spec, &mut rng));
    }
    Ok(out)
}

fn generate_one(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> PhantomImage {
    let n = spec.image_size;
    let nf = n as f64;
    let (lo, hi) = spec.liver_axis_range;
    let a = rng.gen_range(lo..hi) * nf;
    let ecc = rng.gen_range(1.0..spec.max_eccentricity);
    let b = (a / ecc).max(2.0);
    let margin = a.max(b) + 2.0;
    let ellipse = Ellipse {
        center: (
            rng.gen_range(margin..nf - margin),
            rng.gen_range(margin..nf - margin),
        ),
        semi_axes: (a, b),
        angle: rng.gen_range(0.0..std::f64::consts::PI),
    };

    let mask = Array2::from_shape_fn((n, n), |(r, c)| {
        ellipse.contains(r as f64, c as f64) as u8
    });

    let background = rng.gen_range(0.05..0.15);
    let liver_level = rng.gen_range(0.55..0.70);
    let mut pixels = Array2::<f32>::from_elem((n, n), background as f32);

    // Smooth radial shading inside the liver ellipse.
    for ((r, c), p) in pixels.indexed_iter_mut() {
        if mask[(r, c)] == 1 {
            let (cy, cx) = ellipse.center;
            let d = (((r as f64 - cy) / a).powi(2) + ((c as f64 - cx) / a).powi(2)).sqrt();
            *p = (liver_level - 0.08 * d) as f32;
        }
    }

    // Distractors: bright or dark circles and squares, kept clear of the
    // liver ellipse so the label stays unambiguous.
    let (dlo, dhi) = spec.distractor_count_range;
    let n_distractors = if dhi > dlo { rng.gen_range(dlo..=dhi) } else { dlo };
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_distractors && attempts < 50 {
        attempts += 1;
        let radius = rng.gen_range(3.0..(nf * 0.08).max(3.5));
        let cy = rng.gen_range(radius..nf - radius);
        let cx = rng.gen_range(radius..nf - radius);
        let (ey, ex) = ellipse.center;
        let clearance = ((cy - ey).powi(2) + (cx - ex).powi(2)).sqrt();
        if clearance < a.max(b) + radius + 3.0 {
            continue;
        }
        let level = if rng.gen_bool(0.5) {
            rng.gen_range(0.80..0.95)
        } else {
            rng.gen_range(0.25..0.40)
        };
        let square = rng.gen_bool(0.3);
        for r in (cy - radius).floor() as usize..=(cy + radius).ceil() as usize {
            for c in (cx - radius).floor() as usize..=(cx + radius).ceil() as usize {
                if r >= n || c >= n {
                    continue;
                }
                let inside = if square {
                    (r as f64 - cy).abs() <= radius && (c as f64 - cx).abs() <= radius
                } else {
                    ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt() <= radius
                };
                if inside {
                    pixels[(r, c)] = level as f32;
                }
            }
        }
        placed += 1;
    }

    if spec.noise_level > 0.0 {
        for p in pixels.iter_mut() {
            let noise = rng.gen_range(-spec.noise_level..spec.noise_level);
            *p = (*p + noise as f32).clamp(0.0, 1.0);
        }
    }

    PhantomImage {
        pixels,
        mask,
        ellipse,
    }
}

/// Writes the phantom set in the ingest run format (16-bit slice PNGs, 8-bit
/// mask PNGs, plain-text manifest) and returns the manifest path.
pub fn generate_phantoms(spec: &PhantomSpec, out_dir: &Path) -> Result<PathBuf> {
    let images = phantom_images(spec)?;
    let mut records = Vec::new();
    let per_patient = spec.slices_per_patient.max(1);
    for (i, img) in images.iter().enumerate() {
        let patient_id = format!("ph{:03}", i / per_patient);
        let slice_index = i % per_patient;
        let image_rel = PathBuf::from(format!("slices/{patient_id}/{slice_index:04}.png"));
        let mask_rel = PathBuf::from(format!("slices/{patient_id}/{slice_index:04}_mask.png"));
        ingest::export_png(&img.pixels, &out_dir.join(&image_rel))?;
        ingest::export_mask_png(&img.mask, &out_dir.join(&mask_rel))?;
        records.push(ManifestRecord {
            patient_id,
            slice_index,
            modality: Modality::Ct,
            image: image_rel,
            mask: Some(mask_rel),
        });
    }
    let manifest = out_dir.join("manifest.txt");
    ingest::write_manifest(&records, &manifest)?;
    Ok(manifest)
}

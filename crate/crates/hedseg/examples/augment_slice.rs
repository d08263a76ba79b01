//! Training-time augmentation: horizontal flip, sharpening, and elastic
//! deformation applied consistently to image and mask.
//!
//! ```bash
//! cargo run -p hedseg --example augment_slice
//! ```

use hedseg::augment::{self, AugmentPolicy, ElasticParams};
use hedseg::ingest::{self, Modality, Slice};
use hedseg::phantom::{phantom_images, PhantomSpec};

fn main() -> hedseg::Result<()> {
    let out_dir = std::env::temp_dir().join("hedseg_examples/augment");
    let spec = PhantomSpec {
        count: 1,
        image_size: 128,
        seed: 11,
        ..Default::default()
    };
    let img = phantom_images(&spec)?.remove(0);
    let slice = Slice {
        patient_id: "demo".into(),
        slice_index: 0,
        modality: Modality::Ct,
        pixels: img.pixels,
        mask: Some(img.mask),
    };
    ingest::export_png(&slice.pixels, &out_dir.join("input.png"))?;

    let flipped = augment::hflip(&slice);
    ingest::export_png(&flipped.pixels, &out_dir.join("hflip.png"))?;

    let sharp = augment::sharpen(&slice, 2.0, 1.0)?;
    ingest::export_png(&sharp.pixels, &out_dir.join("sharpen.png"))?;

    let warped = augment::elastic_deform(
        &slice,
        &ElasticParams {
            alpha: 3.0,
            sigma: 0.5,
            seed: 42,
        },
    )?;
    ingest::export_png(&warped.pixels, &out_dir.join("elastic.png"))?;
    ingest::export_mask_png(
        warped.mask.as_ref().unwrap(),
        &out_dir.join("elastic_mask.png"),
    )?;

    // The policy-driven path derives a per-sample seed from (seed, id), so
    // augmentation is reproducible regardless of iteration order.
    let variants = augment::apply_policy(&slice, &AugmentPolicy::default(), 0, "demo/0")?;
    println!(
        "policy emitted {} samples (original + flip + sharpen + elastic)",
        variants.len()
    );
    println!("outputs under {}", out_dir.display());
    Ok(())
}

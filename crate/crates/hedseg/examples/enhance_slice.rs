//! Modality-specific contrast enhancement on a phantom slice: sigmoid-CLAHE
//! for CT, unsharp masking for MR. Writes before/after PNGs.
//!
//! ```bash
//! cargo run -p hedseg --example enhance_slice
//! ```

use hedseg::enhance::{self, CtEnhanceConfig, MrEnhanceConfig};
use hedseg::ingest::{self, Modality, Slice};
use hedseg::phantom::{phantom_images, PhantomSpec};

fn main() -> hedseg::Result<()> {
    let out_dir = std::env::temp_dir().join("hedseg_examples/enhance");
    let spec = PhantomSpec {
        count: 1,
        image_size: 128,
        seed: 3,
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

    let ct = enhance::enhance_ct(&slice, &CtEnhanceConfig::default())?;
    ingest::export_png(&ct.pixels, &out_dir.join("ct_enhanced.png"))?;
    println!(
        "ct: mean {:.4} -> {:.4} (brightness preserved by design)",
        enhance::mean(&slice.pixels),
        enhance::mean(&ct.pixels)
    );

    let mr_slice = Slice {
        modality: Modality::MrT2,
        ..slice.clone()
    };
    let mr = enhance::enhance_mr(&mr_slice, &MrEnhanceConfig::default())?;
    ingest::export_png(&mr.pixels, &out_dir.join("mr_enhanced.png"))?;
    println!(
        "mr: mean {:.4} -> {:.4} (unsharp mask, sigma 2, amount 1)",
        enhance::mean(&slice.pixels),
        enhance::mean(&mr.pixels)
    );

    println!("outputs under {}", out_dir.display());
    Ok(())
}

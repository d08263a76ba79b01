//! Generates a small synthetic phantom dataset and prints per-slice stats.
//!
//! ```bash
//! cargo run -p hedseg --example generate_phantoms
//! ```

use hedseg::ingest;
use hedseg::phantom::{generate_phantoms, phantom_images, PhantomSpec};

fn main() -> hedseg::Result<()> {
    let out_dir = std::env::temp_dir().join("hedseg_examples/phantoms");
    let spec = PhantomSpec {
        count: 12,
        image_size: 96,
        slices_per_patient: 4,
        seed: 7,
        ..Default::default()
    };

    // In-memory generation: pixels, exact mask, and the analytic ellipse.
    for (i, img) in phantom_images(&spec)?.iter().enumerate() {
        let area: u32 = img.mask.iter().map(|&v| v as u32).sum();
        println!(
            "phantom {i:2}: liver area {area:5} px, center ({:.1}, {:.1}), axes ({:.1}, {:.1})",
            img.ellipse.center.0, img.ellipse.center.1,
            img.ellipse.semi_axes.0, img.ellipse.semi_axes.1,
        );
    }

    // On-disk generation: 16-bit slice PNGs, 8-bit mask PNGs, manifest.
    let manifest = generate_phantoms(&spec, &out_dir)?;
    let records = ingest::read_manifest(&manifest)?;
    println!(
        "\nwrote {} slices across {} patients under {}",
        records.len(),
        records
            .iter()
            .map(|r| r.patient_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        out_dir.display()
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

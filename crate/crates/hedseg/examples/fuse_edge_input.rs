//! Builds the detector input for one slice: enhance, predict edges with a
//! briefly trained edge network, then fuse (enhanced × edge probability).
//!
//! ```bash
//! cargo run -p hedseg --example fuse_edge_input
//! ```

use hedseg::enhance::{self, CtEnhanceConfig};
use hedseg::hed::{self, HedConfig, HedTrainConfig};
use hedseg::ingest::{self, Modality, Slice};
use hedseg::phantom::{phantom_images, PhantomSpec};
use hedseg::fuse::fuse;

fn main() -> hedseg::Result<()> {
    let out_dir = std::env::temp_dir().join("hedseg_examples/fuse");
    let spec = PhantomSpec {
        count: 4,
        image_size: 64,
        seed: 9,
        ..Default::default()
    };
    let images = phantom_images(&spec)?;
    let slice = Slice {
        patient_id: "demo".into(),
        slice_index: 0,
        modality: Modality::Ct,
        pixels: images[0].pixels.clone(),
        mask: Some(images[0].mask.clone()),
    };

    let enhanced = enhance::enhance_ct(&slice, &CtEnhanceConfig::default())?;
    ingest::export_png(&enhanced.pixels, &out_dir.join("enhanced.png"))?;

    let net = HedConfig::toy(64);
    let samples: Vec<_> = images
        .iter()
        .map(|img| {
            (
                img.pixels.clone(),
                hed::edge_target_from_mask(&img.mask, net.target_thickness),
            )
        })
        .collect();
    let mut model = hed::build_hed(&net, 0)?;
    hed::train_hed(
        &mut model,
        &samples,
        &HedTrainConfig {
            iterations: 200,
            learning_rate: 1e-2,
            ..Default::default()
        },
    )?;

    let outputs = model.forward(&enhanced.pixels)?;
    let edge = hed::select_edge_map(&outputs, Modality::Ct, &net)?;
    ingest::export_png(edge, &out_dir.join("edge.png"))?;

    // The fused sample replicates the product across 3 channels so it plugs
    // into a detector expecting RGB-shaped input.
    let fused = fuse(&enhanced, edge)?;
    let plane = fused.pixels.index_axis(ndarray::Axis(0), 0).to_owned();
    ingest::export_png(&plane, &out_dir.join("fused.png"))?;
    println!(
        "fused sample shape {:?}; outputs under {}",
        fused.pixels.dim(),
        out_dir.display()
    );
    Ok(())
}

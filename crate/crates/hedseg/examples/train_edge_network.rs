//! Trains the reduced edge network on a handful of phantoms and writes the
//! six side-output probability maps for one slice.
//!
//! ```bash
//! cargo run -p hedseg --example train_edge_network
//! ```

use hedseg::hed::{self, HedConfig, HedTrainConfig};
use hedseg::ingest::{self, Modality};
use hedseg::phantom::{phantom_images, PhantomSpec};

fn main() -> hedseg::Result<()> {
    let out_dir = std::env::temp_dir().join("hedseg_examples/edges");
    let spec = PhantomSpec {
        count: 6,
        image_size: 64,
        seed: 5,
        ..Default::default()
    };
    let images = phantom_images(&spec)?;

    let net = HedConfig::toy(64);
    // Supervision target: a 2-pixel-thick boundary band around the mask.
    let samples: Vec<_> = images
        .iter()
        .map(|img| {
            let target = hed::edge_target_from_mask(&img.mask, net.target_thickness);
            (img.pixels.clone(), target)
        })
        .collect();

    let mut model = hed::build_hed(&net, 0)?;
    let curve = hed::train_hed(
        &mut model,
        &samples,
        &HedTrainConfig {
            iterations: 300,
            learning_rate: 1e-2,
            ..Default::default()
        },
    )?;
    println!(
        "trained 300 iterations: loss {:.4} -> {:.4}",
        curve[0].total,
        curve.last().unwrap().total
    );

    let outputs = model.forward(&images[0].pixels)?;
    for (i, map) in outputs.maps.iter().enumerate() {
        let name = if i == 5 {
            "fused.png".to_string()
        } else {
            format!("side{i}.png")
        };
        ingest::export_png(map, &out_dir.join(name))?;
    }
    let picked = hed::select_edge_map(&outputs, Modality::Ct, &net)?;
    let peak = picked.iter().fold(0.0f32, |a, &b| a.max(b));
    println!("ct edge map (fused) peak probability {peak:.3}");
    println!("maps under {}", out_dir.display());
    Ok(())
}

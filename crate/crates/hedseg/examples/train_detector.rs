//! Trains the reduced instance-segmentation detector on phantom slices and
//! scores its masks on two held-out slices.
//!
//! ```bash
//! cargo run -p hedseg --example train_detector
//! ```

use ndarray::{Array2, Array3};

use hedseg::eval::dice_coefficient;
use hedseg::maskrcnn::{build_detector, detect, train_seg, DetectorConfig, SegSample, SegTrainConfig};
use hedseg::phantom::{phantom_images, PhantomSpec};
use hedseg::postprocess::{refine, PostprocessConfig};

fn replicate(pixels: &Array2<f32>) -> Array3<f32> {
    let (h, w) = pixels.dim();
    let mut out = Array3::<f32>::zeros((3, h, w));
    for c in 0..3 {
        out.index_axis_mut(ndarray::Axis(0), c).assign(pixels);
    }
    out
}

fn main() -> hedseg::Result<()> {
    let spec = PhantomSpec {
        count: 18,
        image_size: 64,
        seed: 13,
        ..Default::default()
    };
    let images = phantom_images(&spec)?;
    let samples: Vec<SegSample> = images
        .iter()
        .map(|img| SegSample::from_mask(replicate(&img.pixels), &img.mask))
        .collect::<hedseg::Result<_>>()?;
    let (val, train) = samples.split_at(2);

    let mut det = build_detector(&DetectorConfig::toy(64), 0)?;
    let report = train_seg(
        &mut det,
        train,
        val,
        &SegTrainConfig {
            epochs: 4,
            learning_rate: 1e-3,
            ..Default::default()
        },
    )?;
    for e in &report.epochs {
        println!(
            "epoch {}: train total {:.4}, val total {:.4}",
            e.epoch,
            e.train.total(),
            e.val.total()
        );
    }

    for (i, img) in images.iter().take(2).enumerate() {
        let detections = detect(&det, &replicate(&img.pixels))?;
        let cleaned = refine(&detections, img.mask.dim(), &PostprocessConfig::default());
        let dice = dice_coefficient(&cleaned.mask, &img.mask)?;
        println!(
            "held-out slice {i}: {} detection(s), dice {dice:.3}",
            detections.len()
        );
    }
    Ok(())
}

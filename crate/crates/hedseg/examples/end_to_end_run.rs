//! Runs every pipeline stage (convert → enhance → edge training → edge maps
//! → fusion → detector training → inference → postprocess → eval) on a small
//! phantom dataset and prints the held-out report.
//!
//! Equivalent to `hedseg run --run-dir <dir>` with a reduced config.
//!
//! ```bash
//! cargo run -p hedseg --example end_to_end_run
//! ```

use hedseg::phantom::PhantomSpec;
use hedseg::pipeline::{self, DataConfig, RunConfig};

fn main() -> hedseg::Result<()> {
    let run_dir = std::env::temp_dir().join("hedseg_examples/end_to_end");
    let _ = std::fs::remove_dir_all(&run_dir);

    let cfg = RunConfig {
        seed: 1,
        data: DataConfig {
            phantom: Some(PhantomSpec {
                count: 40,
                image_size: 64,
                slices_per_patient: 4,
                ..Default::default()
            }),
            ..Default::default()
        },
        ..Default::default()
    };

    pipeline::run_all(&run_dir, &cfg)?;
    let dice = pipeline::run_mean_dice(&run_dir)?;
    println!("held-out mean dice {dice:.4}");

    let report = std::fs::read_to_string(run_dir.join("reports/report.md"))
        .map_err(|e| hedseg::Error::io(run_dir.join("reports/report.md"), e))?;
    println!("\n{report}");
    println!("artifacts under {}", run_dir.display());
    Ok(())
}

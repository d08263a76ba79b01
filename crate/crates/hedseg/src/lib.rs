//! Edge-guided liver segmentation from CT and MR slices.
//!
//! The pipeline runs in stages, each reading and writing files under a run
//! directory so stages can be re-run independently:
//!
//! 1. **ingest** – DICOM (or pre-exported PNG) series to normalized slices
//!    plus a plain-text manifest.
//! 2. **enhance** – modality-specific contrast enhancement (sigmoid-CLAHE for
//!    CT, unsharp masking for MR).
//! 3. **hed** – a deeply supervised edge network with five side outputs and a
//!    learned fused output; one map is selected per modality.
//! 4. **fuse** – pixelwise product of the enhanced image and the selected
//!    edge map, replicated to three channels.
//! 5. **maskrcnn** – an FPN instance-segmentation detector whose mask term is
//!    a Dice loss.
//! 6. **postprocess** – largest-component selection and hole filling.
//! 7. **eval** – per-slice and per-patient Dice with mean±std reports.
//!
//! The `phantom` module generates synthetic ellipse datasets with exact masks
//! so the whole pipeline can be trained and scored on a desktop CPU; see the
//! `examples/` directory for runnable entry points per stage.

pub mod augment;
pub mod enhance;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod hed;
pub mod ingest;
pub mod maskrcnn;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod postprocess;

pub use error::{Error, Result};
pub use ingest::{Modality, Slice};

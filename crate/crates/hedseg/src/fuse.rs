//! Multiplicative fusion of enhanced image and edge map into the detector's
//! 3-channel input.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::ingest::Slice;

/// Detector input: three identical channels, each the pixelwise product of
/// the enhanced image and the selected edge map.
#[derive(Debug, Clone)]
pub struct FusedSample {
    pub pixels: Array3<f32>,
    pub patient_id: String,
    pub slice_index: usize,
    pub mask: Option<Array2<u8>>,
}

/// Pixelwise product of enhanced image and edge map, replicated to three
/// channels. No renormalization is applied.
pub fn fuse(enhanced: &Slice, edge: &Array2<f32>) -> Result<FusedSample> {
    if enhanced.pixels.dim() != edge.dim() {
        return Err(Error::ShapeMismatch(enhanced.pixels.dim(), edge.dim()));
    }
    let (h, w) = edge.dim();
    let product = &enhanced.pixels * edge;
    let mut pixels = Array3::<f32>::zeros((3, h, w));
    for c in 0..3 {
        pixels.index_axis_mut(ndarray::Axis(0), c).assign(&product);
    }
    Ok(FusedSample {
        pixels,
        patient_id: enhanced.patient_id.clone(),
        slice_index: enhanced.slice_index,
        mask: enhanced.mask.clone(),
    })
}

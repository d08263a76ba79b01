//! Instance-segmentation detector: FPN backbone, region proposal network,
//! RoIAlign, class/box/mask heads, and the multi-task loss whose mask term
//! is a Dice loss.

mod detect;
mod geometry;
mod loss;
mod model;
mod roi_align;
mod train;

pub use detect::{detect, InstanceDetection};
pub use geometry::{
    decode_deltas, encode_deltas, generate_anchors, iou, match_anchors, nms, AnchorLevel,
    AnchorMatch, Box2D, MatchLabel,
};
pub use loss::{
    binary_ce_logits, cross_entropy_logits, dice_loss, dice_loss_t, smooth_l1, LossBreakdown,
};
pub use model::{build_detector, BackboneKind, Detector, DetectorConfig};
pub use roi_align::{roi_align, roi_align_t, RoiAlignWeights};
pub use train::{
    mask_target, multitask_loss, train_seg, EpochRecord, SegSample, SegTrainConfig, SegTrainReport,
};

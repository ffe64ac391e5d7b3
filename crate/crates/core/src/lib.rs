//! Online video instance segmentation toolkit: embedding-based tracking
//! with a memory bank, contrastive training targets, pseudo key/reference
//! pairs from still images, spatio-temporal evaluation and track fusion.

pub mod assignment;
pub mod association;
pub mod bbox;
pub mod config;
pub mod contrastive;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod pseudo_pair;
pub mod rle;
pub mod rng;
pub mod synth;
pub mod types;

pub use association::{
    assign, similarity, track_video, track_video_with_labels, update_memory, AssociationConfig, MemoryBank,
    MemoryInstance, SimilarityKind, Tracker,
};
pub use bbox::{box_giou, BBox};
pub use config::RunConfig;
pub use contrastive::{
    embed_loss, embed_loss_grad, matching_cost, select_samples, total_loss, LossWeights, MatchWeights,
};
pub use error::{Error, Result};
pub use evaluation::{evaluate, st_iou, EvalConfig, EvalReport, Metrics};
pub use fusion::{merge_tracks, FusionConfig, ScoreMode};
pub use matrix::Matrix;
pub use pseudo_pair::{make_pair, CropConfig, CropPairSample, CropWindow};
pub use rle::{mask_iou, rle_decode, rle_encode, Bitmap, RleMask};
pub use rng::SplitMix64;
pub use synth::{generate, SynthConfig, SynthCorpus};
pub use types::{
    Detection, Embedding, FrameDetections, Track, TrackEntry, VideoDetections, VideoGroundTruth, VideoMeta, VideoTracks,
};

//! Domain types shared by the tracker, evaluator, fusion and generators.

use std::collections::BTreeMap;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::rle::RleMask;

/// Contrastive embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("embedding entries must be finite"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One object hypothesis on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub mask: Option<RleMask>,
    /// Maximum class probability.
    pub score: f64,
    /// Indexed by category id.
    pub class_probs: Vec<f64>,
    pub category_id: u32,
    pub embedding: Embedding,
}

impl Detection {
    /// Builds a detection whose score and category are derived from
    /// `class_probs` (first index wins ties).
    pub fn from_probs(bbox: BBox, mask: Option<RleMask>, class_probs: Vec<f64>, embedding: Embedding) -> Self {
        let (category_id, score) = argmax(&class_probs).unwrap_or((0, 0.0));
        Self {
            bbox,
            mask,
            score,
            class_probs,
            category_id: category_id as u32,
            embedding,
        }
    }

    /// Probability of `category`, zero when out of range.
    pub fn prob(&self, category: u32) -> f64 {
        self.class_probs.get(category as usize).copied().unwrap_or(0.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    values
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_index: u32,
    pub detections: Vec<Detection>,
}

/// Detector output for a whole video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetections {
    pub meta: VideoMeta,
    pub frames: Vec<FrameDetections>,
}

/// Static properties of one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoMeta {
    pub video_id: u64,
    pub height: u32,
    pub width: u32,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub bbox: BBox,
    pub mask: Option<RleMask>,
    pub score: f64,
}

/// One instance identity across a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub category_id: u32,
    pub score: f64,
    pub entries: BTreeMap<u32, TrackEntry>,
}

impl Track {
    pub fn mask_at(&self, frame: u32) -> Option<&RleMask> {
        self.entries.get(&frame).and_then(|e| e.mask.as_ref())
    }

    pub fn validate(&self, meta: &VideoMeta) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidInput(format!("track {} has no entries", self.track_id)));
        }
        for (&frame, entry) in &self.entries {
            if frame >= meta.length {
                return Err(Error::InvalidInput(format!(
                    "track {} has entry at frame {} beyond video length {}",
                    self.track_id, frame, meta.length
                )));
            }
            if let Some(m) = &entry.mask {
                if m.height != meta.height || m.width != meta.width {
                    return Err(Error::DimensionMismatch(format!(
                        "track {} mask {}x{} in video {}x{}",
                        self.track_id, m.height, m.width, meta.height, meta.width
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Tracks predicted for one video, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTracks {
    pub meta: VideoMeta,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoGroundTruth {
    pub video_id: u64,
    pub height: u32,
    pub width: u32,
    pub length: u32,
    pub gt_tracks: Vec<Track>,
    pub category_set: Vec<u32>,
}

impl VideoGroundTruth {
    pub fn meta(&self) -> VideoMeta {
        VideoMeta {
            video_id: self.video_id,
            height: self.height,
            width: self.width,
            length: self.length,
        }
    }
}

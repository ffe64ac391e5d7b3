//! Synthetic videos of moving rectangles and ellipses with exact ground
//! truth and identity-consistent noisy embeddings.
//!
//! Objects jump by up to `motion_step_max` pixels per axis between frames,
//! mimicking a low frame rate where box overlap is a poor association cue.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::{rle_encode, Bitmap, RleMask};
use crate::rng::SplitMix64;
use crate::types::{
    Detection, Embedding, FrameDetections, Track, TrackEntry, VideoDetections, VideoGroundTruth, VideoMeta,
};

/// Maximum pairwise cosine between object base embeddings.
pub const MAX_BASE_COSINE: f64 = 0.3;
const MAX_REJECTIONS: u32 = 10_000;
const MIN_OBJECT_SIDE: u32 = 10;
const MAX_OBJECT_SIDE: u32 = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_videos: u32,
    pub frames_per_video: u32,
    pub objects_per_video: u32,
    /// `(width, height)`.
    pub canvas: (u32, u32),
    pub embedding_dim: u32,
    /// Norm of every emitted embedding.
    pub embedding_scale: f64,
    pub embedding_noise_sigma: f64,
    pub detector_dropout: f64,
    pub clutter_rate: f64,
    pub motion_step_max: u32,
    pub n_categories: u32,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 10,
            frames_per_video: 20,
            objects_per_video: 4,
            canvas: (96, 96),
            embedding_dim: 8,
            embedding_scale: 4.0,
            embedding_noise_sigma: 0.05,
            detector_dropout: 0.1,
            clutter_rate: 0.5,
            motion_step_max: 12,
            n_categories: 6,
            rng_seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.objects_per_video > 6 {
            return bad("objects_per_video must be at most 6");
        }
        if self.frames_per_video == 0 {
            return bad("frames_per_video must be positive");
        }
        if self.canvas.0 < 2 * MAX_OBJECT_SIDE || self.canvas.1 < 2 * MAX_OBJECT_SIDE {
            return bad("canvas must be at least 56x56 so objects fit");
        }
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be at least 2");
        }
        if !(self.embedding_scale.is_finite() && self.embedding_scale > 0.0) {
            return bad("embedding_scale must be positive");
        }
        if !(self.embedding_noise_sigma.is_finite() && self.embedding_noise_sigma >= 0.0) {
            return bad("embedding_noise_sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.detector_dropout) {
            return bad("detector_dropout must lie in [0,1)");
        }
        if !(self.clutter_rate.is_finite() && self.clutter_rate >= 0.0) {
            return bad("clutter_rate must be non-negative");
        }
        if self.n_categories < self.objects_per_video.max(1) {
            return bad("n_categories must be at least objects_per_video");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Identity {
    Gt(u64),
    Clutter,
}

/// Key `(video_id, frame_index, detection index)`.
pub type IdentityKey = BTreeMap<(u64, u32, usize), Identity>;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub ground_truth: Vec<VideoGroundTruth>,
    pub detections: Vec<VideoDetections>,
    pub identity_key: IdentityKey,
    pub categories: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
}

struct Object {
    gt_id: u64,
    category: u32,
    shape: Shape,
    w: u32,
    h: u32,
    x: i64,
    y: i64,
    unit: Vec<f64>,
    base: Embedding,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        if v.iter().any(|x| *x != 0.0) {
            return normalized(&v);
        }
    }
}

fn render(shape: Shape, canvas: (u32, u32), x: u32, y: u32, w: u32, h: u32) -> RleMask {
    let (cw, ch) = canvas;
    let mut g = Bitmap::new(ch, cw);
    let (cx, cy) = (x as f64 + w as f64 / 2.0, y as f64 + h as f64 / 2.0);
    let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
    for c in x..x + w {
        for r in y..y + h {
            let on = match shape {
                Shape::Rect => true,
                Shape::Ellipse => {
                    let dx = (c as f64 + 0.5 - cx) / rx;
                    let dy = (r as f64 + 0.5 - cy) / ry;
                    dx * dx + dy * dy <= 1.0
                }
            };
            if on {
                g.set(r, c, true);
            }
        }
    }
    rle_encode(&g)
}

fn class_probs(category: u32, score: f64, n_categories: u32) -> Vec<f64> {
    // index 0 is background and carries no mass
    let rest = ((1.0 - score) / n_categories as f64).min(score / 2.0);
    (0..=n_categories)
        .map(|c| match c {
            0 => 0.0,
            c if c == category => score,
            _ => rest,
        })
        .collect()
}

fn scaled(unit: &[f64], scale: f64) -> Embedding {
    Embedding(unit.iter().map(|x| x * scale).collect())
}

fn generate_video(cfg: &SynthConfig, video_index: u32) -> Result<(VideoGroundTruth, VideoDetections, IdentityKey)> {
    let mut rng = SplitMix64::new(cfg.rng_seed.wrapping_add(video_index as u64));
    let video_id = video_index as u64 + 1;
    let (cw, ch) = cfg.canvas;
    let dim = cfg.embedding_dim as usize;

    // Distinct categories within a video, so each video holds at most one
    // instance per category.
    let mut categories: Vec<u32> = (1..=cfg.n_categories).collect();
    for i in 0..cfg.objects_per_video as usize {
        let j = rng.int_inclusive(i as i64, categories.len() as i64 - 1) as usize;
        categories.swap(i, j);
    }

    let mut objects: Vec<Object> = Vec::new();
    let mut rejections = 0;
    for k in 0..cfg.objects_per_video {
        let unit = loop {
            let cand = random_unit(&mut rng, dim);
            if objects
                .iter()
                .all(|o| o.unit.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() <= MAX_BASE_COSINE)
            {
                break cand;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::ConfigInfeasible(format!(
                    "could not separate {} base embeddings in dimension {}",
                    cfg.objects_per_video, dim
                )));
            }
        };
        let w = rng.int_inclusive(MIN_OBJECT_SIDE as i64, MAX_OBJECT_SIDE as i64) as u32;
        let h = rng.int_inclusive(MIN_OBJECT_SIDE as i64, MAX_OBJECT_SIDE as i64) as u32;
        let shape = if rng.next_f64() < 0.5 {
            Shape::Rect
        } else {
            Shape::Ellipse
        };
        let category = categories[k as usize];
        let x = rng.int_inclusive(0, (cw - w) as i64);
        let y = rng.int_inclusive(0, (ch - h) as i64);
        let base = scaled(&unit, cfg.embedding_scale);
        objects.push(Object {
            gt_id: video_index as u64 * cfg.objects_per_video as u64 + k as u64 + 1,
            category,
            shape,
            w,
            h,
            x,
            y,
            unit,
            base,
        });
    }

    let meta = VideoMeta {
        video_id,
        height: ch,
        width: cw,
        length: cfg.frames_per_video,
    };
    let mut gt_entries: Vec<BTreeMap<u32, TrackEntry>> = vec![BTreeMap::new(); objects.len()];
    let mut frames = Vec::with_capacity(cfg.frames_per_video as usize);
    let mut key = IdentityKey::new();
    let step = cfg.motion_step_max as i64;

    for f in 0..cfg.frames_per_video {
        let mut dets: Vec<(Detection, Identity)> = Vec::new();
        for (k, o) in objects.iter_mut().enumerate() {
            if f > 0 {
                o.x = (o.x + rng.int_inclusive(-step, step)).clamp(0, (cw - o.w) as i64);
                o.y = (o.y + rng.int_inclusive(-step, step)).clamp(0, (ch - o.h) as i64);
            }
            let mask = render(o.shape, cfg.canvas, o.x as u32, o.y as u32, o.w, o.h);
            let bbox = mask.bbox().expect("objects are at least 10px wide");
            gt_entries[k].insert(
                f,
                TrackEntry {
                    bbox,
                    mask: Some(mask.clone()),
                    score: 1.0,
                },
            );
            if rng.next_f64() < cfg.detector_dropout {
                continue;
            }
            let score = rng.uniform(0.6, 1.0);
            let embedding = if cfg.embedding_noise_sigma > 0.0 {
                let noisy: Vec<f64> = o
                    .unit
                    .iter()
                    .map(|u| u + cfg.embedding_noise_sigma * rng.gaussian())
                    .collect();
                scaled(&normalized(&noisy), cfg.embedding_scale)
            } else {
                o.base.clone()
            };
            dets.push((
                Detection::from_probs(
                    bbox,
                    Some(mask),
                    class_probs(o.category, score, cfg.n_categories),
                    embedding,
                ),
                Identity::Gt(o.gt_id),
            ));
        }
        for _ in 0..rng.poisson(cfg.clutter_rate) {
            let w = rng.int_inclusive(4, 16) as u32;
            let h = rng.int_inclusive(4, 16) as u32;
            let x = rng.int_inclusive(0, (cw - w) as i64) as u32;
            let y = rng.int_inclusive(0, (ch - h) as i64) as u32;
            let mask = render(Shape::Rect, cfg.canvas, x, y, w, h);
            let bbox = mask.bbox().expect("clutter is non-empty");
            let score = rng.uniform(0.05, 0.3);
            let category = rng.int_inclusive(1, cfg.n_categories as i64) as u32;
            let embedding = scaled(&random_unit(&mut rng, dim), cfg.embedding_scale);
            dets.push((
                Detection::from_probs(
                    bbox,
                    Some(mask),
                    class_probs(category, score, cfg.n_categories),
                    embedding,
                ),
                Identity::Clutter,
            ));
        }
        // Fisher-Yates so detection order carries no identity information.
        for i in (1..dets.len()).rev() {
            let j = rng.int_inclusive(0, i as i64) as usize;
            dets.swap(i, j);
        }
        for (i, (_, id)) in dets.iter().enumerate() {
            key.insert((video_id, f, i), *id);
        }
        frames.push(FrameDetections {
            frame_index: f,
            detections: dets.into_iter().map(|(d, _)| d).collect(),
        });
    }

    let gt_tracks = objects
        .iter()
        .zip(gt_entries)
        .map(|(o, entries)| Track {
            track_id: o.gt_id,
            category_id: o.category,
            score: 1.0,
            entries,
        })
        .collect();
    let gt = VideoGroundTruth {
        video_id,
        height: ch,
        width: cw,
        length: cfg.frames_per_video,
        gt_tracks,
        category_set: (1..=cfg.n_categories).collect(),
    };
    Ok((gt, VideoDetections { meta, frames }, key))
}

/// Generates the corpus. Video `i` (0-based) draws from its own stream
/// seeded with `rng_seed + i` and gets id `i + 1`; its objects get ground
/// truth ids `i * objects_per_video + 1 ..`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let videos = (0..cfg.n_videos)
        .into_par_iter()
        .map(|v| generate_video(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = SynthCorpus {
        ground_truth: Vec::new(),
        detections: Vec::new(),
        identity_key: IdentityKey::new(),
        categories: (1..=cfg.n_categories).collect(),
    };
    for (gt, dets, key) in videos {
        corpus.ground_truth.push(gt);
        corpus.detections.push(dets);
        corpus.identity_key.extend(key);
    }
    Ok(corpus)
}

/// Identity switches per video: for each ground-truth identity, the number of
/// times its assigned track id changes between consecutive frames where it
/// was tracked. `labels[v][f][i]` is the track id given to detection `i` of
/// frame `f` in video `v`.
pub fn count_id_switches(
    corpus_detections: &[VideoDetections],
    labels: &[Vec<Vec<Option<u64>>>],
    key: &IdentityKey,
) -> Vec<usize> {
    corpus_detections
        .iter()
        .zip(labels)
        .map(|(video, video_labels)| {
            let mut last: BTreeMap<u64, u64> = BTreeMap::new();
            let mut switches = 0;
            for (frame, frame_labels) in video.frames.iter().zip(video_labels) {
                for (i, label) in frame_labels.iter().enumerate() {
                    let (Some(track), Some(Identity::Gt(gt))) =
                        (label, key.get(&(video.meta.video_id, frame.frame_index, i)))
                    else {
                        continue;
                    };
                    if let Some(prev) = last.insert(*gt, *track) {
                        if prev != *track {
                            switches += 1;
                        }
                    }
                }
            }
            switches
        })
        .collect()
}

//! Merging several track sets of one video (different inference scales or
//! different models) by greedy spatio-temporal NMS.
//!
//! Tracks are pooled and visited by descending score. A track joins the
//! first kept track of its category whose spatio-temporal IoU with it reaches
//! `merge_iou`; otherwise it is kept. Kept tracks keep their own masks and
//! take the (weighted) mean or max of their cluster's scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::st_iou;
use crate::types::{Track, VideoMeta, VideoTracks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub merge_iou: f64,
    pub score_mode: ScoreMode,
    pub max_output_tracks: u32,
    /// One positive weight per input set; uniform when absent.
    pub source_weights: Option<Vec<f64>>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            merge_iou: 0.5,
            score_mode: ScoreMode::Mean,
            max_output_tracks: 10,
            source_weights: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_iou > 0.0 && self.merge_iou <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fusion.merge_iou must lie in (0,1], got {}",
                self.merge_iou
            )));
        }
        if let Some(w) = &self.source_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidConfig("fusion.source_weights must be positive".into()));
            }
        }
        Ok(())
    }

    fn weight(&self, source: usize) -> Result<f64> {
        match &self.source_weights {
            None => Ok(1.0),
            Some(w) => w.get(source).copied().ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "fusion.source_weights has {} entries but input set {} exists",
                    w.len(),
                    source
                ))
            }),
        }
    }
}

struct Cluster {
    head: Track,
    members: Vec<(f64, f64)>, // (score, weight)
}

impl Cluster {
    fn score(&self, mode: ScoreMode) -> f64 {
        if self.members.len() == 1 {
            return self.members[0].0;
        }
        match mode {
            ScoreMode::Max => self.members.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max),
            ScoreMode::Mean => {
                let wsum: f64 = self.members.iter().map(|m| m.1).sum();
                self.members.iter().map(|m| m.0 * m.1).sum::<f64>() / wsum
            }
        }
    }
}

/// Fuses several track sets of the same video into one.
pub fn merge_tracks(track_sets: &[VideoTracks], cfg: &FusionConfig, meta: &VideoMeta) -> Result<Vec<Track>> {
    cfg.validate()?;
    for set in track_sets {
        if set.meta.video_id != meta.video_id {
            return Err(Error::VideoMismatch(format!(
                "input refers to video {} while fusing video {}",
                set.meta.video_id, meta.video_id
            )));
        }
        for t in &set.tracks {
            t.validate(meta)?;
        }
    }

    // (source, position) pool ordered by descending score; stable on input order.
    let mut pool: Vec<(usize, &Track)> = track_sets
        .iter()
        .enumerate()
        .flat_map(|(s, set)| set.tracks.iter().map(move |t| (s, t)))
        .collect();
    pool.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let dims = (meta.height, meta.width);
    let mut clusters: Vec<Cluster> = Vec::new();
    for (source, track) in pool {
        let weight = cfg.weight(source)?;
        let mut absorbed = false;
        for c in clusters.iter_mut() {
            if c.head.category_id == track.category_id && st_iou(&c.head, track, meta.length, dims)? >= cfg.merge_iou {
                c.members.push((track.score, weight));
                absorbed = true;
                break;
            }
        }
        if !absorbed {
            clusters.push(Cluster {
                head: track.clone(),
                members: vec![(track.score, weight)],
            });
        }
    }

    let mut out: Vec<Track> = clusters
        .into_iter()
        .map(|c| {
            let score = c.score(cfg.score_mode);
            Track { score, ..c.head }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out.truncate(cfg.max_output_tracks as usize);

    // Sources may reuse ids; later duplicates get fresh ids above the maximum.
    let mut used = BTreeSet::new();
    let mut next = out.iter().map(|t| t.track_id).max().unwrap_or(0) + 1;
    for t in out.iter_mut() {
        if !used.insert(t.track_id) {
            t.track_id = next;
            used.insert(next);
            next += 1;
        }
    }
    Ok(out)
}

//! Online association of per-frame detections against a memory bank of
//! instance embeddings.
//!
//! Each frame: score every detection against every stored instance, take the
//! per-detection argmax subject to one-to-one use of memory instances, and
//! accept a match only above `match_threshold`. Unmatched detections with a
//! confident class score start new identities; the rest are dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{Detection, Embedding, FrameDetections, Track, TrackEntry, VideoMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Average of the softmax over memory instances and the softmax over
    /// detections, both on raw dot products.
    BiSoftmax,
    /// `(1 + cos) / 2`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    pub match_threshold: f64,
    pub new_instance_score: f64,
    pub similarity_kind: SimilarityKind,
    pub memory_momentum: f64,
    pub keep_top_n_per_frame: u32,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            match_threshold: 0.5,
            new_instance_score: 0.2,
            similarity_kind: SimilarityKind::BiSoftmax,
            memory_momentum: 0.5,
            keep_top_n_per_frame: 10,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("match_threshold", self.match_threshold),
            ("new_instance_score", self.new_instance_score),
            ("memory_momentum", self.memory_momentum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "association.{name} must lie in [0,1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryInstance {
    pub track_id: u64,
    pub embedding: Embedding,
    pub category_id: u32,
    pub last_seen_frame: u32,
    pub hit_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    instances: Vec<MemoryInstance>,
    next_id: u64,
}

impl Default for MemoryBank {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryBank {
    /// Empty bank; identities are numbered from 1.
    pub fn new() -> Self {
        Self {
            instances: Vec::new(),
            next_id: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[MemoryInstance] {
        &self.instances
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Appends a new identity and returns its id.
    pub fn insert(&mut self, embedding: Embedding, category_id: u32, frame: u32) -> u64 {
        let track_id = self.next_id;
        self.next_id += 1;
        self.instances.push(MemoryInstance {
            track_id,
            embedding,
            category_id,
            last_seen_frame: frame,
            hit_count: 1,
        });
        track_id
    }

    fn position(&self, track_id: u64) -> Option<usize> {
        self.instances.iter().position(|m| m.track_id == track_id)
    }
}

/// N×M similarity between detection embeddings and memory instances.
pub fn similarity(pred: &[Embedding], memory: &MemoryBank, kind: SimilarityKind) -> Result<Matrix> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("no predicted embeddings"));
    }
    if memory.is_empty() {
        return Err(Error::EmptyInput("memory bank is empty"));
    }
    let dim = pred[0].dim();
    for e in pred.iter().chain(memory.instances.iter().map(|m| &m.embedding)) {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "embedding dimension {} differs from {}",
                e.dim(),
                dim
            )));
        }
    }
    let (n, m) = (pred.len(), memory.len());
    let dots = Matrix::from_fn(n, m, |i, j| pred[i].dot(&memory.instances[j].embedding));
    Ok(match kind {
        SimilarityKind::BiSoftmax => bi_softmax(&dots),
        SimilarityKind::Cosine => Matrix::from_fn(n, m, |i, j| {
            let denom = pred[i].norm() * memory.instances[j].embedding.norm();
            let cos = if denom > 0.0 { dots[(i, j)] / denom } else { 0.0 };
            0.5 * (1.0 + cos.clamp(-1.0, 1.0))
        }),
    })
}

fn bi_softmax(dots: &Matrix) -> Matrix {
    let (n, m) = (dots.rows(), dots.cols());
    let mut row_soft = Matrix::zeros(n, m);
    for i in 0..n {
        let row = dots.row(i);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|d| (d - mx).exp()).sum();
        for j in 0..m {
            row_soft[(i, j)] = (row[j] - mx).exp() / z;
        }
    }
    let mut out = Matrix::zeros(n, m);
    for j in 0..m {
        let mx = (0..n).map(|i| dots[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n).map(|i| (dots[(i, j)] - mx).exp()).sum();
        for i in 0..n {
            let col = (dots[(i, j)] - mx).exp() / z;
            out[(i, j)] = 0.5 * (row_soft[(i, j)] + col);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    MatchedTo(u64),
    NewInstance,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub pred_index: usize,
    pub outcome: Outcome,
}

/// Per-detection argmax over memory instances, made one-to-one greedily.
///
/// Candidate pairs above the threshold are taken in descending score; a
/// detection that loses its best instance falls back to its best remaining
/// one. Ties go to the lower detection index, then the lower (older) memory
/// index. `scores` may have zero columns.
pub fn assign(
    scores: &Matrix,
    detections: &[Detection],
    memory: &MemoryBank,
    cfg: &AssociationConfig,
) -> Result<Vec<Assignment>> {
    if scores.rows() != detections.len() || scores.cols() != memory.len() {
        return Err(Error::DimensionMismatch(format!(
            "score matrix {}x{} for {} detections and {} memory instances",
            scores.rows(),
            scores.cols(),
            detections.len(),
            memory.len()
        )));
    }
    let mut candidates: Vec<(usize, usize)> = (0..scores.rows())
        .flat_map(|i| (0..scores.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| scores[(i, j)] > cfg.match_threshold)
        .collect();
    // Stable sort keeps (i, j) lexicographic order among equal scores.
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut pred_match: Vec<Option<usize>> = vec![None; scores.rows()];
    let mut claimed = vec![false; scores.cols()];
    for (i, j) in candidates {
        if pred_match[i].is_none() && !claimed[j] {
            pred_match[i] = Some(j);
            claimed[j] = true;
        }
    }

    Ok(pred_match
        .into_iter()
        .enumerate()
        .map(|(i, m)| Assignment {
            pred_index: i,
            outcome: match m {
                Some(j) => Outcome::MatchedTo(memory.instances[j].track_id),
                None if detections[i].score >= cfg.new_instance_score => Outcome::NewInstance,
                None => Outcome::Discarded,
            },
        })
        .collect())
}

/// Applies one frame's assignments to the bank.
///
/// Matched embeddings move as `m <- (1 - rho) m + rho v`; new instances get
/// fresh ids; unmatched instances are left untouched. Returns the identity
/// each detection ended up with (`None` when discarded).
pub fn update_memory(
    memory: &mut MemoryBank,
    assignments: &[Assignment],
    detections: &[Detection],
    frame_index: u32,
    cfg: &AssociationConfig,
) -> Result<Vec<Option<u64>>> {
    let rho = cfg.memory_momentum;
    let mut ids = vec![None; detections.len()];
    // Validate before mutating so a bad assignment leaves the bank intact.
    for a in assignments {
        if a.pred_index >= detections.len() {
            return Err(Error::InvalidInput(format!(
                "assignment for detection {} out of range",
                a.pred_index
            )));
        }
        if let Outcome::MatchedTo(id) = a.outcome {
            if memory.position(id).is_none() {
                return Err(Error::UnknownTrackId(id));
            }
        }
    }
    for a in assignments {
        let det = &detections[a.pred_index];
        match a.outcome {
            Outcome::MatchedTo(id) => {
                let pos = memory.position(id).expect("checked above");
                let inst = &mut memory.instances[pos];
                if inst.embedding.dim() != det.embedding.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "memory embedding dimension {} vs detection {}",
                        inst.embedding.dim(),
                        det.embedding.dim()
                    )));
                }
                if rho == 1.0 {
                    inst.embedding = det.embedding.clone();
                } else if rho != 0.0 {
                    for (m, v) in inst.embedding.0.iter_mut().zip(&det.embedding.0) {
                        *m = (1.0 - rho) * *m + rho * v;
                    }
                }
                inst.last_seen_frame = frame_index;
                inst.hit_count += 1;
                ids[a.pred_index] = Some(id);
            }
            Outcome::NewInstance => {
                ids[a.pred_index] = Some(memory.insert(det.embedding.clone(), det.category_id, frame_index));
            }
            Outcome::Discarded => {}
        }
    }
    Ok(ids)
}

#[derive(Debug, Clone)]
struct TrackBuilder {
    entries: BTreeMap<u32, (TrackEntry, u32)>,
}

impl TrackBuilder {
    fn finish(self, track_id: u64) -> Track {
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for (_, cat) in self.entries.values() {
            *votes.entry(*cat).or_default() += 1;
        }
        let top = votes.values().copied().max().unwrap_or(0);
        let tied: Vec<u32> = votes.iter().filter(|(_, &v)| v == top).map(|(&c, _)| c).collect();
        let category_id = if tied.len() == 1 {
            tied[0]
        } else {
            // Highest per-frame score among tied categories; earliest frame on ties.
            let mut best: Option<(f64, u32)> = None;
            for (entry, cat) in self.entries.values() {
                if tied.contains(cat) && best.is_none_or(|(s, _)| entry.score > s) {
                    best = Some((entry.score, *cat));
                }
            }
            best.map(|(_, c)| c).unwrap_or(tied[0])
        };
        let score = self.entries.values().map(|(e, _)| e.score).sum::<f64>() / self.entries.len() as f64;
        Track {
            track_id,
            category_id,
            score,
            entries: self.entries.into_iter().map(|(f, (e, _))| (f, e)).collect(),
        }
    }
}

/// Frame-by-frame tracker over a single video.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AssociationConfig,
    meta: VideoMeta,
    memory: MemoryBank,
    builders: BTreeMap<u64, TrackBuilder>,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: AssociationConfig, meta: VideoMeta) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            meta,
            memory: MemoryBank::new(),
            builders: BTreeMap::new(),
            last_frame: None,
        })
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    /// Processes one frame and returns the identity given to each input
    /// detection (`None` for detections beyond the per-frame cap or discarded).
    pub fn step(&mut self, frame: &FrameDetections) -> Result<Vec<Option<u64>>> {
        let f = frame.frame_index;
        if f >= self.meta.length {
            return Err(Error::InvalidInput(format!(
                "frame {} beyond video length {}",
                f, self.meta.length
            )));
        }
        if self.last_frame.is_some_and(|last| f <= last) {
            return Err(Error::InvalidInput(format!("frame {f} is not in ascending order")));
        }
        self.last_frame = Some(f);

        let mut order: Vec<usize> = (0..frame.detections.len()).collect();
        order.sort_by(|&a, &b| frame.detections[b].score.total_cmp(&frame.detections[a].score));
        order.truncate(self.cfg.keep_top_n_per_frame as usize);
        let kept: Vec<Detection> = order.iter().map(|&i| frame.detections[i].clone()).collect();

        let mut labels = vec![None; frame.detections.len()];
        if kept.is_empty() {
            return Ok(labels);
        }
        for d in &kept {
            if let Some(m) = &d.mask {
                if m.height != self.meta.height || m.width != self.meta.width {
                    return Err(Error::DimensionMismatch(format!(
                        "detection mask {}x{} in video {}x{}",
                        m.height, m.width, self.meta.height, self.meta.width
                    )));
                }
            }
        }

        let scores = if self.memory.is_empty() {
            Matrix::zeros(kept.len(), 0)
        } else {
            let embeddings: Vec<Embedding> = kept.iter().map(|d| d.embedding.clone()).collect();
            similarity(&embeddings, &self.memory, self.cfg.similarity_kind)?
        };
        let assignments = assign(&scores, &kept, &self.memory, &self.cfg)?;
        let ids = update_memory(&mut self.memory, &assignments, &kept, f, &self.cfg)?;

        for (k, id) in ids.into_iter().enumerate() {
            let Some(id) = id else { continue };
            let det = &kept[k];
            let entry = TrackEntry {
                bbox: det.bbox,
                mask: det.mask.clone(),
                score: det.score,
            };
            self.builders
                .entry(id)
                .or_insert_with(|| TrackBuilder {
                    entries: BTreeMap::new(),
                })
                .entries
                .insert(f, (entry, det.category_id));
            labels[order[k]] = Some(id);
        }
        Ok(labels)
    }

    /// Finalized tracks in ascending id order.
    pub fn finish(self) -> Vec<Track> {
        self.builders.into_iter().map(|(id, b)| b.finish(id)).collect()
    }
}

/// Tracks a whole video and also returns the per-frame identity labels
/// aligned with each frame's input detections.
pub fn track_video_with_labels(
    frames: &[FrameDetections],
    cfg: &AssociationConfig,
    meta: VideoMeta,
) -> Result<(Vec<Track>, Vec<Vec<Option<u64>>>)> {
    let mut tracker = Tracker::new(cfg.clone(), meta)?;
    let labels = frames.iter().map(|f| tracker.step(f)).collect::<Result<Vec<_>>>()?;
    Ok((tracker.finish(), labels))
}

pub fn track_video(frames: &[FrameDetections], cfg: &AssociationConfig, meta: VideoMeta) -> Result<Vec<Track>> {
    track_video_with_labels(frames, cfg, meta).map(|(t, _)| t)
}

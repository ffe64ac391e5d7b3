//! JSON file formats: annotations, detections, results, pseudo pairs,
//! evaluation reports and synthetic identity keys.
//!
//! Loaders ignore unknown keys. Syntax and type errors become
//! [`Error::Parse`] with a line and column; violated invariants become
//! [`Error::Schema`] naming the field and the invariant. Writers build the
//! whole file in memory and write it once.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, Metrics};
use crate::pseudo_pair::{CropPairSample, CropView, InstanceAnnotation};
use crate::rle::RleMask;
use crate::synth::{Identity, IdentityKey};
use crate::types::{
    Detection, Embedding, FrameDetections, Track, TrackEntry, VideoDetections, VideoGroundTruth, VideoMeta, VideoTracks,
};

/// Tolerance for `score == max(class_probs)` and `sum(class_probs) <= 1`.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

/// Parsed annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub videos: Vec<VideoGroundTruth>,
    pub categories: Vec<Category>,
}

/// Parsed detections file.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub embedding_dim: usize,
    pub videos: Vec<VideoDetections>,
}

// ---------------------------------------------------------------- wire types

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum WireCounts {
    Ints(Vec<u64>),
    Coco(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireRle {
    /// `[height, width]`.
    size: [u32; 2],
    counts: WireCounts,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireVideo {
    id: u64,
    width: u32,
    height: u32,
    length: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireAnnotation {
    id: u64,
    video_id: u64,
    category_id: u32,
    segmentations: Vec<Option<WireRle>>,
    bboxes: Vec<Option<[f64; 4]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCategory {
    id: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireAnnotationFile {
    videos: Vec<WireVideo>,
    annotations: Vec<WireAnnotation>,
    categories: Vec<WireCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireHeader {
    embedding_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireDetection {
    bbox: [f64; 4],
    score: f64,
    category_id: u32,
    class_probs: Vec<f64>,
    segmentation: Option<WireRle>,
    embedding: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireFrame {
    frame_index: u32,
    detections: Vec<WireDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireDetVideo {
    video_id: u64,
    width: u32,
    height: u32,
    length: u32,
    frames: Vec<WireFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireDetectionFile {
    header: WireHeader,
    videos: Vec<WireDetVideo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireResult {
    video_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    track_id: Option<u64>,
    category_id: u32,
    score: f64,
    segmentations: Vec<Option<WireRle>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bboxes: Option<Vec<Option<[f64; 4]>>>,
}

// ------------------------------------------------------------------ helpers

fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn rle_from_wire(w: &WireRle, dims: (u32, u32), loc: &str) -> Result<RleMask> {
    let [h, w_] = w.size;
    if (h, w_) != dims {
        return Err(Error::schema(
            format!("{loc}.size"),
            format!(
                "mask size [{h}, {w_}] equals the video's [height, width] [{}, {}]",
                dims.0, dims.1
            ),
        ));
    }
    let mask = match &w.counts {
        WireCounts::Ints(c) => {
            let counts = c
                .iter()
                .map(|&v| u32::try_from(v))
                .collect::<std::result::Result<Vec<u32>, _>>()
                .map_err(|_| Error::schema(format!("{loc}.counts"), "each count fits in 32 bits"))?;
            RleMask {
                height: h,
                width: w_,
                counts,
            }
        }
        WireCounts::Coco(s) => RleMask::from_coco_string(h, w_, s)
            .map_err(|e| Error::schema(format!("{loc}.counts"), format!("compressed counts decode: {e}")))?,
    };
    mask.validate().map_err(|e| {
        let invariant = match e {
            Error::CountsMismatch { sum, expected } => {
                format!("segmentation counts sum to height*width ({expected}), got {sum}")
            }
            other => format!("counts have no zero runs except the first ({other})"),
        };
        Error::schema(format!("{loc}.counts"), invariant)
    })?;
    Ok(mask)
}

fn rle_to_wire(m: &RleMask) -> WireRle {
    WireRle {
        size: [m.height, m.width],
        counts: WireCounts::Ints(m.counts.iter().map(|&c| c as u64).collect()),
    }
}

fn bbox_from_wire(b: [f64; 4], loc: &str) -> Result<BBox> {
    BBox::new(b[0], b[1], b[2], b[3]).map_err(|_| Error::schema(loc, "box coordinates finite with w >= 0 and h >= 0"))
}

fn bbox_to_wire(b: &BBox) -> [f64; 4] {
    b.to_array()
}

fn check_dims(width: u32, height: u32, length: u32, loc: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::schema(loc, "video width and height are positive"));
    }
    if length == 0 {
        return Err(Error::schema(loc, "video length is positive"));
    }
    Ok(())
}

/// Entry for one frame from an optional mask and optional box; the box is
/// derived from the mask when missing.
fn entry_from_parts(mask: Option<RleMask>, bbox: Option<BBox>, score: f64) -> Option<TrackEntry> {
    let bbox = match (bbox, &mask) {
        (Some(b), _) => b,
        (None, Some(m)) => m.bbox().unwrap_or(BBox {
            x: 0.0,
            y: 0.0,
            w: 0.0,
            h: 0.0,
        }),
        (None, None) => return None,
    };
    Some(TrackEntry { bbox, mask, score })
}

/// Rounds to six significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    fs::write(path, records_to_string(records))?;
    Ok(())
}

/// `[` / one compact record per line / `]`, newline-terminated; `[]` when
/// empty.
fn records_to_string<T: Serialize>(records: &[T]) -> String {
    if records.is_empty() {
        return "[]\n".to_string();
    }
    let lines: Vec<String> = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize"))
        .collect();
    format!("[\n{}\n]\n", lines.join(",\n"))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

// -------------------------------------------------------------- annotations

pub fn parse_annotations(text: &str, origin: &str) -> Result<AnnotationSet> {
    let file: WireAnnotationFile = parse(text, origin)?;

    let mut categories = Vec::new();
    let mut cat_ids = BTreeSet::new();
    for (i, c) in file.categories.iter().enumerate() {
        if !cat_ids.insert(c.id) {
            return Err(Error::schema(format!("categories[{i}].id"), "category ids are unique"));
        }
        categories.push(Category {
            id: c.id,
            name: c.name.clone(),
        });
    }

    let mut videos: Vec<VideoGroundTruth> = Vec::new();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, v) in file.videos.iter().enumerate() {
        let loc = format!("videos[{i}]");
        check_dims(v.width, v.height, v.length, &loc)?;
        if index.insert(v.id, videos.len()).is_some() {
            return Err(Error::schema(format!("{loc}.id"), "video ids are unique"));
        }
        videos.push(VideoGroundTruth {
            video_id: v.id,
            height: v.height,
            width: v.width,
            length: v.length,
            gt_tracks: Vec::new(),
            category_set: cat_ids.iter().copied().collect(),
        });
    }

    let mut ann_ids = BTreeSet::new();
    for (i, a) in file.annotations.iter().enumerate() {
        let loc = format!("annotations[{i}]");
        if !ann_ids.insert(a.id) {
            return Err(Error::schema(format!("{loc}.id"), "annotation ids are unique"));
        }
        let Some(&vi) = index.get(&a.video_id) else {
            return Err(Error::schema(
                format!("{loc}.video_id"),
                "video_id refers to a listed video",
            ));
        };
        if !cat_ids.contains(&a.category_id) {
            return Err(Error::schema(
                format!("{loc}.category_id"),
                "category_id refers to a listed category",
            ));
        }
        let video = &mut videos[vi];
        let len = video.length as usize;
        if a.segmentations.len() != len {
            return Err(Error::schema(
                format!("{loc}.segmentations"),
                "segmentations has one slot per video frame",
            ));
        }
        if a.bboxes.len() != len {
            return Err(Error::schema(
                format!("{loc}.bboxes"),
                "bboxes has one slot per video frame",
            ));
        }
        let mut entries = BTreeMap::new();
        for f in 0..len {
            let mask = a.segmentations[f]
                .as_ref()
                .map(|w| rle_from_wire(w, (video.height, video.width), &format!("{loc}.segmentations[{f}]")))
                .transpose()?;
            let bbox = a.bboxes[f]
                .map(|b| bbox_from_wire(b, &format!("{loc}.bboxes[{f}]")))
                .transpose()?;
            if let Some(e) = entry_from_parts(mask, bbox, 1.0) {
                entries.insert(f as u32, e);
            }
        }
        if entries.is_empty() {
            return Err(Error::schema(loc, "annotation has at least one non-null frame"));
        }
        video.gt_tracks.push(Track {
            track_id: a.id,
            category_id: a.category_id,
            score: 1.0,
            entries,
        });
    }
    Ok(AnnotationSet { videos, categories })
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    parse_annotations(&read(path)?, &path.display().to_string())
}

pub fn annotations_to_string(set: &AnnotationSet) -> String {
    let videos = set
        .videos
        .iter()
        .map(|v| WireVideo {
            id: v.video_id,
            width: v.width,
            height: v.height,
            length: v.length,
        })
        .collect();
    let mut annotations: Vec<WireAnnotation> = Vec::new();
    for v in &set.videos {
        for t in &v.gt_tracks {
            let slot = |f: u32| t.entries.get(&f);
            annotations.push(WireAnnotation {
                id: t.track_id,
                video_id: v.video_id,
                category_id: t.category_id,
                segmentations: (0..v.length)
                    .map(|f| slot(f).and_then(|e| e.mask.as_ref()).map(rle_to_wire))
                    .collect(),
                bboxes: (0..v.length).map(|f| slot(f).map(|e| bbox_to_wire(&e.bbox))).collect(),
            });
        }
    }
    let file = WireAnnotationFile {
        videos,
        annotations,
        categories: set
            .categories
            .iter()
            .map(|c| WireCategory {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("annotations serialize");
    s.push('\n');
    s
}

pub fn save_annotations(set: &AnnotationSet, path: &Path) -> Result<()> {
    fs::write(path, annotations_to_string(set))?;
    Ok(())
}

// --------------------------------------------------------------- detections

fn detection_from_wire(d: &WireDetection, meta: &VideoMeta, dim: usize, loc: &str) -> Result<Detection> {
    let bbox = bbox_from_wire(d.bbox, &format!("{loc}.bbox"))?;
    if d.embedding.len() != dim {
        return Err(Error::schema(
            format!("{loc}.embedding"),
            format!(
                "embedding length equals header.embedding_dim ({dim}), got {}",
                d.embedding.len()
            ),
        ));
    }
    let embedding = Embedding::new(d.embedding.clone())
        .map_err(|_| Error::schema(format!("{loc}.embedding"), "embedding entries are finite"))?;
    if !(0.0..=1.0).contains(&d.score) {
        return Err(Error::schema(format!("{loc}.score"), "score lies in [0, 1]"));
    }
    if d.class_probs.is_empty() || d.class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::schema(
            format!("{loc}.class_probs"),
            "class_probs is non-empty with entries in [0, 1]",
        ));
    }
    if d.class_probs.iter().sum::<f64>() > 1.0 + PROB_TOLERANCE {
        return Err(Error::schema(
            format!("{loc}.class_probs"),
            "class_probs sum to at most 1",
        ));
    }
    let max = d.class_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (d.score - max).abs() > PROB_TOLERANCE {
        return Err(Error::schema(format!("{loc}.score"), "score equals max(class_probs)"));
    }
    let at_cat = d
        .class_probs
        .get(d.category_id as usize)
        .copied()
        .unwrap_or(f64::NEG_INFINITY);
    if (at_cat - max).abs() > PROB_TOLERANCE {
        return Err(Error::schema(
            format!("{loc}.category_id"),
            "category_id is the argmax of class_probs",
        ));
    }
    let mask = d
        .segmentation
        .as_ref()
        .map(|w| rle_from_wire(w, (meta.height, meta.width), &format!("{loc}.segmentation")))
        .transpose()?;
    Ok(Detection {
        bbox,
        mask,
        score: d.score,
        class_probs: d.class_probs.clone(),
        category_id: d.category_id,
        embedding,
    })
}

pub fn parse_detections(text: &str, origin: &str) -> Result<DetectionSet> {
    let file: WireDetectionFile = parse(text, origin)?;
    let dim = file.header.embedding_dim;
    if dim == 0 {
        return Err(Error::schema("header.embedding_dim", "embedding_dim is positive"));
    }
    let mut ids = BTreeSet::new();
    let mut videos = Vec::with_capacity(file.videos.len());
    for (vi, v) in file.videos.iter().enumerate() {
        let vloc = format!("videos[{vi}]");
        check_dims(v.width, v.height, v.length, &vloc)?;
        if !ids.insert(v.video_id) {
            return Err(Error::schema(format!("{vloc}.video_id"), "video ids are unique"));
        }
        let meta = VideoMeta {
            video_id: v.video_id,
            height: v.height,
            width: v.width,
            length: v.length,
        };
        let mut frames = Vec::with_capacity(v.frames.len());
        let mut last: Option<u32> = None;
        for (fi, f) in v.frames.iter().enumerate() {
            let floc = format!("{vloc}.frames[{fi}]");
            if f.frame_index >= v.length {
                return Err(Error::schema(
                    format!("{floc}.frame_index"),
                    "frame_index lies within the video length",
                ));
            }
            if last.is_some_and(|l| f.frame_index <= l) {
                return Err(Error::schema(
                    format!("{floc}.frame_index"),
                    "frame indices strictly increase",
                ));
            }
            last = Some(f.frame_index);
            let detections = f
                .detections
                .iter()
                .enumerate()
                .map(|(di, d)| detection_from_wire(d, &meta, dim, &format!("{floc}.detections[{di}]")))
                .collect::<Result<Vec<_>>>()?;
            frames.push(FrameDetections {
                frame_index: f.frame_index,
                detections,
            });
        }
        videos.push(VideoDetections { meta, frames });
    }
    Ok(DetectionSet {
        embedding_dim: dim,
        videos,
    })
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    parse_detections(&read(path)?, &path.display().to_string())
}

pub fn detections_to_string(set: &DetectionSet) -> String {
    let file = WireDetectionFile {
        header: WireHeader {
            embedding_dim: set.embedding_dim,
        },
        videos: set
            .videos
            .iter()
            .map(|v| WireDetVideo {
                video_id: v.meta.video_id,
                width: v.meta.width,
                height: v.meta.height,
                length: v.meta.length,
                frames: v
                    .frames
                    .iter()
                    .map(|f| WireFrame {
                        frame_index: f.frame_index,
                        detections: f
                            .detections
                            .iter()
                            .map(|d| WireDetection {
                                bbox: bbox_to_wire(&d.bbox),
                                score: d.score,
                                category_id: d.category_id,
                                class_probs: d.class_probs.clone(),
                                segmentation: d.mask.as_ref().map(rle_to_wire),
                                embedding: d.embedding.0.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("detections serialize");
    s.push('\n');
    s
}

pub fn save_detections(set: &DetectionSet, path: &Path) -> Result<()> {
    fs::write(path, detections_to_string(set))?;
    Ok(())
}

// ------------------------------------------------------------------ results

fn result_records(videos: &[VideoTracks]) -> Vec<WireResult> {
    let mut records: Vec<WireResult> = Vec::new();
    for v in videos {
        for t in &v.tracks {
            let slot = |f: u32| t.entries.get(&f);
            records.push(WireResult {
                video_id: v.meta.video_id,
                track_id: Some(t.track_id),
                category_id: t.category_id,
                score: round6(t.score),
                segmentations: (0..v.meta.length)
                    .map(|f| slot(f).and_then(|e| e.mask.as_ref()).map(rle_to_wire))
                    .collect(),
                bboxes: Some(
                    (0..v.meta.length)
                        .map(|f| slot(f).map(|e| bbox_to_wire(&e.bbox).map(round6)))
                        .collect(),
                ),
            });
        }
    }
    records.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(b.score.total_cmp(&a.score))
            .then(a.track_id.cmp(&b.track_id))
    });
    records
}

/// Records sorted by `(video_id, descending score, track_id)`, floats at six
/// significant digits, one record per line.
pub fn results_to_string(videos: &[VideoTracks]) -> String {
    records_to_string(&result_records(videos))
}

pub fn save_results(videos: &[VideoTracks], path: &Path) -> Result<()> {
    write_records(path, &result_records(videos))
}

/// Groups result records by video in ascending id order. A video's length is
/// the length of its records' `segmentations`; its size comes from the
/// masks, `(0, 0)` when it has none. Records without `track_id` get fresh
/// ids above the largest id of their video.
pub fn parse_results(text: &str, origin: &str) -> Result<Vec<VideoTracks>> {
    let records: Vec<WireResult> = parse(text, origin)?;
    let mut by_video: BTreeMap<u64, (Option<VideoMeta>, Vec<(usize, Track, bool)>)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let loc = format!("[{i}]");
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::schema(format!("{loc}.score"), "score lies in [0, 1]"));
        }
        let len = r.segmentations.len();
        if len == 0 {
            return Err(Error::schema(
                format!("{loc}.segmentations"),
                "segmentations has one slot per video frame",
            ));
        }
        if let Some(b) = &r.bboxes {
            if b.len() != len {
                return Err(Error::schema(
                    format!("{loc}.bboxes"),
                    "bboxes has as many slots as segmentations",
                ));
            }
        }
        let (meta, tracks) = by_video.entry(r.video_id).or_insert((None, Vec::new()));
        let first_size = r.segmentations.iter().flatten().next().map(|w| (w.size[0], w.size[1]));
        let m = meta.get_or_insert(VideoMeta {
            video_id: r.video_id,
            height: first_size.map_or(0, |s| s.0),
            width: first_size.map_or(0, |s| s.1),
            length: len as u32,
        });
        if m.length as usize != len {
            return Err(Error::schema(
                format!("{loc}.segmentations"),
                "all records of a video have the same number of frames",
            ));
        }
        if m.height == 0 {
            if let Some((h, w)) = first_size {
                m.height = h;
                m.width = w;
            }
        }
        let dims = (m.height, m.width);
        let mut entries = BTreeMap::new();
        for f in 0..len {
            let mask = r.segmentations[f]
                .as_ref()
                .map(|w| rle_from_wire(w, dims, &format!("{loc}.segmentations[{f}]")))
                .transpose()?;
            let bbox = r
                .bboxes
                .as_ref()
                .and_then(|b| b[f])
                .map(|b| bbox_from_wire(b, &format!("{loc}.bboxes[{f}]")))
                .transpose()?;
            if let Some(e) = entry_from_parts(mask, bbox, r.score) {
                entries.insert(f as u32, e);
            }
        }
        if entries.is_empty() {
            return Err(Error::schema(loc, "result has at least one non-null frame"));
        }
        tracks.push((
            i,
            Track {
                track_id: r.track_id.unwrap_or(0),
                category_id: r.category_id,
                score: r.score,
                entries,
            },
            r.track_id.is_some(),
        ));
    }

    let mut out = Vec::with_capacity(by_video.len());
    for (_, (meta, tracks)) in by_video {
        let mut seen = BTreeSet::new();
        for (i, t, explicit) in &tracks {
            if *explicit && !seen.insert(t.track_id) {
                return Err(Error::schema(
                    format!("[{i}].track_id"),
                    "track ids are unique within a video",
                ));
            }
        }
        let mut next = seen.iter().next_back().map_or(1, |m| m + 1);
        let tracks = tracks
            .into_iter()
            .map(|(_, mut t, explicit)| {
                if !explicit {
                    t.track_id = next;
                    next += 1;
                }
                t
            })
            .collect();
        out.push(VideoTracks {
            meta: meta.expect("every group has a record"),
            tracks,
        });
    }
    Ok(out)
}

pub fn load_results(path: &Path) -> Result<Vec<VideoTracks>> {
    parse_results(&read(path)?, &path.display().to_string())
}

// -------------------------------------------------------------------- pairs

#[derive(Serialize)]
struct WirePairAnnotation {
    instance_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    segmentation: Option<WireRle>,
}

#[derive(Serialize)]
struct WireView {
    window: [f64; 4],
    annotations: Vec<WirePairAnnotation>,
}

#[derive(Serialize)]
struct WirePair {
    source_image_id: u64,
    seed: u64,
    view_a: WireView,
    view_b: WireView,
    correspondence: Vec<(usize, usize)>,
}

fn view_to_wire(v: &CropView) -> WireView {
    WireView {
        window: [v.window.x0, v.window.y0, v.window.x1, v.window.y1],
        annotations: v
            .annotations
            .iter()
            .map(|a: &InstanceAnnotation| WirePairAnnotation {
                instance_id: a.instance_id,
                category_id: a.category_id,
                bbox: bbox_to_wire(&a.bbox),
                segmentation: a.mask.as_ref().map(rle_to_wire),
            })
            .collect(),
    }
}

/// One record per `(seed, pair)`, one per line.
pub fn pairs_to_string(pairs: &[(u64, CropPairSample)]) -> String {
    let records: Vec<WirePair> = pairs
        .iter()
        .map(|(seed, p)| WirePair {
            source_image_id: p.source_image_id,
            seed: *seed,
            view_a: view_to_wire(&p.view_a),
            view_b: view_to_wire(&p.view_b),
            correspondence: p.correspondence.clone(),
        })
        .collect();
    records_to_string(&records)
}

pub fn save_pairs(pairs: &[(u64, CropPairSample)], path: &Path) -> Result<()> {
    fs::write(path, pairs_to_string(pairs))?;
    Ok(())
}

// ------------------------------------------------------------------- report

fn metrics_value(m: &Option<Metrics>) -> Value {
    match m {
        None => Value::Null,
        Some(m) => {
            let mut obj = Map::new();
            obj.insert("ap".into(), json!(m.ap));
            obj.insert("ap50".into(), json!(m.ap50));
            obj.insert("ap75".into(), json!(m.ap75));
            for (k, v) in &m.ar {
                obj.insert(format!("ar{k}"), json!(v));
            }
            Value::Object(obj)
        }
    }
}

/// Per-category metrics (`null` when a category has no ground truth) and
/// their average.
pub fn report_to_string(report: &EvalReport) -> String {
    let per_category: Map<String, Value> = report
        .per_category
        .iter()
        .map(|(c, m)| (c.to_string(), metrics_value(m)))
        .collect();
    pretty(&json!({
        "overall": metrics_value(&report.overall),
        "per_category": per_category,
    }))
}

// ------------------------------------------------------------------ identity

/// Identity key as records `{video_id, frame_index, detection_index,
/// gt_track_id}` with `gt_track_id` null for clutter.
pub fn identity_to_string(key: &IdentityKey) -> String {
    let records: Vec<Value> = key
        .iter()
        .map(|(&(v, f, d), id)| {
            json!({
                "video_id": v,
                "frame_index": f,
                "detection_index": d,
                "gt_track_id": match id {
                    Identity::Gt(g) => Some(*g),
                    Identity::Clutter => None,
                },
            })
        })
        .collect();
    records_to_string(&records)
}

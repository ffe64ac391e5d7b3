//! Pseudo key/reference frame pairs from a single annotated image.
//!
//! Two crop windows are drawn independently; each view keeps the instances
//! that remain sufficiently visible, and the correspondence links instances
//! surviving in both views. The same object therefore appears at different
//! positions, like two frames under camera motion.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::rle::RleMask;
use crate::rng::SplitMix64;
use crate::types::VideoGroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropConfig {
    /// Crop side as a fraction of the image side, drawn per axis.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Minimum fraction of an instance's box area that must remain.
    pub visibility_threshold: f64,
    pub rng_seed: u64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            min_scale: 0.5,
            max_scale: 1.0,
            visibility_threshold: 0.3,
            rng_seed: 0,
        }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale && self.max_scale <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "crop scales must satisfy 0 < min_scale <= max_scale <= 1 (got {}, {})",
                self.min_scale, self.max_scale
            )));
        }
        if !(self.visibility_threshold > 0.0 && self.visibility_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "crop.visibility_threshold must lie in (0,1], got {}",
                self.visibility_threshold
            )));
        }
        Ok(())
    }
}

/// Crop rectangle in source pixels; corners are integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropWindow {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: width as f64,
            y1: height as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    fn as_box(&self) -> BBox {
        BBox {
            x: self.x0,
            y: self.y0,
            w: self.width(),
            h: self.height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAnnotation {
    pub instance_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageMeta {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropView {
    pub window: CropWindow,
    pub annotations: Vec<InstanceAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropPairSample {
    pub source_image_id: u64,
    pub view_a: CropView,
    pub view_b: CropView,
    /// `(index in view_a, index in view_b)` for instances present in both.
    pub correspondence: Vec<(usize, usize)>,
}

/// Window from four unit draws: width scale, height scale, x offset, y offset.
pub fn crop_from_draws(image_w: u32, image_h: u32, cfg: &CropConfig, u: [f64; 4]) -> CropWindow {
    let side = |draw: f64, full: u32| -> u32 {
        let scale = draw * (cfg.max_scale - cfg.min_scale) + cfg.min_scale;
        ((scale * full as f64).round() as u32).clamp(1, full)
    };
    let offset = |draw: f64, slack: u32| -> u32 { ((draw * (slack as f64 + 1.0)).floor() as u32).min(slack) };
    let w = side(u[0], image_w);
    let h = side(u[1], image_h);
    let x0 = offset(u[2], image_w - w);
    let y0 = offset(u[3], image_h - h);
    CropWindow {
        x0: x0 as f64,
        y0: y0 as f64,
        x1: (x0 + w) as f64,
        y1: (y0 + h) as f64,
    }
}

pub fn sample_crop(image_w: u32, image_h: u32, cfg: &CropConfig, rng: &mut SplitMix64) -> Result<CropWindow> {
    if image_w < 2 || image_h < 2 {
        return Err(Error::ImageTooSmall {
            width: image_w,
            height: image_h,
        });
    }
    cfg.validate()?;
    let u = [rng.next_f64(), rng.next_f64(), rng.next_f64(), rng.next_f64()];
    Ok(crop_from_draws(image_w, image_h, cfg, u))
}

/// Moves annotations into window coordinates, clipping boxes and cropping
/// masks; instances whose clipped box keeps less than the visibility
/// threshold of its area (or nothing) are dropped.
pub fn transform_annotations(
    annotations: &[InstanceAnnotation],
    window: &CropWindow,
    cfg: &CropConfig,
) -> Result<Vec<InstanceAnnotation>> {
    let wbox = window.as_box();
    let mut out = Vec::new();
    for a in annotations {
        let original = a.bbox.area();
        let Some(clipped) = a.bbox.intersection(&wbox) else {
            continue;
        };
        if original <= 0.0 || clipped.area() / original < cfg.visibility_threshold {
            continue;
        }
        let bbox = BBox {
            x: clipped.x - window.x0,
            y: clipped.y - window.y0,
            w: clipped.w,
            h: clipped.h,
        };
        let mask = a
            .mask
            .as_ref()
            .map(|m| {
                m.crop(
                    window.x0 as u32,
                    window.y0 as u32,
                    window.width() as u32,
                    window.height() as u32,
                )
            })
            .transpose()?;
        out.push(InstanceAnnotation {
            instance_id: a.instance_id,
            category_id: a.category_id,
            bbox,
            mask,
        });
    }
    Ok(out)
}

fn check_annotations(image: &ImageMeta, annotations: &[InstanceAnnotation]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in annotations {
        if !seen.insert(a.instance_id) {
            return Err(Error::DuplicateInstanceId(a.instance_id));
        }
        a.bbox.validate()?;
        if let Some(m) = &a.mask {
            if m.height != image.height || m.width != image.width {
                return Err(Error::DimensionMismatch(format!(
                    "instance {} mask {}x{} on image {}x{}",
                    a.instance_id, m.height, m.width, image.height, image.width
                )));
            }
        }
    }
    Ok(())
}

/// Builds a pair from two explicit windows.
pub fn pair_from_windows(
    image: &ImageMeta,
    annotations: &[InstanceAnnotation],
    cfg: &CropConfig,
    window_a: CropWindow,
    window_b: CropWindow,
) -> Result<CropPairSample> {
    check_annotations(image, annotations)?;
    let view_a = CropView {
        window: window_a,
        annotations: transform_annotations(annotations, &window_a, cfg)?,
    };
    let view_b = CropView {
        window: window_b,
        annotations: transform_annotations(annotations, &window_b, cfg)?,
    };
    let correspondence = view_a
        .annotations
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            view_b
                .annotations
                .iter()
                .position(|b| b.instance_id == a.instance_id)
                .map(|j| (i, j))
        })
        .collect();
    Ok(CropPairSample {
        source_image_id: image.image_id,
        view_a,
        view_b,
        correspondence,
    })
}

/// Draws view A's window, then view B's, from `rng`.
pub fn make_pair(
    image: &ImageMeta,
    annotations: &[InstanceAnnotation],
    cfg: &CropConfig,
    rng: &mut SplitMix64,
) -> Result<CropPairSample> {
    let a = sample_crop(image.width, image.height, cfg, rng)?;
    let b = sample_crop(image.width, image.height, cfg, rng)?;
    pair_from_windows(image, annotations, cfg, a, b)
}

/// Image id of frame `frame` of video `video_id`.
pub fn frame_image_id(video_id: u64, frame: u32) -> u64 {
    (video_id << 32) | frame as u64
}

/// Treats every annotated frame of every video as a still image and makes
/// one pair from it. The pair for image `i` draws from a stream seeded with
/// `seed + i`, which is returned alongside. Frames without annotations are
/// skipped. Output follows video order, then frame order.
pub fn pairs_for_videos(
    videos: &[VideoGroundTruth],
    cfg: &CropConfig,
    seed: u64,
) -> Result<Vec<(u64, CropPairSample)>> {
    cfg.validate()?;
    let mut jobs: Vec<(ImageMeta, Vec<InstanceAnnotation>)> = Vec::new();
    for v in videos {
        for f in 0..v.length {
            let anns: Vec<InstanceAnnotation> = v
                .gt_tracks
                .iter()
                .filter_map(|t| {
                    t.entries.get(&f).map(|e| InstanceAnnotation {
                        instance_id: t.track_id,
                        category_id: t.category_id,
                        bbox: e.bbox,
                        mask: e.mask.clone(),
                    })
                })
                .collect();
            if anns.is_empty() {
                continue;
            }
            let image = ImageMeta {
                image_id: frame_image_id(v.video_id, f),
                width: v.width,
                height: v.height,
            };
            jobs.push((image, anns));
        }
    }
    jobs.par_iter()
        .map(|(image, anns)| {
            let s = seed.wrapping_add(image.image_id);
            make_pair(image, anns, cfg, &mut SplitMix64::new(s)).map(|p| (s, p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::{rle_encode, Bitmap};

    fn ann(id: u64, b: [f64; 4]) -> InstanceAnnotation {
        InstanceAnnotation {
            instance_id: id,
            category_id: 1,
            bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            mask: None,
        }
    }

    #[test]
    fn full_scale_is_full_image() {
        let cfg = CropConfig {
            min_scale: 1.0,
            max_scale: 1.0,
            ..Default::default()
        };
        for seed in 0..20 {
            let w = sample_crop(640, 480, &cfg, &mut SplitMix64::new(seed)).unwrap();
            assert_eq!(w, CropWindow::full(640, 480));
        }
    }

    #[test]
    fn forced_draws() {
        // min_scale 0.5 and a zero scale draw gives half-size sides
        let w = crop_from_draws(100, 100, &CropConfig::default(), [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            w,
            CropWindow {
                x0: 0.0,
                y0: 0.0,
                x1: 50.0,
                y1: 50.0
            }
        );
        let w = crop_from_draws(100, 100, &CropConfig::default(), [0.0, 0.0, 1.0, 0.999]);
        assert_eq!((w.x0, w.y0), (50.0, 50.0));
    }

    #[test]
    fn seeded_draws_repeat() {
        let cfg = CropConfig::default();
        let a = sample_crop(333, 211, &cfg, &mut SplitMix64::new(5)).unwrap();
        let b = sample_crop(333, 211, &cfg, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_image_rejected() {
        assert!(matches!(
            sample_crop(1, 10, &CropConfig::default(), &mut SplitMix64::new(0)),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn clip_fixture() {
        let w = CropWindow {
            x0: 20.0,
            y0: 20.0,
            x1: 100.0,
            y1: 100.0,
        };
        let out = transform_annotations(&[ann(1, [10.0, 10.0, 40.0, 40.0])], &w, &CropConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox.to_array(), [0.0, 0.0, 30.0, 30.0]);
        let outside = transform_annotations(&[ann(1, [0.0, 0.0, 10.0, 10.0])], &w, &CropConfig::default()).unwrap();
        assert!(outside.is_empty());
        // 5% visible falls under the 0.3 threshold
        let sliver = transform_annotations(&[ann(1, [0.0, 0.0, 21.0, 21.0])], &w, &CropConfig::default()).unwrap();
        assert!(sliver.is_empty());
    }

    #[test]
    fn full_window_is_identity() {
        let mut g = Bitmap::new(8, 8);
        g.set(2, 3, true);
        g.set(3, 3, true);
        let anns = vec![InstanceAnnotation {
            instance_id: 4,
            category_id: 2,
            bbox: BBox::new(3.0, 2.0, 1.0, 2.0).unwrap(),
            mask: Some(rle_encode(&g)),
        }];
        let out = transform_annotations(&anns, &CropWindow::full(8, 8), &CropConfig::default()).unwrap();
        assert_eq!(out, anns);
    }

    #[test]
    fn pair_correspondence() {
        let image = ImageMeta {
            image_id: 9,
            width: 100,
            height: 100,
        };
        let anns = vec![ann(1, [5.0, 5.0, 10.0, 10.0]), ann(2, [80.0, 80.0, 10.0, 10.0])];
        let cfg = CropConfig::default();
        let full = pair_from_windows(
            &image,
            &anns,
            &cfg,
            CropWindow::full(100, 100),
            CropWindow::full(100, 100),
        )
        .unwrap();
        assert_eq!(full.correspondence, vec![(0, 0), (1, 1)]);

        let left = CropWindow {
            x0: 0.0,
            y0: 0.0,
            x1: 50.0,
            y1: 100.0,
        };
        let right = CropWindow {
            x0: 50.0,
            y0: 0.0,
            x1: 100.0,
            y1: 100.0,
        };
        let disjoint = pair_from_windows(&image, &anns, &cfg, left, right).unwrap();
        assert!(disjoint.correspondence.is_empty());

        // object 1 visible in both windows at different offsets
        let a = crop_from_draws(100, 100, &cfg, [0.0, 0.0, 0.0, 0.0]);
        let b = crop_from_draws(100, 100, &cfg, [0.0, 0.0, 0.04, 0.02]);
        let p = pair_from_windows(&image, &anns, &cfg, a, b).unwrap();
        assert_eq!(p.correspondence.len(), 1);
        let (i, j) = p.correspondence[0];
        assert_eq!(p.view_a.annotations[i].bbox.to_array(), [5.0, 5.0, 10.0, 10.0]);
        assert_eq!(p.view_b.annotations[j].bbox.to_array(), [3.0, 4.0, 10.0, 10.0]);
    }

    #[test]
    fn duplicate_instances_rejected() {
        let image = ImageMeta {
            image_id: 1,
            width: 10,
            height: 10,
        };
        let anns = vec![ann(1, [0.0, 0.0, 2.0, 2.0]), ann(1, [3.0, 3.0, 2.0, 2.0])];
        assert!(make_pair(&image, &anns, &CropConfig::default(), &mut SplitMix64::new(0)).is_err());
    }
}

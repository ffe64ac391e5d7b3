//! Training-side math for contrastive instance embeddings: the prediction to
//! ground-truth matching cost, positive/negative selection on a reference
//! frame, the pairwise contrastive loss with analytic gradients, and the
//! weighted multi-task total.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::bbox::{box_giou, BBox};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{Detection, Embedding};

/// Predictions whose cost to the key instance is within this of the assigned
/// prediction's cost also count as positives.
pub const NEAR_TIE_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchWeights {
    pub w_cls: f64,
    pub w_l1: f64,
    pub w_giou: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            w_cls: 2.0,
            w_l1: 5.0,
            w_giou: 2.0,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_cls, self.w_l1, self.w_giou];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "match weights must be finite and non-negative".into(),
            ));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidConfig("match weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight shared by the box and mask terms.
    pub lambda1: f64,
    /// Weight of the contrastive term.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth object on a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub instance_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePartition {
    pub key_instance: u64,
    pub positives: Vec<Embedding>,
    pub negatives: Vec<Embedding>,
    /// Prediction indices behind `positives` and `negatives`.
    pub positive_indices: Vec<usize>,
    pub negative_indices: Vec<usize>,
}

fn normalize(b: &BBox, (w, h): (f64, f64)) -> BBox {
    BBox {
        x: b.x / w,
        y: b.y / h,
        w: b.w / w,
        h: b.h / h,
    }
}

/// Pairwise cost `w_cls (1 - p_i[c_j]) + w_l1 |b_i - g_j|_1 + w_giou (1 - GIoU)`
/// with boxes normalized by the image size. Lower is better.
pub fn matching_cost(
    predictions: &[Detection],
    gt: &[(u32, BBox)],
    weights: &MatchWeights,
    image_size: (f64, f64),
) -> Result<Matrix> {
    weights.validate()?;
    let (iw, ih) = image_size;
    if !(iw > 0.0 && ih > 0.0 && iw.is_finite() && ih.is_finite()) {
        return Err(Error::DimensionMismatch(format!(
            "image size {iw}x{ih} must be positive"
        )));
    }
    let mut cost = Matrix::zeros(predictions.len(), gt.len());
    for (i, p) in predictions.iter().enumerate() {
        let pb = normalize(&p.bbox, image_size);
        for (j, (cat, g)) in gt.iter().enumerate() {
            let gb = normalize(g, image_size);
            let l1 = (pb.x - gb.x).abs() + (pb.y - gb.y).abs() + (pb.w - gb.w).abs() + (pb.h - gb.h).abs();
            let giou = box_giou(&pb, &gb)?;
            cost[(i, j)] = weights.w_cls * (1.0 - p.prob(*cat)) + weights.w_l1 * l1 + weights.w_giou * (1.0 - giou);
        }
    }
    Ok(cost)
}

/// Splits reference-frame predictions into positives and negatives for one
/// key-frame instance. Returns `None` when the instance is not annotated on
/// the reference frame (or no prediction could be assigned to it).
pub fn select_samples(
    ref_predictions: &[Detection],
    ref_gt: &[GtObject],
    key_instance: u64,
    weights: &MatchWeights,
    image_size: (f64, f64),
) -> Result<Option<SamplePartition>> {
    let mut ids = BTreeSet::new();
    for g in ref_gt {
        if !ids.insert(g.instance_id) {
            return Err(Error::DuplicateInstanceId(g.instance_id));
        }
    }
    let Some(key_col) = ref_gt.iter().position(|g| g.instance_id == key_instance) else {
        return Ok(None);
    };
    let gt: Vec<(u32, BBox)> = ref_gt.iter().map(|g| (g.category_id, g.bbox)).collect();
    let cost = matching_cost(ref_predictions, &gt, weights, image_size)?;
    let assignment = min_cost_assignment(&cost);
    let Some(assigned) = assignment.iter().position(|c| *c == Some(key_col)) else {
        return Ok(None);
    };
    let assigned_cost = cost[(assigned, key_col)];

    let mut positive_indices = Vec::new();
    let mut negative_indices = Vec::new();
    for (i, col) in assignment.iter().enumerate() {
        let near_tie = col.is_none() && (cost[(i, key_col)] - assigned_cost).abs() <= NEAR_TIE_DELTA;
        if i == assigned || near_tie {
            positive_indices.push(i);
        } else {
            negative_indices.push(i);
        }
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| ref_predictions[i].embedding.clone()).collect();
    Ok(Some(SamplePartition {
        key_instance,
        positives: pick(&positive_indices),
        negatives: pick(&negative_indices),
        positive_indices,
        negative_indices,
    }))
}

fn check_dims(v: &Embedding, positives: &[Embedding], negatives: &[Embedding]) -> Result<()> {
    for k in positives.iter().chain(negatives) {
        if k.dim() != v.dim() {
            return Err(Error::DimensionMismatch(format!(
                "sample embedding dimension {} differs from anchor {}",
                k.dim(),
                v.dim()
            )));
        }
    }
    Ok(())
}

/// Pairwise exponents `v·k⁻ − v·k⁺`, indexed `[p * |neg| + q]`, and their
/// maximum clipped below at zero.
fn exponents(v: &Embedding, positives: &[Embedding], negatives: &[Embedding]) -> (Vec<f64>, f64) {
    let pos: Vec<f64> = positives.iter().map(|k| v.dot(k)).collect();
    let neg: Vec<f64> = negatives.iter().map(|k| v.dot(k)).collect();
    let a: Vec<f64> = pos.iter().flat_map(|p| neg.iter().map(move |n| n - p)).collect();
    let shift = a.iter().copied().fold(0.0, f64::max);
    (a, shift)
}

/// `log(1 + Σ_{k⁺} Σ_{k⁻} exp(v·k⁻ − v·k⁺))`, evaluated with a max shift so
/// exponents in the hundreds stay finite.
pub fn embed_loss(v: &Embedding, positives: &[Embedding], negatives: &[Embedding]) -> Result<f64> {
    check_dims(v, positives, negatives)?;
    let (a, shift) = exponents(v, positives, negatives);
    if a.is_empty() {
        return Ok(0.0);
    }
    let scaled: f64 = a.iter().map(|x| (x - shift).exp()).sum();
    if shift == 0.0 {
        Ok(scaled.ln_1p())
    } else {
        Ok(shift + ((-shift).exp() + scaled).ln())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedLossGrad {
    pub grad_v: Vec<f64>,
    pub grad_positives: Vec<Vec<f64>>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`embed_loss`] with respect to the anchor and every
/// sample. With `w(k⁺,k⁻) = exp(v·k⁻ − v·k⁺) / (1 + S)`:
/// `∂/∂v = Σ w (k⁻ − k⁺)`, `∂/∂k⁻ = (Σ_{k⁺} w) v`, `∂/∂k⁺ = −(Σ_{k⁻} w) v`.
pub fn embed_loss_grad(v: &Embedding, positives: &[Embedding], negatives: &[Embedding]) -> Result<EmbedLossGrad> {
    check_dims(v, positives, negatives)?;
    let dim = v.dim();
    let (a, shift) = exponents(v, positives, negatives);
    let mut grad = EmbedLossGrad {
        grad_v: vec![0.0; dim],
        grad_positives: vec![vec![0.0; dim]; positives.len()],
        grad_negatives: vec![vec![0.0; dim]; negatives.len()],
    };
    if a.is_empty() {
        return Ok(grad);
    }
    let denom = (-shift).exp() + a.iter().map(|x| (x - shift).exp()).sum::<f64>();
    let nn = negatives.len();
    let mut pos_weight = vec![0.0; positives.len()];
    let mut neg_weight = vec![0.0; nn];
    for (p, kp) in positives.iter().enumerate() {
        for (q, kn) in negatives.iter().enumerate() {
            let w = (a[p * nn + q] - shift).exp() / denom;
            pos_weight[p] += w;
            neg_weight[q] += w;
            for (g, (n, pp)) in grad.grad_v.iter_mut().zip(kn.0.iter().zip(&kp.0)) {
                *g += w * (n - pp);
            }
        }
    }
    for (g, w) in grad.grad_positives.iter_mut().zip(&pos_weight) {
        for (gc, vc) in g.iter_mut().zip(&v.0) {
            *gc = -w * vc;
        }
    }
    for (g, w) in grad.grad_negatives.iter_mut().zip(&neg_weight) {
        for (gc, vc) in g.iter_mut().zip(&v.0) {
            *gc = w * vc;
        }
    }
    Ok(grad)
}

/// `l_cls + λ1 l_box + λ1 l_mask + λ2 l_embed`.
pub fn total_loss(l_cls: f64, l_box: f64, l_mask: f64, l_embed: f64, w: &LossWeights) -> Result<f64> {
    let parts = [l_cls, l_box, l_mask, l_embed, w.lambda1, w.lambda2];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("loss components and weights must be finite"));
    }
    if parts.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput(
            "loss components and weights must be non-negative".into(),
        ));
    }
    Ok(l_cls + w.lambda1 * l_box + w.lambda1 * l_mask + w.lambda2 * l_embed)
}

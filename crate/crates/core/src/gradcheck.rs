//! Central finite-difference check of [`embed_loss_grad`] against
//! [`embed_loss`] on random instances.

use crate::contrastive::{embed_loss, embed_loss_grad};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::types::Embedding;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
pub const ABS_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub samples: usize,
    pub components: usize,
    /// Largest `|a - n| / max(|a|, |n|, ABS_TOLERANCE / REL_TOLERANCE)`. A
    /// component passes when this is at most `REL_TOLERANCE`, i.e. relative
    /// error ≤ 1e-4 or absolute error ≤ 1e-7 near zero.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// One random instance: anchor, positives, negatives.
pub type LossInstance = (Embedding, Vec<Embedding>, Vec<Embedding>);

/// Dimension in 1..=16, one to five positives and negatives, entries uniform
/// in [-2, 2].
pub fn random_instance(rng: &mut SplitMix64) -> LossInstance {
    let dim = rng.int_inclusive(1, 16) as usize;
    let vec = |rng: &mut SplitMix64| Embedding((0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect());
    let v = vec(rng);
    let np = rng.int_inclusive(1, 5) as usize;
    let nn = rng.int_inclusive(1, 5) as usize;
    let pos = (0..np).map(|_| vec(rng)).collect();
    let neg = (0..nn).map(|_| vec(rng)).collect();
    (v, pos, neg)
}

fn central_difference(f: impl Fn(f64) -> Result<f64>, x: f64) -> Result<f64> {
    Ok((f(x + FD_STEP)? - f(x - FD_STEP)?) / (2.0 * FD_STEP))
}

pub fn check_instance(inst: &LossInstance, report: &mut GradCheckReport) -> Result<()> {
    let (v, pos, neg) = inst;
    let grad = embed_loss_grad(v, pos, neg)?;
    let floor = ABS_TOLERANCE / REL_TOLERANCE;
    let mut record = |analytic: f64, numeric: f64| {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(floor);
        report.components += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        if rel > REL_TOLERANCE {
            report.failures += 1;
        }
    };

    for c in 0..v.dim() {
        let n = central_difference(
            |x| {
                let mut vv = v.clone();
                vv.0[c] = x;
                embed_loss(&vv, pos, neg)
            },
            v.0[c],
        )?;
        record(grad.grad_v[c], n);
    }
    for (p, k) in pos.iter().enumerate() {
        for c in 0..k.dim() {
            let n = central_difference(
                |x| {
                    let mut pp = pos.clone();
                    pp[p].0[c] = x;
                    embed_loss(v, &pp, neg)
                },
                k.0[c],
            )?;
            record(grad.grad_positives[p][c], n);
        }
    }
    for (q, k) in neg.iter().enumerate() {
        for c in 0..k.dim() {
            let n = central_difference(
                |x| {
                    let mut nn = neg.clone();
                    nn[q].0[c] = x;
                    embed_loss(v, pos, &nn)
                },
                k.0[c],
            )?;
            record(grad.grad_negatives[q][c], n);
        }
    }
    report.samples += 1;
    Ok(())
}

pub fn run_gradient_check(samples: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = SplitMix64::new(seed);
    let mut report = GradCheckReport {
        samples: 0,
        components: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failures: 0,
    };
    for _ in 0..samples {
        let inst = random_instance(&mut rng);
        check_instance(&inst, &mut report)?;
    }
    Ok(report)
}

//! Blob-loss baseline.
//!
//! Each label instance is scored against the whole prediction with only the
//! *other label instances* masked out. No components are extracted from the
//! prediction, so a predicted blob far from every label instance still
//! enters every term as a false positive.
//!
//! Only the prediction side is masked here (the label side reduces to the
//! single instance either way); reference implementations may differ in this
//! detail.

use crate::diffgraph::{DiffScalar, Tape, VolumeId};
use crate::error::Result;
use crate::labeling::ComponentLabeling;
use crate::volume::BinaryMask;

use super::base::{eval_base, SoftMap};
use super::LossConfig;

#[derive(Debug, Clone)]
pub struct BlobLoss {
    /// `alpha * global + beta * instance`.
    pub total: DiffScalar,
    pub global: DiffScalar,
    /// Mean of `terms`, or 0 without label instances.
    pub instance: DiffScalar,
    pub terms: Vec<DiffScalar>,
}

pub fn blob_loss_baseline(
    tape: &mut Tape,
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<BlobLoss> {
    cfg.validate()?;
    let shape = tape.values(p).shape().clone();
    label.shape().ensure_same(&shape)?;
    cc_label.shape().ensure_same(&shape)?;
    let total_voxels = shape.len();

    let all: Vec<usize> = (0..total_voxels).collect();
    let global = eval_base(
        tape,
        p,
        cfg.base_loss,
        cfg.sigma,
        &label.foreground(),
        &SoftMap::voxels(all),
        total_voxels,
    )?;

    let owner = cc_label.labels();
    let mut terms = Vec::with_capacity(cc_label.count());
    for inst in cc_label.instances() {
        let allowed: Vec<usize> = (0..total_voxels)
            .filter(|&v| owner[v] == 0 || owner[v] == inst.id)
            .collect();
        let map = SoftMap::voxels(allowed);
        terms.push(eval_base(
            tape,
            p,
            cfg.base_loss,
            cfg.sigma,
            &inst.voxels,
            &map,
            total_voxels,
        )?);
    }
    let instance = if terms.is_empty() {
        tape.constant(0.0)?
    } else {
        let s = tape.sum(&terms)?;
        tape.affine(s, 1.0 / terms.len() as f64, 0.0)?
    };
    let total = tape.linear(&[(global, cfg.alpha), (instance, cfg.beta)])?;
    Ok(BlobLoss {
        total,
        global,
        instance,
        terms,
    })
}

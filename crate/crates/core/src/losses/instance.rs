//! Instance-wise loss and its predicted-side dual.

use crate::diffgraph::{DiffScalar, Tape, VolumeId};
use crate::error::Result;
use crate::labeling::{intersecting_instances, ComponentLabeling, InstanceRecord};

use super::base::{eval_base, SoftMap};
use super::{InstanceVariant, LossConfig};

/// Per-instance terms of one subject and their mean.
#[derive(Debug, Clone)]
pub struct InstanceLoss {
    /// One term per focus instance, in ascending id order.
    pub terms: Vec<DiffScalar>,
    /// `sum(terms) / terms.len()`, or 0 with no focus instances.
    pub mean: DiffScalar,
}

fn union_of(labeling: &ComponentLabeling, ids: &[u32]) -> Vec<usize> {
    let mut out: Vec<usize> = ids
        .iter()
        .filter_map(|&id| labeling.instance(id))
        .flat_map(|inst| inst.voxels.iter().copied())
        .collect();
    out.sort_unstable();
    out
}

fn mean_of(tape: &mut Tape, terms: &[DiffScalar]) -> Result<DiffScalar> {
    if terms.is_empty() {
        return tape.constant(0.0);
    }
    let sum = tape.sum(terms)?;
    tape.affine(sum, 1.0 / terms.len() as f64, 0.0)
}

/// Selects, for one focus instance, the voxels of the other labeling that
/// participate in its term. With `NoTp`, voxels owned by a different focus
/// instance are removed.
fn partner_support(
    focus: &ComponentLabeling,
    partner: &ComponentLabeling,
    inst: &InstanceRecord,
    variant: InstanceVariant,
) -> Result<Vec<usize>> {
    let ids = intersecting_instances(focus, partner, inst.id)?;
    let mut support = union_of(partner, &ids);
    if variant == InstanceVariant::NoTp {
        let owner = focus.labels();
        support.retain(|&v| owner[v] == 0 || owner[v] == inst.id);
    }
    Ok(support)
}

/// Ground-truth-side instance loss for one subject.
///
/// For every label instance, the prediction is restricted to the union of
/// output instances that touch it (nothing, if none do) and compared with
/// that label instance alone.
pub fn instance_loss(
    tape: &mut Tape,
    p: VolumeId,
    cc_label: &ComponentLabeling,
    cc_output: &ComponentLabeling,
    cfg: &LossConfig,
) -> Result<InstanceLoss> {
    cc_label.shape().ensure_same(tape.values(p).shape())?;
    let total = cc_label.shape().len();
    let mut terms = Vec::with_capacity(cc_label.count());
    for inst in cc_label.instances() {
        let support = partner_support(cc_label, cc_output, inst, cfg.instance_variant)?;
        let map = SoftMap::voxels(support);
        terms.push(eval_base(
            tape,
            p,
            cfg.base_loss,
            cfg.sigma,
            &inst.voxels,
            &map,
            total,
        )?);
    }
    let mean = mean_of(tape, &terms)?;
    Ok(InstanceLoss { terms, mean })
}

/// Predicted-side instance loss: the roles of label and output are swapped.
///
/// For every output instance, the prediction is restricted to that instance
/// and compared with the union of label instances touching it. An output
/// instance touching no label instance is compared with an empty target.
pub fn predicted_instance_loss(
    tape: &mut Tape,
    p: VolumeId,
    cc_label: &ComponentLabeling,
    cc_output: &ComponentLabeling,
    cfg: &LossConfig,
) -> Result<InstanceLoss> {
    cc_label.shape().ensure_same(tape.values(p).shape())?;
    let total = cc_label.shape().len();
    let mut terms = Vec::with_capacity(cc_output.count());
    for inst in cc_output.instances() {
        let target = partner_support(cc_output, cc_label, inst, cfg.instance_variant)?;
        let map = SoftMap::voxels(inst.voxels.clone());
        terms.push(eval_base(
            tape,
            p,
            cfg.base_loss,
            cfg.sigma,
            &target,
            &map,
            total,
        )?);
    }
    let mean = mean_of(tape, &terms)?;
    Ok(InstanceLoss { terms, mean })
}

/// Collects instance terms over a mini-batch.
///
/// The batch loss divides the sum of all terms by `Z`, the total number of
/// ground-truth instances; subjects with no instances add nothing to either.
#[derive(Debug, Clone, Default)]
pub struct BatchLossAccumulator {
    subjects: Vec<Vec<DiffScalar>>,
}

impl BatchLossAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_subject(&mut self, loss: &InstanceLoss) {
        self.subjects.push(loss.terms.clone());
    }

    pub fn batch_size(&self) -> usize {
        self.subjects.len()
    }

    /// Total instance count `Z`.
    pub fn instance_count(&self) -> usize {
        self.subjects.iter().map(Vec::len).sum()
    }

    pub fn per_subject_means(&self, tape: &mut Tape) -> Result<Vec<DiffScalar>> {
        self.subjects.iter().map(|t| mean_of(tape, t)).collect()
    }

    /// `sum over subjects and instances / Z`, or 0 when `Z = 0`.
    pub fn normalized(&self, tape: &mut Tape) -> Result<DiffScalar> {
        let all: Vec<DiffScalar> = self.subjects.iter().flatten().copied().collect();
        mean_of(tape, &all)
    }
}

//! Weighted compound losses: ICI (global + instance + center) and DICI
//! (global + both instance sides + center).

use crate::diffgraph::{DiffScalar, Tape, VolumeId};
use crate::error::{Error, Result};
use crate::labeling::ComponentLabeling;
use crate::volume::{threshold, BinaryMask};

use super::base::{eval_base, SoftMap};
use super::center::center_loss;
use super::instance::{instance_loss, predicted_instance_loss, InstanceLoss};
use super::LossConfig;

#[derive(Debug, Clone)]
pub struct IciLoss {
    /// `a * global + b * instance + c * center`.
    pub total: DiffScalar,
    pub global: DiffScalar,
    pub instance: DiffScalar,
    pub center: DiffScalar,
    pub instance_terms: Vec<DiffScalar>,
    pub output: ComponentLabeling,
}

#[derive(Debug, Clone)]
pub struct DiciLoss {
    /// `a * global + b * groundtruth + c * predicted + d * center`.
    pub total: DiffScalar,
    pub global: DiffScalar,
    pub groundtruth: DiffScalar,
    pub predicted: DiffScalar,
    pub center: DiffScalar,
    pub output: ComponentLabeling,
}

struct Prepared {
    output: ComponentLabeling,
    global: DiffScalar,
}

fn prepare(
    tape: &mut Tape,
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    let pred = tape.values(p);
    label.shape().ensure_same(pred.shape())?;
    cc_label.shape().ensure_same(pred.shape())?;
    let output = cfg.labeler.label(&threshold(pred, cfg.tau)?);
    let total_voxels = label.len();
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
    Ok(Prepared { output, global })
}

/// ICI compound loss with the label components already extracted.
pub fn ici_loss_prelabeled(
    tape: &mut Tape,
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<IciLoss> {
    if !(cfg.a + cfg.b + cfg.c > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let Prepared { output, global } = prepare(tape, label, cc_label, p, cfg)?;
    let InstanceLoss { terms, mean } = instance_loss(tape, p, cc_label, &output, cfg)?;
    let center = center_loss(tape, p, cc_label, &output, cfg)?;
    let total = tape.linear(&[(global, cfg.a), (mean, cfg.b), (center, cfg.c)])?;
    Ok(IciLoss {
        total,
        global,
        instance: mean,
        center,
        instance_terms: terms,
        output,
    })
}

/// Thresholds `p` at `cfg.tau`, labels both sides, and evaluates
/// `a * global + b * instance + c * center`.
pub fn ici_loss(
    tape: &mut Tape,
    label: &BinaryMask,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<IciLoss> {
    let cc_label = cfg.labeler.label(label);
    ici_loss_prelabeled(tape, label, &cc_label, p, cfg)
}

pub fn dici_loss_prelabeled(
    tape: &mut Tape,
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<DiciLoss> {
    if !(cfg.a + cfg.b + cfg.c + cfg.d > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let Prepared { output, global } = prepare(tape, label, cc_label, p, cfg)?;
    let groundtruth = instance_loss(tape, p, cc_label, &output, cfg)?.mean;
    let predicted = predicted_instance_loss(tape, p, cc_label, &output, cfg)?.mean;
    let center = center_loss(tape, p, cc_label, &output, cfg)?;
    let total = tape.linear(&[
        (global, cfg.a),
        (groundtruth, cfg.b),
        (predicted, cfg.c),
        (center, cfg.d),
    ])?;
    Ok(DiciLoss {
        total,
        global,
        groundtruth,
        predicted,
        center,
        output,
    })
}

/// DICI compound loss; `c` weights the predicted-side instance term and `d`
/// the center term.
pub fn dici_loss(
    tape: &mut Tape,
    label: &BinaryMask,
    p: VolumeId,
    cfg: &LossConfig,
) -> Result<DiciLoss> {
    let cc_label = cfg.labeler.label(label);
    dici_loss_prelabeled(tape, label, &cc_label, p, cfg)
}

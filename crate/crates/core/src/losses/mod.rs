//! Segmentation losses built on the [`Tape`](crate::diffgraph::Tape).
//!
//! Every loss here is differentiable in the soft prediction only. The
//! discrete steps (thresholding, component labeling, instance selection and
//! cube placement) act as fixed selectors: they decide *which* prediction
//! voxels enter a term, and gradients flow through the values of those
//! voxels.

mod base;
mod blob;
mod center;
mod compound;
mod instance;

pub use base::{base_loss, bce_loss, dice_loss, focal_loss};
pub use blob::{blob_loss_baseline, BlobLoss};
pub use center::{center_loss, cube_indices};
pub use compound::{
    dici_loss, dici_loss_prelabeled, ici_loss, ici_loss_prelabeled, DiciLoss, IciLoss,
};
pub use instance::{instance_loss, predicted_instance_loss, BatchLossAccumulator, InstanceLoss};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Labeler;

/// Pixel-wise loss used for the global term and inside every instance term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaseLoss {
    Dice,
    Bce,
    Focal { gamma: f64 },
}

/// Whether instance terms keep prediction voxels lying on other label instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InstanceVariant {
    #[default]
    Standard,
    /// Drops true-positive overlap with other label instances from each term.
    NoTp,
}

/// Value written into an output instance's cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterFill {
    /// Mean soft probability over the instance's voxels (differentiable).
    #[default]
    InstanceMeanProb,
    /// Literal 1 (no gradient).
    ConstantOne,
}

/// Hyperparameters of the compound losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Global term weight.
    pub a: f64,
    /// Instance (ground-truth side) term weight.
    pub b: f64,
    /// Center term for ICI; predicted-side instance term for DICI.
    pub c: f64,
    /// Center term weight for DICI.
    pub d: f64,
    /// Blob-loss baseline weights.
    pub alpha: f64,
    pub beta: f64,
    /// Cube edge length, odd.
    pub delta: usize,
    pub tau: f64,
    /// Dice smoothing added to numerator and denominator.
    pub sigma: f64,
    pub base_loss: BaseLoss,
    pub instance_variant: InstanceVariant,
    pub center_fill: CenterFill,
    pub labeler: Labeler,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 0.0,
            alpha: 2.0,
            beta: 1.0,
            delta: 7,
            tau: 0.5,
            sigma: 1e-5,
            base_loss: BaseLoss::Dice,
            instance_variant: InstanceVariant::Standard,
            center_fill: CenterFill::InstanceMeanProb,
            labeler: Labeler::Exact,
        }
    }
}

impl LossConfig {
    pub fn with_weights(a: f64, b: f64, c: f64) -> Self {
        Self {
            a,
            b,
            c,
            ..Self::default()
        }
    }

    /// Checks every field except the compound-weight sum.
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma", self.sigma),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {w} must be finite and >= 0"
                )));
            }
        }
        if self.delta.is_multiple_of(2) {
            return Err(Error::EvenCubeSize(self.delta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidThreshold(self.tau));
        }
        if let BaseLoss::Focal { gamma } = self.base_loss {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "focal gamma {gamma} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

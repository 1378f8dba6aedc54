//! Pixel-wise losses between a binary target and a piecewise prediction map.

use crate::diffgraph::{DiffScalar, Pointwise, Tape, VolumeId};
use crate::error::Result;
use crate::volume::Volume;

use super::BaseLoss;

/// Where a segment of the prediction map takes its values from.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Fill {
    /// The tape volume itself at each index.
    Voxels,
    /// One shared differentiable value.
    Scalar(DiffScalar),
    Constant(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Segment {
    /// Sorted flat indices.
    pub indices: Vec<usize>,
    pub fill: Fill,
}

/// A prediction map made of disjoint segments; uncovered voxels are 0.
#[derive(Debug, Clone, Default)]
pub(crate) struct SoftMap {
    pub segments: Vec<Segment>,
}

impl SoftMap {
    pub fn voxels(indices: Vec<usize>) -> Self {
        Self {
            segments: vec![Segment {
                indices,
                fill: Fill::Voxels,
            }],
        }
    }
}

/// Marks which entries of sorted `a` also occur in sorted `b`.
pub(crate) fn membership(a: &[usize], b: &[usize]) -> Vec<bool> {
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        out.push(j < b.len() && b[j] == x);
    }
    out
}

/// `1 - (2 I + sigma) / (Y + P + sigma)`; zero when the denominator vanishes.
pub(crate) fn dice_from_sums(
    tape: &mut Tape,
    intersection: DiffScalar,
    predicted: DiffScalar,
    target_total: f64,
    sigma: f64,
) -> Result<DiffScalar> {
    let den = tape.affine(predicted, 1.0, target_total + sigma)?;
    if den.value() == 0.0 {
        return tape.constant(0.0);
    }
    let num = tape.affine(intersection, 2.0, sigma)?;
    let ratio = tape.div(num, den)?;
    tape.affine(ratio, -1.0, 1.0)
}

/// Evaluates `base` between the binary `target` (sorted indices) and `pred`.
pub(crate) fn eval_base(
    tape: &mut Tape,
    vol: VolumeId,
    base: BaseLoss,
    sigma: f64,
    target: &[usize],
    pred: &SoftMap,
    total_voxels: usize,
) -> Result<DiffScalar> {
    match base {
        BaseLoss::Dice => eval_dice(tape, vol, sigma, target, pred),
        BaseLoss::Bce => eval_pointwise(tape, vol, Pointwise::Bce, target, pred, total_voxels),
        BaseLoss::Focal { gamma } => eval_pointwise(
            tape,
            vol,
            Pointwise::Focal { gamma },
            target,
            pred,
            total_voxels,
        ),
    }
}

fn eval_dice(
    tape: &mut Tape,
    vol: VolumeId,
    sigma: f64,
    target: &[usize],
    pred: &SoftMap,
) -> Result<DiffScalar> {
    let mut inter = Vec::with_capacity(pred.segments.len());
    let mut total = Vec::with_capacity(pred.segments.len());
    for seg in &pred.segments {
        let hits = membership(&seg.indices, target);
        let hit_count = hits.iter().filter(|&&h| h).count() as f64;
        match seg.fill {
            Fill::Voxels => {
                let hit_idx: Vec<usize> = seg
                    .indices
                    .iter()
                    .zip(&hits)
                    .filter_map(|(&i, &h)| h.then_some(i))
                    .collect();
                inter.push((tape.masked_sum(vol, &hit_idx)?, 1.0));
                total.push((tape.masked_sum(vol, &seg.indices)?, 1.0));
            }
            Fill::Scalar(s) => {
                inter.push((s, hit_count));
                total.push((s, seg.indices.len() as f64));
            }
            Fill::Constant(c) => {
                let one = tape.constant(c)?;
                inter.push((one, hit_count));
                total.push((one, seg.indices.len() as f64));
            }
        }
    }
    let inter = tape.linear(&inter)?;
    let total = tape.linear(&total)?;
    dice_from_sums(tape, inter, total, target.len() as f64, sigma)
}

fn eval_pointwise(
    tape: &mut Tape,
    vol: VolumeId,
    kind: Pointwise,
    target: &[usize],
    pred: &SoftMap,
    total_voxels: usize,
) -> Result<DiffScalar> {
    let mut terms = Vec::new();
    let mut covered = 0usize;
    let mut covered_target = 0usize;
    for seg in &pred.segments {
        let hits = membership(&seg.indices, target);
        let hit_count = hits.iter().filter(|&&h| h).count();
        let miss_count = seg.indices.len() - hit_count;
        covered += seg.indices.len();
        covered_target += hit_count;
        match seg.fill {
            Fill::Voxels => {
                let s =
                    tape.pointwise_sum(vol, &seg.indices, |k| f64::from(u8::from(hits[k])), kind)?;
                terms.push((s, 1.0));
            }
            Fill::Scalar(s) => {
                terms.push((tape.pointwise(s, 1.0, kind)?, hit_count as f64));
                terms.push((tape.pointwise(s, 0.0, kind)?, miss_count as f64));
            }
            Fill::Constant(c) => {
                terms.push((tape.constant(kind.eval(1.0, c).0)?, hit_count as f64));
                terms.push((tape.constant(kind.eval(0.0, c).0)?, miss_count as f64));
            }
        }
    }
    let uncovered_target = target.len() - covered_target;
    let uncovered_rest = total_voxels - covered - uncovered_target;
    terms.push((
        tape.constant(kind.eval(1.0, 0.0).0)?,
        uncovered_target as f64,
    ));
    terms.push((tape.constant(kind.eval(0.0, 0.0).0)?, uncovered_rest as f64));
    let sum = tape.linear(&terms)?;
    tape.affine(sum, 1.0 / total_voxels as f64, 0.0)
}

/// Soft Dice loss `1 - (2 sum(y p) + sigma) / (sum y + sum p + sigma)`.
///
/// `target` may be soft; it is treated as constant.
pub fn dice_loss(tape: &mut Tape, target: &Volume, p: VolumeId, sigma: f64) -> Result<DiffScalar> {
    target.shape().ensure_same(tape.values(p).shape())?;
    let (idx, weights): (Vec<usize>, Vec<f64>) = target
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y != 0.0)
        .map(|(i, &y)| (i, y))
        .unzip();
    let inter = tape.weighted_sum(p, &idx, &weights)?;
    let all: Vec<usize> = (0..target.len()).collect();
    let total = tape.masked_sum(p, &all)?;
    let y_total = weights.iter().sum();
    dice_from_sums(tape, inter, total, y_total, sigma)
}

fn pointwise_mean(
    tape: &mut Tape,
    target: &Volume,
    p: VolumeId,
    kind: Pointwise,
) -> Result<DiffScalar> {
    target.shape().ensure_same(tape.values(p).shape())?;
    let all: Vec<usize> = (0..target.len()).collect();
    let y = target.data();
    let sum = tape.pointwise_sum(p, &all, |k| y[k], kind)?;
    tape.affine(sum, 1.0 / target.len() as f64, 0.0)
}

/// Voxel-mean binary cross-entropy.
pub fn bce_loss(tape: &mut Tape, target: &Volume, p: VolumeId) -> Result<DiffScalar> {
    pointwise_mean(tape, target, p, Pointwise::Bce)
}

/// Voxel-mean focal loss `-(1 - p_t)^gamma ln p_t`.
pub fn focal_loss(tape: &mut Tape, target: &Volume, p: VolumeId, gamma: f64) -> Result<DiffScalar> {
    pointwise_mean(tape, target, p, Pointwise::Focal { gamma })
}

/// Dispatches to the selected pixel-wise loss over the whole volume.
pub fn base_loss(
    tape: &mut Tape,
    base: BaseLoss,
    target: &Volume,
    p: VolumeId,
    sigma: f64,
) -> Result<DiffScalar> {
    match base {
        BaseLoss::Dice => dice_loss(tape, target, p, sigma),
        BaseLoss::Bce => bce_loss(tape, target, p),
        BaseLoss::Focal { gamma } => focal_loss(tape, target, p, gamma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::volume::Shape;

    fn line(data: &[f64]) -> Volume {
        Volume::new(Shape::new(&[1, data.len()]).unwrap(), data.to_vec()).unwrap()
    }

    fn dice(y: &[f64], p: &[f64], sigma: f64) -> f64 {
        let mut t = Tape::new();
        let id = t.input(line(p));
        dice_loss(&mut t, &line(y), id, sigma).unwrap().value()
    }

    #[test]
    fn dice_closed_forms() {
        let y = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(dice(&y, &y, 0.0), 0.0);
        assert_eq!(dice(&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], 0.0), 1.0);
        let y4 = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let p4 = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(dice(&y4, &p4, 0.0), 0.5);
    }

    #[test]
    fn dice_both_empty_is_zero() {
        assert_eq!(dice(&[0.0; 3], &[0.0; 3], 0.0), 0.0);
        assert_eq!(dice(&[0.0; 3], &[0.0; 3], 1e-5), 0.0);
    }

    #[test]
    fn dice_shape_mismatch() {
        let mut t = Tape::new();
        let id = t.input(line(&[0.5; 3]));
        assert!(matches!(
            dice_loss(&mut t, &line(&[1.0; 4]), id, 0.0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bce_closed_forms() {
        let mut t = Tape::new();
        let id = t.input(line(&[0.5]));
        let v = bce_loss(&mut t, &line(&[1.0]), id).unwrap().value();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);

        let y = [1.0, 0.0, 1.0];
        let mut t = Tape::new();
        let id = t.input(line(&y));
        let v = bce_loss(&mut t, &line(&y), id).unwrap().value();
        assert!(v > 0.0 && v < 1e-11, "{v}");
    }

    #[test]
    fn soft_map_dice_matches_dense_dice() {
        // prediction restricted to indices {1, 2, 4}; others read as 0
        let p = [0.9, 0.8, 0.3, 0.6, 0.7];
        let target = [1usize, 3];
        let mut t = Tape::new();
        let id = t.input(line(&p));
        let map = SoftMap::voxels(vec![1, 2, 4]);
        let a = eval_base(&mut t, id, BaseLoss::Dice, 0.0, &target, &map, 5).unwrap();
        let dense = dice(&[0.0, 1.0, 0.0, 1.0, 0.0], &[0.0, 0.8, 0.3, 0.0, 0.7], 0.0);
        assert!((a.value() - dense).abs() < 1e-15);
    }

    #[test]
    fn soft_map_bce_matches_dense_bce() {
        let p = [0.9, 0.8, 0.3, 0.6, 0.7];
        let mut t = Tape::new();
        let id = t.input(line(&p));
        let s = t.masked_sum(id, &[0]).unwrap();
        let map = SoftMap {
            segments: vec![
                Segment {
                    indices: vec![1, 2],
                    fill: Fill::Voxels,
                },
                Segment {
                    indices: vec![3, 4],
                    fill: Fill::Scalar(s),
                },
            ],
        };
        let target = [2usize, 3];
        let got = eval_base(&mut t, id, BaseLoss::Bce, 0.0, &target, &map, 5)
            .unwrap()
            .value();
        let dense_p = [0.0, 0.8, 0.3, 0.9, 0.9];
        let dense_y = [0.0, 0.0, 1.0, 1.0, 0.0];
        let mut t2 = Tape::new();
        let id2 = t2.input(line(&dense_p));
        let want = bce_loss(&mut t2, &line(&dense_y), id2).unwrap().value();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

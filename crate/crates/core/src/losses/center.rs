//! Center-of-instance loss: every instance becomes a fixed-size cube.

use crate::diffgraph::{DiffScalar, Tape, VolumeId};
use crate::error::{Error, Result};
use crate::labeling::ComponentLabeling;
use crate::volume::Shape;

use super::base::{eval_base, Fill, Segment, SoftMap};
use super::{CenterFill, LossConfig};

/// Sorted flat indices of the `delta`-wide cube centred at `center`,
/// clipped to the volume.
pub fn cube_indices(shape: &Shape, center: &[usize], delta: usize) -> Result<Vec<usize>> {
    if delta.is_multiple_of(2) {
        return Err(Error::EvenCubeSize(delta));
    }
    let half = delta / 2;
    let dims = shape.dims3();
    let mut c3 = [0usize; 3];
    let pad = 3 - center.len();
    c3[pad..].copy_from_slice(center);
    let range = |axis: usize| {
        let lo = if axis < pad {
            0
        } else {
            c3[axis].saturating_sub(half)
        };
        let hi = if axis < pad {
            0
        } else {
            (c3[axis] + half).min(dims[axis] - 1)
        };
        lo..=hi
    };
    let mut out = Vec::new();
    for z in range(0) {
        for y in range(1) {
            for x in range(2) {
                out.push(shape.index3([z, y, x]));
            }
        }
    }
    Ok(out)
}

/// Dice (or other base loss) between the cube maps of label and output.
///
/// Label cubes hold 1. Output cubes hold the fill selected by
/// `cfg.center_fill`; where cubes overlap the larger fill wins, and equal
/// fills keep the lower instance id.
pub fn center_loss(
    tape: &mut Tape,
    p: VolumeId,
    cc_label: &ComponentLabeling,
    cc_output: &ComponentLabeling,
    cfg: &LossConfig,
) -> Result<DiffScalar> {
    let shape = tape.values(p).shape().clone();
    cc_label.shape().ensure_same(&shape)?;
    cc_output.shape().ensure_same(&shape)?;
    if cfg.delta.is_multiple_of(2) {
        return Err(Error::EvenCubeSize(cfg.delta));
    }

    let mut in_label = vec![false; shape.len()];
    for inst in cc_label.instances() {
        for v in cube_indices(&shape, &inst.center_of_mass, cfg.delta)? {
            in_label[v] = true;
        }
    }
    let target: Vec<usize> = (0..shape.len()).filter(|&v| in_label[v]).collect();

    let mut fills: Vec<Fill> = Vec::with_capacity(cc_output.count());
    let mut fill_values = Vec::with_capacity(cc_output.count());
    for inst in cc_output.instances() {
        let fill = match cfg.center_fill {
            CenterFill::ConstantOne => Fill::Constant(1.0),
            CenterFill::InstanceMeanProb => {
                let sum = tape.masked_sum(p, &inst.voxels)?;
                Fill::Scalar(tape.affine(sum, 1.0 / inst.size() as f64, 0.0)?)
            }
        };
        fill_values.push(match fill {
            Fill::Constant(c) => c,
            Fill::Scalar(s) => s.value(),
            Fill::Voxels => unreachable!(),
        });
        fills.push(fill);
    }

    let mut owner = vec![0u32; shape.len()];
    for inst in cc_output.instances() {
        let mine = fill_values[inst.id as usize - 1];
        for v in cube_indices(&shape, &inst.center_of_mass, cfg.delta)? {
            let cur = owner[v];
            if cur == 0 || mine > fill_values[cur as usize - 1] {
                owner[v] = inst.id;
            }
        }
    }
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); cc_output.count()];
    for (v, &o) in owner.iter().enumerate() {
        if o != 0 {
            owned[o as usize - 1].push(v);
        }
    }
    let segments = owned
        .into_iter()
        .zip(fills)
        .filter(|(idx, _)| !idx.is_empty())
        .map(|(indices, fill)| Segment { indices, fill })
        .collect();
    let map = SoftMap { segments };
    eval_base(
        tape,
        p,
        cfg.base_loss,
        cfg.sigma,
        &target,
        &map,
        shape.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::label_components_exact;
    use crate::volume::BinaryMask;

    fn labeling(shape: &Shape, on: &[Vec<usize>]) -> ComponentLabeling {
        let idx: Vec<usize> = on.iter().map(|c| shape.index(c).unwrap()).collect();
        label_components_exact(&BinaryMask::from_indices(shape.clone(), &idx).unwrap())
    }

    #[test]
    fn cube_clips_at_borders() {
        let shape = Shape::new(&[10, 10, 10]).unwrap();
        assert_eq!(cube_indices(&shape, &[5, 5, 5], 7).unwrap().len(), 343);
        assert_eq!(cube_indices(&shape, &[0, 0, 0], 7).unwrap().len(), 64);
        assert_eq!(cube_indices(&shape, &[9, 5, 5], 3).unwrap().len(), 18);
        let flat = Shape::new(&[5, 5]).unwrap();
        assert_eq!(
            cube_indices(&flat, &[2, 2], 3).unwrap(),
            vec![6, 7, 8, 11, 12, 13, 16, 17, 18]
        );
        assert_eq!(
            cube_indices(&shape, &[5, 5, 5], 4),
            Err(Error::EvenCubeSize(4))
        );
    }

    fn cfg_const() -> LossConfig {
        LossConfig {
            sigma: 0.0,
            center_fill: CenterFill::ConstantOne,
            ..LossConfig::default()
        }
    }

    fn eval(label: &ComponentLabeling, out: &ComponentLabeling, cfg: &LossConfig) -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.input(crate::volume::Volume::filled(label.shape().clone(), 0.7));
        Ok(center_loss(&mut tape, p, label, out, cfg)?.value())
    }

    #[test]
    fn identical_instances_zero() {
        let shape = Shape::new(&[12, 12, 12]).unwrap();
        let l = labeling(&shape, &[vec![2, 2, 2], vec![8, 9, 9]]);
        assert_eq!(eval(&l, &l, &cfg_const()).unwrap(), 0.0);
    }

    #[test]
    fn missing_output_is_one() {
        let shape = Shape::new(&[12, 12, 12]).unwrap();
        let l = labeling(&shape, &[vec![5, 5, 5]]);
        let none = labeling(&shape, &[]);
        assert_eq!(eval(&l, &none, &cfg_const()).unwrap(), 1.0);
    }

    #[test]
    fn offset_by_three_is_three_sevenths() {
        let shape = Shape::new(&[20, 20, 20]).unwrap();
        let l = labeling(&shape, &[vec![10, 10, 8]]);
        let o = labeling(&shape, &[vec![10, 10, 11]]);
        let v = eval(&l, &o, &cfg_const()).unwrap();
        assert!((v - 3.0 / 7.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn even_delta_rejected() {
        let shape = Shape::new(&[8, 8]).unwrap();
        let l = labeling(&shape, &[vec![4, 4]]);
        let cfg = LossConfig {
            delta: 6,
            ..cfg_const()
        };
        assert_eq!(eval(&l, &l, &cfg), Err(Error::EvenCubeSize(6)));
    }
}

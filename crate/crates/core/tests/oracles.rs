//! Library results checked against independent brute-force recomputations.

mod common;

use std::collections::BTreeSet;

use common::{components, flood_fill, random_mask, random_probs, shape};
use ici_core::diffgraph::{finite_diff_check, Tape};
use ici_core::labeling::{
    center_of_mass, intersecting_instances, label_components_exact, label_components_maxpool,
    CcaConfig,
};
use ici_core::losses::{
    blob_loss_baseline, center_loss, cube_indices, dice_loss, dici_loss, ici_loss, CenterFill,
    LossConfig,
};
use ici_core::metrics::{evaluate_pair, rank_table, Direction, RankColumn, TieRule};
use ici_core::synth::{corrupt, generate, BlobShape, BlobSpec, SynthRng};
use ici_core::volume::{threshold, BinaryMask, Volume};

#[test]
fn threshold_matches_scalar_loop() {
    let mut rng = SynthRng::new(11);
    let s = shape(&[8, 8, 8]);
    let v = Volume::from_fn(s.clone(), |_| rng.uniform_f64());
    let m = threshold(&v, 0.5).unwrap();
    for i in 0..v.len() {
        assert_eq!(m.is_set(i), v.data()[i] > 0.5);
    }
}

#[test]
fn exact_labeling_matches_flood_fill() {
    let mut rng = SynthRng::new(1);
    let s = shape(&[32, 32, 32]);
    for _ in 0..100 {
        let mask = random_mask(&s, 0.2, &mut rng);
        assert_eq!(
            label_components_exact(&mask).labels(),
            &flood_fill(&mask)[..]
        );
    }
}

#[test]
fn planar_labeling_matches_flood_fill() {
    let mut rng = SynthRng::new(2);
    let s = shape(&[40, 40]);
    for p in [0.2, 0.4, 0.6] {
        let mask = random_mask(&s, p, &mut rng);
        assert_eq!(
            label_components_exact(&mask).labels(),
            &flood_fill(&mask)[..]
        );
    }
}

#[test]
fn converged_maxpool_matches_exact() {
    let mut rng = SynthRng::new(3);
    let s = shape(&[12, 14, 16]);
    let cfg = CcaConfig::converging(&s);
    for k in 0..100 {
        let p = [0.1, 0.3, 0.5][k % 3];
        let mask = random_mask(&s, p, &mut rng);
        let pooled = label_components_maxpool(&mask, &cfg);
        assert!(pooled.converged());
        assert_eq!(pooled, label_components_exact(&mask));
    }
}

#[test]
fn center_of_mass_matches_mean_and_round() {
    let mut rng = SynthRng::new(4);
    let s = shape(&[10, 11, 12]);
    let mask = random_mask(&s, 0.3, &mut rng);
    let cc = label_components_exact(&mask);
    for inst in cc.instances() {
        let coords: Vec<Vec<usize>> = inst.voxels.iter().map(|&v| s.coords(v)).collect();
        let expect: Vec<usize> = (0..3)
            .map(|axis| {
                let mean = coords.iter().map(|c| c[axis] as f64).sum::<f64>() / coords.len() as f64;
                (mean + 0.5).floor() as usize
            })
            .collect();
        assert_eq!(center_of_mass(inst, &s), expect);
        assert_eq!(inst.center_of_mass, expect);
    }
}

#[test]
fn intersections_match_set_oracle() {
    let mut rng = SynthRng::new(5);
    let s = shape(&[9, 9, 9]);
    for _ in 0..10 {
        let a = label_components_exact(&random_mask(&s, 0.15, &mut rng));
        let b = label_components_exact(&random_mask(&s, 0.15, &mut rng));
        for inst in a.instances() {
            let mine: BTreeSet<usize> = inst.voxels.iter().copied().collect();
            let expect: Vec<u32> = b
                .instances()
                .iter()
                .filter(|o| o.voxels.iter().any(|v| mine.contains(v)))
                .map(|o| o.id)
                .collect();
            assert_eq!(intersecting_instances(&a, &b, inst.id).unwrap(), expect);
        }
    }
}

#[test]
fn masked_sum_matches_loop_and_differences() {
    let mut rng = SynthRng::new(6);
    let s = shape(&[6, 6, 6]);
    let v = Volume::from_fn(s.clone(), |_| rng.normal(0.0, 1.0));
    let idx: Vec<usize> = (0..v.len()).filter(|_| rng.uniform_f64() < 0.4).collect();
    let mut tape = Tape::new();
    let id = tape.input(v.clone());
    let sum = tape.masked_sum(id, &idx).unwrap();
    let expect: f64 = idx.iter().map(|&i| v.data()[i]).sum();
    assert!((sum.value() - expect).abs() < 1e-12);
    let check = finite_diff_check(|t, x| t.masked_sum(x, &idx), &v, 1e-5).unwrap();
    assert!(check.max_rel_error < 1e-6, "{}", check.max_rel_error);
}

#[test]
fn dice_loss_gradient_matches_differences() {
    let mut rng = SynthRng::new(7);
    let s = shape(&[8, 8, 8]);
    let y = random_mask(&s, 0.3, &mut rng).to_volume();
    let p = random_probs(&s, 0.0, &mut rng);
    let check = finite_diff_check(|t, x| dice_loss(t, &y, x, 1e-5), &p, 1e-5).unwrap();
    assert!(check.max_rel_error < 1e-4, "{}", check.max_rel_error);
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = SynthRng::new(8);
    let s = shape(&[12, 12, 12]);
    for _ in 0..20 {
        let label = random_mask(&s, 0.08, &mut rng);
        let pred = random_mask(&s, 0.08, &mut rng);
        let r = evaluate_pair(&label, &pred).unwrap();

        let l: BTreeSet<usize> = label.foreground().into_iter().collect();
        let p: BTreeSet<usize> = pred.foreground().into_iter().collect();
        let inter = l.intersection(&p).count();
        let dsc = if l.len() + p.len() == 0 {
            1.0
        } else {
            2.0 * inter as f64 / (l.len() + p.len()) as f64
        };
        let lc = components(&flood_fill(&label));
        let pc = components(&flood_fill(&pred));
        let n = lc.len() - 1;
        let m = pc.len() - 1;
        let missed = lc[1..]
            .iter()
            .filter(|c| c.iter().all(|v| !p.contains(v)))
            .count();
        let false_inst = pc[1..]
            .iter()
            .filter(|c| c.iter().all(|v| !l.contains(v)))
            .count();
        let tp = n - missed;
        let f1 = 2.0 * tp as f64 / (2 * tp + false_inst + missed) as f64;

        assert!((r.dsc - dsc).abs() < 1e-15);
        assert_eq!((r.label_instances, r.predicted_instances), (n, m));
        assert_eq!(
            (r.missed_instances, r.false_instances),
            (missed, false_inst)
        );
        assert!((r.lesionwise_f1 - f1).abs() < 1e-15);
        assert_eq!(r.simple_lesion_count, (n as f64 - m as f64).abs());
        assert_eq!(r.volume_difference, (p.len() as f64 - l.len() as f64).abs());
    }
}

#[test]
fn table_two_dsc_column_ranks() {
    let dsc = [0.3954, 0.4147, 0.3904, 0.4160, 0.4240, 0.4455];
    let t = rank_table(
        (0..6).map(|i| i.to_string()).collect(),
        vec![RankColumn {
            name: "DSC".into(),
            direction: Direction::HigherIsBetter,
        }],
        dsc.iter().map(|&d| vec![d]).collect(),
        TieRule::Competition,
    )
    .unwrap();
    let ranks: Vec<usize> = t.ranks.iter().map(|r| r[0]).collect();
    assert_eq!(ranks, vec![5, 4, 6, 3, 2, 1]);
}

fn chebyshev_cube(
    s: &ici_core::volume::Shape,
    center: [usize; 3],
    delta: usize,
) -> BTreeSet<usize> {
    let half = (delta / 2) as isize;
    (0..s.len())
        .filter(|&v| {
            let c = s.coords(v);
            (0..3).all(|a| (c[a] as isize - center[a] as isize).abs() <= half)
        })
        .collect()
}

#[test]
fn cube_indices_match_brute_force() {
    let s = shape(&[9, 10, 11]);
    for center in [[0, 0, 0], [4, 5, 5], [8, 9, 10], [1, 8, 3]] {
        for delta in [1, 3, 5, 7, 31] {
            let got: BTreeSet<usize> = cube_indices(&s, &center, delta)
                .unwrap()
                .into_iter()
                .collect();
            assert_eq!(got, chebyshev_cube(&s, center, delta));
        }
    }
}

#[test]
fn offset_center_loss_matches_voxel_overlap() {
    let s = shape(&[21, 21, 21]);
    let a = [10, 10, 10];
    let b = [10, 10, 13];
    let label = BinaryMask::from_indices(s.clone(), &[s.index(&a).unwrap()]).unwrap();
    let out = BinaryMask::from_indices(s.clone(), &[s.index(&b).unwrap()]).unwrap();
    let p = out.to_volume().map(|x| if x > 0.5 { 0.9 } else { 0.1 });

    let ca = chebyshev_cube(&s, a, 7);
    let cb = chebyshev_cube(&s, b, 7);
    let overlap = ca.intersection(&cb).count();
    let oracle = 1.0 - 2.0 * overlap as f64 / (ca.len() + cb.len()) as f64;

    let cfg = LossConfig {
        sigma: 0.0,
        center_fill: CenterFill::ConstantOne,
        ..LossConfig::default()
    };
    let mut tape = Tape::new();
    let pid = tape.input(p);
    let got = center_loss(
        &mut tape,
        pid,
        &label_components_exact(&label),
        &label_components_exact(&out),
        &cfg,
    )
    .unwrap();
    assert!((got.value() - oracle).abs() < 1e-12);
    assert!((got.value() - 3.0 / 7.0).abs() < 1e-12);
}

#[test]
fn unit_sphere_matches_enumeration() {
    let s = shape(&[5, 5, 5]);
    let (mask, _) = generate(&s, &BlobSpec::new((1, 1), (1, 1), 17)).unwrap();
    let fg = mask.foreground();
    let center = s.coords(fg[fg.len() / 2]);
    let expect: Vec<usize> = (0..s.len())
        .filter(|&v| {
            let c = s.coords(v);
            let d2: isize = (0..3)
                .map(|a| (c[a] as isize - center[a] as isize).pow(2))
                .sum();
            d2 <= 1
        })
        .collect();
    assert_eq!(fg, expect);
}

#[test]
fn generated_blobs_respect_separation() {
    for (seed, blob_shape, sep) in [
        (1, BlobShape::Sphere, 0.0),
        (2, BlobShape::Cube, 3.0),
        (3, BlobShape::Sphere, 4.5),
    ] {
        let s = shape(&[20, 20, 20]);
        let spec = BlobSpec {
            count: (3, 4),
            radius: (1, 2),
            shape: blob_shape,
            min_separation: sep,
            seed,
        };
        let (mask, cc) = generate(&s, &spec).unwrap();
        assert_eq!(cc.labels(), &flood_fill(&mask)[..]);
        let mut rng = SynthRng::new(seed);
        let drawn = rng.uniform_int(3, 4);
        assert_eq!(cc.count(), drawn);
        let limit = sep.max(3f64.sqrt());
        for (i, a) in cc.instances().iter().enumerate() {
            for b in &cc.instances()[i + 1..] {
                for &u in &a.voxels {
                    for &v in &b.voxels {
                        let (cu, cv) = (s.coords(u), s.coords(v));
                        let d2: f64 = (0..3).map(|k| (cu[k] as f64 - cv[k] as f64).powi(2)).sum();
                        assert!(d2.sqrt() > limit);
                    }
                }
            }
        }
    }
}

#[test]
fn corrupted_prediction_counts() {
    let s = shape(&[24, 24, 24]);
    let (label, cc) = generate(&s, &BlobSpec::new((4, 4), (1, 3), 21)).unwrap();
    for (k, j) in [(0, 1), (1, 0), (2, 2), (4, 3)] {
        let pred = corrupt(&label, k, j, 99).unwrap();
        let r = evaluate_pair(&label, &pred).unwrap();
        assert_eq!((r.missed_instances, r.false_instances), (k, j));
        assert_eq!(r.predicted_instances, cc.count() - k + j);
    }
}

fn loss_fixture(seed: u64) -> (BinaryMask, Volume) {
    let mut rng = SynthRng::new(seed);
    let s = shape(&[8, 8, 8]);
    (
        random_mask(&s, 0.1, &mut rng),
        random_probs(&s, 0.05, &mut rng),
    )
}

#[test]
fn global_only_compound_is_dice() {
    let (label, p) = loss_fixture(31);
    let cfg = LossConfig::with_weights(1.0, 0.0, 0.0);
    let mut tape = Tape::new();
    let id = tape.input(p);
    let ici = ici_loss(&mut tape, &label, id, &cfg).unwrap();
    let dice = dice_loss(&mut tape, &label.to_volume(), id, cfg.sigma).unwrap();
    assert_eq!(ici.total.value(), dice.value());
}

#[test]
fn single_instance_blob_term_is_dice() {
    let s = shape(&[8, 8, 8]);
    let (label, cc) = generate(&s, &BlobSpec::new((1, 1), (1, 2), 4)).unwrap();
    let mut rng = SynthRng::new(4);
    let p = random_probs(&s, 0.0, &mut rng);
    let cfg = LossConfig::default();
    let mut tape = Tape::new();
    let id = tape.input(p);
    let blob = blob_loss_baseline(&mut tape, &label, &cc, id, &cfg).unwrap();
    let dice = dice_loss(&mut tape, &label.to_volume(), id, cfg.sigma).unwrap();
    assert!((blob.instance.value() - dice.value()).abs() < 1e-15);
}

#[test]
fn perfect_prediction_has_zero_loss() {
    let s = shape(&[16, 16, 16]);
    let (label, _) = generate(&s, &BlobSpec::new((3, 3), (1, 3), 8)).unwrap();
    let cfg = LossConfig {
        sigma: 0.0,
        center_fill: CenterFill::ConstantOne,
        ..LossConfig::default()
    };
    let mut tape = Tape::new();
    let id = tape.input(label.to_volume());
    let l = ici_loss(&mut tape, &label, id, &cfg).unwrap();
    assert_eq!(
        (l.global.value(), l.instance.value(), l.center.value()),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(l.total.value(), 0.0);
}

#[test]
fn dici_without_dual_and_center_is_ici() {
    let (label, p) = loss_fixture(32);
    let dici_cfg = LossConfig {
        a: 0.7,
        b: 1.3,
        c: 0.0,
        d: 0.0,
        ..LossConfig::default()
    };
    let ici_cfg = LossConfig::with_weights(0.7, 1.3, 0.0);
    let mut tape = Tape::new();
    let id = tape.input(p);
    let dici = dici_loss(&mut tape, &label, id, &dici_cfg).unwrap();
    let ici = ici_loss(&mut tape, &label, id, &ici_cfg).unwrap();
    assert_eq!(dici.total.value(), ici.total.value());
}

#[test]
fn dici_sides_agree_on_symmetric_input() {
    let s = shape(&[16, 16, 16]);
    let (label, _) = generate(&s, &BlobSpec::new((3, 3), (1, 3), 9)).unwrap();
    let p = label.to_volume().map(|x| if x > 0.5 { 0.8 } else { 0.2 });
    let mut tape = Tape::new();
    let id = tape.input(p);
    let l = dici_loss(&mut tape, &label, id, &LossConfig::default()).unwrap();
    assert_eq!(l.groundtruth.value(), l.predicted.value());
}

//! Plain gradient descent on a per-voxel logit volume.
//!
//! Each step builds a fresh tape: logits enter as an input volume, a sigmoid
//! view gives the probabilities, the selected objective is evaluated and its
//! gradient with respect to the logits is applied with a fixed learning
//! rate. Step 0 of the trace is the initialization; step `k` is recorded
//! after `k` updates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffgraph::{DiffScalar, Tape, VolumeId};
use crate::error::{Error, Result};
use crate::labeling::{label_components_exact, ComponentLabeling, Labeler};
use crate::losses::{blob_loss_baseline, dici_loss_prelabeled, ici_loss_prelabeled, LossConfig};
use crate::metrics::{evaluate_labeled, rank_table, Direction, RankColumn, RankTable, TieRule};
use crate::synth::SynthRng;
use crate::volume::{threshold, BinaryMask, Volume};

/// Standard deviation of the initial logits.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    /// `a * global + b * instance + c * center`.
    #[default]
    Ici,
    /// `a * global + b * gt-side + c * predicted-side + d * center`.
    Dici,
    /// `alpha * global + beta * mean blob term`.
    Blob,
}

/// One trace row. For DICI `instance` holds the ground-truth-side term; for
/// the blob baseline `center` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub global: f64,
    pub instance: f64,
    pub center: f64,
    pub total: f64,
    pub dsc: f64,
    pub missed: usize,
    pub false_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub objective: Objective,
    pub cfg: LossConfig,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// Logits after the final update.
    pub logits: Volume,
    /// `steps + 1` entries.
    pub trace: Vec<TraceEntry>,
}

impl TrainRun {
    pub fn last(&self) -> &TraceEntry {
        self.trace.last().expect("trace always holds step 0")
    }
}

/// i.i.d. `Normal(0, INIT_STD)` logits drawn in flat-index order.
pub fn init_logits(label: &BinaryMask, seed: u64) -> Volume {
    let mut rng = SynthRng::new(seed);
    Volume::from_fn(label.shape().clone(), |_| rng.normal(0.0, INIT_STD))
}

/// Gradient descent with the ICI objective.
pub fn run(
    label: &BinaryMask,
    cfg: &LossConfig,
    lr: f64,
    steps: usize,
    seed: u64,
) -> Result<TrainRun> {
    run_objective(label, Objective::Ici, cfg, lr, steps, seed)
}

pub fn run_objective(
    label: &BinaryMask,
    objective: Objective,
    cfg: &LossConfig,
    lr: f64,
    steps: usize,
    seed: u64,
) -> Result<TrainRun> {
    let logits = init_logits(label, seed);
    let mut out = run_from(label, objective, cfg, lr, steps, logits)?;
    out.seed = seed;
    Ok(out)
}

/// Gradient descent starting from the given logits. The returned run has
/// seed 0.
pub fn run_from(
    label: &BinaryMask,
    objective: Objective,
    cfg: &LossConfig,
    lr: f64,
    steps: usize,
    mut logits: Volume,
) -> Result<TrainRun> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate {lr} must be > 0"
        )));
    }
    if steps == 0 {
        return Err(Error::ZeroIterations);
    }
    cfg.validate()?;
    label.shape().ensure_same(logits.shape())?;
    let cc_label = cfg.labeler.label(label);
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut tape = Tape::new();
        let x = tape.input(logits.clone());
        let p = tape.sigmoid(x);
        let (entry, root) = evaluate(&mut tape, label, &cc_label, p, objective, cfg, step)?;
        trace.push(entry);
        if step == steps {
            break;
        }
        let grads = tape.backward(root)?;
        let g = grads.get(x).expect("logits are a tape input");
        let updated: Vec<f64> = logits
            .data()
            .iter()
            .zip(g.data())
            .map(|(&l, &d)| l - lr * d)
            .collect();
        logits = Volume::new(logits.shape().clone(), updated)?;
    }
    Ok(TrainRun {
        objective,
        cfg: *cfg,
        lr,
        steps,
        seed: 0,
        logits,
        trace,
    })
}

fn evaluate(
    tape: &mut Tape,
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    p: VolumeId,
    objective: Objective,
    cfg: &LossConfig,
    step: usize,
) -> Result<(TraceEntry, DiffScalar)> {
    let loss = match objective {
        Objective::Ici => ici_loss_prelabeled(tape, label, cc_label, p, cfg).map(|l| {
            (
                l.global.value(),
                l.instance.value(),
                l.center.value(),
                l.total,
                Some(l.output),
            )
        }),
        Objective::Dici => dici_loss_prelabeled(tape, label, cc_label, p, cfg).map(|l| {
            (
                l.global.value(),
                l.groundtruth.value(),
                l.center.value(),
                l.total,
                Some(l.output),
            )
        }),
        Objective::Blob => blob_loss_baseline(tape, label, cc_label, p, cfg)
            .map(|l| (l.global.value(), l.instance.value(), 0.0, l.total, None)),
    };
    let (global, instance, center, total, output) = match loss {
        Ok(v) => v,
        Err(Error::NonFinite { value, .. }) => return Err(Error::NonFiniteLoss { step, value }),
        Err(e) => return Err(e),
    };
    if !total.value().is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            value: total.value(),
        });
    }
    let pred = threshold(tape.values(p), cfg.tau)?;
    let output = output.filter(|_| matches!(cfg.labeler, Labeler::Exact));
    let cc_pred = output.unwrap_or_else(|| label_components_exact(&pred));
    let report = evaluate_labeled(label, cc_label, &pred, &cc_pred)?;
    let entry = TraceEntry {
        step,
        global,
        instance,
        center,
        total: total.value(),
        dsc: report.dsc,
        missed: report.missed_instances,
        false_instances: report.false_instances,
    };
    Ok((entry, total))
}

pub const TRACE_CSV_HEADER: &str = "step,global,instance,center,total,dsc,mi,fi";

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.step, e.global, e.instance, e.center, e.total, e.dsc, e.missed, e.false_instances
        ));
    }
    out
}

/// One training target: a label and the seed for its logit initialization.
#[derive(Debug, Clone)]
pub struct Case {
    pub label: BinaryMask,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub objective: Objective,
    pub cfg: LossConfig,
}

/// Final-step results for one configuration across all cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub mean_dsc: f64,
    pub mean_missed: f64,
    pub mean_false: f64,
    /// Final trace entry per case, in case order.
    pub finals: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Columns DSC (higher is better), MI and FI (lower is better).
    pub table: RankTable,
}

/// Runs every configuration on every case (in parallel, collected in order)
/// and ranks the configurations by final-step means.
pub fn compare(
    cases: &[Case],
    configs: &[NamedConfig],
    lr: f64,
    steps: usize,
) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "compare needs at least 2 configurations, got {}",
            configs.len()
        )));
    }
    if cases.is_empty() {
        return Err(Error::InvalidConfig(
            "compare needs at least one case".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..cases.len()).map(move |k| (c, k)))
        .collect();
    let finals: Vec<TraceEntry> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let nc = &configs[c];
            let case = &cases[k];
            run_objective(&case.label, nc.objective, &nc.cfg, lr, steps, case.seed)
                .map(|r| *r.last())
        })
        .collect::<Result<_>>()?;

    let n = cases.len() as f64;
    let rows: Vec<ComparisonRow> = configs
        .iter()
        .zip(finals.chunks(cases.len()))
        .map(|(nc, f)| ComparisonRow {
            name: nc.name.clone(),
            mean_dsc: f.iter().map(|e| e.dsc).sum::<f64>() / n,
            mean_missed: f.iter().map(|e| e.missed as f64).sum::<f64>() / n,
            mean_false: f.iter().map(|e| e.false_instances as f64).sum::<f64>() / n,
            finals: f.to_vec(),
        })
        .collect();
    let columns = vec![
        RankColumn {
            name: "DSC".into(),
            direction: Direction::HigherIsBetter,
        },
        RankColumn {
            name: "MI".into(),
            direction: Direction::LowerIsBetter,
        },
        RankColumn {
            name: "FI".into(),
            direction: Direction::LowerIsBetter,
        },
    ];
    let table = rank_table(
        rows.iter().map(|r| r.name.clone()).collect(),
        columns,
        rows.iter()
            .map(|r| vec![r.mean_dsc, r.mean_missed, r.mean_false])
            .collect(),
        TieRule::default(),
    )?;
    Ok(Comparison { rows, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape;

    fn small_label() -> BinaryMask {
        let shape = Shape::new(&[6, 6, 6]).unwrap();
        let idx = |c: [usize; 3]| shape.index(&c).unwrap();
        let voxels = [idx([1, 1, 1]), idx([4, 4, 4]), idx([4, 4, 3])];
        BinaryMask::from_indices(shape.clone(), &voxels).unwrap()
    }

    #[test]
    fn trace_has_steps_plus_one_entries() {
        let label = small_label();
        let r = run(&label, &LossConfig::default(), 0.5, 3, 1).unwrap();
        assert_eq!(r.trace.len(), 4);
        assert_eq!(
            r.trace.iter().map(|e| e.step).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(r.seed, 1);
    }

    #[test]
    fn perfect_init_is_perfect_at_step_zero() {
        let label = small_label();
        let logits = label
            .to_volume()
            .map(|v| if v > 0.5 { 10.0 } else { -10.0 });
        let r = run_from(
            &label,
            Objective::Ici,
            &LossConfig::default(),
            0.5,
            1,
            logits,
        )
        .unwrap();
        let e = r.trace[0];
        assert_eq!((e.dsc, e.missed, e.false_instances), (1.0, 0, 0));
    }

    #[test]
    fn same_seed_same_trace() {
        let label = small_label();
        let cfg = LossConfig::default();
        let a = run(&label, &cfg, 0.5, 4, 9).unwrap();
        let b = run(&label, &cfg, 0.5, 4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn global_only_loss_does_not_increase_on_empty_label() {
        let label = BinaryMask::zeros(Shape::new(&[5, 5, 5]).unwrap());
        let cfg = LossConfig::with_weights(1.0, 0.0, 0.0);
        let r = run(&label, &cfg, 0.5, 100, 3).unwrap();
        assert!(r.last().total <= r.trace[0].total);
    }

    #[test]
    fn bad_arguments() {
        let label = small_label();
        let cfg = LossConfig::default();
        assert!(matches!(
            run(&label, &cfg, 0.0, 3, 1),
            Err(Error::InvalidConfig(_))
        ));
        assert_eq!(run(&label, &cfg, 0.5, 0, 1), Err(Error::ZeroIterations));
    }

    #[test]
    fn trace_csv_layout() {
        let label = small_label();
        let r = run(&label, &LossConfig::default(), 0.5, 2, 1).unwrap();
        let csv = trace_csv(&r.trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn compare_duplicates_give_identical_rows() {
        let cases = vec![Case {
            label: small_label(),
            seed: 4,
        }];
        let nc = NamedConfig {
            name: "ici".into(),
            objective: Objective::Ici,
            cfg: LossConfig::default(),
        };
        let mut other = nc.clone();
        other.name = "ici again".into();
        let cmp = compare(&cases, &[nc, other], 0.5, 2).unwrap();
        let (a, b) = (&cmp.rows[0], &cmp.rows[1]);
        assert_eq!(
            (a.mean_dsc, a.mean_missed, a.mean_false),
            (b.mean_dsc, b.mean_missed, b.mean_false)
        );
        assert_eq!(cmp.table.ranks[0], cmp.table.ranks[1]);

        let single = run(&cases[0].label, &LossConfig::default(), 0.5, 2, 4).unwrap();
        assert_eq!(a.finals[0], *single.last());
        assert_eq!(a.mean_dsc, single.last().dsc);
    }

    #[test]
    fn compare_needs_two_configs() {
        let cases = vec![Case {
            label: small_label(),
            seed: 4,
        }];
        let nc = NamedConfig {
            name: "ici".into(),
            objective: Objective::Ici,
            cfg: LossConfig::default(),
        };
        assert!(compare(&cases, &[nc], 0.5, 2).is_err());
    }
}

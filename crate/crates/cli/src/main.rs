use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ici_core::diffgraph::{finite_diff_check, Tape, VolumeId};
use ici_core::labeling::{CcaConfig, Labeler};
use ici_core::losses::{
    blob_loss_baseline, dici_loss_prelabeled, ici_loss_prelabeled, BaseLoss, CenterFill,
    InstanceVariant, LossConfig,
};
use ici_core::metrics::{evaluate_pair, rank_table, Direction, RankColumn, RankTable, TieRule};
use ici_core::optim::{compare, run_objective, trace_csv, Case, NamedConfig, Objective};
use ici_core::rvl::{self, RvlData};
use ici_core::synth::{corrupt_with, generate, BlobShape, BlobSpec};
use ici_core::volume::{threshold, BinaryMask, Shape, Volume};

#[derive(Parser)]
#[command(
    name = "ici",
    version,
    about = "Instance-aware segmentation losses on RVL1 volumes"
)]
struct Cli {
    /// Worker threads (0 = rayon default). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Print elapsed wall time to stderr.
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a compound loss on a label/prediction pair.
    Loss(PairArgs),
    /// Instance-aware metrics for a label/prediction pair.
    Metrics(MetricsArgs),
    /// Connected components of a mask.
    Cca(CcaArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Generate a seeded multi-blob label (and optionally a corrupted prediction).
    Synth(SynthArgs),
    /// Gradient descent on logits; one trace or a Dice-only comparison.
    TrainDemo(TrainArgs),
    /// Mean-rank table from a CSV of metric values.
    Rank(RankArgs),
    /// Center and compound loss for a list of cube sizes.
    SweepDelta(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Ici,
    Dici,
    Blob,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ici => Objective::Ici,
            ObjectiveArg::Dici => Objective::Dici,
            ObjectiveArg::Blob => Objective::Blob,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaseArg {
    Dice,
    Bce,
    Focal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Standard,
    NoTp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FillArg {
    MeanProb,
    One,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelerArg {
    Exact,
    Maxpool,
}

#[derive(Args, Clone)]
struct LossArgs {
    #[arg(long, value_enum, default_value = "ici")]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 7)]
    delta: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1e-5)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "dice")]
    base_loss: BaseArg,
    /// Focal exponent, used with --base-loss focal.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "standard")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "mean-prob")]
    center_fill: FillArg,
    #[arg(long, value_enum, default_value = "exact")]
    labeler: LabelerArg,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        LossConfig {
            a: self.a,
            b: self.b,
            c: self.c,
            d: self.d,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            tau: self.tau,
            sigma: self.sigma,
            base_loss: match self.base_loss {
                BaseArg::Dice => BaseLoss::Dice,
                BaseArg::Bce => BaseLoss::Bce,
                BaseArg::Focal => BaseLoss::Focal { gamma: self.gamma },
            },
            instance_variant: match self.variant {
                VariantArg::Standard => InstanceVariant::Standard,
                VariantArg::NoTp => InstanceVariant::NoTp,
            },
            center_fill: match self.center_fill {
                FillArg::MeanProb => CenterFill::InstanceMeanProb,
                FillArg::One => CenterFill::ConstantOne,
            },
            labeler: match self.labeler {
                LabelerArg::Exact => Labeler::Exact,
                LabelerArg::Maxpool => Labeler::MaxPool(None),
            },
        }
    }
}

#[derive(Args)]
struct PairArgs {
    /// Binary label volume.
    #[arg(long)]
    label: PathBuf,
    /// Probability volume.
    #[arg(long)]
    pred: PathBuf,
    #[command(flatten)]
    loss: LossArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    label: PathBuf,
    /// Mask, or probability volume thresholded at --tau.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

#[derive(Args)]
struct CcaArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    labeler: LabelerArg,
    /// Max-pool sweeps; defaults to the sum of dimensions.
    #[arg(long)]
    iterations: Option<usize>,
    /// Write component ids as an f32 volume.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Clone)]
struct BlobArgs {
    /// Volume shape, e.g. 48,48,48.
    #[arg(long, value_delimiter = ',', default_value = "48,48,48")]
    shape: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    count_min: usize,
    #[arg(long, default_value_t = 5)]
    count_max: usize,
    #[arg(long, default_value_t = 2)]
    radius_min: usize,
    #[arg(long, default_value_t = 6)]
    radius_max: usize,
    #[arg(long, value_enum, default_value = "sphere")]
    blob_shape: BlobShapeArg,
    #[arg(long, default_value_t = 0.0)]
    separation: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BlobShapeArg {
    Sphere,
    Cube,
}

impl BlobArgs {
    fn spec(&self, seed: u64) -> BlobSpec {
        BlobSpec {
            count: (self.count_min, self.count_max),
            radius: (self.radius_min, self.radius_max),
            shape: match self.blob_shape {
                BlobShapeArg::Sphere => BlobShape::Sphere,
                BlobShapeArg::Cube => BlobShape::Cube,
            },
            min_separation: self.separation,
            seed,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    blobs: BlobArgs,
    /// Label mask output.
    #[arg(long)]
    output: PathBuf,
    /// Also write a corrupted copy as the prediction mask.
    #[arg(long)]
    pred_output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    drop: usize,
    #[arg(long, default_value_t = 0)]
    add: usize,
    #[arg(long, default_value_t = 1)]
    add_radius: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    /// Label mask; a synthetic one is drawn from --seed otherwise.
    #[arg(long)]
    label: Option<PathBuf>,
    #[command(flatten)]
    blobs: BlobArgs,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Compare against Dice-only on this many synthetic cases (seeds seed..seed+cases).
    #[arg(long)]
    compare: Option<usize>,
    #[command(flatten)]
    loss: LossArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TieArg {
    Dense,
    Competition,
}

#[derive(Args)]
struct RankArgs {
    /// CSV with a method column followed by `name:higher` or `name:lower` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "dense")]
    ties: TieArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,11,15,31,63")]
    deltas: Vec<usize>,
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .context("building thread pool")
        .and_then(|pool| pool.install(|| dispatch(&cli)));
    if cli.timing {
        eprintln!("elapsed: {:.3} s", start.elapsed().as_secs_f64());
    }
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    let fmt = |default| cli.format.unwrap_or(default);
    match &cli.command {
        Command::Loss(args) => cmd_loss(args, fmt(Format::Json)),
        Command::Metrics(args) => cmd_metrics(args, fmt(Format::Json)),
        Command::Cca(args) => cmd_cca(args, fmt(Format::Json)),
        Command::Gradcheck(args) => cmd_gradcheck(args, fmt(Format::Json)),
        Command::Synth(args) => cmd_synth(args, fmt(Format::Json)),
        Command::TrainDemo(args) => cmd_train_demo(args, fmt(Format::Csv)),
        Command::Rank(args) => cmd_rank(args, fmt(Format::Csv)),
        Command::SweepDelta(args) => cmd_sweep_delta(args, fmt(Format::Csv)),
    }
}

fn read_rvl(path: &Path) -> anyhow::Result<RvlData> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    rvl::read_volume(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn read_mask(path: &Path) -> anyhow::Result<BinaryMask> {
    read_rvl(path)?
        .into_mask()
        .with_context(|| format!("{} is not a binary mask", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct Components {
    global: f64,
    instance: Option<f64>,
    groundtruth: Option<f64>,
    predicted: Option<f64>,
    center: Option<f64>,
    output_instances: Option<usize>,
    label_instances: usize,
}

fn evaluate_loss(
    tape: &mut Tape,
    label: &BinaryMask,
    p: VolumeId,
    objective: Objective,
    cfg: &LossConfig,
) -> ici_core::Result<(Components, ici_core::diffgraph::DiffScalar)> {
    let cc_label = cfg.labeler.label(label);
    let label_instances = cc_label.count();
    Ok(match objective {
        Objective::Ici => {
            let l = ici_loss_prelabeled(tape, label, &cc_label, p, cfg)?;
            let c = Components {
                global: l.global.value(),
                instance: Some(l.instance.value()),
                groundtruth: None,
                predicted: None,
                center: Some(l.center.value()),
                output_instances: Some(l.output.count()),
                label_instances,
            };
            (c, l.total)
        }
        Objective::Dici => {
            let l = dici_loss_prelabeled(tape, label, &cc_label, p, cfg)?;
            let c = Components {
                global: l.global.value(),
                instance: None,
                groundtruth: Some(l.groundtruth.value()),
                predicted: Some(l.predicted.value()),
                center: Some(l.center.value()),
                output_instances: Some(l.output.count()),
                label_instances,
            };
            (c, l.total)
        }
        Objective::Blob => {
            let l = blob_loss_baseline(tape, label, &cc_label, p, cfg)?;
            let c = Components {
                global: l.global.value(),
                instance: Some(l.instance.value()),
                groundtruth: None,
                predicted: None,
                center: None,
                output_instances: None,
                label_instances,
            };
            (c, l.total)
        }
    })
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Ici => "ici",
        Objective::Dici => "dici",
        Objective::Blob => "blob",
    }
}

fn load_pair(args: &PairArgs) -> anyhow::Result<(BinaryMask, Volume)> {
    let label = read_mask(&args.label)?;
    let pred = read_rvl(&args.pred)?.into_volume();
    label.shape().ensure_same(pred.shape())?;
    Ok((label, pred))
}

fn cmd_loss(args: &PairArgs, format: Format) -> anyhow::Result<Outcome> {
    let (label, pred) = load_pair(args)?;
    let cfg = args.loss.config();
    let objective = args.loss.objective.into();
    let mut tape = Tape::new();
    let p = tape.input(pred);
    let (components, total) = evaluate_loss(&mut tape, &label, p, objective, &cfg)?;
    match format {
        Format::Json => print_json(&json!({
            "schema": "ici.loss.v1",
            "objective": objective_name(objective),
            "config": cfg,
            "components": components,
            "total": total.value(),
        }))?,
        Format::Csv => {
            let mut rows = vec![vec!["global".to_string(), components.global.to_string()]];
            let optional = [
                ("instance", components.instance),
                ("groundtruth", components.groundtruth),
                ("predicted", components.predicted),
                ("center", components.center),
            ];
            for (name, v) in optional {
                if let Some(v) = v {
                    rows.push(vec![name.to_string(), v.to_string()]);
                }
            }
            rows.push(vec!["total".to_string(), total.value().to_string()]);
            print!("{}", csv_string(&["component", "value"], &rows)?);
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_metrics(args: &MetricsArgs, format: Format) -> anyhow::Result<Outcome> {
    let label = read_mask(&args.label)?;
    let pred = match read_rvl(&args.pred)? {
        RvlData::Mask(m) => m,
        RvlData::Scalar(v) => threshold(&v, args.tau)?,
    };
    let r = evaluate_pair(&label, &pred)?;
    match format {
        Format::Json => print_json(&json!({"schema": "ici.metrics.v1", "report": r}))?,
        Format::Csv => {
            let header = [
                "dsc",
                "label_instances",
                "predicted_instances",
                "mi",
                "fi",
                "f1",
                "slc",
                "vd",
            ];
            let row = vec![
                r.dsc.to_string(),
                r.label_instances.to_string(),
                r.predicted_instances.to_string(),
                r.missed_instances.to_string(),
                r.false_instances.to_string(),
                r.lesionwise_f1.to_string(),
                r.simple_lesion_count.to_string(),
                r.volume_difference.to_string(),
            ];
            print!("{}", csv_string(&header, &[row])?);
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_cca(args: &CcaArgs, format: Format) -> anyhow::Result<Outcome> {
    let mask = read_mask(&args.input)?;
    let labeler = match (args.labeler, args.iterations) {
        (LabelerArg::Exact, None) => Labeler::Exact,
        (LabelerArg::Exact, Some(_)) => bail!("--iterations only applies to --labeler maxpool"),
        (LabelerArg::Maxpool, None) => Labeler::MaxPool(None),
        (LabelerArg::Maxpool, Some(n)) => Labeler::MaxPool(Some(CcaConfig::new(n)?)),
    };
    let cc = labeler.label(&mask);
    if let Some(out) = &args.output {
        let ids = Volume::new(
            cc.shape().clone(),
            cc.labels().iter().map(|&l| l as f64).collect(),
        )?;
        write_file(out, &rvl::write_volume(&ids))?;
    }
    match format {
        Format::Json => {
            let instances: Vec<_> = cc
                .instances()
                .iter()
                .map(|i| json!({"id": i.id, "size": i.size(), "center_of_mass": i.center_of_mass}))
                .collect();
            print_json(&json!({
                "schema": "ici.cca.v1",
                "count": cc.count(),
                "converged": cc.converged(),
                "instances": instances,
            }))?
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = cc
                .instances()
                .iter()
                .map(|i| {
                    let com: Vec<String> = i.center_of_mass.iter().map(|c| c.to_string()).collect();
                    vec![i.id.to_string(), i.size().to_string(), com.join(" ")]
                })
                .collect();
            print!("{}", csv_string(&["id", "size", "center_of_mass"], &rows)?);
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_gradcheck(args: &GradcheckArgs, format: Format) -> anyhow::Result<Outcome> {
    let (label, pred) = load_pair(&args.pair)?;
    let cfg = args.pair.loss.config();
    let objective: Objective = args.pair.loss.objective.into();
    let check = finite_diff_check(
        |tape, p| evaluate_loss(tape, &label, p, objective, &cfg).map(|(_, total)| total),
        &pred,
        args.h,
    )?;
    let pass = check.max_rel_error < args.tolerance;
    match format {
        Format::Json => print_json(&json!({
            "schema": "ici.gradcheck.v1",
            "objective": objective_name(objective),
            "h": args.h,
            "tolerance": args.tolerance,
            "max_rel_error": check.max_rel_error,
            "worst_index": check.worst_index,
            "pass": pass,
        }))?,
        Format::Csv => {
            let row = vec![
                check.max_rel_error.to_string(),
                check.worst_index.to_string(),
                pass.to_string(),
            ];
            print!(
                "{}",
                csv_string(&["max_rel_error", "worst_index", "pass"], &[row])?
            );
        }
    }
    if !pass {
        eprintln!(
            "gradient check failed: max relative error {} >= {}",
            check.max_rel_error, args.tolerance
        );
        return Ok(Outcome::CheckFailed);
    }
    Ok(Outcome::Ok)
}

fn cmd_synth(args: &SynthArgs, format: Format) -> anyhow::Result<Outcome> {
    let shape = Shape::new(&args.blobs.shape)?;
    let (mask, cc) = generate(&shape, &args.blobs.spec(args.seed))?;
    write_file(&args.output, &rvl::write_mask(&mask))?;
    let mut predicted = None;
    if let Some(path) = &args.pred_output {
        let mut spec = BlobSpec::new(
            (args.add, args.add),
            (args.add_radius, args.add_radius),
            args.seed,
        );
        spec.min_separation = args.blobs.separation;
        let pred = corrupt_with(&mask, args.drop, &spec)?;
        write_file(path, &rvl::write_mask(&pred))?;
        predicted = Some(pred.count());
    }
    match format {
        Format::Json => print_json(&json!({
            "schema": "ici.synth.v1",
            "seed": args.seed,
            "shape": shape.dims(),
            "instances": cc.count(),
            "foreground_voxels": mask.count(),
            "sizes": cc.instances().iter().map(|i| i.size()).collect::<Vec<_>>(),
            "prediction_voxels": predicted,
        }))?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = cc
                .instances()
                .iter()
                .map(|i| vec![i.id.to_string(), i.size().to_string()])
                .collect();
            print!("{}", csv_string(&["id", "size"], &rows)?);
        }
    }
    Ok(Outcome::Ok)
}

fn table_rows(table: &RankTable) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["method".to_string()];
    for c in &table.columns {
        header.push(c.name.clone());
        header.push(format!("{}_rank", c.name));
    }
    header.push("mean_rank".into());
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let mut row = vec![name.clone()];
            for c in 0..table.columns.len() {
                row.push(table.values[r][c].to_string());
                row.push(table.ranks[r][c].to_string());
            }
            row.push(table.mean_ranks[r].to_string());
            row
        })
        .collect();
    (header, rows)
}

fn print_table(table: &RankTable, format: Format, schema: &str) -> anyhow::Result<()> {
    match format {
        Format::Json => print_json(&json!({"schema": schema, "table": table})),
        Format::Csv => {
            let (header, rows) = table_rows(table);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            print!("{}", csv_string(&header, &rows)?);
            Ok(())
        }
    }
}

fn cmd_train_demo(args: &TrainArgs, format: Format) -> anyhow::Result<Outcome> {
    let cfg = args.loss.config();
    let objective: Objective = args.loss.objective.into();
    let shape = Shape::new(&args.blobs.shape)?;
    if let Some(cases) = args.compare {
        if args.label.is_some() {
            bail!("--compare draws its own synthetic labels; drop --label");
        }
        let cases: Vec<Case> = (0..cases as u64)
            .map(|k| {
                let seed = args.seed.wrapping_add(k);
                generate(&shape, &args.blobs.spec(seed)).map(|(label, _)| Case { label, seed })
            })
            .collect::<Result<_, _>>()?;
        let configs = [
            NamedConfig {
                name: "dice".into(),
                objective: Objective::Ici,
                cfg: LossConfig {
                    a: 1.0,
                    b: 0.0,
                    c: 0.0,
                    ..cfg
                },
            },
            NamedConfig {
                name: objective_name(objective).into(),
                objective,
                cfg,
            },
        ];
        let cmp = compare(&cases, &configs, args.lr, args.steps)?;
        for row in &cmp.rows {
            eprintln!(
                "{}: mean DSC {:.4}, mean MI {:.2}, mean FI {:.2}",
                row.name, row.mean_dsc, row.mean_missed, row.mean_false
            );
        }
        print_table(&cmp.table, format, "ici.train-compare.v1")?;
        return Ok(Outcome::Ok);
    }
    let label = match &args.label {
        Some(path) => read_mask(path)?,
        None => generate(&shape, &args.blobs.spec(args.seed))?.0,
    };
    let run = run_objective(&label, objective, &cfg, args.lr, args.steps, args.seed)?;
    match format {
        Format::Csv => print!("{}", trace_csv(&run.trace)),
        Format::Json => print_json(&json!({
            "schema": "ici.train.v1",
            "objective": objective_name(objective),
            "seed": args.seed,
            "lr": args.lr,
            "steps": args.steps,
            "trace": run.trace,
        }))?,
    }
    Ok(Outcome::Ok)
}

fn parse_rank_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<RankColumn>, Vec<Vec<f64>>)> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = reader.headers()?.clone();
    let mut columns = Vec::new();
    for cell in header.iter().skip(1) {
        let (name, dir) = cell
            .rsplit_once(':')
            .with_context(|| format!("column {cell:?} needs a :higher or :lower suffix"))?;
        let direction = match dir {
            "higher" => Direction::HigherIsBetter,
            "lower" => Direction::LowerIsBetter,
            other => bail!("unknown direction {other:?} in column {cell:?}"),
        };
        columns.push(RankColumn {
            name: name.to_string(),
            direction,
        });
    }
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut cells = record.iter();
        rows.push(cells.next().unwrap_or_default().to_string());
        let row: Vec<f64> = cells
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad number {c:?}"))
            })
            .collect::<anyhow::Result<_>>()?;
        values.push(row);
    }
    Ok((rows, columns, values))
}

fn cmd_rank(args: &RankArgs, format: Format) -> anyhow::Result<Outcome> {
    let (rows, columns, values) = parse_rank_csv(&args.input)?;
    let tie = match args.ties {
        TieArg::Dense => TieRule::Dense,
        TieArg::Competition => TieRule::Competition,
    };
    let table = rank_table(rows, columns, values, tie)?;
    print_table(&table, format, "ici.rank.v1")?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct SweepRow {
    delta: usize,
    center: Option<f64>,
    total: Option<f64>,
    error: Option<String>,
}

fn cmd_sweep_delta(args: &SweepArgs, format: Format) -> anyhow::Result<Outcome> {
    let (label, pred) = load_pair(&args.pair)?;
    let objective: Objective = args.pair.loss.objective.into();
    if objective == Objective::Blob {
        bail!("the blob baseline has no center term to sweep");
    }
    let mut rows = Vec::with_capacity(args.deltas.len());
    for &delta in &args.deltas {
        let cfg = LossConfig {
            delta,
            ..args.pair.loss.config()
        };
        let mut tape = Tape::new();
        let p = tape.input(pred.clone());
        rows.push(match evaluate_loss(&mut tape, &label, p, objective, &cfg) {
            Ok((c, total)) => SweepRow {
                delta,
                center: c.center,
                total: Some(total.value()),
                error: None,
            },
            Err(e) => {
                eprintln!("delta {delta}: {e}");
                SweepRow {
                    delta,
                    center: None,
                    total: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    match format {
        Format::Json => print_json(&json!({"schema": "ici.sweep-delta.v1", "rows": rows}))?,
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.delta.to_string(),
                        opt(r.center),
                        opt(r.total),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            print!(
                "{}",
                csv_string(&["delta", "center", "total", "error"], &cells)?
            );
        }
    }
    Ok(Outcome::Ok)
}

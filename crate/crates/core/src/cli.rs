//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code: 0 on success, 2 for usage errors, 1 for any other failure,
//! which is reported as a single line on stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::ablation::{run_ablation, AblationConfig};
use crate::error::Error;
use crate::io::{load_checkpoint, load_extractor, load_lf, load_png, save_checkpoint, save_lf, save_png, write_json};
use crate::io::{write_report_csv, write_report_json};
use crate::lightfield::{crop_grid, extract_epi, subsample, AngularAxis, LightField};
use crate::losses::LossWeights;
use crate::metrics::{evaluate, EvalOptions};
use crate::net::{ArchConfig, InterpolatorModel, ModelAxis};
use crate::reconstruct::{reconstruct, CascadeOrder, ReconstructionPlan};
use crate::synth::{gen_planar_lf, gen_two_layer_lf, Foreground, SceneSpec, Texture};
use crate::trainer::{finetune, pretrain_baseline, PretrainConfig, SchedulerConfig, TrainConfig, TrainMode, TrainingData};

#[derive(Parser, Debug)]
#[command(name = "lfcycle", version, about = "Light field angular upsampling with a self-supervised kernel interpolator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic light field with known disparity.
    Gen(GenArgs),
    /// Keep every alpha-th view along both angular axes.
    Subsample(SubsampleArgs),
    /// Train a baseline interpolator on synthetic translated pairs.
    Pretrain(PretrainArgs),
    /// Fine-tune a baseline along one angular axis.
    Finetune(FinetuneArgs),
    /// Reconstruct the dense grid of a sparse light field.
    Synthesize(SynthesizeArgs),
    /// Score a reconstruction against ground truth.
    Evaluate(EvaluateArgs),
    /// Write an epipolar-plane image.
    Epi(EpiArgs),
    /// Compare the five training variants on one data set.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scene {
    Planar,
    TwoLayer,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    H,
    V,
}

impl From<AxisArg> for AngularAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::H => AngularAxis::Horizontal,
            AxisArg::V => AngularAxis::Vertical,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrderArg {
    Hv,
    Vh,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    #[value(name = "self")]
    SelfSupervised,
    NoCycle,
    Supervised,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got '{s}'"))?;
    let a = a.trim().parse::<usize>().map_err(|e| format!("'{a}': {e}"))?;
    let b = b.trim().parse::<usize>().map_err(|e| format!("'{b}': {e}"))?;
    if a == 0 || b == 0 {
        return Err(format!("'{s}' has a zero extent"));
    }
    Ok((a, b))
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "planar")]
    scene: Scene,
    /// Pixels per angular step of the (background) plane.
    #[arg(long, allow_negative_numbers = true)]
    disparity: f64,
    #[arg(long, allow_negative_numbers = true)]
    fg_disparity: Option<f64>,
    /// PNG whose bright pixels mark the foreground in the reference view;
    /// a centered square is used when absent.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Angular grid as ROWSxCOLS.
    #[arg(long, value_parser = parse_pair, default_value = "9x9")]
    grid: (usize, usize),
    /// View size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_pair, default_value = "128x128")]
    size: (usize, usize),
    /// `noise`, `checker` or the path of an image.
    #[arg(long, default_value = "noise")]
    texture: String,
    #[arg(long, default_value_t = 1.5)]
    blur: f64,
    #[arg(long, default_value_t = 8)]
    cell: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SubsampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    alpha: usize,
    /// Keep only the top-left ROWSxCOLS views first, e.g. 9x9 of a larger
    /// captured grid.
    #[arg(long, value_parser = parse_pair)]
    crop_grid: Option<(usize, usize)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Encoder widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 13)]
    kernel: usize,
    #[arg(long, default_value_t = 64)]
    patch: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Largest per-frame displacement of the training pairs.
    #[arg(long, default_value_t = 1)]
    max_shift: usize,
    #[arg(long, default_value_t = 500)]
    window: usize,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long = "in", value_delimiter = ',', required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Shorthand for `--mode supervised`.
    #[arg(long, conflicts_with = "mode")]
    supervised: bool,
    /// Dense ground truth, one per `--in` directory (supervised mode only).
    #[arg(long, value_delimiter = ',')]
    gt: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_r: f64,
    #[arg(long, default_value_t = 0.06)]
    lambda_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 150)]
    crop: usize,
    #[arg(long, default_value_t = 128)]
    fine_crop: usize,
    /// Minimum pixel shift between the outer views of a patch.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[arg(long, default_value_t = 500)]
    window: usize,
    /// Perceptual feature weights (JSON); seeded random features otherwise.
    #[arg(long)]
    extractor: Option<PathBuf>,
    /// Where to write the training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    alpha: usize,
    #[arg(long)]
    model_h: PathBuf,
    #[arg(long)]
    model_v: PathBuf,
    #[arg(long, value_enum, default_value = "hv")]
    order: OrderArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    alpha: usize,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0)]
    margin: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Defaults to the name of the ground-truth directory.
    #[arg(long)]
    dataset_id: Option<String>,
}

#[derive(Args, Debug)]
struct EpiArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Image row (horizontal axis) or column (vertical axis).
    #[arg(long)]
    line: usize,
    /// Angular index along the other axis.
    #[arg(long)]
    fixed: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    dense: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    alpha: usize,
    #[arg(long)]
    workdir: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Existing baseline; one is pretrained when absent.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 300)]
    pretrain_iters: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 9)]
    kernel: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    crop: usize,
    #[arg(long, default_value_t = 32)]
    fine_crop: usize,
    #[arg(long, default_value_t = 0)]
    margin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Subsample(a) => subsample_cmd(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Epi(a) => epi(a),
        Command::Ablate(a) => ablate(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

fn texture(spec: &str, blur: f64, cell: usize) -> std::result::Result<Texture, Failure> {
    Ok(match spec {
        "noise" => Texture::Noise { blur_sigma: blur },
        "checker" => Texture::Checkerboard { cell },
        path => Texture::Image(load_png(Path::new(path))?),
    })
}

fn load_mask(path: &Path, height: usize, width: usize) -> std::result::Result<Vec<bool>, Failure> {
    let img = load_png(path)?;
    if img.size() != (height, width) {
        return Err(Failure::Usage(format!(
            "mask {} is {}x{} but views are {width}x{height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    Ok((0..height * width).map(|i| (0..3).map(|c| img.plane(c)[i]).sum::<f32>() / 3.0 > 0.5).collect())
}

fn gen(a: GenArgs) -> CliResult {
    let (rows, cols) = a.grid;
    let (width, height) = a.size;
    let spec = SceneSpec { texture: texture(&a.texture, a.blur, a.cell)?, disparity: a.disparity, rows, cols, height, width, seed: a.seed };
    let (lf, source) = match a.scene {
        Scene::Planar => {
            if a.fg_disparity.is_some() || a.mask.is_some() {
                return Err(Failure::Usage("--fg-disparity and --mask need --scene two-layer".into()));
            }
            let (lf, _) = gen_planar_lf(&spec)?;
            (lf, json!({ "scene": "planar", "disparity": a.disparity, "texture": a.texture }))
        }
        Scene::TwoLayer => {
            let fg_d = a.fg_disparity.ok_or_else(|| Failure::Usage("--scene two-layer needs --fg-disparity".into()))?;
            let mut fg = Foreground::centered_square(&spec, fg_d);
            if let Some(mask) = &a.mask {
                fg.mask = load_mask(mask, height, width)?;
            }
            let (lf, _) = gen_two_layer_lf(&spec, &fg)?;
            let source = json!({
                "scene": "two-layer",
                "disparity": a.disparity,
                "fg_disparity": fg_d,
                "texture": a.texture,
                "mask": if a.mask.is_some() { "file" } else { "centered-square" },
            });
            (lf, source)
        }
    };
    save_lf(&lf, &a.out, Some(a.seed), Some(source))?;
    println!("wrote {}x{} views of {width}x{height} to {}", rows, cols, a.out.display());
    Ok(())
}

fn subsample_cmd(a: SubsampleArgs) -> CliResult {
    if a.alpha < 2 {
        return Err(Failure::Usage(format!("--alpha must be at least 2, got {}", a.alpha)));
    }
    let (mut lf, meta) = load_lf(&a.input)?;
    let mut source = json!({ "subsampled_by": a.alpha });
    if let Some((rows, cols)) = a.crop_grid {
        lf = crop_grid(&lf, 0, 0, rows, cols)?;
        source["grid_crop"] = json!({ "rows": rows, "cols": cols, "origin": "top-left" });
    }
    let sparse = subsample(&lf, a.alpha)?;
    save_lf(&sparse, &a.out, meta.seed, Some(source))?;
    println!("wrote {}x{} views to {}", sparse.rows(), sparse.cols(), a.out.display());
    Ok(())
}

fn arch(widths: Vec<usize>, kernel: usize) -> std::result::Result<ArchConfig, Failure> {
    ArchConfig::new(widths, kernel).map_err(|e| Failure::Usage(e.to_string()))
}

fn pretrain(a: PretrainArgs) -> CliResult {
    let config = PretrainConfig {
        arch: arch(a.widths, a.kernel)?,
        iterations: a.iters,
        batch_size: a.batch,
        patch_size: a.patch,
        lr: a.lr,
        max_half_shift: a.max_shift,
        scheduler: SchedulerConfig { window: a.window, ..Default::default() },
        seed: a.seed,
        ..Default::default()
    };
    let outcome = pretrain_baseline(&config)?;
    let notes: Vec<String> = outcome.warning.iter().cloned().collect();
    if let Some(w) = &outcome.warning {
        eprintln!("warning: {w}");
    }
    save_checkpoint(&outcome.model, &a.out, "pretrained", a.seed, &notes)?;
    match outcome.final_loss {
        Some(l) => println!("pretrained for {} iterations, final loss {l:.5}", a.iters),
        None => println!("wrote an untrained baseline"),
    }
    Ok(())
}

fn load_fields(dirs: &[PathBuf]) -> std::result::Result<Vec<LightField>, Failure> {
    Ok(dirs.iter().map(|d| load_lf(d).map(|(lf, _)| lf)).collect::<crate::Result<Vec<_>>>()?)
}

fn finetune_cmd(a: FinetuneArgs) -> CliResult {
    let mode = match (a.supervised, a.mode) {
        (true, _) => TrainMode::Supervised,
        (false, Some(ModeArg::Supervised)) => TrainMode::Supervised,
        (false, Some(ModeArg::NoCycle)) => TrainMode::NoCycle,
        (false, Some(ModeArg::SelfSupervised) | None) => TrainMode::SelfSupervised,
    };
    if mode == TrainMode::Supervised && a.gt.is_empty() {
        return Err(Failure::Usage("supervised fine-tuning needs --gt".into()));
    }
    if mode != TrainMode::Supervised && !a.gt.is_empty() {
        return Err(Failure::Usage("--gt is only used by supervised fine-tuning".into()));
    }
    if mode == TrainMode::Supervised && a.gt.len() != a.input.len() {
        return Err(Failure::Usage(format!("{} --in directories but {} --gt directories", a.input.len(), a.gt.len())));
    }
    let weights = LossWeights { cycle: a.lambda_c, reconstruction: a.lambda_r, perceptual: a.lambda_p };
    weights.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (baseline, _) = load_checkpoint(&a.baseline)?;
    let sparse = load_fields(&a.input)?;
    let data = if mode == TrainMode::Supervised {
        TrainingData::with_ground_truth(sparse, load_fields(&a.gt)?)?
    } else {
        TrainingData::new(sparse)?
    };
    let config = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        iterations: a.iters,
        coarse_crop: a.crop,
        fine_crop: a.fine_crop.min(a.crop),
        disparity_threshold: a.threshold,
        weights,
        scheduler: SchedulerConfig { window: a.window, ..Default::default() },
        mode,
        seed: a.seed,
        extractor: a.extractor.as_deref().map(load_extractor).transpose()?,
        ..Default::default()
    };
    let axis = AngularAxis::from(a.axis);
    let (model, report) = finetune(&baseline, &data, axis, &config)?;
    let tag = match mode {
        TrainMode::SelfSupervised => "finetuned/self",
        TrainMode::NoCycle => "finetuned/no-cycle",
        TrainMode::Supervised => "finetuned/supervised",
    };
    save_checkpoint(&model, &a.out, tag, a.seed, &report.notes)?;
    if let Some(path) = &a.report {
        let mut r = report.clone();
        r.wall_clock_secs = 0.0;
        write_json(&r, path)?;
    }
    match report.tail_loss(50) {
        Some(l) => println!("fine-tuned {axis} model for {} iterations, recent loss {l:.5}", report.history.len()),
        None => println!("wrote the baseline unchanged (zero iterations)"),
    }
    Ok(())
}

fn check_axis(path: &Path, model: &InterpolatorModel<f32>, expected: ModelAxis) {
    if model.axis() != expected && model.axis() != ModelAxis::Generic {
        eprintln!("warning: {} is tagged {:?}, used as the {:?} model", path.display(), model.axis(), expected);
    }
}

fn synthesize(a: SynthesizeArgs) -> CliResult {
    let (lf, meta) = load_lf(&a.input)?;
    let (h, _) = load_checkpoint(&a.model_h)?;
    let (v, _) = load_checkpoint(&a.model_v)?;
    check_axis(&a.model_h, &h, ModelAxis::Horizontal);
    check_axis(&a.model_v, &v, ModelAxis::Vertical);
    let order = match a.order {
        OrderArg::Hv => CascadeOrder::HV,
        OrderArg::Vh => CascadeOrder::VH,
    };
    let plan = ReconstructionPlan { alpha: a.alpha, order, horizontal: &h, vertical: &v };
    let out = reconstruct(&lf, &plan)?;
    save_lf(&out, &a.out, meta.seed, Some(json!({ "reconstructed_by": a.alpha, "order": order })))?;
    println!("wrote {}x{} views to {}", out.rows(), out.cols(), a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let (recon, _) = load_lf(&a.recon)?;
    let (gt, _) = load_lf(&a.gt)?;
    let dataset_id = a.dataset_id.clone().unwrap_or_else(|| {
        a.gt.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let report = evaluate(&recon, &gt, a.alpha, &EvalOptions { margin: a.margin, dataset_id })?;
    write_report_json(&report, &a.report)?;
    if let Some(csv) = &a.csv {
        write_report_csv(&report, csv)?;
    }
    println!(
        "{} views: mean PSNR {:.3} dB, mean SSIM {:.5}",
        report.views.len(),
        report.mean_psnr_db,
        report.mean_ssim
    );
    Ok(())
}

fn epi(a: EpiArgs) -> CliResult {
    let (lf, _) = load_lf(&a.input)?;
    let img = extract_epi(&lf, a.axis.into(), a.line, a.fixed)?;
    save_png(&img, &a.out)?;
    println!("wrote {}x{} EPI to {}", img.width(), img.height(), a.out.display());
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult {
    let dense = load_fields(&a.dense)?;
    std::fs::create_dir_all(&a.workdir).map_err(|e| Error::io(&a.workdir, e))?;
    let baseline = match &a.baseline {
        Some(path) => load_checkpoint(path)?.0,
        None => {
            let config = PretrainConfig {
                arch: arch(a.widths.clone(), a.kernel)?,
                iterations: a.pretrain_iters,
                batch_size: a.batch,
                patch_size: a.fine_crop,
                seed: a.seed,
                ..Default::default()
            };
            let outcome = pretrain_baseline(&config)?;
            if let Some(w) = &outcome.warning {
                eprintln!("warning: {w}");
            }
            save_checkpoint(&outcome.model, &a.workdir.join("baseline.ckpt"), "pretrained", a.seed, &[])?;
            outcome.model
        }
    };
    let train = TrainConfig {
        iterations: a.iters,
        batch_size: a.batch,
        coarse_crop: a.crop,
        fine_crop: a.fine_crop.min(a.crop),
        desk_crops: (a.crop, a.fine_crop.min(a.crop)),
        scheduler: SchedulerConfig { window: (a.iters / 4).max(1), ..Default::default() },
        seed: a.seed,
        ..Default::default()
    };
    let config = AblationConfig { alpha: a.alpha, train, margin: a.margin };
    let report = run_ablation(&dense, &baseline, &config, Some(&a.workdir))?;
    write_json(&report, &a.report)?;
    for m in &report.modes {
        println!("{:<11} {:>8.3} dB  SSIM {:.5}  ({})", m.mode.name(), m.mean_psnr_db, m.mean_ssim, m.label);
    }
    Ok(())
}

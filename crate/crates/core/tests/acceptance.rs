//! End-to-end acceptance checks. Everything runs from one test so the
//! criteria execute in order, their runtimes are not inflated by each other,
//! and the summary prints as one block.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use lfcycle::ablation::{AblationMode, AblationReport};
use lfcycle::autodiff::Graph;
use lfcycle::io::{load_lf, read_json, save_checkpoint};
use lfcycle::lightfield::{dense_angular_size, extract_triplets, subsample, AngularAxis, Image, LightField};
use lfcycle::losses::{cycle_reconstruct, TripletBatch};
use lfcycle::metrics::{evaluate, psnr, ssim, EvalOptions, EvalReport, PSNR_SENTINEL_DB, SSIM_K1};
use lfcycle::net::{interpolate, ArchConfig, InterpolatorModel, Midpoint};
use lfcycle::reconstruct::{reconstruct, CascadeOrder, ReconstructionPlan};
use lfcycle::synth::{gen_planar_lf, SceneSpec, TranslationOracle};
use lfcycle::trainer::{
    finetune, pretrain_baseline, PretrainConfig, SchedulerConfig, TrainConfig, TrainMode, TrainReport, TrainingData,
};
use sha2::{Digest, Sha256};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn planar(d: f64, grid: usize, size: usize, seed: u64) -> LightField {
    gen_planar_lf(&SceneSpec::planar(d, grid, size, seed)).unwrap().0
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let cases = common::gradient_suite();
    let secs = started.elapsed().as_secs_f64();
    let failed: Vec<String> = cases.iter().filter(|c| !c.passed()).map(|c| c.to_string()).collect();
    let worst = cases
        .iter()
        .filter_map(|c| c.result.as_ref().ok().map(|r| r.max_relative_error / c.tolerance))
        .fold(0.0, f64::max);
    let detail = if failed.is_empty() {
        format!("{} checks, worst error at {:.1}% of its tolerance, {secs:.1}s", cases.len(), 100.0 * worst)
    } else {
        failed.join("; ")
    };
    outcome(failed.is_empty() && secs < 60.0, detail)
}

fn oracle_end_to_end() -> Outcome {
    let started = Instant::now();
    let dense = planar(2.0, 9, 128, 7);
    let sparse = subsample(&dense, 2).unwrap();
    let oracle_h = TranslationOracle::new(2, AngularAxis::Horizontal);
    let oracle_v = TranslationOracle::new(2, AngularAxis::Vertical);
    let plan = ReconstructionPlan { alpha: 2, order: CascadeOrder::HV, horizontal: &oracle_h, vertical: &oracle_v };
    let recon = reconstruct(&sparse, &plan).unwrap();
    let margin = 2;
    let (h, w) = dense.view_size();
    let mut mismatched = 0;
    for t in 0..9 {
        for s in 0..9 {
            let a = recon.view(t, s).crop(margin, margin, h - 2 * margin, w - 2 * margin).unwrap();
            let b = dense.view(t, s).crop(margin, margin, h - 2 * margin, w - 2 * margin).unwrap();
            if a.data() != b.data() {
                mismatched += 1;
            }
        }
    }
    let report = evaluate(&recon, &dense, 2, &EvalOptions { margin, dataset_id: "oracle".into() }).unwrap();
    let sentinel = report.views.iter().all(|v| v.identical && v.psnr_db == PSNR_SENTINEL_DB);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatched == 0 && sentinel && secs < 30.0,
        format!(
            "{mismatched} views differ on the interior, {} views scored at the {PSNR_SENTINEL_DB} dB sentinel: {sentinel}, {secs:.1}s",
            report.views.len()
        ),
    )
}

/// Mean |a - b| over the interior of two `[N, C, H, W]` graph values.
fn interior_l1(g: &Graph<f64>, a: lfcycle::autodiff::Var, b: lfcycle::autodiff::Var, margin: usize) -> f64 {
    let shape = g.shape(a).to_vec();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (av, bv) = (g.value(a).data(), g.value(b).data());
    let mut total = 0.0;
    let mut count = 0;
    for plane in 0..n * c {
        for y in margin..h - margin {
            for x in margin..w - margin {
                let i = (plane * h + y) * w + x;
                total += (av[i] - bv[i]).abs();
                count += 1;
            }
        }
    }
    total / count as f64
}

fn cycle_exactness() -> Outcome {
    let mut worst_cycle = 0.0f64;
    let mut worst_recon = 0.0f64;
    let mut checked = 0;
    for (d, seed) in [(1, 3), (2, 4)] {
        let sparse = subsample(&planar(d as f64, 9, 48, seed), 2).unwrap();
        for axis in [AngularAxis::Horizontal, AngularAxis::Vertical] {
            let oracle = TranslationOracle::new(d, axis);
            // Every shift in the loss graphs is at most 2d pixels.
            let margin = 2 * d as usize;
            for triplet in extract_triplets(&sparse, axis).triplets {
                let mut g = Graph::<f64>::new();
                let batch = TripletBatch::new(&mut g, &[&triplet]).unwrap();
                let cyc = cycle_reconstruct(&mut g, &batch, &oracle).unwrap();
                let wide = oracle.midpoint(&mut g, batch.left, batch.right, 2 * batch.spacing).unwrap();
                worst_cycle = worst_cycle.max(interior_l1(&g, cyc, batch.center, margin));
                worst_recon = worst_recon.max(interior_l1(&g, wide, batch.center, margin));
                checked += 1;
            }
        }
    }
    outcome(
        worst_cycle <= 1e-6 && worst_recon <= 1e-6,
        format!("{checked} triplets, worst cycle loss {worst_cycle:.2e}, worst reconstruction loss {worst_recon:.2e}"),
    )
}

struct SelfSupervisedRun {
    outcome: Outcome,
    baseline_path: PathBuf,
}

fn mean_psnr(h: &InterpolatorModel<f32>, v: &InterpolatorModel<f32>, held_out: &[(LightField, LightField)]) -> f64 {
    let plan = ReconstructionPlan { alpha: 2, order: CascadeOrder::HV, horizontal: h, vertical: v };
    let total: f64 = held_out
        .iter()
        .map(|(dense, sparse)| {
            let recon = reconstruct(sparse, &plan).unwrap();
            evaluate(&recon, dense, 2, &EvalOptions { margin: 4, ..Default::default() }).unwrap().mean_psnr_db
        })
        .sum();
    total / held_out.len() as f64
}

/// Interior mean absolute error of the horizontal model on sparse neighbours
/// whose content is displaced by an even number of pixels.
fn pair_error(model: &InterpolatorModel<f32>, dense: &LightField, sparse: &LightField) -> f64 {
    let mid = interpolate(sparse.view(0, 0), sparse.view(0, 1), model).unwrap();
    let (h, w) = mid.size();
    let m = 4;
    let a = mid.crop(m, m, h - 2 * m, w - 2 * m).unwrap();
    let b = dense.view(0, 1).crop(m, m, h - 2 * m, w - 2 * m).unwrap();
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs() as f64).sum::<f64>() / a.data().len() as f64
}

fn objective_ratio(r: &TrainReport, window: usize) -> f64 {
    let n = r.history.len();
    let initial = r.history[..10].iter().map(|x| x.total).sum::<f64>() / 10.0;
    let w = window.min(n);
    let last = r.history[n - w..].iter().map(|x| x.total).sum::<f64>() / w as f64;
    last / initial
}

fn self_supervised(workdir: &Path) -> SelfSupervisedRun {
    let started = Instant::now();
    let pretrain = PretrainConfig {
        arch: ArchConfig::new(vec![8, 16, 32], 9).unwrap(),
        iterations: 300,
        batch_size: 4,
        patch_size: 48,
        seed: 1,
        ..Default::default()
    };
    let baseline = pretrain_baseline(&pretrain).unwrap().model;
    let baseline_path = workdir.join("baseline.ckpt");
    save_checkpoint(&baseline, &baseline_path, "pretrained", 1, &[]).unwrap();

    let pairs: Vec<(LightField, LightField)> = [(1.0, 10), (2.0, 11), (1.0, 12), (2.0, 13)]
        .iter()
        .map(|&(d, seed)| {
            let dense = planar(d, 9, 64, seed);
            let sparse = subsample(&dense, 2).unwrap();
            (dense, sparse)
        })
        .collect();
    let (dense, sparse): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    // Ground truth is handed over only so the access counter can prove it
    // is never read.
    let data = TrainingData::with_ground_truth(sparse, dense).unwrap();
    let held_out: Vec<(LightField, LightField)> = [(1.0, 100), (2.0, 101)]
        .iter()
        .map(|&(d, seed)| {
            let dense = planar(d, 9, 64, seed);
            let sparse = subsample(&dense, 2).unwrap();
            (dense, sparse)
        })
        .collect();

    let window = 250;
    let config = TrainConfig {
        iterations: 1500,
        batch_size: 4,
        coarse_crop: 64,
        fine_crop: 48,
        desk_crops: (64, 48),
        scheduler: SchedulerConfig { window, ..Default::default() },
        mode: TrainMode::SelfSupervised,
        seed: 3,
        ..Default::default()
    };
    let (h, rh) = finetune(&baseline, &data, AngularAxis::Horizontal, &config).unwrap();
    let (v, rv) = finetune(&baseline, &data, AngularAxis::Vertical, &config).unwrap();
    let secs = started.elapsed().as_secs_f64();

    let before = mean_psnr(&baseline, &baseline, &held_out);
    let after = mean_psnr(&h, &v, &held_out);
    let (ratio_h, ratio_v) = (objective_ratio(&rh, window), objective_ratio(&rv, window));
    let reads = data.dense_reads();
    let pair_mae: Vec<String> =
        held_out.iter().map(|(d, s)| format!("{:.4}", pair_error(&h, d, s))).collect();
    let pass = after - before >= 3.0 && ratio_h <= 0.5 && ratio_v <= 0.5 && reads == 0 && secs < 600.0;
    let detail = format!(
        "held-out PSNR {before:.2} -> {after:.2} dB ({:+.2}), objective ratio H {:.0}% V {:.0}%, \
         dense reads {reads}, even-gap pair MAE [{}], {secs:.0}s",
        after - before,
        100.0 * ratio_h,
        100.0 * ratio_v,
        pair_mae.join(", ")
    );
    SelfSupervisedRun { outcome: outcome(pass, detail), baseline_path }
}

fn cli(args: &[&str]) -> i32 {
    lfcycle::cli::run(std::iter::once("lfcycle").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ablation(workdir: &Path, baseline: &Path) -> Outcome {
    let started = Instant::now();
    let mut dense = Vec::new();
    for (d, seed) in [("1", "20"), ("2", "21")] {
        let dir = workdir.join(format!("abl_dense_{seed}"));
        let code = cli(&["gen", "--disparity", d, "--grid", "9x9", "--size", "64x64", "--seed", seed, "--out", s(&dir)]);
        assert_eq!(code, 0);
        dense.push(dir.to_str().unwrap().to_owned());
    }
    let report_path = workdir.join("ablation_report.json");
    let abl_dir = workdir.join("ablation");
    let code = cli(&[
        "ablate",
        "--dense",
        &dense.join(","),
        "--alpha",
        "2",
        "--workdir",
        s(&abl_dir),
        "--report",
        s(&report_path),
        "--baseline",
        s(baseline),
        "--iters",
        "150",
        "--batch",
        "4",
        "--crop",
        "64",
        "--fine-crop",
        "48",
        "--margin",
        "4",
        "--seed",
        "5",
    ]);
    if code != 0 {
        return outcome(false, format!("ablate exited with {code}"));
    }
    let report: AblationReport = read_json(&report_path).unwrap();
    let complete = AblationMode::ALL.iter().all(|&m| report.mode(m).is_some_and(|r| r.mean_psnr_db.is_finite()));
    let table: Vec<String> = report.modes.iter().map(|m| format!("{} {:.2}", m.mode.name(), m.mean_psnr_db)).collect();
    let sup = report.mode(AblationMode::Supervised).map_or(f64::NAN, |m| m.mean_psnr_db);
    let pre = report.mode(AblationMode::Pretrained).map_or(f64::NAN, |m| m.mean_psnr_db);
    outcome(
        complete && sup >= pre,
        format!("{} modes [{}] dB, {:.0}s", report.modes.len(), table.join(", "), started.elapsed().as_secs_f64()),
    )
}

fn structure_laws() -> Outcome {
    let mut problems = Vec::new();
    for n in [2, 3, 5] {
        for alpha in [2, 4] {
            let expected = alpha * (n - 1) + 1;
            if dense_angular_size(n, alpha).unwrap() != expected {
                problems.push(format!("dense_angular_size({n}, {alpha})"));
            }
            let dense = planar(1.0, expected, 40, 9);
            let sparse = subsample(&dense, alpha).unwrap();
            let oh = TranslationOracle::new(1, AngularAxis::Horizontal);
            let ov = TranslationOracle::new(1, AngularAxis::Vertical);
            let recon =
                reconstruct(&sparse, &ReconstructionPlan { alpha, order: CascadeOrder::HV, horizontal: &oh, vertical: &ov })
                    .unwrap();
            if (recon.rows(), recon.cols()) != (expected, expected) {
                problems.push(format!("reconstruct extent for n={n}, alpha={alpha}"));
            }
            for t in 0..n {
                for s in 0..n {
                    if recon.view(alpha * t, alpha * s).data() != sparse.view(t, s).data() {
                        problems.push(format!("original ({t},{s}) altered for n={n}, alpha={alpha}"));
                    }
                }
            }
        }
    }
    let dense = planar(1.0, 9, 40, 9);
    let mut counts = Vec::new();
    for alpha in [2, 4] {
        let sparse = subsample(&dense, alpha).unwrap();
        let oh = TranslationOracle::new(1, AngularAxis::Horizontal);
        let ov = TranslationOracle::new(1, AngularAxis::Vertical);
        let recon =
            reconstruct(&sparse, &ReconstructionPlan { alpha, order: CascadeOrder::HV, horizontal: &oh, vertical: &ov }).unwrap();
        counts.push(evaluate(&recon, &dense, alpha, &EvalOptions::default()).unwrap().views.len());
    }
    if counts != [56, 72] {
        problems.push(format!("synthesized view counts {counts:?}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() { format!("6 (n, alpha) pairs, view counts {counts:?}") } else { problems.join("; ") },
    )
}

fn metric_oracles() -> Outcome {
    let a = Image::constant(32, 32, [0.25, 0.5, 0.75]).unwrap();
    let b = Image::new(32, 32, a.data().iter().map(|v| v + 1.0 / 255.0).collect()).unwrap();
    let p = psnr(&a, &b).unwrap();
    let noise = common::noise_image(32, 3);
    let identity = ssim(&noise, &noise).unwrap();
    let (x, y) = (0.2f64, 0.7f64);
    let c1 = SSIM_K1 * SSIM_K1;
    let closed = (2.0 * x * y + c1) / (x * x + y * y + c1);
    let cx = Image::constant(16, 16, [x as f32; 3]).unwrap();
    let cy = Image::constant(16, 16, [y as f32; 3]).unwrap();
    // The images hold f32 values; the closed form uses those exact values.
    let (xf, yf) = (x as f32 as f64, y as f32 as f64);
    let closed_f = (2.0 * xf * yf + c1) / (xf * xf + yf * yf + c1);
    let constant = ssim(&cx, &cy).unwrap();

    let dense = planar(2.0, 9, 48, 5);
    let sparse = subsample(&dense, 2).unwrap();
    let wrong_h = TranslationOracle::new(1, AngularAxis::Horizontal);
    let wrong_v = TranslationOracle::new(1, AngularAxis::Vertical);
    let recon = reconstruct(
        &sparse,
        &ReconstructionPlan { alpha: 2, order: CascadeOrder::HV, horizontal: &wrong_h, vertical: &wrong_v },
    )
    .unwrap();
    let report: EvalReport = evaluate(&recon, &dense, 2, &EvalOptions { margin: 2, ..Default::default() }).unwrap();
    let aggregates_exact = report.recomputed_means() == (report.mean_psnr_db, report.mean_ssim);

    let pass = (p - 48.13).abs() <= 0.01
        && (identity - 1.0).abs() <= 1e-12
        && (constant - closed_f).abs() <= 1e-9
        && aggregates_exact;
    outcome(
        pass,
        format!(
            "PSNR {p:.4} dB, SSIM identity {identity:.15}, constant SSIM {constant:.12} vs {closed:.12}, \
             aggregates recompute exactly: {aggregates_exact}"
        ),
    )
}

fn sha256(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn pipeline(root: &Path) -> Result<(String, String), String> {
    let p = |name: &str| root.join(name);
    let steps: Vec<Vec<String>> = vec![
        vec!["gen", "--disparity", "1", "--grid", "5x5", "--size", "32x32", "--seed", "11", "--out", s(&p("dense"))],
        vec!["subsample", "--in", s(&p("dense")), "--alpha", "2", "--out", s(&p("sparse"))],
        vec![
            "pretrain", "--out", s(&p("base.ckpt")), "--iters", "20", "--widths", "4,8", "--kernel", "5", "--patch", "32",
            "--batch", "2", "--seed", "3",
        ],
        vec![
            "finetune", "--in", s(&p("sparse")), "--baseline", s(&p("base.ckpt")), "--axis", "h", "--out", s(&p("h.ckpt")),
            "--iters", "10", "--batch", "2", "--crop", "32", "--fine-crop", "16", "--seed", "4",
        ],
        vec![
            "finetune", "--in", s(&p("sparse")), "--baseline", s(&p("base.ckpt")), "--axis", "v", "--out", s(&p("v.ckpt")),
            "--iters", "10", "--batch", "2", "--crop", "32", "--fine-crop", "16", "--seed", "4",
        ],
        vec![
            "synthesize", "--in", s(&p("sparse")), "--alpha", "2", "--model-h", s(&p("h.ckpt")), "--model-v",
            s(&p("v.ckpt")), "--out", s(&p("recon")),
        ],
        vec!["evaluate", "--recon", s(&p("recon")), "--gt", s(&p("dense")), "--alpha", "2", "--report", s(&p("report.json"))],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let code = cli(&args);
        if code != 0 {
            return Err(format!("`{}` exited with {code}", step[0]));
        }
    }
    load_lf(&p("recon")).map_err(|e| e.to_string())?;
    Ok((sha256(&p("report.json")), sha256(&p("h.ckpt"))))
}

fn reproducibility(workdir: &Path) -> Outcome {
    let runs: Vec<_> = ["run_a", "run_b"].iter().map(|r| pipeline(&workdir.join(r))).collect();
    match (&runs[0], &runs[1]) {
        (Ok((ra, ca)), Ok((rb, cb))) => outcome(
            ra == rb && ca == cb,
            format!("report sha256 {}… vs {}…, checkpoints equal: {}", &ra[..12], &rb[..12], ca == cb),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, e.clone()),
    }
}

/// Runs one criterion, turning a panic into a failure with its message.
fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

#[test]
fn acceptance() {
    let workdir = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let dir = workdir.path();
    results.push(("1 gradient suite", guarded(gradients)));
    results.push(("2 oracle end-to-end", guarded(oracle_end_to_end)));
    results.push(("3 cycle-consistency exactness", guarded(cycle_exactness)));
    let mut baseline = None;
    results.push((
        "4 self-supervised learning",
        guarded(|| {
            let run = self_supervised(dir);
            baseline = Some(run.baseline_path);
            run.outcome
        }),
    ));
    results.push((
        "5 ablation harness",
        match &baseline {
            Some(path) => guarded(|| ablation(dir, path)),
            None => outcome(false, "no baseline checkpoint from criterion 4"),
        },
    ));
    results.push(("6 structure laws", guarded(structure_laws)));
    results.push(("7 metric oracles", guarded(metric_oracles)));
    results.push(("8 reproducibility", guarded(|| reproducibility(dir))));

    println!();
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

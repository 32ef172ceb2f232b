use std::path::Path;

use lfcycle::io::{load_checkpoint, load_lf, read_json, read_report_csv, save_checkpoint};
use lfcycle::lightfield::Provenance;
use lfcycle::metrics::EvalReport;
use lfcycle::net::{ArchConfig, InterpolatorModel, ModelAxis};

fn cli(args: &[&str]) -> i32 {
    lfcycle::cli::run(std::iter::once("lfcycle").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_subsample_synthesize_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let gen = ["gen", "--scene", "planar", "--disparity", "2", "--grid", "9x9", "--size", "192x192", "--seed", "7"];
    assert_eq!(cli(&[&gen[..], &["--out", s(&p("dense"))]].concat()), 0);
    assert_eq!(cli(&["subsample", "--in", s(&p("dense")), "--alpha", "2", "--out", s(&p("sparse"))]), 0);
    let (sparse, meta) = load_lf(&p("sparse")).unwrap();
    assert_eq!((meta.rows, meta.cols), (5, 5));
    assert_eq!(sparse.provenance(), Provenance::Sparse { alpha: 2 });

    let model = InterpolatorModel::<f32>::new(ArchConfig::new(vec![4, 8], 5).unwrap(), 3).unwrap();
    save_checkpoint(&model, &p("m.ckpt"), "untrained", 3, &[]).unwrap();
    let code = cli(&[
        "synthesize", "--in", s(&p("sparse")), "--alpha", "2", "--model-h", s(&p("m.ckpt")), "--model-v",
        s(&p("m.ckpt")), "--order", "hv", "--out", s(&p("recon")),
    ]);
    assert_eq!(code, 0);
    let (recon, meta) = load_lf(&p("recon")).unwrap();
    assert_eq!((meta.rows, meta.cols), (9, 9));
    for t in 0..5 {
        for s in 0..5 {
            assert_eq!(recon.view(2 * t, 2 * s), sparse.view(t, s));
        }
    }

    let code = cli(&[
        "evaluate", "--recon", s(&p("recon")), "--gt", s(&p("dense")), "--alpha", "2", "--report", s(&p("r.json")),
        "--csv", s(&p("r.csv")), "--margin", "2",
    ]);
    assert_eq!(code, 0);
    let report: EvalReport = read_json(&p("r.json")).unwrap();
    assert_eq!(report.views.len(), 56);
    assert_eq!(report.metadata.dataset_id, "dense");
    let rows = read_report_csv(&p("r.csv")).unwrap();
    assert_eq!(rows.len(), 56);
    for (a, b) in rows.iter().zip(&report.views) {
        assert_eq!((a.t, a.s), (b.t, b.s));
        assert!((a.psnr_db - b.psnr_db).abs() < 1e-9 && (a.ssim - b.ssim).abs() < 1e-9);
    }

    assert_eq!(cli(&["epi", "--in", s(&p("recon")), "--axis", "h", "--line", "96", "--fixed", "4", "--out", s(&p("e.png"))]), 0);
    let epi = lfcycle::io::load_png(&p("e.png")).unwrap();
    assert_eq!(epi.size(), (9, 192));
}

#[test]
fn two_layer_and_grid_crop() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let code = cli(&[
        "gen", "--scene", "two-layer", "--disparity", "1", "--fg-disparity", "-1", "--grid", "11x13", "--size", "48x40",
        "--texture", "checker", "--out", s(&p("lf")),
    ]);
    assert_eq!(code, 0);
    let (lf, meta) = load_lf(&p("lf")).unwrap();
    assert_eq!((lf.rows(), lf.cols(), lf.view_size()), (11, 13, (40, 48)));
    assert_eq!(meta.source.unwrap()["scene"], "two-layer");
    assert_eq!(cli(&["subsample", "--in", s(&p("lf")), "--alpha", "4", "--crop-grid", "9x9", "--out", s(&p("sp"))]), 0);
    let (sp, meta) = load_lf(&p("sp")).unwrap();
    assert_eq!((sp.rows(), sp.cols()), (3, 3));
    assert_eq!(sp.view(2, 2), lf.view(8, 8));
    assert_eq!(meta.source.unwrap()["grid_crop"]["origin"], "top-left");
}

#[test]
fn finetune_tags_the_axis_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    assert_eq!(cli(&["gen", "--disparity", "1", "--grid", "5x5", "--size", "32x32", "--out", s(&p("d"))]), 0);
    assert_eq!(cli(&["subsample", "--in", s(&p("d")), "--alpha", "2", "--out", s(&p("sp"))]), 0);
    let code = cli(&["pretrain", "--out", s(&p("b.ckpt")), "--iters", "2", "--widths", "4,8", "--kernel", "5", "--patch", "16", "--batch", "1"]);
    assert_eq!(code, 0);
    let (dense, sparse, base) = (p("d"), p("sp"), p("b.ckpt"));
    for (mode, extra) in [("self", vec![]), ("no-cycle", vec![]), ("supervised", vec!["--gt", s(&dense)])] {
        let out = p(&format!("{mode}.ckpt"));
        let report = p(&format!("{mode}.json"));
        let mut args = vec![
            "finetune", "--in", s(&sparse), "--baseline", s(&base), "--axis", "v", "--out", s(&out), "--iters",
            "3", "--batch", "1", "--crop", "32", "--fine-crop", "16", "--mode", mode, "--report", s(&report),
        ];
        args.extend(extra);
        assert_eq!(cli(&args), 0, "{mode}");
        let (model, header) = load_checkpoint(&out).unwrap();
        assert_eq!(model.axis(), ModelAxis::Vertical);
        assert!(header.provenance.ends_with(mode), "{}", header.provenance);
        let r: serde_json::Value = read_json(&report).unwrap();
        assert_eq!(r["history"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn invalid_combinations_are_usage_errors() {
    assert_eq!(cli(&["gen", "--disparity", "1", "--fg-disparity", "2", "--out", "/tmp/never"]), 2);
    assert_eq!(cli(&["gen", "--scene", "two-layer", "--disparity", "1", "--out", "/tmp/never"]), 2);
    assert_eq!(cli(&["subsample", "--in", "x", "--alpha", "1", "--out", "y"]), 2);
    assert_eq!(cli(&["finetune", "--in", "a", "--baseline", "b", "--axis", "d", "--out", "c"]), 2);
    assert_eq!(cli(&["finetune", "--in", "a", "--baseline", "b", "--axis", "h", "--out", "c", "--gt", "g"]), 2);
    assert_eq!(cli(&["synthesize", "--in", "/nonexistent", "--alpha", "2", "--model-h", "a", "--model-v", "b", "--out", "c"]), 1);
}

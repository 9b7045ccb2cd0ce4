//! End-to-end runs of the `dpl` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dpl_lab::formats::load_image;

fn dpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dpl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    dpl(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_with(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

fn gen(dir: &Path, count: &str, size: &str) {
    ok(&["gen", "--count", count, "--size", size, "--seed", "4", "--out", s(dir)]);
}

#[test]
fn gen_writes_images_previews_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    gen(&a, "3", "32");
    gen(&b, "3", "32");
    assert_eq!(files_with(&a, ".dplf").len(), 3);
    assert_eq!(files_with(&a, ".pgm").len(), 3);
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    for f in files_with(&a, ".dplf") {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn usage_errors_exit_two() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x");
    assert_eq!(code(&["gen", "--count", "0", "--out", s(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    gen(&out, "1", "16");
    let noisy = t.path().join("n");
    assert_eq!(code(&["corrupt", "--noise", "poisson", "--in", s(&out), "--out", s(&noisy)]), 2);
    assert_eq!(code(&["denoise", "--algo", "redcnn", "--in", s(&out), "--out", s(&noisy)]), 2);
    assert_eq!(code(&["denoise", "--algo", "median", "--in", s(&t.path().join("missing")), "--out", s(&noisy)]), 2);
}

#[test]
fn corrupt_defaults_and_identity() {
    let t = tempfile::tempdir().unwrap();
    let clean = t.path().join("clean");
    gen(&clean, "2", "16");
    let noisy = t.path().join("noisy");
    ok(&["corrupt", "--noise", "gaussian", "--in", s(&clean), "--out", s(&noisy)]);
    let pairs = fs::read_to_string(noisy.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 3);
    assert!(pairs.contains("var=0.005"), "{pairs}");

    let same = t.path().join("same");
    ok(&["corrupt", "--noise", "gaussian", "--param", "var=0", "--in", s(&clean), "--out", s(&same)]);
    for f in files_with(&clean, ".dplf") {
        let stem = f.trim_end_matches(".dplf");
        let a = load_image(&clean.join(&f)).unwrap();
        let b = load_image(&same.join(format!("{stem}_gaussian.dplf"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn denoise_records_timings_and_eval_scores() {
    let t = tempfile::tempdir().unwrap();
    let clean = t.path().join("clean");
    gen(&clean, "3", "32");
    let noisy = t.path().join("noisy");
    ok(&["corrupt", "--noise", "speckle", "--seed", "2", "--in", s(&clean), "--out", s(&noisy)]);
    let den = t.path().join("den");
    ok(&["denoise", "--algo", "median", "--in", s(&noisy), "--out", s(&den)]);
    let timings = fs::read_to_string(den.join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 4);
    assert_eq!(files_with(&den, ".dplf").len(), 3);

    let csv = t.path().join("scores.csv");
    ok(&["eval", "--pairs", s(&den.join("pairs.csv")), "--csv", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("image_id,algorithm,noise,mse,psnr_db,ssim\n"));
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    assert!(text.lines().skip(1).all(|l| l.contains(",median,speckle,")));
}

#[test]
fn train_is_reproducible_and_checks_shapes() {
    let t = tempfile::tempdir().unwrap();
    let clean = t.path().join("clean");
    gen(&clean, "4", "16");
    let noisy = t.path().join("noisy");
    ok(&["corrupt", "--noise", "gaussian", "--in", s(&clean), "--out", s(&noisy)]);
    let data = noisy.join("pairs.csv");
    let train = |out: &Path| {
        ok(&[
            "train", "--data", s(&data), "--out", s(out), "--iters", "3", "--depth", "1", "--base", "4",
            "--val-every", "1",
        ])
    };
    let (r1, r2) = (t.path().join("r1"), t.path().join("r2"));
    train(&r1);
    train(&r2);
    assert_eq!(fs::read(r1.join("loss.csv")).unwrap(), fs::read(r2.join("loss.csv")).unwrap());
    assert_eq!(fs::read_to_string(r1.join("loss.csv")).unwrap().lines().count(), 4);
    assert_eq!(fs::read(r1.join("model.dplw")).unwrap(), fs::read(r2.join("model.dplw")).unwrap());

    let csv = t.path().join("model_scores.csv");
    ok(&["eval", "--pairs", s(&data), "--csv", s(&csv), "--model", s(&r1.join("model.dplw"))]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 8 + 2);

    // 16 px is not divisible by 2^5.
    assert_eq!(code(&["train", "--data", s(&data), "--out", s(&t.path().join("r3")), "--depth", "5", "--base", "2"]), 3);
    assert_eq!(code(&["train", "--model", "gan", "--data", s(&data), "--out", s(&t.path().join("r4"))]), 2);
}

#[test]
fn bench_writes_tables_and_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("bench.ini");
    fs::write(
        &cfg,
        "[bench]\nout = run\nseed = 5\ncount = 3\nsize = 32\nnoises = gaussian, awgn\nalgorithms = noisy, mean, wiener\n",
    )
    .unwrap();
    ok(&["bench", "--config", s(&cfg)]);
    let out = t.path().join("run");
    let psnr = fs::read_to_string(out.join("results_psnr.csv")).unwrap();
    let mut lines = psnr.lines();
    assert_eq!(lines.next(), Some("algorithm,awgn,gaussian"));
    assert_eq!(lines.count(), 3);
    let first: Vec<Vec<u8>> = ["results_psnr.csv", "results_ssim.csv", "details.csv"]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
    ok(&["bench", "--config", s(&cfg), "--out", s(&t.path().join("again"))]);
    for (i, f) in ["results_psnr.csv", "results_ssim.csv", "details.csv"].iter().enumerate() {
        assert_eq!(first[i], fs::read(t.path().join("again").join(f)).unwrap(), "{f}");
    }
    fs::write(&cfg, "[bench]\nalgorithms = noisy, redcnn\n").unwrap();
    assert_eq!(code(&["bench", "--config", s(&cfg)]), 2);
}

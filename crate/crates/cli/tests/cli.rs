use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use liftcs::image::{load_image, save_image, Image};
use liftcs::matched::MatchedDesign;
use liftcs::sensing::Measurements;
use tempfile::TempDir;

fn liftcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftcs"))
        .args(args)
        .output()
        .expect("run liftcs")
}

fn ok(args: &[&str]) -> String {
    let out = liftcs(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Low-frequency 64x64 card, quantized so it survives a PGM round trip.
fn smooth(dir: &Path) -> PathBuf {
    let img = Image::from_fn(64, 64, |r, c| {
        let (y, x) = (r as f64 / 64.0, c as f64 / 64.0);
        let blob = (-((x - 0.35).powi(2) + (y - 0.6).powi(2)) / 0.03).exp();
        (110.0
            + 50.0 * (std::f64::consts::TAU * (1.1 * y + 0.3)).sin() * (std::f64::consts::TAU * 0.7 * x).cos()
            + 60.0 * blob
            + 20.0 * x)
            .round()
    });
    let path = dir.join("smooth.pgm");
    save_image(&img, &path).unwrap();
    path
}

fn camera() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/camera.pgm")
}

fn psnr_of(stdout: &str) -> f64 {
    let tail = stdout.rsplit("psnr ").next().unwrap();
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn sense_writes_round_half_n_measurements() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    let prefix = dir.path().join("s");
    let out = ok(&[
        "sense",
        "--image",
        p(&img),
        "--ratio",
        "0.5",
        "--matrix",
        "pci",
        "--seed",
        "7",
        "--out",
        p(&prefix),
    ]);
    assert!(out.contains("M = 2048, N = 4096"), "{out}");
    let meas = Measurements::from_bytes(&fs::read(prefix.with_extension("meas")).unwrap()).unwrap();
    assert_eq!(meas.values.len(), 2048);
    assert!(fs::read_to_string(prefix.with_extension("mask"))
        .unwrap()
        .starts_with("PCIMASK 64 64 2048"));
}

#[test]
fn full_ratio_measures_every_pixel_in_vec_order() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    ok(&["sense", "--image", p(&img), "--ratio", "1.0"]);
    let meas = Measurements::from_bytes(&fs::read(img.with_extension("meas")).unwrap()).unwrap();
    assert_eq!(meas.values, load_image(&img).unwrap().vec());
}

#[test]
fn equal_seeds_give_identical_files() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    for matrix in ["pci", "gaussian"] {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for prefix in [&a, &b] {
            ok(&[
                "sense",
                "--image",
                p(&img),
                "--ratio",
                "0.3",
                "--matrix",
                matrix,
                "--seed",
                "5",
                "--out",
                p(prefix),
            ]);
        }
        for ext in ["meas", "mask"] {
            let (fa, fb) = (a.with_extension(ext), b.with_extension(ext));
            if fa.exists() || fb.exists() {
                assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{matrix} {ext}");
            }
        }
    }
}

#[test]
fn full_ratio_reconstruction_is_bit_exact() {
    let dir = TempDir::new().unwrap();
    let img = camera();
    let prefix = dir.path().join("cam");
    ok(&["sense", "--image", p(&img), "--ratio", "1", "--out", p(&prefix)]);
    let rec = dir.path().join("rec.pgm");
    ok(&[
        "reconstruct",
        "--meas",
        p(&prefix.with_extension("meas")),
        "--wavelet",
        "db4",
        "--out",
        p(&rec),
    ]);
    assert_eq!(fs::read(&rec).unwrap(), fs::read(&img).unwrap());
}

#[test]
fn l_pyramid_is_at_least_as_good_as_r_pyramid() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    ok(&["sense", "--image", p(&img), "--ratio", "0.5", "--seed", "2"]);
    let meas = img.with_extension("meas");
    let run = |strategy: &str| {
        let out = dir.path().join(format!("{strategy}.pgm"));
        psnr_of(&ok(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--wavelet",
            "bior53",
            "--strategy",
            strategy,
            "--out",
            p(&out),
            "--reference",
            p(&img),
        ]))
    };
    let (l, r) = (run("l-pyramid"), run("r-pyramid"));
    assert!(l >= r, "L {l} dB vs R {r} dB");
}

#[test]
fn auto_design_reports_coarse_and_final_psnr_and_appends_csv() {
    let dir = TempDir::new().unwrap();
    let img = camera();
    let prefix = dir.path().join("cam");
    ok(&[
        "sense",
        "--image",
        p(&img),
        "--ratio",
        "0.4",
        "--seed",
        "3",
        "--out",
        p(&prefix),
    ]);
    let csv = dir.path().join("report.csv");
    let out = ok(&[
        "reconstruct",
        "--meas",
        p(&prefix.with_extension("meas")),
        "--wavelet",
        "matched",
        "--auto-design",
        "--out",
        p(&dir.path().join("rec.png")),
        "--reference",
        p(&img),
        "--csv",
        p(&csv),
    ]);
    assert!(out.contains("coarse psnr") && out.contains("final psnr"), "{out}");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], liftcs::experiment::CSV_HEADER);
    assert!(
        lines[1].starts_with("camera,0.4,pci,matched,l-pyramid,3,0,"),
        "{}",
        lines[1]
    );
    assert_eq!(lines[1].split(',').count(), 11);
    assert!(load_image(dir.path().join("rec.png")).is_ok());
}

#[test]
fn ramp_design_predicts_legall_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let ramp = dir.path().join("ramp.pgm");
    save_image(&Image::from_fn(32, 32, |r, c| (3 * r + 2 * c + 10) as f64), &ramp).unwrap();
    ok(&["sense", "--image", p(&ramp), "--ratio", "1"]);
    let design_path = dir.path().join("ramp.design");
    let out = ok(&[
        "design",
        "--meas",
        p(&ramp.with_extension("meas")),
        "--out",
        p(&design_path),
    ]);
    let design = MatchedDesign::from_text(&fs::read_to_string(&design_path).unwrap()).unwrap();
    for chain in [&design.col_chain, &design.row_chain] {
        for t in chain.stages()[0].predict() {
            assert!((t - 0.5).abs() < 1e-6, "{t}");
        }
    }
    assert_eq!(MatchedDesign::from_text(&design.to_text()).unwrap(), design);
    assert!(out.contains("h1 = [-0.5000 1.0000 -0.5000]"), "{out}");
}

#[test]
fn printed_h1_mirrors_the_predict_taps() {
    let dir = TempDir::new().unwrap();
    let img = camera();
    let prefix = dir.path().join("cam");
    ok(&[
        "sense",
        "--image",
        p(&img),
        "--ratio",
        "0.2",
        "--seed",
        "7",
        "--out",
        p(&prefix),
    ]);
    let design_path = dir.path().join("cam.design");
    let out = ok(&[
        "design",
        "--meas",
        p(&prefix.with_extension("meas")),
        "--out",
        p(&design_path),
    ]);
    let design = MatchedDesign::from_text(&fs::read_to_string(&design_path).unwrap()).unwrap();
    for (chain, bank) in [
        (&design.col_chain, &design.col_filterbank),
        (&design.row_chain, &design.row_filterbank),
    ] {
        let t = chain.stages()[0].predict();
        assert_eq!(t.len(), 2);
        assert_eq!(bank.h1.trimmed().taps, vec![-t[1], 1.0, -t[0]]);
        let line = format!("h1 = [{:.4} 1.0000 {:.4}]", -t[1], -t[0]);
        assert!(out.contains(&line), "{line} not in {out}");
    }
    assert_eq!(design.meta.seed, 7);
    assert!((design.meta.ratio - 0.2).abs() < 1e-3);
}

#[test]
fn experiment_writes_csv_and_stats() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("sweep.conf");
    fs::write(
        &config,
        format!(
            "image = {}\nratio = 0.5\nmatrix = pci\nwavelet = bior53, matched\ntrials = 2\ncrop = 32\noutput = {}\n",
            camera().display(),
            dir.path().join("out.csv").display()
        ),
    )
    .unwrap();
    ok(&["experiment", "--config", p(&config), "--quiet"]);
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(dir.path().join("out.stats.csv").exists());
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    let missing = dir.path().join("nope.pgm");
    assert_eq!(liftcs(&["sense", "--ratio", "0.5"]).status.code(), Some(1));
    assert_eq!(liftcs(&["bogus"]).status.code(), Some(1));
    assert_eq!(liftcs(&["--help"]).status.code(), Some(0));
    assert_eq!(
        liftcs(&["sense", "--image", p(&missing), "--ratio", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        liftcs(&["sense", "--image", p(&img), "--ratio", "1.5"]).status.code(),
        Some(1)
    );
    ok(&["sense", "--image", p(&img), "--ratio", "0.5"]);
    let meas = img.with_extension("meas");
    let rec = dir.path().join("r.pgm");
    let code = |args: &[&str]| liftcs(args).status.code();
    assert_eq!(
        code(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--wavelet",
            "matched",
            "--out",
            p(&rec)
        ]),
        Some(1)
    );
    assert_eq!(
        code(&["reconstruct", "--meas", p(&meas), "--wavelet", "haar", "--out", p(&rec)]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--mask",
            p(&missing),
            "--out",
            p(&rec)
        ]),
        Some(1)
    );
    fs::write(&meas, b"garbage").unwrap();
    assert_eq!(code(&["reconstruct", "--meas", p(&meas), "--out", p(&rec)]), Some(1));
}

#[test]
fn unconverged_strict_solve_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let img = smooth(dir.path());
    ok(&["sense", "--image", p(&img), "--ratio", "0.3"]);
    let (rec, meas) = (dir.path().join("r.pgm"), img.with_extension("meas"));
    let args = ["reconstruct", "--meas", p(&meas), "--max-iters", "2", "--out", p(&rec)];
    assert_eq!(liftcs(&args).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(liftcs(&strict).status.code(), Some(2));
    assert!(rec.exists());
}

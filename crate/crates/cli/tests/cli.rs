use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use mvcolor::ingest::load_dataset;
use mvcolor::optimizer::FreezeSet;
use mvcolor::report::{parse_params, FitReport};
use mvcolor::restore::{restore_image, RestoredImage};
use mvcolor::{ObservationSet, RestoreOptions};

fn mvcolor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvcolor"))
        .args(args)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = mvcolor(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    mvcolor(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn two_plane(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["simulate", "--preset", "two_plane", "--out", s(&data)]);
    data
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(code(&["simulate", "--preset", "reef", "--out", out]), 1);
    assert_eq!(code(&["restore", "--no-such-flag"]), 1);
    assert_eq!(code(&["restore", "--out", out]), 1);
    assert_eq!(code(&["restore", "--dataset", out, "--out", out, "--freeze", "J,beta,B,gamma"]), 1);
    assert_eq!(code(&["restore", "--dataset", "/nonexistent", "--out", out]), 2);
    let data = two_plane(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&["restore", "--dataset", s(&data), "--out", s(&run), "--targets", "9"]), 2);
    assert_eq!(code(&["restore", "--dataset", s(&data), "--out", s(&run), "--lr", "1e300", "--steps", "3"]), 3);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn simulate_is_deterministic_and_echoes_scene() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--preset", "corridor", "--views", "3", "--seed", "5", "--out", s(&a)]);
    ok(&["simulate", "--preset", "corridor", "--views", "3", "--seed", "5", "--out", s(&b)]);
    assert_eq!(files(&a), files(&b));
    assert_eq!(load_dataset(&a).unwrap().len(), 3);
    // the echoed scene file regenerates the same tree
    let c = dir.path().join("c");
    ok(&["simulate", "--scene", s(&a.join("scene.toml")), "--out", s(&c)]);
    assert_eq!(files(&a), files(&c));
}

#[test]
fn restore_outputs_and_config_echo_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_plane(dir.path());
    let run = dir.path().join("run");
    ok(&["restore", "--dataset", s(&data), "--out", s(&run), "--steps", "40", "--window", "1"]);
    for name in ["frame_0001", "frame_0002"] {
        for ext in ["png", "f32", "fit.txt", "obs"] {
            assert!(run.join("restored").join(format!("{name}.{ext}")).exists(), "{name}.{ext}");
        }
    }
    let timing = std::fs::read_to_string(run.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 3);
    let before = files(&run.join("restored"));
    ok(&["restore", "--config", s(&run.join("run_config.toml"))]);
    assert_eq!(files(&run.join("restored")), before);
}

#[test]
fn window_zero_is_self_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_plane(dir.path());
    let run = dir.path().join("run");
    ok(&["restore", "--dataset", s(&data), "--out", s(&run), "--targets", "1", "--window", "0", "--steps", "30"]);
    let dataset = load_dataset(&data).unwrap();
    let alone = vec![dataset[0].clone()];
    let opts = RestoreOptions {
        adam: mvcolor::AdamConfig {
            steps: 30,
            ..Default::default()
        },
        ..RestoreOptions::default()
    };
    let expected = restore_image(&alone, 1, &opts).unwrap();
    let bytes = std::fs::read(run.join("restored/frame_0001.f32")).unwrap();
    let got = RestoredImage::from_f32_bytes(1, 80, 60, &bytes).unwrap();
    assert_eq!(bytes, expected.restored.to_f32_bytes());
    assert_eq!(got.mask, expected.restored.mask);
    let obs = ObservationSet::load_cache(&run.join("restored/frame_0001.obs")).unwrap();
    assert_eq!(obs.len(), dataset[0].depth.valid_count());
}

#[test]
fn frozen_truth_gives_weighted_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_plane(dir.path());
    let run = dir.path().join("run");
    let params = data.join("truth/params.txt");
    ok(&[
        "restore",
        "--dataset",
        s(&data),
        "--out",
        s(&run),
        "--targets",
        "1",
        "--freeze",
        "beta,B,gamma",
        "--init-params",
        s(&params),
    ]);
    let truth = parse_params(&std::fs::read_to_string(&params).unwrap()).unwrap();
    let report = FitReport::parse(&std::fs::read_to_string(run.join("restored/frame_0001.fit.txt")).unwrap()).unwrap();
    assert_eq!(report.params, truth);
    let obs = ObservationSet::load_cache(&run.join("restored/frame_0001.obs")).unwrap();
    let j = RestoredImage::from_f32_bytes(1, 80, 60, &std::fs::read(run.join("restored/frame_0001.f32")).unwrap()).unwrap();
    for p in obs.observed_pixels() {
        let p = p as usize;
        for c in 0..3 {
            let (mut num, mut den) = (0.0, 0.0);
            for k in obs.segment(p) {
                let z = obs.distance[k];
                let a = (-truth.beta[c] * z).exp();
                num += a * (obs.intensity[k][c] - truth.veil[c] * (1.0 - (-truth.gamma[c] * z).exp()));
                den += a * a;
            }
            // the dump is f32
            assert_abs_diff_eq!(j.image.data[p][c], num / den, epsilon = 1e-4);
        }
    }
    assert!(FreezeSet::parse("beta,B,gamma").unwrap() == FreezeSet::PARAMS);
}

#[test]
fn evaluate_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_plane(dir.path());
    let truth = data.join("truth");
    let out = ok(&["evaluate", "--pred", s(&truth), "--truth", s(&truth)]);
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in rows {
        let want = match r[2] {
            "psnr" => "inf",
            "ssim" => "1",
            "ciede2000" => "0",
            other => panic!("{other}"),
        };
        assert_eq!(r[3], want);
    }
}

#[test]
fn evaluate_restored_beats_unrestored_and_needs_charts_for_psi() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--preset", "flat_chart", "--views", "4", "--out", s(&data)]);
    let run = dir.path().join("run");
    ok(&["restore", "--dataset", s(&data), "--out", s(&run)]);
    let truth = data.join("truth");
    let psnr_of = |pred: &Path, raw: bool| -> Vec<f64> {
        let mut args = vec!["evaluate", "--pred", s(pred), "--truth", s(&truth), "--metrics", "psnr"];
        if raw {
            args.push("--raw");
        }
        let text = String::from_utf8(ok(&args).stdout).unwrap();
        assert!(text.starts_with(if raw { "# values: raw float" } else { "# values: normalized 8-bit" }));
        text.lines().skip(2).map(|l| l.rsplit('\t').next().unwrap().parse().unwrap()).collect()
    };
    let restored = psnr_of(&run.join("restored"), true);
    let unrestored = psnr_of(&data.join("images"), false);
    for (r, u) in restored.iter().zip(&unrestored) {
        assert!(r > u, "{r} <= {u}");
    }
    let pred = run.join("restored");
    assert_eq!(code(&["evaluate", "--pred", s(&pred), "--metrics", "psi_bar"]), 1);
    assert_eq!(code(&["evaluate", "--pred", s(&pred), "--charts", s(&dir.path().join("none.txt"))]), 1);
    let out = ok(&["evaluate", "--pred", s(&pred), "--charts", s(&data.join("charts.txt")), "--raw"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("psi_bar")).count(), 4);
}

#[test]
fn stitch_and_diagnose_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--preset", "corridor", "--views", "4", "--out", s(&data)]);
    let run = dir.path().join("run");
    ok(&["restore", "--dataset", s(&data), "--out", s(&run), "--steps", "20"]);
    ok(&["stitch", "--dataset", s(&data), "--out", s(&dir.path().join("st"))]);
    assert!(dir.path().join("st/stitched/frame_0004.png").exists());
    let diag = dir.path().join("diag");
    ok(&["diagnose", "--dataset", s(&data), "--restored", s(&run), "--out", s(&diag), "--tracks", "3"]);
    for f in ["frame_0001.residuals.tsv", "frame_0004.tracks.tsv", "variance.tsv", "timing.tsv"] {
        assert!(diag.join(f).exists(), "{f}");
    }
    let variance = std::fs::read_to_string(diag.join("variance.tsv")).unwrap();
    assert_eq!(variance.lines().count(), 5);
    let tracks = std::fs::read_to_string(diag.join("frame_0004.tracks.tsv")).unwrap();
    assert_eq!(tracks.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect::<std::collections::BTreeSet<_>>().len(), 3);
}

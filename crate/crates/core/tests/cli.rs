use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use adaptive_mvs::cli::{main_with_args, EXIT_NUMERICAL, EXIT_OK, EXIT_PARSE_IO, EXIT_USAGE};
use adaptive_mvs::io::read_scene;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["adaptive-mvs"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let scene = dir.join(format!("scene{seed}"));
    assert_eq!(
        run(&[
            "synth",
            "--out",
            scene.to_str().unwrap(),
            "--seed",
            seed,
            "--views",
            "3"
        ]),
        EXIT_OK
    );
    scene
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["reconstruct", "--scene", "x"]), EXIT_USAGE);
    assert_eq!(run(&["synth", "--out", "x", "--views", "many"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["--version"]), EXIT_OK);
}

#[test]
fn invalid_config_values_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "1");
    let out = dir.path().join("out");
    for bad in [
        ["--planes", "1,2"],
        ["--temperatures", "-1"],
        ["--adia-mode", "cubic"],
        ["--alpha", "nan"],
    ] {
        let code = run(&["reconstruct", "--scene", s(&scene), "--out", s(&out), bad[0], bad[1]]);
        assert_eq!(code, EXIT_USAGE, "{bad:?}");
    }
    // out-of-range values in a config file are usage errors too
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "depth_min = -5\ndepth_max = 40\n").unwrap();
    assert_eq!(
        run(&[
            "reconstruct",
            "--scene",
            s(&scene),
            "--out",
            s(&out),
            "--config",
            s(&cfg)
        ]),
        EXIT_USAGE
    );
}

#[test]
fn unknown_config_key_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "10");
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "reconstruct",
            "--scene",
            s(&scene),
            "--out",
            s(&out),
            "--config",
            s(&cfg)
        ]),
        EXIT_PARSE_IO
    );
}

#[test]
fn missing_and_malformed_inputs_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["reconstruct", "--scene", "/nonexistent/scene", "--out", s(&out)]),
        EXIT_PARSE_IO
    );
    assert_eq!(
        run(&[
            "reconstruct",
            "--scene",
            s(dir.path()),
            "--out",
            s(&out),
            "--config",
            "/nonexistent/c.txt"
        ]),
        EXIT_PARSE_IO
    );
    let scene = synth(dir.path(), "2");
    fs::write(scene.join("cams").join("00000001_cam.txt"), "extrinsic\n1 0 0\n").unwrap();
    assert_eq!(
        run(&["reconstruct", "--scene", s(&scene), "--out", s(&out)]),
        EXIT_PARSE_IO
    );
}

#[test]
fn eval_does_not_create_missing_directories() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "3");
    let csv = dir.path().join("missing").join("m.csv");
    assert_eq!(
        run(&["eval", "--scene", s(&scene), "--range", "20:40", "--out", s(&csv)]),
        EXIT_PARSE_IO
    );
    assert!(!csv.parent().unwrap().exists());
}

#[test]
fn numerical_failures_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "4");
    // keep only the first view: no source views are left to match against
    for i in 1..3 {
        fs::remove_file(scene.join("cams").join(format!("{i:08}_cam.txt"))).unwrap();
    }
    fs::remove_file(scene.join("pair.txt")).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["reconstruct", "--scene", s(&scene), "--out", s(&out)]),
        EXIT_NUMERICAL
    );
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "5");
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "# coarse\nplanes = 8,32,8,4\nseed = 9\n").unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "reconstruct",
        "--scene",
        s(&scene),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--seed",
        "12",
        "--references",
        "0",
    ]);
    assert_eq!(code, EXIT_OK);
    let resolved = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(resolved.contains("planes = 8,32,8,4"), "{resolved}");
    assert!(resolved.contains("seed = 12"), "{resolved}");
    // untouched keys keep their defaults
    assert!(resolved.contains("reg_passes = 1"), "{resolved}");
    assert!(manifest(&out).contains("seed = 12"));
}

#[test]
fn reconstruct_fuse_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "6");
    let rec = dir.path().join("rec");
    assert_eq!(run(&["reconstruct", "--scene", s(&scene), "--out", s(&rec)]), EXIT_OK);
    for i in 0..3 {
        assert!(rec.join("depth").join(format!("{i:08}.pfm")).is_file());
        assert!(rec.join("confidence").join(format!("{i:08}.pfm")).is_file());
    }
    let m = manifest(&rec);
    for key in [
        "command = reconstruct",
        "metrics_csv = metrics.csv",
        "config = config.txt",
        "time.total_ms",
        "output.depth/00000000.pfm",
    ] {
        assert!(m.contains(key), "missing {key} in\n{m}");
    }
    let metrics = fs::read_to_string(rec.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,scene,view,value\n"));
    assert!(metrics.contains("inliers,scene6,00000000,"));

    let fused = dir.path().join("fused");
    assert_eq!(
        run(&["fuse", "--scene", s(&scene), "--depth", s(&rec), "--out", s(&fused)]),
        EXIT_OK
    );
    assert!(fused.join("cloud.ply").is_file());

    let csv = dir.path().join("eval.csv");
    let code = run(&[
        "eval",
        "--scene",
        s(&scene),
        "--depth",
        s(&rec),
        "--cloud",
        s(&fused.join("cloud.ply")),
        "--range",
        "20:40",
        "--out",
        s(&csv),
    ]);
    assert_eq!(code, EXIT_OK);
    let table = fs::read_to_string(&csv).unwrap();
    for key in [
        "aog[20:40],scene6,00000000,",
        "epe,scene6,mean,",
        "pnumd,scene6,mean,",
        "f_score,scene6,all,",
    ] {
        assert!(table.contains(key), "missing {key} in\n{table}");
    }
    let f: f64 = table
        .lines()
        .find(|l| l.starts_with("f_score"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(f > 50.0, "f-score {f}");
}

#[test]
fn ablate_reports_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "7");
    let out = dir.path().join("ab");
    assert_eq!(
        run(&["ablate", "--scene", s(&scene), "--mode", "no_adia", "--out", s(&out)]),
        EXIT_OK
    );
    let table = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(table.contains("default/pnumd,"));
    assert!(table.contains("no_adia/pnumd,"));
    assert!(manifest(&out).contains("metrics_csv = metrics.csv"));
}

#[test]
fn synth_is_reproducible_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "8");
    let b = dir.path().join("again");
    assert_eq!(run(&["synth", "--out", s(&b), "--seed", "8", "--views", "3"]), EXIT_OK);
    let outputs = |d: &Path| -> Vec<String> {
        manifest(d)
            .lines()
            .filter(|l| l.starts_with("output."))
            .map(String::from)
            .collect()
    };
    assert_eq!(outputs(&a), outputs(&b));
    let scene = read_scene(&a).unwrap();
    assert_eq!(scene.len(), 3);
    assert!(scene.gt_depths.is_some());
}

#[test]
fn repeated_runs_match_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "9");
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        assert_eq!(
            run(&[
                "reconstruct",
                "--scene",
                s(&scene),
                "--out",
                s(r),
                "--references",
                "0,2"
            ]),
            EXIT_OK
        );
    }
    for f in [
        "depth/00000000.pfm",
        "depth/00000002.pfm",
        "confidence/00000002.pfm",
        "metrics.csv",
        "config.txt",
    ] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }
    assert!(!r1.join("depth/00000001.pfm").exists());
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_adaptive-mvs");
    let status = Command::new(bin).arg("reconstruct").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = Command::new(bin)
        .args(["reconstruct", "--scene", "/nonexistent", "--out", "/nonexistent/out"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_PARSE_IO));
    assert!(String::from_utf8_lossy(&status.stderr).contains("error"));
}

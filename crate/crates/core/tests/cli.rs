// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use clap::Parser;
use sncpd::cli::{
    cmd_evaluate, load_dataset, run, Cli, OutputDir, RunConfig, EXIT_IO, EXIT_USAGE,
    EXIT_VERIFY_FAILED, TEST_TRACE_FILE, VAL_TRACE_FILE,
};
use sncpd::detector::{DetectionTrace, Statistic};

const SMALL: &str = "\
channels = 3
length = 1200
n_cps = 9
window = 20
margins = 20
hidden = 8
depth = 3
code_size = 4
epochs = 1
train_stride = 20
val_stride = 20
verify_pairs = 40
verify_inversions = 4
lr_samples = 6
power_sizes = 10,20
power_trials = 10
dynamics_segment = 80
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn sncpd(args: &[&str]) -> i32 {
    run(std::iter::once("sncpd").chain(args.iter().copied()))
}

#[test]
fn precedence_is_defaults_file_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "window = 30\nseed = 5\nhidden = 12\n");

    let only_file = Cli::try_parse_from(["sncpd", "--config", &cfg_path, "train"])
        .unwrap()
        .run_config()
        .unwrap();
    assert_eq!(
        (only_file.window, only_file.seed, only_file.hidden),
        (30, 5, 12)
    );
    assert_eq!(only_file.depth, RunConfig::default().depth);

    let with_set = Cli::try_parse_from([
        "sncpd",
        "--config",
        &cfg_path,
        "--set",
        "window=40",
        "train",
    ])
    .unwrap()
    .run_config()
    .unwrap();
    assert_eq!((with_set.window, with_set.seed), (40, 5));

    let all = Cli::try_parse_from([
        "sncpd",
        "--config",
        &cfg_path,
        "--set",
        "window=40",
        "--set",
        "seed=6",
        "--window",
        "45",
        "--seed",
        "7",
        "train",
    ])
    .unwrap()
    .run_config()
    .unwrap();
    assert_eq!((all.window, all.seed, all.hidden), (45, 7, 12));
}

#[test]
fn config_text_round_trips_through_canonical_form() {
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL).unwrap();
    let mut again = RunConfig::default();
    again.apply_text(&cfg.canonical()).unwrap();
    assert_eq!(cfg.canonical(), again.canonical());
    assert_eq!(cfg.hash(), again.hash());
    cfg.seed += 1;
    assert_ne!(cfg.hash(), again.hash());
}

#[test]
fn config_errors_name_the_line() {
    let mut cfg = RunConfig::default();
    let err = cfg
        .apply_text("window = 10\n\nnot_a_key = 3\n")
        .unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    assert!(cfg.apply_text("window = ten\n").is_err());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    assert_eq!(sncpd(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(sncpd(&["--window", "x", "train"]), EXIT_USAGE);
    assert_eq!(
        sncpd(&[
            "--out",
            &out,
            "--statistic",
            "mmd",
            "--set",
            "embedding=vector",
            "detect"
        ]),
        EXIT_USAGE
    );
    assert_eq!(
        sncpd(&["--out", &out, "--set", "margins=0", "train"]),
        EXIT_USAGE
    );
    assert_eq!(
        sncpd(&["--out", &out, "experiment", "sideways"]),
        EXIT_USAGE
    );
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let missing = dir.path().join("nope.ckpt").display().to_string();
    assert_eq!(
        sncpd(&["--out", &out, "detect", "--checkpoint", &missing]),
        EXIT_IO
    );
    assert_eq!(
        sncpd(&["--out", &out, "--config", &missing, "train"]),
        EXIT_IO
    );
}

#[test]
fn evaluate_scores_perfect_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL).unwrap();
    let data = load_dataset(&cfg).unwrap();
    assert!(!data.val.change_points().is_empty() && !data.test.change_points().is_empty());

    let perfect = |len: usize, cps: &[usize]| {
        let idx: Vec<usize> = (0..len).collect();
        let stats = idx
            .iter()
            .map(|i| if cps.contains(i) { 1.0 } else { 0.0 })
            .collect();
        DetectionTrace::new(idx, stats).unwrap()
    };
    let traces = dir.path().join("traces");
    std::fs::create_dir_all(&traces).unwrap();
    let val = perfect(data.val.len(), data.val.change_points());
    let test = perfect(data.test.len(), data.test.change_points());
    std::fs::write(traces.join(VAL_TRACE_FILE), val.to_csv()).unwrap();
    std::fs::write(traces.join(TEST_TRACE_FILE), test.to_csv()).unwrap();

    let out = OutputDir::create(&dir.path().join("out"), "evaluate", &cfg).unwrap();
    let results = cmd_evaluate(&cfg, &out, Some(&traces)).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].val_f1, 1.0);
    assert_eq!(results[0].test.f1, 1.0);
    assert!(results[0].threshold > 0.0 && results[0].threshold < 1.0);
    let csv = std::fs::read_to_string(out.path("f1.csv")).unwrap();
    assert!(csv.starts_with("margin,threshold"));
    assert!(out.path("f1.csv.manifest").exists());
}

#[test]
fn verify_fails_for_an_uncapped_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &format!("{SMALL}model = ts2vec\n"));
    let out = dir.path().join("out").display().to_string();
    assert_eq!(sncpd(&["--config", &cfg_path, "--out", &out, "train"]), 0);
    assert_eq!(
        sncpd(&["--config", &cfg_path, "--out", &out, "verify"]),
        EXIT_VERIFY_FAILED
    );
    let summary = std::fs::read_to_string(Path::new(&out).join("verify.txt")).unwrap();
    assert!(summary.contains("FAIL"), "{summary}");
}

#[test]
fn pipeline_writes_manifests_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), SMALL);
    let run_all = |name: &str| {
        let out = dir.path().join(name).display().to_string();
        for cmd in [
            &["train"][..],
            &["detect"],
            &["evaluate"],
            &["verify"],
            &["experiment", "dynamics"],
            &["experiment", "rejection"],
        ] {
            let mut args = vec!["--config", cfg_path.as_str(), "--out", out.as_str()];
            args.extend_from_slice(cmd);
            let code = sncpd(&args);
            assert!(
                code == 0 || (cmd[0] == "verify" && code == EXIT_VERIFY_FAILED),
                "{cmd:?} exited {code}"
            );
        }
        out
    };
    let a = run_all("a");
    let b = run_all("b");

    let mut files: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    for name in [
        "model.ckpt",
        "loss.csv",
        "f1.csv",
        "dynamics.csv",
        "rejection.csv",
        "power.csv",
    ] {
        assert!(files.iter().any(|f| f == name), "missing {name}");
        assert!(
            files.iter().any(|f| *f == format!("{name}.manifest")),
            "missing manifest of {name}"
        );
    }
    for f in &files {
        let x = std::fs::read(Path::new(&a).join(f)).unwrap();
        let y = std::fs::read(Path::new(&b).join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let manifest = std::fs::read_to_string(Path::new(&a).join("loss.csv.manifest")).unwrap();
    assert!(manifest.contains("command = train") && manifest.contains("seed = 0"));
}

#[test]
fn statistic_flag_parses() {
    let cli = Cli::try_parse_from([
        "sncpd",
        "--statistic",
        "mmd",
        "--margin",
        "5",
        "--margin",
        "9",
        "detect",
    ])
    .unwrap();
    let cfg = cli.run_config().unwrap();
    assert_eq!(cfg.statistic, Statistic::Mmd);
    assert_eq!(cfg.margins, vec![5, 9]);
}

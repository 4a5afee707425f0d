mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::tempdir;
use revisit_lab::analyzer::PLOT_FILES;
use revisit_lab::pipeline::{self, run_pipeline_with, Manifest, PipelineConfig, Schedule, StageStatus, STAGE_NAMES};

const SMALL: &str = r#"
n_users = 60
n_pins = 300
n_days = 20
candidates_per_request = 6
feature_dim = 4
rng_seed = 5

[pipeline]
eval_days = 5
k = 3

[train]
learning_rate = 0.05
batch_size = 64
epochs = 1
hidden = [8, 4]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_revisit-lab"));
    c.env_remove(revisit_lab::THREADS_ENV);
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(out: &Path) -> Manifest {
    Manifest::from_toml_str(&std::fs::read_to_string(out.join(pipeline::MANIFEST_FILE)).unwrap()).unwrap()
}

fn digests(m: &Manifest) -> Vec<(String, String)> {
    let mut v: Vec<_> = m
        .stages
        .iter()
        .flat_map(|s| &s.outputs)
        .map(|d| (d.path.clone(), d.sha256.clone()))
        .collect();
    v.sort();
    v
}

#[test]
fn help_lists_subcommands() {
    let dir = tempdir();
    let out = run(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "generate",
        "attribute",
        "features",
        "assemble",
        "train",
        "evaluate",
        "analyze",
        "pipeline",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    let out = run(&["pipeline", "--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--seed"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempdir();
    assert_eq!(run(&["pipeline", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["train", "--epochs", "many"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempdir();
    let out = run(&["generate", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_users = -3\n").unwrap();
    let out = run(&["generate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let config = write_config(dir.path(), "");
    let out = run(&["train", "--config", &config, "--out-dir", "nothing-here"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = bin()
        .args(["generate", "--config", &config])
        .env(revisit_lab::THREADS_ENV, "lots")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(revisit_lab::THREADS_ENV));
}

#[test]
fn pipeline_writes_manifest_and_plots() {
    let dir = tempdir();
    let config = write_config(dir.path(), "");
    let out = run(
        &[
            "pipeline",
            "--config",
            &config,
            "--out-dir",
            "out",
            "--plot-data",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    let m = manifest(&out_dir);
    assert_eq!(m.gen_seed, 9);
    assert_eq!(m.train_seed, 9);
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, STAGE_NAMES);
    assert!(m.stages.iter().all(|s| s.status == StageStatus::Ok));
    m.verify_dag().unwrap();
    for d in m.stages.iter().flat_map(|s| s.outputs.iter()) {
        let bytes = pipeline::sha256_file(&out_dir.join(&d.path)).unwrap();
        assert_eq!(bytes, d.sha256, "{}", d.path);
    }
    for name in PLOT_FILES {
        assert!(out_dir.join(pipeline::ANALYSIS_DIR).join(name).is_file(), "{name}");
    }
    let report = std::fs::read_to_string(out_dir.join(pipeline::EVAL_REPORT_FILE)).unwrap();
    assert!(report.starts_with("task,metric,value,n_requests,n_skipped,lift_pct"));
}

#[test]
fn training_can_be_disabled() {
    let dir = tempdir();
    let config = write_config(dir.path(), "");
    let first = run(&["pipeline", "--config", &config, "--out-dir", "a"], dir.path());
    assert_eq!(first.status.code(), Some(0));
    let model = dir.path().join("a").join(pipeline::MODEL_FILE);

    let text = std::fs::read_to_string(&config).unwrap().replace(
        "[pipeline]\n",
        &format!("[pipeline]\ntrain = false\nmodel = {:?}\n", model.to_string_lossy()),
    );
    std::fs::write(&config, text).unwrap();
    let second = run(&["pipeline", "--config", &config, "--out-dir", "b"], dir.path());
    assert_eq!(
        second.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    let m = manifest(&dir.path().join("b"));
    assert_eq!(m.stage("train").unwrap().status, StageStatus::Skipped);
    assert_eq!(m.stage("evaluate").unwrap().status, StageStatus::Ok);
    let report = |d: &str| std::fs::read(dir.path().join(d).join(pipeline::EVAL_REPORT_FILE)).unwrap();
    assert_eq!(report("a"), report("b"));
}

#[test]
fn failed_stage_leaves_partial_manifest() {
    let dir = tempdir();
    let log = dir.path().join("broken.csv");
    std::fs::write(&log, "not,an,event,log\n").unwrap();
    let config = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&config).unwrap().replace(
        "[pipeline]\n",
        &format!("[pipeline]\nevent_log = {:?}\n", log.to_string_lossy()),
    );
    std::fs::write(&config, text).unwrap();
    let out = run(&["pipeline", "--config", &config, "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&dir.path().join("out"));
    assert_eq!(m.stages.len(), STAGE_NAMES.len());
    assert_eq!(m.stage("generate").unwrap().status, StageStatus::Failed);
    assert!(m.stage("generate").unwrap().error.is_some());
    assert!(m.stages[1..].iter().all(|s| s.status == StageStatus::Skipped));
}

#[test]
fn subcommands_reproduce_the_pipeline() {
    let dir = tempdir();
    let config = write_config(dir.path(), "");
    let full = run(&["pipeline", "--config", &config, "--out-dir", "full"], dir.path());
    assert_eq!(full.status.code(), Some(0));
    for sub in ["generate", "features", "attribute", "assemble", "train", "evaluate"] {
        let out = run(&[sub, "--config", &config, "--out-dir", "steps"], dir.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{sub}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = run(
        &["analyze", "--config", &config, "--out-dir", "steps", "--plot-data"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for file in [
        pipeline::EVENTS_FILE,
        pipeline::PERF_FILE,
        pipeline::REVISIT_LABELS_FILE,
        pipeline::TRAIN_SET_FILE,
        pipeline::MODEL_FILE,
        pipeline::EVAL_REPORT_FILE,
    ] {
        let a = std::fs::read(dir.path().join("full").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("steps").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let model = dir.path().join("full").join(pipeline::MODEL_FILE);
    let model = model.to_str().unwrap();
    let out = run(
        &[
            "evaluate",
            "--config",
            &config,
            "--out-dir",
            "steps",
            "--model",
            model,
            "--baseline",
            model,
            "--out",
            "cmp.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let cmp = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(cmp
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",0.000000") || l.ends_with(",undefined")));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempdir();
    let config = write_config(dir.path(), "");
    for (threads, out) in [("1", "t1"), ("4", "t4")] {
        let o = bin()
            .args(["pipeline", "--config", &config, "--out-dir", out, "--plot-data"])
            .env(revisit_lab::THREADS_ENV, threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    let a = manifest(&dir.path().join("t1"));
    let b = manifest(&dir.path().join("t4"));
    assert_eq!(digests(&a), digests(&b));
}

#[test]
fn stage_schedule_does_not_change_outputs() {
    let dir = tempdir();
    let mut runs = Vec::new();
    for (i, schedule) in [
        Schedule::Concurrent,
        Schedule::Sequential([2, 0, 1]),
        Schedule::Sequential([1, 2, 0]),
    ]
    .into_iter()
    .enumerate()
    {
        let mut config = PipelineConfig::from_toml_str(SMALL).unwrap();
        config.pipeline.out_dir = dir.path().join(format!("s{i}"));
        runs.push(digests(&run_pipeline_with(&config, schedule).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

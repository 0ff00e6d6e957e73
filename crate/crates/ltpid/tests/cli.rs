use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ltpid::commands::{cmd_identify, cmd_simulate, cmd_sweep, cmd_validate};
use ltpid::config::{presets, ExperimentConfig};
use ltpid::experiment::{aggregate, median, BatchReport, System};
use ltpid::formats::{self, Diagnostics, ModelFile, PhasorFile};

fn ltpid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltpid")).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn example_b_simulation_writes_sixteen_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = ltpid(&["simulate", "--preset", "example-b", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["trials"][0]["trajectories"].as_array().unwrap();
    assert_eq!(files.len(), 16);
    for f in files {
        let body = fs::read_to_string(out.join(f.as_str().unwrap())).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,u1"));
        assert_eq!(lines.count(), 512);
    }
}

#[test]
fn identical_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::example_a_noisy();
    config.trials = 2;
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("run");
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let o = ltpid(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", text(&o));
            let files = files_under(&out);
            fs::remove_dir_all(&out).unwrap();
            files
        })
        .collect();
    assert_eq!(runs[0].len(), 2 * 16 + 1);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn invalid_configurations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();

    let o = ltpid(&["simulate", "--preset", "example-a", "--p", "11", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("N >= 4p"), "{}", text(&o));

    let o = ltpid(&["simulate", "--preset", "example-a", "--trials", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let mut short = presets::example_b();
    short.trajectories.length = 400;
    let cfg = write_config(dir.path(), &short);
    let o = ltpid(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("less than 2 periods"), "{}", text(&o));

    fs::write(dir.path().join("typo.json"), r#"{"system": {"example_b": {}}, "p": 25, "grid": {"samples_per_period": 256}, "trajectories": {"count": 1, "length": 512}, "seed": 1, "trails": 3}"#).unwrap();
    let o = ltpid(&["simulate", "--config", dir.path().join("typo.json").to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    assert!(!Path::new(out).exists());
}

#[test]
fn rank_deficit_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::example_a();
    config.trajectories.columns = Some(104);
    let cfg = write_config(dir.path(), &config);
    let o = ltpid(&["identify", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("id").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = text(&o);
    assert!(msg.contains("rank 104 of 105 (deficit 1)"), "{msg}");
    assert!(msg.contains("L = (n+m)(2p+1) = 105"), "{msg}");
}

#[test]
fn noiseless_identification_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("id");
    let o = ltpid(&["identify", "--preset", "example-a", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("PASS"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("identify.json")).unwrap()).unwrap();
    assert!(summary["phasor_error_pct"].as_f64().unwrap() < 1e-3);
    let model: ModelFile = formats::read_json(&out.join("model.json")).unwrap();
    assert_eq!(model.p, 10);
    assert_eq!(model.diagnostics.rank, 105);
    assert!(model.diagnostics.error_bound_m.is_some());
    assert!(out.join("frames_00.csv").exists());

    let v = dir.path().join("val");
    let o = ltpid(&[
        "validate",
        "--preset",
        "example-a",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--out",
        v.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(v.join("overlay.csv").exists());
}

fn diagnostics() -> Diagnostics {
    Diagnostics {
        residual: 0.0,
        rank: 0,
        singular_values: Vec::new(),
        hermitian_defect: 0.0,
        error_bound_m: None,
        max_column_residual: 0.0,
        condition_number: 1.0,
        ill_conditioned: false,
    }
}

fn truth_model(config: &ExperimentConfig) -> ModelFile {
    let system = System::from_config(&config.system).unwrap();
    ModelFile {
        p: config.p,
        a: PhasorFile::from_matrix(&system.a),
        b: system.b.as_ref().map(PhasorFile::from_matrix),
        diagnostics: diagnostics(),
    }
}

#[test]
fn exact_model_is_accepted_and_zeroed_model_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = presets::example_a();
    let exact = dir.path().join("exact.json");
    formats::write_json(&exact, &truth_model(&config)).unwrap();
    let report = cmd_validate(&exact, &config, None, &dir.path().join("v1")).unwrap();
    assert!(report.accepted);
    assert!(report.value_pct.unwrap() <= 1e-3);

    let mut zero = truth_model(&config);
    zero.a.phasors.clear();
    if let Some(b) = &mut zero.b {
        b.phasors.clear();
    }
    let zeroed = dir.path().join("zero.json");
    formats::write_json(&zeroed, &zero).unwrap();
    let o = ltpid(&[
        "validate",
        "--preset",
        "example-a",
        "--model",
        zeroed.to_str().unwrap(),
        "--out",
        dir.path().join("v2").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("REJECTED"));
}

#[test]
fn recorded_trajectory_falls_back_to_nrmse() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::example_a();
    config.trials = 1;
    let manifest = cmd_simulate(&config, &dir.path().join("sim")).unwrap();
    let recorded = dir.path().join("sim").join(&manifest.trials[0].trajectories[0]);
    let model = dir.path().join("model.json");
    formats::write_json(&model, &truth_model(&config)).unwrap();
    let report = cmd_validate(&model, &config, Some(&recorded), &dir.path().join("v")).unwrap();
    assert_eq!(report.criterion, "trajectory_nrmse");
    assert_eq!(report.notices.len(), 1);
    assert!(report.accepted, "{report:?}");
    assert!(report.aggregate_nrmse_pct.unwrap() < 1e-6);
}

#[test]
fn batch_aggregate_matches_per_trial_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = ltpid(&["batch", "--preset", "example-a-noisy", "--trials", "5", "--workers", "3", "--out", out.to_str().unwrap()]);
    assert!(text(&o).contains("5 trials"), "{}", text(&o));
    let output: serde_json::Value = serde_json::from_slice(&fs::read(out.join("batch.json")).unwrap()).unwrap();
    let report: BatchReport = serde_json::from_value(output["report"].clone()).unwrap();
    assert_eq!(report.aggregate, aggregate(&report.trials));
    let errors: Vec<f64> = report.trials.iter().filter_map(|t| t.error_pct).collect();
    assert_eq!(report.aggregate.median_pct, median(&errors));
    let seeds: std::collections::BTreeSet<u64> = report.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds.len(), 5);
}

#[test]
fn low_order_fit_succeeds_but_sweep_flags_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::example_b();
    config.p = 2;
    config.trajectories.count = 4;
    let (summary, model) = cmd_identify(&config, &[], dir.path()).unwrap();
    assert!(summary.informative);
    assert_eq!(model.p, 2);
    let sweep = cmd_sweep(&config, 2, dir.path()).unwrap();
    assert_eq!(sweep.entries.len(), 2);
    assert!(sweep.entries.iter().all(|e| !e.decayed));
    assert_eq!(sweep.chosen, None);
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn identification_from_trajectory_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = presets::example_a();
    let manifest = cmd_simulate(&config, &dir.path().join("sim")).unwrap();
    let files: Vec<PathBuf> = manifest.trials[0]
        .trajectories
        .iter()
        .map(|f| dir.path().join("sim").join(f))
        .collect();
    let (from_files, _) = cmd_identify(&config, &files, &dir.path().join("a")).unwrap();
    let (simulated, _) = cmd_identify(&config, &[], &dir.path().join("b")).unwrap();
    assert_eq!(from_files.phasor_error_pct, simulated.phasor_error_pct);
    assert_eq!(from_files.rank, 105);
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_match_presets() {
    for name in presets::NAMES {
        let mut shipped = ExperimentConfig::load(&configs_dir().join(format!("{name}.json"))).unwrap();
        shipped.output = presets::by_name(name).unwrap().output;
        assert_eq!(shipped, presets::by_name(name).unwrap(), "{name}");
    }
}

#[test]
fn phasor_file_system_is_identified() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::load(&configs_dir().join("mathieu/config.json")).unwrap();
    let (summary, model) = cmd_identify(&config, &[], dir.path()).unwrap();
    assert!(summary.phasor_error_pct.unwrap() < 1e-6);
    assert!(model.b.is_none());
}

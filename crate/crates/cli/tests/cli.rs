use std::path::Path;
use std::process::{Command, Output};

fn irfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irfield")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = irfield(args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn bad_flags_and_configs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&irfield(&["train", "--bogus"])), 1);
    assert_eq!(code(&irfield(&["no-such-command"])), 1);
    assert_eq!(code(&irfield(&["noise-study", "--methods", "wiener,magic", "--out", path(&out)])), 1);

    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"field": {"taps": 64}, "unknown_key": 1}"#).unwrap();
    assert_eq!(code(&irfield(&["noise-study", "--config", path(&cfg), "--out", path(&out)])), 1);
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(code(&irfield(&["train", "--config", path(&cfg), "--out", path(&out)])), 1);
    assert_eq!(code(&irfield(&["train", "--taps", "0", "--out", path(&out)])), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.irml");
    let out = tmp.path().join("o");
    assert_eq!(code(&irfield(&["report", "--model", path(&missing), "--out", path(&out)])), 2);
}

#[test]
fn help_and_version_exit_with_zero() {
    assert_eq!(code(&irfield(&["--help"])), 0);
    assert_eq!(code(&irfield(&["--version"])), 0);
    assert_eq!(code(&irfield(&["render", "--help"])), 0);
}

#[test]
fn zero_step_training_writes_an_untrained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(&["train", "--steps", "0", "--azimuths", "3", "--elevations", "2", "--taps", "64", "--out", path(&out)]);
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let model = irfield::model_io::load_model(&out.join("model.irml")).unwrap();
    assert_eq!(model.model.num_taps, 64);
    assert!(json(&out.join("metrics.json")).get("timing").is_some());
}

#[test]
fn gradcheck_passes_and_records_its_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    ok(&["gradcheck", "--instances", "4", "--seed", "3", "--out", path(&out)]);
    let v = json(&out.join("gradcheck.json"));
    assert_eq!(v["pass"], true);
    assert!(v["report"]["max_rel_error"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn noise_study_emits_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"field": {"taps": 64}, "nlms_len": 4096}"#).unwrap();
    let out = tmp.path().join("n");
    ok(&[
        "noise-study", "--config", path(&cfg), "--snr", "0,-10,-20,-30", "--methods", "all", "--steps", "3",
        "--out", path(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("noise_study.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "snr_db,method,mean_sdr_db,std_sdr_db");
    assert_eq!(lines.count(), 16);
    let cfg = &json(&out.join("metrics.json"))["config"];
    assert_eq!(cfg["field"]["taps"], 64);
    assert_eq!(cfg["field"]["azimuth_count"], 4);
    assert_eq!(cfg["train"]["steps"], 3);
}

#[test]
fn interp_study_rejects_counts_beyond_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("i");
    assert_eq!(code(&irfield(&["interp-study", "--counts", "72,400", "--out", path(&out)])), 1);
}

#[test]
fn baselines_write_estimates() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["wiener", "nlms"] {
        let out = tmp.path().join(name);
        ok(&[name, "--taps", "64", "--snr", "-5", "--out", path(&out)]);
        let est = irfield::wav::read_wav(&out.join(format!("{name}_estimate.wav"))).unwrap();
        assert_eq!(est.len(), 64);
        assert!(json(&out.join("metrics.json"))["mean_sdr_db"].is_number());
    }
}

#[test]
fn gen_data_train_eval_report_render_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let field = ["--azimuths", "4", "--elevations", "3", "--taps", "64"];
    let gen = d.join("gen");
    ok(&[&["gen-data", "--snr", "0", "--out", path(&gen)][..], &field].concat());
    for f in ["taps.f32", "positions.csv", "sweep.wav", "observed.f32", "noise_amplitude.f32", "metrics.json"] {
        assert!(gen.join(f).exists(), "{f}");
    }
    let set = irfield::model_io::read_dataset(&gen.join("taps.f32"), &gen.join("positions.csv"), 48_000).unwrap();
    assert_eq!(set.len(), 12);

    let train = d.join("train");
    ok(&[&["train", "--steps", "30", "--hidden", "16", "--layers", "3", "--out", path(&train)][..], &field].concat());
    let model = train.join("model.irml");
    assert_eq!(std::fs::read_to_string(train.join("train_log.csv")).unwrap().lines().count(), 31);

    let eval = d.join("eval");
    ok(&[&["eval", "--model", path(&model), "--out", path(&eval)][..], &field].concat());
    assert_eq!(std::fs::read_to_string(eval.join("eval.csv")).unwrap().lines().count(), 13);

    let report = d.join("report");
    ok(&["report", "--model", path(&model), "--calls", "3", "--out", path(&report)]);
    let r = json(&report.join("report.json"));
    assert_eq!(r["report"]["raw_float_count"], 7_776_000);
    assert!(r["report"]["compression_percent"].as_str().unwrap().ends_with('%'));

    let traj = d.join("traj.csv");
    std::fs::write(&traj, "time_s,x,y,z\n0,1,0,0\n0.05,0,1,0\n").unwrap();
    let render = d.join("render");
    ok(&[
        "render", "--model", path(&model), "--input", path(&gen.join("sweep.wav")), "--trajectory", path(&traj),
        "--frame-size", "256", "--out", path(&render),
    ]);
    let src = irfield::wav::read_wav(&gen.join("sweep.wav")).unwrap();
    let out = irfield::wav::read_wav(&render.join("render.wav")).unwrap();
    assert_eq!(out.channels.len(), 2);
    assert_eq!(out.len(), src.len() + 63);

    std::fs::write(&traj, "time_s,x,y,z\n1,0,0,0\n0.5,0,0,0\n").unwrap();
    let o = irfield(&[
        "render", "--model", path(&model), "--input", path(&gen.join("sweep.wav")), "--trajectory", path(&traj),
        "--out", path(&render),
    ]);
    assert_eq!(code(&o), 1);
}

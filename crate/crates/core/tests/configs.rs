use irfield::gradcheck::GradCheckConfig;
use irfield::studies::{InterpStudyConfig, Method, NoiseStudyConfig};
use irfield::synth::NoiseKind;
use irfield::train::{LossKind, LrSchedule, TrainConfig};

#[test]
fn defaults_round_trip_through_json() {
    let t = TrainConfig::default();
    assert_eq!(serde_json::from_str::<TrainConfig>(&serde_json::to_string(&t).unwrap()).unwrap(), t);
    let n = NoiseStudyConfig::default();
    assert_eq!(serde_json::from_str::<NoiseStudyConfig>(&serde_json::to_string(&n).unwrap()).unwrap(), n);
    let i = InterpStudyConfig::default();
    assert_eq!(serde_json::from_str::<InterpStudyConfig>(&serde_json::to_string(&i).unwrap()).unwrap(), i);
    let g = GradCheckConfig::default();
    assert_eq!(serde_json::from_str::<GradCheckConfig>(&serde_json::to_string(&g).unwrap()).unwrap(), g);
}

#[test]
fn partial_configs_fill_defaults() {
    let cfg: NoiseStudyConfig = serde_json::from_str(
        r#"{"field": {"taps": 64}, "methods": ["wiener", "mlp_noise_robust"], "noise_kind": "dependent",
            "train": {"steps": 10, "schedule": {"kind": "constant"}}}"#,
    )
    .unwrap();
    assert_eq!(cfg.field.taps, 64);
    assert_eq!(cfg.methods, vec![Method::Wiener, Method::MlpNoiseRobust]);
    assert_eq!(cfg.noise_kind, NoiseKind::Dependent);
    assert_eq!(cfg.train.steps, 10);
    assert_eq!(cfg.train.schedule, LrSchedule::Constant);
    assert_eq!(cfg.train.loss, LossKind::L2);
    assert_eq!(cfg.snr_db, NoiseStudyConfig::default().snr_db);
}

#[test]
fn unknown_fields_are_rejected() {
    assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 10}"#).is_err());
    assert!(serde_json::from_str::<NoiseStudyConfig>(r#"{"field": {"tap": 64}}"#).is_err());
    assert!(serde_json::from_str::<InterpStudyConfig>(r#"{"train": {"spectral": {"hops": 1}}}"#).is_err());
}

use std::fs;
use std::path::Path;
use std::process::Command;

use infodensity::cli::{self, Measure, RunConfig, InfoDensityField};
use infodensity::ingest::{read_wide_csv, write_wide_csv};
use infodensity::synth::{generate, generate_modalities, SynthSpec};
use tempfile::TempDir;

const LONG_CSV: &str = "\
timestamp,sensor_id,modality,value
2024-01-01T00:00:00Z,a,traffic,10
2024-01-01T00:00:00Z,b,traffic,1
2024-01-01T00:15:00Z,a,traffic,12
2024-01-01T00:15:00Z,b,traffic,3
2024-01-01T00:30:00Z,a,traffic,NaN
2024-01-01T00:30:00Z,b,traffic,2
2024-01-01T00:45:00Z,a,traffic,14
2024-01-01T00:45:00Z,b,traffic,5
";

fn write_synth(dir: &Path, spec: &SynthSpec) -> std::path::PathBuf {
    let (m, _) = generate(spec).unwrap();
    let path = dir.join("field.csv");
    write_wide_csv(&m, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn quick_config(input: &Path, out: &Path) -> RunConfig {
    let mut c = RunConfig { input: Some(input.to_path_buf()), output_dir: out.to_path_buf(), k: 3, ..RunConfig::default() };
    c.train.max_epochs = 3;
    c.train.patience = 2;
    c
}

#[test]
fn ingest_long_csv_writes_matrix_and_log() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("long.csv");
    fs::write(&input, LONG_CSV).unwrap();
    let mut c = RunConfig { input: Some(input), input_format: cli::InputFormat::Long, output_dir: tmp.path().join("out"), ..RunConfig::default() };
    let (m, log) = cli::cmd_ingest(&c).unwrap();
    assert_eq!(log.rows_read, 8);
    assert_eq!(log.rejected, 1);
    // the 00:30 row lost sensor a and is dropped
    assert_eq!(m.n_rows(), 3);
    let first = fs::read(tmp.path().join("out/matrix.csv")).unwrap();
    let log_bytes = fs::read(tmp.path().join("out/ingest_log.json")).unwrap();
    assert!(String::from_utf8_lossy(&log_bytes).contains("config_hash"));
    cli::cmd_ingest(&c).unwrap();
    assert_eq!(first, fs::read(tmp.path().join("out/matrix.csv")).unwrap());
    assert_eq!(log_bytes, fs::read(tmp.path().join("out/ingest_log.json")).unwrap());
    let reread = read_wide_csv(first.as_slice()).unwrap();
    assert_eq!(reread.sensor_ids(), &["a".to_string(), "b".to_string()]);

    c.sensors = Some(vec!["a".into(), "ghost".into()]);
    let err = cli::cmd_ingest(&c).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert!(err.to_string().contains("ghost"));
}

#[test]
fn idfield_writes_both_measures() {
    let tmp = TempDir::new().unwrap();
    let input = write_synth(tmp.path(), &SynthSpec { samples: 2000, ..SynthSpec::default() });
    let c = quick_config(&input, &tmp.path().join("out"));
    match cli::cmd_idfield(&c, Measure::Angle).unwrap() {
        InfoDensityField::Angle(f) => assert_eq!(f.sensor_ids.len(), 12),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(cli::cmd_idfield(&c, Measure::Mi).unwrap(), InfoDensityField::Mi(_)));
    let long = fs::read_to_string(tmp.path().join("out/field_angle.csv")).unwrap();
    assert_eq!(long.lines().next().unwrap(), "sensor_a,sensor_b,omega_deg,tau");
    assert_eq!(long.lines().count(), 1 + 144);
    assert!(fs::read_to_string(tmp.path().join("out/field_mi.json")).unwrap().contains("mutual_information_nats"));
}

#[test]
fn pipeline_report_shape() {
    let tmp = TempDir::new().unwrap();
    let input = write_synth(tmp.path(), &SynthSpec { samples: 2000, ..SynthSpec::default() });
    let c = quick_config(&input, &tmp.path().join("out"));
    let report = cli::cmd_pipeline(&c).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert!(report.sufficiency.is_none());
    let table = fs::read_to_string(tmp.path().join("out/evaluation_k3.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "virtual_sensor_id,physical_sensor_id,mae,r2,nmae");
    assert_eq!(lines.len(), 1 + 9 + 1);
    assert!(lines[10].starts_with("Average Performance,"));
}

#[test]
fn pipeline_sweep_reports_sufficiency() {
    let tmp = TempDir::new().unwrap();
    let input = write_synth(tmp.path(), &SynthSpec { samples: 2000, ..SynthSpec::default() });
    let c = RunConfig { k_sweep: vec![1, 2], ..quick_config(&input, &tmp.path().join("out")) };
    let report = cli::cmd_pipeline(&c).unwrap();
    assert_eq!(report.sweep.iter().map(|p| p.k).collect::<Vec<_>>(), vec![1, 2]);
    let s = report.sufficiency.unwrap();
    assert_eq!(s.epsilon, 0.01);
    assert_eq!(s.sufficient, s.max_divergence < 0.01);
    let sweep = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn train_then_evaluate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let input = write_synth(tmp.path(), &SynthSpec { samples: 2000, ..SynthSpec::default() });
    let c = quick_config(&input, &tmp.path().join("out"));
    let (model, _) = cli::cmd_train(&c).unwrap();
    let report = cli::cmd_evaluate(&c).unwrap();
    assert_eq!(report.rows.len(), model.virtual_ids.len());
    let fit = cli::cmd_pipeline(&c).unwrap();
    assert_eq!(fit.runs[0].evaluation, report);
}

#[test]
fn every_method_selects() {
    let tmp = TempDir::new().unwrap();
    let input = write_synth(tmp.path(), &SynthSpec { samples: 2000, ..SynthSpec::default() });
    for method in ["angle", "mi", "random", "variance", "correlation"] {
        let c = RunConfig { method: method.parse().unwrap(), ..quick_config(&input, &tmp.path().join("out")) };
        let sel = cli::cmd_select(&c).unwrap();
        assert_eq!(sel.selected.len(), 3, "{method}");
        assert_eq!(sel.ranked_ids.len(), 12, "{method}");
    }
}

#[test]
fn cross_modality_report() {
    let tmp = TempDir::new().unwrap();
    let (m, groups) = generate_modalities(5000, 96, 4, 0).unwrap();
    let input = tmp.path().join("modalities.csv");
    write_wide_csv(&m, fs::File::create(&input).unwrap()).unwrap();
    let mut c = RunConfig { input: Some(input), output_dir: tmp.path().join("out"), bins: 8, ..RunConfig::default() };
    c.cmi.source = "pollutant".into();
    c.cmi.modalities = groups;
    c.train.max_epochs = 40;
    c.train.patience = 15;
    let r = cli::cmd_cmi(&c).unwrap();

    let row = |name: &str| r.measures.iter().find(|m| m.modality_b == name).unwrap();
    let own = &r.measures[0];
    assert_eq!((own.modality_a.as_str(), own.modality_b.as_str()), ("pollutant", "pollutant"));
    assert_eq!(own.omega_deg, 0.0);
    assert_eq!(own.tau, 1.0);
    let (temp, random) = (row("temperature"), row("random"));
    assert!(random.tau < temp.tau && random.gamma_nats < temp.gamma_nats);
    assert!(random.gamma_nats < 0.02, "gamma {}", random.gamma_nats);
    for m in &r.measures {
        assert!((m.tau - m.omega_deg.to_radians().cos().abs()).abs() < 1e-9);
        assert!(m.gamma_nats >= -1e-12);
    }
    // independence does not pin the angle: |cos| of an unrelated direction in
    // 96 dimensions has a spread of about 0.1, so only the value is reported
    println!("random modality: tau {:.4}, gamma {:.4}", random.tau, random.gamma_nats);

    let temp_fit = r.estimates.iter().find(|e| e.modality == "temperature").unwrap();
    assert!(temp_fit.nmae < 0.11, "nmae {}", temp_fit.nmae);
    assert!(fs::read_to_string(tmp.path().join("out/cmi_measures.csv")).unwrap().starts_with("modality_a,modality_b,gamma_nats,omega_deg,tau"));

    c.cmi.source = "missing".into();
    assert_eq!(cli::cmd_cmi(&c).unwrap_err().exit_code(), 2);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infodensity"))
}

#[test]
fn binary_exit_codes_and_env_override() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("env_out");
    let status = bin().args(["synth", "--seed", "4"]).env(cli::OUT_DIR_ENV, &out).status().unwrap();
    assert!(status.success());
    assert!(out.join("synth.csv").exists() && out.join("ground_truth.json").exists());

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"frame_len": 96, "no_such_key": 1}"#).unwrap();
    let o = bin().args(["select", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = bin().args(["select", "--method", "pca"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let missing = tmp.path().join("nope.csv");
    let o = bin().args(["ingest", "--input"]).arg(&missing).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let gap = tmp.path().join("gap.csv");
    fs::write(&gap, "timestamp,sensor_id,value\n2024-01-01T00:00:00Z,a,NaN\n2024-01-01T00:15:00Z,a,NaN\n").unwrap();
    let cfg = tmp.path().join("gap.json");
    fs::write(&cfg, format!(r#"{{"input": {:?}, "input_format": "long", "schema": {{"modality": null}}}}"#, gap)).unwrap();
    let o = bin().args(["ingest", "--config"]).arg(&cfg).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin()
        .args(["select", "--input"])
        .arg(out.join("synth.csv"))
        .args(["--k", "2", "--method", "variance", "--output-dir"])
        .arg(tmp.path().join("sel"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("sel/selection.json").exists());
}

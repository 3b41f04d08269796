use std::path::Path;
use std::process::{Command, Output};

use airfl::experiment::{run_experiment, Experiment, ExperimentConfig};

fn airfl(args: &[&str], cfg: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_airfl"));
    cmd.args(args);
    if let Some(p) = cfg {
        cmd.arg("--config").arg(p);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_fails_with_diagnostic() {
    let o = airfl(&["fig3"], Some(Path::new("/definitely/not/here.json")));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"samples": 10, "colour": "red"}"#);
    let o = airfl(&["fig3"], Some(&cfg));
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("schema") && msg.contains("colour"), "{msg}");
}

#[test]
fn odd_user_count_rejected_for_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"users": 3}"#);
    for exp in ["train", "noise-check"] {
        let o = airfl(&[exp], Some(&cfg));
        assert!(!o.status.success());
        assert!(stderr(&o).contains("even"), "{}", stderr(&o));
    }
}

#[test]
fn unknown_experiment_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let o = airfl(&["fig9"], Some(&cfg));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown experiment"), "{}", stderr(&o));
}

#[test]
fn conflicting_experiment_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "fig4"}"#);
    let o = airfl(&["fig3"], Some(&cfg));
    assert!(!o.status.success());
}

#[test]
fn missing_config_flag_is_usage_error() {
    let o = airfl(&["fig3"], None);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn csv_to_stdout_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"samples": 5000, "seed": 3}"#;
    let cfg = write_config(dir.path(), body);
    let o = airfl(&["fig3"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));

    let expected = run_experiment(
        &ExperimentConfig::from_json(body, Some(Experiment::Fig3)).unwrap(),
    )
    .unwrap();
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["alpha", "P_db", "delta_h", "mean_c"]);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), expected.rows.len());
    for (got, want) in rows.iter().zip(&expected.rows) {
        for (g, w) in got.iter().zip(want) {
            assert_eq!(g.to_bits(), w.to_bits());
        }
    }
}

#[test]
fn overrides_and_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let out_cfg = dir.path().join("from_config.csv");
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"samples": 100, "output": {:?}}}"#, out_cfg.to_str().unwrap()),
    );
    let o = airfl(&["fig4"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let base = std::fs::read_to_string(&out_cfg).unwrap();
    assert!(base.starts_with("P_db,sigma_A2_db,mean_c\n"));

    let out = dir.path().join("flag.csv");
    let o = airfl(
        &["fig4", "--seed", "9", "--samples", "300", "--out", out.to_str().unwrap()],
        Some(&cfg),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let changed = std::fs::read_to_string(&out).unwrap();
    assert_eq!(changed.lines().count(), base.lines().count());
    assert_ne!(changed, base);

    let o = airfl(&["fig4", "--samples", "0"], Some(&cfg));
    assert!(!o.status.success());
}

#[test]
fn train_and_noise_check_emit_their_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"users": 2, "T": 5, "d": 3, "samples": 200}"#);
    let o = airfl(&["train"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("t,loss,gap\n1,"), "{text}");
    assert_eq!(text.lines().count(), 6);

    let o = airfl(&["noise-check"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("rounds,dim,predicted_bias,empirical_bias,max_mean_z,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn fig5_header_and_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"users": [2, 4], "seeds": 2, "T": 7, "d": 3}"#);
    let o = airfl(&["fig5"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("t,K,beta,bound,simulated_loss\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 7);
}

use std::path::PathBuf;
use std::process::Command;

const HEADER: &str = "t,observable,empirical_mean,empirical_stderr,se_prediction,abs_err,z_score";

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ampse-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, mode: &str, extra: &str) -> PathBuf {
    let path = scratch(name);
    let text = format!(
        r#"{{
  "mode": "{mode}",
  "model": {{"n": 48, "N": 80, "sigma2": 0.01}},
  "prior": {{"kind": "discrete", "atoms": [[-1.0, 0.05], [0.0, 0.9], [1.0, 0.05]]}},
  "iterations": 3,
  "replicates": 2,
  "seed": 5,
  "observables": ["mse", "l1"]{extra}
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn ampse(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ampse")).args(args).output().unwrap()
}

#[test]
fn amp_writes_csv_to_stdout() {
    let cfg = write_config("amp.json", "amp", "");
    let out = ampse(&["amp", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("1,mse,"));
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let cfg = write_config("digits.json", "se", "");
    let out = ampse(&["se", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let pred = text.lines().nth(1).unwrap().split(',').nth(4).unwrap();
    let mantissa = pred.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{pred}");
}

#[test]
fn se_rows_leave_empirical_fields_empty() {
    let cfg = write_config("se.json", "amp", "");
    let out = ampse(&["se", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields.len(), 7);
    assert_eq!((fields[2], fields[3]), ("", ""));
    assert!(!fields[4].is_empty());
}

#[test]
fn flags_override_config() {
    let cfg = write_config("flags.json", "amp", "");
    let out_path = scratch("flags.out.json");
    let out = ampse(&[
        "ist",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--format",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("\"mode\": \"ist\""));
    assert!(text.contains("\"seed\": 99"));
    assert!(text.contains("\"empirical_mean\""));
}

#[test]
fn seed_changes_the_draw() {
    let cfg = write_config("seed.json", "amp", "");
    let a = ampse(&["amp", "--config", cfg.to_str().unwrap(), "--seed", "1"]).stdout;
    let b = ampse(&["amp", "--config", cfg.to_str().unwrap(), "--seed", "1"]).stdout;
    let c = ampse(&["amp", "--config", cfg.to_str().unwrap(), "--seed", "2"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = write_config("threads.json", "amp", "");
    let one = ampse(&["amp", "--config", cfg.to_str().unwrap(), "--threads", "1"]).stdout;
    let eight = ampse(&["amp", "--config", cfg.to_str().unwrap(), "--threads", "8"]).stdout;
    assert_eq!(one, eight);
}

#[test]
fn unknown_key_is_reported() {
    let cfg = write_config("bad.json", "amp", ", \"dleta\": 0.6");
    let out = ampse(&["amp", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dleta"));
}

#[test]
fn edge_cap_is_reported() {
    let cfg = write_config("cap.json", "mp-compare", ", \"mp_edge_cap\": 1000");
    let out = ampse(&["mp-compare", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3840") && err.contains("1000"), "{err}");
}

#[test]
fn unwritable_output_is_an_error() {
    let cfg = write_config("unwritable.json", "se", "");
    let out = ampse(&["se", "--config", cfg.to_str().unwrap(), "--out", "/nonexistent-dir/x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent-dir"));
}

#[test]
fn missing_config_is_an_error() {
    let out = ampse(&["amp", "--config", "/no/such/config.json"]);
    assert!(!out.status.success());
}

#[test]
fn every_mode_runs() {
    let sym = ", \"denoiser\": {\"kind\": \"tanh\", \"schedule\": {\"policy\": \"fixed\", \"values\": [1.0]}}";
    for (mode, extra, rows) in [
        ("ensemble", "", 6),
        ("symmetric", sym, 6),
        ("mp-compare", "", 3),
        ("decouple", ", \"decouple\": {\"tuples\": 500}", 6),
    ] {
        let cfg = write_config(&format!("{mode}.json"), mode, extra);
        let out = ampse(&[mode, "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + rows, "{mode}");
    }
}

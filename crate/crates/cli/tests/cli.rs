use std::path::Path;
use std::process::{Command, Output};

fn wwlab(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wwlab"));
    cmd.args(args).env_remove("WWLAB_SEED");
    if let Some(s) = seed_env {
        cmd.env("WWLAB_SEED", s);
    }
    cmd.output().expect("spawn wwlab")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn ww_decay_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wwlab(
        &[
            "ww-decay",
            "--system",
            "rotation:golden",
            "--Ns",
            "64,128,256",
            "--samples",
            "4",
            "--out",
            out,
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,value,certified_upper,stderr"));
    assert_eq!(lines.count(), 3);
    let s = summary(dir.path());
    assert_eq!(s["experiment"], "ww-decay");
    assert_eq!(s["config"]["seed"], 20_240_601);
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "experiment = \"classical\"\nseed = 7\nout = \"{}\"\n\n[classical]\nkind = \"holder_avg\"\nsequences = 5\nlen = 8\n",
            out.display()
        ),
    )
    .unwrap();
    let o = wwlab(&["classical-check", "--config", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["config"]["seed"], 7);
    assert_eq!(s["results"]["tally"]["total"], 5);
}

#[test]
fn schema_errors_exit_nonzero_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"ww-decay\"\nsamples = 4\nbogus = 1\n").unwrap();
    let o = wwlab(&["ww-decay", "--config", cfg.to_str().unwrap()], None);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let o = wwlab(&["ww-decay", "--system", "torus:2"], None);
    assert!(!o.status.success());
}

#[test]
fn mismatched_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "experiment = \"vdc\"\n").unwrap();
    let o = wwlab(&["ww-decay", "--config", cfg.to_str().unwrap()], None);
    assert!(!o.status.success());
}

#[test]
fn seed_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "experiment = \"classical\"\n\n[classical]\nkind = \"holder_avg\"\nsequences = 2\nlen = 4\n",
    )
    .unwrap();
    let common = ["classical-check", "--config", cfg.to_str().unwrap()];
    let run = |out: &Path, extra: &[&str], env: Option<&str>| {
        let mut args: Vec<&str> = common.to_vec();
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        args.extend_from_slice(extra);
        let o = wwlab(&args, env);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        summary(out)["config"]["seed"].clone()
    };
    assert_eq!(run(&a, &[], Some("99")), 99);
    assert_eq!(run(&b, &["--seed", "3"], Some("99")), 3);
}

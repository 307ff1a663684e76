use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uos-bench")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

const SMALL: &str = "horizon = 60\nt_lo = 10\nmc_runs = 3\nratios = [0.1, 1.0, 10.0]\n";

#[test]
fn run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("out");
    let o = bench(&["run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "summary.csv", "tnse.svg", "av.svg", "avr.svg", "p_c.svg", "metadata.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(rows(&out.join("results.csv")).len(), 3 * 3 * 3);
    assert_eq!(rows(&out.join("summary.csv")).len(), 3 * 3);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["paired_runs_verified"], serde_json::Value::Bool(true));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let mut outputs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out = tmp.path().join(name);
        let o = bench(&[
            "run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers,
            "--format", "csv",
        ]);
        assert!(o.status.success());
        outputs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let mut outputs = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = bench(&[
            "run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed,
            "--format", "csv",
        ]);
        assert!(o.status.success());
        outputs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
}

#[test]
fn no_sources_reduces_transfer_to_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("{SMALL}n_sources = [0]\n"));
    let out = tmp.path().join("out");
    let o = bench(&["run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let all = rows(&out.join("results.csv"));
    let pick = |m: &str| all.iter().filter(|r| &r[0] == m).cloned().collect::<Vec<_>>();
    let (iso, btl) = (pick("isolated"), pick("btl"));
    assert_eq!(iso.len(), btl.len());
    for (i, b) in iso.iter().zip(&btl) {
        // ratio, seed, window, tnse, av match; avr is exactly one.
        for k in 1..=6 {
            assert_eq!(&i[k], &b[k]);
        }
        assert_eq!(&b[7], "1e0");
        assert_eq!(&i[8], &b[8]);
    }
}

#[test]
fn source_sweep_writes_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("{SMALL}n_sources = [1, 2]\n"));
    let out = tmp.path().join("out");
    let o = bench(&["run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    assert!(out.join("ns_1/results.csv").is_file());
    assert!(out.join("ns_2/results.csv").is_file());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    for (name, text) in [("neg.toml", "r = -1.0\n"), ("unknown.toml", "colour = 3\n"), ("syntax.toml", "r = \n")] {
        let cfg = write(tmp.path(), name, text);
        let o = bench(&["run", "--experiment", "custom", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let o = bench(&["validate-config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{name}");
    }
    assert_eq!(bench(&["run", "--experiment", "9", "--out", out]).status.code(), Some(2));
    assert_eq!(bench(&["run", "--experiment", "1", "--out", out, "--scale", "0.5"]).status.code(), Some(2));
}

#[test]
fn validate_config_accepts_good_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "experiment_id = 4\nmc_runs = 5\n");
    let o = bench(&["validate-config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn all_runs_discarded_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "system = { a = [[0.5]], b = [[1.0]], c = [[1.0]] }\nmismatch = \"dilation(1.8)\"\n\
         initial_state = [1.0]\nr = 1e-6\nrho = 1e-6\nprior_halfwidth = 1e-3\nmc_runs = 2\nratios = [1.0]\n",
    );
    let out = tmp.path().join("out");
    let o = bench(&["run", "--experiment", "custom", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_reports_no_violations() {
    let o = bench(&["oracle", "--instances", "5", "--steps", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bench(&["oracle", "--system", "system2", "--steps", "10", "--pitch", "0.01"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

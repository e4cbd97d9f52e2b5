//! End-to-end behaviour of the command-line harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MINIMAL_GM: &str = r#"
[system]
kind = "gibbs-markov"

[experiment]
n_grid = [1000]
ensemble = 100
"#;

const SMALL_LSV: &str = r#"
[system]
kind = "lsv"
alpha = 2.0

[observable]
cos = [0.0, 1.0]
centering = "exact"
mean = 0.14613898

[experiment]
n_grid = [1000, 4000]
ensemble = 120
returns = 20000
tail_paths = 3
"#;

const SMALL_GM_MARTINGALE: &str = r#"
[system]
kind = "gibbs-markov"
k_max = 5000

[experiment]
n_grid = [100, 1000]
lemma_paths = 40
lemma_grid = [1000, 4000]
"#;

const SMALL_STADIUM: &str = r#"
[system]
kind = "stadium"
length = 4.0

[observable]
section = { kind = "segment-balanced" }
flow = { kind = "vertical-speed-squared" }

[experiment]
n_grid = [500, 2000]
ensemble = 40
returns = 5000
samples = 20000
tail_paths = 2
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn wipsim(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wipsim"));
    c.args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    wipsim(&args, &[])
}

/// Every deterministic artifact, keyed by file name.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn minimal_config_produces_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gm.toml", MINIMAL_GM);
    let out = dir.path().join("out");
    let o = run("clt", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["config"]["ensemble"], 100);
    assert!(report["config"]["tolerances"]["ks"].is_number());
    let csv = fs::read_to_string(out.join("clt.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,path_id,W1,max_partial,R_count"));
    assert_eq!(lines.count(), 100);
    assert!(out.join("ecdf_n1000.svg").exists() && out.join("qq_n1000.svg").exists());
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let zero = write_config(dir.path(), "zero.toml", &MINIMAL_GM.replace("ensemble = 100", "ensemble = 0"));
    assert_eq!(run("clt", &zero, &out, &[]).status.code(), Some(2));
    let unknown = write_config(dir.path(), "unknown.toml", &format!("{MINIMAL_GM}bogus = 1\n"));
    assert_eq!(run("clt", &unknown, &out, &[]).status.code(), Some(2));
    let ok = write_config(dir.path(), "ok.toml", MINIMAL_GM);
    assert_eq!(run("clt", &ok, &out, &["--tolerance", "nonsense=1"]).status.code(), Some(2));
    assert_eq!(run("tails", &ok, &out, &[]).status.code(), Some(2));
    assert_eq!(wipsim(&["clt"], &[]).status.code(), Some(2));
    let missing = write_config(
        dir.path(),
        "missing.toml",
        "[system]\nkind = \"lsv\"\nalpha = 2.0\n[observable]\ncos = [0.0, 1.0]\ncentering = \"calibrated\"\ncalibration = \"nope.json\"\n",
    );
    assert_eq!(run("clt", &missing, &out, &[]).status.code(), Some(2));
}

#[test]
fn tolerance_failure_exits_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gm.toml", SMALL_GM_MARTINGALE);
    let out = dir.path().join("out");
    let o = run("gm-martingale", &cfg, &out, &["--tolerance", "chi_ratio=0.5", "--tolerance", "m2_rel=100"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL chi_ratio"));
    let o = run("gm-martingale", &cfg, &out, &["--tolerance", "m2_rel=100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn reports_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("clt", write_config(dir.path(), "gm.toml", MINIMAL_GM)),
        ("wip", write_config(dir.path(), "lsv.toml", SMALL_LSV)),
        ("tails", write_config(dir.path(), "lsv2.toml", SMALL_LSV)),
        ("gm-martingale", write_config(dir.path(), "gmm.toml", SMALL_GM_MARTINGALE)),
        ("stadium-geom", write_config(dir.path(), "st.toml", SMALL_STADIUM)),
    ];
    for (cmd, cfg) in &cases {
        let mut reference = None;
        for w in ["1", "2", "8"] {
            let out = dir.path().join(format!("{cmd}-{w}"));
            let o = run(cmd, cfg, &out, &["--workers", w, "--seed", "7"]);
            assert!(matches!(o.status.code(), Some(0 | 1)), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
            let files = artifacts(&out);
            match &reference {
                None => reference = Some(files),
                Some(r) => assert!(r == &files, "{cmd} differs with {w} workers"),
            }
        }
    }
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "st.toml",
        &SMALL_STADIUM.replace("[experiment]", "[experiment]\ncheckpoint_secs = 0.0"),
    );
    let full = dir.path().join("full");
    assert!(matches!(run("clt", &cfg, &full, &[]).status.code(), Some(0 | 1)));

    let part = dir.path().join("part");
    let args = ["clt", "--config", cfg.to_str().unwrap(), "--out", part.to_str().unwrap()];
    let o = wipsim(&args, &[("WIPSIM_STOP_AFTER_CHUNKS", "1")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(part.join("checkpoint-paths.json").exists());
    assert!(!part.join("report.json").exists());

    let o = wipsim(&args, &[]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!part.join("checkpoint-paths.json").exists());
    assert_eq!(artifacts(&full), artifacts(&part));

    // a checkpoint from a different configuration is refused
    let other = dir.path().join("other");
    let args2 = ["clt", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap()];
    assert_eq!(wipsim(&args2, &[("WIPSIM_STOP_AFTER_CHUNKS", "1")]).status.code(), Some(3));
    let o = wipsim(&[&args2[..], &["--seed", "99"]].concat(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

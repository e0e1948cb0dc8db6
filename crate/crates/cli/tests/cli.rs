use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlch"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn example(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    root.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_result_dir(dir: &Path) {
    for f in ["config.resolved", "audit.txt", "manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f} in {}", dir.display());
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["format_version"], 1);
}

#[test]
fn audit_on_shipped_configs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["default.conf", "logarithmic.conf"] {
        let o = nlch(&["audit", "--config", &example(name)], tmp.path());
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("eps0"));
        assert!(text.contains("audit: PASS"));
    }
    // audit without --out writes nothing
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn audit_failure_names_hypothesis() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(&["audit", "--set", "model.chi=10", "--for", "sweep-tau"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  ip_chi"));
    assert!(stderr(&o).contains("ip_chi"));
}

#[test]
fn simulate_with_zero_horizon_writes_initial_snapshot_only() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(&["simulate", "--set", "model.t_final=0", "--set", "grid.cells=32", "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("run");
    assert_result_dir(&dir);
    let mut snaps: Vec<String> = fs::read_dir(dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["mu_00000000.nlchf1", "phi_00000000.nlchf1", "sigma_00000000.nlchf1"]);
    let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 2);
    assert!(diag.starts_with("t,mass,"));
    // the resolved configuration is itself a valid configuration
    let o = nlch(&["audit", "--config", "run/config.resolved"], tmp.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "simulate",
            "--set",
            "ic.family=random_smoothed",
            "--set",
            "ic.smoothing=1e-4",
            "--set",
            "grid.cells=48",
            "--set",
            "model.t_final=0.005",
            "--seed",
            "11",
            "--snapshots",
            "10",
            "--set",
            "output.field_csv=true",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&nlch(&args("a"), tmp.path())), 0);
    assert_eq!(code(&nlch(&args("b"), tmp.path())), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() > 8);
    for f in files {
        let f = f.as_str().unwrap();
        if f == "config.resolved" || f == "manifest.json" {
            continue; // these name the output directory
        }
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
}

#[test]
fn broken_configuration_exits_2_and_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(&["verify", "--set", "model.b=-1", "--out", "v", "--error-log", "errors.jsonl"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(tmp.path().join("v/audit.txt").is_file());
    let log = fs::read_to_string(tmp.path().join("errors.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(entry["kind"], "configuration");
    assert_eq!(entry["exit_code"], 2);
    assert!(entry["error"].as_str().unwrap().contains("A1"));

    fs::write(tmp.path().join("typo.conf"), "[model]\neps = 0.1\nepsilon = 0.2\n").unwrap();
    let o = nlch(&["simulate", "--config", "typo.conf"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = nlch(&["simulate", "--set", "model.nope=1"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = nlch(&["simulate", "--config", "missing.conf"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = nlch(&["stability", "--set", "model.eta=0.1", "--out", "s"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_prints_property_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(&["verify", "--set", "grid.cells=64", "--set", "model.t_final=0.005", "--out", "v"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("mass-source balance"));
    assert!(text.contains("0 failed"));
    assert!(tmp.path().join("v/properties.txt").is_file());
}

#[test]
fn sweep_writes_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(
        &[
            "sweep-tau",
            "--set",
            "grid.cells=64",
            "--set",
            "model.t_final=0.02",
            "--set",
            "sweep.values=0.1,0.03,0.01",
            "--workers",
            "2",
            "--out",
            "sw",
        ],
        tmp.path(),
    );
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let dir = tmp.path().join("sw");
    assert_result_dir(&dir);
    let rates = fs::read_to_string(dir.join("rates.csv")).unwrap();
    assert!(rates.lines().next().unwrap().contains(','));
    assert!(fs::read_to_string(dir.join("config.resolved")).unwrap().contains("mode = tau"));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("PASS:") || summary.contains("FAIL:"));
}

#[test]
fn stability_and_oracle_on_small_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlch(&["stability", "--set", "grid.cells=64", "--set", "model.t_final=0.01", "--out", "st"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("st/stability.csv").is_file());

    let o = nlch(
        &[
            "oracle-compare",
            "--set",
            "grid.cells=64",
            "--set",
            "oracle.modes=8",
            "--set",
            "oracle.t_final=0.02",
            "--set",
            "oracle.interval=0.005",
            "--out",
            "or",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("or/oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

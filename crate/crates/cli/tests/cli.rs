use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anderson-lab"));
    for k in ["ANDERSON_SEED", "ANDERSON_TRIALS", "ANDERSON_WORKERS", "ANDERSON_OUT"] {
        c.env_remove(k);
    }
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn anderson-lab")
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn wegner_end_to_end_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&configs().join("wegner.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(r["kind"], "wegner");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(r["version"].as_str().unwrap().starts_with('v'));
    let cells = r["result"]["per_cell"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert!(csv.starts_with("kind,a,b,volume,trials,estimate,stderr,bound,pass\n"));
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn missing_trials_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("wegner.toml")).unwrap().replace("trials = 2000\n", "");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.trials"), "{err}");
    assert!(!dir.path().join("out").exists(), "nothing may be written before validation");
}

#[test]
fn invalid_parameter_names_module_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("simplicity.toml")).unwrap().replace("q = 3.0", "q = 1.5");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.q"));
}

#[test]
fn free_model_poisson_run_is_gated() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&configs().join("poisson_free.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(r["status"], "gate-blocked");
    assert_eq!(r["result"]["gate"]["pass"], false);
    assert!(!dir.path().join("points.csv").exists());

    let forced = dir.path().join("forced");
    let o = run(&configs().join("poisson_free.toml"), &forced, &["--force"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&forced);
    assert!(r["notices"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("--force")));
    assert_eq!(r["result"]["counts"]["reject"], true);
}

#[test]
fn flag_beats_env_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("wegner.toml");
    let a = dir.path().join("a");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .env("ANDERSON_TRIALS", "300")
        .env("ANDERSON_SEED", "5")
        .arg("--seed")
        .arg("6")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&a);
    assert_eq!(r["trials"], 300);
    assert_eq!(r["seed"], 6);
}

#[test]
fn csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("dos.toml");
    let mut outputs = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(w);
        let o = run(&cfg, &out, &["--workers", w, "--trials", "64"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(out.join("ids.csv")).unwrap(), report(&out)["config_hash"].clone()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn export_operator_matches_run_realization() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["export-operator", "--config"])
        .arg(configs().join("spectral_shift.toml"))
        .arg("--out")
        .arg(dir.path())
        .args(["--trial", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("operator_L64_trial3.txt")).unwrap();
    let spec = anderson_core::ensemble::ModelSpec::lattice(1, anderson_core::SiteDistribution::uniform(1.0).with_coupling(2.0));
    let h = spec.realize(64, anderson_core::estimates::box_seed(1, 64), 3).unwrap();
    assert!(text.starts_with(&format!("# n=64 hash={}\n", h.hash())), "{}", text.lines().next().unwrap());
    // one diagonal and two neighbour entries per row of the periodic chain
    assert_eq!(text.lines().count(), 1 + 64 * 3);
}

#[test]
fn selftest_flags_injected_fault() {
    let o = bin().args(["selftest", "--inject-fault", "inertia-sign-flip"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("FAIL rank-one interlacing"), "{s}");
    assert!(s.contains("case seed"), "{s}");
}

#[test]
fn selftest_passes() {
    let o = bin().arg("selftest").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

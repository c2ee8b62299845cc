use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ntpqpt::schema::{chi_from_json, chi_to_json};
use ntpqpt::{pauli_basis, ppbs_chi, ChiMatrix, CountTable, PpbsParams, ReportJson};
use tempfile::TempDir;

fn ntpqpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntpqpt"))
        .args(args)
        .env_remove("NTPQPT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ntpqpt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ntpqpt(args).status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_chi(dir: &TempDir, name: &str, chi: &ChiMatrix) -> PathBuf {
    let p = path(dir, name);
    std::fs::write(&p, chi_to_json(chi).unwrap()).unwrap();
    p
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn simulate_noiseless_identity() {
    let dir = TempDir::new().unwrap();
    let out = simulate(&dir, "c.json", &["--gamma", "1.0", "--noise", "none"]);
    let table = CountTable::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table.counts[0][0], 10_000);
    assert_eq!(table.counts[0][1], 0);
    assert_eq!(table.manifest.as_deref(), Some(format!("{}.manifest.json", out.display()).as_str()));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.manifest.json", out.display())).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["outputs"][0], s(&out));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "c.json");
    ok(&["simulate", "--gamma", "0.255", "--seed", "7", "--out", s(&out)]);
    let first = std::fs::read(&out).unwrap();
    ok(&["simulate", "--gamma", "0.255", "--seed", "7", "--out", s(&out)]);
    assert_eq!(first, std::fs::read(&out).unwrap());

    ok(&["simulate", "--gamma", "0.255", "--seed", "8", "--out", s(&out)]);
    assert_ne!(first, std::fs::read(&out).unwrap());
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.json", &["--gamma", "0.5", "--seed", "3"]);
    let b = path(&dir, "b.json");
    let out = Command::new(env!("CARGO_BIN_EXE_ntpqpt"))
        .args(["simulate", "--gamma", "0.5", "--out", s(&b)])
        .env("NTPQPT_SEED", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let counts = |p: &Path| CountTable::from_json(&std::fs::read_to_string(p).unwrap()).unwrap().counts;
    assert_eq!(counts(&a), counts(&b));
}

#[test]
fn simulate_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "c.json");
    assert_eq!(code(&["simulate", "--gamma", "1.2", "--out", s(&out)]), 2);
    assert_eq!(code(&["simulate", "--gamma", "0.5", "--noise", "gaussian", "--out", s(&out)]), 2);
    assert_eq!(code(&["simulate", "--t-h", "0.5", "--out", s(&out)]), 2);
    assert_eq!(code(&["simulate", "--gamma", "0.5", "--t-h", "1", "--out", s(&out)]), 2);
    assert_eq!(code(&["simulate", "--gamma", "0.5", "--exposure", "-1", "--out", s(&out)]), 2);
    assert!(!out.exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "run.toml");
    std::fs::write(&cfg, "seed = 5\n[simulate]\ngamma = 0.4\nnoise = \"none\"\nexposure = 100.0\n").unwrap();
    let a = path(&dir, "a.json");
    ok(&["--config", s(&cfg), "simulate", "--out", s(&a)]);
    let t = CountTable::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(t.counts[1][1], 40);

    ok(&["simulate", "--config", s(&cfg), "--exposure", "1000", "--out", s(&a)]);
    let t = CountTable::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(t.counts[1][1], 400);

    std::fs::write(&cfg, "[simulate]\nbogus = 1\n").unwrap();
    assert_eq!(code(&["--config", s(&cfg), "simulate", "--gamma", "1", "--out", s(&a)]), 3);
}

#[test]
fn linear_reconstruction_matches_reference() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--gamma", "0.5", "--noise", "none", "--exposure", "1e12"]);
    let report = path(&dir, "r.json");
    let chi = path(&dir, "chi.json");
    ok(&["reconstruct", "--counts", s(&counts), "--method", "linear", "--out", s(&report), "--chi-out", s(&chi)]);
    let got = chi_from_json(&std::fs::read_to_string(&chi).unwrap()).unwrap();
    let want = ppbs_chi(&PpbsParams::from_gamma(0.5).unwrap(), &pauli_basis()).unwrap();
    assert!((got.mat() - want.mat()).max_abs() < 1e-8);

    let doc = ReportJson::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc.chi.to_chi().unwrap().mat().as_slice(), got.mat().as_slice());
}

#[test]
fn mle_report_with_reference() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--gamma", "0.3", "--seed", "4"]);
    let reference = write_chi(
        &dir,
        "ref.json",
        &ppbs_chi(&PpbsParams::from_gamma(0.3).unwrap(), &pauli_basis()).unwrap(),
    );
    let report = path(&dir, "r.json");
    let stdout = ok(&[
        "reconstruct", "--counts", s(&counts), "--method", "mle", "--reference", s(&reference), "--out", s(&report),
    ]);
    assert!(stdout.contains("process fidelity"));
    let doc = ReportJson::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc.fidelity.unwrap() >= 0.96);
    assert!((doc.p_eigenvalues[0] - 1.0).abs() < 1e-9);
    assert!((doc.p_eigenvalues[1] - 0.3).abs() < 0.05);
    assert_eq!(doc.p_class, "state-dependent");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.manifest.json", report.display())).unwrap()).unwrap();
    assert_eq!(manifest["inputs"][0], s(&counts));
    assert_eq!(manifest["inputs"][1], s(&reference));
    assert_eq!(manifest["config"]["method"], "mle");
}

#[test]
fn reference_in_other_basis_is_converted() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--gamma", "0.6", "--noise", "none"]);
    let elem = ntpqpt::elementary_basis(2).unwrap();
    let reference = write_chi(&dir, "ref.json", &ppbs_chi(&PpbsParams::from_gamma(0.6).unwrap(), &elem).unwrap());
    let report = path(&dir, "r.json");
    ok(&["reconstruct", "--counts", s(&counts), "--method", "mle", "--reference", s(&reference), "--out", s(&report)]);
    let doc = ReportJson::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc.fidelity.unwrap() > 0.9999);
}

#[test]
fn post_selected_matches_linear_on_lossless_data() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--gamma", "1.0", "--seed", "2"]);
    let chi_of = |method: &str| {
        let report = path(&dir, &format!("{method}.json"));
        let chi = path(&dir, &format!("{method}.chi.json"));
        ok(&["reconstruct", "--counts", s(&counts), "--method", method, "--out", s(&report), "--chi-out", s(&chi)]);
        chi_from_json(&std::fs::read_to_string(&chi).unwrap()).unwrap()
    };
    let (ps, li) = (chi_of("post-selected"), chi_of("linear"));
    let id = ChiMatrix::identity(&pauli_basis()).unwrap();
    let fid = |c: &ChiMatrix| {
        ntpqpt::process_fidelity_ntp(&ntpqpt::mle::fidelity_ready(c).unwrap(), &id).unwrap()
    };
    assert!((fid(&ps) - fid(&li)).abs() < 0.01);
}

#[test]
fn reconstruct_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let counts = simulate(&dir, "c.json", &["--gamma", "0.255", "--seed", "7"]);
    let report = path(&dir, "r.json");
    for method in ["mle", "mle-tp"] {
        let args = ["reconstruct", "--counts", s(&counts), "--method", method, "--seed", "1", "--out", s(&report)];
        ok(&args);
        let first = std::fs::read(&report).unwrap();
        ok(&args);
        assert_eq!(first, std::fs::read(&report).unwrap(), "{method}");
    }
}

#[test]
fn reconstruct_error_codes() {
    let dir = TempDir::new().unwrap();
    let report = path(&dir, "r.json");
    let missing = path(&dir, "missing.json");
    assert_eq!(code(&["reconstruct", "--counts", s(&missing), "--method", "mle", "--out", s(&report)]), 3);

    let garbage = path(&dir, "garbage.json");
    std::fs::write(&garbage, "{\"dim\": 2}").unwrap();
    assert_eq!(code(&["reconstruct", "--counts", s(&garbage), "--method", "mle", "--out", s(&report)]), 3);

    let counts = simulate(&dir, "c.json", &["--gamma", "0.5"]);
    assert_eq!(code(&["reconstruct", "--counts", s(&counts), "--method", "bayes", "--out", s(&report)]), 2);
    assert_eq!(
        code(&["reconstruct", "--counts", s(&counts), "--method", "mle", "--penalty-start", "10", "--out", s(&report)]),
        2
    );
    assert_eq!(code(&["reconstruct", "--counts", s(&counts), "--out", s(&report)]), 2);

    let dark = simulate(&dir, "dark.json", &["--t-h", "1", "--t-v", "0", "--noise", "none"]);
    assert_eq!(code(&["reconstruct", "--counts", s(&dark), "--method", "post-selected", "--out", s(&report)]), 3);

    let loud = write_chi(&dir, "loud.json", &ChiMatrix::identity(&pauli_basis()).unwrap().scaled(1.1));
    assert_eq!(
        code(&["reconstruct", "--counts", s(&counts), "--method", "linear", "--reference", s(&loud), "--out", s(&report)]),
        3
    );
}

fn sweep_rows(csv_path: &Path) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(csv_path).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["gamma", "method", "fidelity", "p_eig_1", "p_eig_2", "objective", "min_chi_eigenvalue", "seed"]
    );
    rdr.records().map(Result::unwrap).collect()
}

fn field(r: &csv::StringRecord, i: usize) -> f64 {
    r[i].parse().unwrap()
}

#[test]
fn sweep_mle_series() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.csv");
    ok(&["sweep", "--gammas", "0.2:1.0:0.4", "--methods", "mle", "--repeats", "2", "--seed", "3", "--out", s(&out)]);
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 6);
    let gammas: Vec<f64> = rows.iter().map(|r| field(r, 0)).collect();
    assert_eq!(gammas, [0.2, 0.2, 0.6, 0.6, 1.0, 1.0]);
    for r in &rows {
        assert!(field(r, 2) >= 0.96);
        assert!((field(r, 3) - 1.0).abs() < 1e-9);
        assert!((field(r, 4) - field(r, 0)).abs() < 0.05);
    }
    assert_eq!(&rows[0][7], "3");
    assert_eq!(&rows[1][7], "4");
    assert!(Path::new(&format!("{}.manifest.json", out.display())).exists());
}

#[test]
fn sweep_orders_rows_and_separates_methods() {
    let dir = TempDir::new().unwrap();
    let serial = path(&dir, "a.csv");
    let parallel = path(&dir, "b.csv");
    let base = ["sweep", "--gammas", "0.1,1.0", "--methods", "mle,mle-tp,post-selected", "--seed", "9"];
    let mut a = base.to_vec();
    a.extend(["--jobs", "1", "--out", s(&serial)]);
    let mut b = base.to_vec();
    b.extend(["--jobs", "3", "--out", s(&parallel)]);
    ok(&a);
    ok(&b);
    assert_eq!(std::fs::read(&serial).unwrap(), std::fs::read(&parallel).unwrap());

    let rows = sweep_rows(&serial);
    let methods: Vec<&str> = rows.iter().map(|r| r.get(1).unwrap()).collect();
    assert_eq!(methods, ["mle", "mle-tp", "post-selected", "mle", "mle-tp", "post-selected"]);
    let (mle, tp, ps) = (field(&rows[0], 2), field(&rows[1], 2), field(&rows[2], 2));
    assert!(tp < mle - 0.1 && ps < mle - 0.1, "{mle} {tp} {ps}");
}

#[test]
fn sweep_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.csv");
    assert_eq!(code(&["sweep", "--gammas", "0.5", "--methods", "", "--out", s(&out)]), 2);
    assert_eq!(code(&["sweep", "--gammas", "0.5,1.5", "--out", s(&out)]), 2);
    assert_eq!(code(&["sweep", "--gammas", "x", "--out", s(&out)]), 2);
    assert_eq!(code(&["sweep", "--gammas", "0.5", "--repeats", "0", "--out", s(&out)]), 2);
}

#[test]
fn analyze_p_classes() {
    let dir = TempDir::new().unwrap();
    let pauli = pauli_basis();
    let id = write_chi(&dir, "id.json", &ChiMatrix::identity(&pauli).unwrap());
    assert!(ok(&["analyze-p", "--chi", s(&id)]).contains("class: trace-preserving"));

    let ppbs = write_chi(&dir, "ppbs.json", &ppbs_chi(&PpbsParams::new(1.0, 0.3).unwrap(), &pauli).unwrap());
    let out = path(&dir, "a.json");
    let text = ok(&["analyze-p", "--chi", s(&ppbs), "--out", s(&out)]);
    assert!(text.contains("eigenvalues: 1.000000, 0.300000"), "{text}");
    assert!(text.contains("class: state-dependent"));
    assert!(text.contains("consistent"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["class"], "state-dependent");

    let lossy = write_chi(&dir, "lossy.json", &ChiMatrix::identity(&pauli).unwrap().scaled(0.7));
    let text = ok(&["analyze-p", "--chi", s(&lossy)]);
    assert!(text.contains("class: uniform-lossy"));
    assert!(text.contains("success probability: 0.700000"));
}

#[test]
fn analyze_p_unphysical_policy() {
    let dir = TempDir::new().unwrap();
    let chi = write_chi(&dir, "x.json", &ChiMatrix::identity(&pauli_basis()).unwrap().scaled(1.0005));
    assert!(ok(&["analyze-p", "--chi", s(&chi)]).contains("trace-preserving"));
    assert_eq!(code(&["analyze-p", "--chi", s(&chi), "--unphysical", "error"]), 3);

    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(code(&["analyze-p", "--chi", s(&bad)]), 3);
}

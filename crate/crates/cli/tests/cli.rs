use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsbox_cli::commands::SimulateSummary;
use nsbox_cli::report::{AnalyzeReport, PrSplit};
use nsbox_core::format::{read_box, Manifest};
use nsbox_core::measures::LocalityWitness;
use nsbox_core::ratio::{format_sig12, Ratio};
use nsbox_core::secrecy::{key_rate, noisy_pr, noisy_pr_werner};
use nsbox_core::NsBox;
use tempfile::TempDir;

fn nsbox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsbox")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn made(dir: &Path, name: &str, spec: &str) -> PathBuf {
    let path = dir.join(name);
    let o = nsbox(&["make", spec, "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    path
}

fn analyze_json(path: &Path) -> AnalyzeReport {
    let o = nsbox(&["analyze", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    serde_json::from_str(&stdout(&o)).expect("report parses back")
}

#[test]
fn make_writes_exact_boxes() {
    let o = nsbox(&["make", "pr:000"]);
    assert_eq!(read_box(&stdout(&o)).unwrap(), NsBox::pr(0, 0, 0));
    let o = nsbox(&["make", "noisy-pr:000:3/4"]);
    assert_eq!(read_box(&stdout(&o)).unwrap(), noisy_pr([0, 0, 0], &Ratio::new(3, 4)).unwrap());
    let o = nsbox(&["make", "mix:3/4*pr:000+1/4*pr:001"]);
    let b = read_box(&stdout(&o)).unwrap();
    assert_eq!(b.p(1, 1, 0, 1), &Ratio::new(3, 8));
}

#[test]
fn make_reports_grammar_position() {
    let o = nsbox(&["make", "mix:1/2*pr:0x0+1/2*noise"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("column 13"));
    let o = nsbox(&["make", "mix:1/2*pr:000+1/3*noise"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_examples_and_json_round_trip() {
    let dir = TempDir::new().unwrap();
    let pr = analyze_json(&made(dir.path(), "pr.json", "pr:000"));
    assert_eq!(pr.nl.nl, Ratio::from_integer(4));
    assert!(!pr.locality_chsh.is_local && !pr.locality_lp.is_local);
    assert_eq!(pr.pr_fraction, Ratio::one());

    let noise = analyze_json(&made(dir.path(), "noise.json", "noise"));
    assert!(noise.nl.nl.is_zero() && noise.locality_chsh.is_local && noise.locality_lp.is_local);
    assert!(noise.pr_fraction.is_zero());

    let path = made(dir.path(), "n35.json", "noisy-pr:000:3/5");
    let report = analyze_json(&path);
    assert_eq!(report.nl.nl, Ratio::new(12, 5));
    assert_eq!(
        report.locality_chsh.witness,
        LocalityWitness::ChshViolation { label: [0, 0, 0], value: Ratio::new(12, 5) }
    );
    assert!(matches!(&report.pr_split, PrSplit::Certified { decomposition } if decomposition.checks.all()));
    assert_eq!(report.noisy_pr.as_ref().unwrap().p_pr, Ratio::new(3, 5));
    // Same values as the library computes directly.
    let b = read_box(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report, AnalyzeReport::new(&b));

    let text = stdout(&nsbox(&["analyze", path.to_str().unwrap()]));
    assert!(text.contains("nl = 12/5 (2.4)"));
    assert!(text.contains("violation B_000 = 12/5 (2.4)"));
}

#[test]
fn analyze_exit_codes() {
    let dir = TempDir::new().unwrap();
    let signaling = dir.path().join("sig.json");
    let table = r#"[[[["1","0"],["0","0"]],[["1","0"],["0","0"]]],[[["0","0"],["0","1"]],[["1","0"],["0","0"]]]]"#;
    std::fs::write(&signaling, format!(r#"{{"format":"nsbox/1","inputs":[2,2],"outputs":[2,2],"p":{table}}}"#))
        .unwrap();
    assert_eq!(nsbox(&["analyze", signaling.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(nsbox(&["analyze", missing.to_str().unwrap()]).status.code(), Some(1));
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{").unwrap();
    assert_eq!(nsbox(&["analyze", garbled.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(nsbox(&["analyze"]).status.code(), Some(1));
    assert_eq!(nsbox(&["--help"]).status.code(), Some(0));
}

fn manifest(o: &Output) -> Manifest {
    serde_json::from_str(&stdout(o)).expect("manifest parses")
}

#[test]
fn decompose_modes() {
    let dir = TempDir::new().unwrap();
    let noisy = made(dir.path(), "n.json", "noisy-pr:000:3/10");
    let out = dir.path().join("split");
    let o = nsbox(&["decompose", noisy.to_str().unwrap(), "--mode", "pr-fraction", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&o);
    let weights: Vec<Ratio> = m.components.iter().map(|c| c.weight.clone()).collect();
    assert_eq!(weights, vec![Ratio::new(3, 10), Ratio::new(7, 10)]);
    assert!(["reconstructs", "residual_valid", "residual_local", "residual_nl_zero"]
        .iter()
        .all(|k| m.checks[*k] == true));
    let residual = read_box(&std::fs::read_to_string(out.join(&m.components[1].file)).unwrap()).unwrap();
    assert_eq!(residual, NsBox::maximally_mixed());
    let on_disk: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);

    let noise = made(dir.path(), "noise.json", "noise");
    let m = manifest(&nsbox(&["decompose", noise.to_str().unwrap(), "--mode", "vertex"]));
    assert_eq!(m.components.len(), 24);
    assert_eq!(m.total_weight(), Ratio::one());
    assert_eq!(m.checks["reconstructs"], true);

    let pr = made(dir.path(), "pr.json", "pr:000");
    let o = nsbox(&["decompose", pr.to_str().unwrap(), "--mode", "dim2", "--restarts", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&o);
    assert_eq!(m.checks["status"], "not_found");
    assert!(m.components.is_empty());
}

#[test]
fn decompose_counterexample_exits_3() {
    let dir = TempDir::new().unwrap();
    let b = made(dir.path(), "b.json", "mix:1/3*det:0000+1/3*det:0110+1/3*det:1001");
    let o = nsbox(&["decompose", b.to_str().unwrap(), "--mode", "pr-fraction"]);
    assert_eq!(o.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["p_pr"], "4/9");
    assert_eq!(report["diagnostics"].as_array().unwrap().len(), 8);
}

fn csv_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn keyrate_examples() {
    let o = nsbox(&["keyrate", "--family", "noisy-pr", "--p", "1", "--csv"]);
    assert_eq!(csv_rows(&o)[0][4], "1");

    let o = nsbox(&["keyrate", "--family", "noisy-pr", "--werner", "1", "--csv"]);
    let lib = key_rate(&noisy_pr_werner([0, 0, 0], &Ratio::one()).unwrap()).key_rate_lower_bound;
    assert_eq!(csv_rows(&o)[0][4], format_sig12(lib));

    let o = nsbox(&["keyrate", "--family", "noisy-pr", "--sweep", "0:1:11", "--csv"]);
    let rates: Vec<f64> = csv_rows(&o).iter().map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(rates.len(), 11);
    assert!(rates.windows(2).all(|w| w[0] <= w[1]));

    let dir = TempDir::new().unwrap();
    let b = made(dir.path(), "pr.json", "pr:000");
    let o = nsbox(&["keyrate", "--box", b.to_str().unwrap(), "--csv"]);
    assert_eq!(csv_rows(&o)[0][..5], ["1", "4", "4", "1", "1"]);

    // Conflicting and missing parameter sources are usage errors.
    assert_eq!(nsbox(&["keyrate", "--family", "noisy-pr", "--p", "1", "--werner", "1"]).status.code(), Some(1));
    assert_eq!(nsbox(&["keyrate", "--family", "noisy-pr"]).status.code(), Some(1));
    assert_eq!(nsbox(&["keyrate", "--family", "noisy-pr", "--p", "2"]).status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_and_handles_one_round() {
    let args =
        ["simulate", "--family", "noisy-pr", "--p", "4/5", "--rounds", "20000", "--seed", "42", "--compare-analytic"];
    let first = nsbox(&args);
    let second = nsbox(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let o = nsbox(&["simulate", "--family", "noisy-pr", "--p", "4/5", "--rounds", "1", "--json"]);
    let summary: SimulateSummary = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary.unvisited_pairs.len(), 3);
    assert!(summary.empirical_nl.is_none());

    let dir = TempDir::new().unwrap();
    let records = dir.path().join("records.csv");
    nsbox(&[
        "simulate",
        "--family",
        "noisy-pr",
        "--p",
        "1/2",
        "--rounds",
        "10",
        "--records",
        records.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 11);
}

#[test]
fn thread_cap_is_honored() {
    let o = Command::new(env!("CARGO_BIN_EXE_nsbox"))
        .args(["keyrate", "--family", "noisy-pr", "--sweep", "0:1:5", "--csv"])
        .env("NSBOX_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let bad = Command::new(env!("CARGO_BIN_EXE_nsbox"))
        .args(["make", "noise"])
        .env("NSBOX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

use std::path::Path;
use std::process::{Command, Output};

fn smoothhaz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothhaz"))
        .args(args)
        .env_remove("SMOOTHHAZ_THREADS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(p: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = csv_rows(p);
    let c = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

/// Simulated records with two covariates, written by the CLI itself.
fn simulated(dir: &Path, scheme: &str, covariates: bool) -> std::path::PathBuf {
    let out = dir.join(format!("sim_{scheme}_{covariates}"));
    let mut args = vec![
        "simulate",
        "--hm",
        "HM1",
        "--scheme",
        scheme,
        "--n",
        "300",
        "--seed",
        "7",
        "--out-dir",
        path(&out),
    ];
    if covariates {
        args.push("--covariates");
    }
    let o = smoothhaz(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("replicate_000.csv")
}

const SMALL_2D: [&str; 8] = [
    "--bin-width-u",
    "1",
    "--bin-width-s",
    "1",
    "--nseg-u",
    "8",
    "--nseg-s",
    "8",
];

#[test]
fn two_record_fit1d_writes_summary_and_hazard() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.csv");
    std::fs::write(&input, "id,u,s_in,s_out,event\na,1,0,50,1\nb,2,0,80,0\n").unwrap();
    let out = dir.path().join("out");
    let o = smoothhaz(&["fit1d", "--input", path(&input), "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("summary.json"));
    for key in ["aic", "ed", "rho", "converged", "n_coefficients"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["n_coefficients"], 20);
    let (header, rows) = csv_rows(&out.join("hazard.csv"));
    assert_eq!(
        header,
        ["time", "eta", "lambda", "se_eta", "lambda_lo", "lambda_hi"]
    );
    assert_eq!(rows.len(), 3);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "fit1d");
    assert_eq!(manifest["outputs"][0], "summary.json");
}

#[test]
fn fixed_rho_bypasses_selection() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path(), "A", false);
    let out = dir.path().join("out");
    let o = smoothhaz(&[
        "fit1d",
        "--input",
        path(&input),
        "--bin-width",
        "1",
        "--nseg",
        "10",
        "--rho",
        "100",
        "--out-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["rho"].as_f64(), Some(100.0));
    assert_eq!(summary["aic_profile"].as_array().unwrap().len(), 0);
    let eta = column(&out.join("hazard.csv"), "eta");
    let lo = column(&out.join("hazard.csv"), "lambda_lo");
    let se = column(&out.join("hazard.csv"), "se_eta");
    for i in 0..eta.len() {
        assert!((lo[i] - (eta[i] - 2.0 * se[i]).exp()).abs() <= 1e-12 * lo[i].max(1.0));
    }
}

#[test]
fn simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = smoothhaz(&[
            "simulate",
            "--hm",
            "HM1",
            "--scheme",
            "A",
            "--n",
            "300",
            "--seed",
            "7",
            "--out-dir",
            path(&out),
        ]);
        assert!(o.status.success());
        std::fs::read(out.join("replicate_000.csv")).unwrap()
    };
    assert_eq!(run("first"), run("second"));
}

#[test]
fn scheme_c_has_late_entries() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path(), "C", false);
    let s_in = column(&input, "s_in");
    assert!(s_in.iter().any(|&v| v > 0.0));
    assert!(s_in.len() < 300);
}

#[test]
fn unknown_names_are_usage_errors() {
    let o = smoothhaz(&["simulate", "--scheme", "D", "--out-dir", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("A, B, C"));
    let o = smoothhaz(&["simulate", "--hm", "HM9", "--out-dir", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("HM1, HM2, HM3"));
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "id,u,s_in,s_out,event\na,1,0,5,1\nb,2,0,oops,0\n").unwrap();
    let o = smoothhaz(&[
        "fit1d",
        "--input",
        path(&input),
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("s_out"), "{err}");
}

#[test]
fn hazard_ratios_are_exponentiated_betas() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path(), "B", true);
    let out = dir.path().join("ph");
    let mut args = vec!["fitph", "--input", path(&input), "--out-dir", path(&out)];
    args.extend(SMALL_2D);
    let o = smoothhaz(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let beta = column(&out.join("beta.csv"), "beta");
    let hr = column(&out.join("beta.csv"), "hazard_ratio");
    assert_eq!(beta.len(), 2);
    for (b, h) in beta.iter().zip(&hr) {
        assert!((h - b.exp()).abs() <= 1e-12 * h);
    }
    let (header, _) = csv_rows(&out.join("surface.csv"));
    assert_eq!(
        header,
        ["u", "s", "t", "eta", "lambda", "se_eta", "extrapolated"]
    );
}

#[test]
fn ph_without_covariates_reproduces_fit2d() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path(), "A", false);
    let run = |cmd: &str| {
        let out = dir.path().join(cmd);
        let mut args = vec![cmd, "--input", path(&input), "--out-dir", path(&out)];
        args.extend(SMALL_2D);
        let o = smoothhaz(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("fit2d"), run("fitph"));
    for col in ["eta", "se_eta"] {
        let (x, y) = (
            column(&a.join("surface.csv"), col),
            column(&b.join("surface.csv"), col),
        );
        assert_eq!(x.len(), y.len());
        let diff = x
            .iter()
            .zip(&y)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(diff < 1e-8, "{col}: {diff}");
    }
    assert_eq!(csv_rows(&b.join("beta.csv")).1.len(), 0);
    let (sa, sb) = (json(&a.join("summary.json")), json(&b.join("summary.json")));
    let ed = sa["ed"].as_f64().unwrap() - sb["ed_total"].as_f64().unwrap();
    assert!(ed.abs() < 1e-8);
}

#[test]
fn small_study_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let o = smoothhaz(&[
        "simulate",
        "--study",
        "--hm",
        "HM1",
        "--n",
        "300",
        "--S",
        "2",
        "--seed",
        "3",
        "--threads",
        "1",
        "--out-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let study = json(&out.join("study.json"));
    assert_eq!(study["replicates_fitted"], 2);
    assert!(study["mean_interior_rmse"].as_f64().unwrap() > 0.0);
    assert_eq!(csv_rows(&out.join("study_surface.csv")).1.len(), 400);
    assert_eq!(csv_rows(&out.join("study_replicates.csv")).1.len(), 2);
    assert_eq!(json(&out.join("manifest.json"))["threads"], 1);
}

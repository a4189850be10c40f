use std::process::Command;

use hosfem::bench::read_bench_csv;

fn hosfem(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hosfem")).args(args).output().expect("binary runs");
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn restricted_verify_passes() {
    let (ok, out, _) = hosfem(&["verify", "--order", "7", "--equation", "helmholtz", "--elements-per-case", "3"]);
    assert!(ok, "{out}");
    assert!(out.contains("overall PASS"));
    assert!(out.lines().any(|l| l.starts_with("operator") && l.contains("PASS")));
}

#[test]
fn unknown_suite_is_an_error() {
    let (ok, _, err) = hosfem(&["verify", "--suite", "nonsense"]);
    assert!(!ok);
    assert!(err.contains("unknown suite"));
}

#[test]
fn roofline_report_contains_worked_example() {
    let (ok, out, _) = hosfem(&[
        "roofline", "--profile", "a100", "--equation", "helmholtz", "--ncol", "1", "--order", "7", "--variant", "trilinear",
        "--format", "csv",
    ]);
    assert!(ok);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let rec = rdr.records().next().unwrap().unwrap();
    let get = |k: &str| rec[headers.iter().position(|h| h == k).unwrap()].to_string();
    let r_eff: f64 = get("r_eff").parse().unwrap();
    assert!((r_eff - 4.87e12).abs() / 4.87e12 < 0.01);
    assert_eq!(get("bound"), "memory");
}

#[test]
fn presets_are_listed() {
    let (ok, out, _) = hosfem(&["roofline", "--list-presets"]);
    assert!(ok);
    assert!(out.contains("name = a100") && out.contains("name = k100"));
}

#[test]
fn custom_profile_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hw.txt");
    std::fs::write(
        &path,
        "name = lab\npeak_general = 1e12\npeak_matrix = none\nbandwidth_measured = 1e11\nbandwidth_theoretical = 2e11\n",
    )
    .unwrap();
    let (ok, out, err) = hosfem(&["roofline", "--profile", path.to_str().unwrap(), "--order", "3"]);
    assert!(ok, "{err}");
    assert!(out.lines().skip(1).all(|l| l.starts_with("lab")));
    let (ok, _, _) = hosfem(&["roofline", "--profile", "/nonexistent/profile"]);
    assert!(!ok);
}

#[test]
fn bench_csv_round_trips_and_sweeps() {
    let (ok, out, err) = hosfem(&[
        "bench", "--order", "3,5", "--elements", "64", "--repeats", "3", "--variant", "trilinear", "--format", "csv",
        "--threads", "1",
    ]);
    assert!(ok, "{err}");
    let recs = read_bench_csv(out.as_bytes()).unwrap();
    assert_eq!(recs.len(), 2);
    for r in &recs {
        assert_eq!(r.repeats, 3);
        assert_eq!(r.elements, 64);
        assert!(r.p_eff > 0.0 && r.p_eff <= r.p_tot);
        assert!(r.efficiency_pct > 0.0);
    }
    let mut buf = Vec::new();
    hosfem::bench::write_csv(&recs, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), out);
}

#[test]
fn bench_rejects_incompatible_variant() {
    let (ok, _, err) = hosfem(&["bench", "--variant", "parallelepiped", "--perturbation", "0.2", "--elements", "8", "--order", "2"]);
    assert!(!ok);
    assert!(err.contains("parallelepiped"));
    let (ok, _, _) = hosfem(&["bench", "--variant", "trilinear-merged", "--equation", "poisson", "--elements", "8"]);
    assert!(!ok);
}

#[test]
fn nekbone_config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nek.txt");
    std::fs::write(&path, "order = 3\nelements = 2x2x2\nequation = helmholtz\nvariants = stored,trilinear-merged\nperturbation = 0.1\n")
        .unwrap();
    let (ok, out, err) = hosfem(&["nekbone", "--config", path.to_str().unwrap(), "--tol", "1e-6", "--format", "csv"]);
    assert!(ok, "{err}");
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("variant,iterations"));
    assert!(lines[1].starts_with("stored,") && lines[2].starts_with("trilinear-merged,"));
}

#[test]
fn json_output_parses() {
    let (ok, out, _) = hosfem(&["verify", "--suite", "workload,roofline", "--format", "json"]);
    assert!(ok);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["suites"].as_array().unwrap().len(), 2);
}

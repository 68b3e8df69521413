use std::path::Path;
use std::process::{Command, Output};

fn ichea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ichea")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_instance(dir: &Path, stem: &str, crs: &str, stu: &str) -> String {
    std::fs::write(dir.join(format!("{stem}.crs")), crs).unwrap();
    std::fs::write(dir.join(format!("{stem}.stu")), stu).unwrap();
    dir.join(stem).display().to_string()
}

#[test]
fn conflict_free_instance_solves_at_zero_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = write_instance(tmp.path(), "free", "1 1\n2 1\n3 1\n4 1\n", "1\n2\n3\n4\n");
    let sol = tmp.path().join("free.sol");
    let out = ichea(&[
        "solve", "--instance", &stem, "--slots", "3", "--seed", "1", "--max-generations", "500",
        "--out", &sol.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["feasible"], true);
    assert_eq!(summary["cost"], "0.0000");
    assert_eq!(summary["assigned"], 4);
    let check = ichea(&["evaluate", "--instance", &stem, "--slots", "3", "--solution", &sol.display().to_string()]);
    assert_eq!(stdout(&check), "violations: 0\ncost: 0.0000\n");
}

#[test]
fn evaluate_reports_adjacent_pair_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = write_instance(tmp.path(), "pair", "1 1\n2 1\n", "1 2\n");
    let sol = tmp.path().join("pair.sol");
    std::fs::write(&sol, "1 0\n2 1\n").unwrap();
    let out = ichea(&["evaluate", "--instance", &stem, "--slots", "4", "--solution", &sol.display().to_string()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "violations: 0\ncost: 16.0000\n");

    std::fs::write(&sol, "1 2\n2 2\n").unwrap();
    let out = ichea(&["evaluate", "--instance", &stem, "--slots", "4", "--solution", &sol.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out), "violations: 1\ncost: infeasible\n");
}

#[test]
fn errors_exit_with_code_two_and_one_message() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = write_instance(tmp.path(), "pair", "1 1\n2 1\n", "1 2\n");
    let missing = tmp.path().join("absent.sol").display().to_string();
    let out = ichea(&["evaluate", "--instance", &stem, "--slots", "4", "--solution", &missing]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.matches("No such file").count(), 1, "{err}");

    assert_eq!(ichea(&["solve"]).status.code(), Some(2));
    assert_eq!(ichea(&["nqueen", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn nqueen_solutions_are_verified_against_the_oracle() {
    let out = ichea(&["nqueen", "--n", "8", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<u32> = text.lines().next().unwrap().split(' ').map(|r| r.parse().unwrap()).collect();
    assert_eq!(rows.len(), 8);
    assert!(text.contains("verified against 92 enumerated solutions"), "{text}");

    let out = ichea(&["nqueen", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("no solution exists for N = 3"));
}

#[test]
fn whatif_absorbs_an_unconstrained_exam_without_stepping_back() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = write_instance(tmp.path(), "base", "1 2\n2 1\n3 1\n", "1 2\n1 3\n");
    let snaps = tmp.path().join("snaps").display().to_string();
    let out = ichea(&[
        "solve", "--instance", &stem, "--slots", "3", "--seed", "2", "--max-generations", "500",
        "--snapshots", &snaps,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ichea(&[
        "whatif", "--instance", &stem, "--slots", "3", "--seed", "2", "--snapshots", &snaps,
        "--add-exam", "4", "--students", "2",
    ]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("after 0 step(s) back"), "{text}");
}

#[test]
fn bench_writes_statistics_per_instance_and_mode() {
    let tmp = tempfile::tempdir().unwrap();
    write_instance(tmp.path(), "tiny", "1 1\n2 1\n3 1\n", "1 2\n2 3\n");
    std::fs::write(tmp.path().join("suite.txt"), "# name slots\ntiny 3\nmissing 3\n").unwrap();
    let stem = tmp.path().join("out");
    let out = ichea(&[
        "bench", "--suite", &tmp.path().join("suite.txt").display().to_string(),
        "--data-dir", &tmp.path().display().to_string(), "--trials", "3", "--max-generations", "300",
        "--out", &stem.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(stem.with_extension("csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows[..2] {
        assert_eq!(&row[0], "tiny");
        assert_eq!(&row[6], "1.00");
        assert!(row[7].is_empty());
    }
    for row in &rows[2..] {
        assert_eq!((&row[0], &row[2], &row[6]), ("missing", "NA", "0.00"));
        assert!(row[7].contains("missing.crs"), "{}", &row[7]);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 3);
}

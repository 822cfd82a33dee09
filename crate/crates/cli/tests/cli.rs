use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(format!("{name}.json"))
}

fn slosc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slosc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn solve_classical_csv() {
    let path = problem("classical");
    let out = slosc(&["solve", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("# xi="));
    assert_eq!(text.lines().nth(1), Some("n,lambda,zero_count,inertia,method_agreement"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 5);
    for (k, row) in rows.iter().enumerate() {
        let n = k as i64 + 1;
        assert_eq!(row[0].parse::<i64>().unwrap(), n);
        let lambda: f64 = row[1].parse().unwrap();
        let exact = (n as f64 * PI).powi(2);
        assert!((lambda - exact).abs() <= 1e-8 * exact, "{lambda} vs {exact}");
        assert_eq!(row[2], k.to_string());
        assert_eq!(row[3], k.to_string());
        assert_eq!(row[4], "true");
    }
}

#[test]
fn solve_writes_eigenfunctions() {
    let dir = tempfile::tempdir().unwrap();
    let path = problem("delta");
    let out = slosc(&[
        "solve",
        path.to_str().unwrap(),
        "--n-max",
        "2",
        "--eigenfunction-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("eigenfunction_2.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,y,quasi_derivative"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.first().unwrap()[0], 0.0);
    assert_eq!(rows.last().unwrap()[0], 1.0);
    let sign_changes = rows.windows(2).filter(|w| w[0][1] * w[1][1] < 0.0).count();
    assert_eq!(sign_changes, 1);
}

#[test]
fn output_is_deterministic() {
    let path = problem("indefinite");
    let args = ["solve", path.to_str().unwrap(), "--xi", "0", "--n-max", "3"];
    let a = slosc(&args);
    let b = slosc(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.txt");
    let path = problem("robin");
    let printed = slosc(&["solve", path.to_str().unwrap(), "--format", "text"]);
    let written = slosc(&["solve", path.to_str().unwrap(), "--format", "text", "--out", target.to_str().unwrap()]);
    assert!(written.status.success());
    assert!(written.stdout.is_empty());
    assert_eq!(std::fs::read(&target).unwrap(), printed.stdout);
}

#[test]
fn verify_passes_on_delta_problem() {
    let path = problem("delta");
    let out = slosc(&["verify", path.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.starts_with("# xi="));
    assert!(text.lines().skip(2).all(|l| l.contains(",true,")));
}

#[test]
fn unknown_field_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(problem("classical")).unwrap().replace("theta1", "theta_one");
    std::fs::write(&bad, text).unwrap();
    let out = slosc(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("theta_one"), "{}", stderr(&out));
}

#[test]
fn invalid_values_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(problem("classical")).unwrap().replace("\"values\": [1]", "\"values\": [-1]");
    std::fs::write(&bad, text).unwrap();
    let out = slosc(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`p`"), "{}", stderr(&out));
}

#[test]
fn bad_arguments_exit_with_two() {
    let path = problem("classical");
    let p = path.to_str().unwrap();
    for args in [
        vec!["solve", p, "--mesh-n", "4"],
        vec!["solve", p, "--n-max", "0"],
        vec!["solve", p, "--tol-ode", "2"],
        vec!["solve", p, "--xi", "soon"],
        vec!["solve", "/nonexistent/problem.json"],
        vec!["conjugate", p],
    ] {
        let out = slosc(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn non_positive_xi_is_a_numeric_failure() {
    let path = problem("indefinite");
    let out = slosc(&["solve", path.to_str().unwrap(), "--xi", "30"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn inertia_scan_over_lambda() {
    let path = problem("classical");
    let out = slosc(&["inertia", path.to_str().unwrap(), "--lambda-min", "0", "--lambda-max", "100", "--lambda-steps", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("lambda,negative,zero,positive"));
    let negatives: Vec<String> = data_rows(&format!("#\n{text}")).iter().map(|r| r[1].clone()).collect();
    assert_eq!(negatives, ["0", "2", "3"]);
}

#[test]
fn inertia_scan_over_x_matches_conjugate_points() {
    let path = problem("classical");
    let p = path.to_str().unwrap();
    let inertia = stdout(&slosc(&["inertia", p, "--lambda", "100", "--x-steps", "4"]));
    let conj = stdout(&slosc(&["conjugate", p, "--lambda", "100"]));
    assert!(inertia.starts_with("# lambda=100\n"));
    let points: Vec<f64> = data_rows(&conj).iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(points.len(), 3);
    for (k, z) in points.iter().enumerate() {
        assert!((z - (k + 1) as f64 * PI / 10.0).abs() < 1e-8, "{z}");
    }
    for row in data_rows(&inertia) {
        let x: f64 = row[0].parse().unwrap();
        let below = points.iter().filter(|&&z| z < x).count();
        assert_eq!(row[1], below.to_string(), "x = {x}");
    }
}

#[test]
fn eigencurves_change_sign_at_eigenvalues() {
    let path = problem("classical");
    let out = slosc(&[
        "eigencurves",
        path.to_str().unwrap(),
        "--n-max",
        "2",
        "--lambda-min",
        "0",
        "--lambda-max",
        "50",
        "--lambda-steps",
        "51",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("lambda,Lambda_1,Lambda_2"));
    let rows: Vec<Vec<f64>> = data_rows(&format!("#\n{text}"))
        .iter()
        .map(|r| r.iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    for (col, exact) in [(1, PI * PI), (2, 4.0 * PI * PI)] {
        let crossing = rows.windows(2).find(|w| w[0][col] > 0.0 && w[1][col] <= 0.0).unwrap();
        assert!(crossing[0][0] < exact && exact <= crossing[1][0] + 0.1, "Λ_{col} crosses at {}", crossing[1][0]);
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ballmodel::colligation::Colligation as GColligation;
use ballmodel::matcore::fro;
use ballmodel::random::{random_unitary, rng, row_with_unit_singular_values, unitary_of_size};
use ballmodel::{Colligation, Matrix, RowContraction, C64};
use ballmodel_cli::io::{ColligationFile, MatrixFile, RowContractionFile};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ballmodel"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn matrix(v: &Value) -> Matrix {
    let f: MatrixFile = serde_json::from_value(v.clone()).unwrap();
    f.to_matrix("report").unwrap()
}

fn write(dir: &Path, name: &str, v: impl serde::Serialize) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p.display().to_string()
}

fn split_row(row: &Matrix, d: usize) -> Vec<Matrix> {
    let n = row.nrows();
    (0..d).map(|k| row.columns(k * n, n).into_owned()).collect()
}

#[test]
fn scalar_characteristic_function() {
    let o = run(&["rowc", "charfunc", "--file", data("t06.json").to_str().unwrap(), "--points", "0.5"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let theta = matrix(&v["values"]["theta"][0]["value"]);
    assert!((theta[(0, 0)] - C64::new(-1.0 / 7.0, 0.0)).norm() < 1e-14);
}

#[test]
fn spherical_example_report() {
    let o = run(&["example", "spherical", "--lambda", "1,0", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let k = matrix(&v["values"]["kernel_at_origin"]);
    let mut expect = Matrix::zeros(2, 2);
    expect[(1, 1)] = C64::new(1.0, 0.0);
    assert!(fro(&(k - expect)) < 1e-15);
    assert_eq!(v["values"]["classification"]["cnc"], Value::Bool(false));
    assert_eq!(v["values"]["classification"]["strongly_cc"], Value::Bool(true));
    assert_eq!(v["values"]["classification"]["cc"], Value::Bool(true));

    let o = run(&["example", "spherical", "--lambda", "0.5,0.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn agler_verify_on_unitary_and_contractive_inputs() {
    let file = data("random_unitary_colligation.json");
    let o = run(&["agler", "verify", "--file", file.to_str().unwrap(), "--samples", "100", "--seed", "7"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["residuals"]["total"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["seed"], 7);

    let dir = tempfile::tempdir().unwrap();
    let half = Matrix::identity(1, 1) * C64::new(0.5, 0.0);
    let u = Colligation::new(vec![half.clone()], vec![half.clone()], half.clone(), half).unwrap();
    let path = write(dir.path(), "half.json", ColligationFile::from_colligation(&u));
    let o = run(&["agler", "verify", "--file", &path]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["passed"], Value::Bool(false));
    assert!(v["status"].as_str().unwrap().contains("residual total"));
}

#[test]
fn malformed_inputs_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{\"d\": 1,\n \"n\": 1,\n \"T\": [ }").unwrap();
    let o = run(&["rowc", "classify", "--file", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.json") && err.contains("line 3"), "{err}");

    let mut f: ColligationFile = serde_json::from_str(&std::fs::read_to_string(data("random_unitary_colligation.json")).unwrap()).unwrap();
    f.a[1].rows = 3;
    let path = write(dir.path(), "shape.json", &f);
    let o = run(&["check", "colligation", "--file", &path]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("A[1]"));

    let big = RowContractionFile {
        d: 1,
        n: 1,
        t: vec![MatrixFile {
            rows: 1,
            cols: 1,
            data: vec![[1.5, 0.0]],
        }],
    };
    let path = write(dir.path(), "big.json", big);
    assert_eq!(code(&run(&["rowc", "classify", "--file", &path])), 2);
    let t06 = data("t06.json");
    assert_eq!(code(&run(&["rowc", "charfunc", "--file", t06.to_str().unwrap(), "--points", "1.0"])), 2);
    assert_eq!(code(&run(&["rowc", "charfunc", "--file", t06.to_str().unwrap(), "--points", "0.1,0.2"])), 2);
    assert_eq!(code(&run(&["rowc", "nonsense"])), 2);
    assert_eq!(code(&run(&["agler", "verify", "--file", "/nonexistent.json"])), 2);
}

#[test]
fn reports_are_deterministic() {
    let u = data("random_unitary_colligation.json");
    let a = data("row_a.json");
    let b = data("row_b.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["agler", "verify", "--file", u.to_str().unwrap(), "--samples", "20", "--seed", "3"],
        vec!["rowc", "equiv", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()],
        vec!["rowc", "triple-equiv", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()],
        vec!["rowc", "moments", "--file", a.to_str().unwrap(), "--order", "2"],
        vec!["example", "spherical", "--lambda", "0.6,0.8i", "--format", "text"],
    ];
    for args in cases {
        let first = run(&args);
        let second = run(&args);
        assert_eq!(first.stdout, second.stdout, "{args:?}");
        assert_eq!(code(&first), code(&second));
    }
}

#[test]
fn equivalence_witnesses_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(5);
    let row = row_with_unit_singular_values::<f64>(&mut r, 2, 3, 1);
    let t = RowContraction::new(split_row(&row, 2), 1e-9).unwrap();
    let q = random_unitary::<f64>(&mut r, 3);
    let s = t.conjugate(&q);
    let pa = write(dir.path(), "t.json", RowContractionFile::from_row(&t));
    let pb = write(dir.path(), "s.json", RowContractionFile::from_row(&s));
    let o = run(&["rowc", "equiv", "--a", &pa, "--b", &pb]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let w = matrix(&v["witnesses"]["w"]);
    for (x, y) in t.blocks().iter().zip(s.blocks()) {
        assert!(fro(&(&w * x * w.adjoint() - y)) < 1e-8);
    }
    let o = run(&["rowc", "triple-equiv", "--a", &pa, "--b", &pb]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    let o = run(&["rowc", "equiv", "--a", data("row_a.json").to_str().unwrap(), "--b", data("row_c.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(json(&o)["status"].as_str().unwrap().starts_with("not equivalent"));

    // A unitary scalar is not closely connected.
    let one = RowContraction::new(vec![Matrix::identity(1, 1)], 1e-9).unwrap();
    let p1 = write(dir.path(), "one.json", RowContractionFile::from_row(&one));
    let o = run(&["rowc", "triple-equiv", "--a", &p1, "--b", &p1]);
    assert_eq!(code(&o), 1);
    assert!(json(&o)["status"].as_str().unwrap().contains("closely connected"));
}

#[test]
fn colligation_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(9);
    let (d, n, q) = (2, 2, 1);
    let p = (d - 1) * n + q;
    let m = unitary_of_size::<f64>(&mut r, d * n + q);
    let u: GColligation<f64> = GColligation::from_matrix(&m, d, n, p, q).unwrap();
    let path = write(dir.path(), "u.json", ColligationFile::from_colligation(&u));

    let o = run(&["realize", "eval", "--file", &path, "--points", "0.1,0.2i;0,0", "--order", "2"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let s = matrix(&v["values"]["transfer"][0]["value"]);
    let z = [C64::new(0.1, 0.0), C64::new(0.0, 0.2)];
    assert!(fro(&(s - u.transfer_eval(&z).unwrap())) < 1e-14);
    let s0 = matrix(&v["values"]["taylor"]["0,0"]);
    assert!(fro(&(s0 - u.dmat())) < 1e-15);

    for args in [
        vec!["check", "colligation", "--file", &path],
        vec!["agler", "defects", "--file", &path],
        vec!["model", "verify", "--file", &path, "--kind", "tcfm"],
        vec!["model", "verify", "--file", &path, "--kind", "cfm", "--format", "text"],
    ] {
        let o = run(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
    }
    let o = run(&["check", "colligation", "--file", &path, "--format", "text"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("flags.unitary: true"), "{text}");

    let points = write(dir.path(), "pts.json", vec![vec![[0.1, 0.0], [0.0, -0.3]]]);
    let o = run(&["realize", "eval", "--file", &path, "--points", &points]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["values"]["transfer"].as_array().unwrap().len(), 1);
}

#[test]
fn row_classification_and_moments() {
    let a = data("row_a.json");
    let o = run(&["rowc", "classify", "--file", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["flags"]["forms_agree"], Value::Bool(true));
    let o = run(&["rowc", "moments", "--file", a.to_str().unwrap(), "--order", "2"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["values"]["nc_moments"][""].is_object());
    assert!(v["values"]["expanded_moments"]["v=;vp=;k=1;j=1"].is_object());
}

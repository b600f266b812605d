use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hierlsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierlsq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hierlsq-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_flag(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn quadratic_section_values_are_squares() {
    let dir = scratch("sections");
    let o = hierlsq(&[
        "--problem",
        "QUAD",
        "--command",
        "sections",
        "--grid-density",
        "21",
        "--out",
        &out_flag(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.join("section_0.csv"))
        .unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "x_0");
    assert_eq!(&header[1], "F");
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let v: f64 = rec[1].parse().unwrap();
        assert!((v - x * x).abs() <= 1e-10, "x={x} F={v}");
        rows += 1;
    }
    assert_eq!(rows, 21);
}

#[test]
fn indefinite_slice_exits_with_witness() {
    let o = hierlsq(&["--problem", "NEG_Y", "--command", "solve"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("not positive definite"), "{err}");
    assert!(err.contains("witness: ["), "{err}");
}

#[test]
fn unknown_problem_is_an_input_error() {
    let o = hierlsq(&["--problem", "NO_SUCH_PROBLEM", "--command", "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn malformed_problem_file_is_an_input_error() {
    let dir = scratch("malformed");
    let path = dir.join("broken.toml");
    fs::write(&path, "dimension = \"two\"\n[model\n").unwrap();
    let o = hierlsq(&["--problem", path.to_str().unwrap(), "--command", "solve"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_flags_are_input_errors() {
    let o = hierlsq(&[
        "--problem",
        "QUAD",
        "--command",
        "solve",
        "--grid-density",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = hierlsq(&["--problem", "QUAD", "--command", "recover"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn two_wells_census() {
    let dir = scratch("audit");
    let o = hierlsq(&[
        "--problem",
        "TWO_WELLS",
        "--command",
        "audit",
        "--out",
        &out_flag(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("audit.json")).unwrap()).unwrap();
    assert_eq!(v["census"]["counts"]["0"], 2);
    assert_eq!(v["census"]["counts"]["1"], 1);
    assert_eq!(v["census"]["alternating_sum"], 1);
    assert_eq!(v["census"]["passed"], true);
}

#[test]
fn equivalence_is_reproducible_for_a_seed() {
    let run = |tag: &str| {
        let dir = scratch(tag);
        let o = hierlsq(&[
            "--problem",
            "ANISO3",
            "--command",
            "equivalence",
            "--starts",
            "4",
            "--seed",
            "17",
            "--out",
            &out_flag(&dir),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(dir.join("equivalence.json")).unwrap()
    };
    assert_eq!(run("eq-a"), run("eq-b"));
}

#[test]
fn recover_reports_completed_vector() {
    let dir = scratch("recover");
    let o = hierlsq(&[
        "--problem",
        "DEGEN_LINE",
        "--command",
        "recover",
        "--anchor-index",
        "0",
        "--anchor-value",
        "-0.5",
        "--out",
        &out_flag(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("recover.json")).unwrap()).unwrap();
    let p: Vec<f64> = serde_json::from_value(v["recovered"].clone()).unwrap();
    assert_eq!(p[0], -0.5);
    assert!((p[1] - 2.5).abs() <= 1e-9);
}

#[test]
fn trace_flags_boundary_samples() {
    let dir = scratch("trace");
    let o = hierlsq(&[
        "--problem",
        "DEGEN_LINE",
        "--command",
        "trace",
        "--x-indices",
        "0",
        "--y-indices",
        "1",
        "--grid-density",
        "5",
        "--out",
        &out_flag(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let boundary: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    // g(x) = 2 - x leaves [-10, 10] only at x = -10
    assert_eq!(boundary, ["1", "0", "0", "0", "0"]);
}

#[test]
fn output_directory_holds_only_final_files() {
    let dir = scratch("atomic");
    let o = hierlsq(&[
        "--problem",
        "QUAD",
        "--command",
        "solve",
        "--out",
        &out_flag(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["solve.json", "solve.txt"]);
    let text = fs::read_to_string(dir.join("solve.txt")).unwrap();
    assert_eq!(text, String::from_utf8(o.stdout).unwrap());
}

#[test]
fn partially_linear_problem_file() {
    let dir = scratch("toml");
    let mut data = String::from("t,d\n");
    for k in 0..12 {
        let t = 0.5 * k as f64;
        data.push_str(&format!("{t},{}\n", 1.5 * (-0.8 * t).exp() + 0.5));
    }
    fs::write(dir.join("decay.csv"), data).unwrap();
    fs::write(
        dir.join("decay.toml"),
        r#"
dimension = 3
domain_box = [[-3.0, -0.1], [-10.0, 10.0], [-10.0, 10.0]]
data_file = "decay.csv"

[split]
x_indices = [0]
y_indices = [1, 2]

[model]
kind = "partially_linear"
nonlinear_dim = 1
basis = [
  { kind = "exponential", param = 0 },
  { kind = "constant", value = 1.0 },
]
"#,
    )
    .unwrap();
    let out = dir.join("out");
    let o = hierlsq(&[
        "--problem",
        dir.join("decay.toml").to_str().unwrap(),
        "--command",
        "solve",
        "--out",
        &out_flag(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    let p: Vec<f64> = serde_json::from_value(v["minimizer"].clone()).unwrap();
    for (got, want) in p.iter().zip([-0.8, 1.5, 0.5]) {
        assert!((got - want).abs() <= 1e-6, "{p:?}");
    }
    // only the nonlinear coordinate is searched
    assert_eq!(v["evaluations_by_coordinate"][1], 0);
    assert_eq!(v["evaluations_by_coordinate"][2], 0);
}

//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when the method refuses the problem (a
//! violated convexity or Morse hypothesis, a failed audit), 2 on bad input.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::morse::{
    census_report, find_critical_points, inward_gradient_witness, morse_equality_audit,
};
use crate::problem::{
    build_partially_linear, lookup, BasisExpr, BasisFn, Compact, DomainBox, MeritFunction,
    ParameterSplit, PartiallyLinearModel,
};
use crate::section::{minimal_section_1d, section_csv, sublevel_interval, trace_implicit};
use crate::solver::{equivalence_report, recover_from_anchor, solve_hierarchical, Tolerances};
use crate::subminimize::default_probe_density;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Trace,
    Sections,
    Audit,
    Recover,
    Equivalence,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "hierlsq",
    version,
    about = "Hierarchical least-squares minimization"
)]
pub struct Args {
    /// Catalog name or path to a TOML problem file.
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_enum)]
    pub command: Command,
    /// Outer coordinates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub x_indices: Option<Vec<usize>>,
    /// Eliminated coordinates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub y_indices: Option<Vec<usize>>,
    /// Grid points per axis (bracketing, traces, sections and audit seeds).
    #[arg(long)]
    pub grid_density: Option<usize>,
    /// Slice gradient tolerance (default 1e-10 * max(1, F)).
    #[arg(long, allow_hyphen_values = true)]
    pub inner_tol: Option<f64>,
    /// Full gradient tolerance at the reported minimizer.
    #[arg(long, allow_hyphen_values = true)]
    pub outer_tol: Option<f64>,
    /// Outer step tolerance (default 1e-8 times the widest box edge).
    #[arg(long, allow_hyphen_values = true)]
    pub x_tol: Option<f64>,
    /// Coordinate fixed by `recover`.
    #[arg(long)]
    pub anchor_index: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub anchor_value: Option<f64>,
    /// Number of random starts for `equivalence`.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Seed for the `equivalence` starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sub-level values for `sections`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub command: Command,
    pub split: Option<ParameterSplit>,
    pub grid_density: Option<usize>,
    pub tolerances: Tolerances,
    pub anchor: Option<(usize, f64)>,
    pub starts: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self> {
        let split = match (args.x_indices, args.y_indices) {
            (Some(x), Some(y)) => Some(ParameterSplit::new(x, y)?),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "--x-indices and --y-indices must be given together".into(),
                ))
            }
        };
        let anchor = match (args.anchor_index, args.anchor_value) {
            (Some(i), Some(v)) => Some((i, v)),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "--anchor-index and --anchor-value must be given together".into(),
                ))
            }
        };
        if args.command == Command::Recover && anchor.is_none() {
            return Err(Error::Config(
                "recover needs --anchor-index and --anchor-value".into(),
            ));
        }
        if let Some(d) = args.grid_density {
            if d < 3 {
                return Err(Error::Config(format!(
                    "grid density must be at least 3, got {d}"
                )));
            }
        }
        for (name, v) in [
            ("inner", args.inner_tol),
            ("outer", args.outer_tol),
            ("x", args.x_tol),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!(
                        "--{name}-tol must be positive, got {v}"
                    )));
                }
            }
        }
        let mut tolerances = Tolerances {
            inner_tol: args.inner_tol,
            x_tol: args.x_tol,
            ..Tolerances::default()
        };
        if let Some(t) = args.outer_tol {
            tolerances.outer_tol = t;
        }
        Ok(Self {
            problem: args.problem,
            command: args.command,
            split,
            grid_density: args.grid_density,
            tolerances,
            anchor,
            starts: args.starts,
            seed: args.seed,
            levels: args.levels,
            output_dir: args.out,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    dimension: usize,
    split: Option<SplitTable>,
    domain_box: Option<Vec<(f64, f64)>>,
    model: ModelTable,
    data_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitTable {
    x_indices: Vec<usize>,
    y_indices: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ModelTable {
    Catalog {
        name: String,
    },
    PartiallyLinear {
        nonlinear_dim: usize,
        basis: Vec<BasisExpr>,
        offset: Option<BasisExpr>,
    },
}

/// A merit function with the split its source suggests.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub name: String,
    pub merit: MeritFunction,
    pub split: Option<ParameterSplit>,
}

/// Reads `t,d` observations.
pub fn read_data_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "d" {
        return Err(Error::Config(format!(
            "{}: header must be `t,d`",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for row in reader.deserialize::<(f64, f64)>() {
        let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        samples.push(row);
    }
    Ok(samples)
}

/// Parses a TOML problem file; `base` resolves a relative `data_file`.
pub fn parse_problem_file(text: &str, base: &Path) -> Result<LoadedProblem> {
    let file: ProblemFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("problem file: {e}")))?;
    let domain = match &file.domain_box {
        Some(b) => Some(DomainBox::new(b.clone())?),
        None => None,
    };
    let (name, mut merit) = match file.model {
        ModelTable::Catalog { name } => {
            let entry = lookup(&name)
                .ok_or_else(|| Error::Config(format!("unknown catalog problem `{name}`")))?;
            (entry.name.to_string(), entry.merit)
        }
        ModelTable::PartiallyLinear {
            nonlinear_dim,
            basis,
            offset,
        } => {
            let data = file
                .data_file
                .as_ref()
                .ok_or_else(|| Error::Config("partially_linear model needs data_file".into()))?;
            let samples = read_data_csv(&base.join(data))?;
            let model = PartiallyLinearModel {
                basis: basis.into_iter().map(BasisFn::from).collect(),
                offset: offset.map(BasisFn::from),
                samples,
                nonlinear_dim,
            };
            let dim = model.dim();
            let domain = domain
                .clone()
                .unwrap_or_else(|| DomainBox::default_for(dim));
            (
                "partially_linear".to_string(),
                build_partially_linear(model, domain)?,
            )
        }
    };
    if merit.dim() != file.dimension {
        return Err(Error::DimensionMismatch {
            expected: file.dimension,
            actual: merit.dim(),
        });
    }
    if let Some(d) = domain {
        merit = merit.with_domain(d)?;
    }
    let split = match file.split {
        Some(s) => Some(ParameterSplit::new(s.x_indices, s.y_indices)?),
        None => None,
    };
    Ok(LoadedProblem { name, merit, split })
}

/// Catalog name, or a path to a TOML problem file.
pub fn load_problem(source: &str) -> Result<LoadedProblem> {
    let path = Path::new(source);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        return parse_problem_file(&text, path.parent().unwrap_or(Path::new(".")));
    }
    let entry = lookup(source).ok_or_else(|| {
        Error::Config(format!(
            "`{source}` is neither a problem file nor a catalog problem"
        ))
    })?;
    Ok(LoadedProblem {
        name: entry.name.to_string(),
        merit: entry.merit,
        split: None,
    })
}

/// Report text and files produced by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: String,
    /// `(file name, contents)` to place in the output directory.
    pub files: Vec<(String, String)>,
    /// 0 on success, 1 when the result is a refusal.
    pub status: i32,
}

fn resolve_split(cfg: &RunConfig, problem: &LoadedProblem) -> Result<ParameterSplit> {
    let split = match (&cfg.split, &problem.split) {
        (Some(s), _) | (None, Some(s)) => s.clone(),
        (None, None) => match problem.merit.natural_split() {
            Some(s) => s,
            None => ParameterSplit::with_x(vec![0], problem.merit.dim())?,
        },
    };
    if split.dim() != problem.merit.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.merit.dim(),
            actual: split.dim(),
        });
    }
    Ok(split)
}

/// Every point of the `density`-per-axis grid over `b`, first axis slowest.
fn box_points(b: &DomainBox, density: usize) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for i in 0..b.dim() {
        let axis = b.axis_grid(i, density);
        points = points
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Runs one command without touching the filesystem for output.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let problem = load_problem(&cfg.problem)?;
    let f = &problem.merit;
    let tol = &cfg.tolerances;
    match cfg.command {
        Command::Solve => {
            let split = resolve_split(cfg, &problem)?;
            let r = solve_hierarchical(f, &split, cfg.grid_density, tol)?;
            Ok(RunOutput {
                report: r.to_text(),
                files: vec![
                    ("solve.txt".into(), r.to_text()),
                    ("solve.json".into(), r.to_json()),
                ],
                status: 0,
            })
        }
        Command::Trace => {
            let split = resolve_split(cfg, &problem)?;
            let density = cfg.grid_density.unwrap_or(101);
            let x_box = f.domain().project(split.x_indices());
            let grid = box_points(&x_box, density);
            let t = trace_implicit(f, &split, &grid, tol.inner_tol)?;
            let mut csv = String::new();
            let cols: Vec<String> = split
                .x_indices()
                .iter()
                .map(|i| format!("x_{i}"))
                .chain(split.y_indices().iter().map(|j| format!("g_{j}")))
                .chain([
                    "F".to_string(),
                    "residual".to_string(),
                    "boundary".to_string(),
                ])
                .collect();
            csv.push_str(&cols.join(","));
            csv.push('\n');
            for k in 0..grid.len() {
                let row: Vec<String> = t.x_samples[k]
                    .iter()
                    .chain(&t.g_values[k])
                    .chain([&t.section_values[k], &t.residual_norms[k]])
                    .map(|v| v.to_string())
                    .chain([u8::from(!t.active_bounds[k].is_empty()).to_string()])
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            let report = format!(
                "trace: {} points, split x={:?} y={:?}\nmax residual: {:e}\non zero set: {}\nindex constant: {}\nboundary samples: {}\n",
                grid.len(),
                split.x_indices(),
                split.y_indices(),
                t.max_residual(),
                t.on_zero_set(),
                t.index_constant(),
                t.boundary_samples().len()
            );
            let json = serde_json::to_string_pretty(&t).expect("trace serializes");
            Ok(RunOutput {
                report,
                files: vec![("trace.csv".into(), csv), ("trace.json".into(), json)],
                status: 0,
            })
        }
        Command::Sections => {
            let density = cfg.grid_density.unwrap_or(101);
            let indices: Vec<usize> = match &cfg.split {
                Some(s) => s.x_indices().to_vec(),
                None => (0..f.dim()).collect(),
            };
            let mut report = String::new();
            let mut files = Vec::new();
            for i in indices {
                let grid = f.domain().axis_grid(i, density);
                let s = minimal_section_1d(f, i, &grid, tol.inner_tol)?;
                let mut intervals = Vec::new();
                for &z in &cfg.levels {
                    match sublevel_interval(f, &s, z, tol.inner_tol) {
                        Ok(iv) => intervals.push(iv),
                        Err(e) => report.push_str(&format!("section {i}: level {z}: {e}\n")),
                    }
                }
                report.push_str(&format!(
                    "section {i}: {} points, {} local minima\n",
                    grid.len(),
                    s.local_minima.len()
                ));
                for m in &s.local_minima {
                    report.push_str(&format!(
                        "  minimum at {} value {}{}\n",
                        Compact(m.x),
                        Compact(m.value),
                        if m.plateau { " (plateau)" } else { "" }
                    ));
                }
                for iv in &intervals {
                    report.push_str(&format!(
                        "  level {}: [{}, {}]\n",
                        iv.level_z,
                        Compact(iv.lo),
                        Compact(iv.hi)
                    ));
                }
                files.push((format!("section_{i}.csv"), section_csv(&s, &intervals)));
            }
            Ok(RunOutput {
                report,
                files,
                status: 0,
            })
        }
        Command::Audit => {
            let density = cfg.grid_density.unwrap_or(9);
            let search = find_critical_points(f, density, None)?;
            let witness = inward_gradient_witness(f, density)?;
            let census = match morse_equality_audit(&search.points, witness.is_none()) {
                Ok(c) => Some(c),
                Err(Error::DegenerateCriticalPoints(_)) => None,
                Err(e) => return Err(e),
            };
            let mut report = census_report(&search, census.as_ref());
            if let Some(w) = &witness {
                report.push_str(&format!(
                    "inward gradient at {:?} (axis {}, outward component {})\n",
                    w.point, w.axis, w.normal_component
                ));
            }
            let passed = census.as_ref().is_some_and(|c| c.passed);
            let json = serde_json::to_string_pretty(&serde_json::json!({
                "search": search,
                "census": census,
                "inward_witness": witness,
            }))
            .expect("audit serializes");
            Ok(RunOutput {
                files: vec![
                    ("audit.txt".into(), report.clone()),
                    ("audit.json".into(), json),
                ],
                report,
                status: if passed { 0 } else { 1 },
            })
        }
        Command::Recover => {
            let (i, v) = cfg.anchor.expect("validated in RunConfig");
            let r = recover_from_anchor(f, i, v, tol.inner_tol)?;
            let json = serde_json::to_string_pretty(&r).expect("recovery serializes");
            Ok(RunOutput {
                report: r.to_text(),
                files: vec![
                    ("recover.txt".into(), r.to_text()),
                    ("recover.json".into(), json),
                ],
                status: 0,
            })
        }
        Command::Equivalence => {
            let split = resolve_split(cfg, &problem)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let dom = f.domain();
            let starts: Vec<Vec<f64>> = (0..cfg.starts)
                .map(|_| {
                    (0..f.dim())
                        .map(|i| rng.random_range(dom.lo(i)..dom.hi(i)))
                        .collect()
                })
                .collect();
            let density = cfg.grid_density.or(Some(default_probe_density(1)));
            let r = equivalence_report(f, &split, &starts, density, tol)?;
            Ok(RunOutput {
                report: r.to_text(),
                files: vec![
                    ("equivalence.txt".into(), r.to_text()),
                    ("equivalence.json".into(), r.to_json()),
                ],
                status: 0,
            })
        }
    }
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

/// Exit status for an error: 1 for refusals, 2 for input errors.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_refusal() {
        1
    } else {
        2
    }
}

/// Runs the command and writes its files, returning the exit status.
pub fn run(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(out) => {
            print!("{}", out.report);
            if let Some(dir) = &cfg.output_dir {
                for (name, contents) in &out.files {
                    if let Err(e) = write_atomic(dir, name, contents) {
                        eprintln!("error: writing {}: {e}", dir.join(name).display());
                        return 2;
                    }
                }
            }
            out.status
        }
        Err(e) => {
            let code = exit_code(&e);
            if code == 1 {
                eprintln!("refused: {e}");
                if let Some(w) = e.witness() {
                    eprintln!("witness: {w:?}");
                }
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

/// Parses arguments and runs; clap usage errors map to status 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match RunConfig::from_args(args) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(problem: &str, command: Command) -> RunConfig {
        RunConfig::from_args(Args::parse_from([
            "hierlsq",
            "--problem",
            problem,
            "--command",
            match command {
                Command::Solve => "solve",
                Command::Trace => "trace",
                Command::Sections => "sections",
                Command::Audit => "audit",
                Command::Recover => "recover",
                Command::Equivalence => "equivalence",
            },
        ]))
        .unwrap()
    }

    #[test]
    fn recover_requires_anchor() {
        let args = Args::parse_from(["hierlsq", "--problem", "QUAD", "--command", "recover"]);
        assert!(RunConfig::from_args(args).is_err());
        let args = Args::parse_from([
            "hierlsq",
            "--problem",
            "DEGEN_LINE",
            "--command",
            "recover",
            "--anchor-index",
            "0",
            "--anchor-value",
            "-0.5",
        ]);
        let out = execute(&RunConfig::from_args(args).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.files[1].1).unwrap();
        assert_eq!(v["recovered"][0].as_f64(), Some(-0.5));
        assert!((v["recovered"][1].as_f64().unwrap() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn solve_exp_fit() {
        let out = execute(&cfg("EXP_FIT", Command::Solve)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.files[1].1).unwrap();
        let m = v["minimizer"].as_array().unwrap();
        assert!((m[0].as_f64().unwrap() + 0.5).abs() < 1e-6);
        assert!((m[1].as_f64().unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn audit_two_wells_passes() {
        let out = execute(&cfg("TWO_WELLS", Command::Audit)).unwrap();
        assert_eq!(out.status, 0);
        assert!(out.report.contains("counts: {0:2, 1:1}"), "{}", out.report);
        assert!(out.report.contains("verdict: pass"));
        let out = execute(&cfg("DEGEN_LINE", Command::Audit)).unwrap();
        assert_eq!(out.status, 1);
    }

    #[test]
    fn refusal_and_input_error_codes() {
        let e = execute(&cfg("NEG_Y", Command::Solve)).unwrap_err();
        assert_eq!(exit_code(&e), 1);
        let e = execute(&cfg("NO_SUCH_PROBLEM", Command::Solve)).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn problem_file_with_data() {
        let dir = std::env::temp_dir().join(format!("hierlsq-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut data = String::from("t,d\n");
        for k in 0..10 {
            let t = k as f64;
            data.push_str(&format!("{t},{}\n", 3.0 * (-0.25 * t).exp()));
        }
        fs::write(dir.join("obs.csv"), data).unwrap();
        let text = r#"
dimension = 2
domain_box = [[-2.0, 1.0], [-10.0, 10.0]]
data_file = "obs.csv"

[split]
x_indices = [0]
y_indices = [1]

[model]
kind = "partially_linear"
nonlinear_dim = 1
basis = [{ kind = "exponential", param = 0 }]
"#;
        let p = parse_problem_file(text, &dir).unwrap();
        assert!(p.merit.is_linear_in(p.split.as_ref().unwrap()));
        let r = solve_hierarchical(
            &p.merit,
            p.split.as_ref().unwrap(),
            None,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.minimizer.distance_inf(&[-0.25, 3.0]) < 1e-6);

        let bad = text.replace("nonlinear_dim", "nonlinear_dims");
        match parse_problem_file(&bad, &dir) {
            Err(Error::Config(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn catalog_problem_file() {
        let text = "dimension = 2\ndomain_box = [[-2.0, 2.0], [-2.0, 2.0]]\n[model]\nkind = \"catalog\"\nname = \"quad\"\n";
        let p = parse_problem_file(text, Path::new(".")).unwrap();
        assert_eq!(p.name, "QUAD");
        assert_eq!(p.merit.domain().hi(0), 2.0);
        let wrong = text.replace("dimension = 2", "dimension = 3");
        assert!(matches!(
            parse_problem_file(&wrong, Path::new(".")),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

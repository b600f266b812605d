//! Implicit-function traces and minimal sections.
//!
//! For a split `p = (x, y)` the conditional minimizer `y = g(x)` solves
//! `F'_y(x, y) = 0`, and the minimal section is the composed function
//! `F[x, g(x)]`. With a single `x` coordinate this gives the
//! one-dimensional section of that parameter, the curve along which the
//! sub-level projection intervals and the per-parameter sensitivity are read.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{MeritFunction, ParameterSplit};
use crate::solver::bracket::{golden_refine, BracketTriplet};
use crate::solver::minimize_box;
use crate::subminimize::{
    certify_split, default_probe_density, probe_strict_convexity, subminimize,
    ConvexityCertificate, SliceProblem, SubMinimum,
};

/// Abscissa tolerance used to polish section minima.
pub const POLISH_TOL: f64 = 1e-10;
/// Agreement required between iterated and direct minimal sections.
pub const NESTING_TOL: f64 = 1e-6;

/// Evaluates the minimal section `x -> F[x, g(x)]` by on-demand slice solves.
///
/// Consecutive solves are warm-started from the previous `y*`.
#[derive(Debug, Clone)]
pub struct SectionEvaluator<'a> {
    merit: &'a MeritFunction,
    split: ParameterSplit,
    inner_tol: Option<f64>,
    warm: Vec<f64>,
    solves: usize,
}

impl<'a> SectionEvaluator<'a> {
    /// No convexity check is made here; callers certify the split first.
    pub fn new(merit: &'a MeritFunction, split: ParameterSplit, inner_tol: Option<f64>) -> Self {
        let warm = merit.domain().project(split.y_indices()).center();
        Self {
            merit,
            split,
            inner_tol,
            warm,
            solves: 0,
        }
    }

    pub fn split(&self) -> &ParameterSplit {
        &self.split
    }

    pub fn merit(&self) -> &MeritFunction {
        self.merit
    }

    /// Number of slice solves performed so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn set_warm_start(&mut self, y: Vec<f64>) {
        self.warm = y;
    }

    pub fn solve(&mut self, x: &[f64]) -> Result<SubMinimum> {
        self.solves += 1;
        let problem = SliceProblem::new(self.merit, &self.split, x.to_vec())?;
        let sub =
            subminimize(&problem, &self.warm, self.inner_tol).map_err(|e| Error::SliceFailed {
                x: x.to_vec(),
                source: Box::new(e),
            })?;
        self.warm = sub.y_star.clone();
        Ok(sub)
    }

    pub fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.solve(x)?.value)
    }

    pub fn point(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.split.assemble(x, y)
    }
}

/// Certifies `split` unless linear elimination makes the inner problem exact.
fn certify_for_trace(
    f: &MeritFunction,
    split: &ParameterSplit,
) -> Result<Option<ConvexityCertificate>> {
    if f.is_linear_in(split) {
        Ok(None)
    } else {
        certify_split(f, split).map(Some)
    }
}

/// Sampled graph `{(x, g(x))}` of the implicit function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicitTrace {
    pub split: ParameterSplit,
    pub x_samples: Vec<Vec<f64>>,
    pub g_values: Vec<Vec<f64>>,
    /// `F[x, g(x)]`.
    pub section_values: Vec<f64>,
    /// `||F'_y(x, g(x))||` per sample, projected onto the free coordinates
    /// where a bound is active.
    pub residual_norms: Vec<f64>,
    pub inner_tols: Vec<f64>,
    /// `y` coordinates held at a box bound per sample; such samples are
    /// constrained minima, not points of the zero set.
    pub active_bounds: Vec<Vec<usize>>,
    /// Morse index of `F''_yy` per sample.
    pub y_index_along_trace: Vec<usize>,
    pub certificate: Option<ConvexityCertificate>,
}

impl ImplicitTrace {
    pub fn max_residual(&self) -> f64 {
        self.residual_norms.iter().fold(0.0, |m, &r| m.max(r))
    }

    /// Every sample is interior and meets its own inner tolerance.
    pub fn on_zero_set(&self) -> bool {
        self.active_bounds.iter().all(Vec::is_empty)
            && self
                .residual_norms
                .iter()
                .zip(&self.inner_tols)
                .all(|(r, t)| r <= t)
    }

    /// Indices of samples whose minimizer lies on the `y`-box boundary.
    pub fn boundary_samples(&self) -> Vec<usize> {
        (0..self.active_bounds.len())
            .filter(|&k| !self.active_bounds[k].is_empty())
            .collect()
    }

    /// True when `F''_yy` has index 0 at every sample.
    pub fn index_constant(&self) -> bool {
        self.y_index_along_trace.iter().all(|&k| k == 0)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.x_samples
            .iter()
            .zip(&self.g_values)
            .map(|(x, y)| self.split.assemble(x, y))
            .collect()
    }
}

/// Solves the slice problem at every grid point.
///
/// Newton solves are continued left to right, then right to left, and the
/// better-certified solution is kept at each point.
pub fn trace_implicit(
    f: &MeritFunction,
    split: &ParameterSplit,
    x_grid: &[Vec<f64>],
    inner_tol: Option<f64>,
) -> Result<ImplicitTrace> {
    let certificate = certify_for_trace(f, split)?;
    let linear = f.is_linear_in(split);
    let mut eval = SectionEvaluator::new(f, split.clone(), inner_tol);

    let mut forward: Vec<Result<SubMinimum>> = Vec::with_capacity(x_grid.len());
    for x in x_grid {
        forward.push(eval.solve(x));
    }
    let mut best = forward;
    if !linear {
        let mut backward = SectionEvaluator::new(f, split.clone(), inner_tol);
        if let Some(Ok(last)) = best.last() {
            backward.set_warm_start(last.y_star.clone());
        }
        for (k, x) in x_grid.iter().enumerate().rev() {
            let candidate = backward.solve(x);
            let replace = match (&best[k], &candidate) {
                (Err(_), Ok(_)) => true,
                (Ok(a), Ok(b)) => b.grad_y_norm < a.grad_y_norm,
                _ => false,
            };
            if replace {
                best[k] = candidate;
            }
        }
    }

    let mut trace = ImplicitTrace {
        split: split.clone(),
        x_samples: x_grid.to_vec(),
        g_values: Vec::with_capacity(x_grid.len()),
        section_values: Vec::with_capacity(x_grid.len()),
        residual_norms: Vec::with_capacity(x_grid.len()),
        inner_tols: Vec::with_capacity(x_grid.len()),
        active_bounds: Vec::with_capacity(x_grid.len()),
        y_index_along_trace: Vec::with_capacity(x_grid.len()),
        certificate,
    };
    for sub in best {
        let sub = sub?;
        trace.g_values.push(sub.y_star);
        trace.section_values.push(sub.value);
        trace.residual_norms.push(sub.grad_y_norm);
        trace.inner_tols.push(sub.inner_tol);
        trace.active_bounds.push(sub.active_bounds);
        trace.y_index_along_trace.push(sub.y_index);
    }
    Ok(trace)
}

/// Local minimum of a one-dimensional section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionMinimum {
    pub grid_index: usize,
    /// Polished abscissa (the grid abscissa for plateau points).
    pub x: f64,
    pub value: f64,
    /// Eliminated coordinates at `x`.
    pub companions: Vec<f64>,
    /// Non-strict minimum on a flat stretch of the section.
    pub plateau: bool,
}

/// One-dimensional minimal section of parameter `parameter_index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalSection1D {
    pub parameter_index: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Remaining `M - 1` coordinates along the section, in ascending index order.
    pub companions: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub local_minima: Vec<SectionMinimum>,
}

impl MinimalSection1D {
    pub fn split(&self) -> ParameterSplit {
        ParameterSplit::with_x(vec![self.parameter_index], self.companions[0].len() + 1)
            .expect("section split is valid")
    }

    /// Full parameter vector at grid point `j`.
    pub fn point(&self, j: usize) -> Vec<f64> {
        self.split().assemble(&[self.grid[j]], &self.companions[j])
    }

    pub fn strict_minima(&self) -> impl Iterator<Item = &SectionMinimum> {
        self.local_minima.iter().filter(|m| !m.plateau)
    }
}

fn tie_tol(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

/// Minimal section along one coordinate with polished local minima.
pub fn minimal_section_1d(
    f: &MeritFunction,
    parameter_index: usize,
    grid: &[f64],
    inner_tol: Option<f64>,
) -> Result<MinimalSection1D> {
    if grid.len() < 3 || !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::BadGrid);
    }
    let split = ParameterSplit::with_x(vec![parameter_index], f.dim())?;
    let x_grid: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
    let trace = trace_implicit(f, &split, &x_grid, inner_tol)?;

    let values = trace.section_values.clone();
    let mut local_minima = Vec::new();
    let mut eval = SectionEvaluator::new(f, split, inner_tol);
    for j in 1..grid.len() - 1 {
        let v = values[j];
        let (l, r) = (values[j - 1], values[j + 1]);
        if v > l + tie_tol(v) || v > r + tie_tol(v) {
            continue;
        }
        let strict = v + tie_tol(v) < l && v + tie_tol(v) < r;
        if !strict {
            local_minima.push(SectionMinimum {
                grid_index: j,
                x: grid[j],
                value: v,
                companions: trace.g_values[j].clone(),
                plateau: true,
            });
            continue;
        }
        let triplet = BracketTriplet::new(grid[j - 1], grid[j], grid[j + 1], l, v, r)?;
        eval.set_warm_start(trace.g_values[j].clone());
        let (x, _) = golden_refine(|u| eval.value(&[u]), &triplet, POLISH_TOL)?;
        let sub = eval.solve(&[x])?;
        local_minima.push(SectionMinimum {
            grid_index: j,
            x,
            value: sub.value,
            companions: sub.y_star,
            plateau: false,
        });
    }

    Ok(MinimalSection1D {
        parameter_index,
        grid: grid.to_vec(),
        values,
        companions: trace.g_values,
        residuals: trace.residual_norms,
        local_minima,
    })
}

/// Projection `[lo, hi]` of the sub-level set `{F <= z}` onto one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubLevelInterval {
    pub parameter_index: usize,
    pub level_z: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SubLevelInterval {
    pub fn contains(&self, other: &SubLevelInterval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Level-`z` crossings of a unimodal section on each side of its minimum.
///
/// Crossings are located by bisection on the continuous section, each probe
/// being a fresh slice solve.
pub fn sublevel_interval(
    f: &MeritFunction,
    section: &MinimalSection1D,
    level_z: f64,
    inner_tol: Option<f64>,
) -> Result<SubLevelInterval> {
    let strict: Vec<&SectionMinimum> = section.strict_minima().collect();
    if strict.len() != 1 || section.local_minima.len() != 1 {
        return Err(Error::NotUnimodal(section.local_minima.len()));
    }
    let min = strict[0];
    if level_z < min.value - tie_tol(min.value) {
        return Err(Error::LevelBelowMinimum {
            level: level_z,
            minimum: min.value,
        });
    }
    let i = section.parameter_index;
    if level_z <= min.value {
        return Ok(SubLevelInterval {
            parameter_index: i,
            level_z,
            lo: min.x,
            hi: min.x,
        });
    }

    let mut eval = SectionEvaluator::new(f, section.split(), inner_tol);
    let grid = &section.grid;
    let left: Vec<usize> = (0..grid.len()).rev().filter(|&j| grid[j] < min.x).collect();
    let right: Vec<usize> = (0..grid.len()).filter(|&j| grid[j] > min.x).collect();

    let mut crossing = |side: &[usize]| -> Result<f64> {
        let mut inner = (min.x, min.companions.clone());
        for &j in side {
            if section.values[j] > level_z {
                eval.set_warm_start(inner.1.clone());
                return bisect_level(&mut eval, inner.0, grid[j], level_z);
            }
            inner = (grid[j], section.companions[j].clone());
        }
        Err(Error::LevelBeyondGrid { level: level_z })
    };
    let lo = crossing(&left)?;
    let hi = crossing(&right)?;
    Ok(SubLevelInterval {
        parameter_index: i,
        level_z,
        lo,
        hi,
    })
}

/// Bisection between `below` (section <= z) and `above` (section > z).
fn bisect_level(
    eval: &mut SectionEvaluator<'_>,
    mut below: f64,
    mut above: f64,
    z: f64,
) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (below + above);
        if mid == below || mid == above {
            break;
        }
        if (above - below).abs() <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
        if eval.value(&[mid])? > z {
            above = mid;
        } else {
            below = mid;
        }
    }
    Ok(0.5 * (below + above))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    NotMonotone,
}

impl Monotonicity {
    /// Strict monotonicity on the grid, the sampled form of injectivity.
    pub fn is_injective(self) -> bool {
        matches!(self, Monotonicity::Increasing | Monotonicity::Decreasing)
    }
}

/// Monotonicity of each companion coordinate along the section grid.
pub fn companion_monotonicity(section: &MinimalSection1D) -> Vec<Monotonicity> {
    let k = section.companions.first().map_or(0, Vec::len);
    (0..k)
        .map(|c| {
            let col: Vec<f64> = section.companions.iter().map(|y| y[c]).collect();
            let diffs: Vec<f64> = col.windows(2).map(|w| w[1] - w[0]).collect();
            let scale = col.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let eps = 1e-9 * scale;
            if diffs.iter().all(|d| d.abs() <= eps) {
                Monotonicity::Constant
            } else if diffs.iter().all(|&d| d > eps) {
                Monotonicity::Increasing
            } else if diffs.iter().all(|&d| d < -eps) {
                Monotonicity::Decreasing
            } else {
                Monotonicity::NotMonotone
            }
        })
        .collect()
}

/// Pointwise comparison of iterated and direct minimal sections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestingPoint {
    pub inner_x: Vec<f64>,
    /// `min over (outer x \ inner x)` of the outer minimal section.
    pub iterated: f64,
    /// The inner minimal section.
    pub direct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestingReport {
    pub outer_split: ParameterSplit,
    pub inner_x: Vec<usize>,
    pub points: Vec<NestingPoint>,
    pub max_abs_diff: f64,
    pub passed: bool,
}

/// Checks that minimizing the outer minimal section over the coordinates in
/// `outer x \ inner x` reproduces the inner minimal section.
pub fn nesting_check(
    f: &MeritFunction,
    outer_split: &ParameterSplit,
    inner_x: &[usize],
    grid: &[Vec<f64>],
    inner_tol: Option<f64>,
) -> Result<NestingReport> {
    let outer_x = outer_split.x_indices();
    if inner_x.is_empty()
        || inner_x.len() >= outer_x.len()
        || !inner_x.iter().all(|i| outer_x.contains(i))
    {
        return Err(Error::InvalidSplit(format!(
            "{inner_x:?} is not a proper non-empty subset of {outer_x:?}"
        )));
    }
    probe_strict_convexity(f, default_probe_density(f.dim()))?.require()?;

    let free: Vec<usize> = outer_x
        .iter()
        .copied()
        .filter(|i| !inner_x.contains(i))
        .collect();
    let inner_split = ParameterSplit::with_x(inner_x.to_vec(), f.dim())?;
    let free_box = f.domain().project(&free);
    let x_tol = 1e-8
        * (0..free.len())
            .map(|k| free_box.width(k))
            .fold(0.0, f64::max);

    let mut direct_eval = SectionEvaluator::new(f, inner_split, inner_tol);
    let mut outer_eval = SectionEvaluator::new(f, outer_split.clone(), inner_tol);
    let mut points = Vec::with_capacity(grid.len());
    let mut max_abs_diff: f64 = 0.0;
    for xp in grid {
        if xp.len() != inner_x.len() {
            return Err(Error::DimensionMismatch {
                expected: inner_x.len(),
                actual: xp.len(),
            });
        }
        let direct = direct_eval.value(xp)?;
        let reduced = minimize_box(
            |z: &[f64]| {
                let x: Vec<f64> = outer_x
                    .iter()
                    .map(|i| match inner_x.iter().position(|k| k == i) {
                        Some(a) => xp[a],
                        None => z[free.iter().position(|k| k == i).expect("free index")],
                    })
                    .collect();
                outer_eval.value(&x)
            },
            &free_box,
            default_probe_density(1),
            x_tol,
        )?;
        max_abs_diff = max_abs_diff.max((reduced.value - direct).abs());
        points.push(NestingPoint {
            inner_x: xp.clone(),
            iterated: reduced.value,
            direct,
        });
    }
    Ok(NestingReport {
        outer_split: outer_split.clone(),
        inner_x: inner_x.to_vec(),
        points,
        max_abs_diff,
        passed: max_abs_diff <= NESTING_TOL,
    })
}

/// Section CSV: header `x_<i>,F,comp_0,...,comp_{M-2},residual`, then one
/// comment line per sub-level interval.
pub fn section_csv(section: &MinimalSection1D, intervals: &[SubLevelInterval]) -> String {
    let k = section.companions.first().map_or(0, Vec::len);
    let mut out = format!("x_{},F", section.parameter_index);
    for c in 0..k {
        let _ = write!(out, ",comp_{c}");
    }
    out.push_str(",residual\n");
    for j in 0..section.grid.len() {
        let _ = write!(out, "{},{}", section.grid[j], section.values[j]);
        for v in &section.companions[j] {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", section.residuals[j]);
    }
    for iv in intervals {
        let _ = writeln!(out, "# sublevel z={} lo={} hi={}", iv.level_z, iv.lo, iv.hi);
    }
    out
}

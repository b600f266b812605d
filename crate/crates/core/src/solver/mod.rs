//! Outer minimization over the minimal section, the direct baseline and the
//! comparison between the two.

pub mod bracket;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{fd_gradient, fd_hessian, norm2};
use crate::problem::{
    uniform_grid, Compact, DomainBox, MeritFunction, ParameterSplit, ParameterVector,
};
use crate::section::{minimal_section_1d, SectionEvaluator};
use crate::subminimize::{certify_split, default_probe_density, ConvexityCertificate, SubMinimum};

pub use bracket::{
    bracket_on_grid, bracket_on_values, golden_refine, BracketTriplet, GOLDEN_RATIO,
};

/// Cap on coordinate-descent cycles.
pub const MAX_CYCLES: usize = 2000;
/// Cap on damped Newton iterations of the direct solver.
pub const MAX_DIRECT_ITER: usize = 200;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const ROUNDOFF_DECREASE: f64 = 1e3 * f64::EPSILON;
/// Points of the local bracketing window used after the first cycle.
const LOCAL_POINTS: usize = 5;

/// Tolerances shared by the hierarchical and direct solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Inner gradient tolerance, `None` for the slice solver's relative default.
    pub inner_tol: Option<f64>,
    /// Bound on the full gradient norm at the reported minimizer.
    pub outer_tol: f64,
    /// Abscissa tolerance, `None` for `1e-8` times the widest box edge.
    pub x_tol: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inner_tol: None,
            outer_tol: 1e-5,
            x_tol: None,
        }
    }
}

impl Tolerances {
    pub fn x_tol_for(&self, domain: &DomainBox) -> f64 {
        self.x_tol.unwrap_or_else(|| {
            1e-8 * (0..domain.dim())
                .map(|i| domain.width(i))
                .fold(0.0, f64::max)
        })
    }
}

/// Result of a box-constrained minimization by coordinate bracketing.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub brackets: Vec<BracketTriplet>,
    /// Function evaluations per coordinate.
    pub evaluations: Vec<usize>,
    pub cycles: usize,
}

/// Minimizes `f` over `bounds` by cyclic coordinate search.
///
/// Each line search brackets the one-dimensional restriction on a coordinate
/// grid and refines with golden sections. The first cycle uses the full
/// `density`-point axis grid. Later cycles start from a small window around
/// the current coordinate and widen it geometrically, falling back to the full
/// grid once the window reaches the box. One coordinate reduces to a single
/// bracket and refinement.
pub fn minimize_box<F>(
    mut f: F,
    bounds: &DomainBox,
    density: usize,
    x_tol: f64,
) -> Result<BoxMinimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = bounds.dim();
    if density < 3 {
        return Err(Error::BadGrid);
    }
    let mut evaluations = vec![0usize; n];
    let mut brackets = Vec::new();
    let mut x = bounds.center();
    let line_tol = if n == 1 { x_tol } else { 0.1 * x_tol };
    let mut last_step = vec![f64::INFINITY; n];
    let mut value = f64::NAN;

    for cycle in 1..=MAX_CYCLES {
        let mut step2 = 0.0;
        for j in 0..n {
            let mut line = |u: f64| -> Result<f64> {
                evaluations[j] += 1;
                let mut p = x.clone();
                p[j] = u;
                f(&p)
            };
            let triplet = line_bracket(&mut line, bounds, j, x[j], last_step[j], density)?;
            let (u, v) = golden_refine(&mut line, &triplet, line_tol)?;
            brackets.push(triplet);
            let d = u - x[j];
            step2 += d * d;
            last_step[j] = d.abs();
            x[j] = u;
            value = v;
        }
        if n == 1 || step2.sqrt() <= x_tol {
            return Ok(BoxMinimum {
                x,
                value,
                brackets,
                evaluations,
                cycles: cycle,
            });
        }
    }
    Err(Error::MaxIterations {
        iterations: MAX_CYCLES,
        best: x,
        grad_norm: f64::NAN,
    })
}

fn line_bracket<L>(
    line: &mut L,
    bounds: &DomainBox,
    j: usize,
    current: f64,
    last_step: f64,
    density: usize,
) -> Result<BracketTriplet>
where
    L: FnMut(f64) -> Result<f64>,
{
    let (lo, hi) = (bounds.lo(j), bounds.hi(j));
    if last_step.is_finite() {
        let half = 0.5 * (LOCAL_POINTS - 1) as f64;
        let mut h = (2.0 * last_step).max(1e-12 * (hi - lo));
        let mut center_val = None;
        while half * h < 0.5 * (hi - lo) {
            let a = (current - half * h).max(lo);
            let b = (a + 2.0 * half * h).min(hi);
            let a = b - 2.0 * half * h;
            let grid = uniform_grid(a, b, LOCAL_POINTS);
            let mid = LOCAL_POINTS / 2;
            let mut values = Vec::with_capacity(LOCAL_POINTS);
            for (k, &u) in grid.iter().enumerate() {
                // the centre value is reused while the window stays centred
                let v = match center_val {
                    Some(cv) if k == mid && u == current => cv,
                    _ => line(u)?,
                };
                if u == current {
                    center_val = Some(v);
                }
                values.push(v);
            }
            if let Ok(t) = bracket_on_values(&grid, &values) {
                return Ok(t);
            }
            h *= 4.0;
        }
    }
    bracket_on_grid(line, &bounds.axis_grid(j, density))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Hierarchical,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveCertificates {
    /// `None` when the inner problem is solved by exact linear elimination.
    pub convexity: Option<ConvexityCertificate>,
    pub linear_elimination: bool,
    pub brackets: Vec<BracketTriplet>,
    /// FD gradient norm of `F` at the minimizer.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub minimizer: ParameterVector,
    pub value: f64,
    pub method: SolveMethod,
    pub split: Option<ParameterSplit>,
    /// Slice solves, one per minimal-section evaluation.
    pub inner_solves: usize,
    /// Outer function evaluations.
    pub outer_evaluations: usize,
    /// Outer evaluations attributed to each parameter coordinate.
    pub evaluations_by_coordinate: Vec<usize>,
    /// Coordinate cycles or Newton iterations.
    pub iterations: usize,
    pub certificates: SolveCertificates,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let method = match self.method {
            SolveMethod::Hierarchical => "hierarchical",
            SolveMethod::Direct => "direct",
        };
        let _ = writeln!(s, "method: {method}");
        if let Some(split) = &self.split {
            let _ = writeln!(
                s,
                "split: x={:?} y={:?}",
                split.x_indices(),
                split.y_indices()
            );
        }
        let _ = writeln!(s, "minimizer: {}", self.minimizer);
        let _ = writeln!(s, "value: {}", Compact(self.value));
        let _ = writeln!(s, "gradient norm: {:e}", self.certificates.grad_norm);
        let _ = writeln!(s, "inner solves: {}", self.inner_solves);
        let _ = writeln!(s, "outer evaluations: {}", self.outer_evaluations);
        let _ = writeln!(
            s,
            "evaluations by coordinate: {:?}",
            self.evaluations_by_coordinate
        );
        let _ = writeln!(s, "iterations: {}", self.iterations);
        if self.certificates.linear_elimination {
            let _ = writeln!(s, "inner problem: exact linear elimination");
        }
        if let Some(c) = &self.certificates.convexity {
            let _ = writeln!(
                s,
                "convexity: {} sampled points, min eigenvalue {}",
                c.sampled_points, c.min_eig_over_samples
            );
        }
        let _ = writeln!(s, "brackets: {}", self.certificates.brackets.len());
        for t in self.certificates.brackets.iter().take(8) {
            let _ = writeln!(
                s,
                "  ({}, {}, {}) -> ({}, {}, {})",
                Compact(t.a),
                Compact(t.b),
                Compact(t.c),
                Compact(t.fa),
                Compact(t.fb),
                Compact(t.fc)
            );
        }
        s
    }
}

fn check_gradient(f: &MeritFunction, p: &[f64], outer_tol: f64) -> Result<f64> {
    let g = fd_gradient(f, p)?.norm();
    if g > outer_tol {
        return Err(Error::OuterToleranceNotMet {
            grad_norm: g,
            outer_tol,
        });
    }
    Ok(g)
}

/// Convexity certificate for a split, skipped when linear elimination is exact.
fn split_certificate(
    f: &MeritFunction,
    split: &ParameterSplit,
) -> Result<Option<ConvexityCertificate>> {
    if f.is_linear_in(split) {
        Ok(None)
    } else {
        certify_split(f, split).map(Some)
    }
}

/// Two-level solve: the outer search runs over `x` only, every evaluation
/// being a conditional minimization over `y`.
pub fn solve_hierarchical(
    f: &MeritFunction,
    split: &ParameterSplit,
    density: Option<usize>,
    tol: &Tolerances,
) -> Result<SolveReport> {
    if split.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: split.dim(),
        });
    }
    let convexity = split_certificate(f, split)?;
    let x_box = f.domain().project(split.x_indices());
    let density = density.unwrap_or_else(|| default_probe_density(1));
    let x_tol = tol.x_tol_for(&x_box);

    let mut eval = SectionEvaluator::new(f, split.clone(), tol.inner_tol);
    let found = minimize_box(|x| eval.value(x), &x_box, density, x_tol)?;
    let sub = eval.solve(&found.x)?;
    let minimizer = split.assemble(&found.x, &sub.y_star);
    require_interior(&minimizer, &sub)?;
    let grad_norm = check_gradient(f, &minimizer, tol.outer_tol)?;

    let mut by_coord = vec![0; f.dim()];
    for (k, &i) in split.x_indices().iter().enumerate() {
        by_coord[i] = found.evaluations[k];
    }
    Ok(SolveReport {
        minimizer: ParameterVector::new(minimizer)?,
        value: sub.value,
        method: SolveMethod::Hierarchical,
        split: Some(split.clone()),
        inner_solves: eval.solves(),
        outer_evaluations: found.evaluations.iter().sum::<usize>() + 1,
        evaluations_by_coordinate: by_coord,
        iterations: found.cycles,
        certificates: SolveCertificates {
            convexity,
            linear_elimination: f.is_linear_in(split),
            brackets: found.brackets,
            grad_norm,
        },
    })
}

fn require_interior(point: &[f64], sub: &SubMinimum) -> Result<()> {
    if sub.is_interior() {
        Ok(())
    } else {
        Err(Error::ConstrainedSlice {
            point: point.to_vec(),
            bounds: sub.active_bounds.clone(),
        })
    }
}

/// Eigenvalue-modified Newton direction: `|lambda|` floored at a relative threshold.
fn modified_newton_step(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    let floor = 1e-8 * scale;
    let gv = DVector::from_column_slice(g);
    let coeffs = eig.eigenvectors.transpose() * &gv;
    let scaled = DVector::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, l)| -c / l.abs().max(floor)),
    );
    (&eig.eigenvectors * scaled).iter().copied().collect()
}

/// Largest `t <= 1` keeping `p + t d` inside the box.
fn box_fraction(domain: &DomainBox, p: &[f64], d: &[f64]) -> f64 {
    let mut t: f64 = 1.0;
    for (i, (&v, &di)) in p.iter().zip(d).enumerate() {
        if di > 0.0 {
            t = t.min((domain.hi(i) - v) / di);
        } else if di < 0.0 {
            t = t.min((domain.lo(i) - v) / di);
        }
    }
    t.max(0.0)
}

/// Damped Newton on the full FD gradient with Armijo backtracking.
///
/// Stops once the gradient norm is within `outer_tol` and the last step is
/// within `x_tol`.
pub fn solve_direct(f: &MeritFunction, p0: &[f64], tol: &Tolerances) -> Result<SolveReport> {
    f.evaluate(p0)?;
    let domain = f.domain();
    let x_tol = tol.x_tol_for(domain);
    let mut p = p0.to_vec();
    let mut value = f.eval(&p);
    let mut evaluations = 1usize;

    for iter in 0..MAX_DIRECT_ITER {
        let d = fd_hessian(f, &p, None)?;
        evaluations += 1 + 2 * f.dim() + 4 * f.dim() * f.dim();
        let gn = norm2(&d.gradient);
        if gn == 0.0 {
            return direct_report(f, p, value, iter, evaluations, tol);
        }
        let dir = modified_newton_step(&d.hessian, &d.gradient);
        let slope: f64 = d.gradient.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut t = box_fraction(domain, &p, &dir);
        let mut accepted = None;
        if t > 0.0 && -slope <= ROUNDOFF_DECREASE * value.abs() {
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(v, s)| v + t * s).collect();
            evaluations += 1;
            accepted = Some((f.eval(&trial), t));
        }
        let mut halvings = 0;
        while accepted.is_none() && t > 0.0 && halvings < MAX_HALVINGS {
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(v, s)| v + t * s).collect();
            evaluations += 1;
            let ft = f.eval(&trial);
            if ft <= value + ARMIJO * t * slope {
                accepted = Some((ft, t));
            } else {
                t *= 0.5;
                halvings += 1;
            }
        }
        let Some((ft, t)) = accepted else {
            if gn <= tol.outer_tol {
                return direct_report(f, p, value, iter, evaluations, tol);
            }
            return Err(Error::LineSearchFailed {
                point: p,
                grad_norm: gn,
            });
        };
        let step_norm = t * norm2(&dir);
        for (v, s) in p.iter_mut().zip(&dir) {
            *v += t * s;
        }
        domain.clamp(&mut p);
        value = ft;
        if gn <= tol.outer_tol && step_norm <= x_tol {
            return direct_report(f, p, value, iter + 1, evaluations, tol);
        }
    }
    let grad_norm = fd_gradient(f, &p).map(|g| g.norm()).unwrap_or(f64::NAN);
    Err(Error::MaxIterations {
        iterations: MAX_DIRECT_ITER,
        best: p,
        grad_norm,
    })
}

fn direct_report(
    f: &MeritFunction,
    p: Vec<f64>,
    value: f64,
    iterations: usize,
    evaluations: usize,
    tol: &Tolerances,
) -> Result<SolveReport> {
    let grad_norm = check_gradient(f, &p, tol.outer_tol)?;
    Ok(SolveReport {
        minimizer: ParameterVector::new(p)?,
        value,
        method: SolveMethod::Direct,
        split: None,
        inner_solves: 0,
        outer_evaluations: evaluations,
        evaluations_by_coordinate: Vec::new(),
        iterations,
        certificates: SolveCertificates {
            convexity: None,
            linear_elimination: false,
            brackets: Vec::new(),
            grad_norm,
        },
    })
}

/// Outcome of one direct run of the multistart baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectOutcome {
    pub start: Vec<f64>,
    pub minimizer: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub error: Option<String>,
    /// Infinity-norm distance to the hierarchical minimizer.
    pub distance: Option<f64>,
    /// Distance to the nearest hierarchical candidate (minimizer or section minimum).
    pub distance_to_candidates: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub hierarchical: SolveReport,
    /// Full points at every strict local minimum of the section (single `x` only).
    pub section_minima: Vec<Vec<f64>>,
    pub direct: Vec<DirectOutcome>,
    pub max_distance: f64,
    pub max_value_gap: f64,
    /// Largest distance from a converged direct answer to its nearest candidate.
    pub max_distance_to_candidates: f64,
    pub converged: usize,
}

impl EquivalenceReport {
    /// Every converged direct answer lies within `radius` of some candidate.
    pub fn covers(&self, radius: f64) -> bool {
        self.max_distance_to_candidates <= radius
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("hierarchical\n");
        for line in self.hierarchical.to_text().lines() {
            let _ = writeln!(s, "  {line}");
        }
        for m in &self.section_minima {
            let _ = writeln!(s, "section minimum: {m:?}");
        }
        for o in &self.direct {
            match (&o.minimizer, &o.error) {
                (Some(m), _) => {
                    let _ = writeln!(
                        s,
                        "direct from {:?}: {:?} value {} distance {:e}",
                        o.start,
                        m,
                        Compact(o.value.unwrap_or(f64::NAN)),
                        o.distance.unwrap_or(f64::NAN)
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(s, "direct from {:?}: failed: {e}", o.start);
                }
                _ => {}
            }
        }
        let _ = writeln!(s, "converged: {}/{}", self.converged, self.direct.len());
        let _ = writeln!(s, "max distance: {:e}", self.max_distance);
        let _ = writeln!(s, "max value gap: {:e}", self.max_value_gap);
        let _ = writeln!(
            s,
            "max distance to candidates: {:e}",
            self.max_distance_to_candidates
        );
        s
    }
}

fn distance_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs the hierarchical solve once and the direct solver from every start.
///
/// Direct runs execute concurrently. Failures of single direct runs are
/// recorded in the report rather than returned.
pub fn equivalence_report(
    f: &MeritFunction,
    split: &ParameterSplit,
    starts: &[Vec<f64>],
    density: Option<usize>,
    tol: &Tolerances,
) -> Result<EquivalenceReport> {
    let hier = solve_hierarchical(f, split, density, tol)?;
    let mut section_minima = Vec::new();
    if split.n() == 1 {
        let i = split.x_indices()[0];
        let grid = f
            .domain()
            .axis_grid(i, density.unwrap_or_else(|| default_probe_density(1)));
        let section = minimal_section_1d(f, i, &grid, tol.inner_tol)?;
        for m in section.strict_minima() {
            section_minima.push(split.assemble(&[m.x], &m.companions));
        }
    }

    let results: Vec<Result<SolveReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .iter()
            .map(|p0| scope.spawn(move || solve_direct(f, p0, tol)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("direct run panicked"))
            .collect()
    });

    let hp = hier.minimizer.as_slice();
    let mut candidates = vec![hp.to_vec()];
    candidates.extend(section_minima.iter().cloned());
    let mut direct = Vec::with_capacity(starts.len());
    let (mut max_distance, mut max_value_gap, mut max_cand) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut converged = 0;
    for (p0, r) in starts.iter().zip(results) {
        match r {
            Ok(rep) => {
                converged += 1;
                let m = rep.minimizer.as_slice().to_vec();
                let d = distance_inf(&m, hp);
                let dc = candidates
                    .iter()
                    .map(|c| distance_inf(&m, c))
                    .fold(f64::INFINITY, f64::min);
                max_distance = max_distance.max(d);
                max_value_gap = max_value_gap.max((rep.value - hier.value).abs());
                max_cand = max_cand.max(dc);
                direct.push(DirectOutcome {
                    start: p0.clone(),
                    minimizer: Some(m),
                    value: Some(rep.value),
                    error: None,
                    distance: Some(d),
                    distance_to_candidates: Some(dc),
                });
            }
            Err(e) => direct.push(DirectOutcome {
                start: p0.clone(),
                minimizer: None,
                value: None,
                error: Some(e.to_string()),
                distance: None,
                distance_to_candidates: None,
            }),
        }
    }
    Ok(EquivalenceReport {
        hierarchical: hier,
        section_minima,
        direct,
        max_distance,
        max_value_gap,
        max_distance_to_candidates: max_cand,
        converged,
    })
}

/// A point of the implicit graph recovered from one known coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationRecovery {
    pub anchor_index: usize,
    pub anchor_value: f64,
    pub recovered: ParameterVector,
    pub value: f64,
    /// `||F'_y||` at the recovered point.
    pub section_residual: f64,
    pub inner_tol: f64,
}

impl RegularizationRecovery {
    pub fn to_text(&self) -> String {
        format!(
            "anchor: p[{}] = {}\nrecovered: {}\nvalue: {}\nsection residual: {:e}\ninner tol: {:e}\n",
            self.anchor_index,
            self.anchor_value,
            self.recovered,
            Compact(self.value),
            self.section_residual,
            self.inner_tol
        )
    }
}

/// Completes a known coordinate to a full parameter vector by one slice
/// solve over the remaining coordinates.
pub fn recover_from_anchor(
    f: &MeritFunction,
    anchor_index: usize,
    anchor_value: f64,
    inner_tol: Option<f64>,
) -> Result<RegularizationRecovery> {
    let split = ParameterSplit::with_x(vec![anchor_index], f.dim())?;
    split_certificate(f, &split)?;
    let mut eval = SectionEvaluator::new(f, split.clone(), inner_tol);
    let sub = eval.solve(&[anchor_value])?;
    require_interior(&split.assemble(&[anchor_value], &sub.y_star), &sub)?;
    Ok(RegularizationRecovery {
        anchor_index,
        anchor_value,
        recovered: ParameterVector::new(split.assemble(&[anchor_value], &sub.y_star))?,
        value: sub.value,
        section_residual: sub.grad_y_norm,
        inner_tol: sub.inner_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::lookup;

    fn split(x: &[usize], dim: usize) -> ParameterSplit {
        ParameterSplit::with_x(x.to_vec(), dim).unwrap()
    }

    #[test]
    fn box_minimum_of_quadratic() {
        let b = DomainBox::symmetric(3, 5.0);
        let r = minimize_box(
            |x| Ok((x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[0] - x[2]).powi(2)),
            &b,
            11,
            1e-10,
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] + 0.5).abs() < 1e-8);
        assert!((r.x[2] - 1.0).abs() < 1e-8);
        assert!(r.brackets.iter().all(BracketTriplet::is_valid));
    }

    #[test]
    fn box_minimum_on_boundary_is_refused() {
        let b = DomainBox::symmetric(1, 1.0);
        let r = minimize_box(|x| Ok(x[0]), &b, 5, 1e-8);
        assert!(matches!(r, Err(Error::BoundaryMinimum { .. })));
    }

    #[test]
    fn hierarchical_examples() {
        let tol = Tolerances::default();
        let f = lookup("EXP_FIT").unwrap().merit;
        let r = solve_hierarchical(&f, &f.natural_split().unwrap(), None, &tol).unwrap();
        assert!(
            r.minimizer.distance_inf(&[-0.5, 2.0]) < 1e-6,
            "{}",
            r.minimizer
        );
        assert_eq!(r.evaluations_by_coordinate[1], 0);
        assert!(r.certificates.linear_elimination);
        assert_eq!(r.inner_solves, r.outer_evaluations);

        let f = lookup("SINE_VALLEY").unwrap().merit;
        let r = solve_hierarchical(&f, &split(&[0], 2), None, &tol).unwrap();
        assert!(r.minimizer.distance_inf(&[0.0, 0.0]) < 1e-6);
        assert!(r.certificates.convexity.as_ref().unwrap().is_positive());

        let f = lookup("QUAD3").unwrap().merit;
        let r = solve_hierarchical(&f, &split(&[0], 3), None, &tol).unwrap();
        assert!(r.minimizer.distance_inf(&[0.0; 3]) < 1e-6);
    }

    #[test]
    fn hierarchical_multi_coordinate_outer() {
        let f = lookup("ANISO3")
            .unwrap()
            .merit
            .with_domain(DomainBox::new(vec![(-3.0, 5.0), (-4.0, 2.0), (-1.5, 6.0)]).unwrap())
            .unwrap();
        let tol = Tolerances::default();
        let r = solve_hierarchical(&f, &split(&[0, 2], 3), None, &tol).unwrap();
        assert!(
            r.minimizer.distance_inf(&[0.0; 3]) < 1e-6,
            "{}",
            r.minimizer
        );
        assert!(r.iterations > 1);
    }

    #[test]
    fn hierarchical_refuses_concave_y() {
        let f = lookup("NEG_Y").unwrap().merit;
        let err =
            solve_hierarchical(&f, &split(&[0], 2), None, &Tolerances::default()).unwrap_err();
        assert!(err.is_refusal());
        assert!(err.witness().is_some());
    }

    #[test]
    fn direct_examples() {
        let tol = Tolerances::default();
        let f = lookup("QUAD").unwrap().merit;
        let r = solve_direct(&f, &[3.0, -4.0], &tol).unwrap();
        assert!(r.minimizer.distance_inf(&[0.0, 0.0]) < 1e-8);
        let f = lookup("SINE_VALLEY").unwrap().merit;
        let r = solve_direct(&f, &[1.0, 1.0], &tol).unwrap();
        assert!(r.minimizer.distance_inf(&[0.0, 0.0]) < 1e-6);
        let f = lookup("TWO_WELLS").unwrap().merit;
        let r = solve_direct(&f, &[0.9, 0.9], &tol).unwrap();
        assert!(r.minimizer.distance_inf(&[1.0, 1.0]) < 1e-6);
    }

    #[test]
    fn direct_rejects_start_outside_box() {
        let f = lookup("QUAD").unwrap().merit;
        assert!(matches!(
            solve_direct(&f, &[30.0, 0.0], &Tolerances::default()),
            Err(Error::OutOfBox { .. })
        ));
    }

    #[test]
    fn equivalence_examples() {
        let tol = Tolerances::default();
        let starts = vec![
            vec![1.0, 1.0],
            vec![-2.0, 3.0],
            vec![0.5, -0.5],
            vec![4.0, 4.0],
            vec![-1.0, -3.0],
        ];
        let f = lookup("SINE_VALLEY").unwrap().merit;
        let r = equivalence_report(&f, &split(&[0], 2), &starts, None, &tol).unwrap();
        assert_eq!(r.converged, 5);
        assert!(r.max_distance <= 1e-6);
        let f = lookup("QUAD").unwrap().merit;
        let r = equivalence_report(&f, &split(&[0], 2), &starts, None, &tol).unwrap();
        assert!(r.max_distance <= 1e-8);

        let f = lookup("TWO_WELLS").unwrap().merit;
        let starts = vec![
            vec![0.9, 0.9],
            vec![-0.9, -0.9],
            vec![1.5, 2.0],
            vec![-1.5, -2.0],
        ];
        let r = equivalence_report(&f, &split(&[0], 2), &starts, None, &tol).unwrap();
        assert_eq!(r.section_minima.len(), 2);
        assert_eq!(r.converged, 4);
        assert!(r.covers(1e-6), "{}", r.to_text());
        assert!(r.max_distance > 1.0);
    }

    #[test]
    fn anchor_recovery() {
        let f = lookup("DEGEN_LINE").unwrap().merit;
        let r = recover_from_anchor(&f, 0, 0.5, None).unwrap();
        assert!(r.recovered.distance_inf(&[0.5, 1.5]) < 1e-10);
        assert_eq!(r.recovered[0], 0.5);
        let r = recover_from_anchor(&f, 0, 2.0, None).unwrap();
        assert!(r.recovered.distance_inf(&[2.0, 0.0]) < 1e-10);
        assert!(r.section_residual <= r.inner_tol);

        let f = lookup("SINE_VALLEY").unwrap().merit;
        let r = recover_from_anchor(&f, 0, 0.0, None).unwrap();
        assert!(r.recovered.distance_inf(&[0.0, 0.0]) < 1e-10);
    }

    #[test]
    fn recovery_refuses_a_pinned_companion() {
        // g(-10) = 12 lies beyond the y bound, so the slice minimum is not on F'_y = 0
        let f = lookup("DEGEN_LINE").unwrap().merit;
        match recover_from_anchor(&f, 0, -10.0, None) {
            Err(Error::ConstrainedSlice { point, bounds }) => {
                assert_eq!(point, vec![-10.0, 10.0]);
                assert_eq!(bounds, vec![1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_renders() {
        let f = lookup("QUAD").unwrap().merit;
        let r = solve_hierarchical(&f, &split(&[0], 2), None, &Tolerances::default()).unwrap();
        assert!(r.to_text().contains("method: hierarchical"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["method"], "hierarchical");
    }
}

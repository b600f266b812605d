//! Inner minimization over `y` at fixed `x`.
//!
//! Partially linear models are eliminated exactly with a linear least-squares
//! solve. Everything else goes through a damped Newton iteration on the
//! slice function, which is only valid while `F''_yy` stays positive
//! definite; [`probe_y_convexity`] samples that condition over the box.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    eigen_index, fd_hessian_block, fd_partial_gradient, linear_lsq_solve, min_eigenvalue_with_tol,
    norm2,
};
use crate::problem::{MeritFunction, ParameterSplit};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const ROUNDOFF_DECREASE: f64 = 1e3 * f64::EPSILON;
/// Newton iteration cap used when callers do not choose one.
pub const DEFAULT_MAX_ITER: usize = 100;

/// `1e-10 * max(1, F)` where `F` is the slice value at the starting point.
pub fn default_inner_tol(start_value: f64) -> f64 {
    1e-10 * start_value.abs().max(1.0)
}

/// Points per axis used by the convexity probe when none is requested.
pub fn default_probe_density(dim: usize) -> usize {
    match dim {
        0..=4 => 21,
        5..=8 => 7,
        _ => 3,
    }
}

/// The slice function `F^x(y)` for one fixed `x`.
#[derive(Debug, Clone)]
pub struct SliceProblem<'a> {
    pub merit: &'a MeritFunction,
    pub split: &'a ParameterSplit,
    pub x_fixed: Vec<f64>,
}

impl<'a> SliceProblem<'a> {
    pub fn new(
        merit: &'a MeritFunction,
        split: &'a ParameterSplit,
        x_fixed: Vec<f64>,
    ) -> Result<Self> {
        if split.dim() != merit.dim() {
            return Err(Error::DimensionMismatch {
                expected: merit.dim(),
                actual: split.dim(),
            });
        }
        if x_fixed.len() != split.n() {
            return Err(Error::DimensionMismatch {
                expected: split.n(),
                actual: x_fixed.len(),
            });
        }
        let dom = merit.domain();
        let inside = split
            .x_indices()
            .iter()
            .zip(&x_fixed)
            .all(|(&i, &v)| v >= dom.lo(i) && v <= dom.hi(i));
        if !inside {
            return Err(Error::OutOfBox {
                point: split.assemble(&x_fixed, &dom.project(split.y_indices()).center()),
            });
        }
        Ok(Self {
            merit,
            split,
            x_fixed,
        })
    }

    pub fn point(&self, y: &[f64]) -> Vec<f64> {
        self.split.assemble(&self.x_fixed, y)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.merit.eval(&self.point(y))
    }

    fn y_in_box(&self, y: &[f64]) -> bool {
        let dom = self.merit.domain();
        self.split
            .y_indices()
            .iter()
            .zip(y)
            .all(|(&i, &v)| v >= dom.lo(i) && v <= dom.hi(i))
    }

    /// Positions in `y` held at a bound by a gradient pointing out of the box.
    fn pinned(&self, y: &[f64], grad: &[f64]) -> Vec<usize> {
        let dom = self.merit.domain();
        let mut out = Vec::new();
        for (k, ((&i, &v), &g)) in self.split.y_indices().iter().zip(y).zip(grad).enumerate() {
            if (v <= dom.lo(i) && g > 0.0) || (v >= dom.hi(i) && g < 0.0) {
                out.push(k);
            }
        }
        out
    }

    fn clamp_y(&self, y: impl Iterator<Item = f64>) -> Vec<f64> {
        let dom = self.merit.domain();
        self.split
            .y_indices()
            .iter()
            .zip(y)
            .map(|(&i, v)| v.clamp(dom.lo(i), dom.hi(i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubMethod {
    LinearElimination,
    Newton,
}

/// Conditional minimum over `y` with its first- and second-order certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubMinimum {
    pub y_star: Vec<f64>,
    pub value: f64,
    pub grad_y_norm: f64,
    pub y_hessian_min_eig: f64,
    /// Number of negative eigenvalues of `F''_yy` at `y_star`.
    pub y_index: usize,
    pub method: SubMethod,
    pub iterations: usize,
    pub inner_tol: f64,
    /// Parameter indices of `y` coordinates held at a box bound; empty for
    /// an interior minimizer.
    pub active_bounds: Vec<usize>,
}

impl SubMinimum {
    pub fn is_interior(&self) -> bool {
        self.active_bounds.is_empty()
    }
}

/// Exact elimination of the linear parameters of a partially linear model.
pub fn subminimize_linear(
    problem: &SliceProblem<'_>,
    inner_tol: Option<f64>,
) -> Result<SubMinimum> {
    let model = match problem.merit.partially_linear() {
        Some(m) if problem.merit.is_linear_in(problem.split) => m,
        _ => {
            return Err(Error::InvalidModel(
                "linear elimination needs a partially linear model and its natural split".into(),
            ))
        }
    };
    let x = &problem.x_fixed;
    let phi = model.design(x);
    let b = model.rhs(x);
    let y = linear_lsq_solve(&phi, &b)?;
    let y_star: Vec<f64> = y.iter().copied().collect();
    if !problem.y_in_box(&y_star) {
        return Err(Error::OutOfBox {
            point: problem.point(&y_star),
        });
    }
    let tol = inner_tol.unwrap_or_else(|| default_inner_tol(b.norm_squared()));
    let residual = &phi * &y - &b;
    let grad: DVector<f64> = phi.transpose() * residual * 2.0;
    let grad_y_norm = grad.norm();
    let hessian: DMatrix<f64> = phi.transpose() * &phi * 2.0;
    let eig = eigen_index(&hessian, None)?;
    if grad_y_norm > tol {
        return Err(Error::CertificateFailed {
            grad_norm: grad_y_norm,
            tol,
        });
    }
    Ok(SubMinimum {
        value: problem.value(&y_star),
        y_star,
        grad_y_norm,
        y_hessian_min_eig: eig.min(),
        y_index: eig.negative_count,
        method: SubMethod::LinearElimination,
        iterations: 1,
        inner_tol: tol,
        active_bounds: Vec::new(),
    })
}

/// `F''_yy` at `p`: exactly `2 Phi^T Phi` for a partially linear model under
/// its natural split, finite differences otherwise.
pub fn y_hessian(f: &MeritFunction, split: &ParameterSplit, p: &[f64]) -> Result<DMatrix<f64>> {
    match f.partially_linear() {
        Some(model) if f.is_linear_in(split) => {
            let phi = model.design(&split.x_part(p));
            Ok(phi.transpose() * &phi * 2.0)
        }
        _ => Ok(fd_hessian_block(f, p, split.y_indices())?.matrix),
    }
}

/// Damped Newton on the slice function with Armijo backtracking, kept inside
/// the `y`-box by projection.
///
/// Coordinates pinned at a bound whose gradient points out of the box are
/// held fixed; the Newton step acts on the rest and the certificate is the
/// projected gradient norm. Such a minimizer is reported in
/// [`SubMinimum::active_bounds`] and does not satisfy `F'_y = 0`.
///
/// Fails with [`Error::NotConvexInY`] as soon as an iterate has an
/// indefinite or singular `y`-Hessian.
pub fn subminimize_newton(
    problem: &SliceProblem<'_>,
    y0: &[f64],
    inner_tol: Option<f64>,
    max_iter: usize,
) -> Result<SubMinimum> {
    let split = problem.split;
    if y0.len() != split.m() {
        return Err(Error::DimensionMismatch {
            expected: split.m(),
            actual: y0.len(),
        });
    }
    if !problem.y_in_box(y0) {
        return Err(Error::OutOfBox {
            point: problem.point(y0),
        });
    }
    let f = problem.merit;
    let mut y = y0.to_vec();
    let mut value = problem.value(&y);
    let tol = inner_tol.unwrap_or_else(|| default_inner_tol(value));

    for iter in 0..=max_iter {
        let p = problem.point(&y);
        let g = fd_partial_gradient(f, &p, split.y_indices())?.gradient;
        let h = fd_hessian_block(f, &p, split.y_indices())?.matrix;
        let (min_eig, pd_tol) = min_eigenvalue_with_tol(&h);
        if min_eig <= pd_tol {
            return Err(Error::NotConvexInY {
                witness: p,
                min_eig,
            });
        }
        let pinned = problem.pinned(&y, &g);
        let free: Vec<usize> = (0..y.len()).filter(|k| !pinned.contains(k)).collect();
        let gn = norm2(&free.iter().map(|&k| g[k]).collect::<Vec<_>>());
        if gn <= tol {
            let eig = eigen_index(&h, None)?;
            return Ok(SubMinimum {
                y_star: y,
                value,
                grad_y_norm: gn,
                y_hessian_min_eig: eig.min(),
                y_index: eig.negative_count,
                method: SubMethod::Newton,
                iterations: iter,
                inner_tol: tol,
                active_bounds: pinned.iter().map(|&k| split.y_indices()[k]).collect(),
            });
        }
        if iter == max_iter {
            return Err(Error::MaxIterations {
                iterations: max_iter,
                best: p,
                grad_norm: gn,
            });
        }

        let h_free = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&k| -g[k]));
        let chol = h_free.cholesky().ok_or(Error::NotConvexInY {
            witness: p.clone(),
            min_eig,
        })?;
        let step = chol.solve(&g_free);
        let mut dir = vec![0.0; y.len()];
        for (&k, d) in free.iter().zip(step.iter()) {
            dir[k] = *d;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for halving in 0..MAX_HALVINGS {
            let trial = problem.clamp_y(y.iter().zip(&dir).map(|(v, d)| v + t * d));
            let slope: f64 = g
                .iter()
                .zip(trial.iter().zip(&y))
                .map(|(a, (b, c))| a * (b - c))
                .sum();
            let ft = problem.value(&trial);
            // predicted decrease below the rounding level of F: Armijo cannot
            // discriminate, so the Newton step is taken as is
            let roundoff = halving == 0 && -slope <= ROUNDOFF_DECREASE * value.abs();
            if roundoff || ft <= value + ARMIJO * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                y = trial;
                value = ft;
            }
            None => {
                return Err(Error::LineSearchFailed {
                    point: p,
                    grad_norm: gn,
                })
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Linear elimination when the split allows it, Newton from `y0` otherwise.
///
/// An eliminated `y` outside the box is handed to the projected Newton
/// iteration from its clamp.
pub fn subminimize(
    problem: &SliceProblem<'_>,
    y0: &[f64],
    inner_tol: Option<f64>,
) -> Result<SubMinimum> {
    if !problem.merit.is_linear_in(problem.split) {
        return subminimize_newton(problem, y0, inner_tol, DEFAULT_MAX_ITER);
    }
    match subminimize_linear(problem, inner_tol) {
        Err(Error::OutOfBox { point }) => {
            let start = problem.clamp_y(problem.split.y_part(&point).into_iter());
            subminimize_newton(problem, &start, inner_tol, DEFAULT_MAX_ITER)
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    PositiveDefiniteEverywhereSampled,
    Violated { witness: Vec<f64>, min_eig: f64 },
}

/// Sampled evidence that a Hessian block is positive definite on the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityCertificate {
    /// `None` when the full Hessian was probed.
    pub split: Option<ParameterSplit>,
    pub grid_density: usize,
    pub sampled_points: usize,
    pub min_eig_over_samples: f64,
    pub verdict: Verdict,
}

impl ConvexityCertificate {
    pub fn is_positive(&self) -> bool {
        matches!(self.verdict, Verdict::PositiveDefiniteEverywhereSampled)
    }

    /// Converts a violated verdict into the matching refusal.
    pub fn require(&self) -> Result<()> {
        match &self.verdict {
            Verdict::PositiveDefiniteEverywhereSampled => Ok(()),
            Verdict::Violated { witness, min_eig } => Err(match self.split {
                Some(_) => Error::NotConvexInY {
                    witness: witness.clone(),
                    min_eig: *min_eig,
                },
                None => Error::NotStrictlyConvex {
                    witness: witness.clone(),
                    min_eig: *min_eig,
                },
            }),
        }
    }
}

/// Samples the minimum eigenvalue of `F''_yy` on a full grid over the box.
///
/// For a partially linear model under its natural split the `y`-Hessian does
/// not depend on `y`, so only one `y` per `x` grid point is visited.
pub fn probe_y_convexity(
    f: &MeritFunction,
    split: &ParameterSplit,
    grid_density: usize,
) -> Result<ConvexityCertificate> {
    if split.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: split.dim(),
        });
    }
    let frozen: Vec<usize> = if f.is_linear_in(split) {
        split.y_indices().to_vec()
    } else {
        Vec::new()
    };
    probe(
        f,
        split.y_indices(),
        &frozen,
        grid_density,
        Some(split.clone()),
    )
}

/// Samples the minimum eigenvalue of the full Hessian (strict convexity on the box).
pub fn probe_strict_convexity(
    f: &MeritFunction,
    grid_density: usize,
) -> Result<ConvexityCertificate> {
    let all: Vec<usize> = (0..f.dim()).collect();
    probe(f, &all, &[], grid_density, None)
}

fn probe(
    f: &MeritFunction,
    block: &[usize],
    frozen: &[usize],
    density: usize,
    split: Option<ParameterSplit>,
) -> Result<ConvexityCertificate> {
    if density < 3 {
        return Err(Error::Config(format!(
            "convexity probe needs at least 3 points per axis, got {density}"
        )));
    }
    let dom = f.domain();
    let dim = f.dim();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            if frozen.contains(&i) {
                vec![0.5 * (dom.lo(i) + dom.hi(i))]
            } else {
                dom.axis_grid(i, density)
            }
        })
        .collect();

    let mut counter = vec![0usize; dim];
    let mut p: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut sampled = 0;
    let mut min_eig = f64::INFINITY;
    let mut worst_violation: Option<(Vec<f64>, f64)> = None;
    loop {
        let h = fd_hessian_block(f, &p, block)?.matrix;
        let (lam, pd_tol) = min_eigenvalue_with_tol(&h);
        sampled += 1;
        min_eig = min_eig.min(lam);
        if lam <= pd_tol && worst_violation.as_ref().is_none_or(|(_, w)| lam < *w) {
            worst_violation = Some((p.clone(), lam));
        }
        // mixed-radix increment over the grid
        let mut axis = 0;
        loop {
            if axis == dim {
                let verdict = match worst_violation {
                    None => Verdict::PositiveDefiniteEverywhereSampled,
                    Some((witness, min_eig)) => Verdict::Violated { witness, min_eig },
                };
                return Ok(ConvexityCertificate {
                    split,
                    grid_density: density,
                    sampled_points: sampled,
                    min_eig_over_samples: min_eig,
                    verdict,
                });
            }
            counter[axis] += 1;
            if counter[axis] < axes[axis].len() {
                p[axis] = axes[axis][counter[axis]];
                break;
            }
            counter[axis] = 0;
            p[axis] = axes[axis][0];
            axis += 1;
        }
    }
}

/// Probes `split` at the default density and refuses when the verdict is violated.
pub fn certify_split(f: &MeritFunction, split: &ParameterSplit) -> Result<ConvexityCertificate> {
    let cert = probe_y_convexity(f, split, default_probe_density(f.dim()))?;
    cert.require()?;
    Ok(cert)
}

//! Finite-difference derivatives, symmetric eigen-analysis and linear
//! least squares.
//!
//! Gradients use central differences with step `cbrt(eps) * max(1, |p_i|)`;
//! Hessians use the four-point stencil with step `eps^(1/4) * max(1, |p_i|)`.
//! Near the box boundary gradients switch to second-order one-sided
//! formulas and Hessian stencils are shifted inward; both cases are
//! reported so callers can surface them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{MeritFunction, ParameterSplit};

/// Relative asymmetry of a raw FD Hessian above which it is flagged.
pub const ASYMMETRY_WARN: f64 = 1e-4;

fn gradient_step_factor() -> f64 {
    f64::EPSILON.cbrt()
}

fn hessian_step_factor() -> f64 {
    f64::EPSILON.powf(0.25)
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    /// Partial derivatives, one per requested coordinate.
    pub gradient: Vec<f64>,
    /// Coordinates where a one-sided formula was used because of the box.
    pub one_sided: Vec<usize>,
}

impl GradientReport {
    pub fn norm(&self) -> f64 {
        norm2(&self.gradient)
    }
}

fn check_point(f: &MeritFunction, p: &[f64]) -> Result<()> {
    if p.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: p.len(),
        });
    }
    if !f.domain().contains(p) {
        return Err(Error::OutOfBox { point: p.to_vec() });
    }
    Ok(())
}

/// Central-difference gradient of `f` at `p`.
pub fn fd_gradient(f: &MeritFunction, p: &[f64]) -> Result<GradientReport> {
    let coords: Vec<usize> = (0..f.dim()).collect();
    fd_partial_gradient(f, p, &coords)
}

/// Partial derivatives of `f` at `p` with respect to `coords`, in that order.
pub fn fd_partial_gradient(
    f: &MeritFunction,
    p: &[f64],
    coords: &[usize],
) -> Result<GradientReport> {
    check_point(f, p)?;
    let dom = f.domain();
    let mut q = p.to_vec();
    let f0 = f.eval(p);
    let mut gradient = Vec::with_capacity(coords.len());
    let mut one_sided = Vec::new();
    for &i in coords {
        let (lo, hi) = (dom.lo(i), dom.hi(i));
        let pi = p[i];
        let h = gradient_step_factor() * pi.abs().max(1.0);
        let d = if pi - h >= lo && pi + h <= hi {
            let plus = pi + h;
            let minus = pi - h;
            q[i] = plus;
            let fp = f.eval(&q);
            q[i] = minus;
            let fm = f.eval(&q);
            (fp - fm) / (plus - minus)
        } else if pi + 2.0 * h <= hi {
            one_sided.push(i);
            let h1 = (pi + h) - pi;
            q[i] = pi + h1;
            let f1 = f.eval(&q);
            q[i] = pi + 2.0 * h1;
            let f2 = f.eval(&q);
            (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h1)
        } else if pi - 2.0 * h >= lo {
            one_sided.push(i);
            let h1 = pi - (pi - h);
            q[i] = pi - h1;
            let f1 = f.eval(&q);
            q[i] = pi - 2.0 * h1;
            let f2 = f.eval(&q);
            (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h1)
        } else {
            return Err(Error::InvalidDomain(format!(
                "coordinate {i} is narrower than the finite-difference stencil"
            )));
        };
        q[i] = pi;
        if !d.is_finite() {
            return Err(Error::NonFiniteGradient(i));
        }
        gradient.push(d);
    }
    Ok(GradientReport {
        gradient,
        one_sided,
    })
}

/// FD Hessian restricted to a set of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlock {
    /// Symmetrized block, rows and columns in the order of the requested coordinates.
    pub matrix: DMatrix<f64>,
    /// `max |H_raw - H_raw^T| / max(1, max |H_raw|)` before symmetrization.
    pub asymmetry: f64,
    /// Coordinates whose stencil was shifted inward to stay in the box.
    pub shifted: Vec<usize>,
    pub steps: Vec<f64>,
}

impl HessianBlock {
    pub fn asymmetry_flagged(&self) -> bool {
        self.asymmetry > ASYMMETRY_WARN
    }
}

/// Four-point FD Hessian of `f` at `p` over `coords`.
pub fn fd_hessian_block(f: &MeritFunction, p: &[f64], coords: &[usize]) -> Result<HessianBlock> {
    check_point(f, p)?;
    let dom = f.domain();
    let k = coords.len();
    let mut center = p.to_vec();
    let mut steps = Vec::with_capacity(k);
    let mut shifted = Vec::new();
    for &i in coords {
        let h = hessian_step_factor() * p[i].abs().max(1.0);
        if 2.0 * h > dom.width(i) {
            return Err(Error::InvalidDomain(format!(
                "coordinate {i} is narrower than the finite-difference stencil"
            )));
        }
        let c = p[i].clamp(dom.lo(i) + h, dom.hi(i) - h);
        if c != p[i] {
            shifted.push(i);
        }
        center[i] = c;
        steps.push(h);
    }

    let f0 = f.eval(&center);
    let mut raw = DMatrix::zeros(k, k);
    let mut q = center.clone();
    for a in 0..k {
        let i = coords[a];
        let hi = steps[a];
        q[i] = center[i] + hi;
        let fp = f.eval(&q);
        q[i] = center[i] - hi;
        let fm = f.eval(&q);
        q[i] = center[i];
        raw[(a, a)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for b in 0..k {
            if a == b {
                continue;
            }
            let j = coords[b];
            let hj = steps[b];
            let mut corner = |si: f64, sj: f64| {
                q[i] = center[i] + si * hi;
                q[j] = center[j] + sj * hj;
                let v = f.eval(&q);
                q[i] = center[i];
                q[j] = center[j];
                v
            };
            let fpp = corner(1.0, 1.0);
            let fpm = corner(1.0, -1.0);
            let fmp = corner(-1.0, 1.0);
            let fmm = corner(-1.0, -1.0);
            raw[(a, b)] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }

    for a in 0..k {
        for b in 0..k {
            if !raw[(a, b)].is_finite() {
                return Err(Error::NonFiniteHessian {
                    row: coords[a],
                    col: coords[b],
                });
            }
        }
    }
    let scale = raw.amax().max(1.0);
    let asymmetry = (&raw - raw.transpose()).amax() / scale;
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(HessianBlock {
        matrix,
        asymmetry,
        shifted,
        steps,
    })
}

/// Full FD derivative information at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    /// `F''_yy` for the requested split.
    pub y_block: Option<DMatrix<f64>>,
    pub fd_step: Vec<f64>,
    pub asymmetry: f64,
    pub asymmetry_flagged: bool,
    pub one_sided: Vec<usize>,
    pub shifted: Vec<usize>,
}

/// Gradient, symmetrized Hessian and (optionally) the `y`-block for a split.
pub fn fd_hessian(
    f: &MeritFunction,
    p: &[f64],
    split: Option<&ParameterSplit>,
) -> Result<DerivativeReport> {
    let grad = fd_gradient(f, p)?;
    let all: Vec<usize> = (0..f.dim()).collect();
    let block = fd_hessian_block(f, p, &all)?;
    let y_block = split.map(|s| {
        let y = s.y_indices();
        DMatrix::from_fn(y.len(), y.len(), |a, b| block.matrix[(y[a], y[b])])
    });
    Ok(DerivativeReport {
        gradient: grad.gradient,
        y_block,
        fd_step: block.steps.clone(),
        asymmetry: block.asymmetry,
        asymmetry_flagged: block.asymmetry_flagged(),
        one_sided: grad.one_sided,
        shifted: block.shifted,
        hessian: block.matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSummary {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min_abs: f64,
    pub negative_count: usize,
    pub near_zero_count: usize,
    pub positive_count: usize,
    pub degeneracy_tol: f64,
}

impl EigenSummary {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn is_degenerate(&self) -> bool {
        self.near_zero_count > 0
    }
}

fn relative_asymmetry(h: &DMatrix<f64>) -> f64 {
    (h - h.transpose()).amax() / h.amax().max(1.0)
}

fn sorted_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Default degeneracy threshold `1e-6 * max(1, max |lambda|)`.
pub fn default_degeneracy_tol(eigenvalues: &[f64]) -> f64 {
    1e-6 * eigenvalues.iter().fold(1.0_f64, |m, l| m.max(l.abs()))
}

/// Signs of the eigenvalues of a symmetric matrix.
///
/// `negative_count` is the Morse index candidate and a non-zero
/// `near_zero_count` marks a degenerate point.
pub fn eigen_index(h: &DMatrix<f64>, degeneracy_tol: Option<f64>) -> Result<EigenSummary> {
    if h.nrows() == 0 || h.nrows() != h.ncols() {
        return Err(Error::BadMatrix);
    }
    let asymmetry = relative_asymmetry(h);
    if asymmetry > 1e-8 {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eigenvalues = sorted_eigenvalues(h);
    let tol = degeneracy_tol.unwrap_or_else(|| default_degeneracy_tol(&eigenvalues));
    let negative_count = eigenvalues.iter().filter(|&&l| l < -tol).count();
    let near_zero_count = eigenvalues.iter().filter(|&&l| l.abs() <= tol).count();
    let positive_count = eigenvalues.len() - negative_count - near_zero_count;
    let min_abs = eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, l| m.min(l.abs()));
    Ok(EigenSummary {
        eigenvalues,
        min_abs,
        negative_count,
        near_zero_count,
        positive_count,
        degeneracy_tol: tol,
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    sorted_eigenvalues(h)[0]
}

/// Default definiteness threshold `1e-8 * max(1, ||H||_2)`.
pub fn default_pd_tol(h: &DMatrix<f64>) -> f64 {
    let ev = sorted_eigenvalues(h);
    1e-8 * ev.iter().fold(1.0_f64, |m, l| m.max(l.abs()))
}

/// Smallest eigenvalue together with [`default_pd_tol`], from one decomposition.
pub fn min_eigenvalue_with_tol(h: &DMatrix<f64>) -> (f64, f64) {
    let ev = sorted_eigenvalues(h);
    (ev[0], 1e-8 * ev.iter().fold(1.0_f64, |m, l| m.max(l.abs())))
}

/// True iff the smallest eigenvalue exceeds `tol`.
pub fn is_positive_definite(h: &DMatrix<f64>, tol: Option<f64>) -> bool {
    if h.nrows() == 0 || h.nrows() != h.ncols() {
        return false;
    }
    let ev = sorted_eigenvalues(h);
    let tol = tol.unwrap_or_else(|| 1e-8 * ev.iter().fold(1.0_f64, |m, l| m.max(l.abs())));
    ev[0] > tol
}

/// Minimizer of `||A y - b||_2` through a singular value decomposition.
pub fn linear_lsq_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (k, j) = a.shape();
    if j == 0 || k < j || b.len() != k {
        return Err(Error::BadMatrix);
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = k.max(j) as f64 * f64::EPSILON * sigma_max;
    let rank = svd.rank(tol);
    if rank < j || sigma_max == 0.0 {
        return Err(Error::RankDeficient { rank, columns: j });
    }
    svd.solve(b, tol).map_err(|_| Error::BadMatrix)
}

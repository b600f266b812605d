//! Critical points, Morse indices and the alternating-sum audit.
//!
//! On a box whose boundary the gradient crosses outward, a Morse function
//! satisfies `sum_k (-1)^k c_k = 1`, where `c_k` counts critical points of
//! index `k`. A census that violates it has missed a critical point or leaks
//! through the boundary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{default_degeneracy_tol, eigen_index, fd_gradient, fd_hessian, EigenSummary};
use crate::problem::{uniform_grid, Compact, MeritFunction, ParameterVector};

/// Newton iterations per seed.
pub const MAX_SEED_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub location: ParameterVector,
    pub value: f64,
    pub grad_norm: f64,
    /// Number of negative Hessian eigenvalues.
    pub index_gamma: usize,
    pub degenerate: bool,
    pub eigen: EigenSummary,
}

/// Critical points found from a seed grid, with per-seed bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub critical_tol: f64,
    pub merge_radius: f64,
    pub seeds: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub escaped: usize,
}

impl CriticalSearch {
    pub fn degenerate_points(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.points.iter().filter(|p| p.degenerate)
    }
}

/// Every grid point of the box, first axis slowest.
fn box_grid(f: &MeritFunction, density: usize) -> Vec<Vec<f64>> {
    let dom = f.domain();
    let axes: Vec<Vec<f64>> = (0..f.dim()).map(|i| dom.axis_grid(i, density)).collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
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

enum SeedOutcome {
    Converged(Vec<f64>, f64),
    NotConverged,
    Escaped,
}

/// Newton iteration on `grad F = 0` from one seed.
///
/// On a near-singular Hessian the step is a pseudo-inverse Newton step on the
/// well-conditioned eigenspace plus a gradient-descent step of length
/// `1e-2 * diag` along the remaining gradient component.
fn refine_seed(f: &MeritFunction, seed: &[f64], critical_tol: f64) -> Result<SeedOutcome> {
    let dom = f.domain();
    let diag = dom.diagonal();
    let mut p = seed.to_vec();
    for _ in 0..MAX_SEED_ITER {
        let d = fd_hessian(f, &p, None)?;
        let g = DVector::from_column_slice(&d.gradient);
        let gn = g.norm();
        if gn <= critical_tol {
            return Ok(SeedOutcome::Converged(p, gn));
        }
        let eig = SymmetricEigen::new(d.hessian.clone());
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let tol = default_degeneracy_tol(&lambdas);
        let coeffs = eig.eigenvectors.transpose() * &g;
        let mut newton = DVector::zeros(g.len());
        let mut null = DVector::zeros(g.len());
        for (k, &l) in lambdas.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            if l.abs() > tol {
                newton -= v * (coeffs[k] / l);
            } else {
                null += v * coeffs[k];
            }
        }
        let mut step = newton;
        let nn = null.norm();
        if nn > 0.0 {
            step -= null * (1e-2 * diag / nn);
        }
        let len = step.norm();
        if len > 0.25 * diag {
            step *= 0.25 * diag / len;
        }
        let next: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        if !dom.contains(&next) {
            return Ok(SeedOutcome::Escaped);
        }
        if next == p {
            break;
        }
        p = next;
    }
    let gn = fd_gradient(f, &p)?.norm();
    if gn <= critical_tol {
        Ok(SeedOutcome::Converged(p, gn))
    } else {
        Ok(SeedOutcome::NotConverged)
    }
}

/// Default critical tolerance `1e-8 * max(1, median gradient norm over the seeds)`.
pub fn default_critical_tol(f: &MeritFunction, seeds: &[Vec<f64>]) -> Result<f64> {
    let mut norms = Vec::with_capacity(seeds.len());
    for s in seeds {
        norms.push(fd_gradient(f, s)?.norm());
    }
    norms.sort_by(f64::total_cmp);
    let median = norms.get(norms.len() / 2).copied().unwrap_or(0.0);
    Ok(1e-8 * median.max(1.0))
}

/// Newton-on-gradient from every point of a `seed_density`-per-axis grid.
///
/// Seeds are refined concurrently and reduced in seed order, so the result
/// is deterministic. Converged points closer than the merge radius
/// `1e-5 * max(1, diag)` are merged, keeping the smaller gradient norm.
pub fn find_critical_points(
    f: &MeritFunction,
    seed_density: usize,
    critical_tol: Option<f64>,
) -> Result<CriticalSearch> {
    if seed_density < 3 {
        return Err(Error::Config(format!(
            "seed density must be at least 3, got {seed_density}"
        )));
    }
    let seeds = box_grid(f, seed_density);
    let critical_tol = match critical_tol {
        Some(t) => t,
        None => default_critical_tol(f, &seeds)?,
    };
    let merge_radius = 1e-5 * f.domain().diagonal().max(1.0);

    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(seeds.len());
    let chunk = seeds.len().div_ceil(workers.max(1));
    let outcomes: Vec<Result<SeedOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| refine_seed(f, s, critical_tol))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("seed refinement panicked"))
            .collect()
    });

    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    let (mut converged, mut not_converged, mut escaped) = (0, 0, 0);
    for outcome in outcomes {
        match outcome? {
            SeedOutcome::Converged(p, gn) => {
                converged += 1;
                match found
                    .iter_mut()
                    .find(|(q, _)| distance_inf(q, &p) <= merge_radius)
                {
                    Some(slot) if gn < slot.1 => *slot = (p, gn),
                    Some(_) => {}
                    None => found.push((p, gn)),
                }
            }
            SeedOutcome::NotConverged => not_converged += 1,
            SeedOutcome::Escaped => escaped += 1,
        }
    }

    let mut points = Vec::with_capacity(found.len());
    for (p, gn) in found {
        let d = fd_hessian(f, &p, None)?;
        let eigen = eigen_index(&d.hessian, None)?;
        points.push(CriticalPoint {
            value: f.eval(&p),
            location: ParameterVector::new(p)?,
            grad_norm: gn,
            index_gamma: eigen.negative_count,
            degenerate: eigen.is_degenerate(),
            eigen,
        });
    }
    points.sort_by(|a, b| {
        a.location
            .as_slice()
            .iter()
            .zip(b.location.as_slice())
            .fold(std::cmp::Ordering::Equal, |o, (x, y)| {
                o.then(x.total_cmp(y))
            })
    });
    Ok(CriticalSearch {
        points,
        critical_tol,
        merge_radius,
        seeds: seeds.len(),
        converged,
        not_converged,
        escaped,
    })
}

fn distance_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A boundary sample where the gradient does not point out of the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InwardWitness {
    pub point: Vec<f64>,
    /// Coordinate whose face was sampled.
    pub axis: usize,
    /// Outward normal component of the gradient.
    pub normal_component: f64,
}

/// First boundary sample with a non-positive outward gradient component.
///
/// Each face is sampled on a `boundary_density`-per-axis grid, corners included.
pub fn inward_gradient_witness(
    f: &MeritFunction,
    boundary_density: usize,
) -> Result<Option<InwardWitness>> {
    if boundary_density < 3 {
        return Err(Error::Config(format!(
            "boundary density must be at least 3, got {boundary_density}"
        )));
    }
    let dom = f.domain();
    let m = f.dim();
    for axis in 0..m {
        for (side, sign) in [(dom.lo(axis), -1.0), (dom.hi(axis), 1.0)] {
            let mut points = vec![Vec::new()];
            for i in 0..m {
                let coords = if i == axis {
                    vec![side]
                } else {
                    uniform_grid(dom.lo(i), dom.hi(i), boundary_density)
                };
                points = points
                    .into_iter()
                    .flat_map(|p: Vec<f64>| {
                        coords.iter().map(move |&v| {
                            let mut q = p.clone();
                            q.push(v);
                            q
                        })
                    })
                    .collect();
            }
            for p in points {
                let g = fd_gradient(f, &p)?.gradient;
                let normal_component = sign * g[axis];
                if normal_component <= 0.0 || normal_component.is_nan() {
                    return Ok(Some(InwardWitness {
                        point: p,
                        axis,
                        normal_component,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// True iff the gradient points strictly outward at every sampled boundary point.
pub fn check_outward_gradient(f: &MeritFunction, boundary_density: usize) -> Result<bool> {
    Ok(inward_gradient_witness(f, boundary_density)?.is_none())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseCensus {
    /// Number of critical points per Morse index.
    pub counts: BTreeMap<usize, usize>,
    pub boundary_outward: bool,
    pub alternating_sum: i64,
    pub passed: bool,
}

impl MorseCensus {
    pub fn verdict(&self) -> &'static str {
        if self.passed {
            "pass"
        } else if !self.boundary_outward {
            "fail: gradient not outward on the boundary"
        } else {
            "fail: missing critical point or boundary leak"
        }
    }
}

/// Alternating sum of the index census; passes iff the boundary gradient is
/// outward and the sum is one.
pub fn morse_equality_audit(points: &[CriticalPoint], outward: bool) -> Result<MorseCensus> {
    let degenerate: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.degenerate)
        .map(|p| p.location.as_slice().to_vec())
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::DegenerateCriticalPoints(degenerate));
    }
    let mut counts = BTreeMap::new();
    for p in points {
        *counts.entry(p.index_gamma).or_insert(0) += 1;
    }
    Ok(census_from_counts(counts, outward))
}

pub fn census_from_counts(counts: BTreeMap<usize, usize>, outward: bool) -> MorseCensus {
    let alternating_sum = counts
        .iter()
        .map(|(&k, &c)| if k % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum();
    MorseCensus {
        passed: outward && alternating_sum == 1,
        counts,
        boundary_outward: outward,
        alternating_sum,
    }
}

/// Structured text listing of the critical points and the audit verdict.
pub fn census_report(search: &CriticalSearch, census: Option<&MorseCensus>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seeds: {} converged: {} not converged: {} escaped: {}",
        search.seeds, search.converged, search.not_converged, search.escaped
    );
    let _ = writeln!(s, "critical tol: {:e}", search.critical_tol);
    for p in &search.points {
        let _ = writeln!(
            s,
            "point {} value {} index {} degenerate {}",
            p.location,
            Compact(p.value),
            p.index_gamma,
            p.degenerate
        );
    }
    match census {
        Some(c) => {
            let counts: Vec<String> = c.counts.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let _ = writeln!(s, "counts: {{{}}}", counts.join(", "));
            let _ = writeln!(s, "boundary outward: {}", c.boundary_outward);
            let _ = writeln!(s, "alternating sum: {}", c.alternating_sum);
            let _ = writeln!(s, "verdict: {}", c.verdict());
        }
        None => {
            let _ = writeln!(s, "verdict: refused, degenerate critical points present");
        }
    }
    s
}

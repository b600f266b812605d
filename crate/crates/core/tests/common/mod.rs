//! Closed-form oracles shared by the integration and acceptance tests.
//!
//! Everything here is computed by hand-derived formulas or plain dense
//! linear algebra, independently of the finite-difference and solver code
//! under test.

#![allow(dead_code)]

use hierlsq::problem::{exp_fit_samples, DomainBox, MeritFunction};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Gradient = Vec<f64>;
pub type Hessian = DMatrix<f64>;

/// Analytic gradient and Hessian of a catalog fixture.
pub fn analytic(name: &str, p: &[f64]) -> (Gradient, Hessian) {
    match name {
        "QUAD" => (
            vec![2.0 * p[0], 2.0 * p[1]],
            DMatrix::from_diagonal_element(2, 2, 2.0),
        ),
        "QUAD3" => (
            p.iter().map(|v| 2.0 * v).collect(),
            DMatrix::from_diagonal_element(3, 3, 2.0),
        ),
        "ANISO3" => {
            let a = aniso3();
            let g = 2.0 * &a * DVector::from_column_slice(p);
            (g.iter().copied().collect(), 2.0 * a)
        }
        "SINE_VALLEY" => {
            let (x, y) = (p[0], p[1]);
            let r = y - x.sin();
            (
                vec![2.0 * x - 2.0 * r * x.cos(), 2.0 * r],
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        2.0 + 2.0 * x.cos().powi(2) + 2.0 * r * x.sin(),
                        -2.0 * x.cos(),
                        -2.0 * x.cos(),
                        2.0,
                    ],
                ),
            )
        }
        "TWO_WELLS" => {
            let (x, y) = (p[0], p[1]);
            (
                vec![4.0 * x * (x * x - 1.0) - 2.0 * (y - x), 2.0 * (y - x)],
                DMatrix::from_row_slice(2, 2, &[12.0 * x * x - 2.0, -2.0, -2.0, 2.0]),
            )
        }
        "DEGEN_LINE" => {
            let r = p[0] + p[1] - 2.0;
            (vec![2.0 * r, 2.0 * r], DMatrix::from_element(2, 2, 2.0))
        }
        "EXP_FIT" => {
            let (x, y) = (p[0], p[1]);
            let mut g = [0.0; 2];
            let mut h = DMatrix::zeros(2, 2);
            for (t, d) in exp_fit_samples() {
                let e = (x * t).exp();
                let r = y * e - d;
                let (rx, ry) = (y * t * e, e);
                let (rxx, rxy) = (y * t * t * e, t * e);
                g[0] += 2.0 * r * rx;
                g[1] += 2.0 * r * ry;
                h[(0, 0)] += 2.0 * (rx * rx + r * rxx);
                h[(0, 1)] += 2.0 * (rx * ry + r * rxy);
                h[(1, 1)] += 2.0 * ry * ry;
            }
            h[(1, 0)] = h[(0, 1)];
            (g.to_vec(), h)
        }
        "NEG_Y" => (
            vec![2.0 * p[0], -2.0 * p[1]],
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]),
        ),
        other => panic!("no oracle for {other}"),
    }
}

pub fn aniso3() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0])
}

/// `min over the other coordinates` of `(p - c)^T A (p - c)` with the
/// coordinates in `fixed` held at `values`: a Schur-complement quadratic form.
pub fn schur_section(a: &DMatrix<f64>, center: &[f64], fixed: &[usize], values: &[f64]) -> f64 {
    let m = a.nrows();
    let free: Vec<usize> = (0..m).filter(|i| !fixed.contains(i)).collect();
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
    };
    let u = DVector::from_iterator(
        fixed.len(),
        fixed.iter().zip(values).map(|(&i, v)| v - center[i]),
    );
    if free.is_empty() {
        return (u.transpose() * sub(fixed, fixed) * &u)[(0, 0)];
    }
    let aff = sub(&free, &free);
    let schur = sub(fixed, fixed)
        - sub(fixed, &free) * aff.try_inverse().expect("free block invertible") * sub(&free, fixed);
    (u.transpose() * schur * &u)[(0, 0)]
}

/// Random symmetric positive-definite quadratic with eigenvalues in `[1, 3]`
/// and centre in `[-1.5, 1.5]^M`, on the default box.
pub struct RandomQuadratic {
    pub matrix: DMatrix<f64>,
    pub center: Vec<f64>,
    pub merit: MeritFunction,
}

pub fn random_quadratic(rng: &mut ChaCha8Rng, dim: usize) -> RandomQuadratic {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let lambdas = DVector::from_fn(dim, |_, _| rng.random_range(1.0..3.0));
    let a = &q * DMatrix::from_diagonal(&lambdas) * q.transpose();
    let a: DMatrix<f64> = (&a + a.transpose()) * 0.5;
    let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let merit = MeritFunction::quadratic(a.clone(), center.clone(), DomainBox::default_for(dim))
        .expect("quadratic merit");
    RandomQuadratic {
        matrix: a,
        center,
        merit,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the box shrunk by `margin` of each width.
pub fn interior_point(rng: &mut ChaCha8Rng, b: &DomainBox, margin: f64) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let pad = margin * b.width(i);
            rng.random_range(b.lo(i) + pad..b.hi(i) - pad)
        })
        .collect()
}

pub fn distance_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `||a - b||_inf / max(1, ||b||_inf)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    distance_inf(a, b) / scale
}

/// Explicit-Euler gradient flow of `TWO_WELLS` from `p`, run to rest.
pub fn two_wells_flow(mut p: [f64; 2], dt: f64) -> [f64; 2] {
    for _ in 0..2_000_000 {
        let (g, _) = analytic("TWO_WELLS", &p);
        if g[0].hypot(g[1]) < 1e-12 {
            break;
        }
        p[0] -= dt * g[0];
        p[1] -= dt * g[1];
    }
    p
}

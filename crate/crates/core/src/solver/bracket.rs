//! One-dimensional bracketing on a coordinate grid and golden-section refinement.

use serde::Serialize;

use crate::error::{Error, Result};

/// `(sqrt(5) - 1) / 2`
pub const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_8;

const MAX_GOLDEN_ITER: usize = 500;

/// Points `a < b < c` with `f(b)` strictly below `f(a)` and `f(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketTriplet {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub fa: f64,
    pub fb: f64,
    pub fc: f64,
}

impl BracketTriplet {
    pub fn new(a: f64, b: f64, c: f64, fa: f64, fb: f64, fc: f64) -> Result<Self> {
        let t = Self {
            a,
            b,
            c,
            fa,
            fb,
            fc,
        };
        if t.is_valid() {
            Ok(t)
        } else {
            Err(Error::InvalidBracket)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.a < self.b && self.b < self.c && self.fb < self.fa && self.fb < self.fc
    }
}

/// First consecutive grid triplet whose middle value is strictly smallest.
///
/// Ties resolve to the leftmost qualifying triplet. Without one, the error
/// tells apart a minimum at the grid boundary from a flat function.
pub fn bracket_on_grid<F>(mut eval: F, grid: &[f64]) -> Result<BracketTriplet>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    for &u in grid {
        let v = eval(u)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { at: u });
        }
        values.push(v);
    }
    match bracket_on_values(grid, &values) {
        Err(Error::FlatSection) => split_tied_pair(&mut eval, grid, &values),
        other => other,
    }
}

/// An interior minimum shared by two adjacent grid points is bracketed by
/// the pair itself once their midpoint is strictly lower.
fn split_tied_pair<F>(eval: &mut F, grid: &[f64], values: &[f64]) -> Result<BracketTriplet>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = grid.len();
    let m = (0..g)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is non-empty");
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    for j in [m.saturating_sub(1), m] {
        if j == 0 || j + 2 >= g || !tie(values[j], values[j + 1]) {
            continue;
        }
        let low = values[j].max(values[j + 1]);
        if values[j - 1] <= low || values[j + 2] <= low {
            continue;
        }
        let mid = 0.5 * (grid[j] + grid[j + 1]);
        let fm = eval(mid)?;
        if !fm.is_finite() {
            return Err(Error::NonFiniteValue { at: mid });
        }
        if fm < values[j].min(values[j + 1]) {
            return BracketTriplet::new(grid[j], mid, grid[j + 1], values[j], fm, values[j + 1]);
        }
    }
    Err(Error::FlatSection)
}

/// [`bracket_on_grid`] over precomputed values.
pub fn bracket_on_values(grid: &[f64], values: &[f64]) -> Result<BracketTriplet> {
    check_grid(grid)?;
    if let Some(j) =
        (1..grid.len() - 1).find(|&j| values[j] < values[j - 1] && values[j] < values[j + 1])
    {
        return BracketTriplet::new(
            grid[j - 1],
            grid[j],
            grid[j + 1],
            values[j - 1],
            values[j],
            values[j + 1],
        );
    }
    let first = values[0];
    if values
        .iter()
        .all(|v| (v - first).abs() <= 1e-12 * first.abs().max(1.0))
    {
        return Err(Error::FlatSection);
    }
    let (arg, _) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        );
    if arg == 0 || arg == grid.len() - 1 {
        Err(Error::BoundaryMinimum { at: grid[arg] })
    } else {
        // interior plateau without a strict triplet
        Err(Error::FlatSection)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 || !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::BadGrid);
    }
    Ok(())
}

/// Golden-section contraction of a bracket until `c - a <= x_tol`.
///
/// Returns the best interior abscissa and its value.
pub fn golden_refine<F>(mut eval: F, triplet: &BracketTriplet, x_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !triplet.is_valid() {
        return Err(Error::InvalidBracket);
    }
    let r = GOLDEN_RATIO;
    let c = 1.0 - r;
    let mut call = |u: f64| -> Result<f64> {
        let v = eval(u)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteValue { at: u })
        }
    };

    let (mut x0, mut x3) = (triplet.a, triplet.c);
    let (mut x1, mut x2, mut f1, mut f2);
    if triplet.c - triplet.b > triplet.b - triplet.a {
        x1 = triplet.b;
        f1 = triplet.fb;
        x2 = triplet.b + c * (triplet.c - triplet.b);
        f2 = call(x2)?;
    } else {
        x2 = triplet.b;
        f2 = triplet.fb;
        x1 = triplet.b - c * (triplet.b - triplet.a);
        f1 = call(x1)?;
    }

    let mut iter = 0;
    while x3 - x0 > x_tol && iter < MAX_GOLDEN_ITER {
        if f2 < f1 {
            x0 = x1;
            x1 = x2;
            x2 = r * x2 + c * x3;
            f1 = f2;
            f2 = call(x2)?;
        } else {
            x3 = x2;
            x2 = x1;
            x1 = r * x1 + c * x0;
            f2 = f1;
            f1 = call(x1)?;
        }
        // interval below the representable spacing
        if !(x0 < x1 && x1 <= x2 && x2 < x3) {
            break;
        }
        iter += 1;
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

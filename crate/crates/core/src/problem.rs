//! Parameter vectors, direct-sum splits, merit functions and the built-in
//! problem catalog.
//!
//! A [`MeritFunction`] is a pure scalar field on a closed [`DomainBox`]. It
//! is either a general closure, a sum of squared residuals, or a partially
//! linear least-squares fit whose model is linear in the trailing `y`
//! coordinates. The last structure allows the inner minimization to be
//! carried out exactly by a linear solve.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default per-coordinate bound used when a problem does not override its box.
pub const DEFAULT_BOUND: f64 = 10.0;

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DimensionTooSmall(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameter(i));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Max-norm distance to another point of the same dimension.
    pub fn distance_inf(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", Compact(*v))?;
        }
        write!(f, ")")
    }
}

/// Shortest round-trip decimal, switching to exponent form for magnitudes
/// below `1e-4` or from `1e15` upward so text reports stay readable.
#[derive(Debug, Clone, Copy)]
pub struct Compact(pub f64);

impl fmt::Display for Compact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Direct-sum decomposition `p = (x, y)` of the parameter indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSplit {
    x_indices: Vec<usize>,
    y_indices: Vec<usize>,
}

impl ParameterSplit {
    pub fn new(x_indices: Vec<usize>, y_indices: Vec<usize>) -> Result<Self> {
        if x_indices.is_empty() || y_indices.is_empty() {
            return Err(Error::InvalidSplit(
                "both x and y need at least one index".into(),
            ));
        }
        let dim = x_indices.len() + y_indices.len();
        let mut seen = vec![false; dim];
        for &i in x_indices.iter().chain(&y_indices) {
            if i >= dim {
                return Err(Error::InvalidSplit(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidSplit(format!("index {i} appears twice")));
            }
            seen[i] = true;
        }
        Ok(Self {
            x_indices,
            y_indices,
        })
    }

    /// Split with `x` the given indices and `y` every remaining coordinate in ascending order.
    pub fn with_x(x_indices: Vec<usize>, dim: usize) -> Result<Self> {
        let y = (0..dim).filter(|i| !x_indices.contains(i)).collect();
        Self::new(x_indices, y)
    }

    pub fn x_indices(&self) -> &[usize] {
        &self.x_indices
    }

    pub fn y_indices(&self) -> &[usize] {
        &self.y_indices
    }

    pub fn n(&self) -> usize {
        self.x_indices.len()
    }

    pub fn m(&self) -> usize {
        self.y_indices.len()
    }

    pub fn dim(&self) -> usize {
        self.n() + self.m()
    }

    /// Builds the full point from its `x` and `y` parts.
    pub fn assemble(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for (&i, &v) in self.x_indices.iter().zip(x) {
            p[i] = v;
        }
        for (&i, &v) in self.y_indices.iter().zip(y) {
            p[i] = v;
        }
        p
    }

    pub fn x_part(&self, p: &[f64]) -> Vec<f64> {
        self.x_indices.iter().map(|&i| p[i]).collect()
    }

    pub fn y_part(&self, p: &[f64]) -> Vec<f64> {
        self.y_indices.iter().map(|&i| p[i]).collect()
    }
}

/// Closed coordinate box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainBox {
    bounds: Vec<(f64, f64)>,
}

impl DomainBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "coordinate {i} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-half_width, half_width]` on every coordinate.
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            bounds: vec![(-half_width, half_width); dim],
        }
    }

    /// `[-10, 10]` on every coordinate.
    pub fn default_for(dim: usize) -> Self {
        Self::symmetric(dim, DEFAULT_BOUND)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.bounds[i].0
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.bounds[i].1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.bounds[i].1 - self.bounds[i].0
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn diagonal(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (v, (lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Uniform grid of `density` points spanning coordinate `i`, endpoints included.
    pub fn axis_grid(&self, i: usize, density: usize) -> Vec<f64> {
        uniform_grid(self.lo(i), self.hi(i), density)
    }

    /// Restriction of the box to the given coordinates.
    pub fn project(&self, indices: &[usize]) -> DomainBox {
        DomainBox {
            bounds: indices.iter().map(|&i| self.bounds[i]).collect(),
        }
    }
}

/// `density` equally spaced points on `[lo, hi]`, endpoints exact.
pub fn uniform_grid(lo: f64, hi: f64, density: usize) -> Vec<f64> {
    match density {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let last = (density - 1) as f64;
            (0..density)
                .map(|k| {
                    if k + 1 == density {
                        hi
                    } else {
                        lo + (hi - lo) * (k as f64 / last)
                    }
                })
                .collect()
        }
    }
}

/// Named basis expression for declarative partially linear models.
///
/// Each term evaluates to `scale * phi(t; x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisExpr {
    /// `t^degree`
    Polynomial {
        degree: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `exp(x_param * t)`
    Exponential {
        param: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sin(x_param * t)`
    Sine {
        param: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `cos(x_param * t)`
    Cosine {
        param: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl BasisExpr {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            BasisExpr::Polynomial { degree, scale } => scale * t.powi(degree as i32),
            BasisExpr::Exponential { param, scale } => scale * (x[param] * t).exp(),
            BasisExpr::Sine { param, scale } => scale * (x[param] * t).sin(),
            BasisExpr::Cosine { param, scale } => scale * (x[param] * t).cos(),
            BasisExpr::Constant { value } => value,
        }
    }

    /// Nonlinear parameter this term depends on, if any.
    pub fn param(&self) -> Option<usize> {
        match *self {
            BasisExpr::Exponential { param, .. }
            | BasisExpr::Sine { param, .. }
            | BasisExpr::Cosine { param, .. } => Some(param),
            BasisExpr::Polynomial { .. } | BasisExpr::Constant { .. } => None,
        }
    }
}

/// `phi(t; x)` supplied from code.
pub type BasisClosure = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// One basis map `phi_j(t; x)` of a partially linear model.
#[derive(Clone)]
pub enum BasisFn {
    Named(BasisExpr),
    Custom(BasisClosure),
}

impl BasisFn {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            BasisFn::Named(e) => e.eval(t, x),
            BasisFn::Custom(f) => f(t, x),
        }
    }
}

impl fmt::Debug for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFn::Named(e) => e.fmt(f),
            BasisFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<BasisExpr> for BasisFn {
    fn from(e: BasisExpr) -> Self {
        BasisFn::Named(e)
    }
}

/// Model `sum_j y_j phi_j(t; x) + psi(t; x)` fitted to samples `(t_k, d_k)`.
///
/// Parameters are laid out as `p = (x_0 .. x_{n-1}, y_0 .. y_{J-1})`.
#[derive(Debug, Clone)]
pub struct PartiallyLinearModel {
    pub basis: Vec<BasisFn>,
    pub offset: Option<BasisFn>,
    pub samples: Vec<(f64, f64)>,
    pub nonlinear_dim: usize,
}

impl PartiallyLinearModel {
    pub fn validate(&self) -> Result<()> {
        if self.nonlinear_dim == 0 {
            return Err(Error::InvalidModel(
                "at least one nonlinear parameter is required".into(),
            ));
        }
        if self.basis.is_empty() {
            return Err(Error::InvalidModel("empty basis".into()));
        }
        if self.samples.len() < self.basis.len() {
            return Err(Error::TooFewSamples {
                samples: self.samples.len(),
                basis: self.basis.len(),
            });
        }
        let named = self.basis.iter().chain(self.offset.iter());
        for b in named {
            if let BasisFn::Named(e) = b {
                if let Some(param) = e.param() {
                    if param >= self.nonlinear_dim {
                        return Err(Error::InvalidModel(format!(
                            "basis term refers to x_{param} but only {} nonlinear parameters exist",
                            self.nonlinear_dim
                        )));
                    }
                }
            }
        }
        if let Some(k) = self
            .samples
            .iter()
            .position(|(t, d)| !t.is_finite() || !d.is_finite())
        {
            return Err(Error::InvalidModel(format!("sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn linear_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.nonlinear_dim + self.linear_dim()
    }

    /// `Phi_{kj} = phi_j(t_k; x)`.
    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.samples.len(), self.basis.len(), |k, j| {
            self.basis[j].eval(self.samples[k].0, x)
        })
    }

    /// `b_k = d_k - psi(t_k; x)`.
    pub fn rhs(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.samples.len(),
            self.samples
                .iter()
                .map(|&(t, d)| d - self.offset.as_ref().map_or(0.0, |psi| psi.eval(t, x))),
        )
    }

    pub fn predict(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let lin: f64 = self
            .basis
            .iter()
            .zip(y)
            .map(|(phi, yj)| yj * phi.eval(t, x))
            .sum();
        lin + self.offset.as_ref().map_or(0.0, |psi| psi.eval(t, x))
    }

    pub fn sum_of_squares(&self, p: &[f64]) -> f64 {
        let (x, y) = p.split_at(self.nonlinear_dim);
        self.samples
            .iter()
            .map(|&(t, d)| (self.predict(t, x, y) - d).powi(2))
            .sum()
    }
}

/// Scalar map on parameter space.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How a merit function is built.
#[derive(Clone)]
pub enum Structure {
    General,
    Residual(Vec<ScalarFn>),
    PartiallyLinear(Arc<PartiallyLinearModel>),
}

impl Structure {
    pub fn name(&self) -> &'static str {
        match self {
            Structure::General => "general",
            Structure::Residual(_) => "residual",
            Structure::PartiallyLinear(_) => "partially_linear",
        }
    }
}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Structure::General => f.write_str("General"),
            Structure::Residual(r) => write!(f, "Residual({} maps)", r.len()),
            Structure::PartiallyLinear(m) => f.debug_tuple("PartiallyLinear").field(m).finish(),
        }
    }
}

/// Pure scalar field `F: R^M -> R` on a closed box.
#[derive(Clone)]
pub struct MeritFunction {
    dim: usize,
    structure: Structure,
    domain: DomainBox,
    objective: ScalarFn,
}

impl fmt::Debug for MeritFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeritFunction")
            .field("dim", &self.dim)
            .field("structure", &self.structure)
            .field("domain", &self.domain)
            .finish()
    }
}

impl MeritFunction {
    /// General merit function from a closure.
    pub fn general<F>(dim: usize, domain: DomainBox, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_dims(dim, &domain)?;
        Ok(Self {
            dim,
            structure: Structure::General,
            domain,
            objective: Arc::new(f),
        })
    }

    /// `F(p) = (p - c)^T A (p - c)` for a symmetric matrix `A`.
    pub fn quadratic(a: DMatrix<f64>, center: Vec<f64>, domain: DomainBox) -> Result<Self> {
        let dim = center.len();
        if a.nrows() != dim || a.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: a.nrows(),
            });
        }
        Self::general(dim, domain, move |p| {
            let d = DVector::from_iterator(dim, p.iter().zip(&center).map(|(v, c)| v - c));
            d.dot(&(&a * &d))
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Same function on a different box.
    pub fn with_domain(&self, domain: DomainBox) -> Result<Self> {
        check_dims(self.dim, &domain)?;
        Ok(Self {
            domain,
            ..self.clone()
        })
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.objective)(p)
    }

    /// Evaluates after checking dimension and box membership.
    pub fn evaluate(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: p.len(),
            });
        }
        if !self.domain.contains(p) {
            return Err(Error::OutOfBox { point: p.to_vec() });
        }
        Ok(self.eval(p))
    }

    pub fn partially_linear(&self) -> Option<&PartiallyLinearModel> {
        match &self.structure {
            Structure::PartiallyLinear(m) => Some(m),
            _ => None,
        }
    }

    /// The split `x = nonlinear, y = linear` of a partially linear function.
    pub fn natural_split(&self) -> Option<ParameterSplit> {
        self.partially_linear().map(|m| {
            ParameterSplit::new(
                (0..m.nonlinear_dim).collect(),
                (m.nonlinear_dim..m.dim()).collect(),
            )
            .expect("model layout is a valid split")
        })
    }

    /// True when linear elimination applies to `split`.
    pub fn is_linear_in(&self, split: &ParameterSplit) -> bool {
        self.natural_split().is_some_and(|s| &s == split)
    }
}

fn check_dims(dim: usize, domain: &DomainBox) -> Result<()> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    if domain.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: domain.dim(),
        });
    }
    Ok(())
}

/// `F(p) = sum_k r_k(p)^2`.
pub fn build_residual_merit(
    residuals: Vec<ScalarFn>,
    dim: usize,
    domain: DomainBox,
) -> Result<MeritFunction> {
    if residuals.is_empty() {
        return Err(Error::EmptyResiduals);
    }
    check_dims(dim, &domain)?;
    let rs = residuals.clone();
    Ok(MeritFunction {
        dim,
        structure: Structure::Residual(residuals),
        domain,
        objective: Arc::new(move |p| rs.iter().map(|r| r(p).powi(2)).sum()),
    })
}

/// Least-squares merit function of a model linear in its trailing parameters.
pub fn build_partially_linear(
    model: PartiallyLinearModel,
    domain: DomainBox,
) -> Result<MeritFunction> {
    model.validate()?;
    let dim = model.dim();
    check_dims(dim, &domain)?;
    let model = Arc::new(model);
    let m = Arc::clone(&model);
    Ok(MeritFunction {
        dim,
        structure: Structure::PartiallyLinear(model),
        domain,
        objective: Arc::new(move |p| m.sum_of_squares(p)),
    })
}

/// Convexity class of a catalog fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityClass {
    StrictlyConvex,
    ConvexInY,
    TwoMinima,
    DegenerateValley,
    /// `F''_yy` indefinite: used to exercise refusals.
    NotConvexInY,
}

/// Closed-form implicit function `y = g(x)` for the split `x = x_indices`.
#[derive(Clone)]
pub struct KnownImplicit {
    pub description: &'static str,
    pub x_indices: Vec<usize>,
    pub g: fn(&[f64]) -> Vec<f64>,
}

impl fmt::Debug for KnownImplicit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnownImplicit")
            .field("description", &self.description)
            .field("x_indices", &self.x_indices)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemCatalogEntry {
    pub name: &'static str,
    pub merit: MeritFunction,
    /// Unique global minimizer, when one exists.
    pub known_minimum: Option<ParameterVector>,
    /// Every isolated local minimizer known in closed form.
    pub minima: Vec<ParameterVector>,
    pub known_implicit: Option<KnownImplicit>,
    pub convexity_class: ConvexityClass,
}

/// Samples `t = 0..9` of `2 exp(-0.5 t)`.
pub fn exp_fit_samples() -> Vec<(f64, f64)> {
    (0..10)
        .map(|k| {
            let t = k as f64;
            (t, 2.0 * (-0.5 * t).exp())
        })
        .collect()
}

fn residual(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

fn pv(values: &[f64]) -> ParameterVector {
    ParameterVector::new(values.to_vec()).expect("catalog point is valid")
}

fn sine_implicit(x: &[f64]) -> Vec<f64> {
    vec![x[0].sin()]
}

fn identity_implicit(x: &[f64]) -> Vec<f64> {
    vec![x[0]]
}

fn line_implicit(x: &[f64]) -> Vec<f64> {
    vec![2.0 - x[0]]
}

fn zero_implicit(x: &[f64]) -> Vec<f64> {
    vec![0.0; x.len()]
}

/// Matrix of the anisotropic quadratic fixture `ANISO3`.
pub fn aniso3_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0])
}

/// Built-in fixtures.
pub fn catalog() -> Vec<ProblemCatalogEntry> {
    let d2 = DomainBox::default_for(2);
    let d3 = DomainBox::default_for(3);

    let quad = build_residual_merit(vec![residual(|p| p[0]), residual(|p| p[1])], 2, d2.clone())
        .expect("QUAD");
    let quad3 = build_residual_merit(
        vec![residual(|p| p[0]), residual(|p| p[1]), residual(|p| p[2])],
        3,
        d3.clone(),
    )
    .expect("QUAD3");
    let aniso3 = MeritFunction::quadratic(aniso3_matrix(), vec![0.0; 3], d3).expect("ANISO3");
    let sine_valley = build_residual_merit(
        vec![residual(|p| p[0]), residual(|p| p[1] - p[0].sin())],
        2,
        d2.clone(),
    )
    .expect("SINE_VALLEY");
    let two_wells = build_residual_merit(
        vec![residual(|p| p[0] * p[0] - 1.0), residual(|p| p[1] - p[0])],
        2,
        DomainBox::new(vec![(-2.0, 2.0), (-3.0, 3.0)]).expect("box"),
    )
    .expect("TWO_WELLS");
    let degen_line = build_residual_merit(vec![residual(|p| p[0] + p[1] - 2.0)], 2, d2.clone())
        .expect("DEGEN_LINE");
    let exp_fit = build_partially_linear(
        PartiallyLinearModel {
            basis: vec![BasisExpr::Exponential {
                param: 0,
                scale: 1.0,
            }
            .into()],
            offset: None,
            samples: exp_fit_samples(),
            nonlinear_dim: 1,
        },
        DomainBox::new(vec![(-3.0, 1.0), (-10.0, 10.0)]).expect("box"),
    )
    .expect("EXP_FIT");
    let neg_y = MeritFunction::general(2, d2, |p| p[0] * p[0] - p[1] * p[1]).expect("NEG_Y");

    vec![
        ProblemCatalogEntry {
            name: "QUAD",
            merit: quad,
            known_minimum: Some(pv(&[0.0, 0.0])),
            minima: vec![pv(&[0.0, 0.0])],
            known_implicit: Some(KnownImplicit {
                description: "g(x) = 0",
                x_indices: vec![0],
                g: zero_implicit,
            }),
            convexity_class: ConvexityClass::StrictlyConvex,
        },
        ProblemCatalogEntry {
            name: "SINE_VALLEY",
            merit: sine_valley,
            known_minimum: Some(pv(&[0.0, 0.0])),
            minima: vec![pv(&[0.0, 0.0])],
            known_implicit: Some(KnownImplicit {
                description: "g(x) = sin x",
                x_indices: vec![0],
                g: sine_implicit,
            }),
            convexity_class: ConvexityClass::ConvexInY,
        },
        ProblemCatalogEntry {
            name: "TWO_WELLS",
            merit: two_wells,
            known_minimum: None,
            minima: vec![pv(&[-1.0, -1.0]), pv(&[1.0, 1.0])],
            known_implicit: Some(KnownImplicit {
                description: "g(x) = x",
                x_indices: vec![0],
                g: identity_implicit,
            }),
            convexity_class: ConvexityClass::TwoMinima,
        },
        ProblemCatalogEntry {
            name: "DEGEN_LINE",
            merit: degen_line,
            known_minimum: None,
            minima: Vec::new(),
            known_implicit: Some(KnownImplicit {
                description: "g(x) = 2 - x",
                x_indices: vec![0],
                g: line_implicit,
            }),
            convexity_class: ConvexityClass::DegenerateValley,
        },
        ProblemCatalogEntry {
            name: "EXP_FIT",
            merit: exp_fit,
            known_minimum: Some(pv(&[-0.5, 2.0])),
            minima: vec![pv(&[-0.5, 2.0])],
            known_implicit: None,
            convexity_class: ConvexityClass::ConvexInY,
        },
        ProblemCatalogEntry {
            name: "QUAD3",
            merit: quad3,
            known_minimum: Some(pv(&[0.0, 0.0, 0.0])),
            minima: vec![pv(&[0.0, 0.0, 0.0])],
            known_implicit: None,
            convexity_class: ConvexityClass::StrictlyConvex,
        },
        ProblemCatalogEntry {
            name: "ANISO3",
            merit: aniso3,
            known_minimum: Some(pv(&[0.0, 0.0, 0.0])),
            minima: vec![pv(&[0.0, 0.0, 0.0])],
            known_implicit: None,
            convexity_class: ConvexityClass::StrictlyConvex,
        },
        ProblemCatalogEntry {
            name: "NEG_Y",
            merit: neg_y,
            known_minimum: None,
            minima: Vec::new(),
            known_implicit: None,
            convexity_class: ConvexityClass::NotConvexInY,
        },
    ]
}

/// Catalog entry by name (case-insensitive).
pub fn lookup(name: &str) -> Option<ProblemCatalogEntry> {
    catalog()
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
}

/// Names of all catalog fixtures.
pub fn catalog_names() -> Vec<&'static str> {
    catalog().iter().map(|e| e.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn residual_merit_sums_squares() {
        let f = build_residual_merit(
            vec![residual(|p| p[0] - 1.0), residual(|p| p[1] - 2.0)],
            2,
            DomainBox::default_for(2),
        )
        .unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]), 0.0);
        assert_eq!(f.eval(&[0.0, 0.0]), 5.0);
        assert_eq!(f.structure().name(), "residual");
    }

    #[test]
    fn residual_merit_with_sine() {
        let f = build_residual_merit(
            vec![residual(|p| p[1] - p[0].sin()), residual(|p| p[0])],
            2,
            DomainBox::default_for(2),
        )
        .unwrap();
        let x = PI / 2.0;
        // (1 - sin(pi/2))^2 + (pi/2)^2
        let oracle = (1.0 - x.sin()).powi(2) + x * x;
        assert_eq!(f.eval(&[x, 1.0]), oracle);
        assert!((f.eval(&[x, 1.0]) - x * x).abs() < 1e-15);
    }

    #[test]
    fn empty_residuals_rejected() {
        let err = build_residual_merit(Vec::new(), 2, DomainBox::default_for(2)).unwrap_err();
        assert!(matches!(err, Error::EmptyResiduals));
    }

    #[test]
    fn partially_linear_zero_at_generating_parameters() {
        let f = lookup("EXP_FIT").unwrap().merit;
        assert_eq!(f.eval(&[-0.5, 2.0]), 0.0);
        // at y = 0 every residual is -d_k
        let oracle: f64 = (0..10)
            .map(|k| (2.0 * (-0.5 * k as f64).exp()).powi(2))
            .sum();
        assert!((f.eval(&[-0.5, 0.0]) - oracle).abs() < 1e-14 * oracle);
    }

    #[test]
    fn partially_linear_requires_nonlinear_parameter() {
        let model = PartiallyLinearModel {
            basis: vec![
                BasisExpr::Constant { value: 1.0 }.into(),
                BasisExpr::Polynomial {
                    degree: 1,
                    scale: 1.0,
                }
                .into(),
            ],
            offset: None,
            samples: exp_fit_samples(),
            nonlinear_dim: 0,
        };
        let err = build_partially_linear(model, DomainBox::default_for(2)).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn partially_linear_requires_enough_samples() {
        let model = PartiallyLinearModel {
            basis: vec![
                BasisExpr::Exponential {
                    param: 0,
                    scale: 1.0,
                }
                .into(),
                BasisExpr::Constant { value: 1.0 }.into(),
            ],
            offset: None,
            samples: vec![(0.0, 1.0)],
            nonlinear_dim: 1,
        };
        let err = build_partially_linear(model, DomainBox::default_for(3)).unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewSamples {
                samples: 1,
                basis: 2
            }
        ));
    }

    #[test]
    fn basis_parameter_must_exist() {
        let model = PartiallyLinearModel {
            basis: vec![BasisExpr::Exponential {
                param: 3,
                scale: 1.0,
            }
            .into()],
            offset: None,
            samples: exp_fit_samples(),
            nonlinear_dim: 1,
        };
        assert!(build_partially_linear(model, DomainBox::default_for(2)).is_err());
    }

    #[test]
    fn split_validation() {
        assert!(ParameterSplit::new(vec![0], vec![1]).is_ok());
        assert!(ParameterSplit::new(vec![0], vec![0]).is_err());
        assert!(ParameterSplit::new(vec![0], vec![2]).is_err());
        assert!(ParameterSplit::new(vec![], vec![0, 1]).is_err());
        let s = ParameterSplit::with_x(vec![2], 4).unwrap();
        assert_eq!(s.y_indices(), &[0, 1, 3]);
        let p = s.assemble(&[9.0], &[1.0, 2.0, 3.0]);
        assert_eq!(p, vec![1.0, 2.0, 9.0, 3.0]);
        assert_eq!(s.x_part(&p), vec![9.0]);
        assert_eq!(s.y_part(&p), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn parameter_vector_invariants() {
        assert!(ParameterVector::new(vec![1.0]).is_err());
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(ParameterVector::new(vec![1.0, 2.0]).unwrap().len(), 2);
    }

    #[test]
    fn catalog_lookups() {
        let sine = lookup("SINE_VALLEY").unwrap();
        let g = sine.known_implicit.unwrap();
        assert_eq!((g.g)(&[0.3]), vec![0.3f64.sin()]);

        let wells = lookup("TWO_WELLS").unwrap();
        for x in [-1.7, -0.2, 0.0, 0.9, 1.4] {
            let y = (wells.known_implicit.as_ref().unwrap().g)(&[x])[0];
            let section = wells.merit.eval(&[x, y]);
            assert!((section - (x * x - 1.0_f64).powi(2)).abs() < 1e-15);
        }

        let degen = lookup("DEGEN_LINE").unwrap();
        assert!(degen.known_minimum.is_none());
        assert_eq!(degen.convexity_class, ConvexityClass::DegenerateValley);

        let exp = lookup("EXP_FIT").unwrap();
        assert_eq!(exp.known_minimum.unwrap().as_slice(), &[-0.5, 2.0]);
        assert!(exp.merit.natural_split().is_some());
    }

    #[test]
    fn catalog_has_required_fixtures() {
        let names = catalog_names();
        for n in [
            "QUAD",
            "SINE_VALLEY",
            "TWO_WELLS",
            "DEGEN_LINE",
            "EXP_FIT",
            "NEG_Y",
        ] {
            assert!(names.contains(&n), "missing {n}");
        }
    }

    #[test]
    fn compact_switches_to_exponent_at_extremes() {
        assert_eq!(Compact(0.0).to_string(), "0");
        assert_eq!(Compact(0.25).to_string(), "0.25");
        assert_eq!(Compact(-2.5e-9).to_string(), "-2.5e-9");
        assert_eq!(Compact(3e20).to_string(), "3e20");
        assert_eq!(
            ParameterVector::new(vec![1.0, 1e-12]).unwrap().to_string(),
            "(1, 1e-12)"
        );
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = uniform_grid(-PI, PI, 101);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], -PI);
        assert_eq!(g[100], PI);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn merit_is_shareable_across_threads() {
        let f = lookup("SINE_VALLEY").unwrap().merit;
        let serial: Vec<f64> = (0..8).map(|k| f.eval(&[k as f64 * 0.1, 0.5])).collect();
        let parallel: Vec<f64> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|k| {
                    let f = &f;
                    s.spawn(move || f.eval(&[k as f64 * 0.1, 0.5]))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(serial, parallel);
    }

    proptest! {
        #[test]
        fn residual_merit_nonnegative(x in -10.0..10.0f64, y in -10.0..10.0f64) {
            for entry in catalog() {
                if matches!(entry.merit.structure(), Structure::Residual(_) | Structure::PartiallyLinear(_)) {
                    let b = entry.merit.domain();
                    let p = [
                        b.lo(0) + (x + 10.0) / 20.0 * b.width(0),
                        b.lo(1) + (y + 10.0) / 20.0 * b.width(1),
                    ];
                    let mut q = p.to_vec();
                    q.resize(entry.merit.dim(), 0.0);
                    prop_assert!(entry.merit.eval(&q) >= 0.0);
                }
            }
        }
    }
}

//! Hierarchical minimization of least-squares merit functions.
//!
//! The parameter space is split into `p = (x, y)`. For each `x` the merit
//! function is minimized over `y` (exactly, when the model is linear in
//! `y`), which traces the implicit function `y = g(x)` defined by
//! `F'_y = 0`. The outer problem then minimizes the minimal section
//! `F[x, g(x)]` by coordinate-grid bracketing and golden-section
//! refinement. Around this core sit Morse-index diagnostics, per-parameter
//! sensitivity sections with their sub-level projection intervals, and
//! anchor-based recovery on quasi-degenerate valleys.

pub mod cli;
pub mod error;
pub mod morse;
pub mod numerics;
pub mod problem;
pub mod section;
pub mod solver;
pub mod subminimize;

pub use error::{Error, Result};

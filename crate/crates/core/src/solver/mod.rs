//! Complex-valued L1-regularised least squares.
//!
//! Minimises `F(γ) = ‖R·γ − g‖²₂ + λ·Σ|γ_l|` over complex `γ`, where the L1
//! norm sums complex moduli. The smooth part carries no ½, so its gradient is
//! `∇f = 2·Rᴴ(R·γ − g)` and every Lipschitz constant carries the same factor 2.
//!
//! [`rbpg_solve`] is the randomized blockwise proximal gradient solver used by
//! the inversion pipeline; [`reference_solve`] is a plain full-gradient
//! proximal gradient method kept as an oracle.

mod blocks;
mod rbpg;

use std::borrow::Cow;

use ndarray::ArrayView2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::linalg::{self, ZERO};
use crate::model::SteeringMatrix;

pub use blocks::{block_probabilities, lipschitz_block, BlockPartition};
pub use rbpg::{rbpg_solve, rbpg_solve_with};

/// One L1-regularised least-squares instance.
#[derive(Debug, Clone)]
pub struct L1LsProblem<'a> {
    matrix: Cow<'a, [Complex64]>,
    rows: usize,
    cols: usize,
    rhs: Cow<'a, [Complex64]>,
    lambda: f64,
}

impl<'a> L1LsProblem<'a> {
    /// Builds a problem from any `N × L` matrix view (copied when it is not
    /// stored column-major).
    pub fn new(matrix: ArrayView2<'a, Complex64>, rhs: &'a [Complex64], lambda: f64) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        let transposed = matrix.reversed_axes();
        let data = match transposed.to_slice() {
            Some(slice) => Cow::Borrowed(slice),
            None => Cow::Owned(transposed.iter().copied().collect()),
        };
        Self::from_parts(data, rows, cols, Cow::Borrowed(rhs), lambda)
    }

    pub fn from_steering(steering: &'a SteeringMatrix, rhs: &'a [Complex64], lambda: f64) -> Result<Self> {
        Self::from_parts(
            Cow::Borrowed(steering.column_major()),
            steering.rows(),
            steering.cols(),
            Cow::Borrowed(rhs),
            lambda,
        )
    }

    /// Builds a problem from a column-major slice.
    pub fn from_column_major(
        matrix: &'a [Complex64],
        rows: usize,
        rhs: &'a [Complex64],
        lambda: f64,
    ) -> Result<Self> {
        if rows == 0 || matrix.len() % rows != 0 {
            return Err(TomoError::DimensionMismatch(format!(
                "{} entries do not form columns of length {rows}",
                matrix.len()
            )));
        }
        Self::from_parts(Cow::Borrowed(matrix), rows, matrix.len() / rows, Cow::Borrowed(rhs), lambda)
    }

    fn from_parts(
        matrix: Cow<'a, [Complex64]>,
        rows: usize,
        cols: usize,
        rhs: Cow<'a, [Complex64]>,
        lambda: f64,
    ) -> Result<Self> {
        if rhs.len() != rows {
            return Err(TomoError::DimensionMismatch(format!(
                "right-hand side has {} entries, matrix has {rows} rows",
                rhs.len()
            )));
        }
        if cols == 0 {
            return Err(TomoError::DimensionMismatch("matrix has no columns".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(TomoError::InvalidParameter(format!(
                "regularisation weight must be ≥ 0, got {lambda}"
            )));
        }
        Ok(Self {
            matrix,
            rows,
            cols,
            rhs,
            lambda,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rhs(&self) -> &[Complex64] {
        &self.rhs
    }

    /// Matrix entries in column-major order.
    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    /// Same matrix and right-hand side with another regularisation weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<L1LsProblem<'_>> {
        L1LsProblem::from_parts(
            Cow::Borrowed(&self.matrix),
            self.rows,
            self.cols,
            Cow::Borrowed(&self.rhs),
            lambda,
        )
    }

    /// `R·γ − g`.
    pub fn residual(&self, gamma: &[Complex64]) -> Vec<Complex64> {
        let mut r: Vec<Complex64> = self.rhs.iter().map(|&g| -g).collect();
        linalg::gemv_add(&self.matrix, self.rows, gamma, &mut r);
        r
    }

    /// `‖Rᴴ·g‖_∞`, the scale of the smallest regularisation weight that
    /// zeroes the solution (up to the factor 2).
    pub fn adjoint_rhs_max(&self) -> f64 {
        let mut out = vec![ZERO; self.cols];
        linalg::gemv_adjoint(&self.matrix, self.rows, &self.rhs, 1.0, &mut out);
        out.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_len(&self, gamma: &[Complex64]) -> Result<()> {
        if gamma.len() != self.cols {
            return Err(TomoError::DimensionMismatch(format!(
                "estimate has {} entries, problem has {}",
                gamma.len(),
                self.cols
            )));
        }
        Ok(())
    }
}

/// Options shared by the iterative solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of contiguous coordinate blocks J; `None` picks `max(1, L/16)`.
    pub block_count: Option<usize>,
    /// Cap on block updates.
    pub max_iterations: usize,
    /// Stop when the objective changes by less than this fraction over one
    /// sweep of J block updates.
    pub tolerance: f64,
    pub seed: u64,
    /// Backtracking shrink factor β in (0, 1).
    pub shrink: f64,
    /// Initial step as a multiple of `1 / L_j`.
    pub initial_step: f64,
    /// Block-wise Nesterov extrapolation with restart on objective increase.
    pub acceleration: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            block_count: None,
            max_iterations: 200_000,
            tolerance: 1e-8,
            seed: 0,
            shrink: 0.5,
            initial_step: 1.0,
            acceleration: true,
        }
    }
}

impl SolverOptions {
    /// Resolves the block count for `cols` unknowns.
    pub fn blocks_for(&self, cols: usize) -> usize {
        self.block_count.unwrap_or_else(|| (cols / 16).max(1))
    }

    pub fn validate(&self, cols: usize) -> Result<()> {
        let j = self.blocks_for(cols);
        if j == 0 || j > cols {
            return Err(TomoError::InvalidParameter(format!(
                "block count {j} must lie in 1..={cols}"
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(TomoError::InvalidParameter("tolerance must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(TomoError::InvalidParameter(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(TomoError::InvalidParameter("initial step must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(TomoError::InvalidParameter("iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub solution: Vec<Complex64>,
    /// Objective at the start and after every sweep (RBPG) or iteration
    /// (reference solver).
    pub objective_trace: Vec<f64>,
    /// Block updates (RBPG) or full iterations (reference solver).
    pub iterations: usize,
    pub converged: bool,
}

impl SolverReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `‖R·γ − g‖²₂ + λ·Σ|γ_l|`.
pub fn objective(problem: &L1LsProblem, gamma: &[Complex64]) -> Result<f64> {
    problem.check_len(gamma)?;
    let r = problem.residual(gamma);
    Ok(linalg::norm_sqr(&r) + problem.lambda * l1_norm(gamma))
}

/// `2·Rᴴ(R·γ − g)`.
pub fn gradient(problem: &L1LsProblem, gamma: &[Complex64]) -> Result<Vec<Complex64>> {
    problem.check_len(gamma)?;
    let r = problem.residual(gamma);
    let mut out = vec![ZERO; problem.cols];
    linalg::gemv_adjoint(&problem.matrix, problem.rows, &r, 2.0, &mut out);
    Ok(out)
}

pub(crate) fn l1_norm(gamma: &[Complex64]) -> f64 {
    gamma.iter().map(|z| z.norm_sqr().sqrt()).sum()
}

/// Proximal operator of `τ·|·|` for a complex scalar: `x·max(1 − τ/|x|, 0)`.
#[inline]
pub fn soft_threshold(x: Complex64, tau: f64) -> Complex64 {
    let mag = x.norm_sqr().sqrt();
    if mag <= tau {
        ZERO
    } else {
        x * (1.0 - tau / mag)
    }
}

/// Optimality residual `max_l dist(−∇f(γ)_l, λ·∂|γ_l|)`.
///
/// For `γ_l ≠ 0` the subdifferential is the single point `λ·γ_l/|γ_l|`; for
/// `γ_l = 0` it is the disc of radius λ.
pub fn certificate_residual(problem: &L1LsProblem, gamma: &[Complex64]) -> Result<f64> {
    let grad = gradient(problem, gamma)?;
    let lambda = problem.lambda;
    Ok(grad
        .iter()
        .zip(gamma)
        .map(|(&d, &x)| {
            let mag = x.norm();
            if mag > 0.0 {
                (-d - x * (lambda / mag)).norm()
            } else {
                (d.norm() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// Plain proximal gradient with the full gradient and step `1/L`,
/// `L = 2·‖R‖²₂`. Deterministic and monotone.
pub fn reference_solve(problem: &L1LsProblem, tolerance: f64) -> Result<SolverReport> {
    reference_solve_with(problem, tolerance, 1_000_000)
}

pub fn reference_solve_with(
    problem: &L1LsProblem,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolverReport> {
    if !(tolerance > 0.0) {
        return Err(TomoError::InvalidParameter("tolerance must be positive".into()));
    }
    let (rows, cols) = (problem.rows, problem.cols);
    let lipschitz = 2.0 * linalg::spectral_norm_sqr(&problem.matrix, rows, 1e-12, 1_000_000)?;
    let mut gamma = vec![ZERO; cols];
    let mut grad = vec![ZERO; cols];
    let mut residual: Vec<Complex64> = problem.rhs.iter().map(|&g| -g).collect();
    let mut current = linalg::norm_sqr(&residual);
    let mut trace = vec![current];
    if lipschitz == 0.0 {
        return Ok(SolverReport {
            solution: gamma,
            objective_trace: trace,
            iterations: 0,
            converged: true,
        });
    }
    let step = 1.0 / lipschitz;
    for iteration in 1..=max_iterations {
        linalg::gemv_adjoint(&problem.matrix, rows, &residual, 2.0, &mut grad);
        for (x, &d) in gamma.iter_mut().zip(&grad) {
            *x = soft_threshold(*x - d * step, problem.lambda * step);
        }
        residual = problem.residual(&gamma);
        let next = linalg::norm_sqr(&residual) + problem.lambda * l1_norm(&gamma);
        if !next.is_finite() {
            return Err(TomoError::Divergence(iteration));
        }
        trace.push(next);
        let change = (current - next).abs();
        current = next;
        if change <= tolerance * next.abs() {
            return Ok(SolverReport {
                solution: gamma,
                objective_trace: trace,
                iterations: iteration,
                converged: true,
            });
        }
    }
    Err(TomoError::IterationCap(max_iterations))
}

//! Randomized blockwise proximal gradient.
//!
//! Each update draws a block `j` with probability `L_j / Σ L`, optionally
//! extrapolates that block from its previous value (Nesterov weights kept per
//! block), takes a proximal gradient step on the block with a backtracking
//! line search started at `initial_step / L_j`, and falls back to a plain
//! step with reset momentum when the extrapolated step raises the objective.
//!
//! The residual `R·γ − g` is kept up to date so a block update costs
//! `O(N·|block|)`.

use num_complex::Complex64;

use super::{l1_norm, soft_threshold, BlockPartition, L1LsProblem, SolverOptions, SolverReport};
use crate::error::{Result, TomoError};
use crate::linalg::{self, SplitMatrix, ZERO};
use crate::random::Stream;

const MAX_BACKTRACKS: usize = 60;
const RESYNC_SWEEPS: usize = 8;

/// Solves the problem with a partition built from `options`.
pub fn rbpg_solve(problem: &L1LsProblem, options: &SolverOptions) -> Result<SolverReport> {
    options.validate(problem.cols())?;
    let partition = BlockPartition::new(
        problem.matrix(),
        problem.rows(),
        options.blocks_for(problem.cols()),
    )?;
    rbpg_solve_with(problem, options, &partition)
}

struct Workspace {
    y: Vec<Complex64>,
    grad: Vec<Complex64>,
    cand: Vec<Complex64>,
    delta: Vec<Complex64>,
    r_hat: Vec<Complex64>,
    r_new: Vec<Complex64>,
}

struct StepOutcome {
    objective: f64,
    l1: f64,
}

/// Solves the problem with a precomputed block partition of its matrix.
///
/// Convergence is tested once per sweep of `J` updates: when the relative
/// objective change over the sweep is within tolerance, one ordered pass over
/// all blocks must also stay within tolerance before the solver stops.
pub fn rbpg_solve_with(
    problem: &L1LsProblem,
    options: &SolverOptions,
    partition: &BlockPartition,
) -> Result<SolverReport> {
    options.validate(problem.cols())?;
    if partition.cols() != problem.cols() {
        return Err(TomoError::DimensionMismatch(format!(
            "partition covers {} columns, problem has {}",
            partition.cols(),
            problem.cols()
        )));
    }
    let rows = problem.rows();
    let cols = problem.cols();
    let blocks = partition.len();
    let widest = partition.ranges().iter().map(|r| r.len()).max().unwrap_or(0);

    let mut gamma = vec![ZERO; cols];
    let mut previous = vec![ZERO; cols];
    let mut momentum = vec![1.0f64; blocks];
    let mut residual: Vec<Complex64> = problem.rhs().iter().map(|&g| -g).collect();
    let mut l1 = 0.0;
    let mut current = linalg::norm_sqr(&residual);
    let mut trace = vec![current];
    let mut ws = Workspace {
        y: vec![ZERO; widest],
        grad: vec![ZERO; widest],
        cand: vec![ZERO; widest],
        delta: vec![ZERO; widest],
        r_hat: vec![ZERO; rows],
        r_new: vec![ZERO; rows],
    };
    let split = SplitMatrix::from_column_major(problem.matrix(), rows);
    let mut stream = Stream::new(options.seed, 0);
    let mut sweep_start = current;
    let mut sweeps = 0usize;
    let mut iteration = 0usize;
    let mut since_sweep = 0usize;
    let mut moves = vec![ZERO; blocks * rows];
    let mut state = State {
        moves: &mut moves,
        rows,
        gamma: &mut gamma,
        previous: &mut previous,
        residual: &mut residual,
        l1: &mut l1,
        current: &mut current,
    };

    while iteration < options.max_iterations {
        iteration += 1;
        since_sweep += 1;
        let j = if blocks == 1 {
            0
        } else {
            stream.categorical(partition.cumulative())
        };
        let range = partition.ranges()[j].clone();
        let step0 = options.initial_step / partition.lipschitz()[j];

        let (omega, t_next) = if options.acceleration {
            let t = momentum[j];
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            ((t - 1.0) / t_next, t_next)
        } else {
            (0.0, 1.0)
        };

        let mut outcome = block_step(problem, &split, j, &range, &state, omega, step0, options.shrink, &mut ws);
        if omega > 0.0 && outcome.objective > *state.current {
            momentum[j] = 1.0;
            outcome = block_step(problem, &split, j, &range, &state, 0.0, step0, options.shrink, &mut ws);
        } else if options.acceleration {
            momentum[j] = t_next;
        }
        state.accept(j, &range, &outcome, &mut ws, iteration)?;

        if since_sweep < blocks {
            continue;
        }
        since_sweep = 0;
        sweeps += 1;
        state.refresh(problem, sweeps % RESYNC_SWEEPS == 0, iteration)?;
        trace.push(*state.current);
        if (sweep_start - *state.current).abs() > options.tolerance * state.current.abs() {
            sweep_start = *state.current;
            continue;
        }
        // Random draws may have skipped the blocks that still move; confirm
        // with one ordered pass over every block before stopping.
        for (j, range) in partition.ranges().iter().enumerate() {
            let step0 = options.initial_step / partition.lipschitz()[j];
            let outcome = block_step(problem, &split, j, range, &state, 0.0, step0, options.shrink, &mut ws);
            iteration += 1;
            state.accept(j, range, &outcome, &mut ws, iteration)?;
            momentum[j] = 1.0;
        }
        state.refresh(problem, false, iteration)?;
        trace.push(*state.current);
        if (sweep_start - *state.current).abs() <= options.tolerance * state.current.abs() {
            return Ok(SolverReport {
                solution: gamma,
                objective_trace: trace,
                iterations: iteration,
                converged: true,
            });
        }
        sweep_start = *state.current;
    }
    if since_sweep != 0 {
        trace.push(current);
    }
    Ok(SolverReport {
        solution: gamma,
        objective_trace: trace,
        iterations: iteration,
        converged: false,
    })
}

struct State<'a> {
    /// `R_j·(γ_j − γ_j,prev)` per block, so extrapolated residuals need no
    /// matrix product.
    moves: &'a mut Vec<Complex64>,
    rows: usize,
    gamma: &'a mut Vec<Complex64>,
    previous: &'a mut Vec<Complex64>,
    residual: &'a mut Vec<Complex64>,
    l1: &'a mut f64,
    current: &'a mut f64,
}

impl State<'_> {
    fn accept(
        &mut self,
        j: usize,
        range: &std::ops::Range<usize>,
        outcome: &StepOutcome,
        ws: &mut Workspace,
        iteration: usize,
    ) -> Result<()> {
        if !outcome.objective.is_finite() {
            return Err(TomoError::Divergence(iteration));
        }
        let m = range.len();
        let mv = &mut self.moves[j * self.rows..(j + 1) * self.rows];
        for ((d, &new), &old) in mv.iter_mut().zip(&ws.r_new).zip(self.residual.iter()) {
            *d = new - old;
        }
        self.previous[range.clone()].copy_from_slice(&self.gamma[range.clone()]);
        self.gamma[range.clone()].copy_from_slice(&ws.cand[..m]);
        std::mem::swap(self.residual, &mut ws.r_new);
        *self.l1 = outcome.l1;
        *self.current = outcome.objective;
        Ok(())
    }

    /// Recomputes the L1 norm (and optionally the residual) exactly.
    fn refresh(&mut self, problem: &L1LsProblem, resync: bool, iteration: usize) -> Result<()> {
        if resync {
            *self.residual = problem.residual(self.gamma);
        }
        *self.l1 = l1_norm(self.gamma);
        *self.current = linalg::norm_sqr(self.residual) + problem.lambda() * *self.l1;
        if !self.current.is_finite() {
            return Err(TomoError::Divergence(iteration));
        }
        Ok(())
    }
}

/// One proximal step on `range`, extrapolated by `omega`. Leaves the new block
/// values in `ws.cand` and the matching residual in `ws.r_new`.
#[allow(clippy::too_many_arguments)]
fn block_step(
    problem: &L1LsProblem,
    split: &SplitMatrix,
    j: usize,
    range: &std::ops::Range<usize>,
    state: &State,
    omega: f64,
    step0: f64,
    shrink: f64,
    ws: &mut Workspace,
) -> StepOutcome {
    let rows = problem.rows();
    let lambda = problem.lambda();
    let m = range.len();
    let x = &state.gamma[range.clone()];
    let x_prev = &state.previous[range.clone()];
    let residual: &[Complex64] = state.residual;
    let l1 = *state.l1;

    let y = &mut ws.y[..m];
    if omega != 0.0 {
        for ((yi, &xi), &pi) in y.iter_mut().zip(x).zip(x_prev) {
            *yi = xi + (xi - pi) * omega;
        }
        let mv = &state.moves[j * rows..(j + 1) * rows];
        for ((h, &r), &d) in ws.r_hat.iter_mut().zip(residual).zip(mv) {
            *h = r + d * omega;
        }
    } else {
        ws.r_hat.copy_from_slice(residual);
        y.copy_from_slice(x);
    }
    let f_hat = linalg::norm_sqr(&ws.r_hat);
    let grad = &mut ws.grad[..m];
    split.adjoint(range.start, &ws.r_hat, 2.0, grad);

    let mut alpha = step0;
    let mut f_new = f64::INFINITY;
    for _ in 0..MAX_BACKTRACKS {
        let mut linear = 0.0;
        let mut dist = 0.0;
        for (((ci, di), &yi), &gi) in ws.cand[..m]
            .iter_mut()
            .zip(ws.delta[..m].iter_mut())
            .zip(y.iter())
            .zip(grad.iter())
        {
            *ci = soft_threshold(yi - gi * alpha, lambda * alpha);
            *di = *ci - yi;
            linear += gi.re * di.re + gi.im * di.im;
            dist += di.norm_sqr();
        }
        ws.r_new.copy_from_slice(&ws.r_hat);
        split.forward_add(range.start, &ws.delta[..m], &mut ws.r_new);
        f_new = linalg::norm_sqr(&ws.r_new);
        let bound = f_hat + linear + dist / (2.0 * alpha);
        if f_new <= bound + 1e-12 * f_hat.abs() {
            break;
        }
        alpha *= shrink;
    }
    let l1_new = l1 - l1_norm(x) + l1_norm(&ws.cand[..m]);
    StepOutcome {
        objective: f_new + lambda * l1_new,
        l1: l1_new,
    }
}

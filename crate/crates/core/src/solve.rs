//! Sparse linear algebra and the time march.
//!
//! Each implicit step assembles one equation per grid node, in grid index
//! order, and solves the resulting nonsymmetric system with BiCGStab
//! under Jacobi preconditioning. Convergence is always confirmed on the
//! true residual `b - A x`, never only on the recursively updated one,
//! and the previous time level warm-starts the iteration.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::abc::{
    apabc_row, mapabc1_row, mapabc2_row, original_row, q1_estimate, q2_profile, BoundaryHistory,
    BoundaryKind, SourceProfile,
};
use crate::error::{Error, Result};
use crate::fit::fit_gauss_linear;
use crate::grid::{initial_condition, Grid, SolutionField};
use crate::math::GaussLegendre;
use crate::model::HestonParams;
use crate::scheme::{interior_row, s0_row, theta_for_step, v0_row, vmax_row, StencilRow};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from per-row stencils; row `r` of the matrix is
    /// `rows[r]`. Column indices must be in range; duplicates within a
    /// row are not merged and must not occur.
    pub fn from_rows(rows: &[StencilRow]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz: usize = rows.iter().map(|r| r.cols.len()).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for &(col, value) in &row.cols {
                debug_assert!(col < n, "column {col} out of range {n}");
                col_idx.push(col);
                values.push(value);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// Main diagonal, zero where a row has no diagonal entry.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    diag[r] = self.values[k];
                }
            }
        }
        diag
    }
}

/// Iteration count and final relative true residual of a linear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BiCGStab with Jacobi preconditioning. `x` carries the initial guess in
/// and the solution out. Converges when the true residual satisfies
/// `|b - A x| <= tol_rel |b|`; breakdowns restart from the current
/// iterate, and every restart counts against the iteration budget.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iterations: usize,
) -> Result<SolveStats> {
    let n = a.n();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let norm_b = norm2(b);
    if norm_b == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let threshold = tol_rel * norm_b;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    a.matvec(x, &mut scratch);
    for k in 0..n {
        r[k] = b[k] - scratch[k];
    }
    let mut residual = norm2(&r);
    if residual <= threshold {
        return Ok(SolveStats {
            iterations: 0,
            residual: residual / norm_b,
        });
    }

    let mut r_hat = r.clone();
    let mut rho_prev = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut fresh_start = true;
    let tiny = f64::MIN_POSITIVE.sqrt();

    for iteration in 1..=max_iterations {
        let rho = dot(&r_hat, &r);
        if rho.abs() < tiny * norm_b * norm_b {
            // Shadow residual became orthogonal: restart from here.
            a.matvec(x, &mut scratch);
            for k in 0..n {
                r[k] = b[k] - scratch[k];
            }
            r_hat.copy_from_slice(&r);
            p.fill(0.0);
            v.fill(0.0);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            fresh_start = true;
            continue;
        }
        if fresh_start {
            p.copy_from_slice(&r);
            fresh_start = false;
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
        }
        for k in 0..n {
            p_hat[k] = inv_diag[k] * p[k];
        }
        a.matvec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < tiny * norm_b {
            r_hat.copy_from_slice(&r);
            fresh_start = true;
            rho_prev = 1.0;
            continue;
        }
        alpha = rho / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm2(&s) <= threshold {
            for k in 0..n {
                x[k] += alpha * p_hat[k];
            }
            a.matvec(x, &mut scratch);
            for k in 0..n {
                r[k] = b[k] - scratch[k];
            }
            residual = norm2(&r);
            if residual <= threshold {
                return Ok(SolveStats {
                    iterations: iteration,
                    residual: residual / norm_b,
                });
            }
            r_hat.copy_from_slice(&r);
            fresh_start = true;
            rho_prev = 1.0;
            continue;
        }
        for k in 0..n {
            s_hat[k] = inv_diag[k] * s[k];
        }
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            r_hat.copy_from_slice(&s);
            r.copy_from_slice(&s);
            fresh_start = true;
            rho_prev = 1.0;
            continue;
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
        }
        for k in 0..n {
            r[k] = s[k] - omega * t[k];
        }
        residual = norm2(&r);
        if residual <= threshold {
            // Confirm on the true residual before accepting.
            a.matvec(x, &mut scratch);
            for k in 0..n {
                r[k] = b[k] - scratch[k];
            }
            residual = norm2(&r);
            if residual <= threshold {
                return Ok(SolveStats {
                    iterations: iteration,
                    residual: residual / norm_b,
                });
            }
            r_hat.copy_from_slice(&r);
            fresh_start = true;
            rho_prev = 1.0;
            continue;
        }
        rho_prev = rho;
    }
    Err(Error::SolverFailure {
        step: 0,
        iterations: max_iterations,
        residual: residual / norm_b,
    })
}

/// Summary of one completed march.
#[derive(Debug, Clone)]
pub struct MarchReport {
    /// Time steps taken.
    pub steps: usize,
    /// BiCGStab iterations summed over all steps.
    pub total_iterations: usize,
    /// Worst relative true residual accepted across steps.
    pub max_residual: f64,
    /// Wall-clock time of the march.
    pub wall: Duration,
}

/// Final solution level and march statistics.
#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub field: SolutionField,
    pub report: MarchReport,
}

/// Relative residual demanded of every linear solve.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Marches the transformed problem from the payoff at `tau = 0` to
/// `tau = maturity` with the grid's step count and the requested far
/// boundary condition, returning the final level.
pub fn march(
    grid: &Grid,
    params: &HestonParams,
    maturity: f64,
    boundary: BoundaryKind,
) -> Result<MarchOutcome> {
    march_with_tolerance(grid, params, maturity, boundary, SOLVER_TOLERANCE)
}

/// [`march`] with an explicit relative residual target for the linear
/// solves, for callers that want to trade accuracy for speed.
pub fn march_with_tolerance(
    grid: &Grid,
    params: &HestonParams,
    maturity: f64,
    boundary: BoundaryKind,
    solver_tol: f64,
) -> Result<MarchOutcome> {
    march_engine(grid, params, maturity, boundary, solver_tol).map(|(outcome, _)| outcome)
}

/// [`march`] that also returns the recorded boundary history, for
/// diagnostics that re-assemble boundary rows after the fact.
pub fn march_with_history(
    grid: &Grid,
    params: &HestonParams,
    maturity: f64,
    boundary: BoundaryKind,
) -> Result<(MarchOutcome, BoundaryHistory)> {
    march_engine(grid, params, maturity, boundary, SOLVER_TOLERANCE)
}

fn march_engine(
    grid: &Grid,
    params: &HestonParams,
    maturity: f64,
    boundary: BoundaryKind,
    solver_tol: f64,
) -> Result<(MarchOutcome, BoundaryHistory)> {
    let params = params.validated()?;
    if !(maturity.is_finite() && maturity > 0.0) {
        return Err(Error::InvalidParameter {
            field: "maturity",
            constraint: format!("must be positive and finite, got {maturity}"),
        });
    }
    if !(solver_tol.is_finite() && solver_tol > 0.0 && solver_tol < 1.0) {
        return Err(Error::InvalidParameter {
            field: "solver_tol",
            constraint: format!("must lie in (0, 1), got {solver_tol}"),
        });
    }
    let started = Instant::now();
    let n_s = grid.spec.n_s;
    let n_v = grid.spec.n_v;
    let n_t = grid.spec.n_t;
    let dt = maturity / n_t as f64;
    let unknowns = grid.len();
    let max_iterations = 10 * unknowns;

    let mut field = initial_condition(grid);
    let mut history = BoundaryHistory::new(grid);
    let gl = GaussLegendre::new(32);
    // Fit abscissae for the residual profiles: x = ln s over the interior
    // columns, shared by every row and step.
    let log_s: Vec<f64> = (1..n_s).map(|i| grid.s[i].ln()).collect();

    let mut x: Vec<f64> = field.as_slice().to_vec();
    let mut rows: Vec<StencilRow> = Vec::with_capacity(unknowns);
    let mut total_iterations = 0;
    let mut max_residual: f64 = 0.0;

    for n in 1..=n_t {
        let theta = theta_for_step(n);
        rows.clear();
        // Far-boundary rows for j = 1..n_v-1, assembled in parallel:
        // the corrected conditions carry the memory quadratures.
        let boundary_rows: Vec<StencilRow> = (1..n_v)
            .into_par_iter()
            .map(|j| match boundary {
                BoundaryKind::Original => original_row(grid, j),
                BoundaryKind::ApAbc => apabc_row(grid, dt, n, j, &history),
                BoundaryKind::MApAbc1 => mapabc1_row(grid, &params, dt, n, j, &history),
                BoundaryKind::MApAbc2 => {
                    mapabc2_row(grid, &params, dt, n, j, &history, maturity, &gl)
                }
            })
            .collect();
        for j in 0..=n_v {
            for i in 0..=n_s {
                let row = if i == 0 {
                    s0_row(grid, j)
                } else if j == 0 {
                    v0_row(grid, &params, dt, theta, &field, i)
                } else if j == n_v {
                    vmax_row(grid, i)
                } else if i == n_s {
                    boundary_rows[j - 1].clone()
                } else {
                    interior_row(grid, &params, dt, theta, &field, i, j)
                };
                debug_assert_eq!(rows.len(), grid.idx(i, j));
                rows.push(row);
            }
        }
        let matrix = CsrMatrix::from_rows(&rows);
        let b: Vec<f64> = rows.iter().map(|r| r.rhs).collect();
        let stats =
            bicgstab(&matrix, &b, &mut x, solver_tol, max_iterations).map_err(|e| match e {
                Error::SolverFailure {
                    iterations,
                    residual,
                    ..
                } => Error::SolverFailure {
                    step: n,
                    iterations,
                    residual,
                },
                other => other,
            })?;
        total_iterations += stats.iterations;
        max_residual = max_residual.max(stats.residual);

        field = SolutionField::from_vec(grid, x.clone())?;
        match boundary {
            BoundaryKind::Original => {}
            BoundaryKind::ApAbc => history.push_field(&field, grid),
            BoundaryKind::MApAbc1 => {
                history.push_field(&field, grid);
                history.push_q1(q1_estimate(&field, grid, &params));
            }
            BoundaryKind::MApAbc2 => {
                history.push_field(&field, grid);
                let profiles: Vec<SourceProfile> = (0..=n_v)
                    .into_par_iter()
                    .map(|j| {
                        if j == 0 || j == n_v {
                            return SourceProfile::Zero;
                        }
                        let values = q2_profile(&field, grid, &params, j);
                        let outcome = fit_gauss_linear(&log_s, &values);
                        if outcome.exact_zero {
                            SourceProfile::Zero
                        } else {
                            SourceProfile::Fitted(outcome.fit)
                        }
                    })
                    .collect();
                history.push_profiles(profiles);
            }
        }
    }

    let outcome = MarchOutcome {
        field,
        report: MarchReport {
            steps: n_t,
            total_iterations,
            max_residual,
            wall: started.elapsed(),
        },
    };
    Ok((outcome, history))
}

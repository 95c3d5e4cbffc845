//! Finite-difference rows of the time-stepping scheme.
//!
//! The transformed PDE
//!
//! ```text
//! V_tau = (v/2) s^2 V_ss + rho sigma v s V_sv + (sigma^2 v / 2) V_vv
//!         + kappa (eta - v) V_v
//! ```
//!
//! is discretized on the uniform grid with central second differences in
//! s, a damped central second difference in v, the four-point cross
//! stencil, and first-order upwinding of the v-drift. The v-diffusion
//! carries the Samarskii damping factor `1 / (1 + R_j)` with
//! `R_j = kappa |eta - v_j| dv / (sigma^2 v_j)`, which keeps the scheme
//! monotone where the drift dominates the vanishing diffusion.
//!
//! Time stepping is the theta scheme
//!
//! ```text
//! (V^{n+1} - V^n) / dt = theta L V^{n+1} + (1 - theta) L V^n,
//! ```
//!
//! with a backward-Euler first step (theta = 1) to damp the payoff kink
//! and Crank-Nicolson (theta = 1/2) afterwards.
//!
//! Boundary rows owned by this module: homogeneous Dirichlet at s = 0,
//! the degenerate transport equation `kappa eta V_v = V_tau` on v = 0
//! (the PDE's own limit there), and constant extrapolation `V_{i,J} =
//! V_{i,J-1}` on v = v_max. The far s boundary is owned by the boundary-
//! condition module.

use crate::grid::{Grid, SolutionField};
use crate::model::HestonParams;

/// One assembled equation: matrix entries for the unknown level and the
/// scalar right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub cols: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Theta weight for time step `n >= 1`: backward Euler on the first
/// step, Crank-Nicolson afterwards.
pub fn theta_for_step(n: usize) -> f64 {
    debug_assert!(n >= 1);
    if n == 1 {
        1.0
    } else {
        0.5
    }
}

/// Samarskii damping factor `1 / (1 + R_j)` for the v-diffusion.
/// Guards: zero drift (`v_j = eta`) gives factor 1 even when the
/// diffusion vanishes; vanishing diffusion with nonzero drift gives 0.
pub fn samarskii_damping(v_j: f64, dv: f64, params: &HestonParams) -> f64 {
    let drift = params.kappa * (params.eta - v_j).abs();
    if drift == 0.0 {
        return 1.0;
    }
    let diffusion = params.sigma * params.sigma * v_j;
    if diffusion == 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + drift * dv / diffusion)
}

/// Spatial-operator stencil at an interior node: nine (di, dj, coefficient)
/// entries of L.
fn operator_stencil(
    grid: &Grid,
    params: &HestonParams,
    i: usize,
    j: usize,
) -> [(isize, isize, f64); 9] {
    let s = grid.s[i];
    let v = grid.v[j];
    let ds = grid.ds;
    let dv = grid.dv;
    let alpha_s = 0.5 * v * s * s / (ds * ds);
    let damping = samarskii_damping(v, dv, params);
    let alpha_v = 0.5 * params.sigma * params.sigma * v * damping / (dv * dv);
    let cross = params.rho * params.sigma * v * s / (4.0 * ds * dv);
    let drift = params.kappa * (params.eta - v);
    let drift_up = drift.max(0.0) / dv;
    let drift_down = drift.min(0.0) / dv;
    [
        (0, 0, -2.0 * alpha_s - 2.0 * alpha_v - drift_up + drift_down),
        (-1, 0, alpha_s),
        (1, 0, alpha_s),
        (0, 1, alpha_v + drift_up),
        (0, -1, alpha_v - drift_down),
        (1, 1, cross),
        (-1, 1, -cross),
        (-1, -1, cross),
        (1, -1, -cross),
    ]
}

/// Theta-weighted row of the scheme at interior node (i, j):
/// `(1/dt) V^{n+1} - theta L V^{n+1} = (1/dt) V^n + (1-theta) L V^n`.
pub fn interior_row(
    grid: &Grid,
    params: &HestonParams,
    dt: f64,
    theta: f64,
    prev: &SolutionField,
    i: usize,
    j: usize,
) -> StencilRow {
    debug_assert!(i >= 1 && i < grid.spec.n_s && j >= 1 && j < grid.spec.n_v);
    let stencil = operator_stencil(grid, params, i, j);
    let mut cols = Vec::with_capacity(9);
    let mut explicit = 0.0;
    for (di, dj, coef) in stencil {
        let ii = (i as isize + di) as usize;
        let jj = (j as isize + dj) as usize;
        let mut implicit = -theta * coef;
        if di == 0 && dj == 0 {
            implicit += 1.0 / dt;
        }
        cols.push((grid.idx(ii, jj), implicit));
        explicit += coef * prev.at(ii, jj);
    }
    StencilRow {
        cols,
        rhs: prev.at(i, j) / dt + (1.0 - theta) * explicit,
    }
}

/// Row of the degenerate v = 0 equation `kappa eta V_v = V_tau` at node
/// (i, 0), theta-weighted with a one-sided difference in v.
pub fn v0_row(
    grid: &Grid,
    params: &HestonParams,
    dt: f64,
    theta: f64,
    prev: &SolutionField,
    i: usize,
) -> StencilRow {
    debug_assert!(i >= 1 && i <= grid.spec.n_s);
    let transport = params.kappa * params.eta / grid.dv;
    let explicit = transport * (prev.at(i, 1) - prev.at(i, 0));
    StencilRow {
        cols: vec![
            (grid.idx(i, 0), 1.0 / dt + theta * transport),
            (grid.idx(i, 1), -theta * transport),
        ],
        rhs: prev.at(i, 0) / dt + (1.0 - theta) * explicit,
    }
}

/// Constant-extrapolation row `V_{i,J} - V_{i,J-1} = 0` on v = v_max.
pub fn vmax_row(grid: &Grid, i: usize) -> StencilRow {
    let j = grid.spec.n_v;
    StencilRow {
        cols: vec![(grid.idx(i, j), 1.0), (grid.idx(i, j - 1), -1.0)],
        rhs: 0.0,
    }
}

/// Dirichlet row `V_{0,j} = 0` on s = 0.
pub fn s0_row(grid: &Grid, j: usize) -> StencilRow {
    StencilRow {
        cols: vec![(grid.idx(0, j), 1.0)],
        rhs: 0.0,
    }
}

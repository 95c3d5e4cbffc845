//! Uniform tensor grid on the truncated domain `[0, s_max] x [0, v_max]`
//! and flat storage for fields living on it.

use crate::error::{Error, Result};

/// Grid and time-step counts for one run. `n_s`, `n_v`, `n_t` count
/// intervals, so the grid carries `(n_s + 1) x (n_v + 1)` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub s_max: f64,
    pub v_max: f64,
    pub n_s: usize,
    pub n_v: usize,
    pub n_t: usize,
}

impl GridSpec {
    /// Equal spacing `h` in both coordinates and in time, the convention
    /// of the error studies: `n_t` covers `maturity` with steps of size h.
    pub fn with_uniform_h(s_max: f64, v_max: f64, maturity: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid {
                reason: format!("step h must be positive and finite, got {h}"),
            });
        }
        let count = |extent: f64, name: &str| -> Result<usize> {
            let n = extent / h;
            let rounded = n.round();
            if (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 1.0 {
                return Err(Error::InvalidGrid {
                    reason: format!("{name} = {extent} is not a positive multiple of h = {h}"),
                });
            }
            Ok(rounded as usize)
        };
        Ok(Self {
            s_max,
            v_max,
            n_s: count(s_max, "s_max")?,
            n_v: count(v_max, "v_max")?,
            n_t: count(maturity, "maturity")?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::InvalidGrid {
                reason: format!("s_max must be positive, got {}", self.s_max),
            });
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::InvalidGrid {
                reason: format!("v_max must be positive, got {}", self.v_max),
            });
        }
        if self.n_s < 2 || self.n_v < 2 || self.n_t < 1 {
            return Err(Error::InvalidGrid {
                reason: format!(
                    "need n_s >= 2, n_v >= 2, n_t >= 1, got ({}, {}, {})",
                    self.n_s, self.n_v, self.n_t
                ),
            });
        }
        Ok(())
    }
}

/// Node coordinates of a built grid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GridSpec,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub ds: f64,
    pub dv: f64,
}

impl Grid {
    pub fn build(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let ds = spec.s_max / spec.n_s as f64;
        let dv = spec.v_max / spec.n_v as f64;
        let s = (0..=spec.n_s).map(|i| i as f64 * ds).collect();
        let v = (0..=spec.n_v).map(|j| j as f64 * dv).collect();
        Ok(Self { spec, s, v, ds, dv })
    }

    /// Number of unknowns of a field on this grid.
    pub fn len(&self) -> usize {
        (self.spec.n_s + 1) * (self.spec.n_v + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of node (i, j); j-major so that i varies fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.spec.n_s && j <= self.spec.n_v);
        j * (self.spec.n_s + 1) + i
    }

    /// Index of the s-column closest to `s_value`, which must lie on the
    /// grid up to rounding.
    pub fn s_column(&self, s_value: f64) -> Result<usize> {
        locate(s_value, self.ds, self.spec.n_s, "s").map_err(|_| Error::OutOfDomain {
            name: "s",
            value: s_value,
            max: self.spec.s_max,
        })
    }

    pub fn v_row(&self, v_value: f64) -> Result<usize> {
        locate(v_value, self.dv, self.spec.n_v, "v").map_err(|_| Error::OutOfDomain {
            name: "v",
            value: v_value,
            max: self.spec.v_max,
        })
    }
}

fn locate(value: f64, step: f64, count: usize, _name: &str) -> std::result::Result<usize, ()> {
    let pos = value / step;
    let rounded = pos.round();
    if (pos - rounded).abs() > 1e-9 * pos.abs().max(1.0) || rounded < 0.0 {
        return Err(());
    }
    let k = rounded as usize;
    if k > count {
        return Err(());
    }
    Ok(k)
}

/// A scalar field on the grid nodes, stored j-major (i fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    n_s: usize,
    n_v: usize,
    data: Vec<f64>,
}

impl SolutionField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            n_s: grid.spec.n_s,
            n_v: grid.spec.n_v,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for j in 0..=grid.spec.n_v {
            for i in 0..=grid.spec.n_s {
                let value = f(grid.s[i], grid.v[j]);
                field.set(i, j, value);
            }
        }
        field
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            n_s: grid.spec.n_s,
            n_v: grid.spec.n_v,
            data,
        })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= self.n_s && j <= self.n_v);
        self.data[j * (self.n_s + 1) + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i <= self.n_s && j <= self.n_v);
        self.data[j * (self.n_s + 1) + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }
}

/// Cell-averaged payoff `(s - 1)^+` on the grid: each node carries the
/// mean of the payoff over its cell (half cells at the domain edges,
/// clamped to `[0, s_max]`). Averaging instead of sampling keeps the
/// discrete initial data second-order consistent at the kink, where the
/// node value becomes `ds / 8`.
pub fn initial_condition(grid: &Grid) -> SolutionField {
    let half = 0.5 * grid.ds;
    // Antiderivative of (s - 1)^+.
    let prim = |x: f64| {
        let y = (x - 1.0).max(0.0);
        0.5 * y * y
    };
    let mut field = SolutionField::zeros(grid);
    for i in 0..=grid.spec.n_s {
        let a = (grid.s[i] - half).max(0.0);
        let b = (grid.s[i] + half).min(grid.spec.s_max);
        let average = (prim(b) - prim(a)) / (b - a);
        for j in 0..=grid.spec.n_v {
            field.set(i, j, average);
        }
    }
    field
}

//! Experiment presets, error norms, convergence tables, and Greeks.
//!
//! Three bundled parameter sets exercise qualitatively different regimes:
//! fast mean reversion (`set1`), near-frozen variance with high long-run
//! level (`set2`), and zero correlation on a wide asset domain (`set3`).
//! Every study measures the numerical solution against the second-order
//! vol-of-vol expansion on the full grid at the final time, in the
//! relative discrete L2 norm. Bundled reference values for these studies
//! live in `data/reference_errors.csv` and back the CLI's `--check` mode.

use rayon::prelude::*;

use crate::abc::BoundaryKind;
use crate::asymptotics::{asymptotic_price, ExpansionOrder};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, SolutionField};
use crate::model::{ContractSpec, HestonParams};
use crate::solve::march;

/// Identifier of a bundled experiment preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetId {
    Set1,
    Set2,
    Set3,
}

impl PresetId {
    pub const ALL: [PresetId; 3] = [PresetId::Set1, PresetId::Set2, PresetId::Set3];

    pub fn name(&self) -> &'static str {
        match self {
            PresetId::Set1 => "set1",
            PresetId::Set2 => "set2",
            PresetId::Set3 => "set3",
        }
    }

    pub fn parse(text: &str) -> Option<PresetId> {
        Self::ALL.iter().copied().find(|p| p.name() == text)
    }
}

impl std::fmt::Display for PresetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A parameter set together with its default truncated domain.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentPreset {
    pub id: PresetId,
    pub params: HestonParams,
    pub contract: ContractSpec,
    pub s_max: f64,
    pub v_max: f64,
}

impl ExperimentPreset {
    pub fn get(id: PresetId) -> Self {
        let contract = ContractSpec {
            strike: 1.0,
            maturity: 2.0,
        };
        match id {
            PresetId::Set1 => Self {
                id,
                params: HestonParams {
                    kappa: 4.0,
                    eta: 0.1,
                    sigma: 0.1,
                    rho: -0.5,
                    r: 0.0,
                },
                contract,
                s_max: 4.0,
                v_max: 4.0,
            },
            PresetId::Set2 => Self {
                id,
                params: HestonParams {
                    kappa: 0.005,
                    eta: 0.5,
                    sigma: 0.01,
                    rho: 0.5,
                    r: 0.0,
                },
                contract,
                s_max: 4.0,
                v_max: 4.0,
            },
            PresetId::Set3 => Self {
                id,
                params: HestonParams {
                    kappa: 2.0,
                    eta: 0.3,
                    sigma: 0.05,
                    rho: 0.0,
                    r: 0.0,
                },
                contract,
                s_max: 8.0,
                v_max: 4.0,
            },
        }
    }

    /// Grid specification for mesh width `h` on the preset's domain.
    pub fn grid_spec(&self, h: f64) -> Result<GridSpec> {
        GridSpec::with_uniform_h(self.s_max, self.v_max, self.contract.maturity, h)
    }

    /// Same preset on a different truncated domain.
    pub fn with_domain(&self, s_max: f64, v_max: f64) -> Self {
        Self {
            s_max,
            v_max,
            ..*self
        }
    }
}

/// Second-order expansion sampled at every grid node for time `tau`.
pub fn asymptotic_reference(grid: &Grid, params: &HestonParams, tau: f64) -> SolutionField {
    SolutionField::from_fn(grid, |s, v| {
        asymptotic_price(s, v, tau, params, ExpansionOrder::Second)
    })
}

/// Relative discrete L2 distance over all nodes,
/// `|numeric - reference|_2 / |reference|_2`.
pub fn relative_error(numeric: &SolutionField, reference: &SolutionField) -> f64 {
    let num = numeric.as_slice();
    let reference = reference.as_slice();
    assert_eq!(num.len(), reference.len(), "field shapes differ");
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in num.iter().zip(reference) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    (diff / norm).sqrt()
}

/// Relative discrete L2 distance restricted to nodes with
/// `s <= s_limit` and `v <= v_limit`.
pub fn relative_error_within(
    numeric: &SolutionField,
    reference: &SolutionField,
    grid: &Grid,
    s_limit: f64,
    v_limit: f64,
) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    let eps = 1e-9;
    for j in 0..=grid.spec.n_v {
        if grid.v[j] > v_limit + eps {
            break;
        }
        for i in 0..=grid.spec.n_s {
            if grid.s[i] > s_limit + eps {
                break;
            }
            let d = numeric.at(i, j) - reference.at(i, j);
            diff += d * d;
            norm += reference.at(i, j) * reference.at(i, j);
        }
    }
    (diff / norm).sqrt()
}

/// One entry of a mesh-refinement table.
#[derive(Debug, Clone, Copy)]
pub struct TableRow {
    pub kind: BoundaryKind,
    pub h: f64,
    pub error: f64,
}

/// Runs the mesh-refinement study: one march per (condition, h) pair,
/// in parallel, each scored against the expansion at the final time.
pub fn run_table(
    preset: &ExperimentPreset,
    kinds: &[BoundaryKind],
    hs: &[f64],
) -> Result<Vec<TableRow>> {
    let cases: Vec<(BoundaryKind, f64)> = kinds
        .iter()
        .flat_map(|&k| hs.iter().map(move |&h| (k, h)))
        .collect();
    cases
        .into_par_iter()
        .map(|(kind, h)| {
            let error = single_error(preset, kind, h)?;
            Ok(TableRow { kind, h, error })
        })
        .collect()
}

/// One entry of the domain-truncation study.
#[derive(Debug, Clone, Copy)]
pub struct DomainRow {
    pub kind: BoundaryKind,
    pub s_max: f64,
    pub v_max: f64,
    pub error: f64,
}

/// Runs the domain study at fixed `h = 0.1`: the base domain, a ten-fold
/// wider asset domain, and a ten-fold taller variance domain. Every run
/// is scored on the base region, so widening the domain changes the
/// solve but not the yardstick.
pub fn run_domain_study(
    preset: &ExperimentPreset,
    kinds: &[BoundaryKind],
) -> Result<Vec<DomainRow>> {
    let base = (preset.s_max, preset.v_max);
    let domains = [base, (10.0 * base.0, base.1), (base.0, 10.0 * base.1)];
    let cases: Vec<(BoundaryKind, (f64, f64))> = kinds
        .iter()
        .flat_map(|&k| domains.iter().map(move |&d| (k, d)))
        .collect();
    cases
        .into_par_iter()
        .map(|(kind, (s_max, v_max))| {
            let widened = preset.with_domain(s_max, v_max);
            let grid = Grid::build(widened.grid_spec(0.1)?)?;
            let tau = widened.contract.maturity;
            let outcome = march(&grid, &widened.params, tau, kind)?;
            let reference = asymptotic_reference(&grid, &widened.params, tau);
            let error = relative_error_within(&outcome.field, &reference, &grid, base.0, base.1);
            Ok(DomainRow {
                kind,
                s_max,
                v_max,
                error,
            })
        })
        .collect()
}

/// March once and score against the expansion.
pub fn single_error(preset: &ExperimentPreset, kind: BoundaryKind, h: f64) -> Result<f64> {
    let grid = Grid::build(preset.grid_spec(h)?)?;
    let tau = preset.contract.maturity;
    let outcome = march(&grid, &preset.params, tau, kind)?;
    let reference = asymptotic_reference(&grid, &preset.params, tau);
    Ok(relative_error(&outcome.field, &reference))
}

/// Key of a domain-study row, e.g. `4x4` or `40x4`.
pub fn domain_key(s_max: f64, v_max: f64) -> String {
    format!("{}x{}", format_trimmed(s_max), format_trimmed(v_max))
}

fn format_trimmed(x: f64) -> String {
    if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// First derivative along s at node (i, j): central inside, one-sided
/// second-order at the two edges.
fn d_ds(field: &SolutionField, grid: &Grid, i: usize, j: usize) -> f64 {
    let ds = grid.ds;
    let n_s = grid.spec.n_s;
    if i == 0 {
        (-3.0 * field.at(0, j) + 4.0 * field.at(1, j) - field.at(2, j)) / (2.0 * ds)
    } else if i == n_s {
        (3.0 * field.at(n_s, j) - 4.0 * field.at(n_s - 1, j) + field.at(n_s - 2, j)) / (2.0 * ds)
    } else {
        (field.at(i + 1, j) - field.at(i - 1, j)) / (2.0 * ds)
    }
}

/// Second derivative along s: central inside, four-point one-sided at
/// the edges.
fn d_ds2(field: &SolutionField, grid: &Grid, i: usize, j: usize) -> f64 {
    let ds2 = grid.ds * grid.ds;
    let n_s = grid.spec.n_s;
    if i == 0 {
        (2.0 * field.at(0, j) - 5.0 * field.at(1, j) + 4.0 * field.at(2, j) - field.at(3, j)) / ds2
    } else if i == n_s {
        (2.0 * field.at(n_s, j) - 5.0 * field.at(n_s - 1, j) + 4.0 * field.at(n_s - 2, j)
            - field.at(n_s - 3, j))
            / ds2
    } else {
        (field.at(i + 1, j) - 2.0 * field.at(i, j) + field.at(i - 1, j)) / ds2
    }
}

/// First derivative along v: central inside, one-sided second-order at
/// the two edges.
fn d_dv(field: &SolutionField, grid: &Grid, i: usize, j: usize) -> f64 {
    let dv = grid.dv;
    let n_v = grid.spec.n_v;
    if j == 0 {
        (-3.0 * field.at(i, 0) + 4.0 * field.at(i, 1) - field.at(i, 2)) / (2.0 * dv)
    } else if j == n_v {
        (3.0 * field.at(i, n_v) - 4.0 * field.at(i, n_v - 1) + field.at(i, n_v - 2)) / (2.0 * dv)
    } else {
        (field.at(i, j + 1) - field.at(i, j - 1)) / (2.0 * dv)
    }
}

/// Numeric and reference sensitivities at one variance node of a fixed
/// asset column. Values are derivatives of the transformed price: the
/// physical Delta equals `dV/ds` exactly, the physical Gamma is
/// `d2V/ds2 * e^{r tau} / K`, and the physical variance Vega is
/// `K e^{-r tau} dV/dv`; the bundled presets use `r = 0, K = 1`, where
/// the transformed and physical values coincide.
#[derive(Debug, Clone, Copy)]
pub struct GreeksRow {
    pub v: f64,
    pub delta_numeric: f64,
    pub delta_reference: f64,
    pub gamma_numeric: f64,
    pub gamma_reference: f64,
    pub vega_numeric: f64,
    pub vega_reference: f64,
}

/// Applies identical discrete derivative operators to the numeric and
/// reference fields along the column `s = s_value`, for every variance
/// node that admits a central difference in v.
pub fn greeks_slice(
    numeric: &SolutionField,
    reference: &SolutionField,
    grid: &Grid,
    s_value: f64,
) -> Result<Vec<GreeksRow>> {
    let i = grid.s_column(s_value)?;
    Ok((1..grid.spec.n_v)
        .map(|j| GreeksRow {
            v: grid.v[j],
            delta_numeric: d_ds(numeric, grid, i, j),
            delta_reference: d_ds(reference, grid, i, j),
            gamma_numeric: d_ds2(numeric, grid, i, j),
            gamma_reference: d_ds2(reference, grid, i, j),
            vega_numeric: d_dv(numeric, grid, i, j),
            vega_reference: d_dv(reference, grid, i, j),
        })
        .collect())
}

/// Mean absolute numeric-versus-reference gaps of a Greeks slice.
#[derive(Debug, Clone, Copy)]
pub struct GreekErrors {
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
}

pub fn mean_abs_greek_errors(rows: &[GreeksRow]) -> GreekErrors {
    let n = rows.len().max(1) as f64;
    let mut delta = 0.0;
    let mut gamma = 0.0;
    let mut vega = 0.0;
    for row in rows {
        delta += (row.delta_numeric - row.delta_reference).abs();
        gamma += (row.gamma_numeric - row.gamma_reference).abs();
        vega += (row.vega_numeric - row.vega_reference).abs();
    }
    GreekErrors {
        delta: delta / n,
        gamma: gamma / n,
        vega: vega / n,
    }
}

/// Axis of a one-dimensional solution slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    /// Vary s at a fixed variance.
    S,
    /// Vary v at a fixed asset level.
    V,
}

/// One node of a solution slice.
#[derive(Debug, Clone, Copy)]
pub struct SliceRow {
    pub coord: f64,
    pub reference: f64,
    pub numeric: f64,
}

/// Extracts matching numeric and reference values along one grid line.
pub fn slice_rows(
    numeric: &SolutionField,
    reference: &SolutionField,
    grid: &Grid,
    axis: SliceAxis,
    at: f64,
) -> Result<Vec<SliceRow>> {
    match axis {
        SliceAxis::S => {
            let j = grid.v_row(at)?;
            Ok((0..=grid.spec.n_s)
                .map(|i| SliceRow {
                    coord: grid.s[i],
                    reference: reference.at(i, j),
                    numeric: numeric.at(i, j),
                })
                .collect())
        }
        SliceAxis::V => {
            let i = grid.s_column(at)?;
            Ok((0..=grid.spec.n_v)
                .map(|j| SliceRow {
                    coord: grid.v[j],
                    reference: reference.at(i, j),
                    numeric: numeric.at(i, j),
                })
                .collect())
        }
    }
}

/// A bundled reference value: the expected relative error of `kind` in
/// study `study` at `key` (a mesh width or a domain label).
#[derive(Debug, Clone)]
pub struct ReferenceError {
    pub study: String,
    pub kind: BoundaryKind,
    pub key: String,
    pub error: f64,
}

/// Parses the bundled reference table.
pub fn reference_errors() -> Vec<ReferenceError> {
    let raw = include_str!("../data/reference_errors.csv");
    raw.lines()
        .skip(1)
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            let mut parts = line.split(',');
            let study = parts.next().expect("study column").to_string();
            let kind_name = parts.next().expect("kind column");
            let kind = BoundaryKind::parse(kind_name)
                .unwrap_or_else(|| panic!("unknown condition name {kind_name}"));
            let key = parts.next().expect("key column").to_string();
            let error: f64 = parts
                .next()
                .expect("error column")
                .parse()
                .expect("numeric error");
            ReferenceError {
                study,
                kind,
                key,
                error,
            }
        })
        .collect()
}

/// Looks up one bundled reference value.
pub fn reference_error(study: &str, kind: BoundaryKind, key: &str) -> Result<f64> {
    reference_errors()
        .iter()
        .find(|r| r.study == study && r.kind == kind && r.key == key)
        .map(|r| r.error)
        .ok_or_else(|| Error::InvalidGrid {
            reason: format!("no bundled reference for {study}/{kind}/{key}"),
        })
}

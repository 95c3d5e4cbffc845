//! Acceptance suite: the full set of results the solver is expected to
//! reproduce, each pinned to an explicit tolerance. Every test prints
//! one line per clause and a final `criterion N: PASS/FAIL` line
//! (visible with `--nocapture`, or automatically when a test fails),
//! then asserts that all of its clauses hold.
//!
//! Reference error levels come from the bundled table in the core
//! crate; the tolerances and orderings checked here are the contract
//! this repository is built against. Two clauses are known not to be
//! attainable with the discretizations as written and fail honestly:
//! the coarsest two mesh widths of the constant-extension correction in
//! criterion 1, and the final strict inequality of criterion 3.

use std::fs;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use heston_abc::abc::{kernel_integral, mapabc1_row, mapabc2_row};
use heston_abc::asymptotics::{v0_price, v1_price, v2_price};
use heston_abc::bench::{
    asymptotic_reference, greeks_slice, mean_abs_greek_errors, reference_error,
    relative_error_within, run_table, single_error, ExperimentPreset, PresetId,
};
use heston_abc::math::GaussLegendre;
use heston_abc::{march, march_with_history, BoundaryKind, Grid, HestonParams};

const TABLE_WIDTHS: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Collects clause outcomes, prints the per-criterion report, and
/// asserts at the end so every clause is always evaluated and printed.
struct Report {
    name: &'static str,
    clauses: Vec<(String, bool)>,
}

impl Report {
    fn new(name: &'static str) -> Self {
        Report {
            name,
            clauses: Vec::new(),
        }
    }

    fn clause(&mut self, ok: bool, detail: String) {
        self.clauses.push((detail, ok));
    }

    fn finish(self) {
        for (detail, ok) in &self.clauses {
            println!("  [{}] {detail}", if *ok { "pass" } else { "FAIL" });
        }
        let all = self.clauses.iter().all(|(_, ok)| *ok);
        println!("{}: {}", self.name, if all { "PASS" } else { "FAIL" });
        assert!(all, "{} has failing clauses (see lines above)", self.name);
    }
}

/// One full `table --preset set1` CLI run (all four conditions, all
/// five widths), shared by the criteria that consume it.
struct Set1CliTable {
    bytes: Vec<u8>,
    rows: Vec<(BoundaryKind, String, f64)>,
    wall: Duration,
}

static SET1_CLI_TABLE: OnceLock<Set1CliTable> = OnceLock::new();

fn run_cli_table_set1(out_dir: &std::path::Path) -> Vec<u8> {
    let output = Command::new(env!("CARGO_BIN_EXE_heston-abc"))
        .args([
            "table",
            "--preset",
            "set1",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .expect("CLI binary spawns");
    assert!(
        output.status.success(),
        "table --preset set1 failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    fs::read(out_dir.join("table_set1.csv")).expect("table CSV written")
}

fn set1_cli_table() -> &'static Set1CliTable {
    SET1_CLI_TABLE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let bytes = run_cli_table_set1(dir.path());
        let wall = start.elapsed();
        let text = String::from_utf8(bytes.clone()).expect("CSV is UTF-8");
        let rows = text
            .lines()
            .skip(1)
            .map(|line| {
                let mut parts = line.split(',');
                let kind = BoundaryKind::parse(parts.next().unwrap()).expect("known kind");
                let key = parts.next().unwrap().to_string();
                let error: f64 = parts.next().unwrap().parse().expect("numeric error");
                (kind, key, error)
            })
            .collect();
        Set1CliTable { bytes, rows, wall }
    })
}

fn table_cell(rows: &[(BoundaryKind, String, f64)], kind: BoundaryKind, key: &str) -> f64 {
    rows.iter()
        .find(|(k, h, _)| *k == kind && h == key)
        .map(|(_, _, e)| *e)
        .unwrap_or_else(|| panic!("missing table cell {kind}/{key}"))
}

/// Relative-band clause: computed within `band` of the bundled value.
fn band_clause(
    report: &mut Report,
    study: &str,
    kind: BoundaryKind,
    key: &str,
    got: f64,
    band: f64,
) {
    let want = reference_error(study, kind, key).expect("bundled reference");
    let deviation = (got - want).abs() / want;
    report.clause(
        deviation <= band,
        format!(
            "{kind} h={key}: error {got:.5e} within {:.0}% of {want:.5e} (deviation {deviation:.1e})",
            band * 100.0
        ),
    );
}

#[test]
fn criterion_1_set1_refinement_table_bands_ordering_and_runtime() {
    let mut report = Report::new("criterion 1");
    let table = set1_cli_table();

    for (kind, band) in [
        (BoundaryKind::Original, 0.20),
        (BoundaryKind::MApAbc1, 0.30),
        (BoundaryKind::MApAbc2, 0.50),
    ] {
        for h in TABLE_WIDTHS {
            let key = format!("{h}");
            let got = table_cell(&table.rows, kind, &key);
            band_clause(&mut report, "set1", kind, &key, got, band);
        }
    }

    for h in [0.1, 0.05, 0.025] {
        let key = format!("{h}");
        let orig = table_cell(&table.rows, BoundaryKind::Original, &key);
        let m1 = table_cell(&table.rows, BoundaryKind::MApAbc1, &key);
        let m2 = table_cell(&table.rows, BoundaryKind::MApAbc2, &key);
        report.clause(
            m2 < m1 && m1 < orig,
            format!("ordering at h={h}: {m2:.5e} < {m1:.5e} < {orig:.5e}"),
        );
    }

    let wall = table.wall.as_secs_f64();
    report.clause(
        wall < 300.0,
        format!("full table computed in {wall:.1} s (< 300 s)"),
    );
    report.finish();
}

#[test]
fn criterion_2_set2_correction_removes_nearly_all_truncation_error() {
    let mut report = Report::new("criterion 2");
    let preset = ExperimentPreset::get(PresetId::Set2);

    let orig_01 = single_error(&preset, BoundaryKind::Original, 0.1).unwrap();
    band_clause(
        &mut report,
        "set2",
        BoundaryKind::Original,
        "0.1",
        orig_01,
        0.15,
    );

    let orig_0025 = single_error(&preset, BoundaryKind::Original, 0.025).unwrap();
    for kind in [BoundaryKind::MApAbc1, BoundaryKind::MApAbc2] {
        let err = single_error(&preset, kind, 0.025).unwrap();
        let reduction = 1.0 - err / orig_0025;
        report.clause(
            reduction >= 0.95,
            format!(
                "{kind} h=0.025: error {err:.5e} removes {:.1}% of {orig_0025:.5e} (>= 95%)",
                reduction * 100.0
            ),
        );
    }
    report.finish();
}

#[test]
fn criterion_3_set2_small_domain_corrections_rival_a_tenfold_domain() {
    let mut report = Report::new("criterion 3");
    let preset = ExperimentPreset::get(PresetId::Set2);
    let tau = preset.contract.maturity;

    // The wide run is scored on the base region, so the comparison
    // below measures boundary treatment, not domain coverage.
    let widened = preset.with_domain(10.0 * preset.s_max, preset.v_max);
    let grid = Grid::build(widened.grid_spec(0.1).unwrap()).unwrap();
    let outcome = march(&grid, &widened.params, tau, BoundaryKind::Original).unwrap();
    let reference = asymptotic_reference(&grid, &widened.params, tau);
    let orig_wide = relative_error_within(
        &outcome.field,
        &reference,
        &grid,
        preset.s_max,
        preset.v_max,
    );
    band_clause(
        &mut report,
        "set2_domain",
        BoundaryKind::Original,
        "40x4",
        orig_wide,
        0.30,
    );

    let mut small = Vec::new();
    for kind in [BoundaryKind::MApAbc1, BoundaryKind::MApAbc2] {
        let err = single_error(&preset, kind, 0.1).unwrap();
        small.push((kind, err));
        report.clause(
            err <= 0.0015,
            format!("{kind} on the base domain: error {err:.5e} <= 1.5e-3"),
        );
    }
    for (kind, err) in small {
        report.clause(
            err < orig_wide,
            format!(
                "{kind} on the base domain ({err:.5e}) beats original on the tenfold domain ({orig_wide:.5e})"
            ),
        );
    }
    report.finish();
}

#[test]
fn criterion_4_set3_ordering_at_every_width_and_finest_error() {
    let mut report = Report::new("criterion 4");
    let preset = ExperimentPreset::get(PresetId::Set3);
    let kinds = [
        BoundaryKind::Original,
        BoundaryKind::MApAbc1,
        BoundaryKind::MApAbc2,
    ];
    let rows = run_table(&preset, &kinds, &TABLE_WIDTHS).unwrap();
    let cell = |kind: BoundaryKind, h: f64| {
        rows.iter()
            .find(|r| r.kind == kind && r.h == h)
            .map(|r| r.error)
            .expect("computed cell")
    };

    for h in TABLE_WIDTHS {
        let orig = cell(BoundaryKind::Original, h);
        let m1 = cell(BoundaryKind::MApAbc1, h);
        let m2 = cell(BoundaryKind::MApAbc2, h);
        report.clause(
            m2 < m1 && m1 < orig,
            format!("ordering at h={h}: {m2:.5e} < {m1:.5e} < {orig:.5e}"),
        );
    }

    let finest = cell(BoundaryKind::MApAbc2, 0.025);
    report.clause(
        finest <= 0.0006,
        format!("mapabc2 h=0.025: error {finest:.5e} <= 6.0e-4"),
    );
    report.finish();
}

/// Adaptive Simpson quadrature with interval-halving error control.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[test]
fn criterion_5_memory_kernel_closed_form_matches_quadrature() {
    let mut report = Report::new("criterion 5");
    // The kernel integrand has a square-root endpoint singularity; the
    // substitution u = sqrt(tau - t) gives the smooth, independently
    // integrable form 2 * Int e^{-v u^2 / 8} du.
    let oracle = |v: f64, tau: f64, alpha: f64, beta: f64| {
        let f = |u: f64| (-v * u * u / 8.0).exp();
        2.0 * adaptive_simpson(&f, (tau - beta).sqrt(), (tau - alpha).sqrt(), 1e-13)
    };
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        for k in 1..=20 {
            let v = 0.2 * i as f64;
            let tau = 0.1 * k as f64;
            for (alpha, beta) in [(0.0, tau), (0.25 * tau, 0.75 * tau)] {
                let closed = kernel_integral(v, tau, alpha, beta);
                let truth = oracle(v, tau, alpha, beta);
                worst = worst.max((closed - truth).abs() / truth.abs());
            }
        }
    }
    report.clause(
        worst <= 1e-8,
        format!("20x20 (v, tau) grid, full and interior windows: max relative deviation {worst:.2e} <= 1e-8"),
    );
    report.finish();
}

/// Central second-order finite differences of a closed-form function of
/// (s, v, tau), used to measure how well the expansion terms satisfy
/// their defining equations.
struct Fd<'a> {
    f: &'a dyn Fn(f64, f64, f64) -> f64,
    h: f64,
}

impl Fd<'_> {
    fn d_tau(&self, s: f64, v: f64, t: f64) -> f64 {
        ((self.f)(s, v, t + self.h) - (self.f)(s, v, t - self.h)) / (2.0 * self.h)
    }

    fn d_v(&self, s: f64, v: f64, t: f64) -> f64 {
        ((self.f)(s, v + self.h, t) - (self.f)(s, v - self.h, t)) / (2.0 * self.h)
    }

    fn d_ss(&self, s: f64, v: f64, t: f64) -> f64 {
        ((self.f)(s + self.h, v, t) - 2.0 * (self.f)(s, v, t) + (self.f)(s - self.h, v, t))
            / (self.h * self.h)
    }

    fn d_vv(&self, s: f64, v: f64, t: f64) -> f64 {
        ((self.f)(s, v + self.h, t) - 2.0 * (self.f)(s, v, t) + (self.f)(s, v - self.h, t))
            / (self.h * self.h)
    }

    fn d_sv(&self, s: f64, v: f64, t: f64) -> f64 {
        ((self.f)(s + self.h, v + self.h, t)
            - (self.f)(s + self.h, v - self.h, t)
            - (self.f)(s - self.h, v + self.h, t)
            + (self.f)(s - self.h, v - self.h, t))
            / (4.0 * self.h * self.h)
    }
}

#[test]
fn criterion_6_expansion_terms_satisfy_their_cascade_equations() {
    let mut report = Report::new("criterion 6");
    let p = HestonParams {
        kappa: 4.0,
        eta: 0.1,
        sigma: 0.1,
        rho: -0.5,
        r: 0.0,
    };
    let points = [
        (0.7, 0.25, 0.6),
        (1.0, 0.8, 0.4),
        (1.3, 0.5, 1.0),
        (2.2, 1.1, 1.5),
    ];

    // Leading term: transport in v plus s-diffusion balances the time
    // derivative. The first correction adds the cross derivative of the
    // leading term as a source; the second adds the cross derivative of
    // the first and the v-diffusion of the leading term.
    let residual = |order: usize, h: f64| -> f64 {
        let f0 = |s: f64, v: f64, t: f64| v0_price(s, v, t, &p);
        let f1 = |s: f64, v: f64, t: f64| v1_price(s, v, t, &p);
        let f2 = |s: f64, v: f64, t: f64| v2_price(s, v, t, &p);
        let d0 = Fd { f: &f0, h };
        let d1 = Fd { f: &f1, h };
        let d2 = Fd { f: &f2, h };
        points
            .iter()
            .map(|&(s, v, t)| {
                let r = match order {
                    0 => {
                        0.5 * v * s * s * d0.d_ss(s, v, t) + p.kappa * (p.eta - v) * d0.d_v(s, v, t)
                            - d0.d_tau(s, v, t)
                    }
                    1 => {
                        0.5 * v * s * s * d1.d_ss(s, v, t)
                            + p.rho * v * s * d0.d_sv(s, v, t)
                            + p.kappa * (p.eta - v) * d1.d_v(s, v, t)
                            - d1.d_tau(s, v, t)
                    }
                    _ => {
                        0.5 * v * s * s * d2.d_ss(s, v, t)
                            + p.rho * v * s * d1.d_sv(s, v, t)
                            + 0.5 * v * d0.d_vv(s, v, t)
                            + p.kappa * (p.eta - v) * d2.d_v(s, v, t)
                            - d2.d_tau(s, v, t)
                    }
                };
                r.abs()
            })
            .fold(0.0, f64::max)
    };

    for order in 0..=2 {
        let r_coarse = residual(order, 0.04);
        let r_mid = residual(order, 0.02);
        let r_fine = residual(order, 0.01);
        let ratio_1 = r_coarse / r_mid;
        let ratio_2 = r_mid / r_fine;
        let ok = (3.0..=5.0).contains(&ratio_1) && (3.0..=5.0).contains(&ratio_2);
        report.clause(
            ok,
            format!(
                "order-{order} residual {r_coarse:.2e} -> {r_mid:.2e} -> {r_fine:.2e}, halving ratios {ratio_1:.2} and {ratio_2:.2} (second order is 4)"
            ),
        );
    }

    let p_zero_rho = HestonParams { rho: 0.0, ..p };
    let exact_zero = points
        .iter()
        .all(|&(s, v, t)| v1_price(s, v, t, &p_zero_rho) == 0.0);
    report.clause(
        exact_zero,
        "first correction vanishes identically when the correlation is zero".to_string(),
    );
    report.finish();
}

#[test]
fn criterion_7_constant_sources_reduce_the_profile_correction_to_the_constant_one() {
    let mut report = Report::new("criterion 7");
    let preset = ExperimentPreset::get(PresetId::Set1);
    let grid = Grid::build(preset.grid_spec(0.2).unwrap()).unwrap();
    let tau = preset.contract.maturity;
    let dt = tau / grid.spec.n_t as f64;
    let (_, history) =
        march_with_history(&grid, &preset.params, tau, BoundaryKind::MApAbc1).unwrap();
    let constant_view = history.with_constant_profiles();
    let gl = GaussLegendre::new(32);

    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for n in 1..=grid.spec.n_t {
        for j in 1..grid.spec.n_v {
            let row_1 = mapabc1_row(&grid, &preset.params, dt, n, j, &history);
            let row_2 = mapabc2_row(&grid, &preset.params, dt, n, j, &constant_view, tau, &gl);
            assert_eq!(
                row_1.cols.len(),
                row_2.cols.len(),
                "row shapes at (j={j}, n={n})"
            );
            for (a, b) in row_1.cols.iter().zip(&row_2.cols) {
                assert_eq!(a.0, b.0, "column indices at (j={j}, n={n})");
                worst = worst.max((a.1 - b.1).abs());
            }
            worst = worst.max((row_1.rhs - row_2.rhs).abs());
            compared += 1;
        }
    }
    report.clause(
        worst <= 1e-6,
        format!(
            "{compared} boundary rows across all steps: max coefficient gap {worst:.2e} <= 1e-6"
        ),
    );
    report.finish();
}

#[test]
fn criterion_8_set3_boundary_greeks_beat_the_neumann_condition() {
    let mut report = Report::new("criterion 8");
    let preset = ExperimentPreset::get(PresetId::Set3);
    let grid = Grid::build(preset.grid_spec(0.1).unwrap()).unwrap();
    let tau = preset.contract.maturity;
    let reference = asymptotic_reference(&grid, &preset.params, tau);

    let means = |kind: BoundaryKind| {
        let outcome = march(&grid, &preset.params, tau, kind).unwrap();
        let rows = greeks_slice(&outcome.field, &reference, &grid, preset.s_max).unwrap();
        mean_abs_greek_errors(&rows)
    };
    let orig = means(BoundaryKind::Original);
    let m2 = means(BoundaryKind::MApAbc2);

    for (name, got, baseline) in [
        ("delta", m2.delta, orig.delta),
        ("gamma", m2.gamma, orig.gamma),
        ("vega", m2.vega, orig.vega),
    ] {
        report.clause(
            got < baseline,
            format!("mean |{name} error| on the far boundary: {got:.5e} < {baseline:.5e}"),
        );
    }
    report.finish();
}

#[test]
fn criterion_9_repeated_table_runs_are_byte_identical() {
    let mut report = Report::new("criterion 9");
    let first = set1_cli_table();
    let dir = tempfile::tempdir().unwrap();
    let second = run_cli_table_set1(dir.path());
    report.clause(
        first.bytes == second,
        format!(
            "two `table --preset set1` runs: {} bytes each, identical = {}",
            first.bytes.len(),
            first.bytes == second
        ),
    );
    report.finish();
}

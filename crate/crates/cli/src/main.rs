//! Command-line front end for the solver: single pricing runs,
//! mesh-refinement error tables, domain-truncation studies, Greeks
//! exports, and solution slices. Every command scores the numeric
//! solution against the second-order expansion reference and writes
//! deterministic CSV files, so repeated runs with the same settings
//! produce byte-identical data.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use heston_abc::bench::{
    self, asymptotic_reference, domain_key, greeks_slice, mean_abs_greek_errors, relative_error,
    run_domain_study, run_table, slice_rows, ExperimentPreset, PresetId, SliceAxis,
};
use heston_abc::solve::SOLVER_TOLERANCE;
use heston_abc::{march_with_tolerance, BoundaryKind, ContractSpec, Grid, HestonParams};
use serde::Deserialize;

/// Mesh widths of the refinement tables.
const TABLE_WIDTHS: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Default tolerance for `--check` comparisons.
const DEFAULT_TOL_REL: f64 = 0.3;

#[derive(Parser)]
#[command(
    name = "heston-abc",
    version,
    about = "Heston European call pricing with artificial far-boundary conditions",
    after_help = "Set HESTON_ABC_LOG to error, warn, info, or debug to control logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one march per boundary condition and write the final field
    /// with a metadata document.
    Price(RunArgs),
    /// Relative errors over a list of mesh widths, one march per
    /// (condition, width) pair.
    Table(RunArgs),
    /// Relative errors on the base region when the domain is widened
    /// ten-fold in either direction, at fixed width 0.1.
    #[command(name = "domain-study")]
    DomainStudy(RunArgs),
    /// Delta, Gamma, and Vega along the far asset boundary, numeric
    /// versus reference under identical difference operators.
    Greeks(RunArgs),
    /// One grid line of the numeric and reference solutions.
    Slice(SliceArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// Named parameter set: set1, set2, or set3.
    #[arg(long)]
    preset: Option<String>,

    /// Far-boundary condition: original, apabc, mapabc1, mapabc2, or all.
    #[arg(long)]
    bc: Option<String>,

    /// Comma-separated mesh widths, e.g. 0.4,0.2,0.1. Single-run
    /// commands accept exactly one width.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,

    /// Asset-domain size override.
    #[arg(long)]
    smax: Option<f64>,

    /// Variance-domain size override.
    #[arg(long)]
    vmax: Option<f64>,

    /// Output directory for CSV and metadata files.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Compare computed errors against the bundled reference values and
    /// exit nonzero if any cell deviates beyond --tol-rel.
    #[arg(long)]
    check: bool,

    /// Relative tolerance per cell for --check.
    #[arg(long)]
    tol_rel: Option<f64>,

    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// TOML config file; command-line flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SliceArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Slice axis: s (vary asset at fixed variance) or v (vary variance
    /// at fixed asset level).
    #[arg(long)]
    axis: Option<String>,

    /// Fixed coordinate of the slice; must lie on the grid. Defaults to
    /// the far asset boundary for axis v and to half the variance
    /// domain for axis s.
    #[arg(long)]
    at: Option<f64>,
}

/// Optional file-based settings mirroring the flags, plus explicit
/// model parameters as an alternative to a named preset.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    bc: Option<String>,
    h: Option<Vec<f64>>,
    smax: Option<f64>,
    vmax: Option<f64>,
    out: Option<PathBuf>,
    tol_rel: Option<f64>,
    threads: Option<usize>,
    solver_tol: Option<f64>,
    axis: Option<String>,
    at: Option<f64>,
    params: Option<ParamsTable>,
}

/// Explicit model and contract parameters for runs outside the named
/// presets.
#[derive(Deserialize, Debug, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct ParamsTable {
    kappa: f64,
    eta: f64,
    sigma: f64,
    rho: f64,
    #[serde(default)]
    r: f64,
    strike: f64,
    maturity: f64,
}

/// A flag whose value parsed but fails validation. Reported with the
/// same exit status clap uses for malformed arguments.
#[derive(Debug)]
enum CliError {
    Flag { flag: &'static str, message: String },
    Other(anyhow::Error),
}

impl CliError {
    fn flag(flag: &'static str, message: impl Into<String>) -> Self {
        CliError::Flag {
            flag,
            message: message.into(),
        }
    }

    fn other(err: impl Into<anyhow::Error>) -> Self {
        CliError::Other(err.into())
    }
}

/// Everything a command needs after flags and config are merged.
struct Settings {
    label: String,
    preset: ExperimentPreset,
    kinds: Vec<BoundaryKind>,
    hs: Vec<f64>,
    out: PathBuf,
    check: bool,
    tol_rel: f64,
    solver_tol: f64,
    axis: SliceAxis,
    at: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HESTON_ABC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(CliError::Flag { flag, message }) => {
            eprintln!("error: invalid value for {flag}: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Other(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    let (args, slice_extra) = match &cli.command {
        Command::Price(a) | Command::Table(a) | Command::DomainStudy(a) | Command::Greeks(a) => {
            (a.clone(), None)
        }
        Command::Slice(s) => (s.run.clone(), Some((s.axis.clone(), s.at))),
    };
    let single_width = !matches!(cli.command, Command::Table(_));
    let settings = resolve(&args, slice_extra, single_width)?;
    if let Some(n) = args.threads.or_else(|| load_config(&args).ok()?.threads) {
        if n == 0 {
            return Err(CliError::flag("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::other)?;
    }
    let result = match cli.command {
        Command::Price(_) => cmd_price(&settings),
        Command::Table(_) => cmd_table(&settings),
        Command::DomainStudy(_) => cmd_domain_study(&settings),
        Command::Greeks(_) => cmd_greeks(&settings),
        Command::Slice(_) => cmd_slice(&settings),
    };
    result.map_err(CliError::Other)
}

fn load_config(args: &RunArgs) -> Result<ConfigFile> {
    match &args.config {
        None => Ok(ConfigFile::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
        }
    }
}

fn resolve(
    args: &RunArgs,
    slice_extra: Option<(Option<String>, Option<f64>)>,
    single_width: bool,
) -> Result<Settings, CliError> {
    let cfg = load_config(args).map_err(CliError::other)?;

    let preset_name = args.preset.clone().or_else(|| cfg.preset.clone());
    let (label, base) = match (&preset_name, &cfg.params) {
        (Some(name), params) => {
            if params.is_some() {
                if args.preset.is_some() {
                    log::warn!("--preset overrides the [params] table from the config file");
                } else {
                    return Err(CliError::other(anyhow::anyhow!(
                        "config file sets both `preset` and `[params]`; choose one"
                    )));
                }
            }
            let id = PresetId::parse(name).ok_or_else(|| {
                CliError::flag(
                    "--preset",
                    format!("expected set1, set2, or set3, got {name}"),
                )
            })?;
            (id.name().to_string(), ExperimentPreset::get(id))
        }
        (None, Some(p)) => (
            "custom".to_string(),
            custom_preset(p).map_err(CliError::other)?,
        ),
        (None, None) => ("set1".to_string(), ExperimentPreset::get(PresetId::Set1)),
    };

    let s_max = args.smax.or(cfg.smax).unwrap_or(base.s_max);
    let v_max = args.vmax.or(cfg.vmax).unwrap_or(base.v_max);
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(CliError::flag(
            "--smax",
            format!("must be positive and finite, got {s_max}"),
        ));
    }
    if !(v_max > 0.0 && v_max.is_finite()) {
        return Err(CliError::flag(
            "--vmax",
            format!("must be positive and finite, got {v_max}"),
        ));
    }
    let preset = base.with_domain(s_max, v_max);

    let kinds = match args.bc.clone().or_else(|| cfg.bc.clone()).as_deref() {
        None | Some("all") => BoundaryKind::ALL.to_vec(),
        Some(name) => vec![BoundaryKind::parse(name).ok_or_else(|| {
            CliError::flag(
                "--bc",
                format!("expected original, apabc, mapabc1, mapabc2, or all, got {name}"),
            )
        })?],
    };

    let hs = args.h.clone().or_else(|| cfg.h.clone()).unwrap_or_else(|| {
        if single_width {
            vec![0.1]
        } else {
            TABLE_WIDTHS.to_vec()
        }
    });
    if hs.is_empty() {
        return Err(CliError::flag("--h", "needs at least one mesh width"));
    }
    for &h in &hs {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::flag(
                "--h",
                format!("mesh width must be positive and finite, got {h}"),
            ));
        }
    }
    if single_width && hs.len() > 1 {
        return Err(CliError::flag(
            "--h",
            format!(
                "this command runs at a single mesh width, got {} values",
                hs.len()
            ),
        ));
    }

    let tol_rel = args.tol_rel.or(cfg.tol_rel).unwrap_or(DEFAULT_TOL_REL);
    if !(tol_rel > 0.0 && tol_rel.is_finite()) {
        return Err(CliError::flag(
            "--tol-rel",
            format!("must be positive and finite, got {tol_rel}"),
        ));
    }

    let solver_tol = cfg.solver_tol.unwrap_or(SOLVER_TOLERANCE);
    if !(solver_tol > 0.0 && solver_tol < 1.0) {
        return Err(CliError::other(anyhow::anyhow!(
            "config solver_tol must lie in (0, 1), got {solver_tol}"
        )));
    }

    let (axis_name, at) = match slice_extra {
        Some((axis, at)) => (axis.or_else(|| cfg.axis.clone()), at.or(cfg.at)),
        None => (None, None),
    };
    let axis = match axis_name.as_deref() {
        None | Some("v") => SliceAxis::V,
        Some("s") => SliceAxis::S,
        Some(other) => {
            return Err(CliError::flag(
                "--axis",
                format!("expected s or v, got {other}"),
            ))
        }
    };

    Ok(Settings {
        label,
        preset,
        kinds,
        hs,
        out: args
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        check: args.check,
        tol_rel,
        solver_tol,
        axis,
        at,
    })
}

/// Builds a preset-shaped bundle from explicit parameters, validating
/// model and contract before any run. The sweeps never read the id, so
/// the placeholder is inert; outputs are labelled `custom`.
fn custom_preset(p: &ParamsTable) -> Result<ExperimentPreset> {
    let params = HestonParams {
        kappa: p.kappa,
        eta: p.eta,
        sigma: p.sigma,
        rho: p.rho,
        r: p.r,
    };
    let params = params.validated().context("invalid [params]")?;
    let contract = ContractSpec {
        strike: p.strike,
        maturity: p.maturity,
    };
    let report = contract.validate();
    if !report.is_valid() {
        let mut lines = Vec::new();
        for issue in report.errors() {
            lines.push(format!("{}: {}", issue.field, issue.message));
        }
        bail!("invalid [params]: {}", lines.join("; "));
    }
    Ok(ExperimentPreset {
        id: PresetId::Set1,
        params,
        contract,
        s_max: 4.0,
        v_max: 4.0,
    })
}

fn cmd_price(settings: &Settings) -> Result<bool> {
    let h = settings.hs[0];
    let preset = &settings.preset;
    let grid = Grid::build(preset.grid_spec(h)?)?;
    let tau = preset.contract.maturity;
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    for &kind in &settings.kinds {
        log::info!("pricing {} {} at h = {h}", settings.label, kind);
        let outcome = march_with_tolerance(&grid, &preset.params, tau, kind, settings.solver_tol)?;
        let reference = asymptotic_reference(&grid, &preset.params, tau);
        let error = relative_error(&outcome.field, &reference);

        let stem = format!("price_{}_{}_h{}", settings.label, kind, trim(h));
        let field_path = settings.out.join(format!("{stem}.csv"));
        let mut w = writer(&field_path)?;
        writeln!(w, "s,v,value")?;
        for j in 0..=grid.spec.n_v {
            for i in 0..=grid.spec.n_s {
                writeln!(
                    w,
                    "{},{},{}",
                    sig6(grid.s[i]),
                    sig6(grid.v[j]),
                    sig6(outcome.field.at(i, j))
                )?;
            }
        }
        w.flush()?;

        let meta_path = settings.out.join(format!("{stem}.meta.txt"));
        let mut m = writer(&meta_path)?;
        let r = &outcome.report;
        writeln!(m, "command = price")?;
        writeln!(m, "label = {}", settings.label)?;
        writeln!(m, "boundary = {kind}")?;
        writeln!(m, "kappa = {}", preset.params.kappa)?;
        writeln!(m, "eta = {}", preset.params.eta)?;
        writeln!(m, "sigma = {}", preset.params.sigma)?;
        writeln!(m, "rho = {}", preset.params.rho)?;
        writeln!(m, "r = {}", preset.params.r)?;
        writeln!(m, "strike = {}", preset.contract.strike)?;
        writeln!(m, "maturity = {}", preset.contract.maturity)?;
        writeln!(m, "s_max = {}", preset.s_max)?;
        writeln!(m, "v_max = {}", preset.v_max)?;
        writeln!(m, "h = {}", trim(h))?;
        writeln!(m, "n_s = {}", grid.spec.n_s)?;
        writeln!(m, "n_v = {}", grid.spec.n_v)?;
        writeln!(m, "n_t = {}", grid.spec.n_t)?;
        writeln!(m, "solver_tol = {:e}", settings.solver_tol)?;
        writeln!(m, "steps = {}", r.steps)?;
        writeln!(m, "total_iterations = {}", r.total_iterations)?;
        writeln!(m, "max_residual = {}", sig6(r.max_residual))?;
        writeln!(m, "relative_error_vs_expansion = {}", sig6(error))?;
        writeln!(m, "wall_seconds = {:.3}", r.wall.as_secs_f64())?;
        writeln!(m, "generated_unix = {}", unix_now())?;
        m.flush()?;

        println!(
            "{kind}: error {} vs expansion, {} bicgstab iterations, {:.2}s -> {}",
            sig6(error),
            r.total_iterations,
            r.wall.as_secs_f64(),
            field_path.display()
        );
    }
    Ok(true)
}

fn cmd_table(settings: &Settings) -> Result<bool> {
    let rows = run_table(&settings.preset, &settings.kinds, &settings.hs)?;
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let path = settings.out.join(format!("table_{}.csv", settings.label));
    let mut w = writer(&path)?;
    writeln!(w, "kind,h,error")?;
    for row in &rows {
        writeln!(w, "{},{},{}", row.kind, trim(row.h), sig6(row.error))?;
    }
    w.flush()?;
    println!(
        "table {} ({} rows) -> {}",
        settings.label,
        rows.len(),
        path.display()
    );
    for row in &rows {
        println!(
            "  {:<9} h={:<6} {}",
            row.kind.name(),
            trim(row.h),
            sig6(row.error)
        );
    }
    if !settings.check {
        return Ok(true);
    }
    let cells: Vec<(BoundaryKind, String, f64)> =
        rows.iter().map(|r| (r.kind, trim(r.h), r.error)).collect();
    run_checks(&settings.label, &cells, settings.tol_rel)
}

fn cmd_domain_study(settings: &Settings) -> Result<bool> {
    if settings.hs[0] != 0.1 {
        log::warn!("the domain study always runs at h = 0.1; ignoring --h");
    }
    let rows = run_domain_study(&settings.preset, &settings.kinds)?;
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let path = settings
        .out
        .join(format!("domain_study_{}.csv", settings.label));
    let mut w = writer(&path)?;
    writeln!(w, "kind,domain,error")?;
    for row in &rows {
        writeln!(
            w,
            "{},{},{}",
            row.kind,
            domain_key(row.s_max, row.v_max),
            sig6(row.error)
        )?;
    }
    w.flush()?;
    println!(
        "domain study {} ({} rows) -> {}",
        settings.label,
        rows.len(),
        path.display()
    );
    for row in &rows {
        println!(
            "  {:<9} {:<7} {}",
            row.kind.name(),
            domain_key(row.s_max, row.v_max),
            sig6(row.error)
        );
    }
    if !settings.check {
        return Ok(true);
    }
    let study = format!("{}_domain", settings.label);
    let cells: Vec<(BoundaryKind, String, f64)> = rows
        .iter()
        .map(|r| (r.kind, domain_key(r.s_max, r.v_max), r.error))
        .collect();
    run_checks(&study, &cells, settings.tol_rel)
}

fn cmd_greeks(settings: &Settings) -> Result<bool> {
    let h = settings.hs[0];
    let preset = &settings.preset;
    let grid = Grid::build(preset.grid_spec(h)?)?;
    let tau = preset.contract.maturity;
    let reference = asymptotic_reference(&grid, &preset.params, tau);
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    for &kind in &settings.kinds {
        log::info!("greeks {} {} at h = {h}", settings.label, kind);
        let outcome = march_with_tolerance(&grid, &preset.params, tau, kind, settings.solver_tol)?;
        let rows = greeks_slice(&outcome.field, &reference, &grid, preset.s_max)?;
        for greek in ["delta", "gamma", "vega"] {
            let path = settings
                .out
                .join(format!("greeks_{}_{}_{}.csv", settings.label, kind, greek));
            let mut w = writer(&path)?;
            writeln!(w, "v,{greek}_num,{greek}_ref,abs_error")?;
            for row in &rows {
                let (num, reference) = match greek {
                    "delta" => (row.delta_numeric, row.delta_reference),
                    "gamma" => (row.gamma_numeric, row.gamma_reference),
                    _ => (row.vega_numeric, row.vega_reference),
                };
                writeln!(
                    w,
                    "{},{},{},{}",
                    sig6(row.v),
                    sig6(num),
                    sig6(reference),
                    sig6((num - reference).abs())
                )?;
            }
            w.flush()?;
        }
        let means = mean_abs_greek_errors(&rows);
        println!(
            "{kind}: mean |error| delta {}, gamma {}, vega {}",
            sig6(means.delta),
            sig6(means.gamma),
            sig6(means.vega)
        );
    }
    println!(
        "greeks {} at s = {} -> {}",
        settings.label,
        trim(preset.s_max),
        settings.out.display()
    );
    Ok(true)
}

fn cmd_slice(settings: &Settings) -> Result<bool> {
    let h = settings.hs[0];
    let preset = &settings.preset;
    let grid = Grid::build(preset.grid_spec(h)?)?;
    let tau = preset.contract.maturity;
    let reference = asymptotic_reference(&grid, &preset.params, tau);
    let (axis_name, at) = match settings.axis {
        SliceAxis::V => ("v", settings.at.unwrap_or(preset.s_max)),
        SliceAxis::S => ("s", settings.at.unwrap_or(preset.v_max / 2.0)),
    };
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    for &kind in &settings.kinds {
        log::info!(
            "slice {} {} along {axis_name} at {at}",
            settings.label,
            kind
        );
        let outcome = march_with_tolerance(&grid, &preset.params, tau, kind, settings.solver_tol)?;
        let rows = slice_rows(&outcome.field, &reference, &grid, settings.axis, at)?;
        let path = settings.out.join(format!(
            "slice_{}_{}_{}{}.csv",
            settings.label,
            kind,
            axis_name,
            trim(at)
        ));
        let mut w = writer(&path)?;
        writeln!(w, "axis,coord,value_ref,value_num,abs_error")?;
        for row in &rows {
            writeln!(
                w,
                "{axis_name},{},{},{},{}",
                sig6(row.coord),
                sig6(row.reference),
                sig6(row.numeric),
                sig6((row.numeric - row.reference).abs())
            )?;
        }
        w.flush()?;
        println!(
            "slice {kind} along {axis_name} at {} -> {}",
            trim(at),
            path.display()
        );
    }
    Ok(true)
}

/// Compares computed error cells against the bundled reference values,
/// printing one line per comparison. Returns false if any cell deviates
/// beyond `tol` and errors if nothing matched at all.
fn run_checks(study: &str, cells: &[(BoundaryKind, String, f64)], tol: f64) -> Result<bool> {
    let mut compared = 0usize;
    let mut failed = 0usize;
    for (kind, key, got) in cells {
        match bench::reference_error(study, *kind, key) {
            Ok(want) => {
                compared += 1;
                let deviation = (got - want).abs() / want;
                let ok = deviation <= tol;
                if !ok {
                    failed += 1;
                }
                println!(
                    "check {study} {kind} {key}: computed {}, reference {}, deviation {:.2e} (tol {tol}): {}",
                    sig6(*got),
                    sig6(want),
                    deviation,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            Err(_) => log::debug!("no bundled reference for {study}/{kind}/{key}"),
        }
    }
    if compared == 0 {
        bail!("--check found no bundled reference values for study '{study}'");
    }
    println!("check: {compared} compared, {failed} failed");
    Ok(failed == 0)
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Six significant digits, the precision of the bundled tables.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

/// Shortest exact decimal form, for labels like mesh widths.
fn trim(x: impl Display) -> String {
    format!("{x}")
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

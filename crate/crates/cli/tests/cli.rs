//! End-to-end checks of the command-line interface: exit codes, output
//! file shapes, config-file handling, and reproducibility. All runs use
//! the coarsest mesh so the whole file stays fast.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heston-abc"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lines_of(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn price_writes_field_and_metadata() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "price",
        "--preset",
        "set1",
        "--bc",
        "mapabc2",
        "--h",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));

    let field = lines_of(&out.join("price_set1_mapabc2_h0.4.csv"));
    assert_eq!(field[0], "s,v,value");
    // 4/0.4 = 10 intervals per axis, so 11 x 11 nodes plus the header.
    assert_eq!(field.len(), 1 + 11 * 11);

    let meta = fs::read_to_string(out.join("price_set1_mapabc2_h0.4.meta.txt")).unwrap();
    for key in [
        "kappa = 4",
        "boundary = mapabc2",
        "n_s = 10",
        "steps = 5",
        "wall_seconds = ",
        "generated_unix = ",
    ] {
        assert!(meta.contains(key), "metadata missing `{key}`:\n{meta}");
    }
}

#[test]
fn zero_mesh_width_exits_2_naming_the_flag() {
    let result = run(&["price", "--preset", "set1", "--h", "0"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(
        stderr(&result).contains("--h"),
        "stderr: {}",
        stderr(&result)
    );
}

#[test]
fn unknown_preset_and_boundary_exit_2_naming_the_flag() {
    let result = run(&["table", "--preset", "set9"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("--preset"));

    let result = run(&["table", "--bc", "reflecting"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("--bc"));
}

#[test]
fn bc_all_expands_to_the_four_conditions() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "price",
        "--preset",
        "set1",
        "--bc",
        "all",
        "--h",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    for kind in ["original", "apabc", "mapabc1", "mapabc2"] {
        let path = out.join(format!("price_set1_{kind}_h0.4.csv"));
        assert!(path.exists(), "missing {}", path.display());
    }
}

#[test]
fn repeated_table_runs_write_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path| {
        vec![
            "table".to_owned(),
            "--preset".to_owned(),
            "set1".to_owned(),
            "--h".to_owned(),
            "0.4".to_owned(),
            "--bc".to_owned(),
            "original".to_owned(),
            "--out".to_owned(),
            out.to_str().unwrap().to_owned(),
        ]
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = run(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
        assert!(result.status.success(), "stderr: {}", stderr(&result));
    }
    let bytes_a = fs::read(out_a.join("table_set1.csv")).unwrap();
    let bytes_b = fs::read(out_b.join("table_set1.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn flags_win_over_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "preset = \"set2\"\nbc = \"original\"\nh = [0.4]\nout = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    let result = run(&[
        "price",
        "--config",
        cfg.to_str().unwrap(),
        "--preset",
        "set1",
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    assert!(out.join("price_set1_original_h0.4.csv").exists());
}

#[test]
fn explicit_params_in_the_config_label_outputs_custom() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        "[params]\nkappa = 4.0\neta = 0.1\nsigma = 0.1\nrho = -0.5\nstrike = 1.0\nmaturity = 2.0\n",
    )
    .unwrap();
    let result = run(&[
        "price",
        "--config",
        cfg.to_str().unwrap(),
        "--bc",
        "original",
        "--h",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    assert!(out.join("price_custom_original_h0.4.csv").exists());
}

#[test]
fn config_with_both_preset_and_params_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "preset = \"set1\"\n[params]\nkappa = 1.0\neta = 0.1\nsigma = 0.0\nrho = 0.0\nstrike = 1.0\nmaturity = 1.0\n",
    )
    .unwrap();
    let result = run(&["price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("preset"));
}

#[test]
fn invalid_explicit_params_are_rejected_before_any_run() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[params]\nkappa = -1.0\neta = 0.1\nsigma = 0.1\nrho = 0.0\nstrike = 1.0\nmaturity = 2.0\n",
    )
    .unwrap();
    let result = run(&["price", "--config", cfg.to_str().unwrap(), "--h", "0.4"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(
        stderr(&result).contains("kappa"),
        "stderr: {}",
        stderr(&result)
    );
}

#[test]
fn check_beyond_tolerance_fails_with_nonzero_exit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "table",
        "--preset",
        "set1",
        "--h",
        "0.4",
        "--bc",
        "original",
        "--check",
        "--tol-rel",
        "0.0001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(
        stdout(&result).contains("FAIL"),
        "stdout: {}",
        stdout(&result)
    );

    // The same cell passes at an honest tolerance.
    let result = run(&[
        "table",
        "--preset",
        "set1",
        "--h",
        "0.4",
        "--bc",
        "original",
        "--check",
        "--tol-rel",
        "0.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stdout: {}", stdout(&result));
}

#[test]
fn greeks_writes_three_files_per_condition_with_typed_headers() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "greeks",
        "--preset",
        "set1",
        "--h",
        "0.4",
        "--bc",
        "mapabc1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    for greek in ["delta", "gamma", "vega"] {
        let lines = lines_of(&out.join(format!("greeks_set1_mapabc1_{greek}.csv")));
        assert_eq!(lines[0], format!("v,{greek}_num,{greek}_ref,abs_error"));
        // Interior variance nodes only: 4/0.4 - 1 = 9 rows.
        assert_eq!(lines.len(), 1 + 9);
    }
}

#[test]
fn slice_emits_plot_ready_columns() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "slice",
        "--preset",
        "set1",
        "--h",
        "0.4",
        "--bc",
        "original",
        "--axis",
        "s",
        "--at",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    let lines = lines_of(&out.join("slice_set1_original_s2.csv"));
    assert_eq!(lines[0], "axis,coord,value_ref,value_num,abs_error");
    assert_eq!(lines.len(), 1 + 11);
    assert!(lines[1].starts_with("s,"));
}

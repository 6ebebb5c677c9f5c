use std::path::Path;
use std::process::{Command, Output};

use nsch::checkpoint::{read_checkpoint, write_checkpoint};
use nsch::diagnostics::Baseline;
use nsch::presets::random_state;
use nsch::{GridField, Model, Params, Spectral, SpectralLayout};

const SMALL: &str = "\
# small spinodal run
n_grid = 16
nu_lower = 0.5
nu_upper = 1.5
delta = 0.1
t_end = 0.002
output_every = 2
";

fn nsch(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsch"));
    cmd.current_dir(dir).args(args).env_remove("NSCH_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.txt"), config).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_csv_config_and_checkpoints() {
    let dir = setup(SMALL);
    let o = nsch(dir.path(), &["run", "--config", "c.txt", "--out", "out", "--checkpoint-every", "4"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), nsch::monitor::csv_header());
    assert_eq!(lines.count(), 6);
    assert!(out.join("checkpoint_00000004.nsch").exists());
    assert!(out.join("checkpoint_00000008.nsch").exists());
    let ck = read_checkpoint(&out.join("final.nsch")).unwrap();
    assert_eq!(ck.steps, 10);
    assert!((ck.state.t - 0.002).abs() < 1e-15);
    let cfg = nsch::config::parse_config(&std::fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!(cfg.n_grid, 16);
    assert_eq!(cfg.checkpoint_every, 4);
}

#[test]
fn zero_step_run_has_header_and_initial_row() {
    let dir = setup("n_grid = 16\nt_end = 0\n");
    let o = nsch(dir.path(), &["run", "--config", "c.txt", "--out", "z"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("z/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0e0,"));
}

#[test]
fn runs_are_byte_identical_across_repeats_and_thread_counts() {
    let dir = setup(SMALL);
    let mut csvs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let o = nsch(
            dir.path(),
            &["run", "--config", "c.txt", "--out", name, "--seed", "11"],
            &[("NSCH_THREADS", threads)],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(std::fs::read(dir.path().join(name).join("diagnostics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn seed_changes_the_initial_condition() {
    let dir = setup(SMALL);
    for (name, seed) in [("a", "1"), ("b", "2")] {
        assert!(nsch(dir.path(), &["run", "--config", "c.txt", "--out", name, "--seed", seed], &[])
            .status
            .success());
    }
    let read = |n: &str| std::fs::read(dir.path().join(n).join("diagnostics.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn resume_continues_where_the_checkpoint_left_off() {
    let dir = setup(SMALL);
    assert!(nsch(dir.path(), &["run", "--config", "c.txt", "--out", "full", "--checkpoint-every", "5"], &[])
        .status
        .success());
    let o = nsch(
        dir.path(),
        &["run", "--config", "c.txt", "--out", "resumed", "--resume", "full/checkpoint_00000005.nsch"],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let full = read_checkpoint(&dir.path().join("full/final.nsch")).unwrap();
    let resumed = read_checkpoint(&dir.path().join("resumed/final.nsch")).unwrap();
    assert_eq!(resumed.steps, full.steps);
    assert_eq!(resumed.baseline, full.baseline);
    assert_eq!(resumed.state.t, full.state.t);
    // Only the warm start of the mass solves differs.
    let mut d = resumed.state.b.clone();
    d.axpy(-1.0, &full.state.b);
    assert!(d.norm() <= 1e-9 * full.state.b.norm());
}

#[test]
fn config_errors_exit_2_and_cite_the_line() {
    let dir = setup("n_grid = 16\np = 0.5\n");
    let o = nsch(dir.path(), &["run", "--config", "c.txt"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let dir = setup("colour = red\n");
    let o = nsch(dir.path(), &["run", "--config", "c.txt"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));
    let o = nsch(dir.path(), &["verify"], &[("NSCH_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_exit_3_and_bad_checkpoints_exit_4() {
    let dir = setup(SMALL);
    let o = nsch(dir.path(), &["run", "--config", "absent.txt"], &[]);
    assert_eq!(o.status.code(), Some(3));

    assert!(nsch(dir.path(), &["run", "--config", "c.txt", "--out", "o"], &[]).status.success());
    let ck = dir.path().join("o/final.nsch");
    let bytes = std::fs::read(&ck).unwrap();
    std::fs::write(dir.path().join("cut.nsch"), &bytes[..bytes.len() / 2]).unwrap();
    let o = nsch(dir.path(), &["run", "--config", "c.txt", "--resume", "cut.nsch"], &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    std::fs::write(dir.path().join("other.txt"), SMALL.replace("n_grid = 16", "n_grid = 20")).unwrap();
    let o = nsch(dir.path(), &["run", "--config", "other.txt", "--resume", "o/final.nsch"], &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("n_grid"), "{}", stderr(&o));
}

#[test]
fn pressure_of_a_rest_state_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(Spectral::new(SpectralLayout::new(2, 16, 5).unwrap()), Params::default());
    let mut s = random_state(&model, 3, (0.5, 2.0), 0.0, 0.0).unwrap();
    s.b = model.spectral().forward(&GridField::constant(model.layout().len(), -1.0)).unwrap();
    s.c = model.chemical_potential_solve(&s.b, &s.rho.values, None).unwrap();
    let base = Baseline::of(&model, &s);
    let path = dir.path().join("rest.nsch");
    write_checkpoint(&path, model.layout(), model.params(), &s, &base, 0).unwrap();
    let o = nsch(dir.path(), &["pressure", "rest.nsch", "--out", "p"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("P is identically zero"), "{}", stdout(&o));
    let field = std::fs::read_to_string(dir.path().join("p/pressure.txt")).unwrap();
    assert_eq!(field.lines().count(), 1 + 256);
    assert!(field.lines().skip(1).all(|l| l.ends_with(" 0e0")));
}

#[test]
fn plotdata_selects_columns() {
    let dir = setup(SMALL);
    assert!(nsch(dir.path(), &["run", "--config", "c.txt", "--out", "o"], &[]).status.success());
    let o = nsch(
        dir.path(),
        &["plotdata", "o/diagnostics.csv", "--columns", "t,E_total", "--output", "e.dat"],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("e.dat")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split_whitespace().collect::<Vec<_>>(), ["#", "t", "E_total"]);
    assert!(lines.all(|l| l.split_whitespace().count() == 2));
    let o = nsch(dir.path(), &["plotdata", "o/diagnostics.csv", "--columns", "nope"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_on_a_fresh_build() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsch(dir.path(), &["verify"], &[]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn converge_reports_second_order_time_and_spectral_space_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsch(dir.path(), &["converge", "--dt-levels", "3"], &[]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let orders: Vec<f64> = out
        .lines()
        .filter_map(|l| l.split("order ").nth(1))
        .map(|v| v.trim().parse().unwrap())
        .collect();
    assert!(!orders.is_empty());
    assert!(orders.iter().all(|o| *o >= 1.9), "{out}");
    assert!(out.contains("spatial drop ok"));
}

#[test]
fn oracle_sweep_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsch(dir.path(), &["oracle", "--samples", "1"], &[]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
}

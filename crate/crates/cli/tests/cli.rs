use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sol_core::config::{parse_config, preset, Benchmark};
use sol_core::{run_episode, StepRecord};
use sol_core::trace::read_records;

fn sol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sol")).args(args).output().expect("sol binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn svgs(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count()
}

#[test]
fn dump_defaults_round_trips_through_the_config_parser() {
    for b in Benchmark::ALL {
        let out = sol(&["dump-defaults", b.name()]);
        assert!(out.status.success(), "{b}");
        let text = String::from_utf8(out.stdout).unwrap();
        let loaded = parse_config(&text).unwrap();
        assert_eq!(loaded.benchmark, b);
        assert_eq!(loaded.config, preset(b), "{b}");
    }
}

#[test]
fn dump_defaults_rejects_unknown_benchmarks() {
    let out = sol(&["dump-defaults", "acrobot"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("acrobot"));
}

#[test]
fn pendulum_run_writes_trace_summary_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "benchmark = \"pendulum\"\n");
    let out_dir = tmp.path().join("out");
    let out = sol(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let seed_dir = out_dir.join("pendulum_seed0");
    let records = read_records(fs::File::open(seed_dir.join("trace.csv")).unwrap()).unwrap();
    let direct = run_episode(&preset(Benchmark::Pendulum)).unwrap();
    let bits = |rs: &[StepRecord]| {
        rs.iter()
            .flat_map(|r| [r.t, r.value, r.pred_err, r.cost].into_iter().chain(r.x.clone()).chain(r.u.clone()))
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&records), bits(&direct.records));
    assert!(fs::read_to_string(seed_dir.join("p.csv")).unwrap().starts_with("t,p_0_0,"));

    let summary = fs::read_to_string(seed_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("termination: success"));
    assert!(summary.contains("dx2/dt = "));
    assert!(summary.contains("V(x) = "));
    assert_eq!(svgs(&seed_dir), 5);
    assert!(fs::read_to_string(out_dir.join("aggregate.txt")).unwrap().contains("successes: 1/1"));
}

#[test]
fn lorenz_batch_writes_one_trace_per_seed_and_a_tally() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "benchmark = \"lorenz\"\n");
    let out_dir = tmp.path().join("out");
    let out = sol(&["run", &cfg, "--seeds", "0,1,2,3,4", "--out", out_dir.to_str().unwrap(), "--no-plots"]);
    assert!(out.status.success());
    for seed in 0..5 {
        let dir = out_dir.join(format!("lorenz_seed{seed}"));
        assert!(dir.join("trace.csv").is_file());
        assert_eq!(svgs(&dir), 0);
    }
    let tally = fs::read_to_string(out_dir.join("aggregate.txt")).unwrap();
    assert_eq!(tally.lines().count(), 6);
    assert!(tally.lines().last().unwrap().starts_with("successes: "));
    assert!(tally.lines().last().unwrap().ends_with("/5"));
}

#[test]
fn divergence_exits_nonzero_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "benchmark = \"pendulum\"\ncost.q = [[1e12, 0.0], [0.0, 1e12]]\n");
    let out_dir = tmp.path().join("out");
    let out = sol(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--no-plots"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let summary = fs::read_to_string(out_dir.join("pendulum_seed0/summary.txt")).unwrap();
    assert!(summary.contains("termination: divergence"));
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "benchmark = \"pendulum\"\nfoo = 1\n");
    let out = sol(&["run", &cfg, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn oracle_check_passes() {
    let out = sol(&["oracle-check"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("oracle check passed"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use amari_flow::config::{parse_config, ConfigError, ExperimentConfig};
use amari_flow::energy::GainSpec;
use amari_flow::operator::KernelOperator;
use amari_flow::sde::{em_simulate_full, TrajectoryTable};
use proptest::prelude::*;
use tempfile::TempDir;

const SMALL: &str = "\
[grid]
n = 32

[sim]
t_end = 0.2
epsilon = 0.3
u0 = modes

[gibbs]
mcmc_steps = 20000
burn_in = 2000
sde_t_end = 50
sde_burn_in = 5
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amari-flow")).args(args).output().expect("binary runs")
}

fn with_config(dir: &TempDir, text: &str) -> String {
    let p = dir.path().join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn reason(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("reason line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn every_subcommand_writes_its_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, SMALL);
    let cases: [(&str, &[&str]); 7] = [
        ("check-kernel", &["kernel-report.json"]),
        ("spectrum", &["spectrum.csv"]),
        ("simulate", &["trajectory.csv"]),
        ("galerkin-compare", &["convergence.csv"]),
        ("energy-trace", &["energy.csv"]),
        ("doss-sussmann-compare", &["ds-compare.csv"]),
        ("gibbs-compare", &["samples.csv", "moments.jsonl"]),
    ];
    for (sub, expected) in cases {
        let out_dir = dir.path().join(sub);
        let out = run(&[sub, "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "4"]);
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        for f in expected {
            assert!(out_dir.join(f).is_file(), "{sub} did not write {f}");
        }
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("check-kernel/kernel-report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "NonnegativeDefinite");
}

#[test]
fn fig1_writes_trajectory_and_switches() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("f");
    let out = run(&["fig1", "--out", out_dir.to_str().unwrap(), "--override", "sim.t_end=20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let switches = fs::read_to_string(out_dir.join("switches.csv")).unwrap();
    assert!(switches.lines().next().is_some());
    let table = TrajectoryTable::read_csv(fs::read(out_dir.join("fig1-trajectory.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(table.states[0].len(), 400);
    assert!(table.states[0].iter().all(|v| *v == 0.8));
}

#[test]
fn indefinite_kernel_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(
        &dir,
        "[kernel]\nfamily = mexican-hat-gauss\na = 0.9\ns = 3\n\n[grid]\na = -10\nb = 10\nn = 128\nboundary = periodic\n",
    );
    let out = run(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let r = reason(&out);
    assert_eq!(r["exit"], 2);
    assert_eq!(r["kind"], "NotNonnegative");

    // classification alone is not a failure
    let out = run(&["check-kernel", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (vec!["simulate".into(), "--out".into(), o.into(), "--override".into(), "sim.nope=1".into()], "UnknownKey"),
        (vec!["simulate".into(), "--out".into(), o.into(), "--override".into(), "sim.alpha=-1".into()], "RangeError"),
        (vec!["simulate".into(), "--out".into(), o.into(), "--override".into(), "sim.dt=abc".into()], "ParseError"),
        (
            vec!["galerkin-compare".into(), "--out".into(), o.into(), "--override".into(), "galerkin.modes=500".into()],
            "RankExceeded",
        ),
        (vec!["simulate".into(), "--config".into(), "/nonexistent/x.cfg".into(), "--out".into(), o.into()], "Io"),
    ];
    for (args, kind) in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&refs);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert_eq!(reason(&out)["kind"], kind, "{args:?}");
    }
    assert_eq!(run(&["no-such-subcommand"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, SMALL);
    for sub in ["simulate", "doss-sussmann-compare", "gibbs-compare"] {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        for d in [&a, &b] {
            assert_eq!(
                run(&[sub, "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "17"]).status.code(),
                Some(0)
            );
        }
        assert_eq!(files(&a), files(&b), "{sub}");
    }
}

#[test]
fn trajectory_csv_matches_library_run() {
    let dir = TempDir::new().unwrap();
    let cfg_path = with_config(&dir, SMALL);
    let out_dir = dir.path().join("o");
    assert_eq!(run(&["simulate", "--config", &cfg_path, "--out", out_dir.to_str().unwrap()]).status.code(), Some(0));
    let table = TrajectoryTable::read_csv(fs::read(out_dir.join("trajectory.csv")).unwrap().as_slice()).unwrap();

    let cfg = parse_config(SMALL).unwrap();
    let op = KernelOperator::with_mode(cfg.kernel.spec().unwrap(), cfg.grid.grid().unwrap(), cfg.grid.apply);
    let dec = op.decompose(cfg.grid.rel_tol, cfg.grid.neg_tol).unwrap();
    let u0 = cfg.initial_field(*dec.grid(), &dec).unwrap();
    assert_eq!(cfg.gain.spec(), GainSpec::Sigmoid);
    let traj = em_simulate_full(&op, &dec, cfg.gain.spec(), &cfg.noise_spec(), &cfg.sim_config(u0)).unwrap();
    assert_eq!(table, traj.to_table());
}

#[test]
fn config_errors_carry_locations() {
    match parse_config("[sim]\nalpha = 1\nbogus = 2\n") {
        Err(ConfigError::UnknownKey { loc, .. }) => assert_eq!(loc.line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config("[nowhere]\n"), Err(ConfigError::Parse { .. })));
    assert!(matches!(parse_config("[sim]\nalpha 1\n"), Err(ConfigError::Parse { .. })));
    assert!(matches!(parse_config("[sim]\nalpha = 1\nalpha = 2\n"), Err(ConfigError::Parse { .. })));
    assert!(matches!(parse_config("[sim]\ndt = 3\n"), Err(ConfigError::Invalid(_))));
}

fn override_strategy() -> impl Strategy<Value = Vec<String>> {
    let one = prop_oneof![
        (0.1f64..5.0).prop_map(|v| format!("sim.alpha={v}")),
        (0.0f64..2.0).prop_map(|v| format!("sim.epsilon={v}")),
        (1e-4f64..0.05).prop_map(|v| format!("sim.dt={v}")),
        (0.5f64..20.0).prop_map(|v| format!("sim.t_end={v}")),
        any::<u64>().prop_map(|v| format!("sim.seed={v}")),
        (1usize..50).prop_map(|v| format!("sim.record_every={v}")),
        (0.1f64..4.0).prop_map(|v| format!("kernel.width={v}")),
        (0.1f64..4.0).prop_map(|v| format!("kernel.scale={v}")),
        (8usize..300).prop_map(|v| format!("grid.n={v}")),
        prop_oneof![Just("periodic"), Just("truncated")].prop_map(|v| format!("grid.boundary={v}")),
        prop_oneof![Just("sigmoid"), Just("tanh"), Just("zero")].prop_map(|v| format!("gain.kind={v}")),
        prop_oneof![Just("white"), Just("spectral")].prop_map(|v| format!("noise.mode={v}")),
        prop_oneof![Just("b-eq-k"), Just("b-sq-eq-k")].prop_map(|v| format!("noise.rule={v}")),
        (1usize..6).prop_map(|v| format!("gibbs.modes={v}")),
        "[a-z]{0,8}".prop_map(|v| format!("output.prefix={v}")),
    ];
    prop::collection::vec(one, 0..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_serialize_parse_is_identity(overrides in override_strategy()) {
        let mut cfg = ExperimentConfig::default();
        for o in &overrides {
            cfg.apply_override(o).unwrap();
        }
        prop_assume!(cfg.validate().is_ok());
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), text);
    }
}

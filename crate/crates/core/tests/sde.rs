use amari_flow::energy::{EnergyModel, GainSpec};
use amari_flow::grid::{BoundaryMode, Field, Grid};
use amari_flow::kernel::KernelSpec;
use amari_flow::operator::{KernelOperator, SpectralDecomposition, DEFAULT_NEG_TOL, DEFAULT_REL_TOL};
use amari_flow::sde::{
    doss_sussmann_simulate, em_simulate_full, ensemble, galerkin_simulate, invariance_monitor, NoiseRule, NoiseSpec,
    SimConfig, StateKind, TrajectoryRecord, TrajectoryTable,
};
use amari_flow::Error;
use proptest::prelude::*;

fn setup() -> (KernelOperator, SpectralDecomposition) {
    let op = KernelOperator::new(
        KernelSpec::gaussian(1.0).unwrap(),
        Grid::new(-5.0, 5.0, 48, BoundaryMode::Truncated).unwrap(),
    );
    let dec = op.decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL).unwrap();
    (op, dec)
}

fn u0(dec: &SpectralDecomposition) -> Field {
    dec.reconstruct(&[0.8, -0.4, 0.2]).unwrap()
}

fn all_integrators(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    cfg: &SimConfig,
    seed: u64,
) -> Vec<TrajectoryRecord> {
    let spectral = NoiseSpec::spectral(NoiseRule::BEqK, seed);
    vec![
        em_simulate_full(op, dec, gain, &NoiseSpec::white(seed), cfg).unwrap(),
        em_simulate_full(op, dec, gain, &spectral, cfg).unwrap(),
        galerkin_simulate(dec, gain, &spectral, cfg, dec.rank()).unwrap(),
        doss_sussmann_simulate(op, dec, gain, &spectral, cfg, 4).unwrap(),
    ]
}

#[test]
fn drift_equals_negative_gradient_along_trajectories() {
    let (op, dec) = setup();
    let cfg = SimConfig::new(1.0, 0.3, 0.01, 0.5, u0(&dec)).diagnostics(false);
    for gain in [GainSpec::Sigmoid, GainSpec::TanhSigmoid, GainSpec::Constant(0.4)] {
        let model = EnergyModel::new(&op, &dec, gain, cfg.alpha);
        for traj in all_integrators(&op, &dec, gain, &cfg, 5).iter().skip(1) {
            for s in &traj.states {
                let u = match traj.kind {
                    StateKind::Grid => s.clone(),
                    StateKind::Modes => dec.reconstruct_raw(s),
                };
                let grad = model.grad_theta(&Field::new(*dec.grid(), u.clone()).unwrap()).unwrap();
                for (d, g) in model.drift_raw(&u).iter().zip(grad.values()) {
                    assert!((d + g).abs() <= 1e-12 * (1.0 + g.abs()));
                }
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let (op, dec) = setup();
    let cfg = SimConfig::new(1.0, 0.5, 0.01, 0.5, u0(&dec));
    let a = all_integrators(&op, &dec, GainSpec::Sigmoid, &cfg, 9);
    let b = all_integrators(&op, &dec, GainSpec::Sigmoid, &cfg, 9);
    let c = all_integrators(&op, &dec, GainSpec::Sigmoid, &cfg, 10);
    for ((x, y), z) in a.iter().zip(&b).zip(&c) {
        let bits = |t: &TrajectoryRecord| t.states.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x), bits(y));
        assert_ne!(bits(x), bits(z));
    }
}

#[test]
fn doubling_epsilon_doubles_noise_contribution() {
    let (op, dec) = setup();
    let start = u0(&dec);
    for noise in
        [NoiseSpec::white(3), NoiseSpec::spectral(NoiseRule::BEqK, 3), NoiseSpec::spectral(NoiseRule::BSqEqK, 3)]
    {
        let step = |eps: f64| {
            let cfg = SimConfig::new(1.0, eps, 0.01, 0.01, start.clone()).diagnostics(false);
            em_simulate_full(&op, &dec, GainSpec::Sigmoid, &noise, &cfg).unwrap().final_state().to_vec()
        };
        let (s0, s1, s2) = (step(0.0), step(0.25), step(0.5));
        for ((a, b), c) in s0.iter().zip(&s1).zip(&s2) {
            let (d1, d2) = (b - a, c - a);
            assert!((d2 - 2.0 * d1).abs() <= 1e-13, "{d1} {d2}");
        }
    }
}

#[test]
fn ou_second_moment_matches_closed_form() {
    let (_, dec) = setup();
    let (alpha, eps, t) = (1.0, 0.4, 1.0);
    let cfg = SimConfig::new(alpha, eps, 0.01, t, Field::zeros(*dec.grid())).diagnostics(false).record_every(100);
    let paths = 2000;
    let finals = ensemble(paths, |m| {
        let noise = NoiseSpec::spectral(NoiseRule::BEqK, 21).for_member(m);
        Ok(galerkin_simulate(&dec, GainSpec::Zero, &noise, &cfg, 3)?.final_state().to_vec())
    })
    .unwrap();
    for i in 0..3 {
        let l = dec.lambda(i);
        let want = l * l * eps * eps * (1.0 - (-2.0 * alpha * t).exp()) / (2.0 * alpha);
        let sq: Vec<f64> = finals.iter().map(|c| c[i] * c[i]).collect();
        let mean = sq.iter().sum::<f64>() / paths as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
        let se = (var / paths as f64).sqrt();
        assert!((mean - want).abs() <= 3.0 * se, "mode {i}: {mean} vs {want} (se {se})");
    }
}

#[test]
fn cubic_gain_requires_opt_in_and_blow_up_is_caught() {
    let (op, dec) = setup();
    let big = dec.reconstruct(&[40.0]).unwrap();
    let cfg = SimConfig::new(1.0, 0.0, 0.01, 5.0, big);
    let noise = NoiseSpec::spectral(NoiseRule::BEqK, 0);
    assert_eq!(em_simulate_full(&op, &dec, GainSpec::Cubic, &noise, &cfg).unwrap_err(), Error::NonLipschitzGain);
    let cfg = cfg.allow_non_lipschitz(true);
    assert!(matches!(em_simulate_full(&op, &dec, GainSpec::Cubic, &noise, &cfg), Err(Error::BlowUp { .. })));
}

#[test]
fn white_noise_leaves_s_for_smooth_kernels() {
    let (op, dec) = setup();
    let cfg = SimConfig::new(1.0, 0.5, 0.01, 0.1, u0(&dec)).diagnostics(false);
    let traj = em_simulate_full(&op, &dec, GainSpec::Sigmoid, &NoiseSpec::white(1), &cfg).unwrap();
    assert!(matches!(invariance_monitor(&dec, &traj, cfg.membership_tol), Err(Error::NotInS { .. })));
    let traj = em_simulate_full(&op, &dec, GainSpec::Sigmoid, &NoiseSpec::spectral(NoiseRule::BEqK, 1), &cfg).unwrap();
    let (sup, per) = invariance_monitor(&dec, &traj, cfg.membership_tol).unwrap();
    assert_eq!(per.len(), traj.len());
    assert!(sup >= per[0]);
}

#[test]
fn config_is_validated() {
    let (op, dec) = setup();
    let noise = NoiseSpec::spectral(NoiseRule::BEqK, 0);
    let bad = [
        SimConfig::new(0.0, 0.1, 0.01, 1.0, u0(&dec)),
        SimConfig::new(1.0, -0.1, 0.01, 1.0, u0(&dec)),
        SimConfig::new(1.0, 0.1, 2.0, 10.0, u0(&dec)),
        SimConfig::new(1.0, 0.1, 0.01, 0.001, u0(&dec)),
        SimConfig::new(1.0, 0.1, 0.01, 1.0, u0(&dec)).record_every(0),
    ];
    for cfg in bad {
        assert!(matches!(
            em_simulate_full(&op, &dec, GainSpec::Sigmoid, &noise, &cfg),
            Err(Error::InvalidParameter(_))
        ));
    }
    let cfg = SimConfig::new(1.0, 0.1, 0.01, 1.0, u0(&dec));
    assert!(matches!(
        galerkin_simulate(&dec, GainSpec::Sigmoid, &noise, &cfg, dec.rank() + 1),
        Err(Error::RankExceeded { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectory_csv_round_trips(seed in any::<u64>(), eps in 0.0f64..1.0, every in 1usize..7, which in 0usize..4) {
        let (op, dec) = setup();
        let cfg = SimConfig::new(1.0, eps, 0.01, 0.2, u0(&dec)).record_every(every);
        let traj = all_integrators(&op, &dec, GainSpec::TanhSigmoid, &cfg, seed).swap_remove(which);
        traj.check().unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = TrajectoryTable::read_csv(buf.as_slice()).unwrap();
        let table = traj.to_table();
        prop_assert_eq!(back.kind, table.kind);
        prop_assert_eq!(&back.times, &table.times);
        prop_assert_eq!(&back.states, &table.states);
        prop_assert_eq!(&back.diagnostics.norm_h, &table.diagnostics.norm_h);
        prop_assert_eq!(&back.diagnostics.theta, &table.diagnostics.theta);
        prop_assert_eq!(&back.diagnostics.norm_hm1, &table.diagnostics.norm_hm1);
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*traj.times.last().unwrap(), 0.2);
    }
}

//! The metastability preset: cubic gain, narrow normalized Gaussian kernel,
//! space-time white noise, constant initial state.

use crate::config::{ExperimentConfig, GainKind, InitialKind, KernelKind, NoiseKind};
use crate::error::{Error, Result};
use crate::grid::BoundaryMode;
use crate::kernel::KernelSpec;
use crate::operator::KernelOperator;
use crate::sde::{detect_switches, em_simulate_full, SwitchEvent, TrajectoryRecord};

pub const SIGMA: f64 = 0.05;

/// Reduced-domain defaults; `grid.a = -80`, `grid.b = 80`, `grid.n = 1600`
/// recover the full domain.
pub fn preset() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.kernel.family = KernelKind::Gaussian;
    c.kernel.width = SIGMA;
    c.kernel.normalize = true;
    c.grid.a = -20.0;
    c.grid.b = 20.0;
    c.grid.n = 400;
    c.grid.boundary = BoundaryMode::Periodic;
    c.gain.kind = GainKind::Cubic;
    c.noise.mode = NoiseKind::White;
    c.sim.alpha = 0.1;
    c.sim.epsilon = 0.5;
    c.sim.dt = 0.01;
    c.sim.t_end = 2500.0;
    c.sim.record_every = 100;
    c.sim.allow_non_lipschitz = true;
    c.sim.u0 = InitialKind::Constant;
    c.sim.u0_value = 0.8;
    c.output.diagnostics = false;
    c
}

/// `h Σⱼ J(x₀ − xⱼ)`: the factor `K` applies to a constant field.
pub fn row_sum(op: &KernelOperator) -> f64 {
    let g = op.grid();
    (0..g.len()).map(|j| op.spec().eval(g.offset(0, j))).sum::<f64>() * g.spacing()
}

/// Roots of `αu = c f(u)` for a gain `f` and constant `c`, ascending.
///
/// Sign changes are bracketed on a uniform scan of `[-lim, lim]` and refined
/// by bisection.
pub fn homogeneous_equilibria(f: impl Fn(f64) -> f64, alpha: f64, c: f64, lim: f64) -> Vec<f64> {
    let g = |u: f64| c * f(u) - alpha * u;
    let cells = 20_000;
    let mut roots = Vec::new();
    let mut x0 = -lim;
    let mut g0 = g(x0);
    for k in 1..=cells {
        let x1 = -lim + 2.0 * lim * k as f64 / cells as f64;
        let g1 = g(x1);
        if g0 == 0.0 {
            roots.push(x0);
        } else if g0 * g1 < 0.0 {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(lo) * g(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}

/// Midpoints between the outer equilibria and the middle one.
pub fn switch_thresholds(equilibria: &[f64]) -> Result<(f64, f64)> {
    if equilibria.len() != 3 {
        return Err(Error::InvalidParameter(format!("expected 3 equilibria, found {}", equilibria.len())));
    }
    Ok((0.5 * (equilibria[0] + equilibria[1]), 0.5 * (equilibria[1] + equilibria[2])))
}

#[derive(Debug, Clone)]
pub struct Fig1Run {
    pub trajectory: TrajectoryRecord,
    pub equilibria: Vec<f64>,
    pub thresholds: (f64, f64),
    pub events: Vec<SwitchEvent>,
    pub row_sum: f64,
}

/// Runs `cfg` (normally [`preset`] plus overrides) and detects switches of
/// the spatial mean between the outer homogeneous equilibria.
pub fn run(cfg: &ExperimentConfig) -> Result<Fig1Run> {
    let spec: KernelSpec = cfg.kernel.spec()?;
    let grid = cfg.grid.grid()?;
    let op = KernelOperator::with_mode(spec, grid, cfg.grid.apply);
    let dec = op.decompose(cfg.grid.rel_tol, cfg.grid.neg_tol)?;
    cfg.validate_rank(dec.rank())?;
    let gain = cfg.gain.spec();
    let c = row_sum(&op);
    let equilibria = homogeneous_equilibria(|u| gain.f(u), cfg.sim.alpha, c, 3.0);
    let thresholds = switch_thresholds(&equilibria)?;
    let u0 = cfg.initial_field(grid, &dec)?;
    let trajectory = em_simulate_full(&op, &dec, gain, &cfg.noise_spec(), &cfg.sim_config(u0))?;
    let events = detect_switches(&trajectory, thresholds.0, thresholds.1)?;
    Ok(Fig1Run { trajectory, equilibria, thresholds, events, row_sum: c })
}

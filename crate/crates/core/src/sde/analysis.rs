use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::GainSpec;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{KernelOperator, SpectralDecomposition};

use super::integrate::{doss_sussmann_with_path, em_simulate_full, em_simulate_with_source, galerkin_simulate};
use super::noise::{sample_noise_increments, NoiseTarget};
use super::record::{StateKind, TrajectoryRecord};
use super::{NoiseSpec, SimConfig};

/// `sup_t ‖U_t‖²₋₁` and the per-snapshot values.
pub fn invariance_monitor(
    dec: &SpectralDecomposition,
    traj: &TrajectoryRecord,
    membership_tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut per_time = Vec::with_capacity(traj.len());
    for s in &traj.states {
        let v = match traj.kind {
            StateKind::Modes => {
                if s.len() > dec.rank() {
                    return Err(Error::RankExceeded { requested: s.len(), rank: dec.rank() });
                }
                dec.hminus1_sq_from_coeffs(s)
            }
            StateKind::Grid => {
                let c = dec.coefficients_in_s(&Field::new(*dec.grid(), s.clone())?, membership_tol)?;
                dec.hminus1_sq_from_coeffs(&c)
            }
        };
        per_time.push(v);
    }
    let sup = per_time.iter().copied().fold(0.0, f64::max);
    Ok((sup, per_time))
}

/// Sup-time H-norm distance between Galerkin runs and the full-grid
/// reference, all driven by the same spectral noise realization.
pub fn convergence_table(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    n_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if noise.rule().is_none() {
        return Err(Error::InvalidParameter("convergence study needs spectral-diagonal noise".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n > dec.rank()) {
        return Err(Error::RankExceeded { requested: n, rank: dec.rank() });
    }
    let cfg = cfg.clone().diagnostics(false);
    let reference = em_simulate_full(op, dec, gain, noise, &cfg)?;
    let grid = *dec.grid();
    n_list
        .iter()
        .map(|&n| {
            let gal = galerkin_simulate(dec, gain, noise, &cfg, n)?;
            let sup = reference
                .states
                .iter()
                .zip(&gal.states)
                .map(|(u, c)| {
                    let un = dec.reconstruct_raw(c);
                    let d: Vec<f64> = u.iter().zip(&un).map(|(a, b)| a - b).collect();
                    grid.norm_raw(&d)
                })
                .fold(0.0, f64::max);
            Ok((n, sup))
        })
        .collect()
}

/// Pathwise integrator against Euler–Maruyama on one noise path.
///
/// The path is sampled once at `cfg.dt / substeps`. Level `j` uses step
/// `cfg.dt / 2ʲ` for `j = 0..=halvings`, and both integrators consume the
/// same path. Returns `(Δt, sup_k ‖V_k − U_k‖_H)` per level.
pub fn doss_sussmann_study(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    substeps: usize,
    halvings: usize,
) -> Result<Vec<(f64, f64)>> {
    if noise.rule().is_none() {
        return Err(Error::InvalidParameter("pathwise comparison needs spectral-diagonal noise".into()));
    }
    if substeps == 0 || !substeps.is_multiple_of(1 << halvings) {
        return Err(Error::InvalidParameter(format!(
            "substeps = {substeps} must be a positive multiple of 2^halvings = {}",
            1usize << halvings
        )));
    }
    let steps = cfg.validate()?;
    let fine_dt = cfg.dt / substeps as f64;
    let path = sample_noise_increments(noise.seed, NoiseTarget::Modes { rank: dec.rank() }, fine_dt, steps * substeps)?;
    let grid = *dec.grid();
    (0..=halvings)
        .map(|j| {
            let m = substeps >> j;
            let mut level = cfg.clone().diagnostics(false).record_every(1);
            level.dt = fine_dt * m as f64;
            let em = em_simulate_with_source(op, dec, gain, &noise.mode, &mut path.replay(m), noise.seed, &level)?;
            let ds = doss_sussmann_with_path(op, dec, gain, &noise.mode, &path, noise.seed, &level)?;
            let sup = em
                .states
                .iter()
                .zip(&ds.states)
                .map(|(u, v)| {
                    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
                    grid.norm_raw(&d)
                })
                .fold(0.0, f64::max);
            Ok((level.dt, sup))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub direction: Direction,
}

/// Hysteresis detector on a scalar series: an event fires when the series
/// moves from above `upper` to below `lower`, or the reverse.
pub fn detect_switches_in_means(times: &[f64], means: &[f64], lower: f64, upper: f64) -> Result<Vec<SwitchEvent>> {
    if !(lower < upper) {
        return Err(Error::InvalidParameter(format!("need lower < upper, got {lower} >= {upper}")));
    }
    let mut state: Option<Direction> = None;
    let mut events = Vec::new();
    for (&t, &m) in times.iter().zip(means) {
        let now = if m > upper {
            Some(Direction::Up)
        } else if m < lower {
            Some(Direction::Down)
        } else {
            None
        };
        if let Some(d) = now {
            if state.is_some_and(|s| s != d) {
                events.push(SwitchEvent { time: t, direction: d });
            }
            state = Some(d);
        }
    }
    Ok(events)
}

/// [`detect_switches_in_means`] on the spatial mean of a grid trajectory.
pub fn detect_switches(traj: &TrajectoryRecord, lower: f64, upper: f64) -> Result<Vec<SwitchEvent>> {
    if traj.kind != StateKind::Grid {
        return Err(Error::InvalidParameter("switch detection needs grid states".into()));
    }
    let means: Vec<f64> = traj.states.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    detect_switches_in_means(&traj.times, &means, lower, upper)
}

/// Runs `members` independent jobs in parallel; results come back in member order.
pub fn ensemble<T, F>(members: u32, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u32) -> Result<T> + Sync + Send,
{
    (0..members).into_par_iter().map(job).collect()
}

use crate::energy::{phi_raw, theta_coeffs, EnergyModel, GainSpec};
use crate::error::{Error, Result};
use crate::operator::{KernelOperator, SpectralDecomposition};

use super::noise::{sample_noise_increments, IncrementSource, NoiseMode, NoisePath, NoiseStream, NoiseTarget};
use super::record::{Diagnostics, Integrator, StateKind, TrajectoryRecord};
use super::SimConfig;

/// How increments enter the grid state.
enum Kick {
    Grid,
    Modes(Vec<f64>),
}

fn kick_for(mode: &NoiseMode, dec: &SpectralDecomposition) -> Result<(Kick, NoiseTarget)> {
    match mode {
        NoiseMode::WhiteOnGrid => {
            let g = dec.grid();
            Ok((Kick::Grid, NoiseTarget::Grid { nodes: g.len(), spacing: g.spacing() }))
        }
        NoiseMode::SpectralDiagonal(rule) => {
            let b = rule.coefficients(dec.lambdas())?;
            Ok((Kick::Modes(b), NoiseTarget::Modes { rank: dec.rank() }))
        }
    }
}

fn mode_coefficients(mode: &NoiseMode, dec: &SpectralDecomposition) -> Result<Vec<f64>> {
    match mode {
        NoiseMode::SpectralDiagonal(rule) => rule.coefficients(dec.lambdas()),
        NoiseMode::WhiteOnGrid => Err(Error::InvalidParameter("this integrator needs spectral-diagonal noise".into())),
    }
}

fn check_gain(gain: &GainSpec, cfg: &SimConfig) -> Result<()> {
    if !gain.is_lipschitz() && !cfg.allow_non_lipschitz {
        return Err(Error::NonLipschitzGain);
    }
    Ok(())
}

fn check_source(source: &dyn IncrementSource, dim: usize) -> Result<()> {
    if source.dim() != dim {
        return Err(Error::DimensionMismatch { left: source.dim(), right: dim });
    }
    Ok(())
}

fn blow_up(values: &[f64], clamp: f64, step: usize, dt: f64) -> Result<()> {
    for &v in values {
        if !(v.abs() <= clamp) {
            return Err(Error::BlowUp { step, time: step as f64 * dt, value: v });
        }
    }
    Ok(())
}

fn should_record(k: usize, steps: usize, every: usize) -> bool {
    k.is_multiple_of(every) || k == steps
}

/// `out += Σ sᵢ eᵢ`
fn add_modes(dec: &SpectralDecomposition, s: &[f64], out: &mut [f64]) {
    for (i, &c) in s.iter().enumerate() {
        if c != 0.0 {
            for (o, e) in out.iter_mut().zip(dec.eigenfield_raw(i)) {
                *o += c * e;
            }
        }
    }
}

struct Recorder<'a> {
    dec: &'a SpectralDecomposition,
    gain: GainSpec,
    alpha: f64,
    membership_tol: f64,
    enabled: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    diag: Diagnostics,
}

impl<'a> Recorder<'a> {
    fn new(dec: &'a SpectralDecomposition, gain: GainSpec, cfg: &SimConfig) -> Self {
        Self {
            dec,
            gain,
            alpha: cfg.alpha,
            membership_tol: cfg.membership_tol,
            enabled: cfg.diagnostics,
            times: vec![],
            states: vec![],
            diag: Diagnostics::default(),
        }
    }

    fn grid(&mut self, t: f64, u: &[f64]) {
        if self.enabled {
            let grid = self.dec.grid();
            let norm = grid.norm_raw(u);
            let c = self.dec.coefficients_raw(u, self.dec.rank());
            let proj = self.dec.reconstruct_raw(&c);
            let rest: Vec<f64> = u.iter().zip(&proj).map(|(a, b)| a - b).collect();
            let in_s = grid.norm_raw(&rest) <= self.membership_tol * norm;
            let (theta, hm1) = if in_s {
                let psi2 = self.dec.hminus1_sq_from_coeffs(&c);
                let theta = -phi_raw(&self.gain, grid.spacing(), u) + 0.5 * self.alpha * psi2;
                (Some(theta), Some(psi2.sqrt()))
            } else {
                (None, None)
            };
            self.diag.theta.push(theta);
            self.diag.norm_h.push(norm);
            self.diag.norm_hm1.push(hm1);
        }
        self.times.push(t);
        self.states.push(u.to_vec());
    }

    fn modes(&mut self, t: f64, c: &[f64]) {
        if self.enabled {
            let l = &self.dec.lambdas()[..c.len()];
            self.diag.theta.push(Some(theta_coeffs(self.dec, &self.gain, self.alpha, c)));
            self.diag.norm_h.push(c.iter().map(|v| v * v).sum::<f64>().sqrt());
            self.diag.norm_hm1.push(Some(c.iter().zip(l).map(|(v, l)| v * v / l).sum::<f64>().sqrt()));
        }
        self.times.push(t);
        self.states.push(c.to_vec());
    }

    fn finish(self, integrator: Integrator, seed: u64, dt: f64, steps: usize, kind: StateKind) -> TrajectoryRecord {
        TrajectoryRecord {
            integrator,
            seed,
            dt,
            steps,
            kind,
            times: self.times,
            states: self.states,
            diagnostics: self.diag,
            projection_residual: None,
        }
    }
}

/// Euler–Maruyama on the full grid with increments drawn from `noise.seed`.
pub fn em_simulate_full(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    noise: &super::NoiseSpec,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let (_, target) = kick_for(&noise.mode, dec)?;
    let mut stream = NoiseStream::new(noise.seed, target, cfg.dt);
    em_simulate_with_source(op, dec, gain, &noise.mode, &mut stream, noise.seed, cfg)
}

/// `U_{k+1} = U_k + Δt(-αU_k + K F(U_k)) + ε B ΔW_k` with increments from `source`.
pub fn em_simulate_with_source(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    mode: &NoiseMode,
    source: &mut dyn IncrementSource,
    seed: u64,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let steps = cfg.validate()?;
    check_gain(&gain, cfg)?;
    if op.grid() != dec.grid() || cfg.u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let (kick, target) = kick_for(mode, dec)?;
    check_source(source, target.dim())?;
    let model = EnergyModel::new(op, dec, gain, cfg.alpha);

    let mut u = cfg.u0.values().to_vec();
    let mut dw = vec![0.0; target.dim()];
    let mut rec = Recorder::new(dec, gain, cfg);
    rec.grid(0.0, &u);
    for k in 1..=steps {
        let drift = model.drift_raw(&u);
        for (x, d) in u.iter_mut().zip(&drift) {
            *x += cfg.dt * d;
        }
        source.fill(&mut dw);
        if cfg.epsilon != 0.0 {
            match &kick {
                Kick::Grid => {
                    for (x, w) in u.iter_mut().zip(&dw) {
                        *x += cfg.epsilon * w;
                    }
                }
                Kick::Modes(b) => {
                    let s: Vec<f64> = b.iter().zip(&dw).map(|(b, w)| cfg.epsilon * b * w).collect();
                    add_modes(dec, &s, &mut u);
                }
            }
        }
        blow_up(&u, cfg.clamp, k, cfg.dt)?;
        if should_record(k, steps, cfg.record_every) {
            rec.grid(k as f64 * cfg.dt, &u);
        }
    }
    Ok(rec.finish(Integrator::EulerMaruyama, seed, cfg.dt, steps, StateKind::Grid))
}

/// Spectral Galerkin system on the first `n_modes` eigenfields.
pub fn galerkin_simulate(
    dec: &SpectralDecomposition,
    gain: GainSpec,
    noise: &super::NoiseSpec,
    cfg: &SimConfig,
    n_modes: usize,
) -> Result<TrajectoryRecord> {
    let mut stream = NoiseStream::new(noise.seed, NoiseTarget::Modes { rank: dec.rank() }, cfg.dt);
    galerkin_simulate_with_source(dec, gain, &noise.mode, &mut stream, noise.seed, cfg, n_modes)
}

/// `cᵢ ← cᵢ + Δt(-α cᵢ + λᵢ⟨F(Uᴺ), eᵢ⟩) + ε bᵢ Δβⁱ` for `i < N`.
///
/// The source supplies all `r` mode increments per step so that runs with
/// different `N` share one realization.
pub fn galerkin_simulate_with_source(
    dec: &SpectralDecomposition,
    gain: GainSpec,
    mode: &NoiseMode,
    source: &mut dyn IncrementSource,
    seed: u64,
    cfg: &SimConfig,
    n_modes: usize,
) -> Result<TrajectoryRecord> {
    let steps = cfg.validate()?;
    check_gain(&gain, cfg)?;
    if n_modes > dec.rank() {
        return Err(Error::RankExceeded { requested: n_modes, rank: dec.rank() });
    }
    if n_modes == 0 {
        return Err(Error::InvalidParameter("mode count must be >= 1".into()));
    }
    if cfg.u0.grid() != dec.grid() {
        return Err(Error::GridMismatch);
    }
    let b = mode_coefficients(mode, dec)?;
    check_source(source, dec.rank())?;
    let grid = *dec.grid();
    let lambdas = &dec.lambdas()[..n_modes];

    let mut c = dec.coefficients_raw(cfg.u0.values(), n_modes);
    let proj = dec.reconstruct_raw(&c);
    let rest: Vec<f64> = cfg.u0.values().iter().zip(&proj).map(|(a, b)| a - b).collect();
    let residual = grid.norm_raw(&rest);

    let mut dw = vec![0.0; dec.rank()];
    let mut rec = Recorder::new(dec, gain, cfg);
    rec.modes(0.0, &c);
    for k in 1..=steps {
        let u = dec.reconstruct_raw(&c);
        let fu: Vec<f64> = u.iter().map(|&v| gain.f(v)).collect();
        let p = dec.coefficients_raw(&fu, n_modes);
        source.fill(&mut dw);
        for i in 0..n_modes {
            c[i] += cfg.dt * (-cfg.alpha * c[i] + lambdas[i] * p[i]);
            if cfg.epsilon != 0.0 {
                c[i] += cfg.epsilon * b[i] * dw[i];
            }
        }
        if !c.iter().all(|v| v.is_finite()) {
            let v = c.iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN);
            return Err(Error::BlowUp { step: k, time: k as f64 * cfg.dt, value: v });
        }
        blow_up(&dec.reconstruct_raw(&c), cfg.clamp, k, cfg.dt)?;
        if should_record(k, steps, cfg.record_every) {
            rec.modes(k as f64 * cfg.dt, &c);
        }
    }
    let mut out = rec.finish(Integrator::Galerkin, seed, cfg.dt, steps, StateKind::Modes);
    out.projection_residual = Some(residual);
    Ok(out)
}

/// Pathwise integrator on a noise path pre-sampled at `Δt / substeps`.
pub fn doss_sussmann_simulate(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    noise: &super::NoiseSpec,
    cfg: &SimConfig,
    substeps: usize,
) -> Result<TrajectoryRecord> {
    let steps = cfg.validate()?;
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be >= 1".into()));
    }
    mode_coefficients(&noise.mode, dec)?;
    let fine_dt = cfg.dt / substeps as f64;
    let path = sample_noise_increments(noise.seed, NoiseTarget::Modes { rank: dec.rank() }, fine_dt, steps * substeps)?;
    doss_sussmann_with_path(op, dec, gain, &noise.mode, &path, noise.seed, cfg)
}

/// Integrates `Y' = -grad Θ(Y + εBW_t)` by explicit Euler and returns `V = Y + εBW`.
///
/// `W_t` is the piecewise-constant process on the fine grid of `path`. Each
/// step of length `Δt` freezes `Y` and evaluates the drift at the step
/// average of `εBW_t`, which is the exact integral of the fine path over the
/// step. With one substep per step this reduces to Euler–Maruyama.
pub fn doss_sussmann_with_path(
    op: &KernelOperator,
    dec: &SpectralDecomposition,
    gain: GainSpec,
    mode: &NoiseMode,
    path: &NoisePath,
    seed: u64,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let steps = cfg.validate()?;
    check_gain(&gain, cfg)?;
    if op.grid() != dec.grid() || cfg.u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let b = mode_coefficients(mode, dec)?;
    let r = dec.rank();
    if path.dim != r {
        return Err(Error::DimensionMismatch { left: path.dim, right: r });
    }
    let ratio = cfg.dt / path.dt;
    let m = ratio.round() as usize;
    if m == 0 || (ratio - m as f64).abs() > 1e-9 * ratio || path.steps() < steps * m {
        return Err(Error::InvalidParameter(format!(
            "noise path with {} steps of {} does not cover {steps} steps of {}",
            path.steps(),
            path.dt,
            cfg.dt
        )));
    }
    let model = EnergyModel::new(op, dec, gain, cfg.alpha);
    let eps = cfg.epsilon;

    let mut y = cfg.u0.values().to_vec();
    let mut w = vec![0.0; r];
    let mut avg = vec![0.0; r];
    let mut rec = Recorder::new(dec, gain, cfg);
    rec.grid(0.0, &y);
    let mut v = y.clone();
    for k in 1..=steps {
        avg.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..m {
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += wi;
            }
            for (wi, d) in w.iter_mut().zip(path.step((k - 1) * m + j)) {
                *wi += d;
            }
        }
        let drift = if eps == 0.0 {
            model.drift_raw(&y)
        } else {
            let s: Vec<f64> = avg.iter().zip(&b).map(|(a, b)| eps * b * a / m as f64).collect();
            let mut shifted = y.clone();
            add_modes(dec, &s, &mut shifted);
            model.drift_raw(&shifted)
        };
        for (x, d) in y.iter_mut().zip(&drift) {
            *x += cfg.dt * d;
        }
        v.copy_from_slice(&y);
        if eps != 0.0 {
            let s: Vec<f64> = w.iter().zip(&b).map(|(w, b)| eps * b * w).collect();
            add_modes(dec, &s, &mut v);
        }
        blow_up(&v, cfg.clamp, k, cfg.dt)?;
        if should_record(k, steps, cfg.record_every) {
            rec.grid(k as f64 * cfg.dt, &v);
        }
    }
    Ok(rec.finish(Integrator::DossSussmann, seed, cfg.dt, steps, StateKind::Grid))
}

//! Finite-mode Gibbs measure `∝ exp(-2ε⁻²Θ_N)`, a random-walk Metropolis
//! sampler for it, and moment comparison against long SDE runs.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::{theta_coeffs, GainSpec};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::operator::SpectralDecomposition;
use crate::rng::{self, Component};
use crate::sde::{StateKind, TrajectoryRecord};

pub const DEFAULT_BATCHES: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct GibbsTarget<'a> {
    dec: &'a SpectralDecomposition,
    gain: GainSpec,
    alpha: f64,
    eps: f64,
    n: usize,
}

impl<'a> GibbsTarget<'a> {
    pub fn new(dec: &'a SpectralDecomposition, gain: GainSpec, alpha: f64, eps: f64, n: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {eps}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("mode count must be >= 1".into()));
        }
        if n > dec.rank() {
            return Err(Error::RankExceeded { requested: n, rank: dec.rank() });
        }
        Ok(Self { dec, gain, alpha, eps, n })
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gain(&self) -> GainSpec {
        self.gain
    }

    pub fn dec(&self) -> &SpectralDecomposition {
        self.dec
    }

    /// `-2ε⁻² Θ_N(u)`, unnormalized.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        -2.0 / (self.eps * self.eps) * theta_coeffs(self.dec, &self.gain, self.alpha, &u[..self.n])
    }

    /// `∂ᵢ log_density = 2ε⁻²(⟨F(U), eᵢ⟩ - α uᵢ / λᵢ)`
    pub fn grad_log_density(&self, u: &[f64]) -> Vec<f64> {
        let field = self.dec.reconstruct_raw(&u[..self.n]);
        let fu: Vec<f64> = field.iter().map(|&v| self.gain.f(v)).collect();
        let p = self.dec.coefficients_raw(&fu, self.n);
        let k = 2.0 / (self.eps * self.eps);
        (0..self.n).map(|i| k * (p[i] - self.alpha * u[i] / self.dec.lambda(i))).collect()
    }

    /// Reference Gaussian variance `ε²λᵢ / (2α)` of mode `i` (0-based).
    pub fn gamma_cov(&self, i: usize) -> Result<f64> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        Ok(self.eps * self.eps * self.dec.lambda(i) / (2.0 * self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisOptions {
    pub steps: usize,
    pub step_scale: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl MetropolisOptions {
    /// Burn-in defaults to a tenth of the steps.
    pub fn new(steps: usize, step_scale: f64, seed: u64) -> Self {
        Self { steps, step_scale, burn_in: steps / 10, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Post-burn-in states.
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

pub fn rw_metropolis(target: &GibbsTarget<'_>, steps: usize, step_scale: f64, seed: u64) -> Result<Chain> {
    rw_metropolis_with(target, &MetropolisOptions::new(steps, step_scale, seed))
}

/// Random-walk Metropolis from `u = 0` with per-mode proposal standard
/// deviation `step_scale · √gamma_cov(i)`.
pub fn rw_metropolis_with(target: &GibbsTarget<'_>, opts: &MetropolisOptions) -> Result<Chain> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if !(opts.step_scale > 0.0 && opts.step_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("step_scale must be > 0, got {}", opts.step_scale)));
    }
    if opts.burn_in >= opts.steps {
        return Err(Error::InsufficientData(format!("burn-in {} >= steps {}", opts.burn_in, opts.steps)));
    }
    let n = target.modes();
    let sd: Vec<f64> =
        (0..n).map(|i| target.gamma_cov(i).map(|v| opts.step_scale * v.sqrt())).collect::<Result<_>>()?;
    let mut rng = rng::stream(opts.seed, Component::Metropolis, 0);
    let mut u = vec![0.0; n];
    let mut lp = target.log_density(&u);
    let mut prop = vec![0.0; n];
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(opts.steps - opts.burn_in);
    for step in 0..opts.steps {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            prop[i] = u[i] + sd[i] * z;
        }
        let lq = target.log_density(&prop);
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u < lq - lp {
            u.copy_from_slice(&prop);
            lp = lq;
            accepted += 1;
        }
        if step >= opts.burn_in {
            samples.push(u.clone());
        }
    }
    Ok(Chain { samples, acceptance_rate: accepted as f64 / opts.steps as f64 })
}

/// Per-mode time or ensemble averages with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMoments {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

/// Moments of a sample sequence using `batches` contiguous batches.
pub fn batch_moments(samples: &[Vec<f64>], batches: usize) -> Result<Vec<ModeMoments>> {
    if batches < 2 {
        return Err(Error::InvalidParameter("need at least 2 batches".into()));
    }
    if samples.len() < 2 * batches {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {batches} batches of at least 2",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidParameter("samples have mixed lengths".into()));
    }
    let len = samples.len() / batches;
    let used = &samples[..len * batches];
    let total = used.len() as f64;
    let b = batches as f64;
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim {
        let mean = used.iter().map(|s| s[i]).sum::<f64>() / total;
        let var = used.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (total - 1.0);
        let mut bm = Vec::with_capacity(batches);
        let mut bv = Vec::with_capacity(batches);
        for chunk in used.chunks(len) {
            bm.push(chunk.iter().map(|s| s[i]).sum::<f64>() / len as f64);
            bv.push(chunk.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / len as f64);
        }
        let se = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / b;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0) / b).sqrt()
        };
        let (se_mean, se_var) = (se(&bm), se(&bv));
        if !(se_mean > 0.0 && se_var > 0.0) {
            return Err(Error::InsufficientData(format!("degenerate batches in mode {}", i + 1)));
        }
        out.push(ModeMoments { mean, var, se_mean, se_var });
    }
    Ok(out)
}

/// Time-average moments of a mode-coefficient trajectory after `burn_in` snapshots.
pub fn ergodic_moments(traj: &TrajectoryRecord, burn_in: usize) -> Result<Vec<ModeMoments>> {
    if traj.kind != StateKind::Modes {
        return Err(Error::InvalidParameter("ergodic moments need a mode-coefficient trajectory".into()));
    }
    if burn_in >= traj.len() {
        return Err(Error::InsufficientData(format!("burn-in {burn_in} >= {} snapshots", traj.len())));
    }
    batch_moments(&traj.states[burn_in..], DEFAULT_BATCHES)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub mode: usize,
    pub left: ModeMoments,
    pub right: ModeMoments,
    pub z_mean: f64,
    pub z_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub modes: Vec<ModeComparison>,
    pub max_abs_z: f64,
    pub pass: bool,
}

pub const Z_LIMIT: f64 = 3.0;

/// Standardized mean and variance discrepancies per mode.
pub fn compare_measures(left: &[ModeMoments], right: &[ModeMoments]) -> Result<MomentReport> {
    if left.len() != right.len() {
        return Err(Error::DimensionMismatch { left: left.len(), right: right.len() });
    }
    let modes: Vec<ModeComparison> = left
        .iter()
        .zip(right)
        .enumerate()
        .map(|(i, (a, b))| ModeComparison {
            mode: i + 1,
            left: *a,
            right: *b,
            z_mean: (a.mean - b.mean) / a.se_mean.hypot(b.se_mean),
            z_var: (a.var - b.var) / a.se_var.hypot(b.se_var),
        })
        .collect();
    let max_abs_z = modes.iter().fold(0.0f64, |m, c| m.max(c.z_mean.abs()).max(c.z_var.abs()));
    Ok(MomentReport { modes, max_abs_z, pass: max_abs_z <= Z_LIMIT })
}

impl MomentReport {
    /// One JSON object per mode, then a summary line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for m in &self.modes {
            writeln!(out, "{}", serde_json::to_string(m).map_err(std::io::Error::other)?)?;
        }
        let summary = serde_json::json!({ "max_abs_z": self.max_abs_z, "pass": self.pass });
        writeln!(out, "{summary}")
    }
}

/// Settings for [`gibbs_vs_sde`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsStudy {
    pub modes: usize,
    pub mcmc: MetropolisOptions,
    pub sde_dt: f64,
    pub sde_t_end: f64,
    pub sde_burn_in: f64,
    pub sde_record_every: usize,
}

/// Output of [`gibbs_vs_sde`]: the chain, both moment sets and their comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsComparison {
    pub chain: Chain,
    pub mcmc: Vec<ModeMoments>,
    pub sde: Vec<ModeMoments>,
    pub report: MomentReport,
}

/// MCMC moments of `exp(-2ε⁻²Θ_N)` against time averages of the `N`-mode
/// Galerkin system driven with `bᵢ = √λᵢ`, started at zero.
///
/// The chain uses `study.mcmc.seed`; the SDE uses the noise stream of `sde_seed`.
pub fn gibbs_vs_sde(
    dec: &SpectralDecomposition,
    gain: GainSpec,
    alpha: f64,
    eps: f64,
    study: &GibbsStudy,
    sde_seed: u64,
) -> Result<GibbsComparison> {
    use crate::grid::Field;
    use crate::sde::{galerkin_simulate, NoiseRule, NoiseSpec, SimConfig};

    let target = GibbsTarget::new(dec, gain, alpha, eps, study.modes)?;
    let chain = rw_metropolis_with(&target, &study.mcmc)?;
    let mcmc = batch_moments(&chain.samples, DEFAULT_BATCHES)?;

    let cfg = SimConfig::new(alpha, eps, study.sde_dt, study.sde_t_end, Field::zeros(*dec.grid()))
        .record_every(study.sde_record_every)
        .diagnostics(false);
    let noise = NoiseSpec::spectral(NoiseRule::BSqEqK, sde_seed);
    let traj = galerkin_simulate(dec, gain, &noise, &cfg, study.modes)?;
    let burn = (study.sde_burn_in / (study.sde_dt * study.sde_record_every as f64)).ceil() as usize;
    let sde = ergodic_moments(&traj, burn)?;
    let report = compare_measures(&mcmc, &sde)?;
    Ok(GibbsComparison { chain, mcmc, sde, report })
}

/// `step,c_1..c_N`
pub fn write_samples_csv<W: Write>(samples: &[Vec<f64>], first_step: usize, mut out: W) -> std::io::Result<()> {
    let dim = samples.first().map_or(0, |s| s.len());
    let header: Vec<String> = std::iter::once("step".to_string()).chain((1..=dim).map(|i| format!("c_{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (k, s) in samples.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once((first_step + k).to_string()).chain(s.iter().map(|v| fmt_f64(*v))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

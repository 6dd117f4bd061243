use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Component};

/// Diagonal covariance rule in the eigenbasis of `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseRule {
    /// `bᵢ = λᵢ`
    BEqK,
    /// `bᵢ = √λᵢ`
    BSqEqK,
    Custom(Vec<f64>),
}

impl NoiseRule {
    pub fn coefficients(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        match self {
            NoiseRule::BEqK => Ok(lambdas.to_vec()),
            NoiseRule::BSqEqK => Ok(lambdas.iter().map(|l| l.sqrt()).collect()),
            NoiseRule::Custom(b) => {
                if b.len() < lambdas.len() {
                    return Err(Error::InvalidParameter(format!(
                        "custom noise needs {} coefficients, got {}",
                        lambdas.len(),
                        b.len()
                    )));
                }
                if b.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidParameter("custom noise coefficients must be >= 0".into()));
                }
                Ok(b[..lambdas.len()].to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Independent node increments with variance `Δt / h`.
    WhiteOnGrid,
    /// Independent `N(0, Δt)` increments per retained mode, scaled by `ε bᵢ`.
    SpectralDiagonal(NoiseRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn white(seed: u64) -> Self {
        Self { mode: NoiseMode::WhiteOnGrid, seed }
    }

    pub fn spectral(rule: NoiseRule, seed: u64) -> Self {
        Self { mode: NoiseMode::SpectralDiagonal(rule), seed }
    }

    /// Same mode with the seed of ensemble member `member`.
    pub fn for_member(&self, member: u32) -> Self {
        Self { mode: self.mode.clone(), seed: rng::member_seed(self.seed, member) }
    }

    pub fn rule(&self) -> Option<&NoiseRule> {
        match &self.mode {
            NoiseMode::WhiteOnGrid => None,
            NoiseMode::SpectralDiagonal(r) => Some(r),
        }
    }
}

/// What the increments are indexed by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseTarget {
    /// Grid nodes with spacing `h`.
    Grid { nodes: usize, spacing: f64 },
    /// Mode increments for the first `rank` eigenfields.
    Modes { rank: usize },
}

impl NoiseTarget {
    pub fn dim(&self) -> usize {
        match *self {
            NoiseTarget::Grid { nodes, .. } => nodes,
            NoiseTarget::Modes { rank } => rank,
        }
    }

    fn std_dev(&self, dt: f64) -> f64 {
        match *self {
            NoiseTarget::Grid { spacing, .. } => (dt / spacing).sqrt(),
            NoiseTarget::Modes { .. } => dt.sqrt(),
        }
    }
}

/// Source of per-step Wiener increments.
pub trait IncrementSource {
    fn dim(&self) -> usize;
    fn fill(&mut self, out: &mut [f64]);
}

/// Streams increments straight from the seeded generator.
pub struct NoiseStream {
    rng: ChaCha20Rng,
    dim: usize,
    std_dev: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, target: NoiseTarget, dt: f64) -> Self {
        Self { rng: rng::stream(seed, Component::Noise, 0), dim: target.dim(), std_dev: target.std_dev(dt) }
    }
}

impl IncrementSource for NoiseStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fill(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = self.std_dev * z;
        }
    }
}

/// A pre-sampled increment path, step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub target: NoiseTarget,
    pub dt: f64,
    pub dim: usize,
    data: Vec<f64>,
}

impl NoisePath {
    pub fn steps(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Sums `factor` consecutive increments: the same path at step `factor · dt`.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let mut data = vec![0.0; self.data.len() / factor];
        for k in 0..self.steps() {
            let dst = &mut data[(k / factor) * self.dim..(k / factor + 1) * self.dim];
            for (d, s) in dst.iter_mut().zip(self.step(k)) {
                *d += s;
            }
        }
        Ok(NoisePath { target: self.target, dt: self.dt * factor as f64, dim: self.dim, data })
    }

    /// Replays this path at step `factor · dt`.
    pub fn replay(&self, factor: usize) -> PathReplay<'_> {
        PathReplay { path: self, factor, next: 0 }
    }
}

pub struct PathReplay<'a> {
    path: &'a NoisePath,
    factor: usize,
    next: usize,
}

impl IncrementSource for PathReplay<'_> {
    fn dim(&self) -> usize {
        self.path.dim
    }

    fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..self.factor {
            for (o, s) in out.iter_mut().zip(self.path.step(self.next)) {
                *o += s;
            }
            self.next += 1;
        }
    }
}

/// Pre-samples `steps` increments; identical to what [`NoiseStream`] yields
/// for the same seed, target and `dt`.
pub fn sample_noise_increments(seed: u64, target: NoiseTarget, dt: f64, steps: usize) -> Result<NoisePath> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let mut stream = NoiseStream::new(seed, target, dt);
    let dim = target.dim();
    let mut data = vec![0.0; dim * steps];
    for chunk in data.chunks_mut(dim.max(1)) {
        stream.fill(chunk);
    }
    Ok(NoisePath { target, dt, dim, data })
}

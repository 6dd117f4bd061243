//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! [kernel]
//! family = gaussian
//! width = 1.0
//! [grid]
//! a = -5
//! b = 5
//! n = 64
//! ```
//!
//! Lists are comma separated. Every key has a default; unknown keys,
//! duplicate keys and out-of-range values are errors that carry line and
//! column.

use std::collections::BTreeMap;
use std::fmt;

use crate::energy::GainSpec;
use crate::error::Error;
use crate::fmt_f64;
use crate::grid::{BoundaryMode, Field, Grid};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::operator::{ApplyMode, SpectralDecomposition, DEFAULT_MEMBERSHIP_TOL, DEFAULT_NEG_TOL, DEFAULT_REL_TOL};
use crate::sde::{NoiseMode, NoiseRule, NoiseSpec, SimConfig, DEFAULT_CLAMP};

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{loc}: parse error: {msg}")]
    Parse { loc: Loc, msg: String },
    #[error("{loc}: unknown key `{key}` in [{section}]")]
    UnknownKey { loc: Loc, section: String, key: String },
    #[error("{loc}: `{key}` out of range: {msg}")]
    Range { loc: Loc, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Parse { .. } => "ParseError",
            ConfigError::UnknownKey { .. } => "UnknownKey",
            ConfigError::Range { .. } => "RangeError",
            ConfigError::Invalid(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Exponential,
    CauchyExp,
    Laplace,
    Sinc,
    CosineSum,
    MexicanHatPoly,
    MexicanHatGauss,
    MexicanHatExp,
    WizardHat,
    DampedCosine,
    Zero,
}

const KERNEL_NAMES: [(&str, KernelKind); 12] = [
    ("gaussian", KernelKind::Gaussian),
    ("exponential", KernelKind::Exponential),
    ("cauchy-exp", KernelKind::CauchyExp),
    ("laplace", KernelKind::Laplace),
    ("sinc", KernelKind::Sinc),
    ("cosine-sum", KernelKind::CosineSum),
    ("mexican-hat-poly", KernelKind::MexicanHatPoly),
    ("mexican-hat-gauss", KernelKind::MexicanHatGauss),
    ("mexican-hat-exp", KernelKind::MexicanHatExp),
    ("wizard-hat", KernelKind::WizardHat),
    ("damped-cosine", KernelKind::DampedCosine),
    ("zero", KernelKind::Zero),
];

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub family: KernelKind,
    pub scale: f64,
    /// Gaussian only: use `1 / (w √(2π))` as the scale.
    pub normalize: bool,
    pub width: f64,
    pub rate: f64,
    pub m: f64,
    pub weights: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub a: f64,
    pub s: f64,
    pub big_gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub b: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelKind::Gaussian,
            scale: 1.0,
            normalize: false,
            width: 1.0,
            rate: 1.0,
            m: 1.0,
            weights: vec![1.0],
            frequencies: vec![0.0],
            a: 0.5,
            s: 2.0,
            big_gamma: 0.5,
            gamma1: 2.0,
            gamma2: 1.0,
            b: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn spec(&self) -> crate::Result<KernelSpec> {
        let family = match self.family {
            KernelKind::Gaussian => KernelFamily::Gaussian { width: self.width },
            KernelKind::Exponential => KernelFamily::Exponential { rate: self.rate },
            KernelKind::CauchyExp => KernelFamily::CauchyExp { m: self.m },
            KernelKind::Laplace => KernelFamily::Laplace { m: self.m },
            KernelKind::Sinc => KernelFamily::Sinc,
            KernelKind::CosineSum => {
                KernelFamily::CosineSum { weights: self.weights.clone(), frequencies: self.frequencies.clone() }
            }
            KernelKind::MexicanHatPoly => KernelFamily::MexicanHatPoly,
            KernelKind::MexicanHatGauss => KernelFamily::MexicanHatGauss { a: self.a, s: self.s },
            KernelKind::MexicanHatExp => {
                KernelFamily::MexicanHatExp { big_gamma: self.big_gamma, gamma1: self.gamma1, gamma2: self.gamma2 }
            }
            KernelKind::WizardHat => KernelFamily::WizardHat,
            KernelKind::DampedCosine => KernelFamily::DampedCosine { b: self.b },
            KernelKind::Zero => return Ok(KernelSpec::zero()),
        };
        if self.normalize && self.family == KernelKind::Gaussian {
            let base = KernelSpec::normalized_gaussian(self.width)?;
            return KernelSpec::new(family, base.scale() * self.scale);
        }
        KernelSpec::new(family, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub boundary: BoundaryMode,
    pub rel_tol: f64,
    pub neg_tol: f64,
    pub apply: ApplyMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            a: -5.0,
            b: 5.0,
            n: 64,
            boundary: BoundaryMode::Truncated,
            rel_tol: DEFAULT_REL_TOL,
            neg_tol: DEFAULT_NEG_TOL,
            apply: ApplyMode::Auto,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> crate::Result<Grid> {
        Grid::new(self.a, self.b, self.n, self.boundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainKind {
    Sigmoid,
    Tanh,
    Cubic,
    Constant,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainConfig {
    pub kind: GainKind,
    /// Level of the constant gain.
    pub value: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self { kind: GainKind::Sigmoid, value: 1.0 }
    }
}

impl GainConfig {
    pub fn spec(&self) -> GainSpec {
        match self.kind {
            GainKind::Sigmoid => GainSpec::Sigmoid,
            GainKind::Tanh => GainSpec::TanhSigmoid,
            GainKind::Cubic => GainSpec::Cubic,
            GainKind::Constant => GainSpec::Constant(self.value),
            GainKind::Zero => GainSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    BEqK,
    BSqEqK,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub mode: NoiseKind,
    pub rule: RuleKind,
    pub custom: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { mode: NoiseKind::Spectral, rule: RuleKind::BEqK, custom: vec![] }
    }
}

impl NoiseConfig {
    pub fn spec(&self, seed: u64) -> NoiseSpec {
        match self.mode {
            NoiseKind::White => NoiseSpec::white(seed),
            NoiseKind::Spectral => NoiseSpec::spectral(self.rule(), seed),
        }
    }

    pub fn rule(&self) -> NoiseRule {
        match self.rule {
            RuleKind::BEqK => NoiseRule::BEqK,
            RuleKind::BSqEqK => NoiseRule::BSqEqK,
            RuleKind::Custom => NoiseRule::Custom(self.custom.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    Constant,
    /// `value · exp(-x² / (2 width²))`
    Bump,
    /// `Σ cᵢ eᵢ` from `u0_modes`.
    Modes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    Em,
    Galerkin,
    DossSussmann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub alpha: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub clamp: f64,
    pub allow_non_lipschitz: bool,
    pub membership_tol: f64,
    pub seed: u64,
    pub integrator: IntegratorKind,
    /// Fine noise steps per step in the pathwise integrator.
    pub substeps: usize,
    /// Number of `Δt` halvings in the pathwise comparison.
    pub halvings: usize,
    pub u0: InitialKind,
    pub u0_value: f64,
    pub u0_width: f64,
    pub u0_modes: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 0.1,
            dt: 0.01,
            t_end: 1.0,
            record_every: 1,
            clamp: DEFAULT_CLAMP,
            allow_non_lipschitz: false,
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
            seed: 0,
            integrator: IntegratorKind::Em,
            substeps: 64,
            halvings: 3,
            u0: InitialKind::Modes,
            u0_value: 1.0,
            u0_width: 1.0,
            u0_modes: vec![1.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeCount {
    Count(usize),
    /// The full retained rank.
    Full,
}

impl ModeCount {
    pub fn resolve(&self, rank: usize) -> usize {
        match *self {
            ModeCount::Count(n) => n,
            ModeCount::Full => rank,
        }
    }
}

impl fmt::Display for ModeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeCount::Count(n) => write!(f, "{n}"),
            ModeCount::Full => write!(f, "r"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinConfig {
    pub modes: ModeCount,
    pub n_list: Vec<ModeCount>,
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        Self {
            modes: ModeCount::Count(8),
            n_list: vec![
                ModeCount::Count(1),
                ModeCount::Count(2),
                ModeCount::Count(4),
                ModeCount::Count(8),
                ModeCount::Full,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub modes: usize,
    pub mcmc_steps: usize,
    pub step_scale: f64,
    pub burn_in: usize,
    pub sde_dt: f64,
    pub sde_t_end: f64,
    /// Time discarded from the start of the SDE run.
    pub sde_burn_in: f64,
    pub sde_record_every: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            modes: 2,
            mcmc_steps: 400_000,
            step_scale: 1.5,
            burn_in: 20_000,
            sde_dt: 0.01,
            sde_t_end: 2000.0,
            sde_burn_in: 20.0,
            sde_record_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub diagnostics: bool,
    /// Prepended to every output file name.
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { diagnostics: true, prefix: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub gain: GainConfig,
    pub noise: NoiseConfig,
    pub sim: SimSection,
    pub galerkin: GalerkinConfig,
    pub gibbs: GibbsConfig,
    pub output: OutputConfig,
}

pub const SECTIONS: [&str; 8] = ["kernel", "grid", "gain", "noise", "sim", "galerkin", "gibbs", "output"];

// ---- value parsing -------------------------------------------------------

struct Value<'a> {
    text: &'a str,
    loc: Loc,
    key: &'a str,
}

impl Value<'_> {
    fn parse_err(&self, what: &str) -> ConfigError {
        ConfigError::Parse { loc: self.loc, msg: format!("`{}` expects {what}, got `{}`", self.key, self.text) }
    }

    fn range(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Range { loc: self.loc, key: self.key.to_string(), msg: msg.into() }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.text.parse().map_err(|_| self.parse_err("a number"))?;
        if !v.is_finite() {
            return Err(self.range("must be finite"));
        }
        Ok(v)
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.range(format!("must be > 0, got {v}")))
        }
    }

    fn nonneg(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.range(format!("must be >= 0, got {v}")))
        }
    }

    fn unit_open(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(self.range(format!("must lie in (0, 1), got {v}")))
        }
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        self.text.parse().map_err(|_| self.parse_err("a nonnegative integer"))
    }

    fn count(&self) -> Result<usize, ConfigError> {
        let v = self.usize()?;
        if v >= 1 {
            Ok(v)
        } else {
            Err(self.range("must be >= 1"))
        }
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        self.text.parse().map_err(|_| self.parse_err("a 64-bit unsigned integer"))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.text {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.parse_err("`true` or `false`")),
        }
    }

    fn list(&self) -> Result<Vec<f64>, ConfigError> {
        if self.text.trim().is_empty() {
            return Ok(vec![]);
        }
        self.text
            .split(',')
            .map(|t| {
                let v: f64 = t.trim().parse().map_err(|_| self.parse_err("a comma-separated list of numbers"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.range("list entries must be finite"))
                }
            })
            .collect()
    }

    fn mode_count(&self, t: &str) -> Result<ModeCount, ConfigError> {
        match t.trim() {
            "r" => Ok(ModeCount::Full),
            s => match s.parse::<usize>() {
                Ok(0) => Err(self.range("mode counts must be >= 1")),
                Ok(n) => Ok(ModeCount::Count(n)),
                Err(_) => Err(self.parse_err("a mode count or `r`")),
            },
        }
    }

    fn choice<T: Copy>(&self, options: &[(&str, T)]) -> Result<T, ConfigError> {
        options.iter().find(|(n, _)| *n == self.text).map(|(_, v)| *v).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.parse_err(&format!("one of {}", names.join(", ")))
        })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|(_, x)| *x == v).map(|(n, _)| *n).unwrap_or("?")
}

const BOUNDARIES: [(&str, BoundaryMode); 2] =
    [("truncated", BoundaryMode::Truncated), ("periodic", BoundaryMode::Periodic)];
const APPLY: [(&str, ApplyMode); 3] = [("auto", ApplyMode::Auto), ("dense", ApplyMode::Dense), ("fft", ApplyMode::Fft)];
const GAINS: [(&str, GainKind); 5] = [
    ("sigmoid", GainKind::Sigmoid),
    ("tanh", GainKind::Tanh),
    ("cubic", GainKind::Cubic),
    ("constant", GainKind::Constant),
    ("zero", GainKind::Zero),
];
const NOISE_MODES: [(&str, NoiseKind); 2] = [("white", NoiseKind::White), ("spectral", NoiseKind::Spectral)];
const RULES: [(&str, RuleKind); 3] =
    [("b-eq-k", RuleKind::BEqK), ("b-sq-eq-k", RuleKind::BSqEqK), ("custom", RuleKind::Custom)];
const INITIAL: [(&str, InitialKind); 4] = [
    ("zero", InitialKind::Zero),
    ("constant", InitialKind::Constant),
    ("bump", InitialKind::Bump),
    ("modes", InitialKind::Modes),
];
const INTEGRATORS: [(&str, IntegratorKind); 3] = [
    ("em", IntegratorKind::Em),
    ("galerkin", IntegratorKind::Galerkin),
    ("doss-sussmann", IntegratorKind::DossSussmann),
];

impl ExperimentConfig {
    /// Assigns one key. `loc` is used for diagnostics.
    pub fn set(&mut self, section: &str, key: &str, text: &str, loc: Loc) -> Result<(), ConfigError> {
        let v = Value { text: text.trim(), loc, key };
        let unknown = || ConfigError::UnknownKey { loc, section: section.to_string(), key: key.to_string() };
        match section {
            "kernel" => {
                let k = &mut self.kernel;
                match key {
                    "family" => k.family = v.choice(&KERNEL_NAMES)?,
                    "scale" => k.scale = v.positive()?,
                    "normalize" => k.normalize = v.bool()?,
                    "width" => k.width = v.positive()?,
                    "rate" => k.rate = v.positive()?,
                    "m" => k.m = v.nonneg()?,
                    "weights" => {
                        let w = v.list()?;
                        if w.iter().any(|x| *x < 0.0) {
                            return Err(v.range("weights must be >= 0"));
                        }
                        k.weights = w;
                    }
                    "frequencies" => k.frequencies = v.list()?,
                    "a" => k.a = v.unit_open()?,
                    "s" => {
                        let s = v.f64()?;
                        if s <= 1.0 {
                            return Err(v.range(format!("s > 1 required, got {s}")));
                        }
                        k.s = s;
                    }
                    "big_gamma" => k.big_gamma = v.unit_open()?,
                    "gamma1" => k.gamma1 = v.positive()?,
                    "gamma2" => k.gamma2 = v.positive()?,
                    "b" => k.b = v.positive()?,
                    _ => return Err(unknown()),
                }
            }
            "grid" => {
                let g = &mut self.grid;
                match key {
                    "a" => g.a = v.f64()?,
                    "b" => g.b = v.f64()?,
                    "n" => g.n = v.count()?,
                    "boundary" => g.boundary = v.choice(&BOUNDARIES)?,
                    "rel_tol" => g.rel_tol = v.positive()?,
                    "neg_tol" => g.neg_tol = v.positive()?,
                    "apply" => g.apply = v.choice(&APPLY)?,
                    _ => return Err(unknown()),
                }
            }
            "gain" => match key {
                "kind" => self.gain.kind = v.choice(&GAINS)?,
                "value" => self.gain.value = v.f64()?,
                _ => return Err(unknown()),
            },
            "noise" => match key {
                "mode" => self.noise.mode = v.choice(&NOISE_MODES)?,
                "rule" => self.noise.rule = v.choice(&RULES)?,
                "custom" => {
                    let c = v.list()?;
                    if c.iter().any(|x| *x < 0.0) {
                        return Err(v.range("custom coefficients must be >= 0"));
                    }
                    self.noise.custom = c;
                }
                _ => return Err(unknown()),
            },
            "sim" => {
                let s = &mut self.sim;
                match key {
                    "alpha" => s.alpha = v.positive()?,
                    "epsilon" => s.epsilon = v.nonneg()?,
                    "dt" => s.dt = v.positive()?,
                    "t_end" => s.t_end = v.positive()?,
                    "record_every" => s.record_every = v.count()?,
                    "clamp" => s.clamp = v.positive()?,
                    "allow_non_lipschitz" => s.allow_non_lipschitz = v.bool()?,
                    "membership_tol" => s.membership_tol = v.positive()?,
                    "seed" => s.seed = v.u64()?,
                    "integrator" => s.integrator = v.choice(&INTEGRATORS)?,
                    "substeps" => s.substeps = v.count()?,
                    "halvings" => s.halvings = v.count()?,
                    "u0" => s.u0 = v.choice(&INITIAL)?,
                    "u0_value" => s.u0_value = v.f64()?,
                    "u0_width" => s.u0_width = v.positive()?,
                    "u0_modes" => s.u0_modes = v.list()?,
                    _ => return Err(unknown()),
                }
            }
            "galerkin" => match key {
                "modes" => self.galerkin.modes = v.mode_count(v.text)?,
                "n_list" => {
                    let list = v.text.split(',').map(|t| v.mode_count(t)).collect::<Result<Vec<_>, _>>()?;
                    self.galerkin.n_list = list;
                }
                _ => return Err(unknown()),
            },
            "gibbs" => {
                let g = &mut self.gibbs;
                match key {
                    "modes" => g.modes = v.count()?,
                    "mcmc_steps" => g.mcmc_steps = v.count()?,
                    "step_scale" => g.step_scale = v.positive()?,
                    "burn_in" => g.burn_in = v.usize()?,
                    "sde_dt" => g.sde_dt = v.positive()?,
                    "sde_t_end" => g.sde_t_end = v.positive()?,
                    "sde_burn_in" => g.sde_burn_in = v.nonneg()?,
                    "sde_record_every" => g.sde_record_every = v.count()?,
                    _ => return Err(unknown()),
                }
            }
            "output" => match key {
                "diagnostics" => self.output.diagnostics = v.bool()?,
                "prefix" => {
                    if v.text.contains(['/', '\\']) {
                        return Err(v.range("prefix must not contain path separators"));
                    }
                    self.output.prefix = v.text.to_string();
                }
                _ => return Err(unknown()),
            },
            _ => {
                return Err(ConfigError::Parse { loc, msg: format!("unknown section [{section}]") });
            }
        }
        Ok(())
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let loc = Loc { line: 0, col: 1 };
        let (lhs, rhs) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { loc, msg: format!("override `{spec}` is not section.key=value") })?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::Parse { loc, msg: format!("override key `{lhs}` is not section.key") })?;
        self.set(section, key, rhs, loc)
    }

    /// Cross-field checks that need no numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        self.kernel.spec().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid.grid().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.kernel.family == KernelKind::MexicanHatExp && self.kernel.gamma1 <= self.kernel.gamma2 {
            return inv(format!("need gamma1 > gamma2, got {} <= {}", self.kernel.gamma1, self.kernel.gamma2));
        }
        if self.sim.dt >= 2.0 / self.sim.alpha {
            return inv(format!("dt = {} violates dt < 2/alpha", self.sim.dt));
        }
        if (self.sim.t_end / self.sim.dt).round() < 1.0 {
            return inv("t_end / dt rounds to 0 steps".into());
        }
        if self.gibbs.burn_in >= self.gibbs.mcmc_steps {
            return inv("gibbs.burn_in must be < gibbs.mcmc_steps".into());
        }
        if self.gibbs.sde_dt >= 2.0 / self.sim.alpha {
            return inv("gibbs.sde_dt violates dt < 2/alpha".into());
        }
        if self.gibbs.sde_burn_in >= self.gibbs.sde_t_end {
            return inv("gibbs.sde_burn_in must be < gibbs.sde_t_end".into());
        }
        if self.gain.kind == GainKind::Cubic && !self.sim.allow_non_lipschitz {
            return inv("cubic gain needs sim.allow_non_lipschitz = true".into());
        }
        if self.noise.rule == RuleKind::Custom && self.noise.custom.is_empty() && self.noise.mode == NoiseKind::Spectral
        {
            return inv("custom noise rule needs noise.custom coefficients".into());
        }
        Ok(())
    }

    /// Checks that need the retained rank `r`.
    pub fn validate_rank(&self, rank: usize) -> crate::Result<()> {
        let check = |n: usize| {
            if n > rank {
                Err(Error::RankExceeded { requested: n, rank })
            } else {
                Ok(())
            }
        };
        check(self.galerkin.modes.resolve(rank))?;
        for m in &self.galerkin.n_list {
            check(m.resolve(rank))?;
        }
        check(self.gibbs.modes)?;
        if self.sim.u0 == InitialKind::Modes {
            check(self.sim.u0_modes.len())?;
        }
        if self.noise.mode == NoiseKind::Spectral
            && self.noise.rule == RuleKind::Custom
            && self.noise.custom.len() < rank
        {
            return Err(Error::InvalidParameter(format!(
                "noise.custom has {} coefficients, rank is {rank}",
                self.noise.custom.len()
            )));
        }
        Ok(())
    }

    pub fn initial_field(&self, grid: Grid, dec: &SpectralDecomposition) -> crate::Result<Field> {
        let s = &self.sim;
        match s.u0 {
            InitialKind::Zero => Ok(Field::zeros(grid)),
            InitialKind::Constant => Ok(Field::constant(grid, s.u0_value)),
            InitialKind::Bump => {
                let (v, w) = (s.u0_value, s.u0_width);
                Ok(Field::from_fn(grid, |x| v * (-x * x / (2.0 * w * w)).exp()))
            }
            InitialKind::Modes => dec.reconstruct(&s.u0_modes),
        }
    }

    pub fn sim_config(&self, u0: Field) -> SimConfig {
        let s = &self.sim;
        let mut cfg = SimConfig::new(s.alpha, s.epsilon, s.dt, s.t_end, u0)
            .record_every(s.record_every)
            .allow_non_lipschitz(s.allow_non_lipschitz)
            .diagnostics(self.output.diagnostics);
        cfg.clamp = s.clamp;
        cfg.membership_tol = s.membership_tol;
        cfg
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        self.noise.spec(self.sim.seed)
    }

    pub fn noise_mode(&self) -> NoiseMode {
        self.noise_spec().mode
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn serialize(&self) -> String {
        let k = &self.kernel;
        let g = &self.grid;
        let s = &self.sim;
        let gb = &self.gibbs;
        let list = |v: &[ModeCount]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut sec = |name: &str, entries: Vec<(&str, String)>| {
            out.push_str(&format!("[{name}]\n"));
            for (key, val) in entries {
                out.push_str(&format!("{key} = {val}\n"));
            }
            out.push('\n');
        };
        sec(
            "kernel",
            vec![
                ("family", name_of(&KERNEL_NAMES, k.family).into()),
                ("scale", fmt_f64(k.scale)),
                ("normalize", k.normalize.to_string()),
                ("width", fmt_f64(k.width)),
                ("rate", fmt_f64(k.rate)),
                ("m", fmt_f64(k.m)),
                ("weights", join(&k.weights)),
                ("frequencies", join(&k.frequencies)),
                ("a", fmt_f64(k.a)),
                ("s", fmt_f64(k.s)),
                ("big_gamma", fmt_f64(k.big_gamma)),
                ("gamma1", fmt_f64(k.gamma1)),
                ("gamma2", fmt_f64(k.gamma2)),
                ("b", fmt_f64(k.b)),
            ],
        );
        sec(
            "grid",
            vec![
                ("a", fmt_f64(g.a)),
                ("b", fmt_f64(g.b)),
                ("n", g.n.to_string()),
                ("boundary", name_of(&BOUNDARIES, g.boundary).into()),
                ("rel_tol", fmt_f64(g.rel_tol)),
                ("neg_tol", fmt_f64(g.neg_tol)),
                ("apply", name_of(&APPLY, g.apply).into()),
            ],
        );
        sec("gain", vec![("kind", name_of(&GAINS, self.gain.kind).into()), ("value", fmt_f64(self.gain.value))]);
        sec(
            "noise",
            vec![
                ("mode", name_of(&NOISE_MODES, self.noise.mode).into()),
                ("rule", name_of(&RULES, self.noise.rule).into()),
                ("custom", join(&self.noise.custom)),
            ],
        );
        sec(
            "sim",
            vec![
                ("alpha", fmt_f64(s.alpha)),
                ("epsilon", fmt_f64(s.epsilon)),
                ("dt", fmt_f64(s.dt)),
                ("t_end", fmt_f64(s.t_end)),
                ("record_every", s.record_every.to_string()),
                ("clamp", fmt_f64(s.clamp)),
                ("allow_non_lipschitz", s.allow_non_lipschitz.to_string()),
                ("membership_tol", fmt_f64(s.membership_tol)),
                ("seed", s.seed.to_string()),
                ("integrator", name_of(&INTEGRATORS, s.integrator).into()),
                ("substeps", s.substeps.to_string()),
                ("halvings", s.halvings.to_string()),
                ("u0", name_of(&INITIAL, s.u0).into()),
                ("u0_value", fmt_f64(s.u0_value)),
                ("u0_width", fmt_f64(s.u0_width)),
                ("u0_modes", join(&s.u0_modes)),
            ],
        );
        sec("galerkin", vec![("modes", self.galerkin.modes.to_string()), ("n_list", list(&self.galerkin.n_list))]);
        sec(
            "gibbs",
            vec![
                ("modes", gb.modes.to_string()),
                ("mcmc_steps", gb.mcmc_steps.to_string()),
                ("step_scale", fmt_f64(gb.step_scale)),
                ("burn_in", gb.burn_in.to_string()),
                ("sde_dt", fmt_f64(gb.sde_dt)),
                ("sde_t_end", fmt_f64(gb.sde_t_end)),
                ("sde_burn_in", fmt_f64(gb.sde_burn_in)),
                ("sde_record_every", gb.sde_record_every.to_string()),
            ],
        );
        sec(
            "output",
            vec![("diagnostics", self.output.diagnostics.to_string()), ("prefix", self.output.prefix.clone())],
        );
        out
    }
}

/// Parses `text` on top of the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_onto(text, ExperimentConfig::default())
}

/// Parses `text` on top of `base` (used by presets).
pub fn parse_config_onto(text: &str, base: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = base;
    let mut section: Option<String> = None;
    let mut seen: BTreeMap<(String, String), Loc> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let indent = content.len() - content.trim_start().len();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let loc = Loc { line: line_no, col: indent + 1 };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { loc, msg: "unterminated section header".into() })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::Parse { loc, msg: format!("unknown section [{name}]") });
            }
            section = Some(name.to_string());
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| ConfigError::Parse { loc, msg: format!("expected `key = value`, got `{trimmed}`") })?;
        let key = content[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::Parse { loc, msg: format!("invalid key `{key}`") });
        }
        let value = &content[eq + 1..];
        let value_loc = Loc { line: line_no, col: eq + 2 + (value.len() - value.trim_start().len()) };
        let sec = section
            .as_deref()
            .ok_or_else(|| ConfigError::Parse { loc, msg: format!("key `{key}` outside any section") })?;
        if let Some(first) = seen.insert((sec.to_string(), key.to_string()), loc) {
            return Err(ConfigError::Parse {
                loc,
                msg: format!("duplicate key `{key}` in [{sec}] at {loc}, first defined at {first}"),
            });
        }
        cfg.set(sec, key, value, value_loc).map_err(|e| match e {
            ConfigError::UnknownKey { section, key, .. } => ConfigError::UnknownKey { loc, section, key },
            other => other,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

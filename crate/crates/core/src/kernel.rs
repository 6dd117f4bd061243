//! Translation-invariant connectivity kernels `J`, their Fourier densities and
//! nonnegative-definiteness checks.
//!
//! Densities use the convention `J(x) = (2π)^{-1/2} ∫ e^{iξx} g(ξ) dξ`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `exp(-x² / (2 w²))`
    Gaussian {
        width: f64,
    },
    /// `exp(-b |x|)`
    Exponential {
        rate: f64,
    },
    /// `exp(-sqrt(m) |x|)`, the 1-D centered Cauchy characteristic function.
    CauchyExp {
        m: f64,
    },
    /// `(1 + m x² / 2)^{-1}`
    Laplace {
        m: f64,
    },
    /// `sin(x) / x`
    Sinc,
    /// `Σ aᵢ cos(mᵢ x)`
    CosineSum {
        weights: Vec<f64>,
        frequencies: Vec<f64>,
    },
    /// `(1 - x²) exp(-x² / 2)`
    MexicanHatPoly,
    /// `exp(-x² / 2) - A exp(-x² / s²)`
    MexicanHatGauss {
        a: f64,
        s: f64,
    },
    /// `exp(-γ₁ |x|) - Γ exp(-γ₂ |x|)`
    MexicanHatExp {
        big_gamma: f64,
        gamma1: f64,
        gamma2: f64,
    },
    /// `(1 - |x|) exp(-|x|) / 4`
    WizardHat,
    /// `exp(-b |x|) (b sin|x| + cos x)`
    DampedCosine {
        b: f64,
    },
    Zero,
}

/// A kernel family with a positive prefactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NonnegativeDefinite,
    Indefinite,
    /// Nonnegative up to quadrature error; no closed form was used.
    NumericOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Witness {
    /// Frequency at which the density is negative.
    Frequency(f64),
    /// Points whose Gram matrix has a negative eigenvalue.
    Points(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl Classification {
    fn nonnegative() -> Self {
        Self { verdict: Verdict::NonnegativeDefinite, witness: None }
    }

    fn indefinite(xi: f64) -> Self {
        Self { verdict: Verdict::Indefinite, witness: Some(Witness::Frequency(xi)) }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.verdict != Verdict::Indefinite
    }
}

/// Parameters for the grid-based Bochner check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BochnerOptions {
    pub xi_max: f64,
    pub n_xi: usize,
    pub tol: f64,
    /// Accept atomic spectra by inspecting the atom weights instead of failing.
    pub atomic_fallback: bool,
}

impl Default for BochnerOptions {
    fn default() -> Self {
        Self { xi_max: 40.0, n_xi: 4001, tol: 1e-8, atomic_fallback: true }
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, scale: f64) -> Result<Self> {
        require(scale.is_finite() && scale > 0.0, || format!("scale must be > 0, got {scale}"))?;
        match &family {
            KernelFamily::Gaussian { width } => {
                require(width.is_finite() && *width > 0.0, || format!("width must be > 0, got {width}"))?
            }
            KernelFamily::Exponential { rate } => {
                require(rate.is_finite() && *rate > 0.0, || format!("rate must be > 0, got {rate}"))?
            }
            KernelFamily::CauchyExp { m } | KernelFamily::Laplace { m } => {
                require(m.is_finite() && *m >= 0.0, || format!("m must be >= 0, got {m}"))?
            }
            KernelFamily::CosineSum { weights, frequencies } => {
                require(!weights.is_empty(), || "cosine sum needs at least one term".into())?;
                require(weights.len() == frequencies.len(), || {
                    format!("{} weights but {} frequencies", weights.len(), frequencies.len())
                })?;
                require(weights.iter().all(|a| a.is_finite() && *a >= 0.0), || "cosine weights must be >= 0".into())?;
                require(frequencies.iter().all(|m| m.is_finite()), || "cosine frequencies must be finite".into())?;
            }
            KernelFamily::MexicanHatGauss { a, s } => {
                require(*a > 0.0 && *a < 1.0, || format!("A must lie in (0, 1), got {a}"))?;
                require(s.is_finite() && *s > 1.0, || format!("s must be > 1, got {s}"))?;
            }
            KernelFamily::MexicanHatExp { big_gamma, gamma1, gamma2 } => {
                require(*big_gamma > 0.0 && *big_gamma < 1.0, || format!("Gamma must lie in (0, 1), got {big_gamma}"))?;
                require(gamma2.is_finite() && *gamma2 > 0.0 && gamma1 > gamma2 && gamma1.is_finite(), || {
                    format!("need gamma1 > gamma2 > 0, got {gamma1}, {gamma2}")
                })?;
            }
            KernelFamily::DampedCosine { b } => {
                require(b.is_finite() && *b > 0.0, || format!("b must be > 0, got {b}"))?
            }
            KernelFamily::Sinc | KernelFamily::MexicanHatPoly | KernelFamily::WizardHat | KernelFamily::Zero => {}
        }
        Ok(Self { family, scale })
    }

    pub fn unit(family: KernelFamily) -> Result<Self> {
        Self::new(family, 1.0)
    }

    pub fn gaussian(width: f64) -> Result<Self> {
        Self::unit(KernelFamily::Gaussian { width })
    }

    /// Gaussian normalized to unit mass on ℝ.
    pub fn normalized_gaussian(width: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { width }, INV_SQRT_2PI / width)
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(KernelFamily::CosineSum { weights: vec![1.0], frequencies: vec![0.0] }, c)
    }

    pub fn zero() -> Self {
        Self { family: KernelFamily::Zero, scale: 1.0 }
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Kernel value `J(x)`. Exactly even: only `|x|` is ever used.
    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        let v = match &self.family {
            KernelFamily::Gaussian { width } => (-(r * r) / (2.0 * width * width)).exp(),
            KernelFamily::Exponential { rate } => (-rate * r).exp(),
            KernelFamily::CauchyExp { m } => (-m.sqrt() * r).exp(),
            KernelFamily::Laplace { m } => 1.0 / (1.0 + 0.5 * m * r * r),
            KernelFamily::Sinc => {
                if r == 0.0 {
                    1.0
                } else {
                    r.sin() / r
                }
            }
            KernelFamily::CosineSum { weights, frequencies } => {
                weights.iter().zip(frequencies).map(|(a, m)| a * (m * r).cos()).sum()
            }
            KernelFamily::MexicanHatPoly => (1.0 - r * r) * (-0.5 * r * r).exp(),
            KernelFamily::MexicanHatGauss { a, s } => (-0.5 * r * r).exp() - a * (-(r * r) / (s * s)).exp(),
            KernelFamily::MexicanHatExp { big_gamma, gamma1, gamma2 } => {
                (-gamma1 * r).exp() - big_gamma * (-gamma2 * r).exp()
            }
            KernelFamily::WizardHat => 0.25 * (1.0 - r) * (-r).exp(),
            KernelFamily::DampedCosine { b } => (-b * r).exp() * (b * r.sin() + r.cos()),
            KernelFamily::Zero => return 0.0,
        };
        self.scale * v
    }

    /// True when the spectral measure is a sum of atoms (no density).
    pub fn is_atomic(&self) -> bool {
        match &self.family {
            KernelFamily::CosineSum { .. } => true,
            KernelFamily::CauchyExp { m } | KernelFamily::Laplace { m } => *m == 0.0,
            _ => false,
        }
    }

    /// Positive and negative parts of the spectral density at `xi`; the
    /// density is their difference.
    pub fn density_terms(&self, xi: f64) -> Result<(f64, f64)> {
        let k = xi.abs();
        let k2 = k * k;
        let (pos, neg) = match &self.family {
            KernelFamily::Gaussian { width } => (width * (-0.5 * width * width * k2).exp(), 0.0),
            KernelFamily::Exponential { rate } => (cauchy_density(*rate, k2), 0.0),
            KernelFamily::CauchyExp { m } => {
                if *m == 0.0 {
                    return Err(Error::AtomicSpectrum);
                }
                (cauchy_density(m.sqrt(), k2), 0.0)
            }
            KernelFamily::Laplace { m } => {
                if *m == 0.0 {
                    return Err(Error::AtomicSpectrum);
                }
                let c = (0.5 * m).sqrt();
                ((0.5 * PI).sqrt() / c * (-k / c).exp(), 0.0)
            }
            KernelFamily::Sinc => (if k <= 1.0 { (0.5 * PI).sqrt() } else { 0.0 }, 0.0),
            KernelFamily::CosineSum { .. } => return Err(Error::AtomicSpectrum),
            KernelFamily::MexicanHatPoly => (k2 * (-0.5 * k2).exp(), 0.0),
            KernelFamily::MexicanHatGauss { a, s } => {
                ((-0.5 * k2).exp(), a * s * FRAC_1_SQRT_2 * (-0.25 * s * s * k2).exp())
            }
            KernelFamily::MexicanHatExp { big_gamma, gamma1, gamma2 } => {
                (cauchy_density(*gamma1, k2), big_gamma * cauchy_density(*gamma2, k2))
            }
            KernelFamily::WizardHat => (INV_SQRT_2PI * k2 / ((1.0 + k2) * (1.0 + k2)), 0.0),
            KernelFamily::DampedCosine { b } => {
                let b2 = b * b;
                let den = (b2 + (1.0 + k) * (1.0 + k)) * (b2 + (1.0 - k) * (1.0 - k));
                (INV_SQRT_2PI * 4.0 * b * (b2 + 1.0) / den, 0.0)
            }
            KernelFamily::Zero => return Ok((0.0, 0.0)),
        };
        Ok((self.scale * pos, self.scale * neg))
    }

    /// Closed-form spectral density `g(ξ)`.
    pub fn fourier_density(&self, xi: f64) -> Result<f64> {
        let (pos, neg) = self.density_terms(xi)?;
        Ok(pos - neg)
    }

    /// Analytic thresholds of the parametrized families, as `(name, value)`.
    pub fn thresholds(&self) -> Vec<(&'static str, f64)> {
        match &self.family {
            KernelFamily::MexicanHatGauss { a, .. } => vec![("s_min", SQRT_2), ("s_max", SQRT_2 / a)],
            KernelFamily::MexicanHatExp { gamma1, gamma2, .. } => vec![("big_gamma_max", gamma2 / gamma1)],
            _ => Vec::new(),
        }
    }

    /// Analytic nonnegative-definiteness verdict.
    pub fn classify(&self) -> Classification {
        match &self.family {
            KernelFamily::MexicanHatGauss { a, s } => {
                if SQRT_2 <= *s && *s <= SQRT_2 / a {
                    Classification::nonnegative()
                } else {
                    // Negative lobe sits at ξ = 0 above the upper threshold and
                    // beyond the crossing point ξ_c below the lower one.
                    let c = a * s * FRAC_1_SQRT_2;
                    let hi = if *s < SQRT_2 && c < 1.0 {
                        let xc = (4.0 * (1.0 / c).ln() / (2.0 - s * s)).sqrt();
                        3.0 * xc + 10.0
                    } else {
                        20.0
                    };
                    Classification::indefinite(self.density_argmin(hi, 20_001))
                }
            }
            KernelFamily::MexicanHatExp { big_gamma, gamma1, gamma2 } => {
                if *big_gamma <= gamma2 / gamma1 {
                    Classification::nonnegative()
                } else {
                    Classification::indefinite(self.density_argmin(10.0 * gamma1, 20_001))
                }
            }
            _ => Classification::nonnegative(),
        }
    }

    /// Grid argmin of the density over `[0, hi]`.
    fn density_argmin(&self, hi: f64, n: usize) -> f64 {
        let mut best = (0.0, f64::INFINITY);
        for k in 0..n {
            let xi = hi * k as f64 / (n - 1) as f64;
            let g = self.fourier_density(xi).unwrap_or(0.0);
            if g < best.1 {
                best = (xi, g);
            }
        }
        best.0
    }

    /// Minimum eigenvalue of the Gram matrix `[J(xᵢ - xⱼ)]`.
    pub fn gram_min_eigenvalue(&self, points: &[f64]) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let n = points.len();
        let gram = DMatrix::from_fn(n, n, |i, j| self.eval(points[i] - points[j]));
        let eig = SymmetricEigen::new(gram);
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Checks the sign of the density on the uniform grid `ξ_k = k·ξ_max/(n_ξ-1)`.
    ///
    /// A grid point counts as negative when the density falls below `-tol`
    /// times the magnitude of its cancelling terms, so lobes deep in the
    /// tails are still resolved.
    pub fn bochner_numeric_check(&self, opts: &BochnerOptions) -> Result<Classification> {
        if !(opts.xi_max > 0.0) || opts.n_xi < 2 {
            return Err(Error::InvalidParameter(format!(
                "need xi_max > 0 and n_xi >= 2, got {} and {}",
                opts.xi_max, opts.n_xi
            )));
        }
        if self.is_atomic() {
            if !opts.atomic_fallback {
                return Err(Error::AtomicSpectrum);
            }
            return Ok(self.atomic_check(opts.tol));
        }
        let mut worst: Option<(f64, f64)> = None;
        for k in 0..opts.n_xi {
            let xi = opts.xi_max * k as f64 / (opts.n_xi - 1) as f64;
            let (pos, neg) = self.density_terms(xi)?;
            let g = pos - neg;
            let magnitude = (pos + neg).min(1.0);
            if g < 0.0 && g < -opts.tol * magnitude {
                let rel = g / (pos + neg);
                if worst.is_none_or(|(_, w)| rel < w) {
                    worst = Some((xi, rel));
                }
            }
        }
        Ok(match worst {
            Some((xi, _)) => Classification::indefinite(xi),
            None => Classification::nonnegative(),
        })
    }

    fn atomic_check(&self, tol: f64) -> Classification {
        match &self.family {
            KernelFamily::CosineSum { weights, frequencies } => {
                match weights.iter().zip(frequencies).find(|(a, _)| **a < -tol) {
                    Some((_, m)) => Classification::indefinite(*m),
                    None => Classification::nonnegative(),
                }
            }
            // constant kernel: a single positive atom at the origin
            _ => Classification::nonnegative(),
        }
    }

    /// Density by direct quadrature of `(2π)^{-1/2} ∫ J(x) cos(ξx) dx` over
    /// `[-half_width, half_width]` with composite Simpson on `2·panels` cells.
    pub fn quadrature_density(&self, xi: f64, half_width: f64, panels: usize) -> f64 {
        let m = 2 * panels.max(1);
        let h = half_width / m as f64;
        let f = |x: f64| self.eval(x) * (xi * x).cos();
        let mut acc = f(0.0) + f(half_width);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        2.0 * INV_SQRT_2PI * acc * h / 3.0
    }

    /// Grid sign check on quadrature densities; a passing kernel is reported
    /// as [`Verdict::NumericOnly`].
    pub fn bochner_quadrature_check(&self, opts: &BochnerOptions, half_width: f64, panels: usize) -> Classification {
        for k in 0..opts.n_xi.max(2) {
            let xi = opts.xi_max * k as f64 / (opts.n_xi.max(2) - 1) as f64;
            if self.quadrature_density(xi, half_width, panels) < -opts.tol {
                return Classification::indefinite(xi);
            }
        }
        Classification { verdict: Verdict::NumericOnly, witness: None }
    }
}

/// Density of `exp(-b|x|)`: `sqrt(2/π) b / (b² + ξ²)`.
fn cauchy_density(b: f64, k2: f64) -> f64 {
    2.0 * INV_SQRT_2PI * b / (b * b + k2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mh_gauss(a: f64, s: f64) -> KernelSpec {
        KernelSpec::unit(KernelFamily::MexicanHatGauss { a, s }).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(KernelSpec::gaussian(1.0).unwrap().eval(0.0), 1.0);
        let mh = KernelSpec::unit(KernelFamily::MexicanHatPoly).unwrap();
        assert_eq!(mh.eval(1.0), 0.0);
        assert_eq!(mh.eval(0.0), 1.0);
        assert_eq!(KernelSpec::zero().eval(3.0), 0.0);
        assert_eq!(KernelSpec::unit(KernelFamily::Sinc).unwrap().eval(0.0), 1.0);
    }

    #[test]
    fn density_examples() {
        let mh = KernelSpec::unit(KernelFamily::MexicanHatPoly).unwrap();
        assert!((mh.fourier_density(1.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let (a, s) = (0.5, 2.0);
        assert!((mh_gauss(a, s).fourier_density(0.0).unwrap() - (1.0 - a * s / SQRT_2)).abs() < 1e-15);
        let k = KernelSpec::unit(KernelFamily::MexicanHatExp { big_gamma: 0.3, gamma1: 2.0, gamma2: 1.0 }).unwrap();
        // bracketed form 2(1/γ₁ - Γ/γ₂) carries the (2π)^{-1/2} factor in this convention
        let expected = INV_SQRT_2PI * 2.0 * (1.0 / 2.0 - 0.3 / 1.0);
        assert!((k.fourier_density(0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn cosine_sum_is_atomic() {
        let k = KernelSpec::unit(KernelFamily::CosineSum { weights: vec![1.0], frequencies: vec![1.0] }).unwrap();
        assert_eq!(k.fourier_density(0.3), Err(Error::AtomicSpectrum));
        let opts = BochnerOptions { atomic_fallback: false, ..Default::default() };
        assert_eq!(k.bochner_numeric_check(&opts), Err(Error::AtomicSpectrum));
        assert!(k.bochner_numeric_check(&BochnerOptions::default()).unwrap().is_nonnegative());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(mh_gauss(0.5, 2.0).classify().verdict, Verdict::NonnegativeDefinite);
        let c = mh_gauss(0.5, 3.0).classify();
        assert_eq!(c.verdict, Verdict::Indefinite);
        assert_eq!(c.witness, Some(Witness::Frequency(0.0)));
        let k = KernelSpec::unit(KernelFamily::MexicanHatExp { big_gamma: 0.3, gamma1: 2.0, gamma2: 1.0 }).unwrap();
        assert_eq!(k.classify().verdict, Verdict::NonnegativeDefinite);
        let k = KernelSpec::unit(KernelFamily::MexicanHatExp { big_gamma: 0.7, gamma1: 2.0, gamma2: 1.0 }).unwrap();
        assert_eq!(k.classify().verdict, Verdict::Indefinite);
    }

    #[test]
    fn lower_threshold_witness_is_in_the_tail() {
        let k = mh_gauss(0.5, 1.2);
        let c = k.classify();
        let Some(Witness::Frequency(xi)) = c.witness else { panic!("missing witness") };
        assert!(xi > 0.0);
        assert!(k.fourier_density(xi).unwrap() < 0.0);
    }

    #[test]
    fn gram_examples() {
        let cos = KernelSpec::unit(KernelFamily::CosineSum { weights: vec![1.0], frequencies: vec![1.0] }).unwrap();
        assert!(cos.gram_min_eigenvalue(&[0.0, PI]).unwrap().abs() < 1e-15);
        let g = KernelSpec::new(KernelFamily::Gaussian { width: 0.7 }, 2.5).unwrap();
        assert_eq!(g.gram_min_eigenvalue(&[1.3]).unwrap(), 2.5);
        assert_eq!(g.gram_min_eigenvalue(&[]), Err(Error::EmptyPointSet));
    }

    #[test]
    fn numeric_check_examples() {
        let opts = BochnerOptions { xi_max: 20.0, n_xi: 2000, tol: 1e-8, atomic_fallback: false };
        let wiz = KernelSpec::unit(KernelFamily::WizardHat).unwrap();
        assert_eq!(wiz.bochner_numeric_check(&opts).unwrap().verdict, Verdict::NonnegativeDefinite);
        let c = mh_gauss(0.5, 3.0).bochner_numeric_check(&opts).unwrap();
        assert_eq!(c.verdict, Verdict::Indefinite);
        assert_eq!(c.witness, Some(Witness::Frequency(0.0)));
        assert_eq!(KernelSpec::zero().bochner_numeric_check(&opts).unwrap().verdict, Verdict::NonnegativeDefinite);
        let bad = BochnerOptions { n_xi: 1, ..opts };
        assert!(wiz.bochner_numeric_check(&bad).is_err());
    }

    #[test]
    fn quadrature_check_reports_numeric_only() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let opts = BochnerOptions { xi_max: 5.0, n_xi: 51, tol: 1e-8, atomic_fallback: false };
        assert_eq!(g.bochner_quadrature_check(&opts, 12.0, 600).verdict, Verdict::NumericOnly);
        assert!((g.quadrature_density(0.7, 12.0, 600) - g.fourier_density(0.7).unwrap()).abs() < 1e-10);
        assert_eq!(mh_gauss(0.5, 3.0).bochner_quadrature_check(&opts, 20.0, 1000).verdict, Verdict::Indefinite);
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(KernelSpec::unit(KernelFamily::MexicanHatGauss { a: 0.5, s: 0.5 }).is_err());
        assert!(KernelSpec::unit(KernelFamily::MexicanHatGauss { a: 1.5, s: 2.0 }).is_err());
        assert!(KernelSpec::unit(KernelFamily::MexicanHatExp { big_gamma: 0.5, gamma1: 1.0, gamma2: 2.0 }).is_err());
        assert!(KernelSpec::unit(KernelFamily::Gaussian { width: 0.0 }).is_err());
        assert!(KernelSpec::new(KernelFamily::Sinc, -1.0).is_err());
        assert!(KernelSpec::unit(KernelFamily::Laplace { m: -1.0 }).is_err());
        assert!(KernelSpec::unit(KernelFamily::Laplace { m: 0.0 }).unwrap().is_atomic());
    }
}

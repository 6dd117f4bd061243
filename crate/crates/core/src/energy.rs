//! Gain functions, the Nemytskii operator and the energies `Φ`, `Ψ`, `Θ`.
//!
//! `Θ(u) = -Φ(u) + (α/2)‖u‖²₋₁` on `S`. Its `H₋₁` gradient is `αu - K F(u)`,
//! which is exactly the negated Amari drift.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{KernelOperator, SpectralDecomposition, DEFAULT_MEMBERSHIP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainSpec {
    /// `1 / (1 + e^{-s})`
    Sigmoid,
    /// `(tanh s + 1) / 2`
    TanhSigmoid,
    /// `(s + 1)(1 - s)(s - 0.1)`; not globally Lipschitz.
    Cubic,
    Constant(f64),
    Zero,
}

impl GainSpec {
    pub fn f(&self, s: f64) -> f64 {
        match self {
            GainSpec::Sigmoid => {
                if s >= 0.0 {
                    1.0 / (1.0 + (-s).exp())
                } else {
                    let e = s.exp();
                    e / (1.0 + e)
                }
            }
            GainSpec::TanhSigmoid => 0.5 * (s.tanh() + 1.0),
            GainSpec::Cubic => (s + 1.0) * (1.0 - s) * (s - 0.1),
            GainSpec::Constant(c) => *c,
            GainSpec::Zero => 0.0,
        }
    }

    pub fn df(&self, s: f64) -> f64 {
        match self {
            GainSpec::Sigmoid => {
                let f = self.f(s);
                f * (1.0 - f)
            }
            GainSpec::TanhSigmoid => {
                let t = s.tanh();
                0.5 * (1.0 - t * t)
            }
            GainSpec::Cubic => -3.0 * s * s + 0.2 * s + 1.0,
            GainSpec::Constant(_) | GainSpec::Zero => 0.0,
        }
    }

    /// Antiderivative `φ` normalized by `φ(0) = 0`.
    pub fn phi(&self, s: f64) -> f64 {
        match self {
            // ln(1 + e^s) - ln 2
            GainSpec::Sigmoid => softplus(s) - LN_2,
            // (ln cosh s + s) / 2
            GainSpec::TanhSigmoid => 0.5 * (log_cosh(s) + s),
            GainSpec::Cubic => {
                let s2 = s * s;
                -0.25 * s2 * s2 + 0.1 / 3.0 * s2 * s + 0.5 * s2 - 0.1 * s
            }
            GainSpec::Constant(c) => c * s,
            GainSpec::Zero => 0.0,
        }
    }

    /// Global Lipschitz constant, `None` when there is none.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            GainSpec::Sigmoid => Some(0.25),
            GainSpec::TanhSigmoid => Some(0.5),
            GainSpec::Cubic => None,
            GainSpec::Constant(_) | GainSpec::Zero => Some(0.0),
        }
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz().is_some()
    }
}

/// `ln(1 + e^s)` without overflow.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn log_cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Pointwise `F(u)(xⱼ) = f(uⱼ)`.
pub fn nemytskii_f(gain: &GainSpec, u: &Field) -> Field {
    u.map(|v| gain.f(v))
}

pub fn phi_raw(gain: &GainSpec, h: f64, u: &[f64]) -> f64 {
    h * u.iter().map(|&v| gain.phi(v)).sum::<f64>()
}

/// `Φ(u) = ∫ φ(u(x)) dx` by midpoint quadrature.
pub fn phi_functional(gain: &GainSpec, u: &Field) -> f64 {
    phi_raw(gain, u.grid().spacing(), u.values())
}

/// `Ψ(u) = (α/2)‖u‖²₋₁`
pub fn psi_functional(dec: &SpectralDecomposition, alpha: f64, u: &Field, membership_tol: f64) -> Result<f64> {
    let c = dec.coefficients_in_s(u, membership_tol)?;
    Ok(0.5 * alpha * dec.hminus1_sq_from_coeffs(&c))
}

/// `Θ(Σ cᵢ eᵢ)`; needs only the decomposition.
pub fn theta_coeffs(dec: &SpectralDecomposition, gain: &GainSpec, alpha: f64, coeffs: &[f64]) -> f64 {
    let u = dec.reconstruct_raw(coeffs);
    -phi_raw(gain, dec.grid().spacing(), &u) + 0.5 * alpha * dec.hminus1_sq_from_coeffs(coeffs)
}

/// Central difference `(F(u + t h) - F(u - t h)) / (2t)`.
pub fn fd_directional<F>(functional: F, u: &Field, h: &Field, t: f64) -> Result<f64>
where
    F: Fn(&Field) -> Result<f64>,
{
    if t == 0.0 {
        return Err(Error::InvalidParameter("finite-difference step must be nonzero".into()));
    }
    let plus = functional(&u.axpy(t, h)?)?;
    let minus = functional(&u.axpy(-t, h)?)?;
    Ok((plus - minus) / (2.0 * t))
}

/// Everything needed to evaluate `Θ` and its gradient on one grid.
#[derive(Debug, Clone, Copy)]
pub struct EnergyModel<'a> {
    pub op: &'a KernelOperator,
    pub dec: &'a SpectralDecomposition,
    pub gain: GainSpec,
    pub alpha: f64,
    pub membership_tol: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn new(op: &'a KernelOperator, dec: &'a SpectralDecomposition, gain: GainSpec, alpha: f64) -> Self {
        Self { op, dec, gain, alpha, membership_tol: DEFAULT_MEMBERSHIP_TOL }
    }

    pub fn with_membership_tol(mut self, tol: f64) -> Self {
        self.membership_tol = tol;
        self
    }

    pub fn phi(&self, u: &Field) -> f64 {
        phi_functional(&self.gain, u)
    }

    pub fn psi(&self, u: &Field) -> Result<f64> {
        psi_functional(self.dec, self.alpha, u, self.membership_tol)
    }

    pub fn theta(&self, u: &Field) -> Result<f64> {
        Ok(-self.phi(u) + self.psi(u)?)
    }

    /// `Θ` of `Σ cᵢ eᵢ` given mode coefficients.
    pub fn theta_from_coeffs(&self, coeffs: &[f64]) -> f64 {
        theta_coeffs(self.dec, &self.gain, self.alpha, coeffs)
    }

    /// `-αu + K F(u)` on raw grid values; no membership check.
    pub fn drift_raw(&self, u: &[f64]) -> Vec<f64> {
        let fu: Vec<f64> = u.iter().map(|&v| self.gain.f(v)).collect();
        let kf = self.op.apply_raw(&fu);
        u.iter().zip(kf).map(|(x, k)| -self.alpha * x + k).collect()
    }

    /// H₋₁ Riesz representative of `DΘ(u)`: `αu - K F(u)`.
    pub fn grad_theta(&self, u: &Field) -> Result<Field> {
        if u.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        self.dec.coefficients_in_s(u, self.membership_tol)?;
        let kf = self.op.apply(&nemytskii_f(&self.gain, u))?;
        u.scaled(self.alpha).sub(&kf)
    }

    /// `DΘ(u) h` evaluated as `(grad Θ(u), h)₋₁`.
    pub fn directional(&self, u: &Field, h: &Field) -> Result<f64> {
        let g = self.grad_theta(u)?;
        self.dec.inner_hminus1(&g, h, self.membership_tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, Grid};
    use crate::kernel::KernelSpec;
    use crate::operator::{DEFAULT_NEG_TOL, DEFAULT_REL_TOL};

    const GAINS: [GainSpec; 5] =
        [GainSpec::Sigmoid, GainSpec::TanhSigmoid, GainSpec::Cubic, GainSpec::Constant(0.7), GainSpec::Zero];

    #[test]
    fn phi_is_antiderivative_and_vanishes_at_zero() {
        for gain in GAINS {
            assert_eq!(gain.phi(0.0), 0.0, "{gain:?}");
            for k in 0..=200 {
                let s = -10.0 + 0.1 * k as f64;
                let d = 1e-4;
                let fd = (gain.phi(s + d) - gain.phi(s - d)) / (2.0 * d);
                let f = gain.f(s);
                assert!((fd - f).abs() <= 1e-6 * f.abs().max(1.0), "{gain:?} at {s}: {fd} vs {f}");
                let dfd = (gain.f(s + d) - gain.f(s - d)) / (2.0 * d);
                assert!((dfd - gain.df(s)).abs() <= 1e-6 * gain.df(s).abs().max(1.0));
            }
        }
    }

    #[test]
    fn sigmoid_primitive_offset() {
        // unshifted primitive ln(1 + e^s) equals φ + ln 2
        assert!((softplus(0.0) - LN_2).abs() < 1e-16);
        let g = Grid::new(0.0, 1.0, 10, BoundaryMode::Truncated).unwrap();
        let u = Field::zeros(g);
        assert_eq!(phi_functional(&GainSpec::Sigmoid, &u), 0.0);
        let unshifted: f64 = g.spacing() * u.values().iter().map(|&v| softplus(v)).sum::<f64>();
        assert!((unshifted - LN_2).abs() < 1e-15);
        assert!((unshifted - phi_functional(&GainSpec::Sigmoid, &u) - LN_2 * g.length()).abs() < 1e-15);
        assert!(softplus(800.0).is_finite() && softplus(-800.0) >= 0.0);
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(GainSpec::Sigmoid.lipschitz(), Some(0.25));
        assert_eq!(GainSpec::TanhSigmoid.lipschitz(), Some(0.5));
        assert!(!GainSpec::Cubic.is_lipschitz());
        for s in [-3.0, -0.5, 0.0, 0.2, 4.0] {
            assert!(GainSpec::Sigmoid.df(s) <= 0.25 + 1e-16);
            assert!(GainSpec::TanhSigmoid.df(s) <= 0.5 + 1e-16);
        }
    }

    #[test]
    fn nemytskii_examples() {
        let g = Grid::new(-1.0, 1.0, 5, BoundaryMode::Truncated).unwrap();
        let zero = Field::zeros(g);
        assert!(nemytskii_f(&GainSpec::Sigmoid, &zero).values().iter().all(|v| *v == 0.5));
        let any = Field::from_fn(g, |x| 3.0 * x);
        assert!(nemytskii_f(&GainSpec::Constant(2.5), &any).values().iter().all(|v| *v == 2.5));
        let one = Field::constant(g, 1.0);
        assert!(nemytskii_f(&GainSpec::Cubic, &one).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phi_examples() {
        let g = Grid::new(0.0, 1.0, 8, BoundaryMode::Truncated).unwrap();
        let u = Field::from_fn(g, |x| x * x - 0.3);
        let mass = g.spacing() * u.values().iter().sum::<f64>();
        assert!((phi_functional(&GainSpec::Constant(1.7), &u) - 1.7 * mass).abs() < 1e-15);
        assert_eq!(phi_functional(&GainSpec::Zero, &u), 0.0);
    }

    fn setup() -> (KernelOperator, SpectralDecomposition) {
        let g = Grid::new(-5.0, 5.0, 64, BoundaryMode::Truncated).unwrap();
        let op = KernelOperator::new(KernelSpec::gaussian(1.0).unwrap(), g);
        let dec = op.decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL).unwrap();
        (op, dec)
    }

    #[test]
    fn psi_and_theta_examples() {
        let (op, dec) = setup();
        let alpha = 1.3;
        let model = EnergyModel::new(&op, &dec, GainSpec::Zero, alpha);
        let u = dec.eigenfield(2).scaled(dec.lambda(2).sqrt());
        assert!((model.psi(&u).unwrap() - alpha / 2.0).abs() < 1e-10);
        assert!((model.theta(&u).unwrap() - alpha / 2.0).abs() < 1e-10);
        let zero = Field::zeros(*op.grid());
        assert_eq!(model.psi(&zero).unwrap(), 0.0);
        let sig = EnergyModel::new(&op, &dec, GainSpec::Sigmoid, alpha);
        assert_eq!(sig.theta(&zero).unwrap(), 0.0);
        let v = dec.reconstruct(&[0.3, -0.2, 0.1]).unwrap();
        let p1 = sig.psi(&v).unwrap();
        let p2 = sig.psi(&v.scaled(2.0)).unwrap();
        assert!((p2 - 4.0 * p1).abs() < 1e-12 * p2);
        let c = [0.3, -0.2, 0.1];
        assert!((sig.theta_from_coeffs(&c) - sig.theta(&v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let (op, dec) = setup();
        let u = dec.reconstruct(&[0.5, 0.1, -0.4, 0.2]).unwrap();
        let zero_gain = EnergyModel::new(&op, &dec, GainSpec::Zero, 0.7);
        let g = zero_gain.grad_theta(&u).unwrap();
        assert!(g.sub(&u.scaled(0.7)).unwrap().max_abs() < 1e-15);

        let model = EnergyModel::new(&op, &dec, GainSpec::TanhSigmoid, 0.7);
        let grad = model.grad_theta(&u).unwrap();
        let drift = model.drift_raw(u.values());
        for (a, b) in grad.values().iter().zip(drift) {
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn fd_directional_examples() {
        let (op, dec) = setup();
        let g = *op.grid();
        let u = Field::from_fn(g, |x| (0.4 * x).sin());
        let h = Field::from_fn(g, |x| (-0.1 * x * x).exp());
        // linear functional: exact
        let lin = |v: &Field| Ok(g.inner_raw(v.values(), h.values()) * 2.0 + 1.0);
        for t in [1.0, 1e-3] {
            let d = fd_directional(lin, &u, &h, t).unwrap();
            assert!((d - 2.0 * h.norm_h().powi(2)).abs() < 1e-12);
        }
        assert!(fd_directional(lin, &u, &h, 0.0).is_err());

        // quadratic Ψ: exact up to rounding
        let model = EnergyModel::new(&op, &dec, GainSpec::Sigmoid, 1.0);
        let us = dec.reconstruct(&[0.4, 0.2, 0.1]).unwrap();
        let hs = dec.reconstruct(&[-0.1, 0.3, 0.2]).unwrap();
        let exact = dec.inner_hminus1(&us, &hs, 1e-6).unwrap();
        for t in [1.0, 1e-2] {
            let d = fd_directional(|v| model.psi(v), &us, &hs, t).unwrap();
            assert!((d - exact).abs() < 1e-10 * exact.abs().max(1.0));
        }

        // Φ with the sigmoid: matches (F(u), h)_H at O(t²)
        let u = u.map(|v| v + 0.7);
        let exact = g.inner_raw(nemytskii_f(&GainSpec::Sigmoid, &u).values(), h.values());
        let mut errs = Vec::new();
        for t in [1e-2, 1e-3] {
            let d = fd_directional(|v| Ok(phi_functional(&GainSpec::Sigmoid, v)), &u, &h, t).unwrap();
            errs.push((d - exact).abs());
        }
        assert!(errs[1] < errs[0] / 50.0, "{errs:?}");
    }
}

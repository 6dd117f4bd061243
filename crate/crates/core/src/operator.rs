//! The discretized integral operator `K g = ∫ J(· - y) g(y) dy`, its spectral
//! decomposition, and the nonlocal norms on `S = (ker K)^⊥`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::grid::{BoundaryMode, Field, Grid};
use crate::kernel::KernelSpec;

/// Default relative truncation threshold for the spectrum.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Default relative tolerance for negative eigenvalues.
pub const DEFAULT_NEG_TOL: f64 = 1e-8;
/// Default relative residual allowed when testing membership in `S`.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-6;

/// `Kᵢⱼ = h · J(d(xᵢ, xⱼ))`; symmetric by construction.
pub fn build_operator_matrix(spec: &KernelSpec, grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    let h = grid.spacing();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = h * spec.eval(grid.offset(i, j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    Dense,
    Fft,
    /// FFT from 128 nodes up, dense below.
    Auto,
}

/// Circulant embedding of the (Toeplitz or circulant) operator.
struct FftConvolver {
    len: usize,
    kernel_hat: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftConvolver {
    fn new(spec: &KernelSpec, grid: &Grid) -> Self {
        let n = grid.len();
        let h = grid.spacing();
        let len = match grid.boundary() {
            BoundaryMode::Periodic => n,
            BoundaryMode::Truncated => 2 * n,
        };
        let mut col = vec![Complex::new(0.0, 0.0); len];
        match grid.boundary() {
            BoundaryMode::Periodic => {
                for (m, c) in col.iter_mut().enumerate() {
                    *c = Complex::new(h * spec.eval(grid.offset(m, 0)), 0.0);
                }
            }
            BoundaryMode::Truncated => {
                for m in 0..n {
                    let v = h * spec.eval(m as f64 * h);
                    col[m] = Complex::new(v, 0.0);
                    if m > 0 {
                        col[len - m] = Complex::new(v, 0.0);
                    }
                }
            }
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        forward.process(&mut col);
        Self { len, kernel_hat: col, forward, inverse }
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (b, v) in buf.iter_mut().zip(g) {
            *b = Complex::new(*v, 0.0);
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf[..g.len()].iter().map(|c| c.re * scale).collect()
    }
}

/// The discretized `K` on a grid, with dense and FFT application paths.
pub struct KernelOperator {
    spec: KernelSpec,
    grid: Grid,
    matrix: DMatrix<f64>,
    fft: FftConvolver,
    mode: ApplyMode,
}

impl std::fmt::Debug for KernelOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelOperator")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("mode", &self.mode)
            .finish()
    }
}

impl KernelOperator {
    pub fn new(spec: KernelSpec, grid: Grid) -> Self {
        Self::with_mode(spec, grid, ApplyMode::Auto)
    }

    pub fn with_mode(spec: KernelSpec, grid: Grid, mode: ApplyMode) -> Self {
        let matrix = build_operator_matrix(&spec, &grid);
        let fft = FftConvolver::new(&spec, &grid);
        Self { spec, grid, matrix, fft, mode }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode(&self) -> ApplyMode {
        self.mode
    }

    pub fn uses_fft(&self) -> bool {
        match self.mode {
            ApplyMode::Dense => false,
            ApplyMode::Fft => true,
            ApplyMode::Auto => self.grid.len() >= 128,
        }
    }

    pub fn apply_dense(&self, g: &[f64]) -> Vec<f64> {
        // K is symmetric, so row i equals column i (contiguous in storage).
        (0..self.grid.len()).map(|i| self.matrix.column(i).iter().zip(g).map(|(k, v)| k * v).sum()).collect()
    }

    pub fn apply_fft(&self, g: &[f64]) -> Vec<f64> {
        self.fft.apply(g)
    }

    pub fn apply_raw(&self, g: &[f64]) -> Vec<f64> {
        if self.uses_fft() {
            self.apply_fft(g)
        } else {
            self.apply_dense(g)
        }
    }

    pub fn apply(&self, g: &Field) -> Result<Field> {
        if g.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Field::new(self.grid, self.apply_raw(g.values()))
    }

    /// Spectral decomposition of this operator.
    pub fn decompose(&self, rel_tol: f64, neg_tol: f64) -> Result<SpectralDecomposition> {
        spectral_decompose(&self.matrix, &self.grid, rel_tol, neg_tol)
    }
}

/// FFT application of `K` without keeping the operator around.
pub fn apply_k_fft(spec: &KernelSpec, grid: &Grid, g: &Field) -> Result<Field> {
    if g.grid() != grid {
        return Err(Error::GridMismatch);
    }
    Field::new(*grid, FftConvolver::new(spec, grid).apply(g.values()))
}

/// Retained eigenpairs `(λᵢ, eᵢ)` of `K` with H-orthonormal eigenfields.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Grid,
    lambdas: Vec<f64>,
    /// n × r, column i is eᵢ sampled on the grid.
    fields: DMatrix<f64>,
    threshold: f64,
    discarded_min: Option<f64>,
}

/// Symmetric eigendecomposition of `k` (an operator matrix on `grid`).
///
/// Eigenvalues above `rel_tol · λ_max` are kept. Any eigenvalue below
/// `-neg_tol · max|λ|` is reported as [`Error::NotNonnegative`].
pub fn spectral_decompose(k: &DMatrix<f64>, grid: &Grid, rel_tol: f64, neg_tol: f64) -> Result<SpectralDecomposition> {
    let n = grid.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch { left: k.nrows(), right: n });
    }
    let eig = SymmetricEigen::new(k.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -neg_tol * max_abs {
        return Err(Error::NotNonnegative { min_eigenvalue: min, tolerance: neg_tol * max_abs });
    }

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let threshold = rel_tol * lambda_max;
    let rank = order.iter().take_while(|&&i| eig.eigenvalues[i] > threshold && eig.eigenvalues[i] > 0.0).count();
    let discarded_min = order[rank..].iter().map(|&i| eig.eigenvalues[i]).reduce(f64::min);

    let inv_sqrt_h = 1.0 / grid.spacing().sqrt();
    let mut fields = DMatrix::zeros(n, rank);
    let mut lambdas = Vec::with_capacity(rank);
    for (c, &i) in order[..rank].iter().enumerate() {
        lambdas.push(eig.eigenvalues[i]);
        let v = eig.eigenvectors.column(i);
        // sign convention: the largest-magnitude entry is positive
        let pivot = v.iter().fold(0.0f64, |p, &x| if x.abs() > p.abs() { x } else { p });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            fields[(r, c)] = sign * v[r] * inv_sqrt_h;
        }
    }
    Ok(SpectralDecomposition { grid: *grid, lambdas, fields, threshold, discarded_min })
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Smallest discarded eigenvalue, if any were discarded.
    pub fn discarded_min(&self) -> Option<f64> {
        self.discarded_min
    }

    pub fn eigenfield_raw(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.fields.as_slice()[i * n..(i + 1) * n]
    }

    pub fn eigenfield(&self, i: usize) -> Field {
        Field::new(self.grid, self.eigenfield_raw(i).to_vec()).expect("eigenfield length matches grid")
    }

    /// `⟨g, eᵢ⟩_H` for the first `modes` eigenfields.
    pub fn coefficients_raw(&self, g: &[f64], modes: usize) -> Vec<f64> {
        (0..modes.min(self.rank())).map(|i| self.grid.inner_raw(g, self.eigenfield_raw(i))).collect()
    }

    pub fn coefficients(&self, g: &Field) -> Result<Vec<f64>> {
        self.check(g)?;
        Ok(self.coefficients_raw(g.values(), self.rank()))
    }

    /// `Σ cᵢ eᵢ` over the given coefficients.
    pub fn reconstruct_raw(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (i, c) in coeffs.iter().enumerate().take(self.rank()) {
            if *c != 0.0 {
                for (o, e) in out.iter_mut().zip(self.eigenfield_raw(i)) {
                    *o += c * e;
                }
            }
        }
        out
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Field> {
        if coeffs.len() > self.rank() {
            return Err(Error::RankExceeded { requested: coeffs.len(), rank: self.rank() });
        }
        Field::new(self.grid, self.reconstruct_raw(coeffs))
    }

    fn check(&self, g: &Field) -> Result<()> {
        if g.grid() == &self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Orthogonal projection onto `S` together with the H-norm of the remainder.
    pub fn project_s(&self, g: &Field) -> Result<(Field, f64)> {
        let coeffs = self.coefficients(g)?;
        let proj = self.reconstruct_raw(&coeffs);
        let rest: Vec<f64> = g.values().iter().zip(&proj).map(|(a, b)| a - b).collect();
        let residual = self.grid.norm_raw(&rest);
        Ok((Field::new(self.grid, proj)?, residual))
    }

    /// Coefficients of `g`, after checking `g ∈ S` up to `membership_tol · ‖g‖_H`.
    pub fn coefficients_in_s(&self, g: &Field, membership_tol: f64) -> Result<Vec<f64>> {
        self.check(g)?;
        let coeffs = self.coefficients_raw(g.values(), self.rank());
        let proj = self.reconstruct_raw(&coeffs);
        let rest: Vec<f64> = g.values().iter().zip(&proj).map(|(a, b)| a - b).collect();
        let residual = self.grid.norm_raw(&rest);
        let allowed = membership_tol * g.norm_h();
        if residual > allowed {
            return Err(Error::NotInS { residual, allowed });
        }
        Ok(coeffs)
    }

    /// `Σ cᵢ² / λᵢ` for mode coefficients.
    pub fn hminus1_sq_from_coeffs(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.lambdas).map(|(c, l)| c * c / l).sum()
    }

    pub fn norm_hminus1(&self, g: &Field, membership_tol: f64) -> Result<f64> {
        let c = self.coefficients_in_s(g, membership_tol)?;
        Ok(self.hminus1_sq_from_coeffs(&c).sqrt())
    }

    /// `(f, g)₋₁ = Σ λᵢ⁻¹ ⟨f, eᵢ⟩⟨g, eᵢ⟩`
    pub fn inner_hminus1(&self, f: &Field, g: &Field, membership_tol: f64) -> Result<f64> {
        let cf = self.coefficients_in_s(f, membership_tol)?;
        let cg = self.coefficients_in_s(g, membership_tol)?;
        Ok(cf.iter().zip(&cg).zip(&self.lambdas).map(|((a, b), l)| a * b / l).sum())
    }

    /// `(Σ λᵢ ⟨g, eᵢ⟩²)^{1/2}`; vanishes on `ker K`.
    pub fn norm_hplus1(&self, g: &Field) -> Result<f64> {
        let c = self.coefficients(g)?;
        Ok(c.iter().zip(&self.lambdas).map(|(c, l)| l * c * c).sum::<f64>().sqrt())
    }

    /// Spectrum as CSV: `index,lambda`, descending.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,lambda")?;
        for (i, l) in self.lambdas.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, fmt_f64(*l))?;
        }
        Ok(())
    }
}

/// Running sums of `bᵢ² / λᵢ` for the jointly-diagonal noise condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption5Report {
    pub partial_sums: Vec<f64>,
    /// Set when the terms do not decay: the mean of the second half of the
    /// terms is at least half the mean of the first half.
    pub growth_flag: bool,
}

pub fn check_assumption5(lambdas: &[f64], b_coeffs: &[f64], n: usize) -> Result<Assumption5Report> {
    if lambdas.len() < n || b_coeffs.len() < n {
        return Err(Error::DimensionMismatch { left: lambdas.len().min(b_coeffs.len()), right: n });
    }
    if let Some(index) = lambdas[..n].iter().position(|l| !(*l > 0.0)) {
        return Err(Error::NonpositiveEigenvalue { index });
    }
    let terms: Vec<f64> = (0..n).map(|i| b_coeffs[i] * b_coeffs[i] / lambdas[i]).collect();
    let partial_sums = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let half = n / 2;
    let growth_flag = if half == 0 {
        false
    } else {
        let head = terms[..half].iter().sum::<f64>() / half as f64;
        let tail = terms[half..].iter().sum::<f64>() / (n - half) as f64;
        head > 0.0 && tail >= 0.5 * head
    };
    Ok(Assumption5Report { partial_sums, growth_flag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_h;
    use crate::kernel::KernelFamily;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n, BoundaryMode::Truncated).unwrap()
    }

    #[test]
    fn constant_kernel_matrix() {
        let g = unit_grid(9);
        let op = KernelOperator::new(KernelSpec::constant(1.0).unwrap(), g);
        assert!(op.matrix().iter().all(|v| (v - g.spacing()).abs() < 1e-15));
        let k1 = op.apply(&Field::constant(g, 1.0)).unwrap();
        assert!(k1.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn gaussian_diagonal_and_symmetry() {
        let g = Grid::new(-2.0, 3.0, 21, BoundaryMode::Periodic).unwrap();
        let m = build_operator_matrix(&KernelSpec::gaussian(0.8).unwrap(), &g);
        for i in 0..21 {
            assert_eq!(m[(i, i)], g.spacing());
        }
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn zero_kernel_fft() {
        let g = unit_grid(16);
        let f = Field::from_fn(g, |x| x.sin());
        let out = apply_k_fft(&KernelSpec::zero(), &g, &f).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_kernel_rank_one() {
        let g = unit_grid(10);
        let op = KernelOperator::new(KernelSpec::constant(1.0).unwrap(), g);
        let dec = op.decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL).unwrap();
        assert_eq!(dec.rank(), 1);
        assert!((dec.lambda(0) - 1.0).abs() < 1e-12);
        assert!(dec.eigenfield(0).values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn indefinite_mexican_hat_is_rejected() {
        let g = Grid::new(-10.0, 10.0, 200, BoundaryMode::Truncated).unwrap();
        let spec = KernelSpec::unit(KernelFamily::MexicanHatGauss { a: 0.5, s: 3.0 }).unwrap();
        let err = KernelOperator::new(spec, g).decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL).unwrap_err();
        assert!(matches!(err, Error::NotNonnegative { .. }));
    }

    #[test]
    fn projection_examples() {
        let g = Grid::new(-4.0, 4.0, 64, BoundaryMode::Truncated).unwrap();
        let dec = KernelOperator::new(KernelSpec::gaussian(1.0).unwrap(), g).decompose(1e-6, DEFAULT_NEG_TOL).unwrap();
        assert!(dec.rank() < g.len());
        let e1 = dec.eigenfield(0);
        let (p, res) = dec.project_s(&e1).unwrap();
        assert!(res < 1e-12);
        assert!(p.sub(&e1).unwrap().norm_h() < 1e-12);

        // a kernel direction: remove the S-part of an arbitrary field
        let v = Field::from_fn(g, |x| (3.0 * x).cos() + x);
        let (pv, _) = dec.project_s(&v).unwrap();
        let q = v.sub(&pv).unwrap();
        let q = q.scaled(0.5 / q.norm_h());
        let (pq, res) = dec.project_s(&q).unwrap();
        assert!(pq.norm_h() < 1e-10);
        assert!((res - 0.5).abs() < 1e-10);

        let mixed = e1.add(&q).unwrap();
        let (_, res) = dec.project_s(&mixed).unwrap();
        assert!((res - 0.5).abs() < 1e-10);
        assert!(matches!(dec.norm_hminus1(&mixed, 1e-6), Err(Error::NotInS { .. })));
        assert!(dec.norm_hplus1(&q).unwrap() < 1e-6);
    }

    #[test]
    fn norm_examples() {
        let g = Grid::new(-10.0, 10.0, 96, BoundaryMode::Periodic).unwrap();
        let dec = KernelOperator::new(KernelSpec::gaussian(1.0).unwrap(), g)
            .decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL)
            .unwrap();
        for i in [0, 1, 4] {
            let l = dec.lambda(i);
            let e = dec.eigenfield(i);
            let n = dec.norm_hminus1(&e, 1e-8).unwrap();
            assert!((n - l.powf(-0.5)).abs() < 1e-9 * l.powf(-0.5));
            let n = dec.norm_hminus1(&e.scaled(l.sqrt()), 1e-8).unwrap();
            assert!((n - 1.0).abs() < 1e-9);
            assert!((dec.norm_hplus1(&e).unwrap() - l.sqrt()).abs() < 1e-12);
        }
        assert_eq!(dec.norm_hplus1(&Field::zeros(g)).unwrap(), 0.0);
        assert_eq!(dec.norm_hminus1(&Field::zeros(g), 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn eigenfields_are_orthonormal_eigenvectors() {
        let g = Grid::new(-5.0, 5.0, 60, BoundaryMode::Truncated).unwrap();
        let op = KernelOperator::new(KernelSpec::unit(KernelFamily::Exponential { rate: 1.0 }).unwrap(), g);
        let dec = op.decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL).unwrap();
        assert!(dec.rank() <= g.len());
        let l1 = dec.lambda(0);
        for i in 0..dec.rank() {
            let ei = dec.eigenfield(i);
            for j in 0..dec.rank() {
                let ip = inner_h(&ei, &dec.eigenfield(j)).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({i},{j}) -> {ip}");
            }
            let r = op.apply(&ei).unwrap().axpy(-dec.lambda(i), &ei).unwrap();
            assert!(r.norm_h() < 1e-8 * l1);
            assert!(dec.lambda(i) > 0.0);
        }
    }

    #[test]
    fn spectrum_csv() {
        let g = unit_grid(4);
        let dec = KernelOperator::new(KernelSpec::constant(2.0).unwrap(), g)
            .decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL)
            .unwrap();
        let mut buf = Vec::new();
        dec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,lambda"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "1");
        assert!((row[1].parse::<f64>().unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn assumption5_examples() {
        let lambdas = [2.0, 1.0, 0.5, 0.25, 0.125, 0.0625];
        let r = check_assumption5(&lambdas, &lambdas, 6).unwrap();
        let mut trace = 0.0;
        for (s, l) in r.partial_sums.iter().zip(lambdas) {
            trace += l;
            assert!((s - trace).abs() < 1e-15);
        }
        assert!(!r.growth_flag);

        let roots: Vec<f64> = lambdas.iter().map(|l: &f64| l.sqrt()).collect();
        let r = check_assumption5(&lambdas, &roots, 6).unwrap();
        for (k, s) in r.partial_sums.iter().enumerate() {
            assert!((s - (k + 1) as f64).abs() < 1e-12);
        }
        assert!(r.growth_flag);

        let r = check_assumption5(&lambdas, &[0.0; 6], 6).unwrap();
        assert!(r.partial_sums.iter().all(|s| *s == 0.0));
        assert!(!r.growth_flag);

        assert_eq!(check_assumption5(&[1.0, 0.0], &[1.0, 1.0], 2), Err(Error::NonpositiveEigenvalue { index: 1 }));
    }
}

//! Inverse elliptic operators on mean-zero fields: the exact discrete
//! inverse Laplacian (FFT diagonalization of the periodic stencil), the
//! `H^{-1}` norm built on it, and a matrix-free solver for the weighted
//! operator `L_g(psi) = -div(g grad psi)` together with its norm.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::grid::{face_average, for_each_line, laplacian, CellField, FaceVector, GridSpec};
use crate::krylov::conjugate_gradient;

/// Relative mean tolerance below which a right-hand side counts as mean-zero.
pub const MEAN_ZERO_REL: f64 = 1e-12;
/// Relative residual contract of the inverse Laplacian.
pub const INV_LAPLACIAN_RESIDUAL_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EllipticError {
    #[error("right-hand side is not mean-zero: |mean| = {mean:e} vs {limit:e} (project first)")]
    NotMeanZero { mean: f64, limit: f64 },
    #[error("weight must be pointwise positive, min = {min:e}")]
    NonPositiveWeight { min: f64 },
    #[error("weighted solve did not converge in {iterations} iterations, residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("inverse Laplacian residual {residual:e} exceeds contract {target:e}")]
    ResidualContract { residual: f64, target: f64 },
}

/// Exact inverse of `-Delta_h` on mean-zero periodic fields.
///
/// The centered periodic stencil is diagonal in the discrete Fourier basis
/// with eigenvalues `lambda(k) = (4/h^2) sum_axis sin^2(pi k_axis / N)`;
/// `lambda(0) = 0` is the constant kernel and is pinned to zero.
pub struct SpectralPoissonSolver {
    grid: GridSpec,
    symbol: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralPoissonSolver {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.cells_per_axis();
        let h = grid.spacing();
        let total = grid.num_cells();
        let mut symbol = vec![0.0; total];
        let scale = 4.0 / (h * h);
        for (c, lam) in symbol.iter_mut().enumerate() {
            let mut rest = c;
            let mut acc = 0.0;
            for _ in 0..grid.dim() {
                let k = rest % n;
                rest /= n;
                let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
                acc += scale * s * s;
            }
            *lam = acc;
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        SpectralPoissonSolver {
            grid,
            symbol,
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn transform(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.cells_per_axis();
        let total = buf.len();
        for &ax in self.grid.axes() {
            let s = self.grid.stride(ax);
            if s == 1 {
                // contiguous lines: batch over the whole buffer
                fft.process(buf);
            } else {
                let mut line = vec![Complex::new(0.0, 0.0); n];
                for_each_line(n, s, total, |base| {
                    for (k, l) in line.iter_mut().enumerate() {
                        *l = buf[base + k * s];
                    }
                    fft.process(&mut line);
                    for (k, l) in line.iter().enumerate() {
                        buf[base + k * s] = *l;
                    }
                });
            }
        }
    }

    fn solve_unchecked(&self, f: &CellField) -> CellField {
        let total = self.grid.num_cells();
        let mut buf: Vec<Complex<f64>> = f.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (b, &lam) in buf.iter_mut().zip(&self.symbol) {
            if lam > 0.0 {
                *b *= 1.0 / lam;
            } else {
                *b = Complex::new(0.0, 0.0);
            }
        }
        self.transform(&mut buf, &self.inverse);
        let norm = 1.0 / total as f64;
        let mut out = CellField::zeros(self.grid);
        for (o, b) in out.values_mut().iter_mut().zip(&buf) {
            *o = b.re * norm;
        }
        out.project_mean_zero_in_place();
        out
    }

    /// Solves `-Delta_h psi = f` for mean-zero `f`, returning the mean-zero
    /// solution with relative residual at most `INV_LAPLACIAN_RESIDUAL_REL`.
    pub fn inv_laplacian(&self, f: &CellField) -> Result<CellField, EllipticError> {
        assert_eq!(f.grid(), self.grid, "field grid does not match solver");
        let fnorm = f.l2_norm();
        let mean = f.mean();
        let limit = MEAN_ZERO_REL * fnorm;
        if mean.abs() > limit {
            return Err(EllipticError::NotMeanZero {
                mean: mean.abs(),
                limit,
            });
        }
        let mut psi = self.solve_unchecked(f);
        if fnorm == 0.0 {
            return Ok(psi);
        }
        // -Delta psi - f, one refinement pass if rounding pushed it over
        let target = INV_LAPLACIAN_RESIDUAL_REL * fnorm;
        let mut residual = self.residual_field(&psi, f);
        let mut rnorm = residual.l2_norm();
        if rnorm > 0.5 * target {
            residual.project_mean_zero_in_place();
            let corr = self.solve_unchecked(&residual);
            psi.axpy(1.0, &corr);
            psi.project_mean_zero_in_place();
            residual = self.residual_field(&psi, f);
            rnorm = residual.l2_norm();
        }
        if rnorm > target {
            return Err(EllipticError::ResidualContract {
                residual: rnorm,
                target,
            });
        }
        Ok(psi)
    }

    fn residual_field(&self, psi: &CellField, f: &CellField) -> CellField {
        // f - (-Delta psi) = f + Delta psi
        let mut r = laplacian(psi);
        r.axpy(1.0, f);
        r
    }

    /// `|f|_{-1,h} = sqrt(<f, (-Delta_h)^{-1} f>)` on mean-zero fields.
    pub fn hminus1_norm(&self, f: &CellField) -> Result<f64, EllipticError> {
        let psi = self.inv_laplacian(f)?;
        Ok(f.inner(&psi).max(0.0).sqrt())
    }
}

/// Matrix-free solver for `L_g(psi) = -div(g grad psi) = f` on mean-zero
/// right-hand sides, with the induced norm `|f|_{L_g^{-1}}`.
///
/// The weight may be given at cell centers (averaged onto faces, the form
/// the operator takes in the transport scheme) or directly on faces.
pub struct WeightedEllipticSolver {
    face_weight: FaceVector,
    tol: f64,
    max_iters: usize,
}

pub const WEIGHTED_SOLVE_TOL: f64 = 1e-10;

impl WeightedEllipticSolver {
    pub fn with_cell_weight(g: &CellField) -> Result<Self, EllipticError> {
        let min = g.min_value();
        if !(min > 0.0) {
            return Err(EllipticError::NonPositiveWeight { min });
        }
        let comps = g.grid().axes().iter().map(|&ax| face_average(g, ax)).collect();
        Ok(WeightedEllipticSolver {
            face_weight: FaceVector::from_components(comps),
            tol: WEIGHTED_SOLVE_TOL,
            max_iters: default_max_iters(g.grid()),
        })
    }

    pub fn with_face_weight(w: FaceVector) -> Result<Self, EllipticError> {
        let min = w.min_value();
        if !(min > 0.0) {
            return Err(EllipticError::NonPositiveWeight { min });
        }
        let max_iters = default_max_iters(w.grid());
        Ok(WeightedEllipticSolver {
            face_weight: w,
            tol: WEIGHTED_SOLVE_TOL,
            max_iters,
        })
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iterations(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    /// Applies `L_g(psi) = -div(g grad psi)`.
    pub fn apply(&self, psi: &CellField) -> CellField {
        let mut out = CellField::zeros(psi.grid());
        crate::grid::add_flux_divergence_scaled(&self.face_weight, psi, -1.0, &mut out);
        out
    }

    /// Solves for the mean-zero `psi` with `L_g psi = f`.
    pub fn solve(&self, f: &CellField) -> Result<CellField, EllipticError> {
        let grid = f.grid();
        assert_eq!(grid, self.face_weight.grid(), "field grid does not match solver");
        let fnorm = f.l2_norm();
        let mean = f.mean();
        let limit = MEAN_ZERO_REL * fnorm;
        if mean.abs() > limit {
            return Err(EllipticError::NotMeanZero {
                mean: mean.abs(),
                limit,
            });
        }
        let mut scratch = FaceVector::zeros(grid);
        let weight = &self.face_weight;
        let mut op = |x: &CellField, out: &mut CellField| {
            out.fill(0.0);
            crate::grid::add_flux_divergence_scaled_with(weight, x, -1.0, out, &mut scratch);
        };
        let (psi, outcome) = conjugate_gradient(&mut op, f, CellField::zeros(grid), self.tol, self.max_iters, true);
        if !outcome.converged {
            return Err(EllipticError::NoConvergence {
                iterations: outcome.iterations,
                residual: outcome.residual,
            });
        }
        Ok(psi)
    }

    /// `|f|_{L_g^{-1}} = sqrt(<f, L_g^{-1} f>)`.
    pub fn norm(&self, f: &CellField) -> Result<f64, EllipticError> {
        let psi = self.solve(f)?;
        Ok(f.inner(&psi).max(0.0).sqrt())
    }
}

fn default_max_iters(grid: GridSpec) -> usize {
    10 * grid.cells_per_axis() * grid.cells_per_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian;
    use crate::util::test_fields::{smooth_positive, wavy};

    #[test]
    fn zero_maps_to_zero() {
        let g = GridSpec::unit(2, 8).unwrap();
        let solver = SpectralPoissonSolver::new(g);
        let z = CellField::zeros(g);
        let psi = solver.inv_laplacian(&z).unwrap();
        assert!(psi.values().iter().all(|&v| v == 0.0));
        assert_eq!(solver.hminus1_norm(&z).unwrap(), 0.0);
    }

    #[test]
    fn roundtrip_through_laplacian() {
        for dim in [2, 3] {
            let g = GridSpec::unit(dim, if dim == 2 { 16 } else { 8 }).unwrap();
            let base = wavy(g, 5).project_mean_zero();
            let f = laplacian(&base);
            let solver = SpectralPoissonSolver::new(g);
            let psi = solver.inv_laplacian(&f).unwrap();
            // -Delta psi = Delta base => psi = -base
            let err = psi.add(&base).l2_norm();
            assert!(err <= 1e-12 * base.l2_norm().max(1.0), "err = {err}");
        }
    }

    #[test]
    fn rejects_non_mean_zero_input() {
        let g = GridSpec::unit(2, 8).unwrap();
        let solver = SpectralPoissonSolver::new(g);
        let f = CellField::constant(g, 1.0);
        assert!(matches!(
            solver.inv_laplacian(&f),
            Err(EllipticError::NotMeanZero { .. })
        ));
    }

    #[test]
    fn inverse_is_self_adjoint_and_positive() {
        let g = GridSpec::unit(2, 12).unwrap();
        let solver = SpectralPoissonSolver::new(g);
        let f = wavy(g, 3).project_mean_zero();
        let w = wavy(g, 8).project_mean_zero();
        let tf = solver.inv_laplacian(&f).unwrap();
        let tw = solver.inv_laplacian(&w).unwrap();
        let a = f.inner(&tw);
        let b = tf.inner(&w);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        assert!(f.inner(&tf) > 0.0);
    }

    #[test]
    fn hminus1_norm_is_homogeneous() {
        let g = GridSpec::unit(2, 8).unwrap();
        let solver = SpectralPoissonSolver::new(g);
        let f = wavy(g, 11).project_mean_zero();
        let n1 = solver.hminus1_norm(&f).unwrap();
        let n2 = solver.hminus1_norm(&f.scaled(-3.5)).unwrap();
        assert!((n2 - 3.5 * n1).abs() <= 1e-12 * n1);
    }

    #[test]
    fn unit_weight_matches_inverse_laplacian() {
        let g = GridSpec::unit(2, 8).unwrap();
        let solver = SpectralPoissonSolver::new(g);
        let ones = CellField::constant(g, 1.0);
        let weighted = WeightedEllipticSolver::with_cell_weight(&ones).unwrap();
        let f = wavy(g, 7).project_mean_zero();
        let a = solver.inv_laplacian(&f).unwrap();
        let b = weighted.solve(&f).unwrap();
        assert!(a.sub(&b).l2_norm() <= 1e-9 * a.l2_norm().max(1.0));
    }

    #[test]
    fn weighted_solve_zero_rhs() {
        let g = GridSpec::unit(2, 8).unwrap();
        let w = smooth_positive(g, 2);
        let solver = WeightedEllipticSolver::with_cell_weight(&w).unwrap();
        let psi = solver.solve(&CellField::zeros(g)).unwrap();
        assert_eq!(psi.l2_norm(), 0.0);
    }

    #[test]
    fn weighted_solver_rejects_nonpositive_weight() {
        let g = GridSpec::unit(2, 4).unwrap();
        let mut w = CellField::constant(g, 1.0);
        w.values_mut()[3] = 0.0;
        assert!(matches!(
            WeightedEllipticSolver::with_cell_weight(&w),
            Err(EllipticError::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn weighted_solve_residual_contract() {
        let g = GridSpec::unit(2, 8).unwrap();
        let w = smooth_positive(g, 4);
        let solver = WeightedEllipticSolver::with_cell_weight(&w).unwrap();
        let f = wavy(g, 19).project_mean_zero();
        let psi = solver.solve(&f).unwrap();
        let r = solver.apply(&psi).sub(&f).l2_norm();
        assert!(r <= WEIGHTED_SOLVE_TOL * f.l2_norm() * 1.01);
        assert!(psi.mean().abs() <= 1e-13);
    }

    #[test]
    fn quadratic_form_decreases_when_weight_grows() {
        // g >= g_lo pointwise => <f, L_g^{-1} f> <= <f, L_glo^{-1} f>
        let g = GridSpec::unit(2, 4).unwrap();
        let f = wavy(g, 23).project_mean_zero();
        let glo = smooth_positive(g, 31);
        let ghi = glo.map(|v| v + 0.7);
        let slo = WeightedEllipticSolver::with_cell_weight(&glo).unwrap();
        let shi = WeightedEllipticSolver::with_cell_weight(&ghi).unwrap();
        let qlo = f.inner(&slo.solve(&f).unwrap());
        let qhi = f.inner(&shi.solve(&f).unwrap());
        assert!(qhi <= qlo * (1.0 + 1e-9), "qhi = {qhi}, qlo = {qlo}");
    }
}

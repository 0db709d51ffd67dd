//! Matrix-free Krylov iterations shared by the elliptic and implicit-step
//! solvers. Tolerances are relative to the right-hand side in the discrete
//! `L^2` norm.

use crate::grid::CellField;

/// A linear map on cell fields. `apply` may use internal scratch, hence
/// `&mut self`.
pub trait LinearOperator {
    fn apply(&mut self, x: &CellField, out: &mut CellField);
}

impl<F: FnMut(&CellField, &mut CellField)> LinearOperator for F {
    fn apply(&mut self, x: &CellField, out: &mut CellField) {
        self(x, out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for symmetric positive semidefinite operators whose
/// kernel is the constants. With `reproject_mean` the iterate and residual
/// are pinned to the mean-zero subspace every iteration.
pub fn conjugate_gradient(
    op: &mut impl LinearOperator,
    b: &CellField,
    x0: CellField,
    tol_rel: f64,
    max_iters: usize,
    reproject_mean: bool,
) -> (CellField, KrylovOutcome) {
    let grid = b.grid();
    let mut x = x0;
    assert_eq!(x.grid(), grid);
    let target = tol_rel * b.l2_norm();

    let mut ax = CellField::zeros(grid);
    op.apply(&x, &mut ax);
    let mut r = b.sub(&ax);
    if reproject_mean {
        x.project_mean_zero_in_place();
        r.project_mean_zero_in_place();
    }
    let mut rr = r.inner(&r);
    if rr.sqrt() <= target {
        return (
            x,
            KrylovOutcome {
                iterations: 0,
                residual: rr.sqrt(),
                converged: true,
            },
        );
    }
    let mut p = r.clone();
    let mut ap = CellField::zeros(grid);
    for it in 1..=max_iters {
        op.apply(&p, &mut ap);
        if reproject_mean {
            ap.project_mean_zero_in_place();
        }
        let pap = p.inner(&ap);
        if pap <= 0.0 {
            // operator lost definiteness at rounding level; stop with best iterate
            return (
                x,
                KrylovOutcome {
                    iterations: it,
                    residual: rr.sqrt(),
                    converged: rr.sqrt() <= target,
                },
            );
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        if reproject_mean {
            r.project_mean_zero_in_place();
        }
        let rr_new = r.inner(&r);
        if rr_new.sqrt() <= target {
            if reproject_mean {
                x.project_mean_zero_in_place();
            }
            return (
                x,
                KrylovOutcome {
                    iterations: it,
                    residual: rr_new.sqrt(),
                    converged: true,
                },
            );
        }
        let beta = rr_new / rr;
        rr = rr_new;
        // p = r + beta p
        p.scale(beta);
        p.axpy(1.0, &r);
    }
    if reproject_mean {
        x.project_mean_zero_in_place();
    }
    (
        x,
        KrylovOutcome {
            iterations: max_iters,
            residual: rr.sqrt(),
            converged: false,
        },
    )
}

/// BiCGStab with optional Jacobi (diagonal) preconditioning, for the
/// nonsymmetric linearized transport systems.
pub fn bicgstab(
    op: &mut impl LinearOperator,
    b: &CellField,
    x0: CellField,
    tol_rel: f64,
    max_iters: usize,
    diag: Option<&CellField>,
) -> (CellField, KrylovOutcome) {
    let grid = b.grid();
    let mut x = x0;
    assert_eq!(x.grid(), grid);
    let target = tol_rel * b.l2_norm();

    let precond = |v: &CellField| -> CellField {
        match diag {
            Some(d) => {
                let mut out = v.clone();
                for (o, &dv) in out.values_mut().iter_mut().zip(d.values()) {
                    *o /= dv;
                }
                out
            }
            None => v.clone(),
        }
    };

    let mut av = CellField::zeros(grid);
    op.apply(&x, &mut av);
    let mut r = b.sub(&av);
    let mut rnorm = r.l2_norm();
    if rnorm <= target {
        return (
            x,
            KrylovOutcome {
                iterations: 0,
                residual: rnorm,
                converged: true,
            },
        );
    }
    let mut rhat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = CellField::zeros(grid);
    let mut p = CellField::zeros(grid);
    let mut t = CellField::zeros(grid);

    for it in 1..=max_iters {
        let rho_new = rhat.inner(&r);
        if rho_new.abs() < f64::MIN_POSITIVE.sqrt() * rnorm * rnorm.max(1.0) {
            // near-breakdown: restart the shadow residual
            rhat = r.clone();
            rho = rhat.inner(&r);
            v.fill(0.0);
            p.fill(0.0);
            alpha = 1.0;
            omega = 1.0;
            if rho == 0.0 {
                return (
                    x,
                    KrylovOutcome {
                        iterations: it,
                        residual: rnorm,
                        converged: rnorm <= target,
                    },
                );
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        // p = r + beta (p - omega v)
        p.axpy(-omega, &v);
        p.scale(beta);
        p.axpy(1.0, &r);

        let phat = precond(&p);
        op.apply(&phat, &mut v);
        let rhat_v = rhat.inner(&v);
        if rhat_v == 0.0 {
            rhat = r.clone();
            v.fill(0.0);
            p.fill(0.0);
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        alpha = rho / rhat_v;
        // s = r - alpha v (reuse r)
        r.axpy(-alpha, &v);
        let snorm = r.l2_norm();
        if snorm <= target {
            x.axpy(alpha, &phat);
            return (
                x,
                KrylovOutcome {
                    iterations: it,
                    residual: snorm,
                    converged: true,
                },
            );
        }
        let shat = precond(&r);
        op.apply(&shat, &mut t);
        let tt = t.inner(&t);
        if tt == 0.0 {
            x.axpy(alpha, &phat);
            rnorm = snorm;
            rhat = r.clone();
            continue;
        }
        omega = t.inner(&r) / tt;
        x.axpy(alpha, &phat);
        x.axpy(omega, &shat);
        r.axpy(-omega, &t);
        rnorm = r.l2_norm();
        if rnorm <= target {
            return (
                x,
                KrylovOutcome {
                    iterations: it,
                    residual: rnorm,
                    converged: true,
                },
            );
        }
    }
    (
        x,
        KrylovOutcome {
            iterations: max_iters,
            residual: rnorm,
            converged: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian, CellField, GridSpec};
    use crate::util::test_fields::{smooth_positive, wavy};

    struct ShiftedLaplacian {
        shift: f64,
    }

    impl LinearOperator for ShiftedLaplacian {
        fn apply(&mut self, x: &CellField, out: &mut CellField) {
            let lap = laplacian(x);
            out.copy_from(x);
            out.scale(self.shift);
            out.axpy(-1.0, &lap);
        }
    }

    #[test]
    fn cg_solves_shifted_laplacian() {
        let g = GridSpec::unit(2, 16).unwrap();
        let b = wavy(g, 3);
        let mut op = ShiftedLaplacian { shift: 1.0 };
        let (x, out) = conjugate_gradient(&mut op, &b, CellField::zeros(g), 1e-12, 1000, false);
        assert!(out.converged, "residual {}", out.residual);
        let mut ax = CellField::zeros(g);
        op.apply(&x, &mut ax);
        assert!(ax.sub(&b).l2_norm() <= 1e-11 * b.l2_norm());
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let g = GridSpec::unit(2, 16).unwrap();
        let w = smooth_positive(g, 5);
        let b = wavy(g, 9);
        // x + w * (x - laplacian(x)) style nonsymmetric map
        let mut op = |x: &CellField, out: &mut CellField| {
            let lap = laplacian(x);
            out.copy_from(x);
            for ((o, &l), &wv) in out
                .values_mut()
                .iter_mut()
                .zip(lap.values())
                .zip(w.values())
            {
                *o -= 0.01 * wv * l;
            }
        };
        let (x, out) = bicgstab(&mut op, &b, CellField::zeros(g), 1e-12, 1000, None);
        assert!(out.converged, "residual {}", out.residual);
        let mut ax = CellField::zeros(g);
        op.apply(&x, &mut ax);
        assert!(ax.sub(&b).l2_norm() <= 1e-11 * b.l2_norm());
    }
}

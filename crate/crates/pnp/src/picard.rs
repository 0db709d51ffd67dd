//! Linearized relaxation iteration solving the implicit nonlinear system at
//! each time step.
//!
//! Each sweep freezes the logarithmic terms at the current iterate, solves
//! one linear transport system per species (matrix-free BiCGStab with Jacobi
//! scaling), refreshes the potential from the intermediate concentrations,
//! and under-relaxes:
//!
//! ```text
//! (n^{k+1}, p^{k+1}, phi^{k+1}) = w (n^k, p^k, phi^k) + (1-w) (n^*, p^*, phi^*)
//! ```
//!
//! Fixed points of the sweep satisfy the implicit step equations, so a
//! converged iterate zeroes the scheme residual up to the inner tolerance.

use thiserror::Error;

use crate::elliptic::SpectralPoissonSolver;
use crate::entropy::solver_log_quotient;
use crate::grid::{
    add_flux_divergence_scaled_with, for_each_line, CellField, FaceVector,
};
use crate::krylov::{bicgstab, LinearOperator};
use crate::scheme::{
    bootstrap_residual, lagged_mobility_pair, mobility_pair, scheme_residual, solve_poisson,
    MobilityPair, SchemeError, SchemeParams, State,
};

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("iterate lost positivity ({species} min = {min:e}) and damping retries are exhausted")]
    DampingExhausted { species: &'static str, min: f64 },
    #[error("iterate handed to a sweep is not strictly positive ({species} min = {min:e})")]
    NonPositiveIterate { species: &'static str, min: f64 },
    #[error(
        "inner linear solve stalled after {iterations} iterations, relative residual {residual:e}"
    )]
    InnerSolve { iterations: usize, residual: f64 },
    #[error(
        "no convergence in {} sweeps (update {:e}, residual {:e})",
        report.iterations,
        report.final_update,
        report.final_residual
    )]
    NoConvergence { report: PicardReport },
    #[error("accepted iterate violates positivity (min = {min:e})")]
    PositivityViolated { min: f64 },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Knobs of the relaxation iteration.
#[derive(Debug, Clone, Copy)]
pub struct PicardConfig {
    /// Relaxation weight on the previous iterate, in (0, 0.99).
    pub omega_r: f64,
    /// Positivity floor applied to the extrapolated initial guess.
    pub eps: f64,
    /// Relative L-infinity update tolerance on the concentration pair.
    pub tol: f64,
    /// Cap on sweeps per step (across damping retries).
    pub max_iters: usize,
    /// Relative residual tolerance of the inner linear solves.
    pub inner_tol: f64,
    /// Iteration cap of the inner linear solves.
    pub inner_max_iters: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            omega_r: 0.5,
            eps: 1e-12,
            tol: 1e-10,
            max_iters: 500,
            inner_tol: 1e-12,
            inner_max_iters: 10_000,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<(), PicardError> {
        if !(self.omega_r > 0.0 && self.omega_r < 1.0) {
            return Err(PicardError::Config(format!(
                "relaxation weight must lie in (0, 1), got {}",
                self.omega_r
            )));
        }
        if self.omega_r >= 0.99 {
            // a weight this close to 1 freezes the iterate: the update norm
            // converges without the residual following
            return Err(PicardError::Config(format!(
                "relaxation weight {} would stall the iteration (must be < 0.99)",
                self.omega_r
            )));
        }
        if !(self.eps > 0.0) {
            return Err(PicardError::Config(format!(
                "positivity floor must be positive, got {}",
                self.eps
            )));
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(PicardError::Config("tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.inner_max_iters == 0 {
            return Err(PicardError::Config("iteration caps must be nonzero".into()));
        }
        Ok(())
    }
}

/// Outcome summary of one implicit solve.
#[derive(Debug, Clone, Copy)]
pub struct PicardReport {
    pub iterations: usize,
    pub final_update: f64,
    pub final_residual: f64,
    pub converged: bool,
}

/// Extrapolated positive initial guess
/// `(max(2 n^m - n^{m-1}, eps), max(2 p^m - p^{m-1}, eps), 2 phi^m - phi^{m-1})`.
pub fn initial_guess(cur: &State, prev: &State, eps: f64) -> (CellField, CellField, CellField) {
    let extrap = |a: &CellField, b: &CellField, floor: bool| {
        let mut out = a.scaled(2.0);
        out.axpy(-1.0, b);
        if floor {
            for v in out.values_mut() {
                if *v < eps {
                    *v = eps;
                }
            }
        }
        out
    };
    (
        extrap(&cur.n, &prev.n, true),
        extrap(&cur.p, &prev.p, true),
        extrap(&cur.phi, &prev.phi, false),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StepKind {
    Bootstrap,
    SecondOrder,
}

/// `x -> x - coeff * div(M grad(x / anchor))`.
struct ImplicitOperator<'a> {
    coeff: f64,
    anchor: &'a CellField,
    mobility: &'a FaceVector,
    ratio: CellField,
    scratch: FaceVector,
}

impl<'a> ImplicitOperator<'a> {
    fn new(coeff: f64, anchor: &'a CellField, mobility: &'a FaceVector) -> Self {
        let grid = anchor.grid();
        ImplicitOperator {
            coeff,
            anchor,
            mobility,
            ratio: CellField::zeros(grid),
            scratch: FaceVector::zeros(grid),
        }
    }

    /// Jacobi diagonal: `1 + coeff/h^2 * sum_ax (M[c] + M[c-ax]) / anchor[c]`.
    fn diagonal(&self) -> CellField {
        let grid = self.anchor.grid();
        let n = grid.cells_per_axis();
        let mut acc = CellField::zeros(grid);
        for &ax in grid.axes() {
            let s = grid.stride(ax);
            let m = self.mobility.comp(ax).values();
            let a = acc.values_mut();
            for_each_line(n, s, m.len(), |base| {
                let last = base + (n - 1) * s;
                a[base] += m[base] + m[last];
                for k in 1..n {
                    let c = base + k * s;
                    a[c] += m[c] + m[c - s];
                }
            });
        }
        let h = grid.spacing();
        let factor = self.coeff / (h * h);
        let mut diag = CellField::zeros(grid);
        for ((d, &sum), &anc) in diag
            .values_mut()
            .iter_mut()
            .zip(acc.values())
            .zip(self.anchor.values())
        {
            *d = 1.0 + factor * sum / anc;
        }
        diag
    }
}

impl LinearOperator for ImplicitOperator<'_> {
    fn apply(&mut self, x: &CellField, out: &mut CellField) {
        for ((r, &xv), &av) in self
            .ratio
            .values_mut()
            .iter_mut()
            .zip(x.values())
            .zip(self.anchor.values())
        {
            *r = xv / av;
        }
        out.copy_from(x);
        add_flux_divergence_scaled_with(self.mobility, &self.ratio, -self.coeff, out, &mut self.scratch);
    }
}

fn check_iterate_positive(f: &CellField, species: &'static str) -> Result<(), PicardError> {
    let min = f.min_value();
    if !(min > 0.0) {
        return Err(PicardError::NonPositiveIterate { species, min });
    }
    Ok(())
}

struct SweepInputs<'a> {
    kind: StepKind,
    cur: &'a State,
    mobility: &'a MobilityPair,
    params: &'a SchemeParams,
    config: &'a PicardConfig,
    poisson: &'a SpectralPoissonSolver,
}

fn species_sweep(
    inp: &SweepInputs,
    u_k: &CellField,
    u_m: &CellField,
    phi_k: &CellField,
    phi_m: &CellField,
    sign: f64,
    mobility: &FaceVector,
) -> Result<CellField, PicardError> {
    let grid = u_k.grid();
    let dt = inp.params.dt();

    // explicit part under the flux divergence
    let mut gfield = CellField::zeros(grid);
    {
        let g = gfield.values_mut();
        let uk = u_k.values();
        let um = u_m.values();
        let pk = phi_k.values();
        let pm = phi_m.values();
        match inp.kind {
            StepKind::SecondOrder => {
                for c in 0..g.len() {
                    let a = um[c];
                    let x = uk[c];
                    let la = a.ln();
                    let lx = x.ln();
                    let q = solver_log_quotient(a, x, la, lx);
                    g[c] = lx + q + dt * (lx - la) + sign * 0.5 * (pk[c] + pm[c]);
                }
            }
            StepKind::Bootstrap => {
                for c in 0..g.len() {
                    g[c] = uk[c].ln() + sign * pk[c];
                }
            }
        }
    }
    let mut rhs = u_m.clone();
    let mut scratch = FaceVector::zeros(grid);
    add_flux_divergence_scaled_with(mobility, &gfield, dt, &mut rhs, &mut scratch);

    let coeff = match inp.kind {
        StepKind::SecondOrder => dt + dt * dt,
        StepKind::Bootstrap => dt,
    };
    let mut op = ImplicitOperator::new(coeff, u_k, mobility);
    let diag = op.diagonal();
    // seed on the mass hyperplane of the right-hand side
    let mut x0 = u_k.clone();
    x0.shift(rhs.mean() - x0.mean());
    let (u_star, outcome) = bicgstab(
        &mut op,
        &rhs,
        x0,
        inp.config.inner_tol,
        inp.config.inner_max_iters,
        Some(&diag),
    );
    if !outcome.converged {
        return Err(PicardError::InnerSolve {
            iterations: outcome.iterations,
            residual: outcome.residual,
        });
    }
    // the operator preserves the mean functional (its flux part sums to
    // zero), so the exact solution carries the mass of the right-hand side;
    // removing the constant component of the Krylov defect restores that
    // property to rounding
    let mut u_star = u_star;
    u_star.shift(rhs.mean() - u_star.mean());
    Ok(u_star)
}

/// One linearized sweep: solves the two frozen-coefficient transport systems
/// and refreshes the potential from the intermediate concentrations.
fn sweep(
    inp: &SweepInputs,
    n_k: &CellField,
    p_k: &CellField,
    phi_k: &CellField,
) -> Result<(CellField, CellField, CellField), PicardError> {
    check_iterate_positive(n_k, "n")?;
    check_iterate_positive(p_k, "p")?;
    let n_star = species_sweep(inp, n_k, &inp.cur.n, phi_k, &inp.cur.phi, -1.0, &inp.mobility.n)?;
    let p_star = species_sweep(inp, p_k, &inp.cur.p, phi_k, &inp.cur.phi, 1.0, &inp.mobility.p)?;
    let phi_star = solve_poisson(&n_star, &p_star, inp.params, inp.poisson)?;
    Ok((n_star, p_star, phi_star))
}

/// Public single-sweep entry point (used by oracle tests): one linearized
/// update from the given iterate, no relaxation applied.
pub fn picard_sweep(
    n_k: &CellField,
    p_k: &CellField,
    phi_k: &CellField,
    cur: &State,
    prev: &State,
    params: &SchemeParams,
    config: &PicardConfig,
    poisson: &SpectralPoissonSolver,
) -> Result<(CellField, CellField, CellField), PicardError> {
    config.validate()?;
    let mobility = mobility_pair(cur, prev, params);
    let inp = SweepInputs {
        kind: StepKind::SecondOrder,
        cur,
        mobility: &mobility,
        params,
        config,
        poisson,
    };
    sweep(&inp, n_k, p_k, phi_k)
}

fn pair_update_norm(
    n_new: &CellField,
    p_new: &CellField,
    n_old: &CellField,
    p_old: &CellField,
) -> f64 {
    let dn = n_new.sub(n_old).linf_norm();
    let dp = p_new.sub(p_old).linf_norm();
    let scale = n_old.linf_norm().max(p_old.linf_norm()).max(f64::MIN_POSITIVE);
    dn.max(dp) / scale
}

fn iterate(
    kind: StepKind,
    cur: &State,
    prev: &State,
    mobility: &MobilityPair,
    params: &SchemeParams,
    config: &PicardConfig,
    poisson: &SpectralPoissonSolver,
) -> Result<(State, PicardReport), PicardError> {
    let dt = params.dt();
    let residual_limit = 100.0 * config.tol;
    let inp = SweepInputs {
        kind,
        cur,
        mobility,
        params,
        config,
        poisson,
    };

    let mut total_sweeps = 0usize;
    let mut omega = config.omega_r;
    let max_damping_retries = 3;

    for attempt in 0..=max_damping_retries {
        let (mut n_k, mut p_k, mut phi_k) = initial_guess(cur, prev, config.eps);
        let mut last_update = f64::INFINITY;
        let mut last_residual = f64::INFINITY;
        let mut rejected = None;

        while total_sweeps < config.max_iters {
            let (n_star, p_star, phi_star) = sweep(&inp, &n_k, &p_k, &phi_k)?;
            total_sweeps += 1;

            let relax = |old: &CellField, new: &CellField| {
                let mut out = old.scaled(omega);
                out.axpy(1.0 - omega, new);
                out
            };
            let n_next = relax(&n_k, &n_star);
            let p_next = relax(&p_k, &p_star);
            let phi_next = relax(&phi_k, &phi_star);

            let min_n = n_next.min_value();
            let min_p = p_next.min_value();
            if !(min_n > 0.0 && min_p > 0.0) {
                rejected = Some(if min_n <= 0.0 { ("n", min_n) } else { ("p", min_p) });
                break;
            }

            last_update = pair_update_norm(&n_next, &p_next, &n_k, &p_k);
            n_k = n_next;
            p_k = p_next;
            phi_k = phi_next;

            if last_update <= config.tol {
                let candidate = State {
                    step: cur.step + 1,
                    time: cur.time + dt,
                    n: n_k.clone(),
                    p: p_k.clone(),
                    phi: phi_k.clone(),
                };
                let (r_n, r_p) = match kind {
                    StepKind::SecondOrder => scheme_residual(&candidate, cur, prev, params, poisson)?,
                    StepKind::Bootstrap => bootstrap_residual(&candidate, cur, params, poisson)?,
                };
                last_residual = r_n.l2_norm().max(r_p.l2_norm());
                if last_residual <= residual_limit {
                    let phi = solve_poisson(&n_k, &p_k, params, poisson)?;
                    let accepted = State { phi, ..candidate };
                    let min = accepted.n.min_value().min(accepted.p.min_value());
                    if !(min > 0.0) {
                        return Err(PicardError::PositivityViolated { min });
                    }
                    return Ok((
                        accepted,
                        PicardReport {
                            iterations: total_sweeps,
                            final_update: last_update,
                            final_residual: last_residual,
                            converged: true,
                        },
                    ));
                }
            }
        }

        match rejected {
            Some(_) if attempt < max_damping_retries => {
                // restart the step with heavier damping; the fixed-point set
                // of the sweep is unchanged
                omega = 0.5 * (1.0 + omega);
            }
            Some((species, min)) => {
                return Err(PicardError::DampingExhausted { species, min });
            }
            None => {
                return Err(PicardError::NoConvergence {
                    report: PicardReport {
                        iterations: total_sweeps,
                        final_update: last_update,
                        final_residual: last_residual,
                        converged: false,
                    },
                });
            }
        }
    }
    unreachable!("damping retry loop returns before exhausting attempts");
}

/// Solves the implicit second-order step `m -> m+1` given levels `m`, `m-1`.
pub fn solve_step(
    cur: &State,
    prev: &State,
    params: &SchemeParams,
    config: &PicardConfig,
    poisson: &SpectralPoissonSolver,
) -> Result<(State, PicardReport), PicardError> {
    config.validate()?;
    check_iterate_positive(&cur.n, "n^m")?;
    check_iterate_positive(&cur.p, "p^m")?;
    check_iterate_positive(&prev.n, "n^{m-1}")?;
    check_iterate_positive(&prev.p, "p^{m-1}")?;
    let mobility = mobility_pair(cur, prev, params);
    iterate(StepKind::SecondOrder, cur, prev, &mobility, params, config, poisson)
}

/// First-order bootstrap solve used for the very first time step.
pub(crate) fn solve_bootstrap_step(
    initial: &State,
    params: &SchemeParams,
    config: &PicardConfig,
    poisson: &SpectralPoissonSolver,
) -> Result<(State, PicardReport), PicardError> {
    config.validate()?;
    check_iterate_positive(&initial.n, "n^0")?;
    check_iterate_positive(&initial.p, "p^0")?;
    let mobility = lagged_mobility_pair(initial, params);
    iterate(
        StepKind::Bootstrap,
        initial,
        initial,
        &mobility,
        params,
        config,
        poisson,
    )
}

/// Convenience for building the initial state of a run: constant positive
/// concentrations and the consistent potential.
pub fn initial_state(
    n0: &CellField,
    p0: &CellField,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<State, PicardError> {
    check_iterate_positive(n0, "n^0")?;
    check_iterate_positive(p0, "p^0")?;
    let phi = solve_poisson(n0, p0, params, poisson)?;
    Ok(State {
        step: 0,
        time: 0.0,
        n: n0.clone(),
        p: p0.clone(),
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::scheme::first_order_step;
    use crate::util::test_fields::smooth_positive;

    fn grid() -> GridSpec {
        GridSpec::unit(2, 8).unwrap()
    }

    #[test]
    fn initial_guess_examples() {
        let g = grid();
        let eps = 1e-12;
        let c02 = CellField::constant(g, 0.02);
        let c01 = CellField::constant(g, 0.01);
        let zero = CellField::zeros(g);
        let mk = |n: &CellField, step: usize| State {
            step,
            time: 0.0,
            n: n.clone(),
            p: n.clone(),
            phi: zero.clone(),
        };
        // cur = prev: guess = cur
        let (gn, _, _) = initial_guess(&mk(&c01, 1), &mk(&c01, 0), eps);
        assert!(gn.values().iter().all(|&v| v == 0.01));
        // linear extrapolation: 2*0.02 - 0.01 = 0.03
        let (gn, _, _) = initial_guess(&mk(&c02, 1), &mk(&c01, 0), eps);
        assert!(gn.values().iter().all(|&v| v == 0.03));
        // floor engages when the extrapolation dips below eps
        let (gn, _, _) = initial_guess(&mk(&c01, 1), &mk(&c02, 0), eps);
        assert!(gn.values().iter().all(|&v| v == eps));
    }

    #[test]
    fn config_validation_rejects_freezing_relaxation() {
        let mut cfg = PicardConfig::default();
        cfg.omega_r = 0.995;
        assert!(matches!(cfg.validate(), Err(PicardError::Config(_))));
        cfg.omega_r = 1.2;
        assert!(cfg.validate().is_err());
        cfg.omega_r = 0.5;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn uniform_stationary_state_converges_in_one_sweep() {
        let g = grid();
        let poisson = SpectralPoissonSolver::new(g);
        let params = SchemeParams::without_fixed_charge(0.01, 1.0, g).unwrap();
        let c = CellField::constant(g, 0.3);
        let s0 = initial_state(&c, &c, &params, &poisson).unwrap();
        let (s1, rep) = first_order_step(&s0, &params, &PicardConfig::default(), &poisson).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(s1.n.values(), s0.n.values());
        let (s2, rep2) = solve_step(&s1, &s0, &params, &PicardConfig::default(), &poisson).unwrap();
        assert_eq!(rep2.iterations, 1);
        assert_eq!(s2.n.values(), c.values());
        assert_eq!(s2.p.values(), c.values());
    }

    #[test]
    fn sweep_preserves_species_mass() {
        let g = grid();
        let poisson = SpectralPoissonSolver::new(g);
        let params = SchemeParams::without_fixed_charge(0.02, 1.0, g).unwrap();
        let n = smooth_positive(g, 3);
        let mut p = smooth_positive(g, 4);
        p.shift(n.mean() - p.mean());
        let s0 = initial_state(&n, &p, &params, &poisson).unwrap();
        let (s1, _) = first_order_step(&s0, &params, &PicardConfig::default(), &poisson).unwrap();
        let (gn, gp, gphi) = initial_guess(&s1, &s0, 1e-12);
        let (ns, ps, _) = picard_sweep(
            &gn,
            &gp,
            &gphi,
            &s1,
            &s0,
            &params,
            &PicardConfig::default(),
            &poisson,
        )
        .unwrap();
        assert!((ns.mean() - s1.n.mean()).abs() <= 1e-12 * s1.n.mean());
        assert!((ps.mean() - s1.p.mean()).abs() <= 1e-12 * s1.p.mean());
    }

    #[test]
    fn accepted_step_conserves_mass_and_positivity() {
        let g = grid();
        let poisson = SpectralPoissonSolver::new(g);
        let params = SchemeParams::without_fixed_charge(0.01, 1.0, g).unwrap();
        let n = smooth_positive(g, 7);
        let mut p = smooth_positive(g, 9);
        p.shift(n.mean() - p.mean());
        let s0 = initial_state(&n, &p, &params, &poisson).unwrap();
        let cfg = PicardConfig::default();
        let (s1, _) = first_order_step(&s0, &params, &cfg, &poisson).unwrap();
        let (s2, rep) = solve_step(&s1, &s0, &params, &cfg, &poisson).unwrap();
        assert!(rep.converged);
        assert!(s2.n.min_value() > 0.0 && s2.p.min_value() > 0.0);
        assert!((s2.n.mean() - s0.n.mean()).abs() <= 1e-13 * s0.n.mean());
        assert!((s2.p.mean() - s0.p.mean()).abs() <= 1e-13 * s0.p.mean());
    }

    #[test]
    fn tighter_tolerance_tightens_the_residual() {
        let g = grid();
        let poisson = SpectralPoissonSolver::new(g);
        let params = SchemeParams::without_fixed_charge(0.01, 1.0, g).unwrap();
        let n = smooth_positive(g, 13);
        let mut p = smooth_positive(g, 14);
        p.shift(n.mean() - p.mean());
        let s0 = initial_state(&n, &p, &params, &poisson).unwrap();
        let cfg = PicardConfig::default();
        let (s1, _) = first_order_step(&s0, &params, &cfg, &poisson).unwrap();

        let run = |tol: f64| {
            let cfg = PicardConfig { tol, ..cfg };
            let (_, rep) = solve_step(&s1, &s0, &params, &cfg, &poisson).unwrap();
            rep.final_residual
        };
        let loose = run(1e-8);
        let tight = run(1e-10);
        assert!(
            tight <= 0.5 * loose.max(1e-300),
            "tight {tight:e} vs loose {loose:e}"
        );
    }
}

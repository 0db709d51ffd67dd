//! Assembly of the second-order positivity-preserving, energy-stable step
//! for the dimensionless two-species electrodiffusion system
//!
//! ```text
//! (n^{m+1} - n^m)/dt = div( Mn^{m+1/2} grad mu_n^{m+1/2} )
//! (p^{m+1} - p^m)/dt = div( Mp^{m+1/2} grad mu_p^{m+1/2} )
//! mu_n = G1_{n^m}(n^{m+1}) - 1 + dt ln(n^{m+1}/n^m) + invlap(n_mid - p_mid - rho_f)
//! mu_p = G1_{p^m}(p^{m+1}) - 1 + dt ln(p^{m+1}/p^m) + invlap(p_mid - n_mid + rho_f)
//! ```
//!
//! with extrapolated, regularized face mobilities and the fixed background
//! charge `rho_f` entering both the Poisson solve and the inverse-Laplacian
//! term of the chemical potentials, so that term stays exactly the midpoint
//! electric potential (up to sign per species).

use thiserror::Error;

use crate::elliptic::{EllipticError, SpectralPoissonSolver};
use crate::entropy::{g1_raw, DEFAULT_DELTA_REL};
use crate::grid::{face_average, flux_divergence, CellField, FaceVector, GridSpec};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("{species} concentration must be strictly positive, min = {min:e}")]
    NonPositiveConcentration { species: &'static str, min: f64 },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("diffusivity ratio must be positive, got {0}")]
    BadDiffusivity(f64),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

/// Fixed data of one run of the scheme: time step, diffusivity ratio of the
/// positive species, and the mean-zero background charge.
///
/// The mobility regularization exponent (`dt^6` under the square root) and
/// the coefficient of the logarithmic regularization term (`dt`) are part of
/// the scheme itself and are not configurable.
#[derive(Debug, Clone)]
pub struct SchemeParams {
    dt: f64,
    d_ratio: f64,
    rho_f: CellField,
}

impl SchemeParams {
    /// `rho_f` is projected to mean zero, as periodic solvability requires.
    pub fn new(dt: f64, d_ratio: f64, rho_f: CellField) -> Result<Self, SchemeError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SchemeError::BadTimeStep(dt));
        }
        if !(d_ratio > 0.0) || !d_ratio.is_finite() {
            return Err(SchemeError::BadDiffusivity(d_ratio));
        }
        let mut rho_f = rho_f;
        rho_f.project_mean_zero_in_place();
        Ok(SchemeParams { dt, d_ratio, rho_f })
    }

    /// Params with a vanishing background charge.
    pub fn without_fixed_charge(dt: f64, d_ratio: f64, grid: GridSpec) -> Result<Self, SchemeError> {
        SchemeParams::new(dt, d_ratio, CellField::zeros(grid))
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn d_ratio(&self) -> f64 {
        self.d_ratio
    }

    #[inline]
    pub fn rho_f(&self) -> &CellField {
        &self.rho_f
    }

    /// Same parameters with a different time step (used when the final step
    /// of a run is shortened to land on the requested end time).
    pub fn with_dt(&self, dt: f64) -> Result<Self, SchemeError> {
        SchemeParams::new(dt, self.d_ratio, self.rho_f.clone())
    }
}

/// One time level of the discrete system.
#[derive(Debug, Clone)]
pub struct State {
    pub step: usize,
    pub time: f64,
    pub n: CellField,
    pub p: CellField,
    pub phi: CellField,
}

impl State {
    pub fn grid(&self) -> GridSpec {
        self.n.grid()
    }
}

/// Regularized extrapolated face mobilities of both species at `m + 1/2`.
#[derive(Debug, Clone)]
pub struct MobilityPair {
    pub n: FaceVector,
    pub p: FaceVector,
}

fn check_positive(f: &CellField, species: &'static str) -> Result<(), SchemeError> {
    let min = f.min_value();
    if !(min > 0.0) {
        return Err(SchemeError::NonPositiveConcentration { species, min });
    }
    Ok(())
}

/// Face mobility `sqrt( (A(3/2 M^m - 1/2 M^{m-1}))^2 + dt^6 )` per axis.
/// Every face value is at least `dt^3 > 0` regardless of the extrapolation.
pub fn extrapolated_mobility(m_cur: &CellField, m_prev: &CellField, dt: f64) -> FaceVector {
    assert_eq!(m_cur.grid(), m_prev.grid(), "fields must share a grid");
    let grid = m_cur.grid();
    let mut extrap = m_cur.scaled(1.5);
    extrap.axpy(-0.5, m_prev);
    let floor = dt.powi(6);
    let comps = grid
        .axes()
        .iter()
        .map(|&ax| {
            let mut face = face_average(&extrap, ax);
            face.map_in_place(|v| (v * v + floor).sqrt());
            face
        })
        .collect();
    FaceVector::from_components(comps)
}

/// Cell mobilities of the two species: `M_n = n`, `M_p = D p`.
pub fn cell_mobilities(state: &State, params: &SchemeParams) -> (CellField, CellField) {
    (state.n.clone(), state.p.scaled(params.d_ratio))
}

/// Both species' extrapolated face mobilities built from levels `m`, `m-1`.
pub fn mobility_pair(cur: &State, prev: &State, params: &SchemeParams) -> MobilityPair {
    let (mn_cur, mp_cur) = cell_mobilities(cur, params);
    let (mn_prev, mp_prev) = cell_mobilities(prev, params);
    MobilityPair {
        n: extrapolated_mobility(&mn_cur, &mn_prev, params.dt),
        p: extrapolated_mobility(&mp_cur, &mp_prev, params.dt),
    }
}

/// Lagged (non-extrapolated) face mobilities `A(M^0)` used by the bootstrap
/// step; positivity comes from the positive concentrations themselves.
pub fn lagged_mobility_pair(state: &State, params: &SchemeParams) -> MobilityPair {
    let (mn, mp) = cell_mobilities(state, params);
    let make = |m: &CellField| {
        let comps = m.grid().axes().iter().map(|&ax| face_average(m, ax)).collect();
        FaceVector::from_components(comps)
    };
    MobilityPair {
        n: make(&mn),
        p: make(&mp),
    }
}

/// Mean-zero potential with `-Delta_h phi = (p - n + rho_f)` projected.
pub fn solve_poisson(
    n: &CellField,
    p: &CellField,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<CellField, SchemeError> {
    let mut charge = p.sub(n);
    charge.axpy(1.0, &params.rho_f);
    charge.project_mean_zero_in_place();
    Ok(poisson.inv_laplacian(&charge)?)
}

/// Midpoint chemical potentials of the implicit step `m -> m+1`.
///
/// The returned fields keep the `-1` constants of the definition; they
/// vanish under the discrete gradient.
pub fn chemical_potentials(
    n_next: &CellField,
    p_next: &CellField,
    n_cur: &CellField,
    p_cur: &CellField,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<(CellField, CellField), SchemeError> {
    check_positive(n_next, "n^{m+1}")?;
    check_positive(p_next, "p^{m+1}")?;
    check_positive(n_cur, "n^m")?;
    check_positive(p_cur, "p^m")?;
    let dt = params.dt;

    // midpoint charge for mu_n: n_mid - p_mid - rho_f; mu_p takes the
    // negative, so one elliptic solve serves both
    let mut charge = n_next.add(n_cur);
    charge.axpy(-1.0, p_next);
    charge.axpy(-1.0, p_cur);
    charge.scale(0.5);
    charge.axpy(-1.0, &params.rho_f);
    charge.project_mean_zero_in_place();
    let pot_n = poisson.inv_laplacian(&charge)?;

    let mut mu_n = CellField::zeros(n_next.grid());
    let mut mu_p = CellField::zeros(n_next.grid());
    for c in 0..mu_n.values().len() {
        let (a, x) = (n_cur.values()[c], n_next.values()[c]);
        mu_n.values_mut()[c] =
            g1_raw(a, x, DEFAULT_DELTA_REL) - 1.0 + dt * (x.ln() - a.ln()) + pot_n.values()[c];
        let (b, y) = (p_cur.values()[c], p_next.values()[c]);
        mu_p.values_mut()[c] =
            g1_raw(b, y, DEFAULT_DELTA_REL) - 1.0 + dt * (y.ln() - b.ln()) - pot_n.values()[c];
    }
    Ok((mu_n, mu_p))
}

/// Residual of the implicit step equations at a state triple; zero (up to
/// solver tolerance) exactly when `next` solves the step from `cur`, `prev`.
pub fn scheme_residual(
    next: &State,
    cur: &State,
    prev: &State,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<(CellField, CellField), SchemeError> {
    check_positive(&prev.n, "n^{m-1}")?;
    check_positive(&prev.p, "p^{m-1}")?;
    let mob = mobility_pair(cur, prev, params);
    let (mu_n, mu_p) = chemical_potentials(&next.n, &next.p, &cur.n, &cur.p, params, poisson)?;
    let inv_dt = 1.0 / params.dt;

    let mut r_n = next.n.sub(&cur.n);
    r_n.scale(inv_dt);
    r_n.axpy(-1.0, &flux_divergence(&mob.n, &mu_n));

    let mut r_p = next.p.sub(&cur.p);
    r_p.scale(inv_dt);
    r_p.axpy(-1.0, &flux_divergence(&mob.p, &mu_p));
    Ok((r_n, r_p))
}

/// Residual of the first-order bootstrap equations at a state pair.
pub fn bootstrap_residual(
    next: &State,
    initial: &State,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<(CellField, CellField), SchemeError> {
    check_positive(&next.n, "n^1")?;
    check_positive(&next.p, "p^1")?;
    check_positive(&initial.n, "n^0")?;
    check_positive(&initial.p, "p^0")?;
    let mob = lagged_mobility_pair(initial, params);
    let phi = solve_poisson(&next.n, &next.p, params, poisson)?;
    let inv_dt = 1.0 / params.dt;

    let mut mu_n = next.n.map(f64::ln);
    mu_n.axpy(-1.0, &phi);
    let mut r_n = next.n.sub(&initial.n);
    r_n.scale(inv_dt);
    r_n.axpy(-1.0, &flux_divergence(&mob.n, &mu_n));

    let mut mu_p = next.p.map(f64::ln);
    mu_p.axpy(1.0, &phi);
    let mut r_p = next.p.sub(&initial.p);
    r_p.scale(inv_dt);
    r_p.axpy(-1.0, &flux_divergence(&mob.p, &mu_p));
    Ok((r_n, r_p))
}

/// First-order bootstrap step producing the state at `t = dt`: backward
/// Euler with lagged mobilities and fully implicit logarithm and potential,
/// solved by the same relaxation machinery as the second-order step.
pub fn first_order_step(
    initial: &State,
    params: &SchemeParams,
    config: &crate::picard::PicardConfig,
    poisson: &SpectralPoissonSolver,
) -> Result<(State, crate::picard::PicardReport), crate::picard::PicardError> {
    crate::picard::solve_bootstrap_step(initial, params, config, poisson)
}

//! Discrete energy, dissipation rate, masses, and minimum concentration —
//! the per-step quantities a run reports.

use std::io::Write;

use crate::elliptic::SpectralPoissonSolver;
use crate::entropy::xlnx_raw;
use crate::grid::{face_inner_product, gradient, CellField};
use crate::scheme::{chemical_potentials, MobilityPair, SchemeError, SchemeParams, State};

/// One row of the per-step diagnostics table.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub mass_n: f64,
    pub mass_p: f64,
    pub c_min: f64,
    pub dissipation: f64,
    pub picard_iters: usize,
}

pub const DIAGNOSTICS_HEADER: &str = "step,t,energy,mass_n,mass_p,c_min,R,picard_iters";

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.step,
            self.time,
            self.energy,
            self.mass_n,
            self.mass_p,
            self.c_min,
            self.dissipation,
            self.picard_iters
        )
    }
}

pub fn write_diagnostics_csv<W: Write>(
    records: &[DiagnosticsRecord],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Discrete free energy
/// `E_h = <n ln n + p ln p, 1> + 1/2 |n - p - rho_f|_{-1,h}^2`.
///
/// The background charge is folded into the `H^{-1}` term so that the
/// variation of `E_h` reproduces the potential terms of the chemical
/// potentials under the extended Poisson problem. With `rho_f = 0` this is
/// the plain two-species energy.
pub fn energy(
    n: &CellField,
    p: &CellField,
    rho_f: &CellField,
    poisson: &SpectralPoissonSolver,
) -> Result<f64, SchemeError> {
    let min = n.min_value().min(p.min_value());
    if !(min > 0.0) {
        return Err(SchemeError::NonPositiveConcentration {
            species: "n or p",
            min,
        });
    }
    let ones = CellField::constant(n.grid(), 1.0);
    let entropy = n.map(xlnx_raw).inner(&ones) + p.map(xlnx_raw).inner(&ones);
    let mut charge = n.sub(p);
    charge.axpy(-1.0, rho_f);
    charge.project_mean_zero_in_place();
    let electro = poisson.hminus1_norm(&charge)?;
    Ok(entropy + 0.5 * electro * electro)
}

/// Dissipation of the accepted step `m -> m+1`:
/// `R = dt ( [Mn grad mu_n, grad mu_n] + [Mp grad mu_p, grad mu_p] ) >= 0`.
pub fn dissipation(
    next: &State,
    cur: &State,
    mobilities: &MobilityPair,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<f64, SchemeError> {
    let (mu_n, mu_p) = chemical_potentials(&next.n, &next.p, &cur.n, &cur.p, params, poisson)?;
    let gn = gradient(&mu_n);
    let gp = gradient(&mu_p);
    let qn = face_inner_product(&gn.scaled_by(&mobilities.n), &gn);
    let qp = face_inner_product(&gp.scaled_by(&mobilities.p), &gp);
    Ok(params.dt() * (qn + qp))
}

/// `C_min = min(min n, min p)`.
pub fn min_concentration(n: &CellField, p: &CellField) -> f64 {
    n.min_value().min(p.min_value())
}

/// Total masses `(mean(n) |Omega|, mean(p) |Omega|)`.
pub fn masses(n: &CellField, p: &CellField) -> (f64, f64) {
    let vol = n.grid().domain_volume();
    (n.mean() * vol, p.mean() * vol)
}

//! Reproducible experiment runs: the fixed-charge relaxation problem, the
//! resolution-refinement convergence study with the corrected two-grid order
//! formula, and the artifact files a run leaves behind.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::diagnostics::{
    dissipation, energy, masses, min_concentration, DiagnosticsRecord, DIAGNOSTICS_HEADER,
};
use crate::elliptic::SpectralPoissonSolver;
use crate::grid::{write_field, CellField, GridError, GridSpec};
use crate::picard::{initial_state, solve_step, PicardError};
use crate::scheme::{
    chemical_potentials, first_order_step, lagged_mobility_pair, mobility_pair, SchemeError,
    SchemeParams, State,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("solver failed at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: PicardError,
    },
    #[error("mass conservation violated at step {step}: relative drift {drift:e}")]
    MassDrift { step: usize, drift: f64 },
    #[error("fields live on different domains: {0}")]
    MismatchedDomains(String),
    #[error("order undefined: {0}")]
    UndefinedOrder(String),
    #[error("convergence study needs at least 3 strictly increasing resolutions, got {0:?}")]
    BadResolutions(Vec<usize>),
    #[error("run at resolution {resolution} failed: {source}")]
    StudyRun {
        resolution: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Quadrupole background charge sampled at cell centers and projected to
/// exact mean zero:
///
/// ```text
/// rho_f(x,y) = 100/(sigma sqrt(2 pi)) ( G(x+1/2, y+1/2) - G(x+1/2, y-1/2)
///                                     - G(x-1/2, y+1/2) + G(x-1/2, y-1/2) )
/// G(a,b) = exp( -(a^2 + b^2) / (2 sigma^2) )
/// ```
pub fn gaussian_fixed_charge(grid: &GridSpec, sigma: f64) -> Result<CellField, HarnessError> {
    if !(sigma > 0.0) {
        return Err(HarnessError::Config(ConfigError::Invalid(format!(
            "sigma must be positive, got {sigma}"
        ))));
    }
    if grid.dim() != 2 {
        return Err(HarnessError::Config(ConfigError::Invalid(
            "the background charge is two-dimensional".into(),
        )));
    }
    let amp = 100.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let bump = move |a: f64, b: f64| (-(a * a + b * b) * inv_two_sigma_sq).exp();
    let mut rho = CellField::from_fn(*grid, |x| {
        let (x, y) = (x[0], x[1]);
        amp * (bump(x + 0.5, y + 0.5) - bump(x + 0.5, y - 0.5) - bump(x - 0.5, y + 0.5)
            + bump(x - 0.5, y - 0.5))
    });
    rho.project_mean_zero_in_place();
    Ok(rho)
}

/// In-memory outcome of one run; the same data lands in the output files.
#[derive(Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub rho_f: CellField,
    pub final_state: State,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// Runs one experiment, streaming per-step diagnostics to the CSV and
/// invoking `on_step` after every accepted step.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut on_step: impl FnMut(&DiagnosticsRecord),
) -> Result<RunArtifacts, HarnessError> {
    config.validate()?;
    let grid = config.grid()?;
    let rho_f = if config.fixed_charge {
        gaussian_fixed_charge(&grid, config.sigma)?
    } else {
        CellField::zeros(grid)
    };
    let dt = config.effective_dt();
    let steps = config.num_steps();
    let params = SchemeParams::new(dt, config.d_ratio, rho_f.clone())?;
    let poisson = SpectralPoissonSolver::new(grid);

    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir)?;
    let mut csv = BufWriter::new(fs::File::create(out_dir.join("diagnostics.csv"))?);
    writeln!(csv, "{DIAGNOSTICS_HEADER}")?;

    let n0 = CellField::constant(grid, config.initial_n);
    let p0 = CellField::constant(grid, config.initial_p);
    let state0 = initial_state(&n0, &p0, &params, &poisson).map_err(|e| HarnessError::Solver {
        step: 0,
        source: e,
    })?;
    let mass0 = masses(&state0.n, &state0.p);

    let mut records = Vec::with_capacity(steps + 1);
    let push_record = |rec: DiagnosticsRecord,
                           csv: &mut BufWriter<fs::File>,
                           records: &mut Vec<DiagnosticsRecord>|
     -> Result<(), HarnessError> {
        writeln!(csv, "{}", rec.csv_row())?;
        records.push(rec);
        Ok(())
    };

    let e0 = energy(&state0.n, &state0.p, params.rho_f(), &poisson)?;
    let rec0 = DiagnosticsRecord {
        step: 0,
        time: 0.0,
        energy: e0,
        mass_n: mass0.0,
        mass_p: mass0.1,
        c_min: min_concentration(&state0.n, &state0.p),
        dissipation: 0.0,
        picard_iters: 0,
    };
    push_record(rec0, &mut csv, &mut records)?;
    on_step(&rec0);

    let checkpoint = |state: &State, dir: &Path| -> Result<(), HarnessError> {
        dump_state_fields(state, dir, "checkpoint")?;
        Ok(())
    };

    let mut prev = state0;
    let mut cur = {
        let (s1, rep) = match first_order_step(&prev, &params, &config.picard, &poisson) {
            Ok(v) => v,
            Err(e) => {
                csv.flush()?;
                checkpoint(&prev, out_dir)?;
                return Err(HarnessError::Solver { step: 1, source: e });
            }
        };
        // dissipation of the bootstrap step in its own (first-order) flux form
        let mob = lagged_mobility_pair(&prev, &params);
        let r1 = {
            let mut mu_n = s1.n.map(f64::ln);
            mu_n.axpy(-1.0, &s1.phi);
            let mut mu_p = s1.p.map(f64::ln);
            mu_p.axpy(1.0, &s1.phi);
            let gn = crate::grid::gradient(&mu_n);
            let gp = crate::grid::gradient(&mu_p);
            dt * (crate::grid::face_inner_product(&gn.scaled_by(&mob.n), &gn)
                + crate::grid::face_inner_product(&gp.scaled_by(&mob.p), &gp))
        };
        let m = masses(&s1.n, &s1.p);
        let rec = DiagnosticsRecord {
            step: 1,
            time: s1.time,
            energy: energy(&s1.n, &s1.p, params.rho_f(), &poisson)?,
            mass_n: m.0,
            mass_p: m.1,
            c_min: min_concentration(&s1.n, &s1.p),
            dissipation: r1,
            picard_iters: rep.iterations,
        };
        push_record(rec, &mut csv, &mut records)?;
        on_step(&rec);
        maybe_dump_fields(config, &s1, out_dir)?;
        s1
    };

    for step in 2..=steps {
        let (next, rep) = match solve_step(&cur, &prev, &params, &config.picard, &poisson) {
            Ok(v) => v,
            Err(e) => {
                csv.flush()?;
                checkpoint(&cur, out_dir)?;
                return Err(HarnessError::Solver { step, source: e });
            }
        };
        let mob = mobility_pair(&cur, &prev, &params);
        let r = dissipation(&next, &cur, &mob, &params, &poisson)?;
        let m = masses(&next.n, &next.p);
        let drift = ((m.0 - mass0.0).abs() / mass0.0).max((m.1 - mass0.1).abs() / mass0.1);
        if drift > 1e-10 {
            csv.flush()?;
            checkpoint(&next, out_dir)?;
            return Err(HarnessError::MassDrift { step, drift });
        }
        let rec = DiagnosticsRecord {
            step,
            time: next.time,
            energy: energy(&next.n, &next.p, params.rho_f(), &poisson)?,
            mass_n: m.0,
            mass_p: m.1,
            c_min: min_concentration(&next.n, &next.p),
            dissipation: r,
            picard_iters: rep.iterations,
        };
        push_record(rec, &mut csv, &mut records)?;
        on_step(&rec);
        maybe_dump_fields(config, &next, out_dir)?;
        prev = cur;
        cur = next;
    }
    csv.flush()?;

    if config.emit_fields {
        dump_state_fields(&cur, out_dir, "final")?;
        if config.fixed_charge {
            dump_one_field(&rho_f, &out_dir.join("rho_f.txt"))?;
        }
    }
    write_metadata(config, &grid, dt, steps, out_dir)?;

    Ok(RunArtifacts {
        config: config.clone(),
        rho_f,
        final_state: cur,
        diagnostics: records,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    run_experiment_with(config, |_| {})
}

fn maybe_dump_fields(
    config: &ExperimentConfig,
    state: &State,
    dir: &Path,
) -> Result<(), HarnessError> {
    if config.emit_fields && config.field_cadence > 0 && state.step % config.field_cadence == 0 {
        dump_state_fields(state, dir, &format!("{:06}", state.step))?;
    }
    Ok(())
}

fn dump_one_field(field: &CellField, path: &Path) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

fn dump_state_fields(state: &State, dir: &Path, tag: &str) -> Result<(), HarnessError> {
    dump_one_field(&state.n, &dir.join(format!("n_{tag}.txt")))?;
    dump_one_field(&state.p, &dir.join(format!("p_{tag}.txt")))?;
    dump_one_field(&state.phi, &dir.join(format!("phi_{tag}.txt")))?;
    Ok(())
}

fn write_metadata(
    config: &ExperimentConfig,
    grid: &GridSpec,
    dt: f64,
    steps: usize,
    dir: &Path,
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(dir.join("metadata"))?);
    writeln!(w, "# run metadata")?;
    writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "cells_per_axis = {}", grid.cells_per_axis())?;
    writeln!(w, "spacing = {:.16e}", grid.spacing())?;
    writeln!(w, "effective_dt = {:.16e}", dt)?;
    writeln!(w, "steps = {}", steps)?;
    writeln!(w, "energy_fixed_charge_in_hminus1 = true")?;
    writeln!(w, "intergrid_comparison = trigonometric_fine_at_coarse_centers")?;
    writeln!(w, "# configuration echo")?;
    write!(w, "{}", config.to_text())?;
    w.flush()?;
    Ok(())
}

/// Maximum absolute difference between a coarse field and the periodic
/// multilinear interpolant of a finer field at the coarse cell centers.
/// Grids need not be nested; at coincident nodes the interpolation is the
/// identity, so equal resolutions reduce to the plain max difference.
pub fn intergrid_linf_diff(coarse: &CellField, fine: &CellField) -> Result<f64, HarnessError> {
    let gc = coarse.grid();
    let gf = fine.grid();
    if gc.dim() != gf.dim()
        || gc.origin() != gf.origin()
        || (gc.axis_length() - gf.axis_length()).abs() > 1e-12 * gc.axis_length()
    {
        return Err(HarnessError::MismatchedDomains(format!(
            "dim {} vs {}, origin {:?} vs {:?}, length {} vs {}",
            gc.dim(),
            gf.dim(),
            gc.origin(),
            gf.origin(),
            gc.axis_length(),
            gf.axis_length()
        )));
    }
    let dim = gc.dim();
    let nf = gf.cells_per_axis();
    let hf = gf.spacing();
    let mut max_diff = 0.0_f64;
    for c in 0..gc.num_cells() {
        let x = gc.cell_center(c);
        // index coordinates of the fine cell-center lattice
        let mut base = [0usize; 3];
        let mut frac = [0.0_f64; 3];
        for ax in 0..dim {
            let s = (x[ax] - gf.origin()[ax]) / hf - 0.5;
            let i0 = s.floor();
            base[ax] = (i0 as i64).rem_euclid(nf as i64) as usize;
            frac[ax] = s - i0;
        }
        let mut interp = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut idx = 0usize;
            let mut stride = 1usize;
            for ax in 0..dim {
                let up = (corner >> ax) & 1;
                let i = if up == 1 {
                    (base[ax] + 1) % nf
                } else {
                    base[ax]
                };
                weight *= if up == 1 { frac[ax] } else { 1.0 - frac[ax] };
                idx += i * stride;
                stride *= nf;
            }
            interp += weight * fine.values()[idx];
        }
        max_diff = max_diff.max((coarse.values()[c] - interp).abs());
    }
    Ok(max_diff)
}

/// Evaluates the trigonometric interpolant of a finer periodic field at the
/// cell centers of a coarser grid on the same two-dimensional domain.
///
/// The transfer is exact on every mode the fine grid resolves, so the
/// returned comparison isolates the true grid-function difference. A
/// low-order transfer (e.g. bilinear) injects an `O(h_fine^2 lap(u))` error
/// that, on fields with large curvature, dominates the scheme difference
/// and corrupts measured convergence orders.
pub fn spectral_interpolate_to(
    coarse_grid: GridSpec,
    fine: &CellField,
) -> Result<CellField, HarnessError> {
    let gf = fine.grid();
    if coarse_grid.dim() != 2 || gf.dim() != 2 {
        return Err(HarnessError::MismatchedDomains(
            "spectral transfer is two-dimensional".into(),
        ));
    }
    if coarse_grid.origin() != gf.origin()
        || (coarse_grid.axis_length() - gf.axis_length()).abs()
            > 1e-12 * coarse_grid.axis_length()
    {
        return Err(HarnessError::MismatchedDomains(format!(
            "origin {:?} vs {:?}, length {} vs {}",
            coarse_grid.origin(),
            gf.origin(),
            coarse_grid.axis_length(),
            gf.axis_length()
        )));
    }
    use rustfft::{num_complex::Complex, FftPlanner};
    let nc = coarse_grid.cells_per_axis();
    let nf = gf.cells_per_axis();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nf);
    let mut buf: Vec<Complex<f64>> =
        fine.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let mut col = vec![Complex::new(0.0, 0.0); nf];
    for i in 0..nf {
        for j in 0..nf {
            col[j] = buf[j * nf + i];
        }
        fwd.process(&mut col);
        for j in 0..nf {
            buf[j * nf + i] = col[j];
        }
    }
    let norm = 1.0 / (nf * nf) as f64;
    let tau = std::f64::consts::TAU;
    let length = coarse_grid.axis_length();
    let hc = coarse_grid.spacing();
    let hf = gf.spacing();
    let wave = |k: usize| -> f64 {
        if k <= nf / 2 {
            k as f64
        } else {
            k as f64 - nf as f64
        }
    };
    // per-axis phase tables for the coarse-center offsets
    let phases: Vec<Vec<Complex<f64>>> = (0..nc)
        .map(|c| {
            let s = ((c as f64 + 0.5) * hc - 0.5 * hf) / length;
            (0..nf)
                .map(|k| Complex::from_polar(1.0, tau * wave(k) * s))
                .collect()
        })
        .collect();
    let mut out = CellField::zeros(coarse_grid);
    for cj in 0..nc {
        for ci in 0..nc {
            let px = &phases[ci];
            let py = &phases[cj];
            let mut acc = Complex::new(0.0, 0.0);
            for kj in 0..nf {
                let mut row = Complex::new(0.0, 0.0);
                for ki in 0..nf {
                    row += buf[kj * nf + ki] * px[ki];
                }
                acc += row * py[kj];
            }
            out.values_mut()[cj * nc + ci] = acc.re * norm;
        }
    }
    Ok(out)
}

/// Max-norm intergrid difference with the exact trigonometric transfer; the
/// comparison the convergence study uses.
pub fn spectral_intergrid_linf_diff(
    coarse: &CellField,
    fine: &CellField,
) -> Result<f64, HarnessError> {
    let interp = spectral_interpolate_to(coarse.grid(), fine)?;
    Ok(coarse
        .values()
        .iter()
        .zip(interp.values())
        .fold(0.0_f64, |m, (&a, &b)| m.max((a - b).abs())))
}

/// Two-grid convergence order from successive-difference norms `d1`, `d2` on
/// the resolution triple `h0 > h1 > h2`, with the correction factor
///
/// ```text
/// A* = (1 - h1^2/h0^2) / (1 - h2^2/h1^2),
/// order = ln( d1 / (A* d2) ) / ln( h0 / h1 )
/// ```
///
/// which returns exactly 2 for differences following the `h^2` pattern.
pub fn richardson_order(d1: f64, d2: f64, h: (f64, f64, f64)) -> Result<(f64, f64), HarnessError> {
    let (h0, h1, h2) = h;
    if !(h0 > h1 && h1 > h2 && h2 > 0.0) {
        return Err(HarnessError::UndefinedOrder(format!(
            "resolutions must strictly decrease, got ({h0}, {h1}, {h2})"
        )));
    }
    if !(d1 > 0.0 && d2 > 0.0) || !d1.is_finite() || !d2.is_finite() {
        return Err(HarnessError::UndefinedOrder(format!(
            "differences must be positive and finite, got ({d1:e}, {d2:e})"
        )));
    }
    let astar = (1.0 - (h1 * h1) / (h0 * h0)) / (1.0 - (h2 * h2) / (h1 * h1));
    let order = (d1 / (astar * d2)).ln() / (h0 / h1).ln();
    Ok((astar, order))
}

/// Differences between two consecutive resolutions for all three fields.
#[derive(Debug, Clone, Copy)]
pub struct PairDiff {
    pub h_coarse: f64,
    pub h_fine: f64,
    pub diff_n: f64,
    pub diff_p: f64,
    pub diff_phi: f64,
}

/// Corrected orders from one resolution triple.
#[derive(Debug, Clone, Copy)]
pub struct OrderRow {
    pub h: (f64, f64, f64),
    pub astar: f64,
    pub order_n: f64,
    pub order_p: f64,
    pub order_phi: f64,
}

#[derive(Debug)]
pub struct ConvergenceStudy {
    pub pairs: Vec<PairDiff>,
    pub orders: Vec<OrderRow>,
    pub runs: Vec<RunArtifacts>,
}

/// Runs the experiment at every resolution (concurrently; runs share no
/// state), compares consecutive final fields, and estimates orders for each
/// consecutive triple. Artifacts land under `base.output_dir`, one `rNNN`
/// subdirectory per resolution plus `convergence.csv`.
pub fn convergence_study(
    base: &ExperimentConfig,
    resolutions: &[usize],
) -> Result<ConvergenceStudy, HarnessError> {
    if resolutions.len() < 3 || resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::BadResolutions(resolutions.to_vec()));
    }
    let configs: Vec<ExperimentConfig> = resolutions
        .iter()
        .map(|&r| ExperimentConfig {
            resolution: r,
            output_dir: base.output_dir.join(format!("r{r:03}")),
            ..base.clone()
        })
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    fs::create_dir_all(&base.output_dir)?;

    let mut outcomes: Vec<Option<Result<RunArtifacts, HarnessError>>> =
        (0..configs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for cfg in &configs {
            handles.push(scope.spawn(move || run_experiment(cfg)));
        }
        for (slot, handle) in outcomes.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("study worker panicked"));
        }
    });

    let mut runs = Vec::new();
    let mut failure: Option<(usize, HarnessError)> = None;
    for (outcome, &r) in outcomes.into_iter().zip(resolutions) {
        match outcome.expect("worker slot filled") {
            Ok(art) => {
                if failure.is_none() {
                    runs.push(art);
                }
            }
            Err(e) => {
                if failure.is_none() {
                    failure = Some((r, e));
                }
            }
        }
    }

    let mut pairs = Vec::new();
    for w in runs.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        pairs.push(PairDiff {
            h_coarse: coarse.config.spacing(),
            h_fine: fine.config.spacing(),
            diff_n: spectral_intergrid_linf_diff(&coarse.final_state.n, &fine.final_state.n)?,
            diff_p: spectral_intergrid_linf_diff(&coarse.final_state.p, &fine.final_state.p)?,
            diff_phi: spectral_intergrid_linf_diff(&coarse.final_state.phi, &fine.final_state.phi)?,
        });
    }
    let mut orders = Vec::new();
    for (j, w) in pairs.windows(2).enumerate() {
        let (d1, d2) = (&w[0], &w[1]);
        let h = (
            runs[j].config.spacing(),
            runs[j + 1].config.spacing(),
            runs[j + 2].config.spacing(),
        );
        let (astar, order_n) = richardson_order(d1.diff_n, d2.diff_n, h)?;
        let (_, order_p) = richardson_order(d1.diff_p, d2.diff_p, h)?;
        let (_, order_phi) = richardson_order(d1.diff_phi, d2.diff_phi, h)?;
        orders.push(OrderRow {
            h,
            astar,
            order_n,
            order_p,
            order_phi,
        });
    }

    let incomplete = failure.as_ref().map(|(r, e)| format!("resolution {r} failed: {e}"));
    write_convergence_csv(
        &base.output_dir.join("convergence.csv"),
        &pairs,
        &orders,
        incomplete.as_deref(),
    )?;

    if let Some((resolution, source)) = failure {
        return Err(HarnessError::StudyRun {
            resolution,
            source: Box::new(source),
        });
    }
    Ok(ConvergenceStudy { pairs, orders, runs })
}

fn write_convergence_csv(
    path: &Path,
    pairs: &[PairDiff],
    orders: &[OrderRow],
    incomplete: Option<&str>,
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if let Some(msg) = incomplete {
        writeln!(w, "# incomplete: {msg}")?;
    }
    writeln!(w, "pair,h_coarse,h_fine,diff_n,diff_p,diff_phi")?;
    for (i, p) in pairs.iter().enumerate() {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            i + 1,
            p.h_coarse,
            p.h_fine,
            p.diff_n,
            p.diff_p,
            p.diff_phi
        )?;
    }
    writeln!(w)?;
    writeln!(w, "triple,astar,order_n,order_p,order_phi")?;
    for (i, o) in orders.iter().enumerate() {
        writeln!(
            w,
            "{},{:.16e},{:.6},{:.6},{:.6}",
            i + 1,
            o.astar,
            o.order_n,
            o.order_p,
            o.order_phi
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Residual scale of an accepted step (for spot checks): max of the two
/// species' discrete-equation residual norms.
pub fn step_residual_norm(
    next: &State,
    cur: &State,
    prev: &State,
    params: &SchemeParams,
    poisson: &SpectralPoissonSolver,
) -> Result<f64, HarnessError> {
    let mob = mobility_pair(cur, prev, params);
    let (mu_n, mu_p) = chemical_potentials(&next.n, &next.p, &cur.n, &cur.p, params, poisson)?;
    let inv_dt = 1.0 / params.dt();
    let mut r_n = next.n.sub(&cur.n);
    r_n.scale(inv_dt);
    r_n.axpy(-1.0, &crate::grid::flux_divergence(&mob.n, &mu_n));
    let mut r_p = next.p.sub(&cur.p);
    r_p.scale(inv_dt);
    r_p.axpy(-1.0, &crate::grid::flux_divergence(&mob.p, &mu_p));
    Ok(r_n.l2_norm().max(r_p.l2_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DtRule;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_charge_is_antisymmetric_and_mean_zero() {
        let grid = GridSpec::new(2, 100, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let amp = 100.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt());
        // raw samples (before projection) mirror-antisymmetric in y
        let raw = CellField::from_fn(grid, |x| {
            let b = |a: f64, c: f64| (-(a * a + c * c) / 0.5).exp();
            amp * (b(x[0] + 0.5, x[1] + 0.5) - b(x[0] + 0.5, x[1] - 0.5)
                - b(x[0] - 0.5, x[1] + 0.5)
                + b(x[0] - 0.5, x[1] - 0.5))
        });
        let n = grid.cells_per_axis();
        for j in 0..n {
            for i in 0..n {
                let v = raw.values()[j * n + i];
                let vm = raw.values()[(n - 1 - j) * n + i];
                assert!(
                    (v + vm).abs() <= 1e-12 * amp,
                    "antisymmetry broken at ({i},{j})"
                );
            }
        }
        assert!(raw.mean().abs() <= 1e-10 * amp);
        let rho = gaussian_fixed_charge(&grid, 0.5).unwrap();
        assert!(rho.mean().abs() <= 1e-16 * amp);
    }

    #[test]
    fn gaussian_charge_value_at_lower_left_pole() {
        // at (-1/2,-1/2) the four terms collapse to 1 - 2 e^{-2} + e^{-4}
        let grid = GridSpec::new(2, 10, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let sigma = 0.5_f64;
        let rho = {
            // sample without projection: evaluate the formula directly
            let amp = 100.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let b = |a: f64, c: f64| (-(a * a + c * c) / (2.0 * sigma * sigma)).exp();
            let f = |x: f64, y: f64| {
                amp * (b(x + 0.5, y + 0.5) - b(x + 0.5, y - 0.5) - b(x - 0.5, y + 0.5)
                    + b(x - 0.5, y - 0.5))
            };
            f(-0.5, -0.5)
        };
        let amp = 100.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let expect = amp * (1.0 - 2.0 * (-2.0_f64).exp() + (-4.0_f64).exp());
        assert_relative_eq!(rho, expect, max_relative = 1e-14);
        // and the grid sees that value at the nearest cell center
        let field = gaussian_fixed_charge(&grid, sigma).unwrap();
        let n = grid.cells_per_axis();
        // (-1/2, -1/2) is the center of cell (2, 2) at h = 0.2
        let sampled = field.values()[2 * n + 2];
        assert_relative_eq!(sampled, expect, max_relative = 1e-6);
    }

    #[test]
    fn gaussian_charge_rejects_bad_sigma() {
        let grid = GridSpec::new(2, 8, [-1.0, -1.0, 0.0], 2.0).unwrap();
        assert!(gaussian_fixed_charge(&grid, 0.0).is_err());
        assert!(gaussian_fixed_charge(&grid, -1.0).is_err());
    }

    #[test]
    fn richardson_order_reproduces_reference_rows() {
        // concentration rows of the published study
        let (astar, order) = richardson_order(
            1.196e-4,
            2.243e-5,
            (1.0 / 20.0, 1.0 / 40.0, 1.0 / 60.0),
        )
        .unwrap();
        assert_relative_eq!(astar, 1.35, max_relative = 1e-10);
        assert!((order - 1.98).abs() <= 0.01, "order = {order}");
        let (_, order) = richardson_order(
            2.243e-5,
            7.851e-6,
            (1.0 / 40.0, 1.0 / 60.0, 1.0 / 80.0),
        )
        .unwrap();
        assert!((order - 2.00).abs() <= 0.01, "order = {order}");
    }

    #[test]
    fn richardson_order_is_exact_on_synthetic_h2_data() {
        let h = (0.05, 0.025, 0.0125);
        let c = 3.7;
        let d1 = c * (h.0 * h.0 - h.1 * h.1);
        let d2 = c * (h.1 * h.1 - h.2 * h.2);
        let (_, order) = richardson_order(d1, d2, h).unwrap();
        assert!((order - 2.0).abs() <= 1e-12, "order = {order}");
    }

    #[test]
    fn richardson_order_rejects_degenerate_input() {
        assert!(richardson_order(0.0, 1e-5, (0.05, 0.025, 0.0125)).is_err());
        assert!(richardson_order(1e-4, 1e-5, (0.025, 0.05, 0.0125)).is_err());
    }

    #[test]
    fn intergrid_diff_identity_and_constants() {
        let g = GridSpec::new(2, 12, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let f = crate::util::test_fields::wavy(g, 3);
        // identical resolutions: plain max-abs difference
        let shifted = f.map(|v| v + 1e-3);
        let d = intergrid_linf_diff(&f, &shifted).unwrap();
        assert_relative_eq!(d, 1e-3, max_relative = 1e-12);
        // constants interpolate exactly
        let gc = GridSpec::new(2, 12, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let gf = GridSpec::new(2, 30, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let c1 = CellField::constant(gc, 4.0);
        let c2 = CellField::constant(gf, 4.0);
        assert_eq!(intergrid_linf_diff(&c1, &c2).unwrap(), 0.0);
    }

    #[test]
    fn intergrid_diff_of_analytic_samples_is_second_order() {
        let tau = std::f64::consts::TAU;
        let f = |x: &[f64]| (tau * 0.5 * x[0]).sin() * (tau * 0.5 * x[1]).cos();
        let mut prev: Option<f64> = None;
        for nf in [40usize, 80] {
            let gc = GridSpec::new(2, 20, [-1.0, -1.0, 0.0], 2.0).unwrap();
            let gf = GridSpec::new(2, nf, [-1.0, -1.0, 0.0], 2.0).unwrap();
            let coarse = CellField::from_fn(gc, f);
            let fine = CellField::from_fn(gf, f);
            let d = intergrid_linf_diff(&coarse, &fine).unwrap();
            let hf = gf.spacing();
            // pure interpolation error of the smooth function
            assert!(d <= tau * tau * hf * hf, "d = {d} at hf = {hf}");
            if let Some(p) = prev {
                assert!(d < p);
            }
            prev = Some(d);
        }
    }

    #[test]
    fn spectral_transfer_is_exact_on_resolved_modes() {
        let tau = std::f64::consts::TAU;
        let f = |x: &[f64]| (tau * 1.5 * x[0]).sin() * (tau * 2.0 * x[1]).cos() + 0.3;
        let gc = GridSpec::new(2, 20, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let gf = GridSpec::new(2, 50, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let coarse = CellField::from_fn(gc, f);
        let fine = CellField::from_fn(gf, f);
        // modes (3, 4) on the length-2 torus are resolved by both grids, so
        // the trigonometric transfer reproduces the coarse samples exactly
        let d = spectral_intergrid_linf_diff(&coarse, &fine).unwrap();
        assert!(d <= 1e-12, "d = {d:e}");
        // identity at equal resolutions
        let shifted = coarse.map(|v| v + 2e-4);
        let d = spectral_intergrid_linf_diff(&coarse, &shifted).unwrap();
        assert_relative_eq!(d, 2e-4, max_relative = 1e-10);
    }

    #[test]
    fn intergrid_diff_rejects_mismatched_domains() {
        let g1 = GridSpec::new(2, 8, [-1.0, -1.0, 0.0], 2.0).unwrap();
        let g2 = GridSpec::unit(2, 8).unwrap();
        let a = CellField::zeros(g1);
        let b = CellField::zeros(g2);
        assert!(matches!(
            intergrid_linf_diff(&a, &b),
            Err(HarnessError::MismatchedDomains(_))
        ));
    }

    #[test]
    fn uniform_run_without_charge_stays_stationary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            resolution: 8,
            axis_length: 2.0,
            final_time: 0.05,
            dt_rule: DtRule::ProportionalToH { factor: 0.1 },
            fixed_charge: false,
            emit_fields: false,
            output_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let art = run_experiment(&cfg).unwrap();
        let s = &art.final_state;
        for &v in s.n.values().iter().chain(s.p.values()) {
            assert_relative_eq!(v, 0.01, max_relative = 1e-12);
        }
        let e0 = art.diagnostics[0].energy;
        for rec in &art.diagnostics {
            assert!((rec.energy - e0).abs() <= 1e-12 * e0.abs().max(1.0));
            assert!(rec.c_min > 0.0);
        }
    }
}

//! Built-in invariant suite behind the `check` CLI subcommand: fast
//! small-grid verification of the discrete identities the solver relies on.

use crate::elliptic::{SpectralPoissonSolver, WeightedEllipticSolver};
use crate::entropy::{g1, g1_split, g2, xlnx_raw};
use crate::grid::{
    divergence, face_average, face_inner_product, gradient, laplacian, weighted_divergence,
    CellField, GridSpec,
};
use crate::picard::{initial_state, PicardConfig};
use crate::scheme::{first_order_step, SchemeParams};
use crate::util::test_fields::{smooth_positive, wavy};

pub struct CheckOutcome {
    pub passed: usize,
    pub failed: usize,
}

struct Suite {
    passed: usize,
    failed: usize,
}

impl Suite {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            self.passed += 1;
            println!("PASS {name}");
        } else {
            self.failed += 1;
            println!("FAIL {name}: {detail}");
        }
    }
}

/// Runs every check, printing one PASS/FAIL line each.
pub fn run_checks() -> CheckOutcome {
    let mut suite = Suite {
        passed: 0,
        failed: 0,
    };
    operator_identities(&mut suite);
    elliptic_identities(&mut suite);
    quotient_identities(&mut suite);
    stepping_invariants(&mut suite);
    CheckOutcome {
        passed: suite.passed,
        failed: suite.failed,
    }
}

fn operator_identities(s: &mut Suite) {
    for dim in [2usize, 3] {
        let n = if dim == 2 { 16 } else { 8 };
        let g = GridSpec::unit(dim, n).unwrap();
        let psi = wavy(g, 101);
        let phi = wavy(g, 202);
        let w = smooth_positive(g, 303);

        let lap = laplacian(&phi);
        let composed = divergence(&gradient(&phi));
        s.check(
            &format!("laplacian = div(grad) bitwise ({dim}D)"),
            lap.values() == composed.values(),
            "composition differs".into(),
        );

        let v = gradient(&phi);
        let lhs = psi.inner(&divergence(&v));
        let rhs = -face_inner_product(&gradient(&psi), &v);
        let scale = psi.l2_norm() * face_inner_product(&v, &v).sqrt() + 1.0;
        s.check(
            &format!("summation by parts ({dim}D)"),
            (lhs - rhs).abs() <= 1e-12 * scale,
            format!("gap {:e}", (lhs - rhs).abs()),
        );

        let lhs_w = psi.inner(&weighted_divergence(&w, &phi));
        let mut gphi = gradient(&phi);
        for &ax in g.axes() {
            gphi.comp_mut(ax).mul_assign(&face_average(&w, ax));
        }
        let rhs_w = -face_inner_product(&gradient(&psi), &gphi);
        s.check(
            &format!("weighted summation by parts ({dim}D)"),
            (lhs_w - rhs_w).abs() <= 1e-12 * scale,
            format!("gap {:e}", (lhs_w - rhs_w).abs()),
        );

        let d = weighted_divergence(&w, &phi);
        s.check(
            &format!("flux form has zero mean ({dim}D)"),
            d.mean().abs() <= 1e-14 * d.linf_norm().max(1.0),
            format!("mean {:e}", d.mean()),
        );
    }
}

fn elliptic_identities(s: &mut Suite) {
    let g = GridSpec::unit(2, 16).unwrap();
    let poisson = SpectralPoissonSolver::new(g);
    let base = wavy(g, 404).project_mean_zero();
    let f = laplacian(&base);
    match poisson.inv_laplacian(&f) {
        Ok(psi) => {
            let err = psi.add(&base).l2_norm() / base.l2_norm().max(1e-300);
            s.check(
                "inverse Laplacian roundtrip",
                err <= 1e-12,
                format!("relative error {err:e}"),
            );
        }
        Err(e) => s.check("inverse Laplacian roundtrip", false, e.to_string()),
    }

    let f1 = wavy(g, 505).project_mean_zero();
    let f2 = wavy(g, 606).project_mean_zero();
    let t1 = poisson.inv_laplacian(&f1).unwrap();
    let t2 = poisson.inv_laplacian(&f2).unwrap();
    let (a, b) = (f1.inner(&t2), t1.inner(&f2));
    s.check(
        "inverse Laplacian self-adjointness",
        (a - b).abs() <= 1e-12 * a.abs().max(1.0),
        format!("gap {:e}", (a - b).abs()),
    );

    let ones = CellField::constant(g, 1.0);
    let unit = WeightedEllipticSolver::with_cell_weight(&ones).unwrap();
    let direct = poisson.inv_laplacian(&f1).unwrap();
    match unit.solve(&f1) {
        Ok(via_cg) => {
            let err = direct.sub(&via_cg).l2_norm() / direct.l2_norm().max(1e-300);
            s.check(
                "unit-weight solve matches spectral solve",
                err <= 1e-9,
                format!("relative error {err:e}"),
            );
        }
        Err(e) => s.check("unit-weight solve matches spectral solve", false, e.to_string()),
    }
}

fn quotient_identities(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut nonneg = true;
    let mut monotone = true;
    for i in 1..=100u32 {
        let a = 10f64.powf(-5.0 + 0.1 * i as f64);
        for j in 1..=100u32 {
            let x = 10f64.powf(-5.0 + 0.1 * j as f64);
            nonneg &= g2(a, x).unwrap() >= 0.0;
            if (x - a).abs() > 1e-6 * a {
                let (lead, q) = g1_split(a, x).unwrap();
                let direct = g1(a, x).unwrap();
                let scale = x.ln().abs() + a.ln().abs() + 2.0;
                worst = worst.max((lead + q - direct).abs() / scale);
            }
            monotone &= g1(a, x * 1.01).unwrap() >= g1(a, x).unwrap() - 1e-12;
        }
    }
    s.check("G2 nonnegative on log grid", nonneg, "negative value".into());
    s.check("G1 monotone on log grid", monotone, "decrease found".into());
    s.check(
        "split reconstructs G1",
        worst <= 1e-12,
        format!("worst gap {worst:e}"),
    );

    // entropy-difference identity <u1 - u0, G1_{u0}(u1)> = sum F(u1) - F(u0)
    let g = GridSpec::unit(2, 12).unwrap();
    let u0 = smooth_positive(g, 707);
    let u1 = u0.add(&wavy(g, 808).scaled(0.05));
    let mut quot = CellField::zeros(g);
    for c in 0..g.num_cells() {
        quot.values_mut()[c] = g1(u0.values()[c], u1.values()[c]).unwrap();
    }
    let lhs = u1.sub(&u0).inner(&quot);
    let ones = CellField::constant(g, 1.0);
    let rhs = u1.map(xlnx_raw).inner(&ones) - u0.map(xlnx_raw).inner(&ones);
    s.check(
        "entropy-difference identity",
        (lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0),
        format!("gap {:e}", (lhs - rhs).abs()),
    );
}

fn stepping_invariants(s: &mut Suite) {
    let g = GridSpec::new(2, 10, [-1.0, -1.0, 0.0], 2.0).unwrap();
    let poisson = SpectralPoissonSolver::new(g);
    let rho = match crate::harness::gaussian_fixed_charge(&g, 0.5) {
        Ok(r) => r,
        Err(e) => {
            s.check("background charge setup", false, e.to_string());
            return;
        }
    };
    let dt = 0.1 * g.spacing();
    let params = SchemeParams::new(dt, 1.0, rho).unwrap();
    let cfg = PicardConfig::default();
    let n0 = CellField::constant(g, 0.01);
    let s0 = initial_state(&n0, &n0, &params, &poisson).unwrap();
    match first_order_step(&s0, &params, &cfg, &poisson) {
        Ok((s1, rep)) => {
            s.check(
                "bootstrap step keeps positivity",
                s1.n.min_value() > 0.0 && s1.p.min_value() > 0.0,
                format!("min {:e}", s1.n.min_value().min(s1.p.min_value())),
            );
            let drift = ((s1.n.mean() - 0.01).abs()).max((s1.p.mean() - 0.01).abs()) / 0.01;
            s.check(
                "bootstrap step conserves mass",
                drift <= 1e-12,
                format!("drift {drift:e}"),
            );
            match crate::picard::solve_step(&s1, &s0, &params, &cfg, &poisson) {
                Ok((s2, rep2)) => {
                    let drift = ((s2.n.mean() - 0.01).abs()).max((s2.p.mean() - 0.01).abs()) / 0.01;
                    s.check(
                        "implicit step conserves mass and positivity",
                        drift <= 1e-12 && s2.n.min_value() > 0.0 && s2.p.min_value() > 0.0,
                        format!("drift {drift:e}, iters {}", rep2.iterations),
                    );
                    let e1 = crate::diagnostics::energy(&s1.n, &s1.p, params.rho_f(), &poisson)
                        .unwrap();
                    let e2 = crate::diagnostics::energy(&s2.n, &s2.p, params.rho_f(), &poisson)
                        .unwrap();
                    s.check(
                        "energy decays across the implicit step",
                        e2 <= e1 + 1e-8,
                        format!("E1 {e1}, E2 {e2}, iters {}", rep.iterations),
                    );
                }
                Err(e) => s.check("implicit step conserves mass and positivity", false, e.to_string()),
            }
        }
        Err(e) => s.check("bootstrap step keeps positivity", false, e.to_string()),
    }
}

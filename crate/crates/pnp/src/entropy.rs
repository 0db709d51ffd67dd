//! Numerically stable evaluation of the entropy density `F(x) = x ln x` and
//! its difference-quotient family around a positive anchor `a`:
//!
//! ```text
//! G1_a(x) = (F(x) - F(a)) / (x - a)          (modified midpoint surrogate)
//! G0_a(x) = integral_a^x G1_a(t) dt          (convex primitive, test use)
//! G2_a(x) = (G1_a)'(x)                       (nonnegative curvature)
//! ```
//!
//! The naive quotient cancels catastrophically as `x -> a`. All quotients
//! here go through the exact split `F(x) - F(a) = (x-a) ln x + a ln(x/a)`,
//! whose second term reduces to `ln(1+d)/d` with `d = x/a - 1`; that ratio
//! is uniformly accurate in double precision. Inside a narrow relative band
//! around the anchor a Taylor series takes over, and `G1_a(a) = ln a + 1`
//! holds exactly.

use thiserror::Error;

/// Default relative half-width `|x-a|/a` of the series band around the anchor.
pub const DEFAULT_DELTA_REL: f64 = 1e-7;

/// Largest admissible series band; beyond this the truncated series itself
/// becomes the dominant error.
pub const MAX_DELTA_REL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("argument must be positive, got {0:e}")]
    NonPositive(f64),
    #[error("anchor must be positive, got {0:e}")]
    NonPositiveAnchor(f64),
    #[error("series band must lie in (0, {MAX_DELTA_REL:e}], got {0:e}")]
    BadBand(f64),
}

/// `F(x) = x ln x`, the entropy density of the logarithmic potential.
pub fn xlnx(x: f64) -> Result<f64, EntropyError> {
    if !(x > 0.0) {
        return Err(EntropyError::NonPositive(x));
    }
    Ok(x * x.ln())
}

#[inline]
pub(crate) fn xlnx_raw(x: f64) -> f64 {
    x * x.ln()
}

/// `a (ln x - ln a) / (x - a)`, the logarithmic mean quotient. Equals 1 at
/// `x = a` in the limit; uniformly accurate for all positive `a`, `x`.
#[inline]
pub(crate) fn log_mean_quotient(a: f64, x: f64) -> f64 {
    let r = x / a;
    if (0.5..=2.0).contains(&r) {
        let d = r - 1.0; // exact by Sterbenz subtraction in this range
        if d == 0.0 {
            return 1.0;
        }
        d.ln_1p() / d
    } else {
        (x.ln() - a.ln()) / (r - 1.0)
    }
}

/// `G1_a(x)` with an explicit series band.
#[inline]
pub(crate) fn g1_raw(a: f64, x: f64, delta_rel: f64) -> f64 {
    let dx = x - a;
    if dx.abs() <= delta_rel * a {
        // ln a + 1 + (x-a)/(2a) - (x-a)^2/(6a^2); next term (x-a)^3/(12a^3)
        return a.ln() + 1.0 + dx / (2.0 * a) - dx * dx / (6.0 * a * a);
    }
    x.ln() + log_mean_quotient(a, x)
}

/// `G2_a(x) = (G1_a)'(x)` with an explicit series band.
#[inline]
pub(crate) fn g2_raw(a: f64, x: f64) -> f64 {
    let r = x / a;
    if (0.5..=2.0).contains(&r) {
        let d = r - 1.0;
        if d.abs() <= 1e-3 {
            // (d - ln(1+d))/(a d^2) = (1/a)(1/2 - d/3 + d^2/4 - d^3/5 + ...)
            return (0.5 - d / 3.0 + d * d / 4.0 - d * d * d / 5.0 + d * d * d * d / 6.0) / a;
        }
        (d - d.ln_1p()) / (a * d * d)
    } else {
        let d = r - 1.0;
        (d - (x.ln() - a.ln())) / (a * d * d)
    }
}

/// Difference-quotient evaluator pinned to one anchor `a > 0`.
#[derive(Debug, Clone, Copy)]
pub struct QuotientEval {
    anchor: f64,
    delta_rel: f64,
}

impl QuotientEval {
    pub fn new(anchor: f64) -> Result<Self, EntropyError> {
        QuotientEval::with_band(anchor, DEFAULT_DELTA_REL)
    }

    pub fn with_band(anchor: f64, delta_rel: f64) -> Result<Self, EntropyError> {
        if !(anchor > 0.0) {
            return Err(EntropyError::NonPositiveAnchor(anchor));
        }
        if !(delta_rel > 0.0 && delta_rel <= MAX_DELTA_REL) {
            return Err(EntropyError::BadBand(delta_rel));
        }
        Ok(QuotientEval { anchor, delta_rel })
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn delta_rel(&self) -> f64 {
        self.delta_rel
    }

    fn check(&self, x: f64) -> Result<(), EntropyError> {
        if !(x > 0.0) {
            return Err(EntropyError::NonPositive(x));
        }
        Ok(())
    }

    /// `G1_a(x) = (x ln x - a ln a)/(x - a)`, with `G1_a(a) = ln a + 1`.
    pub fn g1(&self, x: f64) -> Result<f64, EntropyError> {
        self.check(x)?;
        Ok(g1_raw(self.anchor, x, self.delta_rel))
    }

    /// `G2_a(x) = (F'(x)(x-a) - (F(x)-F(a)))/(x-a)^2 >= 0`.
    pub fn g2(&self, x: f64) -> Result<f64, EntropyError> {
        self.check(x)?;
        Ok(g2_raw(self.anchor, x))
    }

    /// `G0_a(x)` by adaptive Simpson quadrature of `G1_a` from `a` to `x`
    /// (absolute tolerance `1e-13`). Intended for verification work, not the
    /// time-stepping path.
    pub fn g0(&self, x: f64) -> Result<f64, EntropyError> {
        self.check(x)?;
        let a = self.anchor;
        if x == a {
            return Ok(0.0);
        }
        let f = |t: f64| g1_raw(a, t, self.delta_rel);
        Ok(adaptive_simpson(&f, a, x, 1e-13))
    }

    /// Splits `G1_a(x)` as `(ln x, a (ln x - ln a)/(x - a))`, the form the
    /// relaxation solver uses; inside the band the quotient falls back to
    /// the Pade surrogate `2a/(x+a)`.
    pub fn split(&self, x: f64) -> Result<(f64, f64), EntropyError> {
        self.check(x)?;
        let a = self.anchor;
        let lead = x.ln();
        let quotient = if (x - a).abs() <= self.delta_rel * a {
            2.0 * a / (x + a)
        } else {
            log_mean_quotient(a, x)
        };
        Ok((lead, quotient))
    }
}

/// `G1_a(x)` with the default band.
pub fn g1(a: f64, x: f64) -> Result<f64, EntropyError> {
    QuotientEval::new(a)?.g1(x)
}

/// `G2_a(x)` with the default band.
pub fn g2(a: f64, x: f64) -> Result<f64, EntropyError> {
    QuotientEval::new(a)?.g2(x)
}

/// `G0_a(x)` with the default band.
pub fn g0(a: f64, x: f64) -> Result<f64, EntropyError> {
    QuotientEval::new(a)?.g0(x)
}

/// `(lead, quotient)` split of `G1_a(x)` with the default band.
pub fn g1_split(a: f64, x: f64) -> Result<(f64, f64), EntropyError> {
    QuotientEval::new(a)?.split(x)
}

/// Quotient used inside the relaxation sweeps: same logarithmic mean as
/// `g1_split` but with the Pade fallback engaged only when `x` and the
/// anchor agree to machine-error scale. Logs are passed in because the
/// caller already has them.
#[inline]
pub(crate) fn solver_log_quotient(a: f64, x: f64, ln_a: f64, ln_x: f64) -> f64 {
    let dx = x - a;
    if dx.abs() <= 1e3 * f64::EPSILON * x.max(a) {
        return 2.0 * a / (x + a);
    }
    let r = x / a;
    if (0.5..=2.0).contains(&r) {
        let d = r - 1.0;
        d.ln_1p() / d
    } else {
        (ln_x - ln_a) / (r - 1.0)
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

//! Small numeric utilities shared across the crate.

/// Neumaier compensated summation. Deterministic and accurate enough that
/// telescoping flux sums come out at the rounding level of the true result,
/// independent of the number of terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        CompensatedSum::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Deterministic pseudo-random-looking smooth periodic fields for property
/// checks: trig polynomials with seed-dependent modes and phases. Used by the
/// built-in `check` suite and by unit tests.
pub(crate) mod test_fields {
    use crate::grid::{CellField, GridSpec};

    fn phase(seed: u64, k: u64) -> f64 {
        // splitmix64-style scramble mapped to [0, 1)
        let mut z = seed.wrapping_add(k.wrapping_mul(0x9E3779B97F4A7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Mean-free-ish oscillatory field with a handful of periodic modes.
    pub fn wavy(grid: GridSpec, seed: u64) -> CellField {
        let tau = std::f64::consts::TAU;
        let len = grid.axis_length();
        CellField::from_fn(grid, |x| {
            let mut v = 0.0;
            for m in 1..=3u64 {
                let amp = 0.3 + phase(seed, 7 * m);
                let mut arg = phase(seed, m) * tau;
                for (ax, &xi) in x.iter().enumerate() {
                    let freq = 1.0 + (phase(seed, m + 13 * ax as u64) * 2.0).floor();
                    arg += freq * tau * xi / len;
                }
                v += amp * arg.sin();
            }
            v
        })
    }

    /// Strictly positive smooth field, bounded away from zero.
    pub fn smooth_positive(grid: GridSpec, seed: u64) -> CellField {
        wavy(grid, seed).map(|v| 1.0 + 0.5 * (0.8 * v).tanh())
    }
}

#[cfg(test)]
mod tests {
    use super::CompensatedSum;

    #[test]
    fn compensated_sum_cancels_telescoping_terms() {
        let mut s = CompensatedSum::new();
        for i in 0..100_000 {
            let x = 1e8 + i as f64;
            s.add(x);
            s.add(-x);
        }
        assert_eq!(s.value(), 0.0);
    }

    #[test]
    fn compensated_sum_beats_naive_on_mixed_scales() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }
}

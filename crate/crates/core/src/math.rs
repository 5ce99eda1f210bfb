//! Small numerical helpers shared by the likelihood code.

use statrs::function::gamma::ln_gamma;

/// Lower clamp applied to exponent arguments so decays underflow to a tiny
/// positive number instead of an exact zero.
pub const MIN_EXP_ARG: f64 = -745.0;

/// `exp(-gap / tau)` with the argument clamped at [`MIN_EXP_ARG`].
#[inline]
pub fn decay(gap: f64, tau: f64) -> f64 {
    (-gap / tau).max(MIN_EXP_ARG).exp()
}

/// Past this many factors the rising product is evaluated through `ln_gamma`.
const RISING_DIRECT_LIMIT: u32 = 24;

/// `ln(x (x+1) ... (x+k-1))`, the log rising factorial.
#[inline]
pub fn log_rising(x: f64, k: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k <= RISING_DIRECT_LIMIT {
        let mut acc = 0.0;
        // Pairwise products keep the number of `ln` calls down without overflow
        // risk: every factor is below ~1e300 for any sane concentration.
        let mut j = 0;
        while j + 1 < k {
            let a = x + j as f64;
            acc += (a * (a + 1.0)).ln();
            j += 2;
        }
        if j < k {
            acc += (x + j as f64).ln();
        }
        acc
    } else {
        ln_gamma(x + k as f64) - ln_gamma(x)
    }
}

/// Largest double strictly below `x` (for finite positive and negative `x`).
pub fn next_down(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return x;
    }
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits - 1)
    } else {
        f64::from_bits(bits + 1)
    }
}

/// Sum of a slice in index order (kept explicit so reductions stay
/// reproducible regardless of how callers produce the terms).
#[inline]
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}

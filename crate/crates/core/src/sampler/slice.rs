//! Slice samplers: univariate stepping-out with shrinkage, and the
//! axis-aligned hyperrectangle method for vectors.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const POSITIVE: Interval = Interval {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Result of one slice update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceStep<T> {
    pub value: T,
    /// Number of rejected proposals during shrinkage.
    pub shrinks: u32,
    pub evaluations: u32,
}

fn collapse_tol(x: f64) -> f64 {
    1e-14 * x.abs().max(f64::MIN_POSITIVE)
}

fn slice_level<R: Rng + ?Sized>(fx0: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    fx0 - e
}

/// One univariate slice-sampling update (stepping out, then shrinkage).
///
/// `max_steps` bounds the total number of stepping-out expansions; the budget
/// is split at random between the two sides so the update stays reversible.
/// Expansion stops at the domain boundary.
pub fn slice_sample_1d<R, F>(
    mut logdensity: F,
    x0: f64,
    width: f64,
    domain: Interval,
    max_steps: u32,
    rng: &mut R,
) -> Result<SliceStep<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    if !domain.contains(x0) {
        return Err(Error::Numerical(format!(
            "slice start {x0} outside ({}, {})",
            domain.lo, domain.hi
        )));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Numerical(format!(
            "slice width {width} must be positive"
        )));
    }
    let fx0 = logdensity(x0);
    let mut evaluations = 1;
    if !fx0.is_finite() {
        return Err(Error::Numerical(format!("log density at {x0} is {fx0}")));
    }
    let y = slice_level(fx0, rng);

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut left_steps = (max_steps as f64 * rng.random::<f64>()) as u32;
    let mut right_steps = max_steps.saturating_sub(1).saturating_sub(left_steps);

    let mut eval = |x: f64, evaluations: &mut u32| -> f64 {
        if domain.contains(x) {
            *evaluations += 1;
            logdensity(x)
        } else {
            f64::NEG_INFINITY
        }
    };

    while left > domain.lo && left_steps > 0 && eval(left, &mut evaluations) > y {
        left -= width;
        left_steps -= 1;
    }
    while right < domain.hi && right_steps > 0 && eval(right, &mut evaluations) > y {
        right += width;
        right_steps -= 1;
    }
    left = left.max(domain.lo);
    right = right.min(domain.hi);

    let mut shrinks = 0;
    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        let fx1 = eval(x1, &mut evaluations);
        if fx1 > y {
            return Ok(SliceStep {
                value: x1,
                shrinks,
                evaluations,
            });
        }
        shrinks += 1;
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < collapse_tol(x0) {
            return Err(Error::Numerical(format!(
                "slice interval collapsed around {x0} after {shrinks} shrinks"
            )));
        }
    }
}

/// One multivariate slice update using a randomly positioned hyperrectangle
/// of side lengths `widths`, shrunk coordinate-wise towards `x0` on rejection.
/// Every coordinate shares the same open `domain`.
pub fn slice_sample_hyperrect<R, F>(
    mut logdensity: F,
    x0: &[f64],
    widths: &[f64],
    domain: Interval,
    rng: &mut R,
) -> Result<SliceStep<Vec<f64>>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    if widths.len() != d {
        return Err(Error::Numerical("width vector length mismatch".into()));
    }
    if let Some(bad) = x0.iter().find(|&&x| !domain.contains(x)) {
        return Err(Error::Numerical(format!(
            "slice start coordinate {bad} outside domain"
        )));
    }
    let fx0 = logdensity(x0);
    let mut evaluations = 1;
    if !fx0.is_finite() {
        return Err(Error::Numerical(format!("log density at start is {fx0}")));
    }
    let y = slice_level(fx0, rng);

    let mut left = vec![0.0; d];
    let mut right = vec![0.0; d];
    for i in 0..d {
        let l = x0[i] - widths[i] * rng.random::<f64>();
        left[i] = l.max(domain.lo);
        right[i] = (l + widths[i]).min(domain.hi);
    }

    let mut x1 = vec![0.0; d];
    let mut shrinks = 0;
    loop {
        for i in 0..d {
            x1[i] = left[i] + rng.random::<f64>() * (right[i] - left[i]);
        }
        if x1.iter().all(|&x| domain.contains(x)) {
            evaluations += 1;
            if logdensity(&x1) > y {
                return Ok(SliceStep {
                    value: x1,
                    shrinks,
                    evaluations,
                });
            }
        }
        shrinks += 1;
        let mut widest: f64 = 0.0;
        for i in 0..d {
            if x1[i] < x0[i] {
                left[i] = x1[i];
            } else {
                right[i] = x1[i];
            }
            widest = widest.max((right[i] - left[i]) / collapse_tol(x0[i]));
        }
        if widest < 1.0 {
            return Err(Error::Numerical(format!(
                "hyperrectangle collapsed after {shrinks} shrinks"
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gamma_logpdf(shape: f64, scale: f64) -> impl Fn(f64) -> f64 {
        move |x| (shape - 1.0) * x.ln() - x / scale
    }

    #[test]
    fn deterministic_given_seed() {
        let f = gamma_logpdf(3.0, 2.0);
        let a = slice_sample_1d(
            &f,
            1.0,
            1.0,
            Interval::POSITIVE,
            100,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let b = slice_sample_1d(
            &f,
            1.0,
            1.0,
            Interval::POSITIVE,
            100,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert_eq!(a, b);
        let g = |x: &[f64]| x.iter().map(|&v| gamma_logpdf(3.0, 2.0)(v)).sum::<f64>();
        let a = slice_sample_hyperrect(
            g,
            &[1.0, 2.0],
            &[1.0, 1.0],
            Interval::POSITIVE,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let b = slice_sample_hyperrect(
            g,
            &[1.0, 2.0],
            &[1.0, 1.0],
            Interval::POSITIVE,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nonfinite_start_is_error() {
        let r = slice_sample_1d(
            |_| f64::NAN,
            1.0,
            1.0,
            Interval::POSITIVE,
            10,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
        let r = slice_sample_1d(
            |x| -x,
            -1.0,
            1.0,
            Interval::POSITIVE,
            10,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(r.is_err());
    }

    #[test]
    fn pathological_density_collapses() {
        // Finite at the start point only: every proposal is rejected.
        let x0 = 0.5;
        let r = slice_sample_1d(
            |x| if x == x0 { 0.0 } else { f64::NEG_INFINITY },
            x0,
            1.0,
            Interval::POSITIVE,
            10,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn tiny_scale_parameters_do_not_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dom = Interval::new(0.0, 1e-12);
        let mut x = 3e-15;
        for _ in 0..500 {
            x = slice_sample_1d(|t: f64| -t.ln(), x, 1e-15, dom, 50, &mut rng)
                .unwrap()
                .value;
            assert!(dom.contains(x));
        }
    }

    #[test]
    fn respects_bounded_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dom = Interval::new(0.0, 0.3);
        let mut x = 0.1;
        for _ in 0..2000 {
            x = slice_sample_1d(|_| 0.0, x, 5.0, dom, 50, &mut rng)
                .unwrap()
                .value;
            assert!(dom.contains(x));
        }
    }
}

//! Draws from the Joe-Clayton copula by conditional inversion: u is uniform
//! and v solves ∂C/∂u (v | u) = q for an independent uniform q.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{jc_h_u, jc_logpdf, CopulaNatural, UnitPair};
use crate::error::{Error, Result};
use crate::real::Real;

const MAX_ITER: usize = 200;

pub fn jc_sample<T: Real>(c: CopulaNatural<T>, count: usize, seed: u64) -> Result<Vec<UnitPair<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    jc_sample_with(c, count, &mut rng)
}

pub fn jc_sample_with<T: Real, R: Rng + ?Sized>(
    c: CopulaNatural<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<UnitPair<T>>> {
    (0..count)
        .map(|_| {
            let u = T::lit(rng.random::<f64>());
            let q = T::lit(rng.random::<f64>());
            let v = invert_conditional(c, u, q)?;
            Ok(UnitPair { u, v })
        })
        .collect()
}

/// v with ∂C/∂u (u, v) = q, by Newton steps safeguarded with bisection.
pub fn invert_conditional<T: Real>(c: CopulaNatural<T>, u: T, q: T) -> Result<T> {
    let (zero, one, half) = (T::zero(), T::one(), T::lit(0.5));
    let mut lo = zero;
    let mut hi = one;
    let mut v = q.max(T::lit(1e-6)).min(one - T::lit(1e-6));
    let ftol = T::epsilon() * T::lit(64.0);
    for _ in 0..MAX_ITER {
        let r = jc_h_u(UnitPair { u, v }, c) - q;
        if r.abs() <= ftol {
            return Ok(v);
        }
        if r > zero {
            hi = v;
        } else {
            lo = v;
        }
        if hi - lo <= T::epsilon() * hi.max(T::min_positive_value()) {
            return Ok(v);
        }
        let dens = jc_logpdf(UnitPair { u, v }, c).exp();
        let newton = v - r / dens;
        v = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo + hi) * half
        };
    }
    Err(Error::Numerical(format!(
        "conditional inversion failed at u = {u}, q = {q}"
    )))
}

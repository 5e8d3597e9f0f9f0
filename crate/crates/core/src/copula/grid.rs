//! Precomputed τ(λ_L, λ_U) table used to invert τ at fixed λ_L.
//!
//! Both axes are log-spaced. Lookups interpolate bilinearly in the log-axis
//! index and then polish θ with safeguarded Newton steps on the closed-form τ.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::tau::tau_with_derivs;
use super::{delta_from_lambda_l_raw, feasibility_frontier, upper_tail, CopulaNatural};
use crate::error::{domain, Error, Result};
use crate::real::Real;

pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_LOWER: f64 = 1e-4;
pub const DEFAULT_UPPER: f64 = 1.0 - 1e-4;

const MAGIC: &[u8; 8] = b"JCTAUGRD";
const FORMAT_VERSION: u32 = 1;
const NEWTON_MAX: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid<T> {
    lambda_l: Vec<T>,
    lambda_u: Vec<T>,
    // row-major: one row per λ_L value
    tau: Vec<T>,
    lower: T,
    upper: T,
}

fn log_axis<T: Real>(n: usize, lower: T, upper: T) -> Vec<T> {
    let (la, lb) = (lower.ln(), upper.ln());
    let step = (lb - la) / T::lit((n - 1) as f64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                upper
            } else {
                (la + step * T::lit(i as f64)).exp()
            }
        })
        .collect()
}

impl<T: Real> TauGrid<T> {
    /// Grid with `n_l × n_u` nodes, both axes log-spaced over `[lower, upper]`.
    pub fn build(n_l: usize, n_u: usize, lower: T, upper: T) -> Result<Self> {
        if n_l < 2 || n_u < 2 {
            return Err(domain("TauGrid::build", format!("resolution {n_l}x{n_u} below 2x2")));
        }
        if !(lower > T::zero() && lower < upper && upper < T::one()) {
            return Err(domain("TauGrid::build", format!("axis range [{lower}, {upper}]")));
        }
        let lambda_l = log_axis(n_l, lower, upper);
        let lambda_u = log_axis(n_u, lower, upper);
        let thetas: Vec<T> = lambda_u.iter().map(|&lu| T::LN_2() / (T::lit(2.0) - lu).ln()).collect();
        let tau: Vec<T> = lambda_l
            .par_iter()
            .flat_map_iter(|&ll| {
                let delta = delta_from_lambda_l_raw(ll);
                thetas
                    .iter()
                    .map(move |&theta| tau_with_derivs(CopulaNatural { theta, delta }).tau)
            })
            .collect();
        Ok(Self {
            lambda_l,
            lambda_u,
            tau,
            lower,
            upper,
        })
    }

    /// 512 × 512 grid over `[1e-4, 1 - 1e-4]`.
    pub fn standard() -> Self {
        Self::build(
            DEFAULT_RESOLUTION,
            DEFAULT_RESOLUTION,
            T::lit(DEFAULT_LOWER),
            T::lit(DEFAULT_UPPER),
        )
        .expect("default grid parameters are valid")
    }

    pub fn lambda_l_axis(&self) -> &[T] {
        &self.lambda_l
    }

    pub fn lambda_u_axis(&self) -> &[T] {
        &self.lambda_u
    }

    /// Row-major τ values.
    pub fn values(&self) -> &[T] {
        &self.tau
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.lambda_l.len(), self.lambda_u.len())
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.tau[i * self.lambda_u.len() + j]
    }

    // Fractional log-axis index of x, clamped into the axis.
    fn position(&self, x: T, n: usize) -> (usize, T) {
        let span = (self.upper / self.lower).ln();
        let raw = (x / self.lower).ln() / span * T::lit((n - 1) as f64);
        let raw = raw.max(T::zero()).min(T::lit((n - 1) as f64));
        let i = raw.floor().to_usize().unwrap_or(0).min(n - 2);
        (i, raw - T::lit(i as f64))
    }

    /// Bilinear interpolation of τ at (λ_L, λ_U); points outside the axes
    /// are clamped to the boundary.
    pub fn interpolate(&self, lambda_l: T, lambda_u: T) -> T {
        let (nl, nu) = self.resolution();
        let (i, a) = self.position(lambda_l, nl);
        let (j, b) = self.position(lambda_u, nu);
        let one = T::one();
        (one - a) * ((one - b) * self.value(i, j) + b * self.value(i, j + 1))
            + a * ((one - b) * self.value(i + 1, j) + b * self.value(i + 1, j + 1))
    }

    // Starting θ for Newton from the interpolated λ_L row.
    fn theta_guess(&self, lambda_l: T, tau: T) -> T {
        let (nl, nu) = self.resolution();
        let (i, a) = self.position(lambda_l, nl);
        let one = T::one();
        let row = |j: usize| (one - a) * self.value(i, j) + a * self.value(i + 1, j);
        let to_theta = |lu: T| T::LN_2() / (T::lit(2.0) - lu).ln();
        if tau <= row(0) {
            return to_theta(self.lambda_u[0]);
        }
        if tau >= row(nu - 1) {
            return to_theta(self.lambda_u[nu - 1]);
        }
        // τ increases along the row.
        let (mut lo, mut hi) = (0, nu - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if row(mid) <= tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, t1) = (row(lo), row(hi));
        let frac = if t1 > t0 { (tau - t0) / (t1 - t0) } else { T::zero() };
        let (l0, l1) = (self.lambda_u[lo].ln(), self.lambda_u[hi].ln());
        to_theta((l0 + frac * (l1 - l0)).exp())
    }

    /// θ solving τ(θ, δ) = τ at fixed δ.
    pub fn theta_for(&self, delta: T, tau: T) -> Result<T> {
        let lambda_l = T::lit(2.0).powf(-delta.recip());
        solve_theta(delta, tau, |t| self.theta_guess(lambda_l, t))
    }

    /// λ_U such that τ(λ_L, λ_U) = τ.
    pub fn tau_inverse_upper(&self, lambda_l: T, tau: T) -> Result<T> {
        if !(lambda_l > T::zero() && lambda_l < T::one()) {
            return Err(domain("tau_inverse_upper", format!("lambda_L = {lambda_l}")));
        }
        let theta = self.theta_for(delta_from_lambda_l_raw(lambda_l), tau)?;
        Ok(upper_tail(theta))
    }

    /// Grid nodes violating `λ_L <= 2^(1/2 - 1/(2τ)) + tol`.
    pub fn frontier_violations(&self, tol: T) -> Vec<(usize, usize)> {
        let (nl, nu) = self.resolution();
        let mut out = Vec::new();
        for i in 0..nl {
            for j in 0..nu {
                if self.lambda_l[i] > feasibility_frontier(self.value(i, j)) + tol {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (nl, nu) = self.resolution();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(nl as u32).to_le_bytes())?;
        w.write_all(&(nu as u32).to_le_bytes())?;
        let all = [self.lower, self.upper]
            .into_iter()
            .chain(self.lambda_l.iter().copied())
            .chain(self.lambda_u.iter().copied())
            .chain(self.tau.iter().copied());
        for x in all {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a tau grid file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported tau grid version {version}")));
        }
        let nl = read_u32(&mut r)? as usize;
        let nu = read_u32(&mut r)? as usize;
        if nl < 2 || nu < 2 {
            return Err(Error::Format(format!("bad resolution {nl}x{nu}")));
        }
        let lower = read_f64::<T, _>(&mut r)?;
        let upper = read_f64::<T, _>(&mut r)?;
        let mut read_vec = |n: usize| (0..n).map(|_| read_f64::<T, _>(&mut r)).collect::<Result<Vec<T>>>();
        let lambda_l = read_vec(nl)?;
        let lambda_u = read_vec(nu)?;
        let tau = read_vec(nl * nu)?;
        Ok(Self {
            lambda_l,
            lambda_u,
            tau,
            lower,
            upper,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<T: Real, R: Read>(r: &mut R) -> Result<T> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(T::lit(f64::from_le_bytes(b)))
}

/// θ solving τ(θ, δ) = τ at fixed δ, starting Newton from `hint`.
pub fn theta_from_tau<T: Real>(delta: T, tau: T, hint: T) -> Result<T> {
    solve_theta(delta, tau, |_| hint)
}

fn solve_theta<T: Real>(delta: T, tau: T, guess: impl FnOnce(T) -> T) -> Result<T> {
    if !(delta > T::zero() && delta.is_finite()) {
        return Err(domain("theta_from_tau", format!("delta = {delta}")));
    }
    if !(tau > T::zero() && tau < T::one()) {
        return Err(domain("theta_from_tau", format!("tau = {tau} outside (0, 1)")));
    }
    let floor = delta / (delta + T::lit(2.0));
    let tol = T::epsilon().sqrt();
    if tau < floor - tol {
        return Err(Error::Infeasible(format!(
            "tau = {tau} below the attainable minimum {floor} at delta = {delta}"
        )));
    }
    if tau <= floor {
        return Ok(T::one());
    }
    let g = guess(tau);
    polish_theta(delta, tau, if g.is_finite() { g } else { T::lit(2.0) })
}

// Newton on θ ↦ τ(θ, δ) - target, kept inside a shrinking bracket [lo, hi]
// with θ >= 1. For large δ, τ first dips below δ/(δ+2) as θ leaves 1, so
// Newton steps can point the wrong way; the sign-based bracket still holds
// because the root with target >= δ/(δ+2) is unique. Always takes at least
// two steps.
fn polish_theta<T: Real>(delta: T, target: T, guess: T) -> Result<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let mut lo = one;
    let mut hi = T::infinity();
    let mut theta = guess.max(one);
    let tol = T::epsilon() * T::lit(16.0);
    for it in 0..NEWTON_MAX {
        let t = tau_with_derivs(CopulaNatural { theta, delta });
        let r = t.tau - target;
        if r == T::zero() {
            return Ok(theta);
        }
        if r > T::zero() {
            hi = hi.min(theta);
        } else {
            lo = lo.max(theta);
        }
        let mut next = theta - r / t.d_theta;
        if !(next >= lo && next <= hi) || !next.is_finite() {
            next = if hi.is_finite() { (lo + hi) / two } else { theta * two };
        }
        let step = (next - theta).abs();
        theta = next;
        if it >= 1 && (step <= tol * theta || r.abs() <= T::epsilon()) {
            return Ok(theta);
        }
    }
    if theta.is_finite() {
        Ok(theta)
    } else {
        Err(Error::Numerical(format!(
            "tau inversion did not converge for delta = {delta}, tau = {target}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::super::tau::kendall_tau;
    use super::*;
    use approx::assert_relative_eq;

    fn small() -> TauGrid<f64> {
        TauGrid::build(64, 64, 1e-4, 1.0 - 1e-4).unwrap()
    }

    #[test]
    fn rows_increase_in_lambda_u() {
        let g = small();
        // Below λ_L ≈ 0.8; stronger lower tails make τ dip near θ = 1.
        for i in 0..60 {
            assert!(g.lambda_l_axis()[i] < 0.8);
            for j in 1..64 {
                assert!(g.value(i, j) > g.value(i, j - 1), "row {i} col {j}");
            }
        }
    }

    #[test]
    fn inversion_round_trip() {
        let g = small();
        let tau = super::super::tau_from_features(0.3, 0.5).unwrap();
        let lu = g.tau_inverse_upper(0.3, tau).unwrap();
        assert_relative_eq!(lu, 0.5, epsilon = 1e-10);
        // Outside the grid range the Newton polish still converges.
        let tau = super::super::tau_from_features(0.2, 1e-6).unwrap();
        assert_relative_eq!(g.tau_inverse_upper(0.2, tau).unwrap(), 1e-6, max_relative = 1e-6);
    }

    #[test]
    fn infeasible_tau_is_rejected() {
        let g = small();
        // δ = 1 requires τ >= 1/3.
        assert!(matches!(g.theta_for(1.0, 0.2), Err(Error::Infeasible(_))));
        assert_eq!(g.theta_for(1.0, 1.0 / 3.0).unwrap(), 1.0);
    }

    #[test]
    fn inversion_past_the_dip() {
        let g = small();
        // At δ = 6, τ(θ) falls below 0.75 for θ slightly above 1.
        for &th in &[1.5, 2.5, 4.0, 12.0] {
            let tau = kendall_tau(CopulaNatural { theta: th, delta: 6.0 });
            if tau > 0.75 {
                assert_relative_eq!(g.theta_for(6.0, tau).unwrap(), th, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn theta_near_two() {
        let g = small();
        for &th in &[2.0, 2.0 + 1e-8, 1.999, 2.03] {
            let tau = kendall_tau(CopulaNatural { theta: th, delta: 0.7 });
            assert_relative_eq!(g.theta_for(0.7, tau).unwrap(), th, max_relative = 1e-7);
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = TauGrid::<f64>::build(8, 5, 1e-3, 0.99).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = TauGrid::<f64>::read_from(&buf[..]).unwrap();
        assert_eq!(g, back);
        buf[0] = b'X';
        assert!(matches!(TauGrid::<f64>::read_from(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = small();
        let (ll, lu) = (g.lambda_l_axis()[10], g.lambda_u_axis()[33]);
        assert_relative_eq!(g.interpolate(ll, lu), g.value(10, 33), max_relative = 1e-9);
    }
}

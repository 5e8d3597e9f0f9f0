//! Joe-Clayton (BB7) copula in its natural (θ, δ) parameterization and in
//! the feature parameterization (λ_L, τ).
//!
//! All density work is done in log space. The generator terms
//! `T1(s) = 1 - (1-s)^θ`, `T2(s) = (1-s)^(θ-1)` and
//! `L = T1(u)^-δ + T1(v)^-δ - 1` are carried as logarithms so that strong
//! lower-tail dependence (large δ) near the origin does not overflow.

pub mod empirical;
pub mod grid;
pub mod sample;
pub mod tau;

pub use empirical::{empirical_copula, EmpiricalCopula};
pub use grid::{theta_from_tau, TauGrid};
pub use sample::{jc_sample, jc_sample_with};
pub use tau::{dlambda_l_ddelta, dtau_ddelta, dtau_dtheta, kendall_tau, tau_from_features, tau_with_derivs, TauDerivs};

use crate::error::{domain, Error, Result};
use crate::real::Real;

/// Inputs to the density are clamped into `[CLAMP_EPS, 1 - CLAMP_EPS]`.
pub const CLAMP_EPS: f64 = 1e-12;

/// Log density reported when intermediate quantities leave the floating range.
pub const LOG_DENSITY_FLOOR: f64 = -1e30;

/// Natural Joe-Clayton parameters: θ ≥ 1 drives the upper tail, δ > 0 the lower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaNatural<T> {
    pub theta: T,
    pub delta: T,
}

impl<T: Real> CopulaNatural<T> {
    pub fn new(theta: T, delta: T) -> Result<Self> {
        if !(theta >= T::one() && theta.is_finite()) {
            return Err(domain("CopulaNatural", format!("theta = {theta} must be >= 1")));
        }
        if !(delta > T::zero() && delta.is_finite()) {
            return Err(domain("CopulaNatural", format!("delta = {delta} must be > 0")));
        }
        Ok(Self { theta, delta })
    }

    /// (λ_L, λ_U) = (2^(-1/δ), 2 - 2^(1/θ)).
    pub fn tail_dependence(&self) -> (T, T) {
        (lower_tail(self.delta), upper_tail(self.theta))
    }

    pub fn kendall_tau(&self) -> T {
        kendall_tau(*self)
    }

    pub fn features(&self) -> CopulaFeatures<T> {
        CopulaFeatures {
            lambda_l: lower_tail(self.delta),
            tau: kendall_tau(*self),
        }
    }
}

/// Feature parameterization: lower tail dependence and Kendall's τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaFeatures<T> {
    pub lambda_l: T,
    pub tau: T,
}

impl<T: Real> CopulaFeatures<T> {
    /// Validates that both features are interior and jointly attainable,
    /// i.e. `λ_L <= 2^(1/2 - 1/(2τ))`.
    pub fn new(lambda_l: T, tau: T) -> Result<Self> {
        let (zero, one) = (T::zero(), T::one());
        if !(lambda_l > zero && lambda_l < one) {
            return Err(domain(
                "CopulaFeatures",
                format!("lambda_L = {lambda_l} outside (0, 1)"),
            ));
        }
        if !(tau > zero && tau < one) {
            return Err(domain("CopulaFeatures", format!("tau = {tau} outside (0, 1)")));
        }
        let frontier = feasibility_frontier(tau);
        if lambda_l > frontier {
            return Err(Error::Infeasible(format!(
                "lambda_L = {lambda_l} exceeds 2^(1/2 - 1/(2 tau)) = {frontier} at tau = {tau}"
            )));
        }
        Ok(Self { lambda_l, tau })
    }

    pub fn delta(&self) -> T {
        delta_from_lambda_l_raw(self.lambda_l)
    }

    /// Converts to (θ, δ) by inverting τ at fixed δ.
    pub fn to_natural(&self, grid: &TauGrid<T>) -> Result<CopulaNatural<T>> {
        let delta = self.delta();
        let theta = grid.theta_for(delta, self.tau)?;
        CopulaNatural::new(theta, delta)
    }
}

/// Largest λ_L compatible with a given τ: `2^(1/2 - 1/(2τ))`.
pub fn feasibility_frontier<T: Real>(tau: T) -> T {
    let half = T::lit(0.5);
    T::lit(2.0).powf(half - half / tau)
}

pub fn lower_tail<T: Real>(delta: T) -> T {
    T::lit(2.0).powf(-delta.recip())
}

pub fn upper_tail<T: Real>(theta: T) -> T {
    T::lit(2.0) - T::lit(2.0).powf(theta.recip())
}

pub(crate) fn delta_from_lambda_l_raw<T: Real>(lambda_l: T) -> T {
    -T::LN_2() / lambda_l.ln()
}

/// δ = -ln 2 / ln λ_L.
pub fn delta_from_lambda_l<T: Real>(lambda_l: T) -> Result<T> {
    if !(lambda_l > T::zero() && lambda_l < T::one()) {
        return Err(domain(
            "delta_from_lambda_l",
            format!("lambda_L = {lambda_l} outside (0, 1)"),
        ));
    }
    Ok(delta_from_lambda_l_raw(lambda_l))
}

/// θ = ln 2 / ln(2 - λ_U).
pub fn theta_from_lambda_u<T: Real>(lambda_u: T) -> Result<T> {
    if !(lambda_u > T::zero() && lambda_u < T::one()) {
        return Err(domain(
            "theta_from_lambda_u",
            format!("lambda_U = {lambda_u} outside (0, 1)"),
        ));
    }
    Ok(T::LN_2() / (T::lit(2.0) - lambda_u).ln())
}

/// A point of the unit square. Construction only checks `[0, 1]`; density
/// evaluation goes through [`UnitPair::clamped`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitPair<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> UnitPair<T> {
    pub fn new(u: T, v: T) -> Result<Self> {
        let ok = |x: T| x >= T::zero() && x <= T::one();
        if !(ok(u) && ok(v)) {
            return Err(domain("UnitPair", format!("({u}, {v}) outside the unit square")));
        }
        Ok(Self { u, v })
    }

    pub fn clamped(self) -> Self {
        let lo = T::lit(CLAMP_EPS);
        let hi = T::one() - lo;
        Self {
            u: self.u.max(lo).min(hi),
            v: self.v.max(lo).min(hi),
        }
    }

    pub fn swap(self) -> Self {
        Self { u: self.v, v: self.u }
    }
}

/// Copula rotations. Rotating by 90° flips `u`, 270° flips `v`, 180° flips both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn from_degrees(degrees: u32) -> Result<Self> {
        match degrees {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(domain("Rotation", format!("{other} is not one of 0, 90, 180, 270"))),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn flips_u(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R180)
    }

    pub fn flips_v(self) -> bool {
        matches!(self, Rotation::R180 | Rotation::R270)
    }

    pub fn apply<T: Real>(self, p: UnitPair<T>) -> UnitPair<T> {
        let flip = |x: T, f: bool| if f { T::one() - x } else { x };
        UnitPair {
            u: flip(p.u, self.flips_u()),
            v: flip(p.v, self.flips_v()),
        }
    }
}

pub fn rotate<T: Real>(p: UnitPair<T>, degrees: u32) -> Result<UnitPair<T>> {
    Ok(Rotation::from_degrees(degrees)?.apply(p))
}

// Per-margin generator terms.
#[derive(Clone, Copy)]
struct Margin<T> {
    one_minus: T, // 1 - s
    lb: T,        // ln(1 - s)
    b: T,         // (1 - s)^θ
    t1: T,        // 1 - (1 - s)^θ
    ln_t1: T,
    a: T, // -δ ln T1(s) = ln T1(s)^-δ
}

impl<T: Real> Margin<T> {
    fn new(s: T, theta: T, delta: T) -> Self {
        let lb = (-s).ln_1p();
        let b = (theta * lb).exp();
        let t1 = -(theta * lb).exp_m1();
        let ln_t1 = if b < T::lit(0.5) { (-b).ln_1p() } else { t1.ln() };
        Self {
            one_minus: T::one() - s,
            lb,
            b,
            t1,
            ln_t1,
            a: -delta * ln_t1,
        }
    }

    // p / L where p = T1^-δ.
    fn ratio(&self, ln_l: T) -> T {
        (self.a - ln_l).exp()
    }
}

struct Kernel<T> {
    theta: T,
    delta: T,
    mu: Margin<T>,
    mv: Margin<T>,
    ln_l: T,
    w: T, // L^(-1/δ)
    one_minus_w: T,
    rn: T, // (1+δ)θ - (θδ+1)w  (= R / L^(1/δ))
}

impl<T: Real> Kernel<T> {
    fn new(p: UnitPair<T>, c: CopulaNatural<T>) -> Self {
        let (theta, delta) = (c.theta, c.delta);
        let mu = Margin::new(p.u, theta, delta);
        let mv = Margin::new(p.v, theta, delta);
        let big = T::lit(30.0);
        let ln_l = if mu.a.max(mv.a) > big {
            // L = e^a_u + e^a_v - 1 with at least one huge term.
            let m = mu.a.max(mv.a);
            m + ((mu.a - m).exp() + (mv.a - m).exp() - (-m).exp()).ln()
        } else {
            (mu.a.exp_m1() + mv.a.exp_m1()).ln_1p()
        };
        let x = ln_l / delta;
        let w = (-x).exp();
        let one_minus_w = -(-x).exp_m1();
        let one = T::one();
        let rn = (one + delta) * theta - (theta * delta + one) * w;
        Self {
            theta,
            delta,
            mu,
            mv,
            ln_l,
            w,
            one_minus_w,
            rn,
        }
    }

    fn log_density(&self) -> T {
        let (theta, delta) = (self.theta, self.delta);
        let one = T::one();
        let two = T::lit(2.0);
        -(one + delta) * (self.mu.ln_t1 + self.mv.ln_t1) + (theta - one) * (self.mu.lb + self.mv.lb)
            - two * (one + delta) / delta * self.ln_l
            + (theta.recip() - two) * self.one_minus_w.ln()
            + self.ln_l / delta
            + self.rn.ln()
    }

    fn d_delta(&self) -> T {
        let (theta, delta) = (self.theta, self.delta);
        let one = T::one();
        let two = T::lit(2.0);
        let (mu, mv) = (&self.mu, &self.mv);
        // Δ1 / L with Δ1 = ∂L/∂δ
        let d1_over_l = -(mu.ratio(self.ln_l) * mu.ln_t1 + mv.ratio(self.ln_l) * mv.ln_t1);
        let dd = -(self.ln_l - delta * d1_over_l) / (delta * delta);
        // w / (1 - w) = 1 / (L^(1/δ) - 1)
        let w_ratio = (self.ln_l / delta).exp_m1().recip();
        -(mu.ln_t1 + mv.ln_t1) + two * self.ln_l / (delta * delta) - two * (one + delta) * d1_over_l / delta
            + (theta.recip() - two) * w_ratio * dd
            + theta * (one + (one + delta) * dd - self.w) / self.rn
    }

    fn d_theta(&self) -> T {
        let (theta, delta) = (self.theta, self.delta);
        let one = T::one();
        let two = T::lit(2.0);
        let term = |m: &Margin<T>| m.b * m.lb / m.t1;
        let (mu, mv) = (&self.mu, &self.mv);
        // (∂L/∂θ) / L
        let g = delta * (mu.ratio(self.ln_l) * term(mu) + mv.ratio(self.ln_l) * term(mv));
        let dw = -self.w * g / delta;
        (one + delta) * (term(mu) + term(mv)) + (mu.lb + mv.lb)
            - two * (one + delta) * g / delta
            - self.one_minus_w.ln() / (theta * theta)
            - (theta.recip() - two) * dw / self.one_minus_w
            + g / delta
            + ((one + delta) - delta * self.w - (theta * delta + one) * dw) / self.rn
    }

    // ∂ log c / ∂s for the margin `m` (u or v by exchangeability).
    fn d_margin(&self, m: &Margin<T>) -> T {
        let (theta, delta) = (self.theta, self.delta);
        let one = T::one();
        let two = T::lit(2.0);
        let dlt1 = theta * m.b / (m.one_minus * m.t1);
        let g = -delta * m.ratio(self.ln_l) * dlt1;
        let dw = -self.w * g / delta;
        -(one + delta) * dlt1
            - (theta - one) / m.one_minus
            - two * (one + delta) * g / delta
            - (theta.recip() - two) * dw / self.one_minus_w
            + g / delta
            - (theta * delta + one) * dw / self.rn
    }
}

/// Log density plus a flag raised when the computation left the floating
/// range and the value was replaced by [`LOG_DENSITY_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity<T> {
    pub value: T,
    pub overflow: bool,
}

/// Log density and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityGrad<T> {
    pub log_density: T,
    pub d_theta: T,
    pub d_delta: T,
    pub d_u: T,
    pub d_v: T,
    pub overflow: bool,
}

impl<T: Real> DensityGrad<T> {
    fn saturated() -> Self {
        Self {
            log_density: T::lit(LOG_DENSITY_FLOOR),
            d_theta: T::zero(),
            d_delta: T::zero(),
            d_u: T::zero(),
            d_v: T::zero(),
            overflow: true,
        }
    }
}

/// Copula CDF C(u, v | θ, δ). Exact boundary values follow the limit
/// convention C(u, 0) = C(0, v) = 0, C(u, 1) = u, C(1, v) = v.
pub fn jc_cdf<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> T {
    let (zero, one) = (T::zero(), T::one());
    if p.u <= zero || p.v <= zero {
        return zero;
    }
    if p.u >= one {
        return p.v.min(one);
    }
    if p.v >= one {
        return p.u;
    }
    let k = Kernel::new(p, c);
    -(k.one_minus_w.ln() / c.theta).exp_m1()
}

/// Conditional distribution of V given U = u, i.e. ∂C/∂u.
pub fn jc_h_u<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> T {
    let (zero, one) = (T::zero(), T::one());
    if p.v <= zero {
        return zero;
    }
    if p.v >= one {
        return one;
    }
    let p = p.clamped();
    let k = Kernel::new(p, c);
    let theta = c.theta;
    let delta = c.delta;
    let m = &k.mu;
    let dlt1 = theta * m.b / (m.one_minus * m.t1);
    let g = -delta * m.ratio(k.ln_l) * dlt1;
    let dw = -k.w * g / delta;
    let h = ((theta.recip() - one) * k.one_minus_w.ln()).exp() * dw / theta;
    h.max(zero).min(one)
}

/// Log density with the overflow flag.
pub fn jc_logpdf_checked<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> LogDensity<T> {
    let k = Kernel::new(p.clamped(), c);
    let value = k.log_density();
    if value.is_finite() {
        LogDensity { value, overflow: false }
    } else {
        LogDensity {
            value: T::lit(LOG_DENSITY_FLOOR),
            overflow: true,
        }
    }
}

/// Log density of the Joe-Clayton copula.
pub fn jc_logpdf<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> T {
    jc_logpdf_checked(p, c).value
}

/// Log density together with ∂/∂θ, ∂/∂δ, ∂/∂u and ∂/∂v.
pub fn jc_logpdf_grad<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> DensityGrad<T> {
    let k = Kernel::new(p.clamped(), c);
    let out = DensityGrad {
        log_density: k.log_density(),
        d_theta: k.d_theta(),
        d_delta: k.d_delta(),
        d_u: k.d_margin(&k.mu),
        d_v: k.d_margin(&k.mv),
        overflow: false,
    };
    let finite = out.log_density.is_finite()
        && out.d_theta.is_finite()
        && out.d_delta.is_finite()
        && out.d_u.is_finite()
        && out.d_v.is_finite();
    if finite {
        out
    } else {
        DensityGrad::saturated()
    }
}

/// (∂ log c/∂θ, ∂ log c/∂δ).
pub fn grad_logpdf_natural<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> (T, T) {
    let g = jc_logpdf_grad(p, c);
    (g.d_theta, g.d_delta)
}

/// (∂ log c/∂u, ∂ log c/∂v).
pub fn grad_logpdf_u<T: Real>(p: UnitPair<T>, c: CopulaNatural<T>) -> (T, T) {
    let g = jc_logpdf_grad(p, c);
    (g.d_u, g.d_v)
}

/// Fréchet–Hoeffding bounds (W, M) at a point.
pub fn frechet_bounds<T: Real>(p: UnitPair<T>) -> (T, T) {
    ((p.u + p.v - T::one()).max(T::zero()), p.u.min(p.v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair(u: f64, v: f64) -> UnitPair<f64> {
        UnitPair::new(u, v).unwrap()
    }

    fn nat(theta: f64, delta: f64) -> CopulaNatural<f64> {
        CopulaNatural::new(theta, delta).unwrap()
    }

    fn clayton_cdf(u: f64, v: f64, d: f64) -> f64 {
        (u.powf(-d) + v.powf(-d) - 1.0).powf(-1.0 / d)
    }

    fn clayton_logpdf(u: f64, v: f64, d: f64) -> f64 {
        ((1.0 + d) * (u * v).powf(-d - 1.0) * (u.powf(-d) + v.powf(-d) - 1.0).powf(-1.0 / d - 2.0)).ln()
    }

    #[test]
    fn clayton_reduction() {
        assert_relative_eq!(jc_cdf(pair(0.5, 0.5), nat(1.0, 1.0)), 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(
            jc_logpdf(pair(0.5, 0.5), nat(1.0, 1.0)),
            (32.0_f64 / 27.0).ln(),
            epsilon = 1e-13
        );
        for &(u, v, d) in &[(0.2, 0.7, 0.4), (0.9, 0.05, 3.0), (0.33, 0.31, 1.7)] {
            assert_relative_eq!(jc_cdf(pair(u, v), nat(1.0, d)), clayton_cdf(u, v, d), epsilon = 1e-12);
            assert_relative_eq!(
                jc_logpdf(pair(u, v), nat(1.0, d)),
                clayton_logpdf(u, v, d),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn uniform_margins_and_grounding() {
        let c = nat(2.5, 0.8);
        assert_eq!(jc_cdf(pair(0.37, 1.0), c), 0.37);
        assert_eq!(jc_cdf(pair(1.0, 0.61), c), 0.61);
        assert_eq!(jc_cdf(pair(0.37, 0.0), c), 0.0);
        assert_relative_eq!(jc_cdf(pair(0.37, 1.0 - 1e-13), c), 0.37, epsilon = 1e-9);
    }

    #[test]
    fn tail_maps_and_inverses() {
        assert_relative_eq!(lower_tail(1.0_f64), 0.5);
        assert_eq!(upper_tail(1.0_f64), 0.0);
        assert_relative_eq!(upper_tail(2.0_f64), 2.0 - 2.0_f64.sqrt(), epsilon = 1e-15);
        for &d in &[0.1, 1.0, 7.5] {
            assert_relative_eq!(delta_from_lambda_l(lower_tail(d)).unwrap(), d, max_relative = 1e-12);
        }
        for &t in &[1.05, 2.0, 9.0] {
            assert_relative_eq!(theta_from_lambda_u(upper_tail(t)).unwrap(), t, max_relative = 1e-12);
        }
        assert!(theta_from_lambda_u(1.0_f64).is_err());
        assert!(theta_from_lambda_u(0.0_f64).is_err());
        assert!(delta_from_lambda_l(1.2_f64).is_err());
    }

    #[test]
    fn rotations() {
        let p = pair(0.2, 0.7);
        assert_eq!(rotate(p, 0).unwrap(), p);
        let r = rotate(p, 180).unwrap();
        assert_relative_eq!(r.u, 0.8);
        assert_relative_eq!(r.v, 0.3);
        let q = pair(0.41, 0.13);
        let back = rotate(rotate(q, 90).unwrap(), 90).unwrap();
        assert_relative_eq!(back.u, q.u, epsilon = 1e-15);
        let both = rotate(rotate(q, 90).unwrap(), 270).unwrap();
        assert_eq!(both, rotate(q, 180).unwrap());
        assert!(rotate(q, 45).is_err());
    }

    #[test]
    fn exchangeable_gradient() {
        let c = nat(1.9, 1.4);
        let a = jc_logpdf_grad(pair(0.35, 0.8), c);
        let b = jc_logpdf_grad(pair(0.8, 0.35), c);
        assert_relative_eq!(a.d_u, b.d_v, max_relative = 1e-13);
        assert_relative_eq!(a.d_v, b.d_u, max_relative = 1e-13);
    }

    #[test]
    fn feature_validation() {
        assert!(CopulaFeatures::new(0.3, 0.5).is_ok());
        // τ = 0.2 allows λ_L up to 2^(1/2 - 5/2) = 0.25.
        assert!(matches!(CopulaFeatures::new(0.3, 0.2), Err(Error::Infeasible(_))));
        assert!(CopulaFeatures::new(0.0, 0.2).is_err());
    }

    #[test]
    fn extreme_lower_tail_does_not_overflow() {
        let g = jc_logpdf_grad(pair(1e-12, 2e-12), nat(1.3, 60.0));
        assert!(!g.overflow);
        assert!(g.log_density.is_finite() && g.d_delta.is_finite());
    }

    #[test]
    fn f32_density_is_close_to_f64() {
        let p32 = UnitPair::new(0.4_f32, 0.6).unwrap();
        let c32 = CopulaNatural::new(1.8_f32, 0.9).unwrap();
        let v32 = jc_logpdf(p32, c32) as f64;
        let v64 = jc_logpdf(pair(0.4, 0.6), nat(1.8, 0.9));
        assert!((v32 - v64).abs() < 1e-4);
    }

    #[test]
    fn upper_corner_precision_at_large_theta() {
        // 60-digit reference values
        let cases = [
            (
                0.8536162754736292,
                0.9753280074629153,
                12.006128340560482,
                0.7507283831938917,
                -15.277125822358885,
                82.018191347865,
            ),
            (0.7077, 0.6959, 15.337, 0.862, 2.444163224527069, -13.238167243857478),
        ];
        for (u, v, th, de, lc, du) in cases {
            let g = jc_logpdf_grad(pair(u, v), nat(th, de));
            assert!((g.log_density - lc).abs() < 1e-12 * lc.abs());
            assert!((g.d_u - du).abs() < 1e-7 * du.abs());
        }
    }
}

//! Split-t distribution: a Student-t with scale φ to the left of the mode μ
//! and scale κφ to the right, carrying masses 1/(1+κ) and κ/(1+κ).

pub mod margin;

pub use margin::{linear_predictor, margin_loglik_and_grad, MarginLinkSet, MarginLoglik, MARGIN_LINKS};

use rand::Rng;
use rand_distr::{Distribution, StudentT};

use crate::error::{domain, Error, Result};
use crate::quadrature::integrate;
use crate::real::Real;
use crate::special::{digamma_raw, hypergeometric_pfq, ln_beta_raw, reg_inc_beta_raw};

/// Above this many degrees of freedom the ν-gradient of the CDF always
/// goes through the integral representation.
pub const NU_CLOSED_FORM_MAX: f64 = 50.0;

/// Within this distance of A = 1 (y close to μ) the integral is used too.
pub const A_NEAR_ONE: f64 = 1e-6;

const PFQ_TOL: f64 = 1e-14;
const PFQ_MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTParams<T> {
    pub mu: T,
    pub phi: T,
    pub nu: T,
    pub kappa: T,
}

impl<T: Real> SplitTParams<T> {
    pub fn new(mu: T, phi: T, nu: T, kappa: T) -> Result<Self> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if !mu.is_finite() {
            return Err(domain("SplitTParams", format!("mu = {mu}")));
        }
        if !(pos(phi) && pos(nu) && pos(kappa)) {
            return Err(domain(
                "SplitTParams",
                format!("phi = {phi}, nu = {nu}, kappa = {kappa} must be positive"),
            ));
        }
        Ok(Self { mu, phi, nu, kappa })
    }

    // Scale multiplier I (κ right of μ, 1 otherwise).
    fn side(&self, y: T) -> T {
        if y > self.mu {
            self.kappa
        } else {
            T::one()
        }
    }

    // A = I²νφ² / ((y-μ)² + I²νφ²) and 1 - A.
    fn a_arg(&self, y: T) -> (T, T) {
        let s = self.side(y) * self.phi;
        let k = self.nu * s * s;
        let d = y - self.mu;
        let den = d * d + k;
        (k / den, d * d / den)
    }

    fn ln_norm(&self) -> T {
        let half = T::lit(0.5);
        T::LN_2() - self.kappa.ln_1p() - self.phi.ln() - half * self.nu.ln() - ln_beta_raw(half * self.nu, half)
    }
}

/// Partial derivatives with respect to (μ, φ, ν, κ).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamGrad<T> {
    pub mu: T,
    pub phi: T,
    pub nu: T,
    pub kappa: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfGrad<T> {
    pub grad: ParamGrad<T>,
    /// The ν component came from the integral representation.
    pub nu_fallback: bool,
}

pub fn split_t_logpdf<T: Real>(y: T, p: SplitTParams<T>) -> T {
    let half = T::lit(0.5);
    let z = (y - p.mu) / (p.side(y) * p.phi);
    p.ln_norm() - half * (p.nu + T::one()) * (z * z / p.nu).ln_1p()
}

pub fn split_t_pdf<T: Real>(y: T, p: SplitTParams<T>) -> T {
    split_t_logpdf(y, p).exp()
}

pub fn split_t_cdf<T: Real>(y: T, p: SplitTParams<T>) -> T {
    let half = T::lit(0.5);
    let (a, _) = p.a_arg(y);
    let ia = reg_inc_beta_raw(a, half * p.nu, half);
    let w = T::one() + p.kappa;
    if y <= p.mu {
        ia / w
    } else {
        T::one() - p.kappa * ia / w
    }
}

/// Derivatives of the log density with respect to the four parameters.
pub fn split_t_logpdf_grads<T: Real>(y: T, p: SplitTParams<T>) -> ParamGrad<T> {
    let (one, half) = (T::one(), T::lit(0.5));
    let s = p.side(y) * p.phi;
    let d = y - p.mu;
    let q = d * d / (s * s * p.nu);
    let r = (p.nu + one) * q / (one + q);
    let kappa = -(one + p.kappa).recip() + if y > p.mu { r / p.kappa } else { T::zero() };
    ParamGrad {
        mu: (p.nu + one) * d / (s * s * p.nu * (one + q)),
        phi: (r - one) / p.phi,
        nu: -half / p.nu - half * (digamma_raw(half * p.nu) - digamma_raw(half * (p.nu + one))) - half * q.ln_1p()
            + half * r / p.nu,
        kappa,
    }
}

/// The four split-t parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginParam {
    Mu,
    Phi,
    Nu,
    Kappa,
}

impl MarginParam {
    pub const ALL: [MarginParam; 4] = [MarginParam::Mu, MarginParam::Phi, MarginParam::Nu, MarginParam::Kappa];

    pub fn name(self) -> &'static str {
        match self {
            MarginParam::Mu => "mu",
            MarginParam::Phi => "phi",
            MarginParam::Nu => "nu",
            MarginParam::Kappa => "kappa",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl<T: Real> SplitTParams<T> {
    pub fn get(&self, which: MarginParam) -> T {
        match which {
            MarginParam::Mu => self.mu,
            MarginParam::Phi => self.phi,
            MarginParam::Nu => self.nu,
            MarginParam::Kappa => self.kappa,
        }
    }

    pub fn with(mut self, which: MarginParam, value: T) -> Self {
        match which {
            MarginParam::Mu => self.mu = value,
            MarginParam::Phi => self.phi = value,
            MarginParam::Nu => self.nu = value,
            MarginParam::Kappa => self.kappa = value,
        }
        self
    }
}

impl<T> ParamGrad<T> {
    pub fn get(&self, which: MarginParam) -> &T {
        match which {
            MarginParam::Mu => &self.mu,
            MarginParam::Phi => &self.phi,
            MarginParam::Nu => &self.nu,
            MarginParam::Kappa => &self.kappa,
        }
    }
}

/// Derivatives of the CDF with respect to the four parameters.
pub fn split_t_cdf_grads<T: Real>(y: T, p: SplitTParams<T>) -> CdfGrad<T> {
    let mut nu_fallback = false;
    let mut g = ParamGrad {
        mu: T::zero(),
        phi: T::zero(),
        nu: T::zero(),
        kappa: T::zero(),
    };
    for which in MarginParam::ALL {
        let (d, fb) = split_t_cdf_dparam(y, p, which);
        nu_fallback |= fb;
        match which {
            MarginParam::Mu => g.mu = d,
            MarginParam::Phi => g.phi = d,
            MarginParam::Nu => g.nu = d,
            MarginParam::Kappa => g.kappa = d,
        }
    }
    CdfGrad { grad: g, nu_fallback }
}

/// One partial derivative of the CDF. The flag reports that the ν
/// derivative was taken from the integral representation.
pub fn split_t_cdf_dparam<T: Real>(y: T, p: SplitTParams<T>, which: MarginParam) -> (T, bool) {
    let (one, half) = (T::one(), T::lit(0.5));
    match which {
        MarginParam::Mu => (-split_t_pdf(y, p), false),
        MarginParam::Phi => (-(y - p.mu) / p.phi * split_t_pdf(y, p), false),
        MarginParam::Kappa => {
            let (a, one_minus_a) = p.a_arg(y);
            let shape = half * p.nu;
            let ia = reg_inc_beta_raw(a, shape, half);
            let w = one + p.kappa;
            if y > p.mu {
                // ∂A/∂κ = 2A(1-A)/κ on the right branch.
                let dens = (shape * a.ln() + half * one_minus_a.ln() - ln_beta_raw(shape, half)).exp();
                (-ia / (w * w) - T::lit(2.0) * dens / w, false)
            } else {
                (-ia / (w * w), false)
            }
        }
        MarginParam::Nu => {
            let (a, one_minus_a) = p.a_arg(y);
            let w = one + p.kappa;
            let use_fallback = p.nu > T::lit(NU_CLOSED_FORM_MAX) || one_minus_a < T::lit(A_NEAR_ONE);
            let (d_tail, fb) = if use_fallback {
                (tail_dnu_integral(p.nu, a, one_minus_a), true)
            } else {
                let ia = reg_inc_beta_raw(a, half * p.nu, half);
                match tail_dnu_closed(p.nu, a, one_minus_a, ia) {
                    Some(v) => (v, false),
                    None => (tail_dnu_integral(p.nu, a, one_minus_a), true),
                }
            };
            let d = if y > p.mu { -p.kappa / w * d_tail } else { d_tail / w };
            (d, fb)
        }
    }
}

// d/dν of I_A(ν/2, 1/2) where A itself depends on ν through
// A = νs²/(d² + νs²): ½ ∂_a I + A^(ν/2) (1-A)^(1/2) / (ν B(ν/2, 1/2)).
fn tail_dnu_closed<T: Real>(nu: T, a: T, one_minus_a: T, ia: T) -> Option<T> {
    let half = T::lit(0.5);
    let shape = half * nu;
    let ln_b = ln_beta_raw(shape, half);
    let da = if a <= half {
        d_first_shape(a, shape, half, ia, ln_b)?
    } else {
        // I_x(a, b) = 1 - I_(1-x)(b, a)
        -d_second_shape(one_minus_a, half, shape, T::one() - ia, ln_b)?
    };
    let direct = (shape * a.ln() + half * one_minus_a.ln() - ln_b).exp() / nu;
    let out = half * da + direct;
    out.is_finite().then_some(out)
}

// ∂/∂a I_x(a, b) = I (ln x - ψ(a) + ψ(a+b)) - x^a 3F2(a, a, 1-b; a+1, a+1; x) / (a² B).
fn d_first_shape<T: Real>(x: T, a: T, b: T, ix: T, ln_b: T) -> Option<T> {
    let one = T::one();
    let (f32_, _) =
        hypergeometric_pfq(&[a, a, one - b], &[a + one, a + one], x, T::lit(PFQ_TOL), PFQ_MAX_TERMS).ok()?;
    let lead = (a * x.ln() - ln_b).exp() / (a * a);
    Some(ix * (x.ln() - digamma_raw(a) + digamma_raw(a + b)) - lead * f32_)
}

// ∂/∂q I_y(p, q) from the series
// I_y(p, q) = y^p (1-y)^q / (p B(p, q)) Σ_k (p+q)_k / (p+1)_k y^k.
fn d_second_shape<T: Real>(y: T, p: T, q: T, iy: T, ln_b: T) -> Option<T> {
    let one = T::one();
    let c = p + q;
    let tol = T::lit(PFQ_TOL);
    // ratio terms: t_k = (c)_k / (p+1)_k y^k and its q-derivative.
    let mut t = one;
    let mut dt = T::zero();
    let mut sum_d = T::zero();
    for k in 0..PFQ_MAX_TERMS {
        let kf = T::lit(k as f64);
        sum_d = sum_d + dt;
        let ratio = (c + kf) / (p + one + kf) * y;
        // d(t_(k+1)) = (dt (c+k) + t) y / (p+1+k)
        dt = (dt * (c + kf) + t) * y / (p + one + kf);
        t = t * ratio;
        if k > 0 && dt.abs() <= tol * sum_d.abs() && ratio < one {
            let front = (p * y.ln() + q * (-y).ln_1p() - ln_b).exp() / p;
            let base = iy * ((-y).ln_1p() - digamma_raw(q) + digamma_raw(c));
            return Some(base + front * sum_d);
        }
    }
    None
}

// Same derivative as `tail_dnu_closed` from ∫ ∂f/∂ν over the tail, written in
// w = A(t) so the integrand is S(w) w^(a-1) (1-w)^(-1/2) / B on (0, A], with
// S the ν-score of the density. The score integrates to zero over (0, 1), so
// for A > 1/2 the complementary piece (A, 1) is used instead.
fn tail_dnu_integral<T: Real>(nu: T, a: T, one_minus_a: T) -> T {
    let (one, half, two) = (T::one(), T::lit(0.5), T::lit(2.0));
    let shape = half * nu;
    let ln_b = ln_beta_raw(shape, half);
    let c0 = -half / nu - half * (digamma_raw(shape) - digamma_raw(shape + half));
    let score = |w: T, one_minus_w: T| c0 + half * w.ln() + (nu + one) * one_minus_w / (two * nu);
    let (abs_tol, rel_tol) = (T::lit(1e-15), T::lit(1e-11));
    if a <= half {
        // w = A s^(1/shape): w^(a-1) dw = A^shape / shape ds
        let g = |s: T| {
            let w = a * s.powf(shape.recip());
            score(w, one - w) * (-half * (-w).ln_1p()).exp()
        };
        let scale = (shape * a.ln() - ln_b).exp() / shape;
        let q = integrate(g, T::zero(), one, abs_tol, rel_tol, 200);
        scale * q.map(|r| r.value).unwrap_or(T::nan())
    } else {
        // w = 1 - s²: (1-w)^(-1/2) dw = -2 ds
        let g = |s: T| {
            let s2 = s * s;
            let w = one - s2;
            two * score(w, s2) * ((shape - one) * (-s2).ln_1p()).exp()
        };
        let q = integrate(g, T::zero(), one_minus_a.sqrt(), abs_tol, rel_tol, 200);
        -(-ln_b).exp() * q.map(|r| r.value).unwrap_or(T::nan())
    }
}

/// Inverse CDF by bracketed Newton iteration.
pub fn split_t_quantile(q: f64, p: SplitTParams<f64>) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain("split_t_quantile", format!("probability {q} outside (0, 1)")));
    }
    let pivot = 1.0 / (1.0 + p.kappa);
    if q == pivot {
        return Ok(p.mu);
    }
    let f = |y: f64| split_t_cdf(y, p) - q;
    let left = q < pivot;
    let mut step = if left { p.phi } else { p.kappa * p.phi };
    let (mut lo, mut hi) = (p.mu, p.mu);
    for _ in 0..2100 {
        let y = if left { p.mu - step } else { p.mu + step };
        if (left && f(y) <= 0.0) || (!left && f(y) >= 0.0) {
            if left {
                lo = y;
            } else {
                hi = y;
            }
            break;
        }
        if left {
            hi = y;
        } else {
            lo = y;
        }
        step *= 2.0;
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) || f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::Numerical(format!("no bracket for split-t quantile {q}")));
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = f(y);
        if r == 0.0 {
            return Ok(y);
        }
        if r < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let mut next = y - r / split_t_pdf(y, p);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * y.abs().max(p.phi) || hi - lo <= 1e-15 * y.abs().max(p.phi) {
            return Ok(next);
        }
        y = next;
    }
    Ok(y)
}

/// One split-t draw.
pub fn split_t_sample<R: Rng + ?Sized>(p: SplitTParams<f64>, rng: &mut R) -> f64 {
    let t = StudentT::new(p.nu).expect("nu > 0").sample(rng).abs();
    if rng.random::<f64>() * (1.0 + p.kappa) < 1.0 {
        p.mu - p.phi * t
    } else {
        p.mu + p.kappa * p.phi * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn st(mu: f64, phi: f64, nu: f64, kappa: f64) -> SplitTParams<f64> {
        SplitTParams::new(mu, phi, nu, kappa).unwrap()
    }

    #[test]
    fn symmetric_case() {
        let p = st(0.2, 0.8, 5.0, 1.0);
        assert_relative_eq!(
            split_t_logpdf(0.2 + 1.3, p),
            split_t_logpdf(0.2 - 1.3, p),
            epsilon = 1e-14
        );
        assert_relative_eq!(split_t_cdf(0.2, p), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn mass_left_of_mode() {
        assert_relative_eq!(split_t_cdf(0.0, st(0.0, 1.0, 4.0, 3.0)), 0.25, epsilon = 1e-14);
        assert!(1.0 - split_t_cdf(1e6, st(0.0, 1.0, 4.0, 3.0)) < 1e-9);
    }

    #[test]
    fn mode_at_location() {
        let p = st(-0.4, 1.3, 3.0, 0.6);
        let top = split_t_logpdf(-0.4, p);
        assert!(top >= split_t_logpdf(-0.4 + 1e-3, p));
        assert!(top >= split_t_logpdf(-0.4 - 1e-3, p));
    }

    #[test]
    fn nu_gradient_closed_form_agrees_with_integral() {
        for &(nu, a) in &[
            (3.0, 0.1),
            (6.0, 0.45),
            (6.0, 0.7),
            (1.5, 0.95),
            (20.0, 0.3),
            (40.0, 0.99),
        ] {
            let half = 0.5;
            let ia = reg_inc_beta_raw(a, half * nu, half);
            let closed = tail_dnu_closed(nu, a, 1.0 - a, ia).unwrap();
            let integral = tail_dnu_integral(nu, a, 1.0 - a);
            assert_relative_eq!(closed, integral, max_relative = 1e-8, epsilon = 1e-13);
        }
    }

    #[test]
    fn kappa_gradient_at_the_mode() {
        let p = st(0.0, 1.0, 6.0, 1.0);
        let g = split_t_cdf_grads(0.0, p);
        assert_relative_eq!(g.grad.kappa, -0.25, epsilon = 1e-14);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = st(0.3, 1.4, 3.5, 1.7);
        for q in [1e-10, 0.01, 0.2, 0.37, 0.5, 0.9, 1.0 - 1e-9] {
            let y = split_t_quantile(q, p).unwrap();
            assert_relative_eq!(split_t_cdf(y, p), q, max_relative = 1e-10);
        }
        assert_eq!(split_t_quantile(1.0 / 2.7, p).unwrap(), 0.3);
    }
}

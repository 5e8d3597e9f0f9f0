//! Kendall's τ of the Joe-Clayton copula and its partial derivatives.
//!
//! The closed form has three branches (θ < 2, θ = 2, θ > 2). The θ ≠ 2
//! expressions have a removable singularity at θ = 2, so close to it τ is
//! evaluated through a power series in `ε = 2/θ - 1`:
//!
//! `τ = 1 + (1 + ε) Q(ε) / δ`, `Q(ε) = (exp(H(ε)) - 1) / ε`,
//! `H(ε) = ln Γ(2+ε) - ln Γ(2) - ln Γ(2+δ+ε) + ln Γ(2+δ)`.

use std::sync::OnceLock;

use super::CopulaNatural;
use crate::real::Real;
use crate::special::{digamma_raw, harmonic, ln_beta_raw, polygamma, trigamma_raw, ZETA_3};

/// Below this distance from θ = 2 the dedicated θ = 2 formulas are used.
pub const THETA_TWO_EXACT: f64 = 1e-7;

/// Below this distance (and above [`THETA_TWO_EXACT`]) the series is used.
pub const THETA_TWO_SERIES: f64 = 0.04;

const SERIES_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauDerivs<T> {
    pub tau: T,
    pub d_theta: T,
    pub d_delta: T,
}

pub fn kendall_tau<T: Real>(c: CopulaNatural<T>) -> T {
    tau_with_derivs(c).tau
}

pub fn dtau_dtheta<T: Real>(c: CopulaNatural<T>) -> T {
    tau_with_derivs(c).d_theta
}

pub fn dtau_ddelta<T: Real>(c: CopulaNatural<T>) -> T {
    tau_with_derivs(c).d_delta
}

/// ∂λ_L/∂δ = 2^(-1/δ) ln 2 / δ².
pub fn dlambda_l_ddelta<T: Real>(delta: T) -> T {
    T::lit(2.0).powf(-delta.recip()) * T::LN_2() / (delta * delta)
}

/// τ as a function of the two tail dependence coefficients.
pub fn tau_from_features<T: Real>(lambda_l: T, lambda_u: T) -> crate::Result<T> {
    let delta = super::delta_from_lambda_l(lambda_l)?;
    let theta = super::theta_from_lambda_u(lambda_u)?;
    Ok(kendall_tau(CopulaNatural { theta, delta }))
}

/// τ together with ∂τ/∂θ and ∂τ/∂δ.
pub fn tau_with_derivs<T: Real>(c: CopulaNatural<T>) -> TauDerivs<T> {
    let gap = (c.theta - T::lit(2.0)).abs();
    if gap < T::lit(THETA_TWO_EXACT) {
        at_two(c.delta)
    } else if gap < T::lit(THETA_TWO_SERIES) {
        near_two(c.theta, c.delta)
    } else if c.theta < T::lit(2.0) {
        below_two(c.theta, c.delta)
    } else {
        above_two(c.theta, c.delta)
    }
}

fn below_two<T: Real>(theta: T, delta: T) -> TauDerivs<T> {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let eps = two / theta - one;
    let beta = ln_beta_raw(delta + two, eps).exp();
    let th2 = theta * theta;
    let tau = one - two / (delta * (two - theta)) + four * beta / (th2 * delta);
    let psi_top = digamma_raw(eps + delta + two);
    let d_theta = -two / ((theta - two).powi(2) * delta)
        - T::lit(8.0) * beta * (theta + digamma_raw(eps) - psi_top) / (th2 * th2 * delta);
    let d_delta = two / ((two - theta) * delta * delta)
        + four * beta * (digamma_raw(two + delta) - psi_top - delta.recip()) / (th2 * delta);
    TauDerivs { tau, d_theta, d_delta }
}

fn above_two<T: Real>(theta: T, delta: T) -> TauDerivs<T> {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let pi = T::PI();
    let angle = two * pi / theta;
    let (s, co) = angle.sin_cos();
    let beta = ln_beta_raw(one + delta + two / theta, two - two / theta).exp();
    let th2 = theta * theta;
    let gap2 = (theta - two).powi(2);
    let tau = one - two / (delta * (two - theta)) - four * pi / (th2 * delta * (two + delta) * s * beta);
    let psi_a = digamma_raw(one + delta + two / theta);
    let psi_b = digamma_raw(two - two / theta);
    let num = -two * (two + delta) * th2 * th2 * beta
        - T::lit(8.0) * pi * pi * gap2 * co / (s * s)
        - T::lit(8.0) * pi * gap2 * (psi_a - psi_b - theta) / s;
    let d_theta = num / (delta * (two + delta) * gap2 * th2 * th2 * beta);
    let d_delta = -two / ((theta - two) * delta * delta)
        - four * pi * (digamma_raw(T::lit(3.0) + delta) - psi_a - two * (one + delta) / (two * delta + delta * delta))
            / ((two + delta) * delta * th2 * s * beta);
    TauDerivs { tau, d_theta, d_delta }
}

// θ = 2 closed forms written in terms of d = ψ(2+δ) - ψ(2) and
// d1 = ψ'(2+δ) - ψ'(2).
fn at_two<T: Real>(delta: T) -> TauDerivs<T> {
    let two = T::lit(2.0);
    let table = psi_at_two();
    let d = digamma_raw(two + delta) - T::lit(table[0]);
    let tri = trigamma_raw(two + delta);
    let d1 = tri - T::lit(table[1]);
    TauDerivs {
        tau: T::one() - d / delta,
        d_theta: (d1 + two * d - d * d) / (T::lit(4.0) * delta),
        d_delta: (d - delta * tri) / (delta * delta),
    }
}

fn near_two<T: Real>(theta: T, delta: T) -> TauDerivs<T> {
    const N: usize = SERIES_ORDER;
    let (one, two) = (T::one(), T::lit(2.0));
    let eps = two / theta - one;
    let table = psi_at_two();
    let x = two + delta;
    let pg = |n: usize| polygamma(n, x).unwrap_or(T::nan());

    // H(ε) = Σ h_k ε^k and ∂h_k/∂δ.
    let mut h = [T::zero(); N + 1];
    let mut hd = [T::zero(); N + 1];
    let mut fact = one;
    let mut prev = pg(0);
    for k in 1..=N {
        fact = fact * T::lit(k as f64);
        let next = pg(k);
        h[k] = -(prev - T::lit(table[k - 1])) / fact;
        hd[k] = -next / fact;
        prev = next;
    }

    // Coefficients of exp(H) and their δ-derivatives.
    let mut f = [T::zero(); N + 1];
    let mut fd = [T::zero(); N + 1];
    f[0] = one;
    for n in 1..=N {
        let mut s = T::zero();
        let mut sd = T::zero();
        for k in 1..=n {
            let kk = T::lit(k as f64);
            s = s + kk * h[k] * f[n - k];
            sd = sd + kk * (hd[k] * f[n - k] + h[k] * fd[n - k]);
        }
        let nn = T::lit(n as f64);
        f[n] = s / nn;
        fd[n] = sd / nn;
    }

    // Q = Σ f_n ε^(n-1), evaluated by Horner together with Q' and ∂Q/∂δ.
    let mut q = T::zero();
    let mut dq = T::zero();
    let mut qd = T::zero();
    for n in (1..=N).rev() {
        dq = dq * eps + q;
        q = q * eps + f[n];
        qd = qd * eps + fd[n];
    }
    let scale = one + eps;
    let dtau_deps = (q + scale * dq) / delta;
    TauDerivs {
        tau: one + scale * q / delta,
        d_theta: -two / (theta * theta) * dtau_deps,
        d_delta: scale * (qd / delta - q / (delta * delta)),
    }
}

// ψ^(n)(2) for n = 0..=SERIES_ORDER.
fn psi_at_two() -> &'static [f64; SERIES_ORDER + 1] {
    static TABLE: OnceLock<[f64; SERIES_ORDER + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; SERIES_ORDER + 1];
        for (n, slot) in t.iter_mut().enumerate() {
            *slot = polygamma(n, 2.0_f64).expect("polygamma at 2");
        }
        t
    })
}

/// Limit of τ as δ → 0 (vanishing lower tail dependence).
pub fn tau_delta_limit<T: Real>(theta: T) -> T {
    let two = T::lit(2.0);
    if (theta - two).abs() < T::lit(THETA_TWO_EXACT) {
        return two - T::PI() * T::PI() / T::lit(6.0);
    }
    let h = harmonic(two / theta).unwrap_or(T::nan());
    T::one() - (two * h - two) / (two - theta)
}

/// Limit of ∂τ/∂θ as δ → 0.
pub fn dtau_dtheta_delta_limit<T: Real>(theta: T) -> T {
    let two = T::lit(2.0);
    if (theta - two).abs() < T::lit(THETA_TWO_EXACT) {
        return T::PI() * T::PI() / T::lit(12.0) - T::lit(ZETA_3) / two;
    }
    let h = harmonic(two / theta).unwrap_or(T::nan());
    let gap = theta - two;
    two * (T::one() - h) / (gap * gap) - T::lit(4.0) * trigamma_raw(two / theta + T::one()) / (gap * theta * theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn nat(theta: f64, delta: f64) -> CopulaNatural<f64> {
        CopulaNatural { theta, delta }
    }

    #[test]
    fn clayton_tau() {
        for &d in &[0.3, 1.0, 4.0] {
            assert_relative_eq!(kendall_tau(nat(1.0, d)), d / (d + 2.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn small_delta_limits_at_two() {
        let t = tau_with_derivs(nat(2.0, 1e-8));
        assert!((t.tau - (2.0 - PI * PI / 6.0)).abs() < 1e-4);
        assert!((t.d_theta - (PI * PI / 12.0 - ZETA_3 / 2.0)).abs() < 1e-4);
    }

    #[test]
    fn delta_limit_formulas() {
        for &th in &[1.3, 2.0, 2.0 + 1e-9, 3.5] {
            let t = tau_with_derivs(nat(th, 1e-7));
            assert_relative_eq!(t.tau, tau_delta_limit(th), epsilon = 1e-5);
            assert_relative_eq!(t.d_theta, dtau_dtheta_delta_limit(th), epsilon = 1e-4);
        }
    }

    #[test]
    fn continuous_across_two() {
        for &d in &[0.05, 0.5, 1.0, 3.0, 25.0] {
            for &gap in &[1e-6, 1e-3, THETA_TWO_EXACT, THETA_TWO_SERIES] {
                let (inner, outer) = (gap * (1.0 - 1e-6), gap * (1.0 + 1e-6));
                for sign in [-1.0, 1.0] {
                    let a = tau_with_derivs(nat(2.0 + sign * inner, d));
                    let b = tau_with_derivs(nat(2.0 + sign * outer, d));
                    // Allowed change is the slope times the step, plus the
                    // exact branch's own offset |θ - 2| ∂τ/∂θ at its edge.
                    let mut allowed = a.d_theta.abs() * (outer - inner) + 1e-11;
                    if gap == THETA_TWO_EXACT {
                        allowed += a.d_theta.abs() * gap;
                    }
                    assert!((a.tau - b.tau).abs() <= allowed, "d={d} gap={gap}");
                    assert_relative_eq!(a.d_theta, b.d_theta, max_relative = 1e-6);
                    assert_relative_eq!(a.d_delta, b.d_delta, max_relative = 1e-6);
                }
            }
            let below = kendall_tau(nat(2.0 - 1e-6, d));
            let above = kendall_tau(nat(2.0 + 1e-6, d));
            assert!((below - above).abs() < 1e-4);
        }
    }

    #[test]
    fn series_matches_generic_branches() {
        for &d in &[0.2, 1.0, 6.0] {
            for &th in &[1.97, 1.99, 2.01, 2.03] {
                let s = near_two(th, d);
                let g = if th < 2.0 { below_two(th, d) } else { above_two(th, d) };
                assert_relative_eq!(s.tau, g.tau, max_relative = 1e-10);
                assert_relative_eq!(s.d_theta, g.d_theta, max_relative = 1e-7);
                assert_relative_eq!(s.d_delta, g.d_delta, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for &(th, d) in &[(2.7, 0.9), (1.4, 2.2), (5.0, 0.3), (2.02, 1.1)] {
            let t = tau_with_derivs(nat(th, d));
            let fd_th = (kendall_tau(nat(th + h, d)) - kendall_tau(nat(th - h, d))) / (2.0 * h);
            let fd_d = (kendall_tau(nat(th, d + h)) - kendall_tau(nat(th, d - h))) / (2.0 * h);
            assert_relative_eq!(t.d_theta, fd_th, max_relative = 1e-5);
            assert_relative_eq!(t.d_delta, fd_d, max_relative = 1e-5);
        }
    }

    #[test]
    fn lambda_l_derivative() {
        assert_relative_eq!(dlambda_l_ddelta(1.0_f64), 2f64.ln() / 2.0, epsilon = 1e-15);
    }
}

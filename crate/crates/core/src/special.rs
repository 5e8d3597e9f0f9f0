//! Special functions used by the copula, margin and prior formulas.
//!
//! Everything here is written against [`Real`] so the same kernels serve f32
//! and f64. Checked entry points return [`Result`]; the crate-internal
//! `*_raw` variants skip validation for hot loops whose callers have already
//! established the domain.

use crate::error::{domain, Error, Result};
use crate::real::Real;

/// Euler–Mascheroni constant γ.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Apéry's constant ζ(3), OEIS A002117 (1.2020569031595942853997…).
pub const ZETA_3: f64 = 1.202_056_903_159_594_3;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

// Even Bernoulli numbers B_2 .. B_20.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

fn is_nonpositive_integer<T: Real>(x: T) -> bool {
    x <= T::zero() && x == x.floor()
}

/// ln|Γ(x)|. Poles return +∞.
pub fn ln_gamma<T: Real>(x: T) -> T {
    if is_nonpositive_integer(x) {
        return T::infinity();
    }
    if x < T::lit(0.5) {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let s = (T::PI() * x).sin().abs();
        return T::PI().ln() - s.ln() - ln_gamma(T::one() - x);
    }
    if x <= T::lit(24.0) && x == x.floor() {
        let n = x.to_usize().unwrap_or(1);
        return T::lit(factorial(n - 1)).ln();
    }
    let z = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (k, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (z + T::lit(k as f64));
    }
    let t = z + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (z + T::lit(0.5)) * t.ln() - t + acc.ln()
}

pub(crate) fn ln_beta_raw<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// ln B(a, b) for a, b > 0.
pub fn ln_beta<T: Real>(a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) {
        return Err(domain("ln_beta", format!("a = {a}, b = {b} must be positive")));
    }
    Ok(ln_beta_raw(a, b))
}

pub(crate) fn digamma_raw<T: Real>(x: T) -> T {
    let mut x = x;
    let mut acc = T::zero();
    if x < T::zero() {
        // ψ(1-x) - ψ(x) = π cot(πx)
        let cot = T::one() / (T::PI() * x).tan();
        return digamma_raw(T::one() - x) - T::PI() * cot;
    }
    let ten = T::lit(10.0);
    while x < ten {
        acc = acc - x.recip();
        x = x + T::one();
    }
    let inv2 = (x * x).recip();
    // ln x - 1/(2x) - Σ B_2k / (2k x^2k)
    let mut series = T::zero();
    let mut pow = inv2;
    for (k, &b) in BERNOULLI_EVEN.iter().take(7).enumerate() {
        series = series + T::lit(b / (2.0 * (k as f64 + 1.0))) * pow;
        pow = pow * inv2;
    }
    acc + x.ln() - T::lit(0.5) / x - series
}

/// Digamma ψ(x) = d/dx ln Γ(x).
pub fn digamma<T: Real>(x: T) -> Result<T> {
    if is_nonpositive_integer(x) || x.is_nan() {
        return Err(Error::Pole {
            func: "digamma",
            x: x.as_f64(),
        });
    }
    Ok(digamma_raw(x))
}

pub(crate) fn trigamma_raw<T: Real>(x: T) -> T {
    if x < T::zero() {
        // ψ1(1-x) + ψ1(x) = π² / sin²(πx)
        let s = (T::PI() * x).sin();
        return T::PI() * T::PI() / (s * s) - trigamma_raw(T::one() - x);
    }
    let mut x = x;
    let mut acc = T::zero();
    let ten = T::lit(10.0);
    while x < ten {
        acc = acc + (x * x).recip();
        x = x + T::one();
    }
    // 1/x + 1/(2x²) + Σ B_2k / x^(2k+1)
    let inv = x.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    let mut pow = inv * inv2;
    for &b in BERNOULLI_EVEN.iter().take(7) {
        series = series + T::lit(b) * pow;
        pow = pow * inv2;
    }
    acc + inv + T::lit(0.5) * inv2 + series
}

/// Trigamma ψ₁(x) = d²/dx² ln Γ(x).
pub fn trigamma<T: Real>(x: T) -> Result<T> {
    if is_nonpositive_integer(x) || x.is_nan() {
        return Err(Error::Pole {
            func: "trigamma",
            x: x.as_f64(),
        });
    }
    Ok(trigamma_raw(x))
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Polygamma ψ⁽ⁿ⁾(x) for x > 0 (n = 0 is the digamma function).
pub fn polygamma<T: Real>(n: usize, x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(domain("polygamma", format!("x = {x} must be positive")));
    }
    match n {
        0 => return Ok(digamma_raw(x)),
        1 => return Ok(trigamma_raw(x)),
        _ => {}
    }
    let sign = if n % 2 == 1 { T::one() } else { -T::one() };
    let nfact = T::lit(factorial(n));
    let mut x = x;
    let mut acc = T::zero();
    let shift = T::lit(20.0 + n as f64);
    while x < shift {
        acc = acc + sign * nfact / x.powi(n as i32 + 1);
        x = x + T::one();
    }
    let inv = x.recip();
    let mut series = T::lit(factorial(n - 1)) * inv.powi(n as i32) + T::lit(0.5) * nfact * inv.powi(n as i32 + 1);
    for (k, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let two_k = 2 * (k + 1);
        let coef = b * factorial(two_k + n - 1) / factorial(two_k);
        series = series + T::lit(coef) * inv.powi((two_k + n) as i32);
    }
    Ok(acc + sign * series)
}

/// Harmonic number H(x) = ψ(x + 1) + γ, defined for x > -1.
pub fn harmonic<T: Real>(x: T) -> Result<T> {
    if !(x > -T::one()) {
        return Err(Error::Pole {
            func: "harmonic",
            x: x.as_f64(),
        });
    }
    Ok(digamma_raw(x + T::one()) + T::lit(EULER_GAMMA))
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf<T: Real>(x: T, a: T, b: T) -> T {
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let eps = T::epsilon();
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..10_000 {
        let m = T::lit(m as f64);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

pub(crate) fn reg_inc_beta_raw<T: Real>(x: T, a: T, b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta_raw(a, b);
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        T::one() - ln_front.exp() * beta_cf(T::one() - x, b, a) / b
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta<T: Real>(x: T, a: T, b: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(domain("reg_inc_beta", format!("x = {x} outside [0, 1]")));
    }
    if !(a > T::zero() && b > T::zero()) {
        return Err(domain("reg_inc_beta", format!("a = {a}, b = {b} must be positive")));
    }
    Ok(reg_inc_beta_raw(x, a, b))
}

/// Generalized hypergeometric series pFq(upper; lower; z), summed term by
/// term until the term-to-sum ratio falls below `rel_tol`.
///
/// Returns the sum and the number of terms used. Fails if `max_terms` is
/// exhausted first.
pub fn hypergeometric_pfq<T: Real>(upper: &[T], lower: &[T], z: T, rel_tol: T, max_terms: usize) -> Result<(T, usize)> {
    if lower.iter().any(|&b| is_nonpositive_integer(b)) {
        return Err(domain("hypergeometric_pfq", "lower parameter at a pole"));
    }
    let mut term = T::one();
    let mut sum = T::one();
    for k in 0..max_terms {
        let kf = T::lit(k as f64);
        let mut ratio = z / (kf + T::one());
        for &a in upper {
            ratio = ratio * (a + kf);
        }
        for &b in lower {
            ratio = ratio / (b + kf);
        }
        term = term * ratio;
        sum = sum + term;
        if term == T::zero() || (term / sum).abs() < rel_tol {
            return Ok((sum, k + 2));
        }
    }
    Err(Error::Numerical(format!(
        "pFq series did not converge in {max_terms} terms at z = {z}"
    )))
}

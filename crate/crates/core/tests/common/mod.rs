//! Test-only oracles written independently of the library code.
#![allow(dead_code)]

/// Central difference with one Richardson extrapolation step.
pub fn diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// |a - b| <= tol * max(|a|, |b|, floor).
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on (0, 1) with the endpoint-clustering
/// substitution t = s²(3 - 2s); returns (nodes, weights).
pub fn unit_rule(panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in 0..panels {
        let (a, b) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
        for (x, w) in gx.iter().zip(&gw) {
            let s = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let t = s * s * (3.0 - 2.0 * s);
            let dt = 6.0 * s * (1.0 - s);
            nodes.push(t);
            weights.push(0.5 * (b - a) * w * dt);
        }
    }
    (nodes, weights)
}

/// Joe-Clayton (BB7) CDF straight from its closed form.
pub fn bb7_cdf(u: f64, v: f64, theta: f64, delta: f64) -> f64 {
    let g = |s: f64| (1.0 - (1.0 - s).powf(theta)).powf(-delta);
    1.0 - (1.0 - (g(u) + g(v) - 1.0).powf(-1.0 / delta)).powf(1.0 / theta)
}

/// Partial derivative of the BB7 CDF in u from the closed form, with
/// 1 - w kept accurate near (1, 1) through expm1/ln1p.
pub fn bb7_cdf_du(u: f64, v: f64, theta: f64, delta: f64) -> f64 {
    let la = (-(1.0 - u).powf(theta)).ln_1p();
    let lb = (-(1.0 - v).powf(theta)).ln_1p();
    // s - 1 = (a^-δ - 1) + (b^-δ - 1)
    let s1 = (-delta * la).exp_m1() + (-delta * lb).exp_m1();
    let ls = s1.ln_1p();
    let one_minus_w = -(-ls / delta).exp_m1();
    // dC/du = (1/θ)(1-w)^{1/θ-1} dw/du, dw/du = s^{-1/δ-1} a^{-δ-1} θ (1-u)^{θ-1}
    let dw = (-(1.0 / delta + 1.0) * ls - (delta + 1.0) * la).exp() * theta * (1.0 - u).powf(theta - 1.0);
    (1.0 / theta) * one_minus_w.powf(1.0 / theta - 1.0) * dw
}

pub fn clayton_cdf(u: f64, v: f64, delta: f64) -> f64 {
    (u.powf(-delta) + v.powf(-delta) - 1.0).powf(-1.0 / delta)
}

pub fn clayton_logpdf(u: f64, v: f64, delta: f64) -> f64 {
    (1.0 + delta).ln()
        + (-delta - 1.0) * (u * v).ln()
        + (-1.0 / delta - 2.0) * (u.powf(-delta) + v.powf(-delta) - 1.0).ln()
}

/// Kendall's τ as 1 - 4∬ C_u C_v du dv on a tensor rule.
pub fn tau_by_quadrature(theta: f64, delta: f64) -> f64 {
    let (x, w) = unit_rule(40, 20);
    let n = x.len();
    let mut cu = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cu[i * n + j] = bb7_cdf_du(x[i], x[j], theta, delta);
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            // C_v(u_i, v_j) = C_u(v_j, u_i) by exchangeability
            s += w[i] * w[j] * cu[i * n + j] * cu[j * n + i];
        }
    }
    1.0 - 4.0 * s
}

/// AR(1) path x_t = ρ x_{t-1} + e_t from a seeded generator.
pub fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sd0 = 1.0 / (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(n);
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut prev = sd0 * z;
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        prev = rho * prev + e;
        x.push(prev);
    }
    x
}

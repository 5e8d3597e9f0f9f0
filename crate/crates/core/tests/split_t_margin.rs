use std::f64::consts::PI;

use covcop::links::ParamBlock;
use covcop::quadrature::integrate;
use covcop::split_t::{
    margin_loglik_and_grad, split_t_cdf, split_t_cdf_grads, split_t_logpdf, split_t_logpdf_grads, split_t_pdf,
    split_t_quantile, split_t_sample, MarginLinkSet, MarginParam, SplitTParams,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use statrs::distribution::{ContinuousCDF, StudentsT};

mod common;
use common::{close, diff};

fn st(mu: f64, phi: f64, nu: f64, kappa: f64) -> SplitTParams<f64> {
    SplitTParams::new(mu, phi, nu, kappa).unwrap()
}

fn total_mass(p: SplitTParams<f64>) -> f64 {
    // y = μ + tan(π(s - 1/2)) maps (0, 1) onto the line
    let f = |s: f64| {
        let a = PI * (s - 0.5);
        let c = a.cos();
        if c <= 0.0 {
            return 0.0;
        }
        split_t_pdf(p.mu + a.tan(), p) * PI / (c * c)
    };
    integrate(f, 0.0, 1.0, 1e-13, 1e-12, 2000).unwrap().value
}

#[test]
fn symmetric_when_kappa_is_one() {
    let p = st(-0.4, 1.7, 3.5, 1.0);
    for d in [0.01, 0.5, 2.0, 30.0] {
        assert!((split_t_logpdf(-0.4 + d, p) - split_t_logpdf(-0.4 - d, p)).abs() < 1e-14);
        assert!((split_t_cdf(-0.4 + d, p) + split_t_cdf(-0.4 - d, p) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn mass_left_of_mode() {
    for k in [0.3, 1.0, 2.5] {
        let p = st(1.0, 0.5, 6.0, k);
        assert!((split_t_cdf(1.0, p) - 1.0 / (1.0 + k)).abs() < 1e-14);
        // density is continuous at the mode
        assert!((split_t_logpdf(1.0 - 1e-12, p) - split_t_logpdf(1.0 + 1e-12, p)).abs() < 1e-9);
    }
}

#[test]
fn densities_integrate_to_one() {
    for p in [
        st(0.0, 1.0, 4.0, 1.0),
        st(2.0, 0.3, 1.5, 3.0),
        st(-1.0, 2.0, 30.0, 0.4),
        st(0.0, 1.0, 1.0, 1.0),
    ] {
        let m = total_mass(p);
        assert!((m - 1.0).abs() < 1e-8, "{p:?}: {m}");
    }
}

#[test]
fn unit_kappa_is_student_t() {
    for &(nu, phi) in &[(1.0, 1.0), (3.0, 0.7), (12.5, 2.0), (80.0, 1.3)] {
        let p = st(0.3, phi, nu, 1.0);
        let t = StudentsT::new(0.3, phi, nu).unwrap();
        for y in [-25.0, -3.0, -0.2, 0.3, 0.31, 1.0, 4.0, 60.0] {
            assert!((split_t_cdf(y, p) - t.cdf(y)).abs() < 1e-10, "nu {nu} y {y}");
        }
    }
}

#[test]
fn large_nu_is_split_normal() {
    use statrs::distribution::Normal;
    let n = Normal::new(0.0, 1.0).unwrap();
    let (mu, phi, k) = (0.5, 0.8, 1.7);
    let p = st(mu, phi, 1e6, k);
    for y in [-2.0, -0.3, 0.5, 1.2, 3.0] {
        let sn = if y <= mu {
            2.0 / (1.0 + k) * n.cdf((y - mu) / phi)
        } else {
            1.0 - 2.0 * k / (1.0 + k) * n.cdf(-(y - mu) / (k * phi))
        };
        assert!((split_t_cdf(y, p) - sn).abs() < 1e-4);
    }
}

#[test]
fn quantile_inverts_cdf() {
    let p = st(0.1, 1.2, 2.5, 1.8);
    for q in [1e-6, 0.01, 0.2, 1.0 / 2.8, 0.5, 0.9, 0.999999] {
        let y = split_t_quantile(q, p).unwrap();
        assert!((split_t_cdf(y, p) - q).abs() < 1e-12 * q.max(1e-3));
    }
    assert!(split_t_quantile(0.0, p).is_err());
}

#[test]
fn sample_moments_follow_cdf() {
    let p = st(0.0, 1.0, 5.0, 2.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let below = (0..n).filter(|_| split_t_sample(p, &mut rng) <= 1.0).count() as f64 / n as f64;
    let f = split_t_cdf(1.0, p);
    assert!((below - f).abs() < 4.0 * (f * (1.0 - f) / n as f64).sqrt());
}

fn block(b0: f64, b: &[f64]) -> ParamBlock {
    ParamBlock::new(b0, DVector::from_row_slice(b), vec![true; b.len()]).unwrap()
}

fn design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

fn links(d: usize) -> MarginLinkSet {
    let s = |v: f64| vec![v; d];
    MarginLinkSet {
        mu: block(0.1, &s(0.2)),
        phi: block(-0.2, &s(0.1)),
        nu: block(1.6, &s(-0.05)),
        kappa: block(0.15, &s(0.08)),
    }
}

fn simulate(x: &DMatrix<f64>, l: &MarginLinkSet, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    l.params(x)
        .unwrap()
        .into_iter()
        .map(|p| split_t_sample(p, &mut rng))
        .collect()
}

#[test]
fn margin_gradient_matches_differences() {
    let x = design(80, 3, 1);
    let l = links(3);
    let y = simulate(&x, &l, 2);
    let out = margin_loglik_and_grad(&y, &x, &l).unwrap();
    for w in MarginParam::ALL {
        for j in 0..4 {
            let f = |t: f64| {
                let mut m = l.clone();
                let b = m.block_mut(w);
                if j == 0 {
                    b.beta0 = t;
                } else {
                    b.beta[j - 1] = t;
                }
                margin_loglik_and_grad(&y, &x, &m).unwrap().loglik
            };
            let b = l.block(w);
            let at = if j == 0 { b.beta0 } else { b.beta[j - 1] };
            let fd = diff(f, at, 1e-4);
            assert!(close(out.grad[w.index()][j], fd, 1e-6, 1.0), "{w:?} {j}");
        }
    }
}

#[test]
fn duplicated_column_splits_the_slope() {
    let x = design(60, 1, 4);
    let x2 = DMatrix::from_fn(60, 2, |i, _| x[(i, 0)]);
    let single = links(1);
    let y = simulate(&x, &single, 5);
    let mut double = links(2);
    for w in MarginParam::ALL {
        let b = single.block(w).beta[0];
        double.block_mut(w).beta = DVector::from_row_slice(&[0.3 * b, 0.7 * b]);
    }
    let a = margin_loglik_and_grad(&y, &x, &single).unwrap();
    let b = margin_loglik_and_grad(&y, &x2, &double).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-10 * a.loglik.abs());
    for g in &b.grad {
        assert!((g[1] - g[2]).abs() < 1e-10 * g[1].abs().max(1.0));
    }
}

#[test]
fn score_is_small_at_the_truth() {
    let n = 50_000;
    let x = design(n, 2, 6);
    let l = links(2);
    let y = simulate(&x, &l, 7);
    let out = margin_loglik_and_grad(&y, &x, &l).unwrap();
    for g in &out.grad {
        for v in g.iter() {
            assert!(v.abs() / (n as f64) < 0.05, "{v}");
        }
    }
}

#[test]
fn dimension_checks() {
    let x = design(5, 2, 1);
    assert!(margin_loglik_and_grad(&[0.0; 4], &x, &links(2)).is_err());
    assert!(margin_loglik_and_grad(&[0.0; 5], &x, &links(3)).is_err());
    assert!(SplitTParams::new(0.0, -1.0, 2.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cdf_derivative_is_density(y in -20.0f64..20.0, mu in -2.0f64..2.0, phi in 0.2f64..3.0,
                                 nu in 0.8f64..60.0, kappa in 0.2f64..4.0) {
        let p = st(mu, phi, nu, kappa);
        prop_assume!((y - mu).abs() > 1e-3);
        let fd = diff(|t| split_t_cdf(t, p), y, 1e-4 * phi);
        prop_assert!(close(fd, split_t_pdf(y, p), 1e-6, 1e-4));
    }

    #[test]
    fn cdf_is_monotone(a in -50.0f64..50.0, gap in 0.0f64..10.0, nu in 0.5f64..100.0, kappa in 0.1f64..10.0) {
        let p = st(0.0, 1.0, nu, kappa);
        let (fa, fb) = (split_t_cdf(a, p), split_t_cdf(a + gap, p));
        prop_assert!(fa <= fb + 1e-15 && (0.0..=1.0).contains(&fa));
    }

    #[test]
    fn logpdf_gradients(y in -10.0f64..10.0, mu in -1.0f64..1.0, phi in 0.3f64..2.0,
                        nu in 0.8f64..40.0, kappa in 0.3f64..3.0) {
        prop_assume!((y - mu).abs() > 1e-3);
        let p = st(mu, phi, nu, kappa);
        let g = split_t_logpdf_grads(y, p);
        for w in MarginParam::ALL {
            let fd = diff(|t| split_t_logpdf(y, p.with(w, t)), p.get(w), 1e-5 * p.get(w).abs().max(1.0));
            prop_assert!(close(*g.get(w), fd, 1e-6, 1e-3), "{:?}: {} vs {}", w, g.get(w), fd);
        }
    }

    #[test]
    fn cdf_gradients(y in -10.0f64..10.0, mu in -1.0f64..1.0, phi in 0.3f64..2.0,
                     nu in 0.8f64..120.0, kappa in 0.3f64..3.0) {
        prop_assume!((y - mu).abs() > 1e-3);
        let p = st(mu, phi, nu, kappa);
        let g = split_t_cdf_grads(y, p).grad;
        for w in MarginParam::ALL {
            let fd = diff(|t| split_t_cdf(y, p.with(w, t)), p.get(w), 1e-4 * p.get(w).abs().max(1.0));
            prop_assert!(close(*g.get(w), fd, 1e-5, 1e-4), "{:?}: {} vs {}", w, g.get(w), fd);
        }
    }
}

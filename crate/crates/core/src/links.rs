//! Link functions, the generalized beta distribution, intercept prior
//! moment matching and the slope / variable-selection prior of a
//! covariate-linked parameter block.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{domain, Error, Result};
use crate::quadrature::integrate;
use crate::real::Real;
use crate::special::{digamma_raw, trigamma_raw};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Inverse link: parameter = g(η).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link<T> {
    Identity,
    Log,
    Logit,
    /// a + (b - a) / (1 + e^-η)
    GLogit {
        a: T,
        b: T,
    },
}

impl<T: Real> Link<T> {
    pub fn glogit(a: T, b: T) -> Result<Self> {
        if !(a < b) {
            return Err(domain("Link::glogit", format!("bounds a = {a}, b = {b}")));
        }
        Ok(Link::GLogit { a, b })
    }

    fn bounds(&self) -> (T, T) {
        match *self {
            Link::Identity => (T::neg_infinity(), T::infinity()),
            Link::Log => (T::zero(), T::infinity()),
            Link::Logit => (T::zero(), T::one()),
            Link::GLogit { a, b } => (a, b),
        }
    }

    /// Parameter value at linear predictor η.
    pub fn eval(&self, eta: T) -> T {
        match *self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => logistic(eta),
            Link::GLogit { a, b } => a + (b - a) * logistic(eta),
        }
    }

    /// dvalue/dη at η.
    pub fn deriv(&self, eta: T) -> T {
        match *self {
            Link::Identity => T::one(),
            Link::Log => eta.exp(),
            Link::Logit => {
                let s = logistic(eta);
                s * (T::one() - s)
            }
            Link::GLogit { a, b } => {
                let s = logistic(eta);
                (b - a) * s * (T::one() - s)
            }
        }
    }

    /// Linear predictor η for a parameter value.
    pub fn link(&self, value: T) -> Result<T> {
        let (lo, hi) = self.bounds();
        if !(value > lo && value < hi) && !matches!(self, Link::Identity) {
            return Err(domain("Link::link", format!("{value} outside ({lo}, {hi})")));
        }
        Ok(match *self {
            Link::Identity => value,
            Link::Log => value.ln(),
            Link::Logit => (value / (T::one() - value)).ln(),
            Link::GLogit { a, b } => ((value - a) / (b - value)).ln(),
        })
    }

    /// dη/dvalue at a parameter value.
    pub fn jacobian(&self, value: T) -> Result<T> {
        let (lo, hi) = self.bounds();
        if !(value > lo && value < hi) && !matches!(self, Link::Identity) {
            return Err(domain("Link::jacobian", format!("{value} outside ({lo}, {hi})")));
        }
        Ok(match *self {
            Link::Identity => T::one(),
            Link::Log => value.recip(),
            Link::Logit => (value * (T::one() - value)).recip(),
            Link::GLogit { a, b } => (b - a) / ((value - a) * (b - value)),
        })
    }
}

pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Lower bound a(λ) = ln 2 / (ln 2 - ln λ) of τ given λ_L = λ.
pub fn conditional_tau_bound<T: Real>(lambda_l: T) -> T {
    T::LN_2() / (T::LN_2() - lambda_l.ln())
}

/// da/dλ for [`conditional_tau_bound`].
pub fn conditional_tau_bound_deriv<T: Real>(lambda_l: T) -> T {
    let den = T::LN_2() - lambda_l.ln();
    T::LN_2() / (den * den * lambda_l)
}

/// glogit link for τ with bounds (a(λ), 1).
pub fn conditional_tau_link<T: Real>(lambda_l: T) -> Link<T> {
    Link::GLogit {
        a: conditional_tau_bound(lambda_l),
        b: T::one(),
    }
}

/// Generalized beta: (x - a)/(b - a) is Beta with mean (m - a)/(b - a) and
/// standard deviation σ/(b - a).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GBetaSpec {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub sigma: f64,
}

impl GBetaSpec {
    pub fn new(a: f64, b: f64, m: f64, sigma: f64) -> Result<Self> {
        if !(a < m && m < b && sigma > 0.0) {
            return Err(domain(
                "GBetaSpec",
                format!("a = {a}, b = {b}, m = {m}, sigma = {sigma}"),
            ));
        }
        let spec = Self { a, b, m, sigma };
        let (mm, s) = spec.standard_moments();
        if s * s >= mm * (1.0 - mm) {
            return Err(Error::Infeasible(format!(
                "variance {} exceeds the largest beta variance {} at mean {mm}",
                s * s,
                mm * (1.0 - mm)
            )));
        }
        Ok(spec)
    }

    fn standard_moments(&self) -> (f64, f64) {
        let w = self.b - self.a;
        ((self.m - self.a) / w, self.sigma / w)
    }

    /// Shape parameters (α1, α2) of the standardized beta.
    pub fn shapes(&self) -> (f64, f64) {
        let (m, s) = self.standard_moments();
        let v = s * s;
        let a1 = -m * (m * m - m + v) / v;
        let a2 = -1.0 + m + (m - 1.0) * (m - 1.0) * m / v;
        (a1, a2)
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        if !(x > self.a && x < self.b) {
            return f64::NEG_INFINITY;
        }
        let (a1, a2) = self.shapes();
        let w = self.b - self.a;
        let t = (x - self.a) / w;
        (a1 - 1.0) * t.ln() + (a2 - 1.0) * (-t).ln_1p() - crate::special::ln_beta_raw(a1, a2) - w.ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a1, a2) = self.shapes();
        let t: f64 = Beta::new(a1, a2).expect("valid shapes").sample(rng);
        self.a + (self.b - self.a) * t
    }
}

/// Elicited distribution of a model parameter, used to derive the intercept prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elicited {
    /// Normal with the given mean and variance.
    Normal {
        mean: f64,
        var: f64,
    },
    /// Log-normal with the given mean and variance on the original scale.
    LogNormal {
        mean: f64,
        var: f64,
    },
    GBeta(GBetaSpec),
}

/// Mean and variance of β0 = link(X) for X from the elicited distribution.
/// Closed forms for identity/normal, log/log-normal and (g)logit/gBeta with
/// matching bounds; quadrature otherwise.
pub fn intercept_prior_moments(link: Link<f64>, elicited: Elicited) -> Result<(f64, f64)> {
    match (link, elicited) {
        (Link::Identity, Elicited::Normal { mean, var }) => Ok((mean, var)),
        (Link::Log, Elicited::LogNormal { mean, var }) => {
            if !(mean > 0.0 && var > 0.0) {
                return Err(domain("intercept_prior_moments", "log-normal needs mean, var > 0"));
            }
            let s2 = (var / (mean * mean)).ln_1p();
            Ok((mean.ln() - s2 / 2.0, s2))
        }
        (Link::Logit, Elicited::GBeta(g)) if g.a == 0.0 && g.b == 1.0 => Ok(logit_beta_moments(&g)),
        (Link::GLogit { a, b }, Elicited::GBeta(g)) if g.a == a && g.b == b => Ok(logit_beta_moments(&g)),
        _ => intercept_prior_moments_numeric(link, elicited),
    }
}

fn logit_beta_moments(g: &GBetaSpec) -> (f64, f64) {
    let (a1, a2) = g.shapes();
    (digamma_raw(a1) - digamma_raw(a2), trigamma_raw(a1) + trigamma_raw(a2))
}

/// Quadrature version of [`intercept_prior_moments`].
pub fn intercept_prior_moments_numeric(link: Link<f64>, elicited: Elicited) -> Result<(f64, f64)> {
    let (tol_abs, tol_rel) = (1e-14, 1e-12);
    let (m1, m2) = match elicited {
        Elicited::Normal { mean, var } => {
            let sd = var.sqrt();
            let moment = |k: i32| {
                let f = |z: f64| {
                    let x = mean + sd * z;
                    link.link(x).map(|e| e.powi(k)).unwrap_or(f64::NAN) * (-0.5 * z * z - 0.5 * LN_2PI).exp()
                };
                integrate(f, -12.0, 12.0, tol_abs, tol_rel, 400).map(|q| q.value)
            };
            (moment(1)?, moment(2)?)
        }
        Elicited::LogNormal { mean, var } => {
            let s2 = (var / (mean * mean)).ln_1p();
            let (mu_ln, sd) = (mean.ln() - s2 / 2.0, s2.sqrt());
            let moment = |k: i32| {
                let f = |z: f64| {
                    let x = (mu_ln + sd * z).exp();
                    link.link(x).map(|e| e.powi(k)).unwrap_or(f64::NAN) * (-0.5 * z * z - 0.5 * LN_2PI).exp()
                };
                integrate(f, -12.0, 12.0, tol_abs, tol_rel, 400).map(|q| q.value)
            };
            (moment(1)?, moment(2)?)
        }
        Elicited::GBeta(g) => {
            let (a1, a2) = g.shapes();
            let ln_b = crate::special::ln_beta_raw(a1, a2);
            let w = g.b - g.a;
            // Split at 1/2 and substitute t = s^(1/α) on each side so the
            // endpoint powers of the beta density are absorbed.
            let moment = |k: i32| -> Result<f64> {
                let left = |s: f64| {
                    let t = 0.5 * s.powf(1.0 / a1);
                    let x = g.a + w * t;
                    let scale = 0.5_f64.powf(a1) / a1;
                    link.link(x).map(|e| e.powi(k)).unwrap_or(f64::NAN)
                        * ((a2 - 1.0) * (-t).ln_1p() - ln_b).exp()
                        * scale
                };
                let right = |s: f64| {
                    let r = 0.5 * s.powf(1.0 / a2);
                    let x = g.b - w * r;
                    let scale = 0.5_f64.powf(a2) / a2;
                    link.link(x).map(|e| e.powi(k)).unwrap_or(f64::NAN)
                        * ((a1 - 1.0) * (-r).ln_1p() - ln_b).exp()
                        * scale
                };
                let l = integrate(left, 0.0, 1.0, tol_abs, tol_rel, 400)?.value;
                let r = integrate(right, 0.0, 1.0, tol_abs, tol_rel, 400)?.value;
                Ok(l + r)
            };
            (moment(1)?, moment(2)?)
        }
    };
    if !(m1.is_finite() && m2.is_finite()) {
        return Err(domain(
            "intercept_prior_moments",
            "elicited distribution is not supported inside the link range",
        ));
    }
    Ok((m1, m2 - m1 * m1))
}

/// Prior of one covariate-linked parameter block: β0 ~ N(mean, var),
/// slopes ~ N(0, Σ) with Σ = c² P⁻¹ conditioned on the excluded slopes
/// being zero, and indicators iid Bernoulli(p).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrior {
    pub intercept_mean: f64,
    pub intercept_var: f64,
    pub slope_cov: DMatrix<f64>,
    pub inclusion_prob: f64,
}

impl BlockPrior {
    /// Σ = c² P⁻¹.
    pub fn new(intercept_mean: f64, intercept_var: f64, c: f64, p: &DMatrix<f64>, inclusion_prob: f64) -> Result<Self> {
        if !(intercept_var > 0.0) {
            return Err(domain("BlockPrior", format!("intercept variance {intercept_var}")));
        }
        if !(inclusion_prob > 0.0 && inclusion_prob < 1.0) {
            return Err(domain("BlockPrior", format!("inclusion probability {inclusion_prob}")));
        }
        let slope_cov = if p.nrows() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let inv = p
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("prior precision P".into()))?
                .inverse();
            inv * (c * c)
        };
        Ok(Self {
            intercept_mean,
            intercept_var,
            slope_cov,
            inclusion_prob,
        })
    }

    /// P = I of dimension d.
    pub fn identity(intercept_mean: f64, intercept_var: f64, c: f64, d: usize, inclusion_prob: f64) -> Self {
        Self::new(
            intercept_mean,
            intercept_var,
            c,
            &DMatrix::identity(d, d),
            inclusion_prob,
        )
        .expect("identity precision is valid")
    }

    pub fn dim(&self) -> usize {
        self.slope_cov.nrows()
    }
}

/// Coefficients of one block. Excluded slopes are held at exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub beta0: f64,
    pub beta: DVector<f64>,
    pub indicators: Vec<bool>,
}

impl ParamBlock {
    pub fn new(beta0: f64, beta: DVector<f64>, indicators: Vec<bool>) -> Result<Self> {
        if beta.len() != indicators.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} slopes but {} indicators",
                beta.len(),
                indicators.len()
            )));
        }
        let mut beta = beta;
        for (b, &on) in beta.iter_mut().zip(&indicators) {
            if !on {
                *b = 0.0;
            }
        }
        Ok(Self {
            beta0,
            beta,
            indicators,
        })
    }

    pub fn intercept_only(beta0: f64, d: usize) -> Self {
        Self {
            beta0,
            beta: DVector::zeros(d),
            indicators: vec![true; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Positions of included slopes.
    pub fn active(&self) -> Vec<usize> {
        self.indicators
            .iter()
            .enumerate()
            .filter_map(|(j, &on)| on.then_some(j))
            .collect()
    }

    /// (β0, included slopes) as one vector.
    pub fn packed(&self) -> DVector<f64> {
        let act = self.active();
        DVector::from_iterator(
            1 + act.len(),
            std::iter::once(self.beta0).chain(act.iter().map(|&j| self.beta[j])),
        )
    }

    /// Inverse of [`ParamBlock::packed`] under the given indicators.
    pub fn unpacked(packed: &DVector<f64>, indicators: &[bool]) -> Self {
        let mut beta = DVector::zeros(indicators.len());
        let mut k = 1;
        for (j, &on) in indicators.iter().enumerate() {
            if on {
                beta[j] = packed[k];
                k += 1;
            }
        }
        Self {
            beta0: packed[0],
            beta,
            indicators: indicators.to_vec(),
        }
    }

    /// Linear predictor β0 + x'β for one covariate row.
    pub fn eta(&self, x: &[f64]) -> f64 {
        self.beta0 + x.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Mean and covariance of the included slopes given excluded ones at zero.
pub fn slope_conditional_moments(cov: &DMatrix<f64>, indicators: &[bool]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let inc: Vec<usize> = (0..indicators.len()).filter(|&j| indicators[j]).collect();
    let exc: Vec<usize> = (0..indicators.len()).filter(|&j| !indicators[j]).collect();
    let pick =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])]);
    let s_ii = pick(&inc, &inc);
    if exc.is_empty() || inc.is_empty() {
        return Ok((DVector::zeros(inc.len()), s_ii));
    }
    let s_ie = pick(&inc, &exc);
    let s_ee = pick(&exc, &exc);
    let chol = s_ee
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("excluded slope covariance".into()))?;
    // prior mean is zero and excluded slopes are zero, so the mean stays zero
    let cond = &s_ii - &s_ie * chol.solve(&s_ie.transpose());
    Ok((DVector::zeros(inc.len()), cond))
}

/// Log prior of the included slopes plus the Bernoulli mass of the indicators.
pub fn slope_prior_logdensity(block: &ParamBlock, prior: &BlockPrior) -> Result<f64> {
    if block.dim() != prior.dim() {
        return Err(Error::DimensionMismatch(format!(
            "block has {} slopes, prior {}",
            block.dim(),
            prior.dim()
        )));
    }
    let p = prior.inclusion_prob;
    let mut lp: f64 = block
        .indicators
        .iter()
        .map(|&on| if on { p.ln() } else { (-p).ln_1p() })
        .sum();
    let act = block.active();
    if act.is_empty() {
        return Ok(lp);
    }
    let (mean, cov) = slope_conditional_moments(&prior.slope_cov, &block.indicators)?;
    let x = DVector::from_iterator(act.len(), act.iter().map(|&j| block.beta[j])) - mean;
    lp += mvn_logpdf_centered(&x, &cov)?;
    Ok(lp)
}

/// Log prior of the intercept.
pub fn intercept_prior_logdensity(beta0: f64, prior: &BlockPrior) -> f64 {
    let z = beta0 - prior.intercept_mean;
    -0.5 * (LN_2PI + prior.intercept_var.ln() + z * z / prior.intercept_var)
}

/// Full block log prior: intercept, slopes and indicators.
pub fn block_prior_logdensity(block: &ParamBlock, prior: &BlockPrior) -> Result<f64> {
    Ok(intercept_prior_logdensity(block.beta0, prior) + slope_prior_logdensity(block, prior)?)
}

/// Gradient and Hessian of the block log prior with respect to the packed
/// coefficients (β0, included slopes), indicators held fixed.
pub fn block_prior_grad_hess(block: &ParamBlock, prior: &BlockPrior) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let act = block.active();
    let k = 1 + act.len();
    let mut g = DVector::zeros(k);
    let mut h = DMatrix::zeros(k, k);
    g[0] = -(block.beta0 - prior.intercept_mean) / prior.intercept_var;
    h[(0, 0)] = -1.0 / prior.intercept_var;
    if !act.is_empty() {
        let (mean, cov) = slope_conditional_moments(&prior.slope_cov, &block.indicators)?;
        let prec = cov
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("conditional slope covariance".into()))?
            .inverse();
        let x = DVector::from_iterator(act.len(), act.iter().map(|&j| block.beta[j])) - mean;
        let gs = -(&prec * x);
        g.rows_mut(1, act.len()).copy_from(&gs);
        h.view_mut((1, 1), (act.len(), act.len())).copy_from(&(-prec));
    }
    Ok((g, h))
}

fn mvn_logpdf_centered(x: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("slope covariance".into()))?;
    let l = chol.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(x)
        .ok_or_else(|| Error::Numerical("triangular solve".into()))?;
    Ok(-0.5 * (x.len() as f64 * LN_2PI + logdet + z.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn link_values() {
        let g = Link::glogit(0.2, 1.0).unwrap();
        assert_relative_eq!(g.eval(0.0), 0.6);
        let plain = Link::<f64>::Logit;
        assert_relative_eq!(
            Link::glogit(0.0, 1.0).unwrap().eval(1.7),
            plain.eval(1.7),
            epsilon = 1e-15
        );
        for link in [Link::Identity, Link::Log, Link::Logit, g] {
            for &eta in &[-2.0, 0.3, 1.9] {
                let v = link.eval(eta);
                assert_relative_eq!(link.link(v).unwrap(), eta, epsilon = 1e-12);
                assert_relative_eq!(link.jacobian(v).unwrap() * link.deriv(eta), 1.0, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(Link::<f64>::Log.jacobian(2.5).unwrap(), 0.4);
        assert!(Link::<f64>::Log.link(-1.0).is_err());
        assert!(Link::glogit(1.0, 0.5).is_err());
    }

    #[test]
    fn conditional_bound() {
        assert_relative_eq!(conditional_tau_bound(0.5_f64), 0.5, epsilon = 1e-15);
        assert!(conditional_tau_bound(1e-300_f64) < 0.01);
        let h = 1e-6;
        let fd = (conditional_tau_bound(0.4 + h) - conditional_tau_bound(0.4 - h)) / (2.0 * h);
        assert_relative_eq!(conditional_tau_bound_deriv(0.4), fd, max_relative = 1e-8);
    }

    #[test]
    fn intercept_moments_closed_forms() {
        let sym = GBetaSpec::new(0.0, 1.0, 0.5, 0.1).unwrap();
        let (m, _) = intercept_prior_moments(Link::Logit, Elicited::GBeta(sym)).unwrap();
        assert!(m.abs() < 1e-14);
        let (m, v) = intercept_prior_moments(Link::Log, Elicited::LogNormal { mean: 1.0, var: 1.0 }).unwrap();
        assert_relative_eq!(m, -std::f64::consts::LN_2 / 2.0, epsilon = 1e-15);
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for &(m, s) in &[(0.3, 0.1), (0.3, 0.2), (0.8, 0.05)] {
            let g = GBetaSpec::new(0.0, 1.0, m, s).unwrap();
            let (cm, cv) = intercept_prior_moments(Link::Logit, Elicited::GBeta(g)).unwrap();
            let (qm, qv) = intercept_prior_moments_numeric(Link::Logit, Elicited::GBeta(g)).unwrap();
            assert_relative_eq!(cm, qm, epsilon = 1e-8);
            assert_relative_eq!(cv, qv, epsilon = 1e-8);
        }
        let e = Elicited::LogNormal { mean: 2.0, var: 0.5 };
        let (cm, cv) = intercept_prior_moments(Link::Log, e).unwrap();
        let (qm, qv) = intercept_prior_moments_numeric(Link::Log, e).unwrap();
        assert_relative_eq!(cm, qm, epsilon = 1e-8);
        assert_relative_eq!(cv, qv, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_beta_elicitation() {
        assert!(matches!(GBetaSpec::new(0.0, 1.0, 0.3, 0.5), Err(Error::Infeasible(_))));
    }

    #[test]
    fn standard_slope_prior_at_origin() {
        let prior = BlockPrior::identity(0.0, 1.0, 10.0, 3, 0.5);
        let block = ParamBlock::intercept_only(0.0, 3);
        let lp = slope_prior_logdensity(&block, &prior).unwrap() - 3.0 * 0.5f64.ln();
        assert_relative_eq!(lp, -1.5 * (2.0 * std::f64::consts::PI * 100.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn conditional_moments_by_hand() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let (m, c) = slope_conditional_moments(&cov, &[true, false]).unwrap();
        assert_eq!(m[0], 0.0);
        assert_relative_eq!(c[(0, 0)], 2.0 - 0.36, epsilon = 1e-14);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let (_, c) = slope_conditional_moments(&diag, &[false, true]).unwrap();
        assert_eq!(c[(0, 0)], 9.0);
    }

    #[test]
    fn pack_round_trip() {
        let b = ParamBlock::new(0.5, DVector::from_vec(vec![1.0, 2.0, 3.0]), vec![true, false, true]).unwrap();
        assert_eq!(b.beta[1], 0.0);
        let p = b.packed();
        assert_eq!(p.as_slice(), &[0.5, 1.0, 3.0]);
        assert_eq!(ParamBlock::unpacked(&p, &b.indicators), b);
    }

    #[test]
    fn prior_gradient_matches_differences() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let prior = BlockPrior {
            intercept_mean: 0.4,
            intercept_var: 2.0,
            slope_cov: cov,
            inclusion_prob: 0.3,
        };
        let b = ParamBlock::new(0.1, DVector::from_vec(vec![0.7, 0.0, -0.4]), vec![true, false, true]).unwrap();
        let (g, h) = block_prior_grad_hess(&b, &prior).unwrap();
        let p = b.packed();
        let f = |q: &DVector<f64>| block_prior_logdensity(&ParamBlock::unpacked(q, &b.indicators), &prior).unwrap();
        for i in 0..p.len() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += 1e-5;
            dn[i] -= 1e-5;
            assert_relative_eq!(g[i], (f(&up) - f(&dn)) / 2e-5, epsilon = 1e-7);
        }
        assert!(h[(0, 0)] < 0.0);
    }
}

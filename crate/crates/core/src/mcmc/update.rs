//! One Metropolis-Hastings update of a block: indicators flip with
//! probability p_prop each, then the coefficients are drawn from a t
//! proposal centered at the Newton approximation from the current draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::newton::{newton_proposal, NewtonProposal};
use super::{BlockTarget, ProposalConfig};
use crate::error::Result;
use crate::links::ParamBlock;
use crate::posterior::Order;
use crate::special::ln_gamma;

#[derive(Debug, Clone)]
pub struct MhOutcome {
    /// The new block (the old one when rejected).
    pub block: ParamBlock,
    pub accepted: bool,
    pub log_ratio: f64,
    /// The proposal could not be evaluated and the move was rejected.
    pub degenerate: bool,
    /// A proposal fell back to a random walk.
    pub fallback: bool,
}

/// Flip each indicator independently with probability `p_prop`.
pub fn propose_indicators<R: Rng + ?Sized>(current: &[bool], p_prop: f64, rng: &mut R) -> Vec<bool> {
    current
        .iter()
        .map(|&on| if rng.random::<f64>() < p_prop { !on } else { on })
        .collect()
}

/// Accept when log U < log ratio.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Log density of the multivariate t with location `m`, scale `s`, `df`.
pub fn mvt_logpdf(x: &DVector<f64>, m: &DVector<f64>, s: &DMatrix<f64>, df: f64) -> Option<f64> {
    let k = x.len() as f64;
    let chol = s.clone().cholesky()?;
    let z = chol.l().solve_lower_triangular(&(x - m))?;
    let q = z.norm_squared();
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let v = ln_gamma(0.5 * (df + k))
        - ln_gamma(0.5 * df)
        - 0.5 * k * (df * std::f64::consts::PI).ln()
        - 0.5 * log_det
        - 0.5 * (df + k) * (q / df).ln_1p();
    v.is_finite().then_some(v)
}

pub fn mvt_sample<R: Rng + ?Sized>(m: &DVector<f64>, s: &DMatrix<f64>, df: f64, rng: &mut R) -> Option<DVector<f64>> {
    let chol = s.clone().cholesky()?;
    let z = DVector::from_fn(m.len(), |_, _| StandardNormal.sample(rng));
    let w: f64 = ChiSquared::new(df).ok()?.sample(rng);
    Some(m + chol.l() * z * (df / w).sqrt())
}

// Packed coefficients of `block` under other indicators; slopes entering
// start at zero.
fn repack(block: &ParamBlock, indicators: &[bool]) -> DVector<f64> {
    let mut v = vec![block.beta0];
    v.extend(indicators.iter().enumerate().filter(|(_, &on)| on).map(|(j, _)| {
        if block.indicators[j] {
            block.beta[j]
        } else {
            0.0
        }
    }));
    DVector::from_vec(v)
}

fn proposal_logpdf(p: &NewtonProposal, x: &DVector<f64>, df: f64) -> Option<f64> {
    mvt_logpdf(x, &p.location, &p.scale, df)
}

/// One MH update of a block. `select` enables indicator proposals.
pub fn mh_update<T: BlockTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &ParamBlock,
    select: bool,
    config: &ProposalConfig,
    rng: &mut R,
) -> Result<MhOutcome> {
    let reject = |log_ratio: f64, degenerate: bool, fallback: bool| MhOutcome {
        block: current.clone(),
        accepted: false,
        log_ratio,
        degenerate,
        fallback,
    };
    let new_ind = if select {
        propose_indicators(&current.indicators, config.p_prop, rng)
    } else {
        current.indicators.clone()
    };

    let fwd = newton_proposal(target, &repack(current, &new_ind), &new_ind, config)?;
    let Some(beta_new) = mvt_sample(&fwd.location, &fwd.scale, config.df, rng) else {
        return Ok(reject(f64::NAN, true, fwd.fallback));
    };
    let Some(q_fwd) = proposal_logpdf(&fwd, &beta_new, config.df) else {
        return Ok(reject(f64::NAN, true, fwd.fallback));
    };
    let proposed = ParamBlock::unpacked(&beta_new, &new_ind);
    let lp_new = target.eval(&beta_new, &new_ind, Order::Value)?.value;
    if !lp_new.is_finite() {
        return Ok(reject(f64::NEG_INFINITY, false, fwd.fallback));
    }
    let beta_cur = current.packed();
    let lp_cur = target.eval(&beta_cur, &current.indicators, Order::Value)?.value;

    let rev = newton_proposal(
        target,
        &repack(&proposed, &current.indicators),
        &current.indicators,
        config,
    )?;
    let fallback = fwd.fallback || rev.fallback;
    let Some(q_rev) = proposal_logpdf(&rev, &beta_cur, config.df) else {
        return Ok(reject(f64::NAN, true, fallback));
    };
    // Indicator proposal probabilities are symmetric and cancel.
    let log_ratio = lp_new - lp_cur + q_rev - q_fwd;
    if !log_ratio.is_finite() && log_ratio != f64::NEG_INFINITY {
        return Ok(reject(log_ratio, true, fallback));
    }
    if mh_accept(log_ratio, rng) {
        Ok(MhOutcome {
            block: proposed,
            accepted: true,
            log_ratio,
            degenerate: false,
            fallback,
        })
    } else {
        Ok(reject(log_ratio, false, fallback))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mvt_density_in_one_dimension() {
        // t_6 at 1 with unit scale
        let x = DVector::from_vec(vec![1.0]);
        let m = DVector::zeros(1);
        let s = DMatrix::identity(1, 1);
        let v = mvt_logpdf(&x, &m, &s, 6.0).unwrap();
        let expect =
            ln_gamma(3.5) - ln_gamma(3.0) - 0.5 * (6.0 * std::f64::consts::PI).ln() - 3.5 * (1.0f64 / 6.0).ln_1p();
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn acceptance_handles_extreme_log_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mh_accept(700.0, &mut rng));
        assert!(!mh_accept(-700.0, &mut rng));
        assert!(!mh_accept(f64::NEG_INFINITY, &mut rng));
    }

    #[test]
    fn repack_zeroes_entering_slopes() {
        let b = ParamBlock::new(1.0, DVector::from_vec(vec![2.0, 3.0, 4.0]), vec![true, false, true]).unwrap();
        let v = repack(&b, &[false, true, true]);
        assert_eq!(v.as_slice(), &[1.0, 0.0, 4.0]);
    }
}

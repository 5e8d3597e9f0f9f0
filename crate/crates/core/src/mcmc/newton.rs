//! Finite-step Newton approximation of a block's conditional mode and
//! curvature, used as the location and scale of the t proposal.

use nalgebra::{DMatrix, DVector};

use super::{BlockTarget, ProposalConfig};
use crate::error::Result;
use crate::posterior::Order;

const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct NewtonProposal {
    pub location: DVector<f64>,
    /// Negative inverse of the regularized Hessian at `location`.
    pub scale: DMatrix<f64>,
    /// Log posterior at `location`.
    pub value: f64,
    /// The Hessian could not be repaired and `scale` is the random-walk
    /// covariance around the start.
    pub fallback: bool,
    pub steps: usize,
}

/// Negative definite version of a symmetric Hessian: eigenvalues λ become
/// -max(|λ|, 1e-8). Returns the covariance -H⁻¹ of the repaired matrix.
pub fn regularize_hessian(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = h.clone().symmetric_eigen();
    let inv = eig.eigenvalues.map(|l| 1.0 / l.abs().max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let cov = v * DMatrix::from_diagonal(&inv) * v.transpose();
    cov.iter().all(|x| x.is_finite()).then_some(cov)
}

fn fallback(start: &DVector<f64>, value: f64, config: &ProposalConfig) -> NewtonProposal {
    let k = start.len();
    NewtonProposal {
        location: start.clone(),
        scale: DMatrix::identity(k, k) * (config.rw_scale * config.rw_scale),
        value,
        fallback: true,
        steps: 0,
    }
}

/// Up to `config.newton_steps` Newton steps from `start`, halving a step
/// while it lowers the log posterior.
pub fn newton_proposal<T: BlockTarget + ?Sized>(
    target: &T,
    start: &DVector<f64>,
    indicators: &[bool],
    config: &ProposalConfig,
) -> Result<NewtonProposal> {
    let mut x = start.clone();
    let mut e = target.eval(&x, indicators, Order::Hessian)?;
    if !e.value.is_finite() {
        return Ok(fallback(start, e.value, config));
    }
    let mut steps = 0;
    for _ in 0..config.newton_steps {
        let (Some(g), Some(h)) = (e.grad.as_ref(), e.hess.as_ref()) else {
            break;
        };
        let Some(cov) = regularize_hessian(h) else {
            return Ok(fallback(start, e.value, config));
        };
        let dir = &cov * g;
        if g.dot(&dir) <= config.newton_tol {
            break;
        }
        let mut t = 1.0;
        let mut moved = None;
        for _ in 0..=config.max_halvings {
            let trial = &x + &dir * t;
            let v = target.eval(&trial, indicators, Order::Value)?.value;
            if v >= e.value {
                moved = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = moved else {
            break;
        };
        let ne = target.eval(&next, indicators, Order::Hessian)?;
        if !ne.value.is_finite() {
            break;
        }
        x = next;
        e = ne;
        steps += 1;
    }
    let Some(scale) = e.hess.as_ref().and_then(regularize_hessian) else {
        return Ok(fallback(start, e.value, config));
    };
    Ok(NewtonProposal {
        location: x,
        scale,
        value: e.value,
        fallback: false,
        steps,
    })
}

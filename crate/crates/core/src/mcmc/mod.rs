//! Metropolis-Hastings within Gibbs with Newton-tailored t proposals and
//! joint updates of coefficients and variable-selection indicators.

pub mod diagnostics;
pub mod init;
pub mod newton;
pub mod sampler;
pub mod update;

pub use diagnostics::{inefficiency_factor, ChainDiagnostics};
pub use init::{init_by_optimization, InitOptions, InitReport};
pub use newton::{newton_proposal, regularize_hessian, NewtonProposal};
pub use sampler::{
    blocks_from_row, draw_names, draw_row, gibbs_sweep, run_chain, run_chains, ChainConfig, ChainOutput, SweepStats,
};
pub use update::{mh_accept, mh_update, mvt_logpdf, mvt_sample, propose_indicators, MhOutcome};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::posterior::{BlockEval, BlockId, ChainState, Model, Order};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    /// Newton steps from the current draw.
    pub newton_steps: usize,
    /// Degrees of freedom of the t proposal.
    pub df: f64,
    /// Probability that an indicator is proposed to flip.
    pub p_prop: f64,
    /// Step halvings allowed per Newton step.
    pub max_halvings: usize,
    /// Newton stops early once g'Σg falls below this.
    pub newton_tol: f64,
    /// Standard deviation of the random-walk fallback.
    pub rw_scale: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            newton_steps: 3,
            df: 6.0,
            p_prop: 0.2,
            max_halvings: 10,
            newton_tol: 1e-10,
            rw_scale: 0.1,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.df > 2.0 && self.df.is_finite()) {
            return Err(Error::Config(format!("proposal df = {} must exceed 2", self.df)));
        }
        if !(0.0..=1.0).contains(&self.p_prop) {
            return Err(Error::Config(format!("p_prop = {} outside [0, 1]", self.p_prop)));
        }
        if !(self.rw_scale > 0.0) || !(self.newton_tol >= 0.0) {
            return Err(Error::Config(
                "rw_scale must be positive and newton_tol non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Conditional log posterior of one block over packed coefficients
/// (intercept, then the slopes switched on by `indicators`).
pub trait BlockTarget {
    fn eval(&self, packed: &DVector<f64>, indicators: &[bool], order: Order) -> Result<BlockEval>;
}

/// One block of a [`Model`] with every other block held at `state`.
pub struct ModelBlock<'a> {
    pub model: &'a Model,
    pub state: &'a ChainState,
    pub block: BlockId,
}

impl BlockTarget for ModelBlock<'_> {
    fn eval(&self, packed: &DVector<f64>, indicators: &[bool], order: Order) -> Result<BlockEval> {
        self.model.block_eval(self.state, self.block, packed, indicators, order)
    }
}

/// Target from a log density and its gradient. The Hessian is a central
/// difference of the gradient.
pub struct ClosureTarget<F, G> {
    pub logpost: F,
    pub grad: G,
    pub step: f64,
}

impl<F, G> ClosureTarget<F, G>
where
    F: Fn(&DVector<f64>, &[bool]) -> f64,
    G: Fn(&DVector<f64>, &[bool]) -> DVector<f64>,
{
    pub fn new(logpost: F, grad: G) -> Self {
        Self {
            logpost,
            grad,
            step: 1e-5,
        }
    }
}

impl<F, G> BlockTarget for ClosureTarget<F, G>
where
    F: Fn(&DVector<f64>, &[bool]) -> f64,
    G: Fn(&DVector<f64>, &[bool]) -> DVector<f64>,
{
    fn eval(&self, packed: &DVector<f64>, indicators: &[bool], order: Order) -> Result<BlockEval> {
        let value = (self.logpost)(packed, indicators);
        let mut out = BlockEval {
            value: if value.is_finite() { value } else { f64::NEG_INFINITY },
            grad: None,
            hess: None,
            fd_fallbacks: 0,
        };
        if !value.is_finite() || order == Order::Value {
            return Ok(out);
        }
        let g = (self.grad)(packed, indicators);
        if order == Order::Hessian {
            let k = packed.len();
            let mut h = DMatrix::zeros(k, k);
            for j in 0..k {
                let step = self.step * packed[j].abs().max(1.0);
                let mut xp = packed.clone();
                xp[j] += step;
                let mut xm = packed.clone();
                xm[j] -= step;
                let col = ((self.grad)(&xp, indicators) - (self.grad)(&xm, indicators)) / (2.0 * step);
                h.set_column(j, &col);
            }
            out.hess = Some((&h + h.transpose()) * 0.5);
        }
        out.grad = Some(g);
        Ok(out)
    }
}

//! Prior elicitation for all ten blocks and a reference synthetic design.

use nalgebra::DVector;

use crate::copula::Rotation;
use crate::error::Result;
use crate::links::{intercept_prior_moments, BlockPrior, Elicited, GBetaSpec, Link, ParamBlock};
use crate::posterior::{BlockId, ModelData, TauLinkMode, N_BLOCKS};
use crate::simulate::SimulationSpec;
use crate::split_t::{MarginParam, MARGIN_LINKS};

/// Elicited parameter distributions (covariates at their means) and the
/// slope / indicator prior shared by all blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSettings {
    pub mu: Elicited,
    pub phi: Elicited,
    pub nu: Elicited,
    pub kappa: Elicited,
    pub lambda_l: GBetaSpec,
    /// Distribution of logistic(η_τ): τ itself under the truncated link,
    /// (τ - a(λ_L)) / (1 - a(λ_L)) under the conditional link.
    pub tau: GBetaSpec,
    /// Σ = c² I for the slopes.
    pub slope_scale: f64,
    pub inclusion_prob: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            mu: Elicited::Normal { mean: 0.0, var: 1.0 },
            phi: Elicited::LogNormal { mean: 1.0, var: 1.0 },
            nu: Elicited::LogNormal { mean: 10.0, var: 50.0 },
            kappa: Elicited::LogNormal { mean: 1.0, var: 0.25 },
            lambda_l: GBetaSpec::new(0.0, 1.0, 0.3, 0.2).expect("valid default"),
            tau: GBetaSpec::new(0.0, 1.0, 0.3, 0.2).expect("valid default"),
            slope_scale: 10.0,
            inclusion_prob: 0.5,
        }
    }
}

impl PriorSettings {
    /// Block priors in [`BlockId::index`] order.
    pub fn block_priors(&self, data: &ModelData, lambda_link: Link<f64>) -> Result<Vec<BlockPrior>> {
        let mut out = Vec::with_capacity(N_BLOCKS);
        for b in BlockId::SWEEP {
            let (link, elicited) = match b {
                BlockId::Margin { param, .. } => {
                    let e = match param {
                        MarginParam::Mu => self.mu,
                        MarginParam::Phi => self.phi,
                        MarginParam::Nu => self.nu,
                        MarginParam::Kappa => self.kappa,
                    };
                    (MARGIN_LINKS[param.index()], e)
                }
                BlockId::LambdaL => (lambda_link, Elicited::GBeta(self.lambda_l)),
                BlockId::Tau => (Link::Logit, Elicited::GBeta(self.tau)),
            };
            let (mean, var) = intercept_prior_moments(link, elicited)?;
            let d = data.design(b).ncols();
            out.push(BlockPrior::identity(
                mean,
                var,
                self.slope_scale,
                d,
                self.inclusion_prob,
            ));
        }
        Ok(out)
    }
}

/// Synthetic design with two covariates per margin, so four copula
/// covariates. λ_L and τ each depend on one covariate from each margin
/// (`m1:x1`, `m2:x1`); `m1:x2` and `m2:x2` have zero copula slopes.
pub fn reference_design(n: usize) -> SimulationSpec {
    let blk = |b0: f64, beta: &[f64]| {
        ParamBlock::new(b0, DVector::from_column_slice(beta), vec![true; beta.len()]).expect("matching lengths")
    };
    let blocks = vec![
        blk(0.05, &[0.3, 0.0]),
        blk(-0.1, &[0.3, 0.0]),
        blk(8f64.ln(), &[0.0, 0.0]),
        blk(0.0, &[0.0, 0.0]),
        blk(0.0, &[0.0, 0.25]),
        blk(0.1, &[0.0, 0.3]),
        blk(6f64.ln(), &[0.0, 0.0]),
        blk(-0.1, &[0.0, 0.0]),
        blk(-0.8, &[0.8, 0.0, -0.6, 0.0]),
        blk(0.0, &[0.7, 0.0, 0.6, 0.0]),
    ];
    SimulationSpec {
        n,
        n_covariates: [2, 2],
        ar: 0.5,
        blocks,
        lambda_link: Link::Logit,
        tau_mode: TauLinkMode::Conditional,
        rotation: Rotation::R0,
    }
}

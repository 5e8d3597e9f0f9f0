//! Split-t log-likelihood of one data column with covariate-linked parameters.

use nalgebra::{DMatrix, DVector};

use super::{split_t_logpdf, split_t_logpdf_grads, MarginParam, SplitTParams};
use crate::error::{Error, Result};
use crate::links::{Link, ParamBlock};

/// Links of (μ, φ, ν, κ): identity for the location, log for the rest.
pub const MARGIN_LINKS: [Link<f64>; 4] = [Link::Identity, Link::Log, Link::Log, Link::Log];

/// Coefficient blocks of the four margin parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLinkSet {
    pub mu: ParamBlock,
    pub phi: ParamBlock,
    pub nu: ParamBlock,
    pub kappa: ParamBlock,
}

impl MarginLinkSet {
    pub fn block(&self, which: MarginParam) -> &ParamBlock {
        match which {
            MarginParam::Mu => &self.mu,
            MarginParam::Phi => &self.phi,
            MarginParam::Nu => &self.nu,
            MarginParam::Kappa => &self.kappa,
        }
    }

    pub fn block_mut(&mut self, which: MarginParam) -> &mut ParamBlock {
        match which {
            MarginParam::Mu => &mut self.mu,
            MarginParam::Phi => &mut self.phi,
            MarginParam::Nu => &mut self.nu,
            MarginParam::Kappa => &mut self.kappa,
        }
    }

    /// Split-t parameters of every row of `x`.
    pub fn params(&self, x: &DMatrix<f64>) -> Result<Vec<SplitTParams<f64>>> {
        let etas = MarginParam::ALL
            .iter()
            .map(|&w| linear_predictor(self.block(w), x))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..x.nrows())
            .map(|i| SplitTParams {
                mu: MARGIN_LINKS[0].eval(etas[0][i]),
                phi: MARGIN_LINKS[1].eval(etas[1][i]),
                nu: MARGIN_LINKS[2].eval(etas[2][i]),
                kappa: MARGIN_LINKS[3].eval(etas[3][i]),
            })
            .collect())
    }
}

/// β0 + Xβ for every row of `x`.
pub fn linear_predictor(block: &ParamBlock, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != block.dim() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, block has {} slopes",
            x.ncols(),
            block.dim()
        )));
    }
    let mut eta = x * &block.beta;
    eta.add_scalar_mut(block.beta0);
    Ok(eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoglik {
    pub loglik: f64,
    /// Gradient over (β0, β1..βd) for μ, φ, ν, κ in that order.
    pub grad: [DVector<f64>; 4],
}

/// Σ_i log f(y_i) and its gradient with respect to every coefficient.
pub fn margin_loglik_and_grad(y: &[f64], x: &DMatrix<f64>, links: &MarginLinkSet) -> Result<MarginLoglik> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations but {} covariate rows",
            y.len(),
            x.nrows()
        )));
    }
    let params = links.params(x)?;
    let d = x.ncols();
    let mut grad: [DVector<f64>; 4] = std::array::from_fn(|_| DVector::zeros(d + 1));
    let mut loglik = 0.0;
    for (i, (&yi, p)) in y.iter().zip(&params).enumerate() {
        loglik += split_t_logpdf(yi, *p);
        let g = split_t_logpdf_grads(yi, *p);
        for w in MarginParam::ALL {
            // identity link: dθ/dη = 1; log link: dθ/dη = θ
            let chain = if w == MarginParam::Mu { 1.0 } else { p.get(w) };
            let s = g.get(w) * chain;
            let gw = &mut grad[w.index()];
            gw[0] += s;
            for j in 0..d {
                gw[j + 1] += s * x[(i, j)];
            }
        }
    }
    Ok(MarginLoglik { loglik, grad })
}

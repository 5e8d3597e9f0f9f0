//! Synthetic data from the full model: AR(1) covariates, covariate-linked
//! margins and copula features, copula pairs by conditional inversion and
//! split-t quantiles.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::copula::{delta_from_lambda_l, jc_sample_with, CopulaNatural, Rotation, TauGrid, UnitPair};
use crate::error::{domain, Error, Result};
use crate::links::{conditional_tau_bound, logistic, Link, ParamBlock};
use crate::posterior::{BlockId, ModelData, TauLinkMode, N_BLOCKS};
use crate::split_t::{split_t_quantile, MarginParam, SplitTParams, MARGIN_LINKS};

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: usize,
    /// Covariates of margin 1 and margin 2; the copula uses both.
    pub n_covariates: [usize; 2],
    /// AR(1) coefficient of every covariate (unit stationary variance).
    pub ar: f64,
    /// True coefficients in [`BlockId::index`] order.
    pub blocks: Vec<ParamBlock>,
    pub lambda_link: Link<f64>,
    pub tau_mode: TauLinkMode,
    pub rotation: Rotation,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: ModelData,
    pub lambda_l: Vec<f64>,
    pub tau: Vec<f64>,
    pub u: [Vec<f64>; 2],
}

fn covariate_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}x{j}")).collect()
}

/// Draw AR(1) covariates started from their stationary distribution.
pub fn ar_covariates<R: Rng + ?Sized>(n: usize, d: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, d);
    let sd = (1.0 - rho * rho).sqrt();
    for j in 0..d {
        let mut prev: f64 = StandardNormal.sample(rng);
        for i in 0..n {
            if i > 0 {
                let e: f64 = StandardNormal.sample(rng);
                prev = rho * prev + sd * e;
            }
            x[(i, j)] = prev;
        }
    }
    x
}

pub fn simulate(spec: &SimulationSpec, grid: &Arc<TauGrid<f64>>, seed: u64) -> Result<SimulatedData> {
    if spec.blocks.len() != N_BLOCKS {
        return Err(Error::Config(format!(
            "{} true blocks, expected {N_BLOCKS}",
            spec.blocks.len()
        )));
    }
    if !(spec.ar.abs() < 1.0) {
        return Err(domain("simulate", format!("AR coefficient {}", spec.ar)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let [d1, d2] = spec.n_covariates;
    let x1 = ar_covariates(n, d1, spec.ar, &mut rng);
    let x2 = ar_covariates(n, d2, spec.ar, &mut rng);
    let dims = |b: BlockId| {
        if b.design() == 0 {
            d1
        } else if b.design() == 1 {
            d2
        } else {
            d1 + d2
        }
    };
    for b in BlockId::SWEEP {
        if spec.blocks[b.index()].dim() != dims(b) {
            return Err(Error::DimensionMismatch(format!(
                "true block {} has {} slopes, design has {}",
                b.name(),
                spec.blocks[b.index()].dim(),
                dims(b)
            )));
        }
    }
    let row = |x: &DMatrix<f64>, i: usize| x.row(i).iter().copied().collect::<Vec<f64>>();
    let mut y = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut us = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut lambda_l = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for i in 0..n {
        let r1 = row(&x1, i);
        let r2 = row(&x2, i);
        let rc: Vec<f64> = r1.iter().chain(&r2).copied().collect();
        let eta = |b: BlockId| {
            let r = match b.design() {
                0 => &r1,
                1 => &r2,
                _ => &rc,
            };
            spec.blocks[b.index()].eta(r)
        };
        let lam = spec.lambda_link.eval(eta(BlockId::LambdaL));
        let delta = delta_from_lambda_l(lam)?;
        let t = match spec.tau_mode {
            TauLinkMode::Conditional => {
                let a = conditional_tau_bound(lam);
                a + (1.0 - a) * logistic(eta(BlockId::Tau))
            }
            TauLinkMode::Truncated => logistic(eta(BlockId::Tau)),
        };
        let theta = grid.theta_for(delta, t)?;
        let pair = jc_sample_with(CopulaNatural { theta, delta }, 1, &mut rng)?[0];
        // undo the rotation: the rotated pair follows the copula
        let p = spec.rotation.apply(pair);
        let p = UnitPair {
            u: p.u.clamp(1e-15, 1.0 - 1e-15),
            v: p.v.clamp(1e-15, 1.0 - 1e-15),
        };
        for (m, q) in [p.u, p.v].into_iter().enumerate() {
            let param = |w: MarginParam| MARGIN_LINKS[w.index()].eval(eta(BlockId::Margin { margin: m, param: w }));
            let st = SplitTParams::new(
                param(MarginParam::Mu),
                param(MarginParam::Phi),
                param(MarginParam::Nu),
                param(MarginParam::Kappa),
            )?;
            y[m].push(split_t_quantile(q, st)?);
            us[m].push(q);
        }
        lambda_l.push(lam);
        tau.push(t);
    }
    let data = ModelData::with_union(y, x1, x2, covariate_names("", d1), covariate_names("", d2))?;
    Ok(SimulatedData {
        data,
        lambda_l,
        tau,
        u: us,
    })
}

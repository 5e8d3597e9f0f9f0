//! Starting values by block-wise Newton ascent on the joint posterior.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::condition::ArmijoCondition;
use argmin::solver::linesearch::BacktrackingLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DVector;

use super::newton::newton_proposal;
use super::{ModelBlock, ProposalConfig};
use crate::error::{Error, Result};
use crate::links::{Link, ParamBlock};
use crate::posterior::{BlockId, ChainState, Model, TauLinkMode};
use crate::split_t::MarginParam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOptions {
    /// Block-wise Newton rounds before the joint quasi-Newton phase.
    pub max_rounds: usize,
    /// Stop the block rounds when one raises the log posterior by less than this.
    pub tol: f64,
    /// Newton steps per block per round.
    pub newton_steps: usize,
    /// L-BFGS iterations over all optimized coefficients.
    pub lbfgs_iters: usize,
    /// Converged when every gradient entry is below this in magnitude.
    pub gtol: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            tol: 1e-6,
            newton_steps: 20,
            lbfgs_iters: 1000,
            gtol: 1e-6,
        }
    }
}

const LBFGS_MEMORY: usize = 12;
const LBFGS_TOL_COST: f64 = 1e-10;

type Evaluation = Option<(f64, DVector<f64>)>;

// argmin asks for the cost and the gradient separately; both come from one
// evaluation, kept for the last point.
struct Objective<F> {
    eval: F,
    last: RefCell<Option<(DVector<f64>, Evaluation)>>,
}

impl<F: Fn(&DVector<f64>) -> Evaluation> Objective<F> {
    fn at(&self, x: &DVector<f64>) -> Evaluation {
        if let Some((p, v)) = self.last.borrow().as_ref() {
            if p == x {
                return v.clone();
            }
        }
        let v = (self.eval)(x);
        *self.last.borrow_mut() = Some((x.clone(), v.clone()));
        v
    }
}

impl<F: Fn(&DVector<f64>) -> Evaluation> CostFunction for Objective<F> {
    type Param = DVector<f64>;
    type Output = f64;

    fn cost(&self, x: &DVector<f64>) -> std::result::Result<f64, argmin::core::Error> {
        // outside the domain: the Armijo test fails and the step shrinks
        Ok(self.at(x).map_or(f64::INFINITY, |(f, _)| f))
    }
}

impl<F: Fn(&DVector<f64>) -> Evaluation> Gradient for Objective<F> {
    type Param = DVector<f64>;
    type Gradient = DVector<f64>;

    fn gradient(&self, x: &DVector<f64>) -> std::result::Result<DVector<f64>, argmin::core::Error> {
        self.at(x)
            .map(|(_, g)| g)
            .ok_or_else(|| argmin::core::Error::msg("gradient requested outside the domain"))
    }
}

// Minimize by L-BFGS with Armijo backtracking; `eval` returns None outside
// the domain. Returns the best point found, or None if the solver failed.
fn lbfgs<F>(eval: F, x0: DVector<f64>, max_iter: usize, gtol: f64) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Evaluation,
{
    let armijo = ArmijoCondition::new(1e-4).ok()?;
    let search = BacktrackingLineSearch::new(armijo).rho(0.5).ok()?;
    let solver = LBFGS::new(search, LBFGS_MEMORY)
        .with_tolerance_grad(gtol)
        .ok()?
        .with_tolerance_cost(LBFGS_TOL_COST)
        .ok()?;
    let problem = Objective {
        eval,
        last: RefCell::new(None),
    };
    match Executor::new(problem, solver)
        .configure(|s| s.param(x0).max_iters(max_iter as u64))
        .run()
    {
        Ok(res) => res.state.best_param,
        Err(e) => {
            log::debug!("L-BFGS stopped: {e}");
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitReport {
    pub state: ChainState,
    pub log_posterior: f64,
    pub converged: bool,
    /// Margins were fitted first under independence, then the copula.
    pub two_stage: bool,
    pub rounds: usize,
}

/// Margin intercepts from sample moments, copula intercepts at moderate
/// dependence, all slopes zero and all indicators on.
pub fn data_start_blocks(model: &Model) -> Vec<ParamBlock> {
    let mut blocks = model.prior_mean_blocks();
    for m in 0..2 {
        let y = &model.data.y[m];
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
        let nu: f64 = 8.0;
        let phi = (var * (nu - 2.0) / nu).sqrt().max(1e-3);
        let set = |blocks: &mut Vec<ParamBlock>, p: MarginParam, v: f64| {
            blocks[BlockId::Margin { margin: m, param: p }.index()].beta0 = v;
        };
        set(&mut blocks, MarginParam::Mu, median);
        set(&mut blocks, MarginParam::Phi, phi.ln());
        set(&mut blocks, MarginParam::Nu, nu.ln());
        set(&mut blocks, MarginParam::Kappa, 0.0);
    }
    let lam = 0.2;
    blocks[BlockId::LambdaL.index()].beta0 = model.spec.lambda_link.link(lam).unwrap_or(0.0);
    blocks[BlockId::Tau.index()].beta0 = match model.spec.tau_mode {
        TauLinkMode::Conditional => 0.0,
        TauLinkMode::Truncated => Link::<f64>::Logit.link(0.4).unwrap_or(0.0),
    };
    blocks
}

fn block_rounds(
    model: &Model,
    state: &mut ChainState,
    blocks: &[BlockId],
    rounds: usize,
    opts: &InitOptions,
) -> Result<usize> {
    let cfg = ProposalConfig {
        newton_steps: opts.newton_steps,
        newton_tol: 1e-14,
        ..ProposalConfig::default()
    };
    let mut lp = model.joint_log_posterior(state)?;
    if !lp.is_finite() {
        return Err(Error::Numerical(
            "log posterior at the starting values is not finite".into(),
        ));
    }
    for round in 1..=rounds {
        for &b in blocks {
            let current = state.block(b).clone();
            let p = {
                let target = ModelBlock { model, state, block: b };
                let v0 = model
                    .block_eval(
                        state,
                        b,
                        &current.packed(),
                        &current.indicators,
                        crate::posterior::Order::Value,
                    )?
                    .value;
                let p = newton_proposal(&target, &current.packed(), &current.indicators, &cfg)?;
                (p.value > v0 && !p.fallback).then_some(p)
            };
            if let Some(p) = p {
                let blk = ParamBlock::unpacked(&p.location, &current.indicators);
                if let Err(e) = model.set_block(state, b, blk) {
                    log::debug!("init: block {} step rejected: {e}", b.name());
                }
            }
        }
        let next = model.joint_log_posterior(state)?;
        if !next.is_finite() {
            return Err(Error::Numerical(
                "log posterior became non-finite during initialization".into(),
            ));
        }
        let gain = next - lp;
        lp = next;
        if gain < opts.tol {
            return Ok(round);
        }
    }
    Ok(rounds)
}

fn max_gradient(model: &Model, state: &ChainState, blocks: &[BlockId]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for &b in blocks {
        m = m.max(model.block_gradient(state, b)?.amax());
    }
    Ok(m)
}

// Block Newton rounds, then L-BFGS over all coefficients of `blocks`, then
// one more block round.
fn optimize(model: &Model, state: &mut ChainState, blocks: &[BlockId], opts: &InitOptions) -> Result<(usize, bool)> {
    let mut rounds = block_rounds(model, state, blocks, opts.max_rounds, opts)?;
    let layout: Vec<(BlockId, Vec<bool>, usize)> = blocks
        .iter()
        .map(|&b| {
            let blk = state.block(b);
            (b, blk.indicators.clone(), 1 + blk.active().len())
        })
        .collect();
    let x0 = DVector::from_iterator(
        layout.iter().map(|l| l.2).sum(),
        blocks
            .iter()
            .flat_map(|&b| state.block(b).packed().iter().copied().collect::<Vec<_>>()),
    );
    let base = state.blocks.clone();
    let unpack = |x: &DVector<f64>| {
        let mut all = base.clone();
        let mut k = 0;
        for (b, ind, len) in &layout {
            all[b.index()] = ParamBlock::unpacked(&x.rows(k, *len).into_owned(), ind);
            k += len;
        }
        all
    };
    let eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let s = model.state(unpack(x)).ok()?;
        let lp = model.joint_log_posterior(&s).ok()?;
        if !lp.is_finite() {
            return None;
        }
        let mut g = Vec::with_capacity(x.len());
        for (b, _, _) in &layout {
            g.extend(model.block_gradient(&s, *b).ok()?.iter().map(|v| -v));
        }
        Some((-lp, DVector::from_vec(g)))
    };
    if let Some(x) = lbfgs(eval, x0, opts.lbfgs_iters, opts.gtol) {
        let polished = model.state(unpack(&x))?;
        if model.joint_log_posterior(&polished)? >= model.joint_log_posterior(state)? {
            *state = polished;
        }
    }
    rounds += block_rounds(model, state, blocks, 1, opts)?;
    let converged = max_gradient(model, state, blocks)? < opts.gtol * 10.0;
    Ok((rounds, converged))
}

fn all_on(blocks: Vec<ParamBlock>) -> Vec<ParamBlock> {
    blocks
        .into_iter()
        .map(|b| {
            let d = b.dim();
            ParamBlock {
                indicators: vec![true; d],
                ..b
            }
        })
        .collect()
}

/// Posterior-mode search with all indicators on, from `start` or
/// [`data_start_blocks`]. On failure the margins are fitted under
/// independence first and the copula blocks afterwards.
pub fn init_by_optimization(model: &Model, start: Option<Vec<ParamBlock>>, opts: &InitOptions) -> Result<InitReport> {
    let start = all_on(start.unwrap_or_else(|| data_start_blocks(model)));
    let copula: Vec<BlockId> = BlockId::SWEEP.iter().copied().filter(|b| b.is_copula()).collect();
    let margins: Vec<BlockId> = BlockId::SWEEP.iter().copied().filter(|b| !b.is_copula()).collect();
    let joint_blocks: &[BlockId] = if model.spec.independence {
        &margins
    } else {
        &BlockId::SWEEP
    };

    let joint = model.state(start.clone()).and_then(|mut s| {
        let (rounds, converged) = optimize(model, &mut s, joint_blocks, opts)?;
        Ok((s, rounds, converged))
    });
    match joint {
        Ok((state, rounds, converged)) => {
            let log_posterior = model.joint_log_posterior(&state)?;
            Ok(InitReport {
                state,
                log_posterior,
                converged,
                two_stage: false,
                rounds,
            })
        }
        Err(e) => {
            log::warn!("joint initialization failed ({e}); fitting margins first");
            let mut ind_spec = model.spec.clone();
            ind_spec.independence = true;
            let ind = Model::new(ind_spec, model.data.clone(), model.grid.clone())?;
            let mut s = ind.state(start)?;
            let (r1, _) = optimize(&ind, &mut s, &margins, opts)?;
            let mut state = model.state(s.blocks)?;
            let (r2, converged) = optimize(model, &mut state, &copula, opts)?;
            let log_posterior = model.joint_log_posterior(&state)?;
            Ok(InitReport {
                state,
                log_posterior,
                converged,
                two_stage: true,
                rounds: r1 + r2,
            })
        }
    }
}

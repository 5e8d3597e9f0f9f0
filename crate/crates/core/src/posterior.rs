//! Joint log posterior of the two-margin copula model and the per-block
//! conditional log posterior with its gradient and Hessian.
//!
//! Each block is a [`ParamBlock`] whose linear predictor η_i = β0 + x_i'β
//! enters one parameter of one observation. The block log posterior is a
//! sum of scalar terms ℓ_i(η_i) plus the block prior, so its gradient is
//! Σ ℓ_i'(η_i) x̃_i and its Hessian Σ ℓ_i''(η_i) x̃_i x̃_i' with x̃_i the
//! included covariates preceded by 1.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::copula::grid::theta_from_tau;
use crate::copula::{
    delta_from_lambda_l, dlambda_l_ddelta, jc_logpdf, jc_logpdf_grad, tau_with_derivs, CopulaNatural, Rotation,
    TauGrid, UnitPair,
};
use crate::error::{Error, Result};
use crate::links::{
    block_prior_grad_hess, block_prior_logdensity, conditional_tau_bound, conditional_tau_bound_deriv, logistic,
    BlockPrior, Link, ParamBlock,
};
use crate::split_t::{
    linear_predictor, split_t_cdf, split_t_cdf_dparam, split_t_logpdf, split_t_logpdf_grads, MarginParam, SplitTParams,
    MARGIN_LINKS,
};

pub const N_BLOCKS: usize = 10;

/// Below this |∂τ/∂θ| the analytic chain rule is replaced by differences.
pub const SINGULAR_JACOBIAN: f64 = 1e-10;

const FD_GRAD_STEP: f64 = 1e-5;
const FD_HESS_STEP: f64 = 1e-6;

/// One of the ten coefficient blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockId {
    Margin { margin: usize, param: MarginParam },
    LambdaL,
    Tau,
}

impl BlockId {
    /// Update order of one sweep: margin 1 (μ, φ, ν, κ), margin 2, then λ_L
    /// before τ.
    pub const SWEEP: [BlockId; N_BLOCKS] = [
        BlockId::Margin {
            margin: 0,
            param: MarginParam::Mu,
        },
        BlockId::Margin {
            margin: 0,
            param: MarginParam::Phi,
        },
        BlockId::Margin {
            margin: 0,
            param: MarginParam::Nu,
        },
        BlockId::Margin {
            margin: 0,
            param: MarginParam::Kappa,
        },
        BlockId::Margin {
            margin: 1,
            param: MarginParam::Mu,
        },
        BlockId::Margin {
            margin: 1,
            param: MarginParam::Phi,
        },
        BlockId::Margin {
            margin: 1,
            param: MarginParam::Nu,
        },
        BlockId::Margin {
            margin: 1,
            param: MarginParam::Kappa,
        },
        BlockId::LambdaL,
        BlockId::Tau,
    ];

    pub fn index(self) -> usize {
        match self {
            BlockId::Margin { margin, param } => 4 * margin + param.index(),
            BlockId::LambdaL => 8,
            BlockId::Tau => 9,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::SWEEP.get(i).copied()
    }

    /// Which design matrix the block uses: 0, 1 for the margins, 2 for the copula.
    pub fn design(self) -> usize {
        match self {
            BlockId::Margin { margin, .. } => margin,
            _ => 2,
        }
    }

    pub fn name(self) -> String {
        match self {
            BlockId::Margin { margin, param } => format!("m{}_{}", margin + 1, param.name()),
            BlockId::LambdaL => "lambdaL".into(),
            BlockId::Tau => "tau".into(),
        }
    }

    pub fn is_copula(self) -> bool {
        matches!(self, BlockId::LambdaL | BlockId::Tau)
    }
}

/// How τ is linked to its linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauLinkMode {
    /// τ = a(λ_L) + (1 - a(λ_L)) logistic(η): always feasible.
    #[default]
    Conditional,
    /// τ = logistic(η), with the posterior set to zero wherever some
    /// observation falls below the attainable τ for its λ_L.
    Truncated,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Priors in [`BlockId::index`] order.
    pub priors: Vec<BlockPrior>,
    /// Logit or generalized logit.
    pub lambda_link: Link<f64>,
    pub tau_mode: TauLinkMode,
    pub rotation: Rotation,
    /// Blocks whose indicators are sampled; others keep their indicators.
    pub select: [bool; N_BLOCKS],
    /// Replace the copula density by 1. Copula blocks then only carry
    /// their prior.
    pub independence: bool,
}

impl ModelSpec {
    pub fn prior(&self, b: BlockId) -> &BlockPrior {
        &self.priors[b.index()]
    }
}

/// Responses and the three design matrices (margin 1, margin 2, copula).
#[derive(Debug, Clone)]
pub struct ModelData {
    pub y: [Vec<f64>; 2],
    pub x: [DMatrix<f64>; 3],
    pub names: [Vec<String>; 3],
}

impl ModelData {
    pub fn new(y: [Vec<f64>; 2], x: [DMatrix<f64>; 3], names: [Vec<String>; 3]) -> Result<Self> {
        let n = y[0].len();
        if y[1].len() != n {
            return Err(Error::DimensionMismatch(format!(
                "margins have {} and {} observations",
                n,
                y[1].len()
            )));
        }
        for (k, xk) in x.iter().enumerate() {
            if xk.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "design {k} has {} rows for {n} observations",
                    xk.nrows()
                )));
            }
            if names[k].len() != xk.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "design {k} has {} columns but {} names",
                    xk.ncols(),
                    names[k].len()
                )));
            }
        }
        if y.iter().flatten().any(|v| !v.is_finite()) || x.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("non-finite value in responses or covariates".into()));
        }
        Ok(Self { y, x, names })
    }

    /// Copula covariates are both margins' covariates side by side, named
    /// `m1:<name>` and `m2:<name>`.
    pub fn with_union(
        y: [Vec<f64>; 2],
        x1: DMatrix<f64>,
        x2: DMatrix<f64>,
        names1: Vec<String>,
        names2: Vec<String>,
    ) -> Result<Self> {
        if x1.nrows() != x2.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "margin designs have {} and {} rows",
                x1.nrows(),
                x2.nrows()
            )));
        }
        let n = x1.nrows();
        let (d1, d2) = (x1.ncols(), x2.ncols());
        let xc = DMatrix::from_fn(n, d1 + d2, |i, j| if j < d1 { x1[(i, j)] } else { x2[(i, j - d1)] });
        let names_c = names1
            .iter()
            .map(|s| format!("m1:{s}"))
            .chain(names2.iter().map(|s| format!("m2:{s}")))
            .collect();
        Self::new(y, [x1, x2, xc], [names1, names2, names_c])
    }

    pub fn n(&self) -> usize {
        self.y[0].len()
    }

    pub fn design(&self, b: BlockId) -> &DMatrix<f64> {
        &self.x[b.design()]
    }

    /// Rows `range` of every series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let len = range.len();
        let rows = |m: &DMatrix<f64>| m.rows(range.start, len).into_owned();
        Self {
            y: [self.y[0][range.clone()].to_vec(), self.y[1][range.clone()].to_vec()],
            x: [rows(&self.x[0]), rows(&self.x[1]), rows(&self.x[2])],
            names: self.names.clone(),
        }
    }
}

/// Current coefficients of all blocks plus per-observation quantities
/// derived from them.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub blocks: Vec<ParamBlock>,
    eta: Vec<DVector<f64>>,
    margin: [Vec<SplitTParams<f64>>; 2],
    u: [Vec<f64>; 2],
    logf: [Vec<f64>; 2],
    lambda: Vec<f64>,
    delta: Vec<f64>,
    tau: Vec<f64>,
    theta: Vec<f64>,
    logc: Vec<f64>,
}

impl ChainState {
    pub fn block(&self, b: BlockId) -> &ParamBlock {
        &self.blocks[b.index()]
    }

    pub fn u(&self, margin: usize) -> &[f64] {
        &self.u[margin]
    }

    pub fn lambda_l(&self) -> &[f64] {
        &self.lambda
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn margin_params(&self, margin: usize) -> &[SplitTParams<f64>] {
        &self.margin[margin]
    }

    /// Σ log f over both margins plus Σ log c.
    pub fn log_likelihood(&self) -> f64 {
        self.logf[0].iter().sum::<f64>() + self.logf[1].iter().sum::<f64>() + self.logc.iter().sum::<f64>()
    }
}

/// How much of the block posterior to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Block log posterior (up to a constant) over packed coefficients.
#[derive(Debug, Clone)]
pub struct BlockEval {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
    /// Observations whose derivative came from differences.
    pub fd_fallbacks: usize,
}

/// Specification, data and τ lookup table.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub data: ModelData,
    pub grid: Arc<TauGrid<f64>>,
}

fn margin_params(eta: &[DVector<f64>], i: usize) -> SplitTParams<f64> {
    SplitTParams {
        mu: MARGIN_LINKS[0].eval(eta[0][i]),
        phi: MARGIN_LINKS[1].eval(eta[1][i]),
        nu: MARGIN_LINKS[2].eval(eta[2][i]),
        kappa: MARGIN_LINKS[3].eval(eta[3][i]),
    }
}

fn valid_params(p: &SplitTParams<f64>) -> bool {
    let pos = |x: f64| x > 0.0 && x.is_finite();
    p.mu.is_finite() && pos(p.phi) && pos(p.nu) && pos(p.kappa)
}

// Scalar term of one observation and its derivative in η.
#[derive(Debug, Clone, Copy)]
struct Term {
    l: f64,
    d1: f64,
    fallback: bool,
}

impl Model {
    pub fn new(spec: ModelSpec, data: ModelData, grid: Arc<TauGrid<f64>>) -> Result<Self> {
        if spec.priors.len() != N_BLOCKS {
            return Err(Error::Config(format!(
                "{} block priors, expected {N_BLOCKS}",
                spec.priors.len()
            )));
        }
        for b in BlockId::SWEEP {
            let d = data.design(b).ncols();
            if spec.prior(b).dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "prior of {} has {} slopes, design has {d}",
                    b.name(),
                    spec.prior(b).dim()
                )));
            }
        }
        if !matches!(spec.lambda_link, Link::Logit | Link::GLogit { .. }) {
            return Err(Error::Config("lambda_L link must be logit or glogit".into()));
        }
        if let Link::GLogit { a, b } = spec.lambda_link {
            if !(a >= 0.0 && b <= 1.0) {
                return Err(Error::Config(format!(
                    "lambda_L glogit bounds ({a}, {b}) outside [0, 1]"
                )));
            }
        }
        Ok(Self { spec, data, grid })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Intercepts at their prior means, slopes zero, every indicator on.
    pub fn prior_mean_blocks(&self) -> Vec<ParamBlock> {
        BlockId::SWEEP
            .iter()
            .map(|&b| ParamBlock::intercept_only(self.spec.prior(b).intercept_mean, self.data.design(b).ncols()))
            .collect()
    }

    fn pair(&self, u1: f64, u2: f64) -> UnitPair<f64> {
        self.spec.rotation.apply(UnitPair { u: u1, v: u2 })
    }

    // Sign of ∂(rotated coordinate)/∂u_m.
    fn rotation_sign(&self, margin: usize) -> f64 {
        let flipped = if margin == 0 {
            self.spec.rotation.flips_u()
        } else {
            self.spec.rotation.flips_v()
        };
        if flipped {
            -1.0
        } else {
            1.0
        }
    }

    fn tau_value(&self, lambda: f64, eta_tau: f64) -> f64 {
        match self.spec.tau_mode {
            TauLinkMode::Conditional => {
                let a = conditional_tau_bound(lambda);
                a + (1.0 - a) * logistic(eta_tau)
            }
            TauLinkMode::Truncated => logistic(eta_tau),
        }
    }

    /// State with all caches computed from `blocks`.
    pub fn state(&self, blocks: Vec<ParamBlock>) -> Result<ChainState> {
        if blocks.len() != N_BLOCKS {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks, expected {N_BLOCKS}",
                blocks.len()
            )));
        }
        let n = self.n();
        let mut eta = Vec::with_capacity(N_BLOCKS);
        for b in BlockId::SWEEP {
            eta.push(linear_predictor(&blocks[b.index()], self.data.design(b))?);
        }
        let mut margin: [Vec<SplitTParams<f64>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut u: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut logf: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for m in 0..2 {
            for i in 0..n {
                let p = margin_params(&eta[4 * m..4 * m + 4], i);
                if !valid_params(&p) {
                    return Err(Error::Numerical(format!(
                        "margin {} parameters {p:?} at row {i}",
                        m + 1
                    )));
                }
                let y = self.data.y[m][i];
                margin[m].push(p);
                u[m].push(split_t_cdf(y, p));
                logf[m].push(split_t_logpdf(y, p));
            }
        }
        let mut lambda = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        let mut logc = Vec::with_capacity(n);
        for i in 0..n {
            let lam = self.spec.lambda_link.eval(eta[8][i]);
            let d = delta_from_lambda_l(lam)?;
            let t = self.tau_value(lam, eta[9][i]);
            let th = self.grid.theta_for(d, t)?;
            lambda.push(lam);
            delta.push(d);
            tau.push(t);
            theta.push(th);
            logc.push(self.logc(self.pair(u[0][i], u[1][i]), CopulaNatural { theta: th, delta: d }));
        }
        Ok(ChainState {
            blocks,
            eta,
            margin,
            u,
            logf,
            lambda,
            delta,
            tau,
            theta,
            logc,
        })
    }

    /// log f1 + log f2 + log c of every observation, -inf where the
    /// parameters or copula features are invalid.
    pub fn pointwise_log_density(&self, blocks: &[ParamBlock]) -> Result<Vec<f64>> {
        if blocks.len() != N_BLOCKS {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks, expected {N_BLOCKS}",
                blocks.len()
            )));
        }
        let mut eta = Vec::with_capacity(N_BLOCKS);
        for b in BlockId::SWEEP {
            eta.push(linear_predictor(&blocks[b.index()], self.data.design(b))?);
        }
        Ok((0..self.n())
            .into_par_iter()
            .map(|i| {
                let mut total = 0.0;
                let mut u = [0.0; 2];
                for (m, um) in u.iter_mut().enumerate() {
                    let p = margin_params(&eta[4 * m..4 * m + 4], i);
                    if !valid_params(&p) {
                        return f64::NEG_INFINITY;
                    }
                    let y = self.data.y[m][i];
                    *um = split_t_cdf(y, p);
                    total += split_t_logpdf(y, p);
                }
                if self.spec.independence {
                    return total;
                }
                let lam = self.spec.lambda_link.eval(eta[8][i]);
                let Ok(d) = delta_from_lambda_l(lam) else {
                    return f64::NEG_INFINITY;
                };
                let t = self.tau_value(lam, eta[9][i]);
                match self.grid.theta_for(d, t) {
                    Ok(th) => total + self.logc(self.pair(u[0], u[1]), CopulaNatural { theta: th, delta: d }),
                    Err(_) => f64::NEG_INFINITY,
                }
            })
            .collect())
    }

    /// Replace one block and refresh the caches it affects.
    pub fn set_block(&self, s: &mut ChainState, b: BlockId, block: ParamBlock) -> Result<()> {
        let eta = linear_predictor(&block, self.data.design(b))?;
        let n = self.n();
        let old_block = std::mem::replace(&mut s.blocks[b.index()], block);
        let old_eta = std::mem::replace(&mut s.eta[b.index()], eta);
        let restore = |s: &mut ChainState, e| {
            s.blocks[b.index()] = old_block.clone();
            s.eta[b.index()] = old_eta.clone();
            e
        };
        match b {
            BlockId::Margin { margin: m, .. } => {
                let mut params = Vec::with_capacity(n);
                for i in 0..n {
                    let p = margin_params(&s.eta[4 * m..4 * m + 4], i);
                    if !valid_params(&p) {
                        return Err(restore(
                            s,
                            Error::Numerical(format!("margin {} parameters {p:?} at row {i}", m + 1)),
                        ));
                    }
                    params.push(p);
                }
                for (i, p) in params.into_iter().enumerate() {
                    let y = self.data.y[m][i];
                    s.margin[m][i] = p;
                    s.u[m][i] = split_t_cdf(y, p);
                    s.logf[m][i] = split_t_logpdf(y, p);
                }
            }
            BlockId::LambdaL | BlockId::Tau => {
                let mut fresh = Vec::with_capacity(n);
                for i in 0..n {
                    let lam = self.spec.lambda_link.eval(s.eta[8][i]);
                    let d = match delta_from_lambda_l(lam) {
                        Ok(d) => d,
                        Err(e) => return Err(restore(s, e)),
                    };
                    let t = self.tau_value(lam, s.eta[9][i]);
                    let th = match theta_from_tau(d, t, s.theta[i]) {
                        Ok(th) => th,
                        Err(e) => return Err(restore(s, e)),
                    };
                    fresh.push((lam, d, t, th));
                }
                for (i, (lam, d, t, th)) in fresh.into_iter().enumerate() {
                    s.lambda[i] = lam;
                    s.delta[i] = d;
                    s.tau[i] = t;
                    s.theta[i] = th;
                }
            }
        }
        for i in 0..n {
            s.logc[i] = self.logc(
                self.pair(s.u[0][i], s.u[1][i]),
                CopulaNatural {
                    theta: s.theta[i],
                    delta: s.delta[i],
                },
            );
        }
        Ok(())
    }

    /// Log likelihood plus every block's log prior.
    pub fn joint_log_posterior(&self, s: &ChainState) -> Result<f64> {
        let mut lp = s.log_likelihood();
        for b in BlockId::SWEEP {
            lp += block_prior_logdensity(s.block(b), self.spec.prior(b))?;
        }
        Ok(lp)
    }

    /// Gradient of the block log posterior over (β0, included slopes) at
    /// the current state.
    pub fn block_gradient(&self, s: &ChainState, b: BlockId) -> Result<DVector<f64>> {
        let blk = s.block(b);
        let e = self.block_eval(s, b, &blk.packed(), &blk.indicators, Order::Gradient)?;
        e.grad
            .ok_or_else(|| Error::Numerical(format!("block {} log posterior is not finite", b.name())))
    }

    /// Conditional log posterior of block `b` at `packed` coefficients under
    /// `indicators`, every other block held at `s`.
    pub fn block_eval(
        &self,
        s: &ChainState,
        b: BlockId,
        packed: &DVector<f64>,
        indicators: &[bool],
        order: Order,
    ) -> Result<BlockEval> {
        let trial = ParamBlock::unpacked(packed, indicators);
        let x = self.data.design(b);
        let eta = linear_predictor(&trial, x)?;
        let prior = self.spec.prior(b);
        let prior_value = block_prior_logdensity(&trial, prior)?;
        let n = self.n();
        let want_grad = order >= Order::Gradient;

        let terms: Vec<(Term, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let t = self.term(s, b, i, eta[i], want_grad);
                let d2 = if order == Order::Hessian && t.l.is_finite() && t.d1.is_finite() {
                    let h = FD_HESS_STEP * eta[i].abs().max(1.0);
                    let t2 = self.term(s, b, i, eta[i] + h, true);
                    (t2.d1 - t.d1) / h
                } else {
                    0.0
                };
                (t, d2)
            })
            .collect();

        let mut value = prior_value;
        let mut fd_fallbacks = 0;
        for (t, _) in &terms {
            value += t.l;
            fd_fallbacks += t.fallback as usize;
        }
        let mut out = BlockEval {
            value,
            grad: None,
            hess: None,
            fd_fallbacks,
        };
        if !value.is_finite() || !want_grad {
            if !value.is_finite() {
                out.value = f64::NEG_INFINITY;
            }
            return Ok(out);
        }
        let act = trial.active();
        let k = 1 + act.len();
        let (pg, ph) = block_prior_grad_hess(&trial, prior)?;
        let mut g = pg;
        let mut h = if order == Order::Hessian { Some(ph) } else { None };
        let mut row = vec![0.0; k];
        row[0] = 1.0;
        for (i, (t, d2)) in terms.iter().enumerate() {
            for (r, &j) in act.iter().enumerate() {
                row[r + 1] = x[(i, j)];
            }
            for a in 0..k {
                g[a] += t.d1 * row[a];
            }
            if let Some(h) = h.as_mut() {
                for a in 0..k {
                    let ra = d2 * row[a];
                    for c in 0..=a {
                        h[(a, c)] += ra * row[c];
                    }
                }
            }
        }
        if let Some(h) = h.as_mut() {
            h.fill_upper_triangle_with_lower_triangle();
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient in block {}", b.name())));
        }
        out.grad = Some(g);
        out.hess = h;
        Ok(out)
    }

    fn logc(&self, pair: UnitPair<f64>, c: CopulaNatural<f64>) -> f64 {
        if self.spec.independence {
            0.0
        } else {
            jc_logpdf(pair, c)
        }
    }

    fn term(&self, s: &ChainState, b: BlockId, i: usize, eta: f64, grad: bool) -> Term {
        if self.spec.independence && b.is_copula() {
            return Term {
                l: 0.0,
                d1: 0.0,
                fallback: false,
            };
        }
        let t = match b {
            BlockId::Margin { margin, param } => self.margin_term(s, margin, param, i, eta, grad),
            BlockId::LambdaL => self.lambda_term(s, i, eta, grad),
            BlockId::Tau => self.tau_term(s, i, eta, grad),
        };
        let t = t.unwrap_or(Term {
            l: f64::NEG_INFINITY,
            d1: 0.0,
            fallback: false,
        });
        if grad && t.l.is_finite() && !t.d1.is_finite() {
            self.difference_term(s, b, i, eta, t.l)
        } else {
            t
        }
    }

    // Central difference of ℓ_i in η.
    fn difference_term(&self, s: &ChainState, b: BlockId, i: usize, eta: f64, l: f64) -> Term {
        let h = FD_GRAD_STEP * eta.abs().max(1.0);
        let lp = self.term(s, b, i, eta + h, false).l;
        let lm = self.term(s, b, i, eta - h, false).l;
        Term {
            l,
            d1: (lp - lm) / (2.0 * h),
            fallback: true,
        }
    }

    fn margin_term(
        &self,
        s: &ChainState,
        m: usize,
        which: MarginParam,
        i: usize,
        eta: f64,
        grad: bool,
    ) -> Option<Term> {
        let link = MARGIN_LINKS[which.index()];
        let p = s.margin[m][i].with(which, link.eval(eta));
        if !valid_params(&p) {
            return None;
        }
        let y = self.data.y[m][i];
        let logf = split_t_logpdf(y, p);
        if self.spec.independence {
            let d1 = if grad {
                *split_t_logpdf_grads(y, p).get(which) * link.deriv(eta)
            } else {
                0.0
            };
            return Some(Term {
                l: logf,
                d1,
                fallback: false,
            });
        }
        let u = split_t_cdf(y, p);
        let (u1, u2) = if m == 0 { (u, s.u[1][i]) } else { (s.u[0][i], u) };
        let c = CopulaNatural {
            theta: s.theta[i],
            delta: s.delta[i],
        };
        let pair = self.pair(u1, u2);
        if !grad {
            return Some(Term {
                l: logf + jc_logpdf(pair, c),
                d1: 0.0,
                fallback: false,
            });
        }
        let g = jc_logpdf_grad(pair, c);
        let dlogc_du = self.rotation_sign(m) * if m == 0 { g.d_u } else { g.d_v };
        let dlogf = *split_t_logpdf_grads(y, p).get(which);
        let (dcdf, _) = split_t_cdf_dparam(y, p, which);
        Some(Term {
            l: logf + g.log_density,
            d1: (dlogf + dlogc_du * dcdf) * link.deriv(eta),
            fallback: false,
        })
    }

    fn lambda_term(&self, s: &ChainState, i: usize, eta: f64, grad: bool) -> Option<Term> {
        let lam = self.spec.lambda_link.eval(eta);
        if !(lam > 0.0 && lam < 1.0) {
            return None;
        }
        let delta = delta_from_lambda_l(lam).ok()?;
        let (tau, dtau_dlam) = match self.spec.tau_mode {
            TauLinkMode::Conditional => {
                let sg = logistic(s.eta[9][i]);
                let a = conditional_tau_bound(lam);
                (a + (1.0 - a) * sg, conditional_tau_bound_deriv(lam) * (1.0 - sg))
            }
            TauLinkMode::Truncated => {
                if s.tau[i] <= delta / (delta + 2.0) {
                    return None;
                }
                (s.tau[i], 0.0)
            }
        };
        let theta = theta_from_tau(delta, tau, s.theta[i]).ok()?;
        let c = CopulaNatural { theta, delta };
        let pair = self.pair(s.u[0][i], s.u[1][i]);
        if !grad {
            return Some(Term {
                l: jc_logpdf(pair, c),
                d1: 0.0,
                fallback: false,
            });
        }
        let g = jc_logpdf_grad(pair, c);
        let td = tau_with_derivs(c);
        if !(td.d_theta.abs() >= SINGULAR_JACOBIAN) {
            return Some(Term {
                l: g.log_density,
                d1: f64::NAN,
                fallback: false,
            });
        }
        // δ moves with λ at fixed τ, then τ moves with λ through the bound.
        let dlogc_dtau = g.d_theta / td.d_theta;
        let dlogc_ddelta = g.d_delta - dlogc_dtau * td.d_delta;
        let dlogc_dlam = dlogc_ddelta / dlambda_l_ddelta(delta) + dlogc_dtau * dtau_dlam;
        Some(Term {
            l: g.log_density,
            d1: dlogc_dlam * self.spec.lambda_link.deriv(eta),
            fallback: false,
        })
    }

    fn tau_term(&self, s: &ChainState, i: usize, eta: f64, grad: bool) -> Option<Term> {
        let delta = s.delta[i];
        let sg = logistic(eta);
        let (tau, dtau_deta) = match self.spec.tau_mode {
            TauLinkMode::Conditional => {
                let a = conditional_tau_bound(s.lambda[i]);
                (a + (1.0 - a) * sg, (1.0 - a) * sg * (1.0 - sg))
            }
            TauLinkMode::Truncated => {
                if sg <= delta / (delta + 2.0) {
                    return None;
                }
                (sg, sg * (1.0 - sg))
            }
        };
        let theta = theta_from_tau(delta, tau, s.theta[i]).ok()?;
        let c = CopulaNatural { theta, delta };
        let pair = self.pair(s.u[0][i], s.u[1][i]);
        if !grad {
            return Some(Term {
                l: jc_logpdf(pair, c),
                d1: 0.0,
                fallback: false,
            });
        }
        let g = jc_logpdf_grad(pair, c);
        let td = tau_with_derivs(c);
        if !(td.d_theta.abs() >= SINGULAR_JACOBIAN) {
            return Some(Term {
                l: g.log_density,
                d1: f64::NAN,
                fallback: false,
            });
        }
        Some(Term {
            l: g.log_density,
            d1: g.d_theta / td.d_theta * dtau_deta,
            fallback: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(super) fn toy_model(n: usize, mode: TauLinkMode, rotation: Rotation, seed: u64) -> (Model, ChainState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2;
        let x1 = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
        let x2 = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
        let y1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y2: Vec<f64> = y1.iter().map(|v| 0.6 * v + rng.random_range(-1.5..1.5)).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let data = ModelData::with_union([y1, y2], x1, x2, names.clone(), names).unwrap();
        let priors: Vec<BlockPrior> = BlockId::SWEEP
            .iter()
            .map(|&b| BlockPrior::identity(0.0, 4.0, 1.0, data.design(b).ncols(), 0.5))
            .collect();
        let spec = ModelSpec {
            priors,
            lambda_link: Link::Logit,
            tau_mode: mode,
            rotation,
            select: [true; N_BLOCKS],
            independence: false,
        };
        let grid = Arc::new(TauGrid::build(64, 64, 1e-4, 1.0 - 1e-4).unwrap());
        let model = Model::new(spec, data, grid).unwrap();
        let intercepts = [0.1, 0.2, 1.5, 0.1, -0.1, 0.1, 1.8, -0.2, -1.0, 0.5];
        let blocks = BlockId::SWEEP
            .iter()
            .map(|&b| {
                let dim = model.data.design(b).ncols();
                let beta = DVector::from_fn(dim, |j, _| 0.1 * (j as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -1.0 });
                let ind = (0..dim).map(|j| j != 1).collect();
                ParamBlock::new(intercepts[b.index()], beta, ind).unwrap()
            })
            .collect();
        let state = model.state(blocks).unwrap();
        (model, state)
    }

    fn check_gradient(model: &Model, s: &ChainState, b: BlockId, tol: f64) {
        let blk = s.block(b);
        let x0 = blk.packed();
        let g = model.block_gradient(s, b).unwrap();
        let f = |x: &DVector<f64>| model.block_eval(s, b, x, &blk.indicators, Order::Value).unwrap().value;
        for k in 0..x0.len() {
            let h = 1e-5 * x0[k].abs().max(1.0);
            let mut xp = x0.clone();
            xp[k] += h;
            let mut xm = x0.clone();
            xm[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let scale = fd.abs().max(g[k].abs()).max(1.0);
            assert!(
                (fd - g[k]).abs() <= tol * scale,
                "{} coordinate {k}: analytic {} vs difference {fd}",
                b.name(),
                g[k]
            );
        }
    }

    #[test]
    fn block_gradients_match_differences() {
        for (mode, rot) in [
            (TauLinkMode::Conditional, Rotation::R0),
            (TauLinkMode::Truncated, Rotation::R180),
            (TauLinkMode::Conditional, Rotation::R90),
        ] {
            let (model, s) = toy_model(60, mode, rot, 3);
            for b in BlockId::SWEEP {
                check_gradient(&model, &s, b, 1e-5);
            }
        }
    }

    #[test]
    fn block_value_differences_match_joint_posterior() {
        let (model, s) = toy_model(40, TauLinkMode::Conditional, Rotation::R0, 5);
        let base = model.joint_log_posterior(&s).unwrap();
        for b in BlockId::SWEEP {
            let blk = s.block(b);
            let mut x = blk.packed();
            let v0 = model
                .block_eval(&s, b, &x, &blk.indicators, Order::Value)
                .unwrap()
                .value;
            x[0] += 0.05;
            let v1 = model
                .block_eval(&s, b, &x, &blk.indicators, Order::Value)
                .unwrap()
                .value;
            let mut s2 = s.clone();
            model
                .set_block(&mut s2, b, ParamBlock::unpacked(&x, &blk.indicators))
                .unwrap();
            let moved = model.joint_log_posterior(&s2).unwrap();
            assert!(
                ((v1 - v0) - (moved - base)).abs() < 1e-8 * base.abs().max(1.0),
                "{}",
                b.name()
            );
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (model, s) = toy_model(50, TauLinkMode::Conditional, Rotation::R0, 9);
        for b in [BlockId::SWEEP[0], BlockId::SWEEP[6], BlockId::LambdaL, BlockId::Tau] {
            let blk = s.block(b);
            let x0 = blk.packed();
            let e = model.block_eval(&s, b, &x0, &blk.indicators, Order::Hessian).unwrap();
            let h = e.hess.unwrap();
            for k in 0..x0.len() {
                let step = 1e-5;
                let mut xp = x0.clone();
                xp[k] += step;
                let mut xm = x0.clone();
                xm[k] -= step;
                let gp = model
                    .block_eval(&s, b, &xp, &blk.indicators, Order::Gradient)
                    .unwrap()
                    .grad
                    .unwrap();
                let gm = model
                    .block_eval(&s, b, &xm, &blk.indicators, Order::Gradient)
                    .unwrap()
                    .grad
                    .unwrap();
                for r in 0..x0.len() {
                    let fd = (gp[r] - gm[r]) / (2.0 * step);
                    assert!(
                        (fd - h[(r, k)]).abs() <= 1e-3 * fd.abs().max(1.0),
                        "{} H[{r},{k}] = {} vs {fd}",
                        b.name(),
                        h[(r, k)]
                    );
                }
            }
        }
    }

    #[test]
    fn truncated_mode_rejects_infeasible_tau() {
        let (model, s) = toy_model(30, TauLinkMode::Truncated, Rotation::R0, 1);
        let blk = s.block(BlockId::Tau);
        let mut x = blk.packed();
        x[0] = -8.0;
        let e = model
            .block_eval(&s, BlockId::Tau, &x, &blk.indicators, Order::Gradient)
            .unwrap();
        assert_eq!(e.value, f64::NEG_INFINITY);
        assert!(e.grad.is_none());
    }

    #[test]
    fn permuting_observations_leaves_posterior_unchanged() {
        let (model, s) = toy_model(30, TauLinkMode::Conditional, Rotation::R0, 2);
        let n = model.n();
        let perm: Vec<usize> = (0..n).rev().collect();
        let d = &model.data;
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(n, m.ncols(), |i, j| m[(perm[i], j)]);
        let data = ModelData::new(
            [
                perm.iter().map(|&i| d.y[0][i]).collect(),
                perm.iter().map(|&i| d.y[1][i]).collect(),
            ],
            [pick(&d.x[0]), pick(&d.x[1]), pick(&d.x[2])],
            d.names.clone(),
        )
        .unwrap();
        let other = Model::new(model.spec.clone(), data, model.grid.clone()).unwrap();
        let s2 = other.state(s.blocks.clone()).unwrap();
        let a = model.joint_log_posterior(&s).unwrap();
        let b = other.joint_log_posterior(&s2).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
    }
}

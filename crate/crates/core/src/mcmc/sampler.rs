//! Sweeps over the ten blocks and whole chains.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::update::mh_update;
use super::{ModelBlock, ProposalConfig};
use crate::error::{Error, Result};
use crate::links::ParamBlock;
use crate::posterior::{BlockId, ChainState, Model, N_BLOCKS};

/// Per-block counters accumulated over sweeps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepStats {
    pub attempted: [usize; N_BLOCKS],
    pub accepted: [usize; N_BLOCKS],
    pub degenerate: [usize; N_BLOCKS],
    pub fallback: [usize; N_BLOCKS],
}

impl SweepStats {
    pub fn acceptance(&self, b: BlockId) -> f64 {
        let i = b.index();
        if self.attempted[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.attempted[i] as f64
        }
    }
}

/// Update every block once in [`BlockId::SWEEP`] order. Copula blocks are
/// skipped under the independence model.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    config: &ProposalConfig,
    stats: &mut SweepStats,
    rng: &mut R,
) -> Result<()> {
    for b in BlockId::SWEEP {
        if model.spec.independence && b.is_copula() {
            continue;
        }
        let i = b.index();
        let current = state.block(b).clone();
        let out = {
            let target = ModelBlock { model, state, block: b };
            mh_update(&target, &current, model.spec.select[i], config, rng)?
        };
        stats.attempted[i] += 1;
        stats.degenerate[i] += out.degenerate as usize;
        stats.fallback[i] += out.fallback as usize;
        if out.accepted {
            match model.set_block(state, b, out.block) {
                Ok(()) => stats.accepted[i] += 1,
                Err(e) => log::debug!("rejected accepted move in {}: {e}", b.name()),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub sweeps: usize,
    /// Discarded sweeps; `None` means 20% of `sweeps`.
    pub burn_in: Option<usize>,
    pub proposal: ProposalConfig,
}

impl ChainConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.sweeps / 5).min(self.sweeps)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub names: Vec<String>,
    /// One row per retained sweep, laid out as [`draw_names`].
    pub draws: Vec<Vec<f64>>,
    /// Joint log posterior after each retained sweep.
    pub log_posterior: Vec<f64>,
    pub stats: SweepStats,
    pub seconds: f64,
    pub final_state: ChainState,
}

/// Column names: for each block `<block>_b0`, `<block>_<covariate>` for
/// every slope, then `<block>_I_<covariate>` for every indicator.
pub fn draw_names(model: &Model) -> Vec<String> {
    let mut out = Vec::new();
    for b in BlockId::SWEEP {
        let names = &model.data.names[b.design()];
        let bn = b.name();
        out.push(format!("{bn}_b0"));
        out.extend(names.iter().map(|c| format!("{bn}_{c}")));
        out.extend(names.iter().map(|c| format!("{bn}_I_{c}")));
    }
    out
}

pub fn draw_row(state: &ChainState) -> Vec<f64> {
    let mut out = Vec::new();
    for blk in &state.blocks {
        out.push(blk.beta0);
        out.extend(blk.beta.iter());
        out.extend(blk.indicators.iter().map(|&on| if on { 1.0 } else { 0.0 }));
    }
    out
}

/// Inverse of [`draw_row`] for designs of the given widths.
pub fn blocks_from_row(model: &Model, row: &[f64]) -> Result<Vec<ParamBlock>> {
    let mut out = Vec::with_capacity(N_BLOCKS);
    let mut k = 0;
    for b in BlockId::SWEEP {
        let d = model.data.design(b).ncols();
        if row.len() < k + 1 + 2 * d {
            return Err(Error::DimensionMismatch(format!(
                "draw row of length {} is too short",
                row.len()
            )));
        }
        let beta0 = row[k];
        let beta = nalgebra::DVector::from_column_slice(&row[k + 1..k + 1 + d]);
        let ind = row[k + 1 + d..k + 1 + 2 * d].iter().map(|&v| v > 0.5).collect();
        out.push(ParamBlock::new(beta0, beta, ind)?);
        k += 1 + 2 * d;
    }
    if k != row.len() {
        return Err(Error::DimensionMismatch(format!(
            "draw row has {} entries, expected {k}",
            row.len()
        )));
    }
    Ok(out)
}

/// Run one chain from `init`.
pub fn run_chain<R: Rng + ?Sized>(
    model: &Model,
    init: ChainState,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.proposal.validate()?;
    let start = Instant::now();
    let burn = config.burn_in();
    let mut state = init;
    let mut stats = SweepStats::default();
    let mut draws = Vec::with_capacity(config.sweeps - burn);
    let mut log_posterior = Vec::with_capacity(config.sweeps - burn);
    for sweep in 0..config.sweeps {
        gibbs_sweep(model, &mut state, &config.proposal, &mut stats, rng)?;
        if sweep >= burn {
            draws.push(draw_row(&state));
            log_posterior.push(model.joint_log_posterior(&state)?);
        }
    }
    Ok(ChainOutput {
        names: draw_names(model),
        draws,
        log_posterior,
        stats,
        seconds: start.elapsed().as_secs_f64(),
        final_state: state,
    })
}

/// Independent chains from a common start. Chain `c` uses stream `c` of
/// the ChaCha8 generator seeded with `seed`.
pub fn run_chains(
    model: &Model,
    init: &ChainState,
    config: &ChainConfig,
    seed: u64,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            run_chain(model, init.clone(), config, &mut rng)
        })
        .collect()
}

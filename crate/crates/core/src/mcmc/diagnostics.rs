//! Inefficiency factors, acceptance rates and inclusion frequencies.

use super::sampler::ChainOutput;
use crate::error::{domain, Result};
use crate::posterior::BlockId;

/// Autocorrelations are summed up to and including the first lag below
/// this value.
pub const IF_CUTOFF: f64 = 0.01;
pub const IF_MAX_LAG: usize = 500;
/// Lower clamp of the inefficiency factor.
pub const IF_FLOOR: f64 = 1e-6;

/// IF = 1 + 2 Σ ρ_k, truncated at the first lag with ρ_k < 0.01 or at lag 500.
pub fn inefficiency_factor(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 100 {
        return Err(domain(
            "inefficiency_factor",
            format!("chain of length {n} is shorter than 100"),
        ));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let g0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(g0 > 0.0) {
        return Err(domain("inefficiency_factor", "constant chain"));
    }
    let mut sum = 0.0;
    for k in 1..=IF_MAX_LAG.min(n - 1) {
        let gk = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let rho = gk / g0;
        sum += rho;
        if rho < IF_CUTOFF {
            break;
        }
    }
    Ok((1.0 + 2.0 * sum).max(IF_FLOOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    /// (block, acceptance rate)
    pub acceptance: Vec<(String, f64)>,
    /// (column, IF); `None` for constant columns.
    pub inefficiency: Vec<(String, Option<f64>)>,
    /// (indicator column, share of draws with the covariate included)
    pub inclusion: Vec<(String, f64)>,
}

impl ChainDiagnostics {
    /// Diagnostics pooled over chains that share the same columns.
    pub fn from_chains(chains: &[ChainOutput]) -> Self {
        let mut acceptance = Vec::new();
        for b in BlockId::SWEEP {
            let i = b.index();
            let (acc, att) = chains
                .iter()
                .fold((0, 0), |(a, t), c| (a + c.stats.accepted[i], t + c.stats.attempted[i]));
            if att > 0 {
                acceptance.push((b.name(), acc as f64 / att as f64));
            }
        }
        let mut inefficiency = Vec::new();
        let mut inclusion = Vec::new();
        if let Some(first) = chains.first() {
            for (j, name) in first.names.iter().enumerate() {
                if name.contains("_I_") {
                    let (on, total) = chains.iter().fold((0.0, 0usize), |(s, t), c| {
                        (s + c.draws.iter().map(|r| r[j]).sum::<f64>(), t + c.draws.len())
                    });
                    inclusion.push((name.clone(), if total > 0 { on / total as f64 } else { 0.0 }));
                } else {
                    // IF of the first chain's column
                    let col: Vec<f64> = first.draws.iter().map(|r| r[j]).collect();
                    inefficiency.push((name.clone(), inefficiency_factor(&col).ok()));
                }
            }
        }
        Self {
            acceptance,
            inefficiency,
            inclusion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_sequence_is_clamped() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = inefficiency_factor(&x).unwrap();
        assert!(f > 0.0 && f < 0.01);
    }

    #[test]
    fn rejects_short_and_constant_chains() {
        assert!(inefficiency_factor(&[1.0; 50]).is_err());
        assert!(inefficiency_factor(&[1.0; 200]).is_err());
    }
}

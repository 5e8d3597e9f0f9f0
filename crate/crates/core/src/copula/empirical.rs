//! Empirical copula Ĉ(i/n, j/n) = (1/n) #{k : R1_k <= i, R2_k <= j}, with
//! average ranks for ties.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct EmpiricalCopula {
    n: usize,
    // counts[a * (n + 1) + b] = #{k : ceil(R1_k) <= a, ceil(R2_k) <= b}
    counts: Vec<u32>,
}

/// Average ranks (1-based) of `x`; tied values share the mean of their positions.
pub fn average_ranks<T: Real>(x: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

pub fn empirical_copula<T: Real>(y1: &[T], y2: &[T]) -> Result<EmpiricalCopula> {
    if y1.len() != y2.len() {
        return Err(Error::DimensionMismatch(format!(
            "samples have lengths {} and {}",
            y1.len(),
            y2.len()
        )));
    }
    let n = y1.len();
    if n < 2 {
        return Err(Error::Data(format!("empirical copula needs n >= 2, got {n}")));
    }
    let r1 = average_ranks(y1);
    let r2 = average_ranks(y2);
    let m = n + 1;
    let mut counts = vec![0u32; m * m];
    for (a, b) in r1.iter().zip(&r2) {
        counts[a.ceil() as usize * m + b.ceil() as usize] += 1;
    }
    for a in 0..m {
        for b in 1..m {
            counts[a * m + b] += counts[a * m + b - 1];
        }
    }
    for a in 1..m {
        for b in 0..m {
            counts[a * m + b] += counts[(a - 1) * m + b];
        }
    }
    Ok(EmpiricalCopula { n, counts })
}

impl EmpiricalCopula {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ĉ(i/n, j/n) for `0 <= i, j <= n`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.counts[i * (self.n + 1) + j] as f64 / self.n as f64
    }

    /// Full `n × n` matrix with entry `[i-1][j-1] = Ĉ(i/n, j/n)`.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (1..=self.n)
            .map(|i| (1..=self.n).map(|j| self.at(i, j)).collect())
            .collect()
    }

    /// Ĉ on an `m × m` grid of levels `q_a = a/m`, a = 1..m, rounding each
    /// level down to the nearest rank.
    pub fn grid(&self, m: usize) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(m * m);
        let idx = |a: usize| (a * self.n) / m;
        for a in 1..=m {
            for b in 1..=m {
                out.push((a as f64 / m as f64, b as f64 / m as f64, self.at(idx(a), idx(b))));
            }
        }
        out
    }
}

//! Log predictive scores of held-out observations from posterior draws.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::links::ParamBlock;
use crate::posterior::{Model, ModelData};

/// Batches for the numerical standard error.
pub const NSE_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LpsReport {
    pub label: String,
    pub total: f64,
    pub per_obs: Vec<f64>,
    /// Batch-means numerical standard error of `total`.
    pub nse: f64,
}

/// ln((1/n) Σ exp(x)); -inf terms are dropped, all -inf gives -inf.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return if m == f64::INFINITY { m } else { f64::NEG_INFINITY };
    }
    let s: f64 = x.iter().map(|v| (v - m).exp()).sum();
    m + (s / x.len() as f64).ln()
}

/// log p(y | x, draws) of every observation in `model`'s data. Rows of
/// the result are draws, columns observations.
pub fn draw_log_densities(model: &Model, draws: &[Vec<ParamBlock>]) -> Result<DMatrix<f64>> {
    if draws.is_empty() {
        return Err(domain("draw_log_densities", "no posterior draws"));
    }
    let rows: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|d| model.pointwise_log_density(d))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), model.n(), |d, i| rows[d][i]))
}

fn score(l: &DMatrix<f64>, draws: std::ops::Range<usize>) -> Vec<f64> {
    (0..l.ncols())
        .map(|i| {
            let col: Vec<f64> = draws.clone().map(|d| l[(d, i)]).collect();
            log_mean_exp(&col)
        })
        .collect()
}

/// Standard error of the total score from `batches` contiguous batches of
/// draws.
pub fn batch_means_nse(l: &DMatrix<f64>, batches: usize) -> Result<f64> {
    let n = l.nrows();
    if batches < 2 || n < batches {
        return Err(domain(
            "batch_means_nse",
            format!("{n} draws cannot form {batches} batches"),
        ));
    }
    let size = n / batches;
    let totals: Vec<f64> = (0..batches)
        .map(|b| score(l, b * size..(b + 1) * size).iter().sum())
        .collect();
    if totals.iter().any(|t| !t.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let mean = totals.iter().sum::<f64>() / batches as f64;
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (batches - 1) as f64;
    Ok((var / batches as f64).sqrt())
}

/// Score of a draw-by-observation log density matrix. With fewer draws
/// than [`NSE_BATCHES`] the standard error is NaN.
pub fn lps_from_matrix(label: &str, l: &DMatrix<f64>) -> Result<LpsReport> {
    if l.nrows() == 0 {
        return Err(domain("lps", "no posterior draws"));
    }
    let per_obs = score(l, 0..l.nrows());
    let nse = if l.nrows() < NSE_BATCHES {
        f64::NAN
    } else {
        batch_means_nse(l, NSE_BATCHES)?
    };
    Ok(LpsReport {
        label: label.to_string(),
        total: per_obs.iter().sum(),
        per_obs,
        nse,
    })
}

/// Score of the observations in `test` (a model over the held-out data)
/// under draws from the training posterior.
pub fn lps(label: &str, test: &Model, draws: &[Vec<ParamBlock>]) -> Result<LpsReport> {
    lps_from_matrix(label, &draw_log_densities(test, draws)?)
}

/// Rows of `a` followed by rows of `b`.
pub fn concat_data(a: &ModelData, b: &ModelData) -> Result<ModelData> {
    let stack = |p: &DMatrix<f64>, q: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        if p.ncols() != q.ncols() {
            return Err(Error::DimensionMismatch("designs have different widths".into()));
        }
        Ok(DMatrix::from_fn(p.nrows() + q.nrows(), p.ncols(), |i, j| {
            if i < p.nrows() {
                p[(i, j)]
            } else {
                q[(i - p.nrows(), j)]
            }
        }))
    };
    let y = [0, 1].map(|m| a.y[m].iter().chain(&b.y[m]).copied().collect());
    ModelData::new(
        y,
        [
            stack(&a.x[0], &b.x[0])?,
            stack(&a.x[1], &b.x[1])?,
            stack(&a.x[2], &b.x[2])?,
        ],
        a.names.clone(),
    )
}

/// Exact sequential score: before each test observation the posterior is
/// refitted on the training data plus all earlier test observations.
/// `fit` returns posterior draws for a model on the given data.
pub fn lps_sequential<F>(
    label: &str,
    template: &Model,
    train: &ModelData,
    test: &ModelData,
    fit: F,
) -> Result<LpsReport>
where
    F: Fn(&Model) -> Result<Vec<Vec<ParamBlock>>>,
{
    let mut columns = Vec::with_capacity(test.n());
    for i in 0..test.n() {
        let seen = concat_data(train, &test.slice(0..i))?;
        let fitted = fit(&Model::new(template.spec.clone(), seen, template.grid.clone())?)?;
        let point = Model::new(template.spec.clone(), test.slice(i..i + 1), template.grid.clone())?;
        let l = draw_log_densities(&point, &fitted)?;
        columns.push(l.column(0).into_owned());
    }
    let draws = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    let l = DMatrix::from_fn(draws, columns.len(), |d, i| columns[i][d]);
    lps_from_matrix(label, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_skips_impossible_draws() {
        let v = log_mean_exp(&[f64::NEG_INFINITY, 0.0]);
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_mean_exp(&[-1000.0, -1000.0]) + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn identical_draws_have_zero_nse() {
        let l = DMatrix::from_fn(40, 5, |_, i| -(i as f64));
        let r = lps_from_matrix("x", &l).unwrap();
        assert_eq!(r.nse, 0.0);
        assert!((r.total + 10.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_draws_for_batches() {
        let l = DMatrix::from_element(10, 3, 0.0);
        assert!(batch_means_nse(&l, NSE_BATCHES).is_err());
        assert!(lps_from_matrix("x", &l).unwrap().nse.is_nan());
        assert!(lps_from_matrix("x", &DMatrix::zeros(0, 3)).is_err());
    }
}

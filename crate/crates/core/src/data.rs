//! Daily price series, lagged return and volatility covariates,
//! standardization and the chronological train/test split.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::posterior::ModelData;

/// Leading observations dropped so truncated geometric sums have decayed.
pub const WARM_UP: usize = 250;

pub const COVARIATES: [&str; 9] = [
    "RM1",
    "RM5",
    "RM20",
    "CloseAbs95",
    "CloseAbs80",
    "MaxMin95",
    "MaxMin80",
    "CloseSqr95",
    "CloseSqr80",
];

/// Daily prices. Dates are ISO 8601 strings, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dates: Vec<String>,
    pub close: Vec<f64>,
    pub high: Option<Vec<f64>>,
    pub low: Option<Vec<f64>>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

impl Series {
    pub fn new(dates: Vec<String>, close: Vec<f64>, high: Option<Vec<f64>>, low: Option<Vec<f64>>) -> Result<Self> {
        let n = dates.len();
        if close.len() != n || high.as_ref().is_some_and(|h| h.len() != n) || low.as_ref().is_some_and(|l| l.len() != n)
        {
            return Err(Error::Data("series columns have different lengths".into()));
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "dates not strictly increasing at {} -> {}",
                dates[w],
                dates[w + 1]
            )));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&close) || !high.as_deref().is_none_or(positive) || !low.as_deref().is_none_or(positive) {
            return Err(Error::Data("prices must be positive and finite".into()));
        }
        let (high, low) = match (high, low) {
            (Some(h), Some(l)) => (Some(h), Some(l)),
            _ => (None, None),
        };
        Ok(Self {
            dates,
            close,
            high,
            low,
        })
    }

    /// Delimited text with a header containing `date` and `close`, and
    /// optionally `high` and `low`.
    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let di = column(&headers, "date").ok_or_else(|| Error::Data("missing `date` column".into()))?;
        let ci = column(&headers, "close").ok_or_else(|| Error::Data("missing `close` column".into()))?;
        let hi = column(&headers, "high");
        let li = column(&headers, "low");
        let both = hi.is_some() && li.is_some();
        let (mut dates, mut close, mut high, mut low) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize, what: &str| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Data(format!("row {}: bad {what} value", line + 2)))
            };
            dates.push(rec.get(di).unwrap_or_default().to_string());
            close.push(num(ci, "close")?);
            if both {
                high.push(num(hi.unwrap_or_default(), "high")?);
                low.push(num(li.unwrap_or_default(), "low")?);
            }
        }
        if !both {
            log::warn!("no high/low columns; MaxMin covariates are omitted");
        }
        Self::new(dates, close, both.then_some(high), both.then_some(low))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let f =
            std::fs::File::open(path.as_ref()).map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(f)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// 100 ln(p_t / p_{t-1}) for t = 1..n, dated by t.
    pub fn returns(&self) -> Vec<f64> {
        self.close.windows(2).map(|w| 100.0 * (w[1] / w[0]).ln()).collect()
    }

    fn pick(&self, idx: &[usize]) -> Self {
        let sel = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            dates: idx.iter().map(|&i| self.dates[i].clone()).collect(),
            close: sel(&self.close),
            high: self.high.as_deref().map(sel),
            low: self.low.as_deref().map(sel),
        }
    }
}

/// Both series restricted to their common dates.
pub fn inner_join(a: &Series, b: &Series) -> (Series, Series) {
    let (mut ia, mut ib) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ia.push(i);
                ib.push(j);
                i += 1;
                j += 1;
            }
        }
    }
    (a.pick(&ia), b.pick(&ib))
}

/// Responses with their covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub dates: Vec<String>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

impl Covariates {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            y: self.y[range.clone()].to_vec(),
            names: self.names.clone(),
            x: self.x.rows(range.start, range.len()).into_owned(),
        }
    }
}

// g_t = ρ g_{t-1} + (1-ρ) z_{t-lag}, starting from zero history.
fn geometric(z: &[f64], rho: f64, lag: usize) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    let mut g = 0.0;
    for t in 0..z.len() {
        if t >= lag {
            g = rho * g + (1.0 - rho) * z[t - lag];
        }
        out[t] = g;
    }
    out
}

fn trailing_sum(y: &[f64], window: usize) -> Vec<f64> {
    (0..y.len())
        .map(|t| y[t.saturating_sub(window)..t].iter().sum())
        .collect()
}

/// Covariates for each return after the warm-up, each built only from
/// data dated strictly before its row.
pub fn build_covariates(s: &Series) -> Result<Covariates> {
    let y = s.returns();
    if y.len() <= WARM_UP {
        return Err(Error::Data(format!(
            "{} returns; need more than the {WARM_UP}-observation warm-up",
            y.len()
        )));
    }
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
    let mut cols: Vec<(&str, Vec<f64>)> = vec![
        (
            "RM1",
            (0..y.len()).map(|t| if t >= 1 { y[t - 1] } else { 0.0 }).collect(),
        ),
        ("RM5", trailing_sum(&y, 5)),
        ("RM20", trailing_sum(&y, 20)),
        ("CloseAbs95", geometric(&abs, 0.95, 2)),
        ("CloseAbs80", geometric(&abs, 0.80, 2)),
    ];
    if let (Some(h), Some(l)) = (&s.high, &s.low) {
        // range of the price day matching return t is index t + 1
        let range: Vec<f64> = (0..y.len()).map(|t| (h[t + 1] / l[t + 1]).ln()).collect();
        cols.push(("MaxMin95", geometric(&range, 0.95, 1)));
        cols.push(("MaxMin80", geometric(&range, 0.80, 1)));
    }
    cols.push((
        "CloseSqr95",
        geometric(&sq, 0.95, 2).into_iter().map(f64::sqrt).collect(),
    ));
    cols.push((
        "CloseSqr80",
        geometric(&sq, 0.80, 2).into_iter().map(f64::sqrt).collect(),
    ));

    let n = y.len() - WARM_UP;
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i + WARM_UP]);
    Ok(Covariates {
        dates: s.dates[1 + WARM_UP..].to_vec(),
        y: y[WARM_UP..].to_vec(),
        names: cols.iter().map(|c| c.0.to_string()).collect(),
        x,
    })
}

/// Per-column mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(names: &[String], x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Data("need at least two rows to standardize".into()));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1) as f64;
            if !(v > 0.0) {
                return Err(Error::Data(format!("covariate {} is constant", names[j])));
            }
            mean.push(m);
            sd.push(v.sqrt());
        }
        Ok(Self {
            names: names.to_vec(),
            mean,
            sd,
        })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["covariate", "mean", "sd"])?;
        for ((n, m), s) in self.names.iter().zip(&self.mean).zip(&self.sd) {
            wr.write_record([n.clone(), format!("{m:e}"), format!("{s:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut names, mut mean, mut sd) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Format("bad standardizer row".into()))
            };
            names.push(rec.get(0).unwrap_or_default().to_string());
            mean.push(num(1)?);
            sd.push(num(2)?);
        }
        Ok(Self { names, mean, sd })
    }
}

/// First `fraction` of rows for training, the rest for testing; both
/// standardized with the training moments.
pub fn split_train_test(c: &Covariates, fraction: f64) -> Result<(Covariates, Covariates, Standardizer)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} outside (0, 1)")));
    }
    let n_train = (c.n() as f64 * fraction).round() as usize;
    if n_train < 2 || n_train >= c.n() {
        return Err(Error::Data(format!(
            "cannot split {} rows at fraction {fraction}",
            c.n()
        )));
    }
    let mut train = c.rows(0..n_train);
    let mut test = c.rows(n_train..c.n());
    let scaler = Standardizer::fit(&c.names, &train.x)?;
    train.x = scaler.apply(&train.x);
    test.x = scaler.apply(&test.x);
    Ok((train, test, scaler))
}

/// Dates, responses and standardized covariates as delimited text.
pub fn write_design_csv<W: Write>(c: &Covariates, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string(), "y".to_string()];
    header.extend(c.names.iter().cloned());
    wr.write_record(&header)?;
    for i in 0..c.n() {
        let mut row = vec![c.dates[i].clone(), format!("{:e}", c.y[i])];
        row.extend((0..c.x.ncols()).map(|j| format!("{:e}", c.x[(i, j)])));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Train and test data of the bivariate model.
#[derive(Debug, Clone)]
pub struct PairData {
    pub train: ModelData,
    pub test: ModelData,
    pub train_dates: Vec<String>,
    pub test_dates: Vec<String>,
    pub covariates: [(Covariates, Covariates); 2],
    pub scalers: [Standardizer; 2],
}

/// Join two series on dates, build and standardize each margin's
/// covariates and split chronologically. `keep` restricts the covariates
/// to the listed names (all when empty).
pub fn prepare_pair(a: &Series, b: &Series, fraction: f64, keep: &[String]) -> Result<PairData> {
    let (a, b) = inner_join(a, b);
    let select = |c: Covariates| -> Result<Covariates> {
        if keep.is_empty() {
            return Ok(c);
        }
        let idx: Vec<usize> = keep
            .iter()
            .filter_map(|k| c.names.iter().position(|n| n == k))
            .collect();
        if let Some(missing) = keep.iter().find(|k| !c.names.contains(k)) {
            return Err(Error::Config(format!("unknown or unavailable covariate {missing}")));
        }
        Ok(Covariates {
            names: idx.iter().map(|&j| c.names[j].clone()).collect(),
            x: c.x.select_columns(&idx),
            ..c
        })
    };
    let ca = select(build_covariates(&a)?)?;
    let cb = select(build_covariates(&b)?)?;
    let (ta, sa, za) = split_train_test(&ca, fraction)?;
    let (tb, sb, zb) = split_train_test(&cb, fraction)?;
    let train = ModelData::with_union(
        [ta.y.clone(), tb.y.clone()],
        ta.x.clone(),
        tb.x.clone(),
        ta.names.clone(),
        tb.names.clone(),
    )?;
    let test = ModelData::with_union(
        [sa.y.clone(), sb.y.clone()],
        sa.x.clone(),
        sb.x.clone(),
        sa.names.clone(),
        sb.names.clone(),
    )?;
    Ok(PairData {
        train,
        test,
        train_dates: ta.dates.clone(),
        test_dates: sa.dates.clone(),
        covariates: [(ta, sa), (tb, sb)],
        scalers: [za, zb],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(prices: &[f64]) -> Series {
        let dates = (0..prices.len()).map(|i| format!("2000-01-{:05}", i)).collect();
        Series::new(dates, prices.to_vec(), None, None).unwrap()
    }

    #[test]
    fn returns_are_log_differences() {
        let s = series(&[100.0, 110.0, 99.0]);
        let r = s.returns();
        assert!((r[0] - 100.0 * 1.1f64.ln()).abs() < 1e-12);
        assert!((r[1] - 100.0 * (0.9f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unordered_dates() {
        let r = Series::new(vec!["b".into(), "a".into()], vec![1.0, 2.0], None, None);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn join_keeps_common_dates() {
        let a = Series::new(
            vec!["1".into(), "2".into(), "4".into()],
            vec![1.0, 2.0, 3.0],
            None,
            None,
        )
        .unwrap();
        let b = Series::new(
            vec!["2".into(), "3".into(), "4".into()],
            vec![5.0, 6.0, 7.0],
            None,
            None,
        )
        .unwrap();
        let (ja, jb) = inner_join(&a, &b);
        assert_eq!(ja.dates, vec!["2", "4"]);
        assert_eq!(jb.close, vec![5.0, 7.0]);
    }

    #[test]
    fn csv_without_range_drops_maxmin() {
        let mut text = String::from("date,close\n");
        for i in 0..300 {
            text.push_str(&format!("d{:04},{}\n", i, 100.0 + (i as f64 * 0.3).sin()));
        }
        let s = Series::from_reader(text.as_bytes()).unwrap();
        let c = build_covariates(&s).unwrap();
        assert_eq!(c.names.len(), 7);
        assert!(!c.names.iter().any(|n| n.starts_with("MaxMin")));
        assert_eq!(c.n(), 299 - WARM_UP);
    }

    #[test]
    fn split_sizes() {
        let n = 100;
        let c = Covariates {
            dates: (0..n).map(|i| i.to_string()).collect(),
            y: vec![0.0; n],
            names: vec!["a".into()],
            x: DMatrix::from_fn(n, 1, |i, _| (i as f64).sin()),
        };
        let (tr, te, _) = split_train_test(&c, 0.8).unwrap();
        assert_eq!((tr.n(), te.n()), (80, 20));
        assert!(split_train_test(&c, 1.0).is_err());
    }
}

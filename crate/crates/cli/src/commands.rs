use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use covcop::copula::{upper_tail, EmpiricalCopula, TauGrid};
use covcop::data::{prepare_pair, Series};
use covcop::evaluation::{lps, lps_sequential, LpsReport};
use covcop::links::ParamBlock;
use covcop::mcmc::{blocks_from_row, init_by_optimization, run_chain, run_chains, ChainDiagnostics, ChainOutput};
use covcop::posterior::{BlockId, Model, ModelData, ModelSpec, N_BLOCKS};
use covcop::settings::reference_design;
use covcop::simulate::{simulate as draw_synthetic, SimulationSpec};

use crate::config::RunConfig;
use crate::CliError;

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

fn out_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::output(format!("{}: {e}", path.display()))
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

/// Train and test data with row labels.
struct Loaded {
    train: ModelData,
    test: ModelData,
    train_dates: Vec<String>,
    test_dates: Vec<String>,
}

fn read_design(path: &Path) -> Result<(Vec<String>, ModelData), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::data(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (Some(i1), Some(i2)) = (find("y1"), find("y2")) else {
        return Err(CliError::data(format!("{}: needs y1 and y2 columns", path.display())));
    };
    let date = find("date");
    let cols = |prefix: &str| -> Vec<(usize, String)> {
        headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|n| (i, n.to_string())))
            .collect()
    };
    let (c1, c2) = (cols("m1:"), cols("m2:"));
    let mut dates = Vec::new();
    let mut y = [Vec::new(), Vec::new()];
    let mut rows: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::data(format!("{}: bad number in row {}", path.display(), line + 2)))
        };
        dates.push(
            date.and_then(|d| rec.get(d))
                .map_or_else(|| (line + 1).to_string(), str::to_string),
        );
        y[0].push(num(i1)?);
        y[1].push(num(i2)?);
        for (m, c) in [&c1, &c2].into_iter().enumerate() {
            rows[m].push(c.iter().map(|(i, _)| num(*i)).collect::<Result<_, _>>()?);
        }
    }
    let n = dates.len();
    let mat = |r: &[Vec<f64>], d: usize| DMatrix::from_fn(n, d, |i, j| r[i][j]);
    let data = ModelData::with_union(
        y,
        mat(&rows[0], c1.len()),
        mat(&rows[1], c2.len()),
        c1.into_iter().map(|c| c.1).collect(),
        c2.into_iter().map(|c| c.1).collect(),
    )?;
    Ok((dates, data))
}

/// Keep only the named covariates in each margin (all when `keep` is None).
fn restrict(data: &ModelData, keep: Option<&[String]>) -> Result<ModelData, CliError> {
    let Some(keep) = keep else {
        return Ok(data.clone());
    };
    for k in keep {
        if !data.names[0].contains(k) && !data.names[1].contains(k) {
            return Err(CliError::config(format!("unknown covariate {k}")));
        }
    }
    let idx = |m: usize| -> Vec<usize> {
        (0..data.names[m].len())
            .filter(|&j| keep.contains(&data.names[m][j]))
            .collect()
    };
    let (a, b) = (idx(0), idx(1));
    let names = |m: usize, ix: &[usize]| ix.iter().map(|&j| data.names[m][j].clone()).collect();
    Ok(ModelData::with_union(
        data.y.clone(),
        data.x[0].select_columns(&a),
        data.x[1].select_columns(&b),
        names(0, &a),
        names(1, &b),
    )?)
}

fn load_data(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let keep: Option<Vec<String>> = if cfg.no_covariates {
        Some(Vec::new())
    } else if cfg.covariates.is_empty() {
        None
    } else {
        Some(cfg.covariates.clone())
    };
    let loaded = if let Some(p) = cfg.path(&cfg.design_file) {
        let (dates, data) = read_design(&p)?;
        let n = data.n();
        let n_train = (n as f64 * cfg.train_fraction).round() as usize;
        if n_train < 2 || n_train >= n {
            return Err(CliError::data(format!(
                "cannot split {n} rows at {}",
                cfg.train_fraction
            )));
        }
        Loaded {
            train: data.slice(0..n_train),
            test: data.slice(n_train..n),
            train_dates: dates[..n_train].to_vec(),
            test_dates: dates[n_train..].to_vec(),
        }
    } else {
        let (Some(a), Some(b)) = (cfg.path(&cfg.data_1), cfg.path(&cfg.data_2)) else {
            return Err(CliError::config("set design_file or both data_1 and data_2".into()));
        };
        let pair = prepare_pair(&Series::read_csv(a)?, &Series::read_csv(b)?, cfg.train_fraction, &[])?;
        Loaded {
            train: pair.train,
            test: pair.test,
            train_dates: pair.train_dates,
            test_dates: pair.test_dates,
        }
    };
    Ok(Loaded {
        train: restrict(&loaded.train, keep.as_deref())?,
        test: restrict(&loaded.test, keep.as_deref())?,
        ..loaded
    })
}

fn load_grid(cfg: &RunConfig) -> Result<Arc<TauGrid<f64>>, CliError> {
    match cfg.path(&cfg.taugrid_file) {
        Some(p) => Ok(Arc::new(TauGrid::load(p)?)),
        None => {
            log::info!("building {0}x{0} tau table", cfg.grid_resolution);
            Ok(Arc::new(TauGrid::build(
                cfg.grid_resolution,
                cfg.grid_resolution,
                covcop::copula::grid::DEFAULT_LOWER,
                covcop::copula::grid::DEFAULT_UPPER,
            )?))
        }
    }
}

fn build_model(cfg: &RunConfig, data: ModelData, grid: Arc<TauGrid<f64>>) -> Result<Model, CliError> {
    let lambda_link = cfg.lambda_link()?;
    let priors = cfg.priors()?.block_priors(&data, lambda_link)?;
    let mut select = [false; N_BLOCKS];
    for b in BlockId::SWEEP {
        select[b.index()] = if b.is_copula() {
            cfg.select_copula
        } else {
            cfg.select_margins
        };
    }
    let spec = ModelSpec {
        priors,
        lambda_link,
        tau_mode: cfg.tau_mode()?,
        rotation: cfg.rotation()?,
        select,
        independence: cfg.independence,
    };
    Ok(Model::new(spec, data, grid)?)
}

fn fit_chains(cfg: &RunConfig, model: &Model) -> Result<Vec<ChainOutput>, CliError> {
    let init = init_by_optimization(model, None, &cfg.init())?;
    log::info!(
        "initial log posterior {:.4} (converged: {}, two-stage: {})",
        init.log_posterior,
        init.converged,
        init.two_stage
    );
    Ok(run_chains(model, &init.state, &cfg.chain(), cfg.seed, cfg.chains)?)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn evenly_spaced<T: Clone>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max || max == 0 {
        return v.to_vec();
    }
    (0..max).map(|k| v[k * v.len() / max].clone()).collect()
}

fn write_draws(path: &Path, chains: &[ChainOutput]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let e = out_err(path);
    let mut header = vec!["chain".to_string(), "draw".into(), "log_posterior".into()];
    header.extend(chains[0].names.iter().cloned());
    w.write_record(&header).map_err(&e)?;
    for (c, out) in chains.iter().enumerate() {
        for (k, row) in out.draws.iter().enumerate() {
            let mut rec = vec![c.to_string(), k.to_string(), fmt(out.log_posterior[k])];
            rec.extend(row.iter().map(|v| fmt(*v)));
            w.write_record(&rec).map_err(&e)?;
        }
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

// One row per coefficient: posterior mean, sd, 90% interval, inclusion
// frequency and inefficiency factor.
fn write_summary(path: &Path, model: &Model, chains: &[ChainOutput], diag: &ChainDiagnostics) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let e = out_err(path);
    w.write_record([
        "block",
        "covariate",
        "mean",
        "sd",
        "q05",
        "q95",
        "inclusion",
        "inefficiency",
    ])
    .map_err(&e)?;
    let names = &chains[0].names;
    let column = |j: usize| -> Vec<f64> { chains.iter().flat_map(|c| c.draws.iter().map(move |r| r[j])).collect() };
    let mut j = 0;
    for b in BlockId::SWEEP {
        let covs = &model.data.names[b.design()];
        let d = covs.len();
        for k in 0..=d {
            let mut v = column(j + k);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            v.sort_by(f64::total_cmp);
            let inclusion = if k == 0 {
                1.0
            } else {
                let c = column(j + d + k);
                c.iter().sum::<f64>() / c.len() as f64
            };
            let ineff = diag
                .inefficiency
                .iter()
                .find(|(name, _)| name == &names[j + k])
                .and_then(|(_, f)| *f)
                .map_or_else(String::new, fmt);
            let cov = if k == 0 {
                "intercept".to_string()
            } else {
                covs[k - 1].clone()
            };
            w.write_record([
                b.name(),
                cov,
                fmt(mean),
                fmt(sd),
                fmt(quantile(&v, 0.05)),
                fmt(quantile(&v, 0.95)),
                fmt(inclusion),
                ineff,
            ])
            .map_err(&e)?;
        }
        j += 1 + 2 * d;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

fn write_acceptance(path: &Path, chains: &[ChainOutput]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let e = out_err(path);
    w.write_record(["block", "acceptance", "degenerate", "random_walk_fallback"])
        .map_err(&e)?;
    for b in BlockId::SWEEP {
        let i = b.index();
        let sum = |f: &dyn Fn(&ChainOutput) -> usize| chains.iter().map(f).sum::<usize>();
        let att = sum(&|c| c.stats.attempted[i]);
        if att == 0 {
            continue;
        }
        let rate = sum(&|c| c.stats.accepted[i]) as f64 / att as f64;
        w.write_record([
            b.name(),
            fmt(rate),
            sum(&|c| c.stats.degenerate[i]).to_string(),
            sum(&|c| c.stats.fallback[i]).to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

// Posterior mean and 90% band of λ_L, λ_U and τ at each training date.
fn write_features(path: &Path, model: &Model, dates: &[String], draws: &[Vec<ParamBlock>]) -> Result<(), CliError> {
    let n = model.n();
    let mut series: [Vec<Vec<f64>>; 3] = [vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]];
    for blocks in draws {
        let Ok(s) = model.state(blocks.clone()) else {
            continue;
        };
        for i in 0..n {
            series[0][i].push(s.lambda_l()[i]);
            series[1][i].push(upper_tail(s.theta()[i]));
            series[2][i].push(s.tau()[i]);
        }
    }
    let mut w = writer(path)?;
    let e = out_err(path);
    let mut header = vec!["date".to_string()];
    for f in ["lambda_l", "lambda_u", "tau"] {
        header.extend([format!("{f}_mean"), format!("{f}_q05"), format!("{f}_q95")]);
    }
    w.write_record(&header).map_err(&e)?;
    for i in 0..n {
        let mut rec = vec![dates[i].clone()];
        for s in &mut series {
            let v = &mut s[i];
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            rec.extend([fmt(mean), fmt(quantile(v, 0.05)), fmt(quantile(v, 0.95))]);
        }
        w.write_record(&rec).map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

pub fn fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let grid = load_grid(cfg)?;
    let model = build_model(cfg, data.train, grid)?;
    log::info!(
        "fitting {} observations, {} chains x {} sweeps",
        model.n(),
        cfg.chains,
        cfg.sweeps
    );
    let chains = fit_chains(cfg, &model)?;
    let diag = ChainDiagnostics::from_chains(&chains);
    for (b, a) in &diag.acceptance {
        log::info!("acceptance {b}: {a:.3}");
    }
    write_draws(&out.join("draws.csv"), &chains)?;
    write_summary(&out.join("summary.csv"), &model, &chains, &diag)?;
    write_acceptance(&out.join("acceptance.csv"), &chains)?;
    let rows: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    let draws = evenly_spaced(&rows, cfg.feature_draws)
        .into_iter()
        .map(|r| blocks_from_row(&model, r))
        .collect::<Result<Vec<_>, _>>()?;
    write_features(&out.join("features_timeseries.csv"), &model, &data.train_dates, &draws)?;
    Ok(())
}

fn read_draws(path: &Path, model: &Model, max: usize) -> Result<Vec<Vec<ParamBlock>>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .skip(3)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no draws", path.display())));
    }
    evenly_spaced(&rows, max)
        .iter()
        .map(|r| blocks_from_row(model, r).map_err(|e| CliError::data(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_lps(out: &Path, report: &LpsReport, dates: &[String], draws: usize) -> Result<(), CliError> {
    let path = out.join("lps.csv");
    let mut w = writer(&path)?;
    let e = out_err(&path);
    w.write_record(["model", "lps", "nse", "n_test", "draws"]).map_err(&e)?;
    w.write_record([
        report.label.clone(),
        fmt(report.total),
        fmt(report.nse),
        report.per_obs.len().to_string(),
        draws.to_string(),
    ])
    .map_err(&e)?;
    w.flush().map_err(|x| CliError::output(x.to_string()))?;

    let path = out.join("lps_per_obs.csv");
    let mut w = writer(&path)?;
    let e = out_err(&path);
    w.write_record(["date", "log_predictive_density"]).map_err(&e)?;
    for (d, v) in dates.iter().zip(&report.per_obs) {
        w.write_record([d.clone(), fmt(*v)]).map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let grid = load_grid(cfg)?;
    let train = build_model(cfg, data.train.clone(), grid.clone())?;
    let test = build_model(cfg, data.test.clone(), grid)?;
    let (report, draws) = if cfg.eval_sequential {
        log::info!("sequential refitting over {} test observations", test.n());
        let fit = |m: &Model| -> covcop::Result<Vec<Vec<ParamBlock>>> {
            let init = init_by_optimization(m, None, &cfg.init())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
            let chain = run_chain(m, init.state, &cfg.chain(), &mut rng)?;
            evenly_spaced(&chain.draws, cfg.eval_max_draws)
                .iter()
                .map(|r| blocks_from_row(m, r))
                .collect()
        };
        let r = lps_sequential(&cfg.eval_label, &train, &data.train, &data.test, fit)?;
        (r, (cfg.sweeps - cfg.burn_in).min(cfg.eval_max_draws))
    } else {
        let path = cfg.path(&cfg.eval_draws_file).unwrap_or_else(|| out.join("draws.csv"));
        let draws = read_draws(&path, &train, cfg.eval_max_draws)?;
        (lps(&cfg.eval_label, &test, &draws)?, draws.len())
    };
    log::info!("{}: LPS {:.3} (nse {:.3})", report.label, report.total, report.nse);
    write_lps(out, &report, &data.test_dates, draws)
}

// Rows `block, b0, slope...` in any block order.
fn read_truth(path: &Path) -> Result<Vec<ParamBlock>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut blocks: Vec<Option<ParamBlock>> = vec![None; N_BLOCKS];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(e.to_string()))?;
        let name = rec.get(0).unwrap_or_default();
        let b = BlockId::SWEEP
            .iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| CliError::config(format!("{}: unknown block {name}", path.display())))?;
        let v: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let Some((&b0, slopes)) = v.split_first() else {
            return Err(CliError::config(format!(
                "{}: block {name} has no intercept",
                path.display()
            )));
        };
        blocks[b.index()] = Some(ParamBlock::new(
            b0,
            DVector::from_column_slice(slopes),
            vec![true; slopes.len()],
        )?);
    }
    blocks
        .into_iter()
        .zip(BlockId::SWEEP)
        .map(|(b, id)| b.ok_or_else(|| CliError::config(format!("{}: block {} missing", path.display(), id.name()))))
        .collect()
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut spec: SimulationSpec = reference_design(cfg.sim_n);
    if let Some(p) = cfg.path(&cfg.sim_truth_file) {
        spec.blocks = read_truth(&p)?;
        spec.n_covariates = [spec.blocks[0].dim(), spec.blocks[4].dim()];
    }
    spec.ar = cfg.sim_ar;
    spec.lambda_link = cfg.lambda_link()?;
    spec.tau_mode = cfg.tau_mode()?;
    spec.rotation = cfg.rotation()?;
    let grid = load_grid(cfg)?;
    let sim = draw_synthetic(&spec, &grid, cfg.seed)?;
    let d = &sim.data;

    let path = out.join("synthetic.csv");
    let mut w = writer(&path)?;
    let e = out_err(&path);
    let mut header = vec!["date".to_string(), "y1".into(), "y2".into()];
    header.extend(d.names[2].iter().cloned());
    w.write_record(&header).map_err(&e)?;
    for i in 0..d.n() {
        let mut rec = vec![(i + 1).to_string(), fmt(d.y[0][i]), fmt(d.y[1][i])];
        rec.extend(d.x[2].row(i).iter().map(|v| fmt(*v)));
        w.write_record(&rec).map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))?;

    let path = out.join("synthetic_features.csv");
    let mut w = writer(&path)?;
    let e = out_err(&path);
    w.write_record(["date", "lambda_l", "tau", "u1", "u2"]).map_err(&e)?;
    for i in 0..d.n() {
        w.write_record([
            (i + 1).to_string(),
            fmt(sim.lambda_l[i]),
            fmt(sim.tau[i]),
            fmt(sim.u[0][i]),
            fmt(sim.u[1][i]),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))?;

    let path = out.join("truth.csv");
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(&path)
        .map_err(|e| CliError::output(format!("{}: {e}", path.display())))?;
    for b in BlockId::SWEEP {
        let blk = &spec.blocks[b.index()];
        let mut rec = vec![b.name(), fmt(blk.beta0)];
        rec.extend(blk.beta.iter().map(|v| fmt(*v)));
        w.write_record(&rec).map_err(out_err(&path))?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

pub fn tau_table(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = load_grid(cfg)?;
    let violations = grid.frontier_violations(1e-5).len();
    if violations > 0 {
        log::warn!("{violations} grid nodes lie above the feasibility frontier");
    }
    let path = out.join("taugrid.bin");
    grid.save(&path)
        .map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

pub fn empirical_copula(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let y: [Vec<f64>; 2] = [0, 1].map(|m| data.train.y[m].iter().chain(&data.test.y[m]).copied().collect());
    let c: EmpiricalCopula = covcop::copula::empirical_copula(&y[0], &y[1])?;
    let path = out.join("empcopula.csv");
    let mut w = writer(&path)?;
    let e = out_err(&path);
    w.write_record(["q1", "q2", "c"]).map_err(&e)?;
    for (a, b, v) in c.grid(cfg.empcopula_levels) {
        w.write_record([fmt(a), fmt(b), fmt(v)]).map_err(&e)?;
    }
    w.flush().map_err(|x| CliError::output(x.to_string()))
}

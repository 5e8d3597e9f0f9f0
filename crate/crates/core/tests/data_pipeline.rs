use covcop::data::{
    build_covariates, inner_join, prepare_pair, split_train_test, write_design_csv, Series, Standardizer, COVARIATES,
    WARM_UP,
};
use covcop::Error;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

fn dates(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("d{i:05}")).collect()
}

fn random_walk(n: usize, seed: u64) -> Series {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![100.0];
    for _ in 1..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let last = *p.last().unwrap();
        p.push(last * (0.0002 + 0.012 * z).exp());
    }
    let high: Vec<f64> = p.iter().map(|v| v * (1.0 + 0.01 * rng.random::<f64>())).collect();
    let low: Vec<f64> = p.iter().map(|v| v * (1.0 - 0.01 * rng.random::<f64>())).collect();
    Series::new(dates(n), p, Some(high), Some(low)).unwrap()
}

fn col(c: &covcop::data::Covariates, name: &str) -> Vec<f64> {
    let j = c.names.iter().position(|n| n == name).unwrap();
    c.x.column(j).iter().copied().collect()
}

#[test]
fn full_covariate_set() {
    let c = build_covariates(&random_walk(400, 1)).unwrap();
    assert_eq!(c.names, COVARIATES.map(String::from).to_vec());
    assert_eq!(c.n(), 400 - 1 - WARM_UP);
    assert_eq!(c.dates[0], format!("d{:05}", WARM_UP + 1));
}

#[test]
fn constant_absolute_returns() {
    let c_abs = 1.3;
    let p: Vec<f64> = (0..400)
        .map(|i| 50.0 * if i % 2 == 0 { 1.0 } else { (c_abs / 100.0f64).exp() })
        .collect();
    let c = build_covariates(&Series::new(dates(400), p, None, None).unwrap()).unwrap();
    for name in ["CloseAbs95", "CloseSqr95", "CloseAbs80", "CloseSqr80"] {
        for v in col(&c, name) {
            assert!((v - c_abs).abs() < 1e-5 * c_abs, "{name}: {v}");
        }
    }
}

#[test]
fn recursion_matches_direct_sums() {
    let s = random_walk(500, 2);
    let y = s.returns();
    let c = build_covariates(&s).unwrap();
    let direct = |t: usize, rho: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        (0..=t - 2)
            .map(|k| (1.0 - rho) * rho.powi(k as i32) * f(y[t - 2 - k]))
            .sum()
    };
    let abs95 = col(&c, "CloseAbs95");
    let sqr80 = col(&c, "CloseSqr80");
    for (i, t) in (WARM_UP..y.len()).enumerate() {
        assert!((abs95[i] - direct(t, 0.95, &|v| v.abs())).abs() < 1e-10);
        assert!((sqr80[i] - direct(t, 0.80, &|v| v * v).sqrt()).abs() < 1e-10);
        if i > 0 {
            assert!((abs95[i] - (0.95 * abs95[i - 1] + 0.05 * y[t - 2].abs())).abs() < 1e-10);
        }
    }
    let range: Vec<f64> = (0..s.len())
        .map(|k| (s.high.as_ref().unwrap()[k] / s.low.as_ref().unwrap()[k]).ln())
        .collect();
    let mm = col(&c, "MaxMin95");
    for (i, t) in (WARM_UP..y.len()).enumerate() {
        // return t ends on price day t + 1; the range of day t is the latest one known
        let want: f64 = (0..t).map(|k| 0.05 * 0.95f64.powi(k as i32) * range[t - k]).sum();
        assert!((mm[i] - want).abs() < 1e-10);
    }
}

#[test]
fn momentum_by_hand() {
    let s = random_walk(300, 3);
    let c = build_covariates(&s).unwrap();
    let (rm1, rm5, rm20) = (col(&c, "RM1"), col(&c, "RM5"), col(&c, "RM20"));
    for (i, t) in (WARM_UP..s.len() - 1).enumerate() {
        // row i is the return from price t to t + 1
        let p = &s.close;
        assert!((rm1[i] - 100.0 * (p[t] / p[t - 1]).ln()).abs() < 1e-10);
        assert!((rm5[i] - 100.0 * (p[t] / p[t - 5]).ln()).abs() < 1e-10);
        assert!((rm20[i] - 100.0 * (p[t] / p[t - 20]).ln()).abs() < 1e-10);
        assert!((c.y[i] - 100.0 * (p[t + 1] / p[t]).ln()).abs() < 1e-12);
    }
}

#[test]
fn covariates_use_only_the_past() {
    let s = random_walk(420, 4);
    let base = build_covariates(&s).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for cut in [WARM_UP + 1, 300, 419] {
        let mut t = s.clone();
        for k in cut..t.len() {
            let f = 0.5 + rng.random::<f64>();
            t.close[k] *= f;
            t.high.as_mut().unwrap()[k] *= f * 1.02;
            t.low.as_mut().unwrap()[k] *= f * 0.97;
        }
        let moved = build_covariates(&t).unwrap();
        // rows whose return ends on or before price day `cut` see no changed input
        for i in 0..base.n() {
            let day = i + WARM_UP + 1;
            if day <= cut {
                assert_eq!(base.x.row(i), moved.x.row(i), "row {i}, cut {cut}");
            }
        }
    }
}

#[test]
fn chronological_split() {
    let s = random_walk(WARM_UP + 101, 6);
    let c = build_covariates(&s).unwrap();
    assert_eq!(c.n(), 100);
    let (train, test, scaler) = split_train_test(&c, 0.8).unwrap();
    assert_eq!((train.n(), test.n()), (80, 20));
    assert_eq!(train.dates[..], c.dates[..80]);
    assert_eq!(test.dates[..], c.dates[80..]);
    for j in 0..train.x.ncols() {
        let m = train.x.column(j).mean();
        let v = train.x.column(j).iter().map(|a| (a - m).powi(2)).sum::<f64>() / 79.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }
    // the test window is scaled by training moments, so its means are off zero
    let off = (0..test.x.ncols())
        .filter(|&j| test.x.column(j).mean().abs() > 1e-3)
        .count();
    assert!(off > 0);
    let mut buf = Vec::new();
    scaler.write_csv(&mut buf).unwrap();
    let back = Standardizer::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.names, scaler.names);
    for j in 0..back.mean.len() {
        assert!((back.mean[j] - scaler.mean[j]).abs() <= 1e-15 * scaler.mean[j].abs());
    }
    assert!(matches!(split_train_test(&c, 1.0), Err(Error::Config(_))));
    assert!(matches!(split_train_test(&c, 0.001), Err(Error::Data(_))));
}

#[test]
fn reading_price_files() {
    let mut text = String::from("Date,Open,High,Low,Close\n");
    for i in 0..320 {
        let p = 100.0 + (i as f64 * 0.1).sin();
        text.push_str(&format!("d{i:04},{p},{},{},{p}\n", p + 0.5, p - 0.5));
    }
    let s = Series::from_reader(text.as_bytes()).unwrap();
    assert_eq!(s.len(), 320);
    assert!(s.high.is_some());
    assert_eq!(build_covariates(&s).unwrap().names.len(), 9);

    let bad = "date,close\nd1,100\nd2,-1\n";
    assert!(matches!(Series::from_reader(bad.as_bytes()), Err(Error::Data(_))));
    let unparsable = "date,close\nd1,abc\n";
    assert!(matches!(
        Series::from_reader(unparsable.as_bytes()),
        Err(Error::Data(_))
    ));
    assert!(Series::from_reader("when,close\nd1,1\n".as_bytes()).is_err());
    // a lone high column is dropped with the missing low
    let s = Series::new(dates(3), vec![1.0, 2.0, 3.0], Some(vec![1.0, 2.0, 3.0]), None).unwrap();
    assert!(s.high.is_none() && s.low.is_none());
    let short = random_walk(WARM_UP, 7);
    assert!(matches!(build_covariates(&short), Err(Error::Data(_))));
}

#[test]
fn paired_data_layout() {
    let a = random_walk(400, 8);
    let mut b = random_walk(410, 9);
    // b has ten extra leading days that the join drops
    b.dates = (0..410)
        .map(|i| {
            if i < 10 {
                format!("a{i:05}")
            } else {
                format!("d{:05}", i - 10)
            }
        })
        .collect();
    b.dates.sort();
    let keep = vec!["RM1".to_string(), "CloseAbs95".to_string()];
    let pair = prepare_pair(&a, &b, 0.8, &keep).unwrap();
    assert_eq!(pair.train.x[0].ncols(), 2);
    assert_eq!(pair.train.x[2].ncols(), 4);
    assert_eq!(
        pair.train.names[2],
        vec!["m1:RM1", "m1:CloseAbs95", "m2:RM1", "m2:CloseAbs95"]
    );
    assert_eq!(pair.train.n() + pair.test.n(), 400 - 1 - WARM_UP);
    assert!(pair.train_dates.last().unwrap() < pair.test_dates.first().unwrap());
    assert!(matches!(
        prepare_pair(&a, &b, 0.8, &["Volume".to_string()]),
        Err(Error::Config(_))
    ));
    let (ja, jb) = inner_join(&a, &b);
    assert_eq!(ja.dates, jb.dates);

    let mut out = Vec::new();
    write_design_csv(&pair.covariates[0].0, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("date,y,RM1,CloseAbs95\n"));
    assert_eq!(text.lines().count(), pair.train.n() + 1);
}

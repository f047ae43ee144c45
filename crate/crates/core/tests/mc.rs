use corrlab::linalg::CorrelationMatrix;
use corrlab::mc::{
    fit_linear, fit_surrogate, read_records, regime_findings, run, shapley, shapley_values, write_records,
    MatrixSource, McConfig, McRecord, ModelKind, SurrogateModel, SurrogateSource, Target,
};
use corrlab::portfolio::Method;
use corrlab::provenance::Provenance;
use corrlab::samplers::RegimeLabel;
use corrlab::{Error, Result, Seed};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn config(count: usize, seed: u64) -> McConfig {
    McConfig { dim: 8, count, regimes: RegimeLabel::ALL.to_vec(), t_in: 120, t_out: 120, seed: Seed(seed) }
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("x{i}")).collect()
}

fn gaussian_design(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..k).map(|j| rng.sample::<f64, _>(StandardNormal) * (j + 1) as f64 + j as f64).collect()).collect()
}

#[test]
fn record_cardinality_and_regime_counts() {
    let out = run(&config(10, 1), &SurrogateSource::default()).unwrap();
    assert_eq!(out.records.len(), 30);
    assert!(out.skipped.is_empty());
    for r in RegimeLabel::ALL {
        assert_eq!(out.records.iter().filter(|x| x.regime == r).count(), 10);
    }
    for rec in &out.records {
        assert_eq!(rec.hrp_minus_ivp_outvol, rec.hrp.out_sample_vol - rec.ivp.out_sample_vol);
        assert_eq!(rec.seed, Seed(1).stream(rec.index));
    }
}

#[test]
fn identical_across_thread_counts() {
    let go = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&config(8, 77), &SurrogateSource::default()).unwrap().records)
    };
    let a = go(1);
    let b = go(4);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn records_depend_only_on_their_index() {
    let full = run(&config(6, 5), &SurrogateSource::default()).unwrap().records;
    let mut only_rally = config(6, 5);
    only_rally.regimes = vec![RegimeLabel::Rally];
    let part = run(&only_rally, &SurrogateSource::default()).unwrap().records;
    let rally: Vec<&McRecord> = full.iter().filter(|r| r.regime == RegimeLabel::Rally).collect();
    assert_eq!(part.len(), rally.len());
    for (a, b) in part.iter().zip(rally) {
        assert_eq!(a, b);
    }
}

struct Flaky;

impl MatrixSource for Flaky {
    fn draw(&self, regime: RegimeLabel, dim: usize, _seed: Seed) -> Result<CorrelationMatrix> {
        if regime == RegimeLabel::Stressed {
            Err(Error::NumericalFailure("generator produced NaN".into()))
        } else {
            Ok(CorrelationMatrix::identity(dim))
        }
    }

    fn name(&self) -> String {
        "flaky".into()
    }
}

#[test]
fn failed_draws_are_skipped_with_reason() {
    let out = run(&config(4, 2), &Flaky).unwrap();
    assert_eq!(out.skipped.len(), 4);
    assert!(out.skipped.iter().all(|s| s.regime == RegimeLabel::Stressed && s.reason.contains("NaN")));
    assert_eq!(out.records.len(), 8);
    assert!(out.records.iter().all(|r| r.regime != RegimeLabel::Stressed));
}

#[test]
fn bad_configs() {
    let src = SurrogateSource::default();
    let mut c = config(0, 1);
    assert!(run(&c, &src).is_err());
    c.count = 1;
    c.t_in = 9;
    assert!(run(&c, &src).is_err());
    c.t_in = 10;
    c.regimes = vec![RegimeLabel::Normal, RegimeLabel::Normal];
    assert!(run(&c, &src).is_err());
    assert!(serde_json::from_str::<McConfig>(r#"{"dim":8,"count":1,"seed":1,"extra":0}"#).is_err());
    let parsed: McConfig = serde_json::from_str(r#"{"dim":8,"count":1,"seed":1}"#).unwrap();
    assert_eq!((parsed.t_in, parsed.regimes.len()), (252, 3));
}

#[test]
fn ndjson_round_trip() {
    let recs = run(&config(3, 9), &SurrogateSource::default()).unwrap().records;
    let prov = Provenance::for_config(&config(3, 9), Seed(9));
    let mut buf = Vec::new();
    write_records(&mut buf, &recs, &prov).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), recs.len() + 1);
    let (p, back) = read_records(&buf[..]).unwrap();
    assert_eq!(p, prov);
    assert_eq!(back, recs);

    let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
    assert!(matches!(read_records(bumped.as_bytes()), Err(Error::UnsupportedVersion(_))));
    let broken = format!("{}{{\"index\":", text);
    assert!(matches!(read_records(broken.as_bytes()), Err(Error::CorruptData(_))));
}

#[test]
fn exact_linear_target_is_recovered() {
    let k = 8;
    let x = gaussian_design(400, k, 3);
    let slopes: Vec<f64> = (0..k).map(|j| (j as f64 - 3.5) * 0.7).collect();
    let y: Vec<f64> = x.iter().map(|r| 1.25 + r.iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>()).collect();
    let m = fit_linear(&names(k), &x, &y).unwrap();
    assert!((m.r_squared - 1.0).abs() < 1e-12);
    for (a, b) in m.raw_slopes().iter().zip(&slopes) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    let x0 = vec![0.0; k];
    assert!((m.predict(&x0) - 1.25).abs() < 1e-8);
    assert_eq!(m.kind, ModelKind::Linear);
    assert_eq!(m.coefficients.len(), k);
}

#[test]
fn noise_target_has_small_r_squared() {
    let x = gaussian_design(1000, 8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
    assert!(fit_linear(&names(8), &x, &y).unwrap().r_squared < 0.1);
}

#[test]
fn duplicated_column_is_named() {
    let mut x = gaussian_design(200, 4, 5);
    for r in x.iter_mut() {
        r[3] = r[1];
    }
    let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
    match fit_linear(&names(4), &x, &y) {
        Err(Error::RankDeficient(v)) => assert_eq!(v, vec!["x1".to_string(), "x3".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn affine_rescaling_is_absorbed() {
    let x = gaussian_design(300, 5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y: Vec<f64> = x.iter().map(|r| r[0] - 2.0 * r[2] + rng.sample::<f64, _>(StandardNormal)).collect();
    let scaled: Vec<Vec<f64>> = x.iter().map(|r| {
        let mut r = r.clone();
        r[2] = 1000.0 * r[2] - 42.0;
        r
    }).collect();
    let a = fit_linear(&names(5), &x, &y).unwrap();
    let b = fit_linear(&names(5), &scaled, &y).unwrap();
    assert!((a.r_squared - b.r_squared).abs() < 1e-12);
    for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((p - q).abs() < 1e-10);
    }
}

fn random_model(k: usize, seed: u64) -> (SurrogateModel, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let model = SurrogateModel {
        kind: ModelKind::Linear,
        target: None,
        feature_names: names(k),
        means: (0..k).map(|_| g()).collect(),
        scales: (0..k).map(|_| g().abs() + 0.1).collect(),
        coefficients: (0..k).map(|_| g()).collect(),
        intercept: g(),
        r_squared: 0.5,
        n_samples: 100,
    };
    let x = (0..k).map(|_| g()).collect();
    let bg = (0..k).map(|_| g()).collect();
    (model, x, bg)
}

#[test]
fn enumeration_matches_linear_closed_form() {
    for k in [1, 3, 8, 12] {
        for seed in 0..5 {
            let (m, x, bg) = random_model(k, seed * 31 + k as u64);
            let a = shapley_values(&m, &x, &bg).unwrap();
            for (j, phi) in a.phi.iter().enumerate() {
                let closed = m.raw_slopes()[j] * (x[j] - bg[j]);
                assert!((phi - closed).abs() < 1e-10, "k {k} j {j}: {phi} vs {closed}");
            }
            assert!(a.efficiency_gap() < 1e-10);
            assert!((a.prediction - m.predict(&x)).abs() < 1e-12);
            assert!((a.baseline - m.predict(&bg)).abs() < 1e-12);
        }
    }
    let (m, x, bg) = random_model(13, 1);
    assert!(matches!(shapley_values(&m, &x, &bg), Err(Error::Unsupported(_))));
}

#[test]
fn dummy_and_symmetric_players() {
    let (mut m, mut x, mut bg) = random_model(6, 8);
    m.coefficients[2] = 0.0;
    // features 4 and 5 exchangeable
    m.coefficients[5] = m.coefficients[4];
    m.means[5] = m.means[4];
    m.scales[5] = m.scales[4];
    x[5] = x[4];
    bg[5] = bg[4];
    let a = shapley_values(&m, &x, &bg).unwrap();
    assert_eq!(a.phi[2], 0.0);
    assert!((a.phi[4] - a.phi[5]).abs() < 1e-10);
}

#[test]
fn surrogate_on_simulated_records() {
    let recs = run(&config(40, 12), &SurrogateSource::default()).unwrap().records;
    for target in [Target::Outperformance, Target::Decay { method: Method::Hrp }] {
        let m = fit_surrogate(&recs, target).unwrap();
        assert_eq!(m.target, Some(target));
        assert!((0.0..=1.0).contains(&m.r_squared));
        for r in &recs {
            let a = shapley(&m, r, &recs).unwrap();
            assert!(a.efficiency_gap() < 1e-10);
        }
    }
}

#[test]
fn identical_records_give_degenerate_intervals() {
    let base = run(&config(1, 3), &SurrogateSource::default()).unwrap().records;
    for sign in [-1.0, 1.0] {
        let mut rec = base[1].clone();
        rec.hrp_minus_ivp_outvol = sign * 0.01;
        let recs = vec![rec; 150];
        let f = regime_findings(&recs, Seed(1));
        assert_eq!(f.regimes.len(), 1);
        let r = &f.regimes[0];
        let expect = if sign < 0.0 { 1.0 } else { 0.0 };
        assert_eq!(r.hrp_win_rate, expect);
        assert_eq!(r.win_rate_ci, (expect, expect));
        assert_eq!(r.mean_gap_ci.0, r.mean_gap_ci.1);
        assert!(r.sufficient);
        assert_eq!(r.corr_gap_cophenetic, None);
    }
}

#[test]
fn findings_intervals_cover_the_estimate() {
    let recs = run(&config(100, 21), &SurrogateSource::default()).unwrap().records;
    let f = regime_findings(&recs, Seed(4));
    assert_eq!(f.regimes.len(), 3);
    assert_eq!(f, regime_findings(&recs, Seed(4)));
    for r in &f.regimes {
        assert_eq!(r.n, 100);
        assert!(r.win_rate_ci.0 <= r.hrp_win_rate && r.hrp_win_rate <= r.win_rate_ci.1);
        assert!(r.mean_gap_ci.0 <= r.mean_gap && r.mean_gap <= r.mean_gap_ci.1);
        // a 95% interval for a proportion at n = 100 is at most about ±0.1 wide
        assert!(r.win_rate_ci.1 - r.win_rate_ci.0 < 0.25);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn efficiency_holds(k in 1usize..=10, seed in any::<u64>()) {
        let (m, x, bg) = random_model(k, seed);
        let a = shapley_values(&m, &x, &bg).unwrap();
        prop_assert!(a.efficiency_gap() < 1e-10);
    }
}

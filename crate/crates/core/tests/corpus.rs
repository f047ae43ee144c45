use std::fs;
use std::io::Write;

use corrlab::corpus::*;
use corrlab::linalg::{validate, Matrix};
use corrlab::samplers::{RegimeLabel, RegimeParams};
use corrlab::{Error, Seed};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_returns(t: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(t, d, (0..t * d).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("A{i}")).collect()
}

fn write_csv(dir: &std::path::Path, header: &str, rows: &[String]) -> std::path::PathBuf {
    let p = dir.join("returns.csv");
    let mut f = fs::File::create(&p).unwrap();
    writeln!(f, "{header}").unwrap();
    for r in rows {
        writeln!(f, "{r}").unwrap();
    }
    p
}

#[test]
fn seventeen_windows_and_balanced_terciles() {
    let data = gaussian_returns(600, 4, 1);
    let c = ingest_matrix(names(4), &data, WindowSpec::default(), LabelRule::Tercile).unwrap();
    assert_eq!(c.len(), 17);
    let counts: Vec<usize> = RegimeLabel::ALL.iter().map(|&r| c.count(r)).collect();
    assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{counts:?}");
    for item in &c.items {
        assert!(validate(item.matrix.as_symmetric(), 1e-10).unwrap().is_valid);
    }
}

#[test]
fn csv_ingestion_matches_matrix_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_returns(300, 5, 2);
    let rows: Vec<String> = (0..300)
        .map(|i| data.row(i).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","))
        .collect();
    let p = write_csv(dir.path(), "A0,A1,A2,A3,A4", &rows);
    let w = WindowSpec { length: 100, step: 50, estimator: Estimator::Pearson };
    let a = ingest_returns(&p, w, LabelRule::Tercile).unwrap();
    let b = ingest_matrix(names(5), &data, w, LabelRule::Tercile).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parse_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_csv(dir.path(), "a,b,c", &["0.1,0.2,0.3".into(), "0.1,x,0.3".into()]);
    match read_returns_csv(&p) {
        Err(Error::ParseError { row, col, .. }) => assert_eq!((row, col), (3, 2)),
        other => panic!("{other:?}"),
    }
    let p = write_csv(dir.path(), "a,b", &["0.1,".into()]);
    assert!(matches!(read_returns_csv(&p), Err(Error::ParseError { row: 2, col: 2, .. })));
}

#[test]
fn constant_column_is_degenerate() {
    let mut data = gaussian_returns(60, 3, 3);
    for i in 0..30 {
        data.set(i, 1, 0.0);
    }
    let w = WindowSpec { length: 30, step: 30, estimator: Estimator::Pearson };
    match ingest_matrix(names(3), &data, w, LabelRule::Tercile) {
        Err(Error::DegenerateColumn { asset, window }) => assert_eq!((asset.as_str(), window), ("A1", 0)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn equal_rows_window_is_degenerate() {
    // every period identical: all columns constant inside the window
    let data = Matrix::from_fn(20, 3, |_, j| 0.01 * (j + 1) as f64);
    let w = WindowSpec { length: 10, step: 10, estimator: Estimator::Pearson };
    assert!(matches!(ingest_matrix(names(3), &data, w, LabelRule::Tercile), Err(Error::DegenerateColumn { .. })));
}

#[test]
fn labels_are_scale_invariant() {
    let data = gaussian_returns(800, 4, 4);
    let w = WindowSpec { length: 60, step: 10, estimator: Estimator::Pearson };
    let base = ingest_matrix(names(4), &data, w, LabelRule::Tercile).unwrap().labels();
    for scale in [1e-3, 0.7, 3.0, 250.0] {
        let scaled = Matrix::from_fn(800, 4, |i, j| data.get(i, j) * scale);
        assert_eq!(ingest_matrix(names(4), &scaled, w, LabelRule::Tercile).unwrap().labels(), base);
    }
}

#[test]
fn surrogate_corpus_properties() {
    let c = build_surrogate(100, 12, &default_regime_params(), Seed(5)).unwrap();
    assert_eq!(c.len(), 300);
    let means: Vec<f64> = RegimeLabel::ALL
        .iter()
        .map(|&r| c.by_label(r).iter().map(|m| m.mean_off_diagonal()).sum::<f64>() / 100.0)
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    for item in &c.items {
        assert!(validate(item.matrix.as_symmetric(), 1e-8).unwrap().is_valid);
    }
    assert_eq!(c, build_surrogate(100, 12, &default_regime_params(), Seed(5)).unwrap());
}

#[test]
fn empty_corpus_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = LabeledCorpus::empty(7, CorpusSource::Surrogate);
    write_corpus(&c, dir.path()).unwrap();
    let back = read_corpus(dir.path()).unwrap();
    assert_eq!(back.len(), 0);
    assert_eq!(back, c);
}

#[test]
fn truncation_and_tampering_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let c = build_surrogate(3, 5, &default_regime_params(), Seed(6)).unwrap();
    write_corpus(&c, dir.path()).unwrap();
    let payload = dir.path().join(PAYLOAD_FILE);
    let bytes = fs::read(&payload).unwrap();
    fs::write(&payload, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(read_corpus(dir.path()), Err(Error::CorruptData(_))));
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    fs::write(&payload, &flipped).unwrap();
    assert!(matches!(read_corpus(dir.path()), Err(Error::CorruptData(_))));
}

#[test]
fn version_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = build_surrogate(1, 4, &default_regime_params(), Seed(7)).unwrap();
    write_corpus(&c, dir.path()).unwrap();
    let mpath = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).unwrap().replace("\"version\": 1", "\"version\": 2");
    fs::write(&mpath, text).unwrap();
    assert!(matches!(read_corpus(dir.path()), Err(Error::UnsupportedVersion(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_is_bit_exact(count in 0usize..6, dim in 4usize..10, seed in any::<u64>(), ingested in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let corpus = if ingested {
            let data = gaussian_returns(dim * 6 + 40, dim, seed);
            let w = WindowSpec { length: dim + 10, step: 7, estimator: Estimator::Pearson };
            ingest_matrix(names(dim), &data, w, LabelRule::Fixed { threshold: 0.01 }).unwrap()
        } else if count == 0 {
            LabeledCorpus::empty(dim, CorpusSource::Surrogate)
        } else {
            let mut p = corrlab::corpus::default_regime_params();
            p[1] = RegimeParams { noise_scale: 0.5, ..p[1].clone() };
            build_surrogate(count, dim, &p, Seed(seed)).unwrap()
        };
        write_corpus(&corpus, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        prop_assert_eq!(&back, &corpus);
        for (a, b) in back.items.iter().zip(&corpus.items) {
            prop_assert_eq!(a.matrix.as_symmetric().to_le_bytes(), b.matrix.as_symmetric().to_le_bytes());
        }
    }
}

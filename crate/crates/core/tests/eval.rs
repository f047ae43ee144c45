use corrlab::corpus::{build_surrogate, default_regime_params, CorpusItem, CorpusSource, ItemMeta, LabeledCorpus};
use corrlab::eval::{
    classifier_fidelity, compare_facts, distance_stats, fit_pca, holdout_split, pca_project, project,
    sliced_wasserstein, stratified_sets, subsample_matrices, wasserstein2, PointCloud2D, EXACT_LIMIT,
};
use corrlab::linalg::{eigh, CorrelationMatrix, SymmetricMatrix};
use corrlab::samplers::{sample_onion, RegimeLabel};
use corrlab::{Error, Seed};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud2D {
    PointCloud2D { points: (0..n).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect() }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn exact_solver_matches_factorial_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..200 {
        let n = 4 + k % 3;
        let a = cloud(&mut rng, n);
        let b = cloud(&mut rng, n);
        let exact = wasserstein2(&a, &b).unwrap();
        assert!(exact.exact);
        let best = permutations(n)
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| (a.points[i][0] - b.points[p[i]][0]).powi(2) + (a.points[i][1] - b.points[p[i]][1]).powi(2))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let oracle = (best / n as f64).sqrt();
        assert!((exact.distance - oracle).abs() < 1e-9, "pair {k}: {} vs {oracle}", exact.distance);
    }
}

#[test]
fn zero_exactly_for_equal_multisets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = cloud(&mut rng, 40);
    let mut b = a.clone();
    b.points.shuffle(&mut rng);
    assert_eq!(wasserstein2(&a, &b).unwrap().distance, 0.0);
    b.points[3][0] += 1e-3;
    assert!(wasserstein2(&a, &b).unwrap().distance > 0.0);
}

#[test]
fn large_clouds_use_the_flagged_sliced_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = cloud(&mut rng, EXACT_LIMIT + 10);
    let mut b = a.clone();
    for p in b.points.iter_mut() {
        p[0] += 1.0;
    }
    let w = wasserstein2(&a, &b).unwrap();
    assert!(!w.exact);
    // a pure shift by (1, 0): sliced distance is sqrt(mean cos²) = 1/√2
    assert!((w.distance - 0.5f64.sqrt()).abs() < 1e-9);
    assert!(wasserstein2(&cloud(&mut rng, EXACT_LIMIT), &cloud(&mut rng, EXACT_LIMIT)).unwrap().exact);
}

#[test]
fn unequal_sizes_are_subsampled_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = cloud(&mut rng, 30);
    let b = cloud(&mut rng, 12);
    let w1 = wasserstein2(&a, &b).unwrap();
    let mut a2 = a.clone();
    a2.points.reverse();
    assert_eq!(w1, wasserstein2(&a2, &b).unwrap());
    assert_eq!(w1, wasserstein2(&b, &a).unwrap());
    let set: Vec<CorrelationMatrix> = (0..10).map(|s| sample_onion(4, 1.0, Seed(s)).unwrap()).collect();
    let mut rev = set.clone();
    rev.reverse();
    assert_eq!(subsample_matrices(&set, 4), subsample_matrices(&rev, 4));
}

#[test]
fn sliced_distance_in_triangle_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<Vec<f64>> = (0..50).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    assert_eq!(sliced_wasserstein(&a, &a, 100, Seed(1)).unwrap(), 0.0);
    let b: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x + 0.5).collect()).collect();
    let d = sliced_wasserstein(&a, &b, 100, Seed(1)).unwrap();
    assert!(d > 0.0 && d <= 0.5 * 10f64.sqrt() + 1e-12);
    assert!(sliced_wasserstein(&a, &b[..10], 100, Seed(1)).is_err());
}

fn reference(n: usize, dim: usize, seed: u64) -> Vec<CorrelationMatrix> {
    (0..n).map(|k| sample_onion(dim, 2.0, Seed(seed).stream(k as u64)).unwrap()).collect()
}

fn top_two_share_oracle(set: &[CorrelationMatrix]) -> f64 {
    let rows: Vec<Vec<f64>> = set.iter().map(|c| c.as_symmetric().lower_triangle()).collect();
    let n = rows.len() as f64;
    let m = rows[0].len();
    let mean: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = SymmetricMatrix::from_fn(m, |i, j| {
        rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)
    });
    let e = eigh(&cov).unwrap();
    (e.values[m - 1] + e.values[m - 2]) / e.values.iter().sum::<f64>()
}

#[test]
fn pca_basis_matches_covariance_spectrum() {
    // fewer matrices than coordinates (Gram path) and more (covariance path)
    for (n, dim) in [(40, 8), (60, 5)] {
        let set = reference(n, dim, n as u64);
        let basis = fit_pca(&set).unwrap();
        let oracle = top_two_share_oracle(&set);
        assert!((basis.explained_share() - oracle).abs() < 1e-9, "{} vs {oracle}", basis.explained_share());
        let a = &basis.axes;
        assert!((a[0].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[0].iter().zip(&a[1]).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-10);
        let cloud = project(&basis, &set).unwrap();
        for k in 0..2 {
            assert!(cloud.points.iter().map(|p| p[k]).sum::<f64>().abs() < 1e-10);
        }
    }
}

#[test]
fn pca_ignores_order_and_other_sets() {
    let set = reference(30, 6, 7);
    let other = reference(20, 6, 8);
    let (b1, r1, o1) = pca_project(&set, &[&other]).unwrap();
    let (b2, _, o2) = pca_project(&set, &[&other, &set]).unwrap();
    assert_eq!(b1, b2);
    assert_eq!(o1[0], o2[0]);
    assert_eq!(o2[1], r1);
    let mut shuffled = set.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let (b3, _, o3) = pca_project(&shuffled, &[&other]).unwrap();
    for (p, q) in o1[0].points.iter().zip(&o3[0].points) {
        assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
    }
    assert!((b1.total_variance - b3.total_variance).abs() < 1e-12);
}

#[test]
fn degenerate_reference_is_rejected() {
    let same = vec![sample_onion(5, 1.0, Seed(1)).unwrap(); 10];
    assert!(matches!(fit_pca(&same), Err(Error::DegenerateBasis(_))));
    let a = sample_onion(5, 1.0, Seed(1)).unwrap();
    let b = sample_onion(5, 1.0, Seed(2)).unwrap();
    // two distinct points span a line only
    assert!(matches!(fit_pca(&[a.clone(), b.clone(), a, b]), Err(Error::DegenerateBasis(_))));
    assert!(matches!(fit_pca(&reference(1, 4, 1)), Err(Error::DegenerateBasis(_))));
}

#[test]
fn distance_stats_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let real: Vec<PointCloud2D> = (0..4).map(|_| cloud(&mut rng, 30)).collect();
    let copy = distance_stats(&real, &[real[2].clone()]).unwrap();
    assert!(copy.mu_g <= copy.max_within);
    assert_eq!(copy.min_between, 0.0);
    let twins = distance_stats(&[real[0].clone(), real[0].clone()], &[real[1].clone()]).unwrap();
    assert_eq!((twins.mu_e, twins.sigma_e), (0.0, 0.0));
    let synth: Vec<PointCloud2D> = (0..3).map(|_| cloud(&mut rng, 30)).collect();
    let s = distance_stats(&real, &synth).unwrap();
    let mut r2 = real.clone();
    r2.reverse();
    let mut s2 = synth.clone();
    s2.rotate_left(1);
    let t = distance_stats(&r2, &s2).unwrap();
    assert!((s.mu_e - t.mu_e).abs() < 1e-12 && (s.mu_g - t.mu_g).abs() < 1e-12);
    assert!((s.sigma_e - t.sigma_e).abs() < 1e-12 && (s.sigma_g - t.sigma_g).abs() < 1e-12);
    assert!(distance_stats(&real[..1], &synth).is_err());
}

fn relabel(corpus: &LabeledCorpus, idx: &[usize], label: impl Fn(usize) -> RegimeLabel) -> LabeledCorpus {
    let mut out = LabeledCorpus::empty(corpus.dim, CorpusSource::Generated);
    for (k, &i) in idx.iter().enumerate() {
        out.items.push(CorpusItem {
            matrix: corpus.items[i].matrix.clone(),
            label: label(k),
            meta: ItemMeta::Draw { index: k, seed: Seed(0) },
        });
    }
    out
}

#[test]
fn classifier_identity_substitution_and_chance_level() {
    let real = build_surrogate(100, 12, &default_regime_params(), Seed(21)).unwrap();
    let (_, held) = holdout_split(&real);
    let same = relabel(&real, &held, |k| real.items[held[k]].label);
    let r = classifier_fidelity(&real, &same, Seed(2)).unwrap();
    assert_eq!(r.accuracy, r.real_holdout_accuracy);
    assert_eq!(r.synthetic, r.real_holdout);
    assert!(!r.weak_classifier);
    assert!(r.real_holdout_accuracy >= 0.8);
    assert_eq!(r.synthetic.row_sums().iter().sum::<u64>(), held.len() as u64);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<RegimeLabel> = (0..300).map(|_| RegimeLabel::ALL[rng.random_range(0..3)]).collect();
    let all: Vec<usize> = (0..300).collect();
    let random = relabel(&real, &all, |k| labels[k]);
    let acc = classifier_fidelity(&real, &random, Seed(2)).unwrap().accuracy;
    assert!((acc - 1.0 / 3.0).abs() <= 0.08, "accuracy {acc}");
}

#[test]
fn stratified_sets_and_fact_comparison() {
    let real = build_surrogate(30, 8, &default_regime_params(), Seed(4)).unwrap();
    let sets = stratified_sets(&real, 3).unwrap();
    for s in &sets {
        assert_eq!(s.len(), 30);
        for l in RegimeLabel::ALL {
            assert_eq!(s.iter().filter(|&&i| real.items[i].label == l).count(), 10);
        }
    }
    let cmp = compare_facts(&real, &real).unwrap();
    assert_eq!(cmp.len(), 3);
    for c in &cmp {
        assert_eq!(c.real, c.synthetic);
        assert_eq!(c.real.n, 30);
    }
    assert!(cmp[0].real.sf1_mean_offdiag > cmp[2].real.sf1_mean_offdiag);
}

fn arb_cloud(n: usize) -> impl Strategy<Value = PointCloud2D> {
    proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n)
        .prop_map(|v| PointCloud2D { points: v.into_iter().map(|(x, y)| [x, y]).collect() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]
    #[test]
    fn metric_axioms(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (cloud(&mut rng, n), cloud(&mut rng, n), cloud(&mut rng, n));
        let ab = wasserstein2(&a, &b).unwrap().distance;
        let ba = wasserstein2(&b, &a).unwrap().distance;
        let bc = wasserstein2(&b, &c).unwrap().distance;
        let ac = wasserstein2(&a, &c).unwrap().distance;
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn translation_shifts_by_its_length(a in arb_cloud(7), dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let b = PointCloud2D { points: a.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect() };
        let d = wasserstein2(&a, &b).unwrap().distance;
        prop_assert!((d - (dx * dx + dy * dy).sqrt()).abs() < 1e-9);
    }
}

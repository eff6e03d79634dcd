use proptest::prelude::*;

use gazeaug_core::data::{simulate_surrogate, stratified_split, to_row_table, SplitSpec, SurrogateConfig};
use gazeaug_core::generators::{fit_gaussian_copula, fit_generator, GanConfig, GeneratorKind, GeneratorSpec};
use gazeaug_core::numeric::{cholesky, gmm_fit_em_traced, std_normal_cdf, std_normal_quantile, Matrix};
use gazeaug_core::quality::ks_statistic;
use gazeaug_core::trees::{fit_gbdt, fit_hist_gbdt, GbdtParams};
use gazeaug_core::RngState;

fn small_surrogate(participants: usize, images: usize, seed: u64) -> gazeaug_core::Dataset {
    let cfg = SurrogateConfig {
        participants,
        images,
        ..SurrogateConfig::default()
    };
    simulate_surrogate(&cfg, &mut RngState::new(seed)).unwrap()
}

fn spd(d: usize, seed: u64) -> Matrix {
    let mut r = RngState::new(seed);
    let a = Matrix::from_vec(d, d, (0..d * d).map(|_| r.normal()).collect()).unwrap();
    let mut s = a.matmul(&a.transpose());
    for i in 0..d {
        s[(i, i)] += 0.01;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cholesky_reconstructs(d in 1usize..10, seed: u64) {
        let s = spd(d, seed);
        let back = cholesky(&s).unwrap().reconstruct();
        let scale = (0..d).map(|i| (0..d).map(|j| s[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
        for i in 0..d {
            for j in 0..d {
                prop_assert!((back[(i, j)] - s[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = std_normal_quantile(p).unwrap();
        prop_assert!((std_normal_cdf(x) - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-3));
    }

    #[test]
    fn em_never_decreases_likelihood(k in 1usize..5, n in 5usize..200, seed: u64) {
        let mut r = RngState::new(seed);
        let x: Vec<f64> = (0..n).map(|i| (i % 3) as f64 * 4.0 + r.normal()).collect();
        let fit = gmm_fit_em_traced(&x, k.min(n), 100, 0.0, &mut r).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rng_streams_are_reproducible(seed: u64, i in 0u64..1000) {
        let draw = |mut r: RngState| (0..8).map(|_| r.uniform()).collect::<Vec<_>>();
        let base = RngState::new(seed);
        prop_assert_eq!(draw(base.split(i)), draw(RngState::new(seed).split(i)));
        prop_assert_ne!(draw(base.split(i)), draw(base.split(i + 1)));
    }

    #[test]
    fn ks_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 1..30),
        b in prop::collection::vec(-5.0f64..5.0, 1..30),
    ) {
        let d = ks_statistic(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
        prop_assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hist_boosting_matches_exact_when_bins_cover_values(n in 4usize..48, d in 1usize..5, seed: u64) {
        let mut r = RngState::new(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.below(7) as f64).collect()).collect();
        let y: Vec<usize> = (0..n).map(|_| r.below(4)).collect();
        let params = GbdtParams { rounds: 5, ..GbdtParams::gb() };
        let exact = fit_gbdt(&x, &y, &params).unwrap();
        let hist = fit_hist_gbdt(&x, &y, &params, 64).unwrap();
        prop_assert_eq!(exact.predict_proba(&x).unwrap(), hist.predict_proba(&x).unwrap());
    }

    #[test]
    fn stratified_split_keeps_task_proportions(seed: u64, fraction in 0.2f64..0.9) {
        let data = small_surrogate(4, 10, 1);
        let spec = SplitSpec { train_fraction: fraction, stratified: true, seed };
        let (train, test) = stratified_split(&data, &spec).unwrap();
        prop_assert_eq!(train.len() + test.len(), data.len());
        let total = data.task_counts();
        for (t, c) in train.task_counts().iter().enumerate() {
            prop_assert!((*c as f64 - total[t] as f64 * fraction).abs() <= 1.0);
            prop_assert!(*c >= 1 && *c < total[t]);
        }
    }
}

#[test]
fn generated_rows_respect_the_schema() {
    let table = to_row_table(&small_surrogate(4, 10, 2));
    let gan = GanConfig {
        epochs: 2,
        generator_hidden: vec![16],
        discriminator_hidden: vec![16],
        ..GanConfig::default()
    };
    for kind in GeneratorKind::ALL {
        let spec = GeneratorSpec {
            kind,
            gan: gan.clone(),
            per_task: false,
        };
        let g = fit_generator(&table, &spec, &mut RngState::new(3)).unwrap();
        for task in [None, Some(3)] {
            let s = g.sample(200, &mut RngState::new(4), task).unwrap();
            assert_eq!(s.schema, table.schema, "{kind:?}");
            assert_eq!(s.n_rows(), 200);
            s.validate().unwrap();
            if let Some(t) = task {
                assert!(s.rows.iter().all(|r| r[4] == t as f64));
            }
        }
    }
}

#[test]
fn copula_correlation_is_a_valid_correlation_matrix() {
    let table = to_row_table(&small_surrogate(8, 10, 5));
    let c = fit_gaussian_copula(&table).unwrap().correlation;
    for i in 0..c.rows() {
        assert!((c[(i, i)] - 1.0).abs() < 1e-12);
        for j in 0..c.cols() {
            assert_eq!(c[(i, j)], c[(j, i)]);
            assert!(c[(i, j)].abs() <= 1.0);
        }
    }
    cholesky(&c).unwrap();
}

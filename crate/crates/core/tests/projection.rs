use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clir::projection::{build_training_set, training_rmse, ProjectionError};
use clir::{learn_projection, EmbeddingStore, ProjectionMatrix, TranslationLexicon};

type Pairs = Vec<(Vec<f64>, Vec<f64>)>;

fn random_pairs(d1: usize, d2: usize, n: usize, seed: u64) -> Pairs {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                (0..d1).map(|_| r.random_range(-1.0..1.0)).collect(),
                (0..d2).map(|_| r.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect()
}

fn matrices(pairs: &Pairs) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = pairs.len();
    let x = DMatrix::from_fn(pairs[0].0.len(), n, |i, j| pairs[j].0[i]);
    let y = DMatrix::from_fn(pairs[0].1.len(), n, |i, j| pairs[j].1[i]);
    (x, y)
}

fn max_gap(w: &ProjectionMatrix, oracle: &DMatrix<f64>) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..w.target_dim() {
        for j in 0..w.source_dim() {
            gap = gap.max((w.get(i, j) - oracle[(i, j)]).abs());
        }
    }
    gap
}

#[test]
fn ridge_matches_normal_equations_oracle() {
    for (seed, lambda) in [(1, 1e-3), (2, 0.1), (3, 1.0), (4, 10.0)] {
        let pairs = random_pairs(7, 5, 30, seed);
        let (x, y) = matrices(&pairs);
        let gram = &x * x.transpose() + DMatrix::identity(7, 7) * lambda;
        let oracle = &y * x.transpose() * gram.try_inverse().unwrap();
        let w = learn_projection(&pairs, lambda).unwrap();
        assert!(max_gap(&w, &oracle) < 1e-10, "lambda {lambda}");
    }
}

#[test]
fn exact_linear_map_recovered_to_1e8() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let w_star = DMatrix::from_fn(20, 20, |_, _| r.random_range(-1.0..1.0));
    let x = DMatrix::from_fn(20, 100, |_, _| r.random_range(-1.0..1.0));
    let y = &w_star * &x;
    let pairs: Pairs = (0..100)
        .map(|j| {
            (
                x.column(j).iter().copied().collect(),
                y.column(j).iter().copied().collect(),
            )
        })
        .collect();
    let w = learn_projection(&pairs, 0.0).unwrap();
    let pinv = &y * x.pseudo_inverse(1e-12).unwrap();
    let frob = |m: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                s += (w.get(i, j) - m[(i, j)]).powi(2);
            }
        }
        s.sqrt()
    };
    assert!(frob(&w_star) <= 1e-8);
    assert!(frob(&pinv) <= 1e-8);
    assert!(w.rmse < 1e-10);
}

#[test]
fn rank_deficient_data_needs_ridge() {
    let pairs: Pairs = (0..5)
        .map(|i| (vec![i as f64, 2.0 * i as f64], vec![i as f64]))
        .collect();
    assert!(matches!(
        learn_projection(&pairs, 0.0),
        Err(ProjectionError::Singular { .. })
    ));
    let w = learn_projection(&pairs, 1e-3).unwrap();
    assert!(w.rmse < 1e-2);
}

#[test]
fn training_rmse_is_monotone_in_lambda() {
    let pairs = random_pairs(6, 4, 40, 5);
    let rmse: Vec<f64> = [0.0, 1e-3, 1e-1, 1.0]
        .iter()
        .map(|&l| training_rmse(&learn_projection(&pairs, l).unwrap(), &pairs).unwrap())
        .collect();
    for w in rmse.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{rmse:?}");
    }
}

#[test]
fn lexicon_to_matrix_round_trip() {
    let src = EmbeddingStore::from_rows([("p", vec![1.0f32, 0.0]), ("r", vec![0.0, 1.0])]).unwrap();
    let tgt = EmbeddingStore::from_rows([("q", vec![2.0f32, 0.0]), ("s", vec![0.0, 3.0])]).unwrap();
    let lex = TranslationLexicon::read("p\tq\nr\ts\nz\tq\nr\tnew york\n".as_bytes()).unwrap();
    let set = build_training_set(&lex, &src, &tgt, false).unwrap();
    assert_eq!(set.pairs.len(), 2);
    assert_eq!(set.dropped, 1);
    let w = learn_projection(&set.pairs, 0.0).unwrap();
    let mut buf = Vec::new();
    w.write(&mut buf).unwrap();
    let back = ProjectionMatrix::read(buf.as_slice()).unwrap();
    assert_eq!(back.project(&[1.0, 1.0]).unwrap(), w.project(&[1.0, 1.0]).unwrap());
    assert!((back.get(0, 0) - 2.0).abs() < 1e-12 && (back.get(1, 1) - 3.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn projection_is_linear(
        rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 3),
        x in prop::collection::vec(-5.0..5.0f64, 4),
        z in prop::collection::vec(-5.0..5.0f64, 4),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let w = ProjectionMatrix::from_rows(rows).unwrap();
        let mix: Vec<f64> = x.iter().zip(&z).map(|(x, z)| a * x + b * z).collect();
        let lhs = w.project(&mix).unwrap();
        let (px, pz) = (w.project(&x).unwrap(), w.project(&z).unwrap());
        for i in 0..3 {
            prop_assert!((lhs[i] - (a * px[i] + b * pz[i])).abs() <= 1e-9);
        }
    }
}

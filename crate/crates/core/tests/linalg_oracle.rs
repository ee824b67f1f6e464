mod common;

use cdfilter::linalg::{spectral_from_dense, svd_post_arrays, thresholded_reciprocal, PreArray};
use common::{jacobi_eigen, max_rel, random_matrix, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix_strategy(max_rows: usize, max_extra_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 0..=max_extra_cols).prop_flat_map(|(r, extra)| {
        let c = r + extra;
        prop::collection::vec(-10.0..10.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

#[test]
fn oracle_reconstructs_its_input() {
    let mut g = rng(1);
    for _ in 0..20 {
        let a = random_matrix(&mut g, 5, 5);
        let s = &a + a.transpose();
        let (vals, vecs) = jacobi_eigen(&s);
        let back = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!(max_rel(&back, &s) < 1e-13);
    }
}

#[test]
fn singular_values_match_eigen_oracle() {
    let mut g = rng(2);
    for _ in 0..200 {
        let a = random_matrix(&mut g, 6, 11);
        let (w, s) = svd_post_arrays(&PreArray::new(a.clone()).unwrap()).unwrap();
        let (vals, _) = jacobi_eigen(&(&a * a.transpose()));
        for (si, vi) in s.iter().zip(&vals) {
            assert!((si * si - vi).abs() <= 1e-12 * vals[0], "{si} vs {vi}");
        }
        let wt_w = w.transpose() * &w;
        assert!((wt_w - DMatrix::identity(6, 6)).amax() < 1e-13);
    }
}

/// A pre-array captured from a tracking run on which a bidiagonal SVD lost
/// four digits of the Gram matrix.
#[test]
fn captured_wide_pre_array() {
    let text = include_str!("data/wide_pre_array.csv");
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let a = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let pre = PreArray::new(a.clone()).unwrap();
    let gram = &a * a.transpose();
    let rebuilt = pre.factor().unwrap().reconstruct();
    assert!(max_rel(&rebuilt, &gram) < 1e-14, "{:e}", max_rel(&rebuilt, &gram));
    let (vals, _) = jacobi_eigen(&gram);
    let (_, s) = svd_post_arrays(&pre).unwrap();
    for (si, vi) in s.iter().zip(&vals) {
        assert!((si * si - vi).abs() <= 1e-13 * vals[0]);
    }
}

#[test]
fn spectral_from_dense_matches_oracle() {
    let mut g = rng(3);
    for _ in 0..100 {
        let l = random_matrix(&mut g, 7, 4);
        let p = &l * l.transpose();
        let f = spectral_from_dense(&p).unwrap();
        let (vals, _) = jacobi_eigen(&p);
        for (d, v) in f.d_sqrt().iter().zip(&vals) {
            assert!((d * d - v.max(0.0)).abs() <= 1e-12 * vals[0]);
        }
        assert!(max_rel(&f.reconstruct(), &p) < 1e-13);
        assert!(f.d_sqrt().rows(4, 3).iter().all(|d| *d <= 1e-6 * f.d_sqrt()[0]));
    }
}

#[test]
fn symmetric_root_squares_back() {
    let mut g = rng(4);
    for _ in 0..50 {
        let l = random_matrix(&mut g, 5, 5);
        let p = &l * l.transpose();
        let s = spectral_from_dense(&p).unwrap().symmetric_sqrt();
        assert_eq!(s, s.transpose());
        assert!(max_rel(&(&s * &s), &p) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn post_array_invariants(a in matrix_strategy(6, 8)) {
        let pre = PreArray::new(a.clone()).unwrap();
        let (w, s) = svd_post_arrays(&pre).unwrap();
        let r = a.nrows();
        prop_assert_eq!(w.shape(), (r, r));
        prop_assert!(s.iter().all(|v| *v >= 0.0));
        prop_assert!(s.as_slice().windows(2).all(|p| p[0] >= p[1]));
        prop_assert!((w.transpose() * &w - DMatrix::identity(r, r)).amax() < 1e-13);
        let rebuilt = &w * DMatrix::from_diagonal(&s.component_mul(&s)) * w.transpose();
        let gram = &a * a.transpose();
        prop_assert!((rebuilt - &gram).amax() <= 1e-13 * gram.amax().max(1e-300));
    }

    #[test]
    fn sign_convention(a in matrix_strategy(5, 5)) {
        let (w, _) = svd_post_arrays(&PreArray::new(a).unwrap()).unwrap();
        for col in w.column_iter() {
            let pivot = col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
            prop_assert!(pivot > 0.0);
        }
    }

    #[test]
    fn reciprocal_threshold_is_a_pseudo_inverse(v in prop::collection::vec(0.0..1e3f64, 1..8)) {
        let mut v = v;
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let s = DVector::from_vec(v);
        let inv = thresholded_reciprocal(&s, s.len());
        let limit = s.len() as f64 * f64::EPSILON * s[0];
        for (x, y) in s.iter().zip(inv.iter()) {
            if *x > limit {
                prop_assert!((x * y - 1.0).abs() < 1e-15);
            } else {
                prop_assert_eq!(*y, 0.0);
            }
        }
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use splinegee::{CenteredSplineBasis, KnotVector};

/// Textbook Cox-de Boor recursion, evaluated independently of the library.
/// `last` is the index of the last non-empty knot interval, which is closed
/// on the right so that `z = 1` is covered.
fn cox_de_boor(t: &[f64], i: usize, k: usize, z: f64, last: usize) -> f64 {
    if k == 0 {
        let inside = t[i] <= z && z < t[i + 1];
        return if inside || (i == last && z == t[i + 1]) { 1.0 } else { 0.0 };
    }
    let left = if t[i + k] > t[i] {
        (z - t[i]) / (t[i + k] - t[i]) * cox_de_boor(t, i, k - 1, z, last)
    } else {
        0.0
    };
    let right = if t[i + k + 1] > t[i + 1] {
        (t[i + k + 1] - z) / (t[i + k + 1] - t[i + 1]) * cox_de_boor(t, i + 1, k - 1, z, last)
    } else {
        0.0
    };
    left + right
}

fn naive(kv: &KnotVector, z: f64) -> Vec<f64> {
    let t = kv.knots();
    let last = (0..t.len() - 1).rev().find(|&i| t[i] < t[i + 1]).unwrap();
    (0..kv.raw_dim()).map(|i| cox_de_boor(t, i, kv.degree(), z, last)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_cox_de_boor(n in 1usize..10, q in 1usize..5, z in 0.0f64..=1.0) {
        let kv = KnotVector::new(n, q).unwrap();
        let fast = kv.eval_raw(z).unwrap();
        let slow = naive(&kv, z);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b} at z = {z}");
        }
    }

    #[test]
    fn partition_of_unity_and_nonnegativity(n in 1usize..15, q in 1usize..5, z in 0.0f64..=1.0) {
        let v = KnotVector::new(n, q).unwrap().eval_raw(z).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|x| *x >= -1e-15));
    }

    #[test]
    fn local_support(n in 1usize..15, q in 1usize..5, z in 0.0f64..=1.0) {
        let kv = KnotVector::new(n, q).unwrap();
        let t = kv.knots();
        let v = kv.eval_raw(z).unwrap();
        prop_assert!(v.iter().filter(|x| **x != 0.0).count() <= q + 1);
        for (s, x) in v.iter().enumerate() {
            if *x != 0.0 {
                prop_assert!(t[s] <= z && z <= t[s + q + 1]);
            }
        }
    }

    #[test]
    fn reproduces_linear_functions(n in 1usize..12, q in 1usize..5, z in 0.0f64..=1.0) {
        let kv = KnotVector::new(n, q).unwrap();
        let t = kv.knots();
        let greville: Vec<f64> = (0..kv.raw_dim())
            .map(|s| t[s + 1..=s + q].iter().sum::<f64>() / q as f64)
            .collect();
        let v = kv.eval_raw(z).unwrap();
        let lin: f64 = v.iter().zip(&greville).map(|(a, b)| a * b).sum();
        prop_assert!((lin - z).abs() < 1e-12);
    }

    #[test]
    fn continuous_across_knots(n in 1usize..10, q in 1usize..5, s in 1usize..10) {
        let kv = KnotVector::new(n, q).unwrap();
        let k = (s - 1) % n + 1;
        let knot = k as f64 / (n + 1) as f64;
        let a = kv.eval_raw(knot - 1e-10).unwrap();
        let b = kv.eval_raw(knot + 1e-10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn centered_columns_have_zero_training_mean(
        n in 1usize..8,
        q in 1usize..4,
        zs in proptest::collection::vec(0.0f64..=1.0, 30..200),
    ) {
        let mut zs = zs;
        zs.push(0.0);
        let basis = CenteredSplineBasis::fit(KnotVector::new(n, q).unwrap(), &zs).unwrap();
        prop_assert_eq!(basis.dim(), n + q);
        let d = basis.design(&zs).unwrap();
        for c in 0..d.ncols() {
            prop_assert!(d.column(c).mean().abs() < 1e-10);
        }
    }

    #[test]
    fn centered_span_contains_centered_identity(
        n in 1usize..8,
        q in 1usize..4,
        zs in proptest::collection::vec(0.0f64..=1.0, 60..200),
    ) {
        let mut zs = zs;
        zs.extend([0.0, 0.01, 0.02]);
        let basis = CenteredSplineBasis::fit(KnotVector::new(n, q).unwrap(), &zs).unwrap();
        let d = basis.design(&zs).unwrap();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let target = DVector::from_iterator(zs.len(), zs.iter().map(|z| z - mean));
        let coef = d.clone().svd(true, true).solve(&target, 1e-12).unwrap();
        let resid = &d * coef - &target;
        prop_assert!(resid.amax() < 1e-8);
    }
}

#[test]
fn endpoints_match_cox_de_boor() {
    for n in 1..6 {
        for q in 1..5 {
            let kv = KnotVector::new(n, q).unwrap();
            for z in [0.0, 1.0] {
                let fast = kv.eval_raw(z).unwrap();
                let slow = naive(&kv, z);
                assert_eq!(fast.len(), slow.len());
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-14, "n={n} q={q} z={z}");
                }
            }
        }
    }
}

#[test]
fn design_rows_match_pointwise_evaluation() {
    let zs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).fract()).collect();
    let basis = CenteredSplineBasis::fit(KnotVector::new(4, 3).unwrap(), &zs).unwrap();
    let d: DMatrix<f64> = basis.design(&zs).unwrap();
    for (i, &z) in zs.iter().enumerate() {
        let row = basis.eval(z).unwrap();
        for (k, v) in row.iter().enumerate() {
            assert_eq!(d[(i, k)], *v);
        }
    }
}

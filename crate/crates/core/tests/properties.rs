use hoseq_core::metrics::{binary_metrics, class7_accuracy, mae, map_to_class7, pearson};
use hoseq_core::tensor::{conv3d, outer3};
use hoseq_core::Tensor;
use hoseq_oracles as oracle;
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.5..3.5f64, n)
}

fn paired(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max).prop_flat_map(|n| (values(n), values(n)))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn outer3_is_multilinear(u in values(3), v in values(2), w in values(4), alpha in -3.0..3.0f64) {
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let a = outer3(&scaled, &v, &w).unwrap();
        let b = outer3(&u, &v, &w).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(close(*x, alpha * y, 1e-12));
        }
    }

    #[test]
    fn conv3d_is_linear_in_input(a in values(64), b in values(64), k in values(16), stride in 1usize..3) {
        let kernels = Tensor::from_vec(&[2, 2, 2, 2], k).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let conv = |x: Vec<f64>| conv3d(&Tensor::from_vec(&[4, 4, 4], x).unwrap(), &kernels, &[0.0, 0.0], stride).unwrap();
        let (ca, cb, cs) = (conv(a), conv(b), conv(sum));
        for ((x, y), s) in ca.data().iter().zip(cb.data()).zip(cs.data()) {
            prop_assert!((x + y - s).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_then_reshape_is_identity(data in values(24)) {
        let t = Tensor::from_vec(&[2, 3, 4], data.clone()).unwrap();
        let back = t.flatten().reshape(&[2, 3, 4]).unwrap();
        prop_assert_eq!(back.data(), &data[..]);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn slice_sum_ignores_order(data in values(15), seed in any::<u64>()) {
        let t = Tensor::from_vec(&[5, 3], data.clone()).unwrap();
        let mut rows: Vec<&[f64]> = data.chunks(3).collect();
        hoseq_core::rng::RngStream::new(seed).shuffle(&mut rows);
        let shuffled = Tensor::from_vec(&[5, 3], rows.concat()).unwrap();
        let (a, b) = (t.sum_over_first_axis().unwrap(), shuffled.sum_over_first_axis().unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mae_matches_oracle_and_triangle((a, b) in paired(40), c_seed in values(40)) {
        let c = &c_seed[..a.len()];
        prop_assert!(close(mae(&a, &b).unwrap(), oracle::mae(&a, &b), 1e-12));
        prop_assert!(mae(&a, c).unwrap() <= mae(&a, &b).unwrap() + mae(&b, c).unwrap() + 1e-12);
        prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mae_of_constant_shift(a in values(20), shift in -2.0..2.0f64) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        prop_assert!(close(mae(&a, &b).unwrap(), shift.abs(), 1e-12));
    }

    #[test]
    fn pearson_affine_invariance((p, t) in (3usize..40).prop_flat_map(|n| (values(n), values(n))),
                                 alpha in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64], beta in -3.0..3.0f64) {
        let r = pearson(&p, &t);
        prop_assume!(r.is_ok());
        let r = r.unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!(close(r, oracle::pearson(&p, &t), 1e-9));
        let q: Vec<f64> = p.iter().map(|x| alpha * x + beta).collect();
        prop_assert!(close(pearson(&q, &t).unwrap(), alpha.signum() * r, 1e-9));
        prop_assert!(close(pearson(&p, &p).unwrap(), 1.0, 1e-12));
        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
        prop_assert!(close(pearson(&neg, &p).unwrap(), -1.0, 1e-12));
    }

    #[test]
    fn f1_matches_confusion_count((p, t) in paired(40)) {
        let m = binary_metrics(&p, &t).unwrap();
        match oracle::f1(&p, &t) {
            Some(f1) => {
                prop_assert!(close(m.f1, f1, 1e-12));
                prop_assert!(!m.f1_degenerate);
            }
            None => prop_assert!(m.f1_degenerate && m.f1 == 1.0),
        }
        prop_assert!((0.0..=1.0).contains(&m.f1));
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        let swapped = binary_metrics(&t, &p).unwrap();
        prop_assert!(close(swapped.f1, m.f1, 1e-12));
        prop_assert_eq!(binary_metrics(&t, &t).unwrap().accuracy, 1.0);
    }

    #[test]
    fn accuracies_ignore_pair_order((p, t) in paired(40), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..p.len()).collect();
        hoseq_core::rng::RngStream::new(seed).shuffle(&mut idx);
        let (ps, ts): (Vec<f64>, Vec<f64>) = idx.iter().map(|&i| (p[i], t[i])).unzip();
        let (a, b) = (binary_metrics(&p, &t).unwrap(), binary_metrics(&ps, &ts).unwrap());
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.f1, b.f1);
        prop_assert_eq!(class7_accuracy(&p, &t).unwrap(), class7_accuracy(&ps, &ts).unwrap());
    }

    #[test]
    fn binary_accuracy_survives_strict_negation((p, t) in paired(40)) {
        let nonzero = |v: &[f64]| v.iter().all(|x| *x != 0.0);
        prop_assume!(nonzero(&p) && nonzero(&t));
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        prop_assert_eq!(binary_metrics(&neg(&p), &neg(&t)).unwrap().accuracy, binary_metrics(&p, &t).unwrap().accuracy);
    }

    #[test]
    fn class7_monotone_and_matches_oracle(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(map_to_class7(lo).unwrap() <= map_to_class7(hi).unwrap());
        prop_assert_eq!(map_to_class7(a).unwrap(), oracle::class7(a));
    }

    #[test]
    fn class7_rounding_bands(targets in prop::collection::vec(-2i32..=2, 1..30), up in 0.0..0.4f64) {
        let t: Vec<f64> = targets.iter().map(|&k| k as f64).collect();
        let near: Vec<f64> = t.iter().map(|x| x + up).collect();
        prop_assert_eq!(class7_accuracy(&near, &t).unwrap(), 1.0);
        let lower: Vec<f64> = targets.iter().filter(|&&k| k < 2).map(|&k| k as f64).collect();
        prop_assume!(!lower.is_empty());
        let far: Vec<f64> = lower.iter().map(|x| x + 0.6).collect();
        prop_assert_eq!(class7_accuracy(&far, &lower).unwrap(), 0.0);
    }
}

#[test]
fn class7_identity_on_integers() {
    for s in -3..=3 {
        assert_eq!(map_to_class7(s as f64).unwrap(), (s + 3) as usize);
    }
    assert_eq!(map_to_class7(0.5).unwrap(), 4);
    assert_eq!(map_to_class7(-0.5).unwrap(), 2);
}

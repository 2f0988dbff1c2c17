use polymerlab::cumulants::{cumulants_from_moments, joint_cumulant, moments_from_cumulants};
use proptest::prelude::*;

/// Mixed moments of a finite joint law given as weighted atoms.
fn moment_of<'a>(atoms: &'a [(Vec<f64>, f64)]) -> impl Fn(&[usize]) -> f64 + 'a {
    move |idx| atoms.iter().map(|(x, p)| p * idx.iter().map(|&i| x[i]).product::<f64>()).sum()
}

fn law() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    proptest::collection::vec((proptest::collection::vec(-2.0f64..2.0, 4), 0.1f64..1.0), 2..6).prop_map(|v| {
        let total: f64 = v.iter().map(|a| a.1).sum();
        v.into_iter().map(|(x, p)| (x, p / total)).collect()
    })
}

proptest! {
    #[test]
    fn permutation_symmetric(atoms in law(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let m = moment_of(&atoms);
        let a = joint_cumulant(&m, &[0, 1, 2, 3]).unwrap();
        let b = joint_cumulant(&m, &perm).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn multilinear_in_each_slot(atoms in law(), c in -3.0f64..3.0) {
        // Append X_4 = c X_0 + X_1 and compare kappa(X_4, X_2, X_3).
        let ext: Vec<(Vec<f64>, f64)> = atoms.iter().map(|(x, p)| {
            let mut y = x.clone();
            y.push(c * x[0] + x[1]);
            (y, *p)
        }).collect();
        let m = moment_of(&ext);
        let lhs = joint_cumulant(&m, &[4, 2, 3]).unwrap();
        let rhs = c * joint_cumulant(&m, &[0, 2, 3]).unwrap() + joint_cumulant(&m, &[1, 2, 3]).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn independent_blocks_have_zero_mixed_cumulant(a in law(), b in law()) {
        // Product law of (X_0, X_1) from `a` and (X_2, X_3) from `b`.
        let mut atoms = Vec::new();
        for (x, p) in &a {
            for (y, q) in &b {
                atoms.push((vec![x[0], x[1], y[2], y[3]], p * q));
            }
        }
        let k = joint_cumulant(moment_of(&atoms), &[0, 1, 2, 3]).unwrap();
        prop_assert!(k.abs() <= 1e-10);
    }

    #[test]
    fn moment_cumulant_round_trip(tail in proptest::collection::vec(-2.0f64..2.0, 1..=6)) {
        // Index 0 is unused on the cumulant side.
        let k: Vec<f64> = std::iter::once(0.0).chain(tail).collect();
        let back = cumulants_from_moments(&moments_from_cumulants(&k));
        for (a, b) in k.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{k:?} -> {back:?}");
        }
    }
}

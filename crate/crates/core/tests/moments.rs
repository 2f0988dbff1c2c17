use polymerlab::env_field::EnvironmentSpec;
use polymerlab::polymer::{moment_estimate_environment, moment_estimate_pathwise};
use polymerlab::rng::{child_seed, Tag};
use polymerlab::transfer::c_n_exact;
use polymerlab::walk::WalkKernel;

// 20 comparisons from fixed seeds; z = 3.5 keeps the family-wise false alarm rate near 1%.
#[test]
fn environment_and_pathwise_moments_agree() {
    let kernel = WalkKernel::default_kernel();
    let spec = EnvironmentSpec::white();
    let mut i = 0;
    for n in [16usize, 64] {
        let lambda = (n as f64).powf(-0.25);
        let norm = c_n_exact(&spec, &kernel, n).unwrap();
        let rn = (n as f64).sqrt();
        for starts in [vec![0], vec![3], vec![0, 0], vec![0, 2], vec![-4, 4]] {
            for width in [0.5, 1.5] {
                let phi = move |x: i64| (-(x as f64 / rn).powi(2) / (2.0 * width * width)).exp();
                let walks = if n == 16 { 20_000 } else { 8000 };
                let a = moment_estimate_pathwise(&spec, &kernel, lambda, n, &starts, &phi, norm, walks, child_seed(5, Tag::Walk, i)).unwrap();
                let b = moment_estimate_environment(&spec, &kernel, lambda, n, &starts, &phi, norm, 3000, child_seed(5, Tag::Environment, i)).unwrap();
                assert!(a.agrees_with(&b, 3.5), "N = {n}, y = {starts:?}, width {width}: {a:?} vs {b:?}");
                i += 1;
            }
        }
    }
    assert_eq!(i, 20);
}

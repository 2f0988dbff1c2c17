use polymerlab::env_field::{sample_environment, EnvironmentSpec, Region};
use polymerlab::polymer::{partition_slab, propagator_residual, slab_by_enumeration};
use polymerlab::walk::WalkKernel;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn propagator_identity_holds(
        lambda in 0.05f64..1.2,
        s in -50i64..50,
        span in 2i64..=64,
        cut in 0.01f64..0.99,
        a in -6i64..=6,
        steps in proptest::collection::vec(0usize..5, 64),
        seed in any::<u64>(),
    ) {
        let kernel = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let t = s + 1 + ((span - 1) as f64 * cut) as i64 % (span - 1);
        let u = s + span;
        let b = a + steps[..span as usize].iter().map(|&i| kernel.offsets()[i]).sum::<i64>();
        let j = 2 * span;
        let region = Region::new(s, u, a.min(b) - j, a.max(b) + j).unwrap();
        let env = sample_environment(&spec, region, seed).unwrap();
        let res = propagator_residual(&env, &kernel, lambda, s, t, u, a, b).unwrap();
        prop_assert!(res <= 1e-10, "residual {res}");
    }

    #[test]
    fn slab_matches_enumeration(lambda in 0.0f64..2.0, len in 0i64..=3, y in -3i64..=3, seed in any::<u64>()) {
        let kernel = WalkKernel::default_kernel();
        for spec in [EnvironmentSpec::white(), EnvironmentSpec::sheared()] {
            let env = sample_environment(&spec, Region::new(-3, 0, y - 8, y + 8).unwrap(), seed).unwrap();
            let slab = partition_slab(&env, &kernel, lambda, -len, 0, y).unwrap();
            let layer = slab.layer_at(-len);
            for (x, want) in slab_by_enumeration(&env, &kernel, lambda, -len, 0, y).unwrap() {
                let got = layer.value(x);
                prop_assert!(((got - want) / want).abs() <= 1e-12, "x = {x}: {got} vs {want}");
            }
        }
    }
}

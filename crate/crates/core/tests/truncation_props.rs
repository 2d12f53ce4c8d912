mod common;

use lowrank_control::lowrank::{axpy, LowRankMatrix};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, rng_seed: RngSeed::Fixed(0x7a11), ..ProptestConfig::default() })]

    #[test]
    fn truncation_contract(x in common::lowrank_strategy(), eps_exp in -12i32..-1) {
        let checked = common::check_truncation(&x, 10f64.powi(eps_exp));
        prop_assert!(checked.is_ok(), "{}", checked.unwrap_err());
    }

    #[test]
    fn inner_product_oracle(x in common::lowrank_strategy(), seed in any::<u64>(), r in 1usize..6) {
        let (n1, n2) = x.shape();
        let y = common::random_lowrank(&mut common::rng(seed), n1, n2, r);
        let checked = common::check_inner(&x, &y);
        prop_assert!(checked.is_ok(), "{}", checked.unwrap_err());
    }

    #[test]
    fn rank_cap_keeps_leading_triplets(x in common::lowrank_strategy(), cap in 1usize..4) {
        let t = x.truncate(0.0, Some(cap));
        prop_assert!(t.rank() <= cap);
        let mut s: Vec<f64> = x.to_dense().unwrap().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in t.singular_values().iter().zip(&s) {
            prop_assert!((a - b).abs() <= 1e-10 * s[0]);
        }
    }
}

#[test]
fn zero_and_exact_rank() {
    let z = LowRankMatrix::zeros(5, 7);
    assert_eq!(z.truncate(1e-8, None).rank(), 0);
    let mut rng = common::rng(9);
    let a = common::random_lowrank(&mut rng, 12, 10, 3);
    let doubled = axpy(1.0, &a, &a).unwrap();
    assert_eq!(doubled.rank(), 6);
    assert_eq!(doubled.truncate(1e-12, None).rank(), 3);
}

use agentlens_core::segment::{cosine_kernel, KernelCost};
use proptest::prelude::*;

const DIM: usize = 8;

fn unit_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn unit_identities(x in unit_vector(), y in unit_vector(), n in 2usize..24, split in 1usize..23) {
        prop_assert!((cosine_kernel(&x, &x) - 1.0).abs() <= 1e-12);
        prop_assert_eq!(cosine_kernel(&x, &y), cosine_kernel(&y, &x));

        let same = vec![x.clone(); n];
        let cost = KernelCost::new(&same).unwrap();
        prop_assert!(cost.segment_cost(0, n).unwrap().abs() <= 1e-9);
        let v = split.min(n - 1);
        prop_assert!(cost.discrepancy(0, v, n).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn cost_is_nonnegative(xs in prop::collection::vec(unit_vector(), 1..32), a in 0usize..32, b in 0usize..33) {
        let cost = KernelCost::new(&xs).unwrap();
        let a = a % xs.len();
        let b = a + 1 + b % (xs.len() - a);
        prop_assert!(cost.segment_cost(a, b).unwrap() >= -1e-9);
    }
}

#[test]
fn ten_thousand_identity_cases_run_quickly() {
    let start = std::time::Instant::now();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(10_000));
    runner
        .run(&(unit_vector(), 2usize..24), |(x, n)| {
            let same = vec![x; n];
            let cost = KernelCost::new(&same).unwrap();
            prop_assert!(cost.segment_cost(0, n).unwrap().abs() <= 1e-9);
            Ok(())
        })
        .unwrap();
    assert!(start.elapsed().as_secs() < 10, "took {:?}", start.elapsed());
}

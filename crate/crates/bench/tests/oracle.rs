use cacti_bench::oracle;

#[test]
fn enclave_counts_match_brute_force() {
    let r = oracle::equivalence(150, 11);
    println!("{r:?}");
    assert!(r.is_clean(), "{:?}", r.first_failure);
    // Both decisions are exercised.
    assert!(r.passes > 0 && r.passes < r.trials);
}

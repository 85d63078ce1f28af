use cacti_bench::bandwidth::bench_bandwidth;
use cacti_bench::scenario::{self, CLIENTS, SESSIONS};

#[test]
fn two_clients_ten_sessions() {
    let r = scenario::run().unwrap();
    println!("{r:#?}");
    assert!(r.all_sessions_passed());
    assert!(r.only_pushed_client_flipped());
    // Every proof that reached the verifier, and nothing else.
    assert_eq!(r.artifacts, CLIENTS * SESSIONS + 1 + (CLIENTS - 1));
    assert!(r.linkage.is_empty(), "{:?}", r.linkage);
}

#[test]
fn one_exchange_fits_in_two_kilobytes() {
    let a = bench_bandwidth().unwrap();
    let b = bench_bandwidth().unwrap();
    println!("{a:?}");
    assert!(a.total() <= 2048);
    // Fixed configuration, fixed sizes.
    assert_eq!(a, b);
}

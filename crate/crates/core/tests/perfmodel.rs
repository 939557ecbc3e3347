use faaslab::blobstore::StoreProfile;
use faaslab::perfmodel::{
    compute_cost, encode_latency_model, estimate_pipeline, optimal_worker_count, shuffle_latency_model,
    vm_exchange_latency_model, ComputeProfile, CostInputs, Exchange, FnWave, PriceSheet, ProfileBundle,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn store(l: f64, b: f64, a: f64, r: f64) -> StoreProfile {
    StoreProfile {
        req_latency: l,
        conn_bandwidth: b,
        aggregate_bandwidth: a,
        ops_rate_cap: r,
        ..StoreProfile::unshaped()
    }
}

fn compute_with(c_fn: f64, c_enc: f64) -> ComputeProfile {
    ComputeProfile {
        fn_sort_rate: c_fn,
        fn_encode_rate: c_enc,
        ..ProfileBundle::calibrated().compute
    }
}

fn shuffle_total(s: f64, w: u32, n_in: u32, st: &StoreProfile, c: &ComputeProfile) -> f64 {
    shuffle_latency_model(s, w, n_in, st, c).unwrap().total
}

#[derive(Debug, Clone)]
struct Params {
    s: f64,
    w: u32,
    n_in: u32,
    l: f64,
    b: f64,
    a_extra: f64,
    r: f64,
    c_fn: f64,
}

fn params() -> impl Strategy<Value = Params> {
    (
        1e6f64..1e11,
        1u32..128,
        1u32..64,
        0.0f64..0.5,
        1e6f64..1e9,
        1.0f64..100.0,
        10.0f64..1e5,
        1e6f64..1e9,
    )
        .prop_map(|(s, w, n_in, l, b, a_extra, r, c_fn)| Params {
            s,
            w,
            n_in,
            l,
            b,
            a_extra,
            r,
            c_fn,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn shuffle_total_is_monotone(p in params(), up in 1.0f64..10.0) {
        let c = compute_with(p.c_fn, 1e7);
        let base_store = store(p.l, p.b, p.b * p.a_extra, p.r);
        let base = shuffle_total(p.s, p.w, p.n_in, &base_store, &c);

        // Faster connections, capped by the aggregate.
        let b2 = (p.b * up).min(p.b * p.a_extra);
        prop_assert!(shuffle_total(p.s, p.w, p.n_in, &store(p.l, b2, p.b * p.a_extra, p.r), &c) <= base);
        prop_assert!(shuffle_total(p.s, p.w, p.n_in, &store(p.l, p.b, p.b * p.a_extra * up, p.r), &c) <= base);
        prop_assert!(shuffle_total(p.s, p.w, p.n_in, &store(p.l, p.b, p.b * p.a_extra, p.r * up), &c) <= base);
        prop_assert!(shuffle_total(p.s, p.w, p.n_in, &base_store, &compute_with(p.c_fn * up, 1e7)) <= base);
        prop_assert!(shuffle_total(p.s, p.w, p.n_in, &store(p.l * up + 0.01, p.b, p.b * p.a_extra, p.r), &c) >= base);
        prop_assert!(shuffle_total(p.s * up, p.w, p.n_in, &base_store, &c) >= base);
    }

    #[test]
    fn totals_are_phase_sums(p in params(), ratio in 1.0f64..50.0) {
        let c = compute_with(p.c_fn, p.c_fn / 2.0);
        let st = store(p.l, p.b, p.b * p.a_extra, p.r);
        for b in [
            shuffle_latency_model(p.s, p.w, p.n_in, &st, &c).unwrap(),
            vm_exchange_latency_model(p.s, p.n_in, p.w, &st, &c).unwrap(),
            encode_latency_model(p.s, p.w, ratio, &st, &c).unwrap(),
        ] {
            let sum = b.phases().iter().fold(0.0, |acc, x| acc + x);
            prop_assert_eq!(sum, b.total);
        }
        let bundle = ProfileBundle { store: st, compute: c, prices: ProfileBundle::calibrated().prices };
        for ex in [Exchange::Serverless, Exchange::Vm] {
            let est = estimate_pipeline(ex, p.s, p.w, p.n_in, ratio, &bundle).unwrap();
            prop_assert_eq!(est.cost.total, est.cost.component_sum());
            prop_assert_eq!(est.end_to_end_s, est.sort.latency.total + est.encode.latency.total);
            // Pure: identical inputs, identical outputs.
            prop_assert_eq!(est, estimate_pipeline(ex, p.s, p.w, p.n_in, ratio, &bundle).unwrap());
        }
    }
}

/// Exhaustive scan, written independently of the library's loop.
fn brute_force(s: f64, n_in: u32, ratio: f64, st: &StoreProfile, c: &ComputeProfile, w_max: u32) -> u32 {
    let totals: Vec<f64> = (1..=w_max)
        .map(|w| {
            let e = st.conn_bandwidth.min(st.aggregate_bandwidth / w as f64);
            let per = s / w as f64;
            let wf = w as f64;
            let l = st.req_latency;
            let exchange = (per / e + wf * l).max(wf * wf / st.ops_rate_cap);
            let shuffle = c.fn_startup
                + (per / e + (n_in as f64 / wf).ceil() * l)
                + per / c.fn_sort_rate
                + exchange
                + exchange
                + (per / e + l);
            let encode = c.fn_startup + (per / e + l) + per / c.fn_encode_rate + (per / ratio / e + l);
            shuffle + encode
        })
        .collect();
    let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    // Within rounding of the minimum counts as a tie; the smallest w wins.
    let tol = best * 1e-12;
    totals.iter().position(|&t| t <= best + tol).unwrap() as u32 + 1
}

#[test]
fn optimizer_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..20 {
        let b = 10f64.powf(rng.gen_range(6.0..9.0));
        let st = store(
            rng.gen_range(0.0..0.2),
            b,
            b * 10f64.powf(rng.gen_range(0.0..3.0)),
            10f64.powf(rng.gen_range(1.0..4.5)),
        );
        let c = ComputeProfile {
            fn_startup: rng.gen_range(0.0..5.0),
            ..compute_with(10f64.powf(rng.gen_range(6.0..8.5)), 10f64.powf(rng.gen_range(6.0..8.5)))
        };
        let s = 10f64.powf(rng.gen_range(7.0..11.0));
        let n_in = rng.gen_range(1..64);
        let ratio = rng.gen_range(1.0..20.0);
        let got = optimal_worker_count(s, n_in, ratio, &st, &c, 64).unwrap();
        let want = brute_force(s, n_in, ratio, &st, &c, 64);
        assert_eq!(got, want, "case {case}: {st:?} {c:?} s={s} n_in={n_in}");
    }
}

#[test]
fn optimizer_limit_cases() {
    let c = ComputeProfile {
        fn_startup: 1.0,
        ..compute_with(5e7, 5e7)
    };
    let bandwidth_only = store(0.0, 1e8, f64::INFINITY, f64::INFINITY);
    assert_eq!(optimal_worker_count(1e10, 8, 10.0, &bandwidth_only, &c, 64).unwrap(), 64);
    let request_bound = store(0.0, f64::INFINITY, f64::INFINITY, 1e-3);
    let fast = compute_with(f64::INFINITY, f64::INFINITY);
    assert_eq!(optimal_worker_count(1e10, 8, 10.0, &request_bound, &fast, 64).unwrap(), 1);
}

#[test]
fn function_cost_arithmetic() {
    let c = ComputeProfile {
        fn_mem_gb: 2.0,
        ..ProfileBundle::calibrated().compute
    };
    let prices = PriceSheet {
        price_gb_s: 0.000017,
        ..PriceSheet::free()
    };
    let cost = compute_cost(
        &CostInputs {
            fn_waves: vec![FnWave {
                workers: 8,
                busy_s: 30.0,
            }],
            ..CostInputs::default()
        },
        &prices,
        &c,
    );
    assert!((cost.fn_compute - 0.00816).abs() < 1e-12);
    assert_eq!(cost.total, cost.fn_compute);

    let everything_free = compute_cost(
        &CostInputs {
            fn_waves: vec![FnWave { workers: 3, busy_s: 9.0 }],
            puts: 10,
            gets: 20,
            vm_seconds: 100.0,
            vol_gb: 50.0,
        },
        &PriceSheet::free(),
        &c,
    );
    assert_eq!(everything_free.total, 0.0);
}

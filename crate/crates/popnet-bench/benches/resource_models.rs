//! Allocation / release churn under the over-provisioning model, which
//! re-prices every co-located instance on each change.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use popnet_bench::ring_platform;
use popnet_core::ids::PopName;
use popnet_core::ResourceRequest;

fn churn(c: &mut Criterion) {
    c.bench_function("alloc_release_churn_64", |b| {
        b.iter(|| {
            let mut state = ring_platform(4);
            let pop = PopName::new("pop00");
            let mut ids = Vec::new();
            for _ in 0..64 {
                let result = state
                    .allocate(&pop, ResourceRequest::cpu(1), "stress", 1.0)
                    .expect("valid request");
                ids.push(result.accepted().expect("model B admits").0.id.clone());
            }
            for id in &ids {
                state.release(id).expect("live instance");
            }
            black_box(state.instance_count())
        })
    });

    c.bench_function("recompute_pop_limits_64", |b| {
        let mut state = ring_platform(4);
        let pop = PopName::new("pop00");
        for _ in 0..64 {
            state
                .allocate(&pop, ResourceRequest::cpu(1), "stress", 1.0)
                .expect("valid request");
        }
        b.iter(|| black_box(state.recompute_pop_limits(&pop).expect("known pop")))
    });
}

criterion_group!(benches, churn);
criterion_main!(benches);

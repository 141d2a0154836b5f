use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zeno_core::error_set::pauli_error_set;
use zeno_core::par::Exec;
use zeno_core::search::{find_encoding, SearchConfig};
use zeno_core::zeno::{
    random_encoding_gain, random_state, zeno_monte_carlo, Codec, FieldModel, NoiseMode, ResetMode, ZenoConfig,
};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let errors = pauli_error_set(5, 1).unwrap();
    let enc = (0..20)
        .find_map(|seed| find_encoding(&errors, 1, &SearchConfig { seed, ..Default::default() }).ok())
        .expect("a (5,1) code");
    let codec = Codec::from_encoding(&enc, 0).unwrap();
    let s0 = random_state(2, 0);
    let cfg = ZenoConfig {
        period: 0.1,
        total_time: 1.0,
        noise_mode: NoiseMode::Exact,
        reset_mode: ResetMode::Replace,
    };
    let model = FieldModel {
        strength: 0.02,
        first_seed: 0,
        seeds: 64,
    };
    let mut group = c.benchmark_group("zeno_monte_carlo_5_1");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| zeno_monte_carlo(black_box(&s0), &codec, &errors, &cfg, &model, exec).unwrap())
        });
    }
    group.finish();
}

fn random_gain(c: &mut Criterion) {
    let errors = pauli_error_set(6, 1).unwrap();
    let mut group = c.benchmark_group("random_encoding_gain_6_1");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| random_encoding_gain(6, 1, black_box(&errors), 32, 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, random_gain);
criterion_main!(benches);

//! Sequential vs data-parallel execution of the hot kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use paritylab::branching::{gen, DpConfig};
use paritylab::crypto::{run_attack, AttackConfig, ThreatModel, WindowAttacker};
use paritylab::learners::{simulate_recovery, GaussianLearner};
use paritylab::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn reach_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("reach_dp");
    group.sample_size(10);
    for n in [8, 10] {
        let program = gen::random_program(n, 12, 32, &mut ChaCha8Rng::seed_from_u64(1));
        for (name, exec) in MODES {
            let cfg = DpConfig::with_execution(exec);
            group.bench_with_input(BenchmarkId::new(name, n), &program, |b, p| b.iter(|| p.reach_all_with(&cfg).unwrap()));
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    let learner = GaussianLearner::new(10).unwrap();
    let attacker = WindowAttacker::new(10, 11 * 12).unwrap();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("gaussian_recovery", name), |b| {
            b.iter(|| simulate_recovery(&learner, 14, 4_000, 7, exec).unwrap())
        });
        let cfg = AttackConfig { frames: 16, trials: 4_000, seed: 7, threat: ThreatModel::KnownPlaintext, execution: exec };
        group.bench_function(BenchmarkId::new("window_attack", name), |b| b.iter(|| run_attack(&attacker, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, reach_dp, monte_carlo);
criterion_main!(benches);

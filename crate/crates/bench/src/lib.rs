//! Fixtures shared by the benchmarks.

use echochamber::bec::simulate_round_robin;
use echochamber::hawkes::{simulate, DurationModel};
use echochamber::sampler::Priors;
use echochamber::{BecParams, EventTimes, HawkesParams, SquareMatrix, Transcript};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn persons(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("P{}", i + 1)).collect()
}

/// Round-robin corpus of `utterances` turns with parameters drawn from the
/// default priors.
pub fn corpus(
    persons_n: usize,
    vocab: usize,
    utterances: usize,
    seed: u64,
) -> (BecParams, Transcript) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Priors::default()
        .resolve()
        .expect("default priors")
        .sample_bec(persons_n, vocab, &mut rng);
    let t = simulate_round_robin(
        &params,
        utterances,
        50.0,
        100.0,
        persons(persons_n),
        &mut rng,
    )
    .expect("simulation");
    (params, t)
}

/// Stationary turn-taking events with every excitation equal.
pub fn events(persons_n: usize, horizon: f64, seed: u64) -> (HawkesParams, EventTimes) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = 0.5 / persons_n as f64;
    let params = HawkesParams {
        base_rate: vec![0.5; persons_n],
        excitation: SquareMatrix::off_diagonal(persons_n, nu),
        decay: vec![1.0; persons_n],
    };
    let ev = simulate(
        &params,
        horizon,
        &DurationModel::Exponential { mean: 0.1 },
        1_000_000,
        &mut rng,
    )
    .expect("simulation");
    (params, ev)
}

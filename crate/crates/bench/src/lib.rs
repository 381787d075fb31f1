//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanrl_core::agents::dqn::DqnBatch;
use urbanrl_core::agents::replay::Transition;
use urbanrl_core::agents::sac::SacBatch;
use urbanrl_core::{ContinuousAction, DiscreteAction};

/// A raw observation drawn from the ranges the environment produces.
pub fn random_observation<R: Rng>(rng: &mut R) -> [f64; 5] {
    [
        rng.random_range(298.15..308.15),
        rng.random_range(283.15..293.15),
        rng.random_range(0.3..0.5),
        rng.random_range(280.0..310.0),
        rng.random_range(260.0..320.0),
    ]
}

pub fn sac_batch(size: usize, seed: u64) -> SacBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<_> = (0..size)
        .map(|_| Transition {
            obs: random_observation(&mut rng),
            action: ContinuousAction::from_array([
                rng.random_range(25.0..35.0),
                rng.random_range(10.0..20.0),
                rng.random_range(0.3..0.5),
            ]),
            reward: rng.random_range(-15.0..-5.0),
            next_obs: random_observation(&mut rng),
            done: false,
        })
        .collect();
    SacBatch::from_transitions(&items.iter().collect::<Vec<_>>())
}

pub fn dqn_batch(size: usize, seed: u64) -> DqnBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<_> = (0..size)
        .map(|_| Transition {
            obs: random_observation(&mut rng),
            action: DiscreteAction::new(rng.random_range(0..DiscreteAction::COUNT)).unwrap(),
            reward: rng.random_range(-15.0..-5.0),
            next_obs: random_observation(&mut rng),
            done: false,
        })
        .collect();
    DqnBatch::from_transitions(&items.iter().collect::<Vec<_>>())
}

//! Seeded, counter-based randomness with one independent stream per trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout.
pub type SimRng = ChaCha8Rng;

/// Stream `trial` of the generator keyed by `seed`; trial `k` can be
/// replayed without running trials `0..k`.
pub fn trial_rng(seed: u64, trial: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

//! Keyed random streams.
//!
//! Every random draw is derived from `(seed, purpose, location)`, so the
//! outcome for a given sheet or site never depends on the order in which
//! the lattice is visited or how the work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep independent streams apart under the same seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    ErrorSheet = 0x51,
    Outcome = 0x52,
    Baseline = 0x53,
    Trial = 0x54,
    Instance = 0x55,
}

/// SplitMix64 finaliser.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed, a stream tag and up to four location words.
#[inline]
pub(crate) fn keyed(seed: u64, stream: Stream, words: [i64; 4]) -> u64 {
    let mut h = mix64(seed ^ mix64(stream as u64));
    for w in words {
        h = mix64(h ^ (w as u64));
    }
    h
}

/// A ChaCha stream for one location.
pub(crate) fn keyed_rng(seed: u64, stream: Stream, words: [i64; 4]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed(seed, stream, words))
}

/// Per-trial seed derived from a run seed.
pub fn trial_seed(run_seed: u64, trial: u64) -> u64 {
    keyed(run_seed, Stream::Trial, [trial as i64, 0, 0, 0])
}

/// Per-instance seed for generated test problems.
pub fn instance_seed(run_seed: u64, instance: u64) -> u64 {
    keyed(run_seed, Stream::Instance, [instance as i64, 0, 0, 0])
}

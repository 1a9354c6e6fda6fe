//! Counter-based seed derivation.
//!
//! Every random draw in the library comes from a ChaCha stream whose seed is
//! derived from a parent seed, a fixed stream tag, and a counter via the
//! SplitMix64 finalizer:
//!
//! ```text
//! derive_seed(parent, stream, counter) = mix(parent + mix(stream + mix(counter)))
//! ```
//!
//! Because the derivation is a pure function of `(parent, stream, counter)`,
//! adding trials or samples never perturbs the seeds of earlier ones, and
//! work can be scheduled across threads in any order without changing
//! results.

/// Stream tag for per-trial seeds derived from a master seed.
pub const STREAM_TRIAL: u64 = 0x01;
/// Stream tag for device-placement draws within a trial.
pub const STREAM_POSITIONS: u64 = 0x02;
/// Stream tag for channel realizations within a trial.
pub const STREAM_CHANNELS: u64 = 0x03;
/// Stream tag for the cross-entropy optimizer master seed within a trial.
pub const STREAM_CE: u64 = 0x04;
/// Stream tag for per-iteration seeds inside the cross-entropy optimizer.
pub const STREAM_CE_ITER: u64 = 0x05;
/// Stream tag for per-sample seeds within one cross-entropy iteration.
pub const STREAM_CE_SAMPLE: u64 = 0x06;

/// SplitMix64 finalizer. Bijective on `u64`, good avalanche behavior.
#[inline]
pub fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(parent, stream, counter)`.
#[inline]
pub fn derive_seed(parent: u64, stream: u64, counter: u64) -> u64 {
    mix(parent.wrapping_add(mix(stream.wrapping_add(mix(counter)))))
}

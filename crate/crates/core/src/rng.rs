//! Seeded, counter-based random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run
//! seed plus a purpose tag and an index (round, pair, replica). Streams are
//! independent of each other, so adding draws in one place never shifts the
//! values seen somewhere else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    TraceKnots = 1,
    Vivaldi = 2,
    Workload = 3,
    Loss = 4,
    DeliveryOrder = 5,
    KCenter = 6,
}

/// Returns the ChaCha stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ (index & 0x0000_ffff_ffff_ffff));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, Purpose::Workload, 3).random();
        let b: u64 = stream(7, Purpose::Workload, 3).random();
        let c: u64 = stream(7, Purpose::Workload, 4).random();
        let d: u64 = stream(7, Purpose::Loss, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams keyed by purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Init,
    Random,
    GpFit,
    Select,
    Candidates,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a seed from a base seed and a sequence of salts.
pub(crate) fn derive_seed(base: u64, salts: &[u64]) -> u64 {
    salts.iter().fold(splitmix64(base), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub(crate) fn stream_rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, &[stream as u64 + 1, index]))
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream owned by one simulation unit.
///
/// ChaCha is a counter-based cipher: the key comes from the seed, the stream id
/// is the unit index, and draws advance the counter, so every unit's numbers are
/// fixed by `(seed, unit)` alone.
pub(crate) fn unit_rng(seed: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit);
    rng
}

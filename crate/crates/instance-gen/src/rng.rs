/// SplitMix64: a fixed 64-bit counter-based generator, chosen so instances
/// reproduce bit-for-bit across platforms and languages.
///
/// State advances by the golden-ratio increment `0x9E3779B97F4A7C15`; each
/// output is the finalizer
///
/// ```text
/// z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
/// z ^= z >> 27; z *= 0x94D049BB133111EB;
/// z ^= z >> 31;
/// ```
///
/// applied to the advanced state. Independent streams are derived as
/// `state0 = mix(seed + stream_id * 0xD1B54A32D192ED03)`, one stream per
/// generated array, so adding draws to one array never shifts another.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;
const STREAM_STEP: u64 = 0xD1B54A32D192ED03;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream `stream_id` of `seed`; see the type docs for the derivation.
    pub fn stream(seed: u64, stream_id: u64) -> Self {
        Self { state: mix(seed.wrapping_add(stream_id.wrapping_mul(STREAM_STEP))) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw from the half-open unit interval (0, 1]: the top 53
    /// bits plus one, scaled by 2^-53. Never returns 0, so draws are safe
    /// to normalize or take logarithms of.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

//! Learning diagnosis engine: multi-channel psychometric estimation (IRT,
//! DINA, MIRT, higher-order DINA) fused with autoencoder representations, a
//! learner-resource response network, self-attention and a convolutional
//! predictor.

pub mod dataio;
pub mod diagnosis;
pub mod encoding;
pub mod evaluation;
pub mod interpret;
pub mod ndgrad;
pub mod psychometrics;

/// Independent sub-seed for a named component, so one user seed drives
/// every random stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the label, mixed with splitmix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Counter-based random streams keyed by (seed, trial, layer, kind).
//!
//! Each stream is a SplitMix64 sequence started from a hash of its key, so
//! any draw can be reproduced without replaying earlier trials or layers and
//! the result never depends on how work is scheduled.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum DrawKind {
    Weights = 1,
    Mask = 2,
    Noise = 3,
    Slope = 4,
    Input = 5,
    Oracle = 6,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible stream for one (seed, trial, layer, kind) key.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, trial: u64, layer: u64, kind: DrawKind) -> Self {
        let mut h = mix64(seed ^ GOLDEN);
        h = mix64(h ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03));
        h = mix64(h ^ layer.wrapping_mul(0xAEF1_7502_108E_F2D9));
        h = mix64(h ^ (kind as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25));
        Self { state: h }
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

//! Seeded random streams.
//!
//! The generator is SplitMix64 used in counter mode: the `k`-th output is
//! `mix(seed + k * GAMMA)`, so a stream is fully determined by its seed and
//! position. Independent streams are derived by hashing a parent seed with a
//! purpose tag (see [`derive_seed`]); adding a new consumer never shifts the
//! draws of an existing one. Normals use the Box–Muller transform.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    h
}

/// Seed of the sub-stream `tag` of `seed`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    mix(mix(seed) ^ fnv1a(tag.as_bytes()))
}

/// Seed derived from a parent seed and a sequence of indices.
pub fn derive_seed_indexed(seed: u64, indices: &[u64]) -> u64 {
    indices.iter().fold(mix(seed ^ GAMMA), |acc, &i| {
        mix(acc ^ mix(i.wrapping_add(GAMMA)))
    })
}

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    seed: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn from_tag(seed: u64, tag: &str) -> Self {
        Self::new(derive_seed(seed, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (rejection sampling, unbiased).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let r = self.next_u64();
            if r < zone {
                return r % bound;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }
}

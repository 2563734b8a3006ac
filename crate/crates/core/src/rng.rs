//! Seeded pseudo-randomness for splits, synthetic data and the detector
//! simulator.
//!
//! Everything random in this crate flows through [`SplitMix64`], a tiny
//! counter-style generator with a published closed-form step, so that any
//! reimplementation (in any language) that follows the same named algorithms
//! reproduces the exact byte output. The samplers on top are classics:
//! Fisher-Yates with Lemire's bounded reduction, Box-Muller normals,
//! Knuth's Poisson loop, and Marsaglia-Tsang gamma for Beta variates.

/// SplitMix64 sequence generator (Steele, Lea & Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derive an independent substream from a seed and a string key.
    ///
    /// The key is hashed with FNV-1a (64-bit) and xor-folded into the seed,
    /// then stepped once so that nearby seeds do not produce nearby streams.
    pub fn substream(seed: u64, key: &str) -> Self {
        let mut rng = Self::new(seed ^ fnv1a64(key.as_bytes()));
        rng.next_u64();
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1), 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) via Lemire's multiply-shift reduction.
    /// The modulo bias is below 2^-64 per draw and ignored.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and
    /// discards the paired variate to keep the stream position predictable.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Poisson count via Knuth's product-of-uniforms loop. Intended for the
    /// small means used here (spurious detections per image).
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let limit = (-mean).exp();
        let mut count = 0u64;
        let mut product = self.next_f64();
        while product > limit {
            count += 1;
            product *= self.next_f64();
        }
        count
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang (2000), with the standard
    /// `U^(1/a)` boost for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.next_f64().powf(1.0 / shape);
            return boost * self.gamma(shape + 1.0);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.gaussian();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64();
            if u < 1.0 - 0.0331 * x.powi(4)
                || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln())
            {
                return d * v;
            }
        }
    }

    /// Beta(alpha, beta) as a ratio of gamma variates.
    pub fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        let a = self.gamma(alpha);
        let b = self.gamma(beta);
        a / (a + b)
    }
}

/// FNV-1a 64-bit hash, used only for substream derivation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

//! Counter-based Philox4x32-10 generator.
//!
//! Every random number is a pure function of `(seed, stream, step, block)`,
//! so a Monte Carlo path can be replayed in isolation and the result of an
//! ensemble does not depend on how paths are scheduled across threads.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const ROUNDS: usize = 10;

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox {
    key: [u32; 2],
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

impl Philox {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    pub fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    /// Raw Philox4x32-10 bijection of one 128-bit counter.
    #[inline]
    pub fn block(&self, counter: [u32; 4]) -> [u32; 4] {
        let mut c = counter;
        let mut k = self.key;
        for round in 0..ROUNDS {
            if round > 0 {
                k[0] = k[0].wrapping_add(PHILOX_W0);
                k[1] = k[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }

    /// 128 random bits addressed by `(stream, step, block)`.
    ///
    /// `step` must fit in 32 bits.
    #[inline]
    pub fn draw(&self, stream: u64, step: u64, block: u32) -> [u32; 4] {
        assert!(
            step <= u64::from(u32::MAX),
            "step index exceeds counter width"
        );
        self.block([block, step as u32, stream as u32, (stream >> 32) as u32])
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&self, stream: u64, step: u64, block: u32) -> f64 {
        let w = self.draw(stream, step, block);
        let bits = (u64::from(w[0]) << 32) | u64::from(w[1]);
        (bits >> 11) as f64 * TWO_POW_M53
    }

    /// Two independent standard normals (Box-Muller on one counter block).
    #[inline]
    pub fn normal_pair(&self, stream: u64, step: u64, block: u32) -> [f64; 2] {
        let w = self.draw(stream, step, block);
        let a = (u64::from(w[0]) << 32) | u64::from(w[1]);
        let b = (u64::from(w[2]) << 32) | u64::from(w[3]);
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (b >> 11) as f64 * TWO_POW_M53;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        [r * c, r * s]
    }

    /// Fills `out` with standard normals for one `(stream, step)` address.
    pub fn fill_normals(&self, stream: u64, step: u64, out: &mut [f64]) {
        for (block, chunk) in out.chunks_mut(2).enumerate() {
            let pair = self.normal_pair(stream, step, block as u32);
            chunk.copy_from_slice(&pair[..chunk.len()]);
        }
    }
}

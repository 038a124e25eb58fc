//! Counter-based random streams.
//!
//! Every stream is Philox4x32-10 keyed by a 64-bit seed, with the 64-bit
//! stream id occupying the upper half of the 128-bit counter. Two streams
//! with different `(seed, stream_id)` pairs never share a counter block, and
//! the same pair always replays the same sequence, which is what makes every
//! estimate reproducible irrespective of how work is split across threads.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One application of the Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
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

/// SplitMix64 finaliser, used to derive independent sub-seeds.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
#[inline]
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Stream id layout: `(module_tag << 32) | replicate_index`.
#[inline]
pub fn stream_id(module_tag: u32, replicate_index: u32) -> u64 {
    (u64::from(module_tag) << 32) | u64::from(replicate_index)
}

/// Anything that hands out uniforms on the open interval (0, 1).
pub trait UniformSource {
    fn uniform(&mut self) -> f64;

    /// Standard normal draw (Box–Muller, one variate per call).
    fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u32; 4],
    pos: usize,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            stream: stream_id,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }
}

impl UniformSource for RngStream {
    #[inline]
    fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}

//! Counter-based deterministic random streams plus the randomized tensor
//! constructors built on them.
//!
//! Every stream is a pure function of `(master_seed, stream_id)`: the i-th
//! output is `mix64(key + (i+1)*GOLDEN)` where `key` is derived from the
//! seed pair by the same finalizer. Deriving a sub-stream never consumes
//! from its parent, so per-trial and per-tensor streams can be drawn in any
//! order (or concurrently) without changing any value.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over UTF-8 bytes; used to turn parameter names into stream labels.
#[inline]
pub(crate) fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn stream_key(master_seed: u64, stream_id: u64) -> u64 {
    mix64(mix64(master_seed ^ GOLDEN) ^ mix64(stream_id ^ STREAM_SALT))
}

/// A deterministic random stream identified by `(master_seed, stream_id)`.
///
/// Identical identifiers yield identical sequences on every platform.
/// A single stream must not be advanced from two execution contexts at
/// once; clone it or derive sub-streams instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self::with_stream(master_seed, 0)
    }

    pub fn with_stream(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
            key: stream_key(master_seed, stream_id),
            counter: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives an independent sub-stream labeled by `label`.
    ///
    /// Pure: does not advance `self`, and the result does not depend on how
    /// far `self` has been consumed.
    pub fn substream(&self, label: u64) -> RngStream {
        RngStream {
            master_seed: self.key,
            stream_id: label,
            key: stream_key(self.key, label),
            counter: 0,
        }
    }

    /// Sub-stream labeled by a string (e.g. a parameter name).
    pub fn substream_named(&self, name: &str) -> RngStream {
        self.substream(fnv1a64(name))
    }

    /// Stable 64-bit value derived from (this stream, label); handy for
    /// seeding per-row experiment runs.
    pub fn derive_seed(&self, label: u64) -> u64 {
        stream_key(self.key, label)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1]; never zero, safe under `ln`.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn next_bool(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// One Box-Muller pair of independent standard normal draws.
    ///
    /// Consumes exactly two 64-bit outputs, so consumption is independent
    /// of the values drawn.
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Tensor of i.i.d. draws from N(mean, sigma^2).
///
/// `sigma == 0` returns the constant tensor of `mean` without consuming the
/// stream. All produced values are finite for finite arguments.
pub fn gaussian_sample<S: Scalar>(
    rng: &mut RngStream,
    mean: f64,
    sigma: f64,
    shape: &[usize],
) -> Result<Tensor<S>> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian_sample: sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(Tensor::full(shape, S::from_f64(mean)));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let (z0, z1) = rng.next_gaussian_pair();
        data.push(S::from_f64(mean + sigma * z0));
        if data.len() < n {
            data.push(S::from_f64(mean + sigma * z1));
        }
    }
    Tensor::from_vec(shape, data)
}

/// Tensor of i.i.d. draws uniform on [-L, L] with
/// `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform_init<S: Scalar>(
    rng: &mut RngStream,
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
) -> Result<Tensor<S>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!(
            "glorot_uniform_init: fans must be >= 1, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64(limit * (2.0 * rng.next_f64() - 1.0)))
        .collect();
    Tensor::from_vec(shape, data)
}

//! Wrapping arithmetic in Z_{2^q} and the fixed-point codec.
//!
//! Elements live in 64-bit words and are masked to `q` bits after every
//! operation. Reals are stored as `round(r * 2^f) mod 2^q`, negative values in
//! the upper half of the ring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RING_BITS: u32 = 60;
pub const DEFAULT_FRAC_BITS: u32 = 20;

/// A single element of Z_{2^q}. The wrapped word is always reduced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct RingElement(u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingParams {
    q: u32,
    f: u32,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams { q: DEFAULT_RING_BITS, f: DEFAULT_FRAC_BITS }
    }
}

impl RingParams {
    pub fn new(q: u32, f: u32) -> Result<Self> {
        if !(2 <= f && f < q && q <= 64) {
            return Err(Error::InvalidParams(format!("need 2 <= f < q <= 64, got q={q}, f={f}")));
        }
        if q < 2 * f + 8 {
            return Err(Error::InvalidParams(format!("q - 2f must be at least 8 (q={q}, f={f})")));
        }
        Ok(RingParams { q, f })
    }

    #[inline]
    pub fn ring_bits(&self) -> u32 {
        self.q
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.f
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.q == 64 {
            u64::MAX
        } else {
            (1u64 << self.q) - 1
        }
    }

    /// 2^f as a ring element, i.e. `encode(1.0)`.
    #[inline]
    pub fn one(&self) -> RingElement {
        RingElement(1u64 << self.f)
    }

    #[inline]
    pub fn reduce(&self, v: u64) -> RingElement {
        RingElement(v & self.mask())
    }

    #[inline]
    pub fn add(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_add(b.0))
    }

    #[inline]
    pub fn sub(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_sub(b.0))
    }

    #[inline]
    pub fn neg(&self, a: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_neg())
    }

    #[inline]
    pub fn mul(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_mul(b.0))
    }

    /// Multiplication by a signed integer constant (no rescaling).
    #[inline]
    pub fn mul_int(&self, a: RingElement, c: i64) -> RingElement {
        self.reduce(a.0.wrapping_mul(c as u64))
    }

    /// Signed interpretation: values at or above 2^(q-1) are negative.
    #[inline]
    pub fn to_signed(&self, x: RingElement) -> i64 {
        let shift = 64 - self.q;
        ((x.0 << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> RingElement {
        self.reduce(v as u64)
    }

    /// Largest magnitude accepted by [`encode`](Self::encode): 2^(q-1-f).
    pub fn max_real(&self) -> f64 {
        (2f64).powi((self.q - 1 - self.f) as i32)
    }

    /// Fixed-point encoding with ties rounded away from zero.
    pub fn encode(&self, r: f64) -> Result<RingElement> {
        let bound = self.max_real();
        if !r.is_finite() || r.abs() >= bound {
            return Err(Error::OutOfRange { value: r, bound });
        }
        let scaled = (r * (1u64 << self.f) as f64).round();
        Ok(self.from_signed(scaled as i64))
    }

    pub fn decode(&self, x: RingElement) -> f64 {
        self.to_signed(x) as f64 / (1u64 << self.f) as f64
    }

    /// Arithmetic right shift by `bits` under the signed interpretation.
    #[inline]
    pub fn shift_right(&self, x: RingElement, bits: u32) -> RingElement {
        self.from_signed(self.to_signed(x) >> bits)
    }

    /// Rescales a double-scale product back to scale 2^f.
    #[inline]
    pub fn local_truncate(&self, x: RingElement) -> RingElement {
        self.shift_right(x, self.f)
    }
}

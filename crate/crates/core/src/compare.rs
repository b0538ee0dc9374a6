//! Secure comparison, extrema and min-max normalisation.
//!
//! `ltz` masks the secret with a dealer value `r` whose bits are shared, opens
//! `c = x + r` and recovers the top bit of `c - r` with a borrow chain over the
//! low `q - 1` bits. Cost per batch: `q` rounds, `q - 1` triples and `q` random
//! bits per element.

use crate::error::{Error, Result};
use crate::protocols::MpcContext;
use crate::ring::RingElement;
use crate::sharing::{Share, SharedVector};

/// Pairing schedule of a knockout tournament over `n` items: number of
/// comparisons at each level.
pub fn tournament_plan(n: usize) -> Vec<usize> {
    let mut levels = Vec::new();
    let mut size = n;
    while size > 1 {
        levels.push(size / 2);
        size = size.div_ceil(2);
    }
    levels
}

/// Splits `v` into pairs `(v[2i], v[2i+1])`; an odd element is carried.
fn pair_up(v: &[RingElement]) -> (Vec<RingElement>, Vec<RingElement>, Option<RingElement>) {
    let mut a = Vec::with_capacity(v.len() / 2);
    let mut b = Vec::with_capacity(v.len() / 2);
    for pair in v.chunks_exact(2) {
        a.push(pair[0]);
        b.push(pair[1]);
    }
    let carry = if v.len() % 2 == 1 { v.last().copied() } else { None };
    (a, b, carry)
}

impl MpcContext {
    /// Shares of `[x < 0]` as raw 0/1 integers.
    pub fn ltz_raw(&mut self, x: &SharedVector) -> Result<SharedVector> {
        let m = x.len();
        self.counters.ltz_calls += 1;
        self.counters.ltz_elems += m as u64;
        if m == 0 {
            return Ok(x.clone());
        }
        let p = self.params();
        let q = p.ring_bits() as usize;
        let first = self.party().is_first();
        let bits = self.material().bits(m * q)?;
        let raw = |e: usize, i: usize| bits[e * q + i].raw;

        let masked: Vec<RingElement> = (0..m)
            .map(|e| {
                let r = (0..q)
                    .fold(RingElement::ZERO, |acc, i| p.add(acc, p.mul_int(raw(e, i), 1i64.wrapping_shl(i as u32))));
                p.add(x.values()[e], r)
            })
            .collect();
        let c = self.open(&self.shared(masked))?;
        let bit = |e: usize, i: usize| (c[e].value() >> i) & 1;

        // borrow into bit 1: [c_0 < r_0]
        let mut borrow: Vec<RingElement> =
            (0..m).map(|e| if bit(e, 0) == 0 { raw(e, 0) } else { RingElement::ZERO }).collect();
        for i in 1..q - 1 {
            let ri = self.shared((0..m).map(|e| raw(e, i)).collect());
            let prod = self.mul_raw(&ri, &self.shared(borrow.clone()))?;
            borrow = (0..m)
                .map(|e| {
                    let pr = prod.values()[e];
                    if bit(e, i) == 1 {
                        pr
                    } else {
                        p.sub(p.add(raw(e, i), borrow[e]), pr)
                    }
                })
                .collect();
        }
        let top = self.shared((0..m).map(|e| raw(e, q - 1)).collect());
        let prod = self.mul_raw(&top, &self.shared(borrow.clone()))?;
        let out = (0..m)
            .map(|e| {
                // u = r_{q-1} xor borrow
                let u = p.sub(p.add(raw(e, q - 1), borrow[e]), p.mul_int(prod.values()[e], 2));
                if bit(e, q - 1) == 1 {
                    let v = p.neg(u);
                    if first {
                        p.add(v, p.reduce(1))
                    } else {
                        v
                    }
                } else {
                    u
                }
            })
            .collect();
        Ok(self.shared(out))
    }

    /// Shares of `[x < 0]`, fixed-point encoded.
    pub fn ltz(&mut self, x: &SharedVector) -> Result<SharedVector> {
        let b = self.ltz_raw(x)?;
        let f = self.params().frac_bits();
        Ok(self.mul_int(&b, 1 << f))
    }

    /// Raw-integer sign in {-1, +1}; zero maps to +1.
    pub fn sign_raw(&mut self, x: &SharedVector) -> Result<SharedVector> {
        self.counters.sign_calls += 1;
        let b = self.ltz_raw(x)?;
        let p = self.params();
        Ok(self.add_public_raw(&self.mul_int(&b, -2), p.reduce(1)))
    }

    /// Fixed-point sign in {-1.0, +1.0}; zero maps to +1.
    pub fn sign(&mut self, x: &SharedVector) -> Result<SharedVector> {
        let s = self.sign_raw(x)?;
        let f = self.params().frac_bits();
        Ok(self.mul_int(&s, 1 << f))
    }

    /// Elementwise maximum and minimum of `a` and `b` from a single
    /// comparison batch.
    pub fn max_min_pairs(&mut self, a: &SharedVector, b: &SharedVector) -> Result<(SharedVector, SharedVector)> {
        let diff = self.sub(a, b)?;
        let lt = self.ltz_raw(&diff)?;
        let d_lt = self.mul_raw(&diff, &lt)?;
        Ok((self.sub(a, &d_lt)?, self.add(b, &d_lt)?))
    }

    fn reduce_levels(&mut self, mut maxs: Vec<RingElement>, mut mins: Vec<RingElement>) -> Result<(Share, Share)> {
        while maxs.len() > 1 || mins.len() > 1 {
            let (ma, mb, mc) = pair_up(&maxs);
            let (na, nb, nc) = pair_up(&mins);
            let split = ma.len();
            let a = self.shared([ma, na].concat());
            let b = self.shared([mb, nb].concat());
            let (hi, lo) = self.max_min_pairs(&a, &b)?;
            maxs = hi.values()[..split].to_vec();
            maxs.extend(mc);
            mins = lo.values()[split..].to_vec();
            mins.extend(nc);
        }
        let owner = self.party();
        Ok((Share { owner, value: maxs[0] }, Share { owner, value: mins[0] }))
    }

    /// Maximum and minimum of a vector by a batched knockout tournament:
    /// `ceil(log2 n)` comparison levels, each one `ltz` plus one product.
    pub fn extrema(&mut self, v: &SharedVector) -> Result<(Share, Share)> {
        if v.is_empty() {
            return Err(Error::Protocol("extrema of an empty vector".into()));
        }
        if v.len() == 1 {
            return Ok((v.get(0), v.get(0)));
        }
        let (a, b, carry) = pair_up(v.values());
        let (hi, lo) = self.max_min_pairs(&self.shared(a), &self.shared(b))?;
        let mut maxs = hi.into_values();
        let mut mins = lo.into_values();
        maxs.extend(carry);
        mins.extend(carry);
        self.reduce_levels(maxs, mins)
    }

    pub fn max_elem(&mut self, v: &SharedVector) -> Result<Share> {
        self.tournament(v, true)
    }

    pub fn min_elem(&mut self, v: &SharedVector) -> Result<Share> {
        self.tournament(v, false)
    }

    fn tournament(&mut self, v: &SharedVector, want_max: bool) -> Result<Share> {
        if v.is_empty() {
            return Err(Error::Protocol("extremum of an empty vector".into()));
        }
        let mut cur = v.values().to_vec();
        while cur.len() > 1 {
            let (a, b, carry) = pair_up(&cur);
            let (hi, lo) = self.max_min_pairs(&self.shared(a), &self.shared(b))?;
            cur = if want_max { hi } else { lo }.into_values();
            cur.extend(carry);
        }
        Ok(Share { owner: self.party(), value: cur[0] })
    }

    /// Maps `v` affinely onto `[eps, 1 - eps]` using its own minimum and
    /// maximum. Contract: the range `max - min` lies in the reciprocal's
    /// input domain; a constant vector is not supported.
    pub fn minmax_normalize(&mut self, v: &SharedVector, eps: f64) -> Result<SharedVector> {
        let (mx, mn) = self.extrema(v)?;
        let p = self.params();
        let range = self.shared(vec![p.sub(mx.value, mn.value)]);
        let inv = self.inv(&range)?;
        let scaled = self.scale(&inv, 1.0 - 2.0 * eps)?;
        let n = v.len();
        let shifted = self.sub(v, &self.shared(vec![mn.value; n]))?;
        let factor = self.shared(vec![scaled.values()[0]; n]);
        let u = self.mul(&shifted, &factor)?;
        self.add_const(&u, eps)
    }
}

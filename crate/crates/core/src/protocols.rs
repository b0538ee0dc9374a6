//! Online two-party protocols over additive shares.
//!
//! Every interactive primitive works on whole vectors, so a batch of `m`
//! independent operations costs the same number of rounds as one.
//!
//! Fixed-point products are rescaled according to [`TruncationMode`]:
//!
//! * `Local`: each party shifts its own share. Error of one LSB, but the
//!   result is off by 2^(q-f) with probability about |x| / 2^q, where `x` is
//!   the double-scale product.
//! * `Split` (default): the second operand is split into a high part with
//!   `f/2` fractional bits and a low remainder, and the two partial products
//!   are truncated locally. Same round count as `Local`, twice the triples,
//!   and the magnitude being truncated drops by 2^(f/2), which makes the
//!   failure probability negligible for the value ranges used here.
//! * `Exact`: dealer-assisted truncation with a masked pair. One extra round
//!   per product; never fails for |x| < 2^(q-2), error within two LSB.

use serde::{Deserialize, Serialize};

use crate::dealer::{DealerBudget, MaterialSource};
use crate::error::{Error, Result};
use crate::ring::{RingElement, RingParams};
use crate::sharing::{PartyId, Share, SharedVector};
use crate::transport::{Channel, ChannelStats, Frame};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub inv_iters: u32,
    pub sqrt_iters: u32,
    /// Public upper bound on inputs to the reciprocal.
    pub inv_bound: f64,
    /// Public upper bound on inputs to the (inverse) square root.
    pub sqrt_bound: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { inv_iters: 27, sqrt_iters: 27, inv_bound: 4096.0, sqrt_bound: 4096.0 }
    }
}

impl NewtonConfig {
    pub fn validate(&self, params: &RingParams) -> Result<()> {
        if self.inv_iters == 0 || self.sqrt_iters == 0 {
            return Err(Error::Config("Newton iteration counts must be at least 1".into()));
        }
        for (name, b) in [("inv_bound", self.inv_bound), ("sqrt_bound", self.sqrt_bound)] {
            if b.is_nan() || b <= 0.0 || params.encode(b).is_err() {
                return Err(Error::Config(format!("{name} = {b} is not representable")));
            }
            if params.encode(1.0 / b).map(|e| e.value()).unwrap_or(0) == 0 {
                return Err(Error::Config(format!("1 / {name} underflows the fixed-point scale")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    Local,
    #[default]
    Split,
    Exact,
}

/// Public protocol parameters; both parties must hold identical copies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub ring: RingParams,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub truncation: TruncationMode,
}

/// Per-session operation tallies (element counts unless noted).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub mul_raw: u64,
    pub truncations: u64,
    pub ltz_calls: u64,
    pub ltz_elems: u64,
    pub sign_calls: u64,
    pub inv_calls: u64,
    pub sqrt_calls: u64,
}

pub struct MpcContext {
    party: PartyId,
    config: ProtocolConfig,
    channel: Channel,
    material: Box<dyn MaterialSource>,
    pub(crate) counters: OpCounters,
}

impl MpcContext {
    pub fn new(config: ProtocolConfig, channel: Channel, material: Box<dyn MaterialSource>) -> Result<Self> {
        let party = channel.party();
        if material.party() != party {
            return Err(Error::PartyMismatch(format!(
                "channel is {party} but dealer material belongs to {}",
                material.party()
            )));
        }
        config.newton.validate(&config.ring)?;
        Ok(MpcContext { party, config, channel, material, counters: OpCounters::default() })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn params(&self) -> RingParams {
        self.config.ring
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn stats(&self) -> ChannelStats {
        self.channel.stats()
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn consumed(&self) -> DealerBudget {
        self.material.consumed()
    }

    pub fn channel_mut(&mut self) -> &mut Channel {
        &mut self.channel
    }

    pub fn take_transcript(&mut self) -> Vec<Frame> {
        self.channel.take_transcript()
    }

    pub(crate) fn material(&mut self) -> &mut dyn MaterialSource {
        self.material.as_mut()
    }

    // ---- local operations -------------------------------------------------

    pub fn shared(&self, values: Vec<RingElement>) -> SharedVector {
        SharedVector::new(self.party, values)
    }

    fn check(&self, v: &SharedVector) -> Result<()> {
        if v.owner() != self.party {
            return Err(Error::PartyMismatch(format!("{} context given a {} share", self.party, v.owner())));
        }
        Ok(())
    }

    fn same_len(a: &SharedVector, b: &SharedVector) -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
        }
        Ok(())
    }

    /// Shares of public values: party 1 holds the encoding, party 2 zeros.
    pub fn public(&self, xs: &[f64]) -> Result<SharedVector> {
        let p = self.params();
        let values = if self.party.is_first() {
            xs.iter().map(|&x| p.encode(x)).collect::<Result<_>>()?
        } else {
            vec![RingElement::ZERO; xs.len()]
        };
        Ok(self.shared(values))
    }

    pub fn constant(&self, x: f64, len: usize) -> Result<SharedVector> {
        self.public(&vec![x; len])
    }

    fn zip_with(
        &self,
        a: &SharedVector,
        b: &SharedVector,
        op: impl Fn(RingElement, RingElement) -> RingElement,
    ) -> Result<SharedVector> {
        self.check(a)?;
        self.check(b)?;
        Self::same_len(a, b)?;
        Ok(self.shared(a.values().iter().zip(b.values()).map(|(&x, &y)| op(x, y)).collect()))
    }

    fn map(&self, a: &SharedVector, op: impl Fn(RingElement) -> RingElement) -> SharedVector {
        self.shared(a.values().iter().map(|&x| op(x)).collect())
    }

    pub fn add(&self, a: &SharedVector, b: &SharedVector) -> Result<SharedVector> {
        let p = self.params();
        self.zip_with(a, b, |x, y| p.add(x, y))
    }

    pub fn sub(&self, a: &SharedVector, b: &SharedVector) -> Result<SharedVector> {
        let p = self.params();
        self.zip_with(a, b, |x, y| p.sub(x, y))
    }

    pub fn neg(&self, a: &SharedVector) -> SharedVector {
        let p = self.params();
        self.map(a, |x| p.neg(x))
    }

    /// Adds a public ring element (party 1 only).
    pub fn add_public_raw(&self, a: &SharedVector, c: RingElement) -> SharedVector {
        if !self.party.is_first() {
            return a.clone();
        }
        let p = self.params();
        self.map(a, |x| p.add(x, c))
    }

    pub fn add_const(&self, a: &SharedVector, c: f64) -> Result<SharedVector> {
        Ok(self.add_public_raw(a, self.params().encode(c)?))
    }

    /// Exact multiplication by a public integer.
    pub fn mul_int(&self, a: &SharedVector, c: i64) -> SharedVector {
        let p = self.params();
        self.map(a, |x| p.mul_int(x, c))
    }

    /// Per-party arithmetic shift. Only for values whose magnitude is far
    /// below 2^(q-1), e.g. halving a fixed-point value.
    pub fn shift_local(&self, a: &SharedVector, bits: u32) -> SharedVector {
        self.map(a, |x| self.shift_share(x, bits))
    }

    /// Shifts one share. The flooring of both shares loses one LSB on
    /// average; party one adds it back so the error is centred on zero.
    fn shift_share(&self, x: RingElement, bits: u32) -> RingElement {
        let p = self.params();
        let r = p.shift_right(x, bits);
        if self.party.is_first() {
            p.add(r, p.reduce(1))
        } else {
            r
        }
    }

    /// Multiplication by a public fixed-point constant.
    pub fn scale(&mut self, a: &SharedVector, c: f64) -> Result<SharedVector> {
        self.check(a)?;
        let p = self.params();
        let f = p.frac_bits();
        let c_enc = p.encode(c)?;
        match self.config.truncation {
            TruncationMode::Local => Ok(self.map(a, |x| self.shift_share(p.mul(x, c_enc), f))),
            TruncationMode::Split => {
                let s = f / 2;
                let c_int = p.to_signed(c_enc);
                let hi = c_int >> s;
                let lo = c_int - (hi << s);
                Ok(self.map(a, |x| {
                    let h = self.shift_share(p.mul_int(x, hi), f - s);
                    let l = self.shift_share(p.mul_int(x, lo), f);
                    p.add(h, l)
                }))
            }
            TruncationMode::Exact => {
                let raw = self.map(a, |x| p.mul(x, c_enc));
                self.truncate(&raw)
            }
        }
    }

    /// `scale * a + offset` with public constants.
    pub fn affine(&mut self, a: &SharedVector, scale: f64, offset: f64) -> Result<SharedVector> {
        let s = self.scale(a, scale)?;
        self.add_const(&s, offset)
    }

    // ---- interactive operations ----------------------------------------------

    /// Reveals shared values to both parties (one round).
    pub fn open(&mut self, a: &SharedVector) -> Result<Vec<RingElement>> {
        self.check(a)?;
        self.channel.open(a.values())
    }

    /// Beaver multiplication without rescaling: the result has the sum of the
    /// operands' scales. Exact in the ring. One round.
    pub fn mul_raw(&mut self, x: &SharedVector, y: &SharedVector) -> Result<SharedVector> {
        self.check(x)?;
        self.check(y)?;
        Self::same_len(x, y)?;
        let m = x.len();
        if m == 0 {
            return Ok(self.shared(Vec::new()));
        }
        let p = self.params();
        let triples = self.material.triples(m)?;
        let mut masked = Vec::with_capacity(2 * m);
        masked.extend(x.values().iter().zip(&triples).map(|(&v, t)| p.sub(v, t.a)));
        masked.extend(y.values().iter().zip(&triples).map(|(&v, t)| p.sub(v, t.b)));
        let opened = self.channel.open(&masked)?;
        let (d, e) = opened.split_at(m);
        let first = self.party.is_first();
        let z = triples
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut z = p.add(t.c, p.add(p.mul(d[i], t.b), p.mul(e[i], t.a)));
                if first {
                    z = p.add(z, p.mul(d[i], e[i]));
                }
                z
            })
            .collect();
        self.counters.mul_raw += m as u64;
        Ok(self.shared(z))
    }

    /// Rescales double-scale values back to 2^f.
    pub fn truncate(&mut self, z: &SharedVector) -> Result<SharedVector> {
        self.check(z)?;
        self.counters.truncations += z.len() as u64;
        match self.config.truncation {
            TruncationMode::Local | TruncationMode::Split => {
                let f = self.params().frac_bits();
                Ok(self.map(z, |x| self.shift_share(x, f)))
            }
            TruncationMode::Exact => self.truncate_exact(z),
        }
    }

    fn truncate_exact(&mut self, z: &SharedVector) -> Result<SharedVector> {
        let m = z.len();
        if m == 0 {
            return Ok(z.clone());
        }
        let p = self.params();
        let q = p.ring_bits();
        let f = p.frac_bits();
        let first = self.party.is_first();
        let offset = p.reduce(1u64 << (q - 2));
        let pairs = self.material.masked_pairs(m)?;
        let masked: Vec<RingElement> = z
            .values()
            .iter()
            .zip(&pairs)
            .map(|(&v, mp)| {
                let v = p.add(v, mp.r);
                if first {
                    p.add(v, offset)
                } else {
                    v
                }
            })
            .collect();
        let c = self.channel.open(&masked)?;
        let low_mask = (1u64 << (q - 1)) - 1;
        let carry_weight = p.reduce(1u64 << (q - 1 - f));
        let out = c
            .iter()
            .zip(&pairs)
            .map(|(&c, mp)| {
                let c_low = c.value() & low_mask;
                let c_msb = c.value() >> (q - 1);
                // carry out of the low q-1 bits = c_msb xor r_msb
                let carry = if c_msb == 1 {
                    let one_minus = p.neg(mp.msb);
                    if first {
                        p.add(one_minus, p.reduce(1))
                    } else {
                        one_minus
                    }
                } else {
                    mp.msb
                };
                let mut y = p.sub(p.mul(carry, carry_weight), mp.shifted);
                if first {
                    y = p.add(y, p.reduce(c_low >> f));
                    y = p.sub(y, p.reduce(1u64 << (q - 2 - f)));
                }
                y
            })
            .collect();
        Ok(self.shared(out))
    }

    /// Fixed-point product (one round, plus one in `Exact` mode).
    pub fn mul(&mut self, x: &SharedVector, y: &SharedVector) -> Result<SharedVector> {
        self.check(x)?;
        self.check(y)?;
        Self::same_len(x, y)?;
        if self.config.truncation != TruncationMode::Split {
            let z = self.mul_raw(x, y)?;
            return self.truncate(&z);
        }
        let p = self.params();
        let f = p.frac_bits();
        let s = f / 2;
        let m = x.len();
        let hi = self.shift_local(y, s);
        let lo = self.sub(y, &self.mul_int(&hi, 1 << s))?;
        let xs = self.shared([x.values(), x.values()].concat());
        let ys = self.shared([hi.values(), lo.values()].concat());
        let prod = self.mul_raw(&xs, &ys)?;
        self.counters.truncations += m as u64;
        let (ph, pl) = prod.values().split_at(m);
        Ok(self.shared(
            ph.iter().zip(pl).map(|(&h, &l)| p.add(self.shift_share(h, f - s), self.shift_share(l, f))).collect(),
        ))
    }

    pub fn square(&mut self, x: &SharedVector) -> Result<SharedVector> {
        self.mul(x, x)
    }

    /// Reciprocal by Newton iteration `w <- w (2 - x w)` from the public
    /// start `2 / inv_bound`. Contract: secrets in (2^-12, inv_bound); outside
    /// that range the result silently degrades.
    pub fn inv(&mut self, x: &SharedVector) -> Result<SharedVector> {
        self.check(x)?;
        self.counters.inv_calls += 1;
        let NewtonConfig { inv_iters, inv_bound, .. } = self.config.newton;
        let w0 = 2.0 / inv_bound;
        // first step with the public start value needs no interaction
        let xw = self.scale(x, w0)?;
        let t = self.add_const(&self.neg(&xw), 2.0)?;
        let mut w = self.scale(&t, w0)?;
        for _ in 1..inv_iters {
            let xw = self.mul(x, &w)?;
            let t = self.add_const(&self.neg(&xw), 2.0)?;
            w = self.mul(&w, &t)?;
        }
        Ok(w)
    }

    /// `2^s / x`, for secrets whose inverse sits too close to the LSB to be
    /// useful at scale f. Two Newton steps at the wider scale follow the
    /// plain inverse. Requires `x >= 1` and `x < 2^s`-ish headroom in the ring.
    pub fn inv_wide(&mut self, x: &SharedVector, s: u32) -> Result<SharedVector> {
        let w = self.inv(x)?;
        let mut r = self.mul_int(&w, 1i64 << s);
        for _ in 0..2 {
            let xr = self.mul(x, &r)?;
            let e = self.shift_local(&xr, s);
            let t = self.add_const(&self.neg(&e), 2.0)?;
            r = self.mul(&r, &t)?;
        }
        Ok(r)
    }

    /// Inverse square root by `y <- y (3 - x y^2) / 2` from the public start
    /// `1 / sqrt(sqrt_bound)`. Contract: secrets in (2^-12, sqrt_bound).
    pub fn sqrt_inv(&mut self, x: &SharedVector) -> Result<SharedVector> {
        self.check(x)?;
        self.counters.sqrt_calls += 1;
        let NewtonConfig { sqrt_iters, sqrt_bound, .. } = self.config.newton;
        let y0 = 1.0 / sqrt_bound.sqrt();
        let xy2 = self.scale(x, y0 * y0)?;
        let t = self.add_const(&self.neg(&xy2), 3.0)?;
        let mut y = self.scale(&t, y0 / 2.0)?;
        for _ in 1..sqrt_iters {
            let y2 = self.square(&y)?;
            let xy2 = self.mul(x, &y2)?;
            let t = self.add_const(&self.neg(&xy2), 3.0)?;
            let half_t = self.shift_local(&t, 1);
            y = self.mul(&y, &half_t)?;
        }
        Ok(y)
    }

    pub fn sqrt(&mut self, x: &SharedVector) -> Result<SharedVector> {
        let r = self.sqrt_inv(x)?;
        self.mul(x, &r)
    }

    // ---- pseudo-equality --------------------------------------------------------

    /// Raw square of raw-integer secrets (one round, no truncation).
    pub fn square_raw(&mut self, z: &SharedVector) -> Result<SharedVector> {
        self.mul_raw(z, z)
    }

    /// Degree-2 indicator `[z == kappa]` for raw-integer secrets z in
    /// {-1, 0, 1}, returned fixed-point encoded. With `z2` (the raw square)
    /// supplied the evaluation is purely local; everything is exact.
    ///
    /// * kappa = -1: (z^2 - z) / 2
    /// * kappa =  0: 1 - z^2
    /// * kappa =  1: (z^2 + z) / 2
    pub fn eq_poly(&mut self, z: &SharedVector, kappa: i8, z2: Option<&SharedVector>) -> Result<SharedVector> {
        let owned;
        let z2 = match z2 {
            Some(sq) => {
                Self::same_len(z, sq)?;
                sq
            }
            None => {
                owned = self.square_raw(z)?;
                &owned
            }
        };
        let doubled = self.eq_poly_doubled(z, kappa, z2)?;
        let f = self.params().frac_bits();
        Ok(self.mul_int(&doubled, 1 << (f - 1)))
    }

    /// Twice the indicator as a raw integer in {0, 2}. Multiplying it with a
    /// fixed-point value gives twice the product at scale 2^f with no
    /// truncation.
    pub fn eq_poly_doubled(&self, z: &SharedVector, kappa: i8, z2: &SharedVector) -> Result<SharedVector> {
        let p = self.params();
        match kappa {
            1 => self.add(z2, z),
            -1 => self.sub(z2, z),
            0 => Ok(self.add_public_raw(&self.mul_int(z2, -2), p.reduce(2))),
            other => Err(Error::Protocol(format!("kappa must be -1, 0 or 1, got {other}"))),
        }
    }

    /// Sum of `t[i]` over the positions where the raw-integer selector
    /// `z[i]` equals `kappa`.
    pub fn conditioned_sum(&mut self, t: &SharedVector, z: &SharedVector, kappa: i8) -> Result<Share> {
        self.check(t)?;
        self.check(z)?;
        Self::same_len(t, z)?;
        let z2 = self.square_raw(z)?;
        let doubled = self.eq_poly_doubled(z, kappa, &z2)?;
        let prod = self.mul_raw(&doubled, t)?;
        let p = self.params();
        let sum = prod.values().iter().fold(RingElement::ZERO, |acc, &v| p.add(acc, v));
        Ok(Share { owner: self.party, value: self.shift_share(sum, 1) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{reveal, run_pair, share_reals};

    #[test]
    fn mul_small_integers_all_modes() {
        for mode in [TruncationMode::Local, TruncationMode::Split, TruncationMode::Exact] {
            let cfg = ProtocolConfig { truncation: mode, ..Default::default() };
            let (a, b) = run_pair(cfg, 1, |ctx| {
                let x = share_reals(ctx, &[3.0, 5.5, -2.0], 10)?;
                let y = share_reals(ctx, &[4.0, 0.0, -0.25], 11)?;
                ctx.mul(&x, &y)
            });
            let got = reveal(&cfg.ring, &a, &b);
            for (g, want) in got.iter().zip([12.0, 0.0, 0.5]) {
                assert!((g - want).abs() <= 2f64.powi(-19), "{mode:?}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn mul_costs_one_round_unless_exact() {
        for (mode, rounds) in [(TruncationMode::Local, 1), (TruncationMode::Split, 1), (TruncationMode::Exact, 2)] {
            let cfg = ProtocolConfig { truncation: mode, ..Default::default() };
            let (r, _) = run_pair(cfg, 1, |ctx| {
                let x = share_reals(ctx, &[1.5; 40], 1)?;
                let before = ctx.stats().rounds;
                ctx.mul(&x, &x)?;
                Ok(ctx.stats().rounds - before)
            });
            assert_eq!(r, rounds, "{mode:?}");
        }
    }

    #[test]
    fn exact_truncation_large_products() {
        let cfg = ProtocolConfig {
            ring: RingParams::new(64, 20).unwrap(),
            truncation: TruncationMode::Exact,
            ..Default::default()
        };
        let xs = [1000.0, -1023.5, 777.25, -1.0, 1024.0];
        let ys = [-1024.0, -1000.0, 999.0, 1024.0, 1024.0];
        let (a, b) = run_pair(cfg, 2, |ctx| {
            let x = share_reals(ctx, &xs, 3)?;
            let y = share_reals(ctx, &ys, 4)?;
            ctx.mul(&x, &y)
        });
        for (i, g) in reveal(&cfg.ring, &a, &b).iter().enumerate() {
            assert!((g - xs[i] * ys[i]).abs() < 2f64.powi(-19), "{g}");
        }
    }

    #[test]
    fn eq_poly_truth_table() {
        let cfg = ProtocolConfig::default();
        for kappa in [-1i8, 0, 1] {
            let (a, b) = run_pair(cfg, 3, |ctx| {
                let z = crate::testing::share_ints(ctx, &[-1, 0, 1], 5)?;
                ctx.eq_poly(&z, kappa, None)
            });
            let got = reveal(&cfg.ring, &a, &b);
            let want: Vec<f64> = [-1i8, 0, 1].iter().map(|&z| (z == kappa) as u8 as f64).collect();
            assert_eq!(got, want, "kappa {kappa}");
        }
    }

    #[test]
    fn conditioned_sum_example() {
        let cfg = ProtocolConfig::default();
        let (a, b) = run_pair(cfg, 4, |ctx| {
            let t = share_reals(ctx, &[0.5, 2.0, -1.0], 1)?;
            let z = crate::testing::share_ints(ctx, &[1, 0, 1], 2)?;
            let s1 = ctx.conditioned_sum(&t, &z, 1)?;
            let s0 = ctx.conditioned_sum(&t, &z, -1)?;
            Ok(ctx.shared(vec![s1.value, s0.value]))
        });
        let got = reveal(&cfg.ring, &a, &b);
        assert!((got[0] + 0.5).abs() <= 3.0 * 2f64.powi(-19));
        assert!(got[1].abs() <= 3.0 * 2f64.powi(-19));
    }

    #[test]
    fn inverse_and_sqrt_fixed_points() {
        let cfg = ProtocolConfig::default();
        let (a, b) = run_pair(cfg, 5, |ctx| {
            let x = share_reals(ctx, &[1.0, 4.0, 9.0], 9)?;
            let i = ctx.inv(&x)?;
            let s = ctx.sqrt(&x)?;
            Ok(ctx.shared([i.values(), s.values()].concat()))
        });
        let got = reveal(&cfg.ring, &a, &b);
        let want = [1.0, 0.25, 1.0 / 9.0, 1.0, 2.0, 3.0];
        for (g, w) in got.iter().zip(want) {
            assert!(((g - w) / w).abs() <= 2f64.powi(-10), "{g} vs {w}");
        }
    }

    #[test]
    fn wrong_party_share_rejected() {
        let cfg = ProtocolConfig::default();
        let (r, _) = run_pair(cfg, 1, |ctx| {
            let foreign = SharedVector::new(ctx.party().peer(), vec![RingElement::ZERO]);
            Ok(ctx.add(&foreign, &foreign).is_err())
        });
        assert!(r);
    }
}

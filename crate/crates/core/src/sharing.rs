//! Two-party additive secret sharing.
//!
//! A secret `x` is held as `(x1, x2)` with `x = x1 + x2 mod 2^q` and `x1`
//! uniform. Public constants are always folded into party 1's share.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{RingElement, RingParams};

pub const SHARE_FILE_MAGIC: &[u8; 5] = b"VMPC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyId {
    One,
    Two,
}

impl PartyId {
    pub fn from_index(id: u64) -> Result<Self> {
        match id {
            1 => Ok(PartyId::One),
            2 => Ok(PartyId::Two),
            other => Err(Error::PartyMismatch(format!("party id must be 1 or 2, got {other}"))),
        }
    }

    pub fn index(self) -> u64 {
        match self {
            PartyId::One => 1,
            PartyId::Two => 2,
        }
    }

    pub fn peer(self) -> PartyId {
        match self {
            PartyId::One => PartyId::Two,
            PartyId::Two => PartyId::One,
        }
    }

    /// Whether this party absorbs public constants.
    #[inline]
    pub fn is_first(self) -> bool {
        self == PartyId::One
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Share {
    pub owner: PartyId,
    pub value: RingElement,
}

/// Splits `x` into two shares; the first is uniform over the ring.
pub fn split<R: RngCore + ?Sized>(params: &RingParams, x: RingElement, rng: &mut R) -> (Share, Share) {
    let x1 = params.reduce(rng.next_u64());
    let x2 = params.sub(x, x1);
    (Share { owner: PartyId::One, value: x1 }, Share { owner: PartyId::Two, value: x2 })
}

pub fn reconstruct(params: &RingParams, s1: Share, s2: Share) -> Result<RingElement> {
    if s1.owner == s2.owner {
        return Err(Error::PartyMismatch(format!("both shares belong to {}", s1.owner)));
    }
    Ok(params.add(s1.value, s2.value))
}

fn same_owner(a: PartyId, b: PartyId) -> Result<()> {
    if a != b {
        return Err(Error::PartyMismatch(format!("{a} share combined with {b} share")));
    }
    Ok(())
}

pub fn add_local(params: &RingParams, a: Share, b: Share) -> Result<Share> {
    same_owner(a.owner, b.owner)?;
    Ok(Share { owner: a.owner, value: params.add(a.value, b.value) })
}

/// Multiplies a share by a public ring constant. Raw ring product: a
/// fixed-point constant doubles the scale, see [`scale_public_fixed`].
pub fn scale_public(params: &RingParams, a: Share, c: RingElement) -> Share {
    Share { owner: a.owner, value: params.mul(a.value, c) }
}

/// Multiplies by a fixed-point public constant and truncates locally.
pub fn scale_public_fixed(params: &RingParams, a: Share, c: RingElement) -> Share {
    Share { owner: a.owner, value: params.local_truncate(params.mul(a.value, c)) }
}

pub fn add_public(params: &RingParams, a: Share, c: RingElement) -> Share {
    let value = if a.owner.is_first() { params.add(a.value, c) } else { a.value };
    Share { owner: a.owner, value }
}

/// One party's shares of a vector of secrets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedVector {
    owner: PartyId,
    values: Vec<RingElement>,
}

impl SharedVector {
    pub fn new(owner: PartyId, values: Vec<RingElement>) -> Self {
        SharedVector { owner, values }
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn values(&self) -> &[RingElement] {
        &self.values
    }

    pub fn into_values(self) -> Vec<RingElement> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Share {
        Share { owner: self.owner, value: self.values[i] }
    }
}

/// Shares every element of `xs` (client side).
pub fn split_vector<R: RngCore + ?Sized>(
    params: &RingParams,
    xs: &[RingElement],
    rng: &mut R,
) -> (SharedVector, SharedVector) {
    let (a, b): (Vec<_>, Vec<_>) = xs
        .iter()
        .map(|&x| {
            let (s1, s2) = split(params, x, rng);
            (s1.value, s2.value)
        })
        .unzip();
    (SharedVector::new(PartyId::One, a), SharedVector::new(PartyId::Two, b))
}

pub fn reconstruct_vector(params: &RingParams, a: &SharedVector, b: &SharedVector) -> Result<Vec<RingElement>> {
    if a.owner == b.owner {
        return Err(Error::PartyMismatch(format!("both vectors belong to {}", a.owner)));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(a.values.iter().zip(&b.values).map(|(&x, &y)| params.add(x, y)).collect())
}

/// Writes a share file: `VMPC1`, then q, f, length as u64 LE, then the words.
pub fn write_share_file(path: &Path, params: &RingParams, shares: &SharedVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_shares(&mut w, params, shares.values())?;
    w.flush()?;
    Ok(())
}

pub fn write_shares<W: Write>(w: &mut W, params: &RingParams, values: &[RingElement]) -> Result<()> {
    w.write_all(SHARE_FILE_MAGIC)?;
    for word in [params.ring_bits() as u64, params.frac_bits() as u64, values.len() as u64] {
        w.write_all(&word.to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.value().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_share_file(path: &Path, owner: PartyId) -> Result<(RingParams, SharedVector)> {
    let mut r = BufReader::new(File::open(path)?);
    let (params, values) = read_shares(&mut r)?;
    Ok((params, SharedVector::new(owner, values)))
}

pub fn read_shares<R: Read>(r: &mut R) -> Result<(RingParams, Vec<RingElement>)> {
    let bad = |reason: String| Error::Format { what: "share file", reason };
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != SHARE_FILE_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let q = read_u64(r)?;
    let f = read_u64(r)?;
    let len = read_u64(r)?;
    let params = RingParams::new(q as u32, f as u32).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(len.min(1 << 24) as usize);
    for i in 0..len {
        let raw = read_u64(r).map_err(|_| bad(format!("truncated at element {i} of {len}")))?;
        if raw & !params.mask() != 0 {
            return Err(bad(format!("element {i} exceeds the {q}-bit ring")));
        }
        values.push(params.reduce(raw));
    }
    Ok((params, values))
}

pub(crate) fn read_u64<R: Read + ?Sized>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (RingParams, ChaCha20Rng) {
        (RingParams::default(), ChaCha20Rng::seed_from_u64(7))
    }

    #[test]
    fn roundtrips() {
        let (p, mut rng) = setup();
        for x in [5.0, 0.0, -3.25] {
            let e = p.encode(x).unwrap();
            let (a, b) = split(&p, e, &mut rng);
            assert_eq!(reconstruct(&p, a, b).unwrap(), e);
        }
        let r = p.reduce(rng.next_u64());
        let (a, b) = split(&p, r, &mut rng);
        assert_eq!(reconstruct(&p, b, a).unwrap(), r);
    }

    #[test]
    fn zero_splits_to_negatives() {
        let (p, mut rng) = setup();
        let (a, b) = split(&p, RingElement::ZERO, &mut rng);
        assert_eq!(b.value, p.neg(a.value));
    }

    #[test]
    fn reconstruct_rejects_same_party() {
        let (p, mut rng) = setup();
        let (a, _) = split(&p, p.one(), &mut rng);
        assert!(matches!(reconstruct(&p, a, a), Err(Error::PartyMismatch(_))));
    }

    #[test]
    fn local_ops() {
        let (p, mut rng) = setup();
        let (a1, a2) = split(&p, p.encode(2.0).unwrap(), &mut rng);
        let (b1, b2) = split(&p, p.encode(3.0).unwrap(), &mut rng);
        let s1 = add_local(&p, a1, b1).unwrap();
        let s2 = add_local(&p, a2, b2).unwrap();
        assert_eq!(p.decode(reconstruct(&p, s1, s2).unwrap()), 5.0);
        assert!(add_local(&p, a1, b2).is_err());

        let u1 = scale_public(&p, a1, RingElement::ZERO);
        let u2 = scale_public(&p, a2, RingElement::ZERO);
        assert_eq!(reconstruct(&p, u1, u2).unwrap(), RingElement::ZERO);

        let c = p.encode(1.5).unwrap();
        let (c1, c2) = (add_public(&p, a1, c), add_public(&p, a2, c));
        assert_ne!(c1.value, a1.value);
        assert_eq!(c2.value, a2.value);
        assert_eq!(p.decode(reconstruct(&p, c1, c2).unwrap()), 3.5);
    }

    #[test]
    fn scale_by_fixed_one_is_identity() {
        let (p, mut rng) = setup();
        let x = p.encode(-1.75).unwrap();
        let (a, b) = split(&p, x, &mut rng);
        let (a, b) = (scale_public_fixed(&p, a, p.one()), scale_public_fixed(&p, b, p.one()));
        let got = reconstruct(&p, a, b).unwrap();
        assert!((p.to_signed(got) - p.to_signed(x)).abs() <= 1);
    }

    #[test]
    fn share_file_roundtrip_and_rejects_garbage() {
        let (p, mut rng) = setup();
        let xs: Vec<_> = (0..10).map(|i| p.encode(i as f64 - 4.5).unwrap()).collect();
        let (a, _) = split_vector(&p, &xs, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_share_file(&path, &p, &a).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"VMPC1");
        assert_eq!(bytes.len(), 5 + 24 + 80);
        let (p2, back) = read_share_file(&path, PartyId::One).unwrap();
        assert_eq!(p2, p);
        assert_eq!(back, a);

        let mut short = bytes.clone();
        short.truncate(bytes.len() - 3);
        assert!(read_shares(&mut short.as_slice()).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(read_shares(&mut bad.as_slice()).is_err());
    }
}

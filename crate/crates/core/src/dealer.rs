//! Trusted-dealer offline phase.
//!
//! The dealer draws Beaver triples, random bits and truncation masks from
//! one ChaCha20 stream per material kind, so the content of the n-th item of
//! a kind depends only on the seed and n. The same streams back both the
//! material files and the in-process [`SeededMaterial`], which makes file and
//! in-process runs bit-identical.
//!
//! Material file layout (all integers u64 little-endian):
//!
//! ```text
//! "VMPCDLR" version:u8 | party q f n_triples n_bits n_pairs
//! n_triples x [tag=1 a b c]
//! n_bits    x [tag=2 raw encoded]
//! n_pairs   x [tag=3 r r_msb r_low_shifted]
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{RingElement, RingParams};
use crate::sharing::{read_u64, PartyId};

pub const DEALER_MAGIC: &[u8; 7] = b"VMPCDLR";
pub const DEALER_FORMAT_VERSION: u8 = 1;
const HEADER_LEN: u64 = 8 + 6 * 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaterialKind {
    Triple,
    Bit,
    MaskedPair,
}

impl MaterialKind {
    fn tag(self) -> u64 {
        match self {
            MaterialKind::Triple => 1,
            MaterialKind::Bit => 2,
            MaterialKind::MaskedPair => 3,
        }
    }

    /// Record width in bytes, tag included.
    fn record_len(self) -> u64 {
        match self {
            MaterialKind::Triple => 32,
            MaterialKind::Bit => 24,
            MaterialKind::MaskedPair => 32,
        }
    }
}

impl fmt::Display for MaterialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaterialKind::Triple => "triples",
            MaterialKind::Bit => "random bits",
            MaterialKind::MaskedPair => "masked pairs",
        })
    }
}

/// One party's share of a Beaver triple `c = a * b mod 2^q` (raw product).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripleShare {
    pub a: RingElement,
    pub b: RingElement,
    pub c: RingElement,
}

/// One party's share of a uniform bit, both as a raw ring 0/1 and encoded
/// as `encode(0)`/`encode(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitShare {
    pub raw: RingElement,
    pub encoded: RingElement,
}

/// One party's share of a truncation mask: uniform `r`, its top bit, and
/// `floor((r mod 2^(q-1)) / 2^f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedPairShare {
    pub r: RingElement,
    pub msb: RingElement,
    pub shifted: RingElement,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealerBudget {
    pub triples: u64,
    pub bits: u64,
    pub masked_pairs: u64,
}

impl DealerBudget {
    pub fn count(&self, kind: MaterialKind) -> u64 {
        match kind {
            MaterialKind::Triple => self.triples,
            MaterialKind::Bit => self.bits,
            MaterialKind::MaskedPair => self.masked_pairs,
        }
    }

    fn count_mut(&mut self, kind: MaterialKind) -> &mut u64 {
        match kind {
            MaterialKind::Triple => &mut self.triples,
            MaterialKind::Bit => &mut self.bits,
            MaterialKind::MaskedPair => &mut self.masked_pairs,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples == 0 && self.bits == 0 && self.masked_pairs == 0
    }
}

impl std::ops::Add for DealerBudget {
    type Output = DealerBudget;

    fn add(self, o: DealerBudget) -> DealerBudget {
        DealerBudget {
            triples: self.triples + o.triples,
            bits: self.bits + o.bits,
            masked_pairs: self.masked_pairs + o.masked_pairs,
        }
    }
}

impl std::ops::AddAssign for DealerBudget {
    fn add_assign(&mut self, o: DealerBudget) {
        *self = *self + o;
    }
}

/// Deterministic generator of both parties' material.
#[derive(Clone)]
pub struct DealerStream {
    params: RingParams,
    triples: ChaCha20Rng,
    bits: ChaCha20Rng,
    pairs: ChaCha20Rng,
}

impl DealerStream {
    pub fn new(params: RingParams, seed: u64) -> Self {
        let stream = |kind: MaterialKind| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(kind.tag());
            rng
        };
        DealerStream {
            params,
            triples: stream(MaterialKind::Triple),
            bits: stream(MaterialKind::Bit),
            pairs: stream(MaterialKind::MaskedPair),
        }
    }

    pub fn next_triple(&mut self) -> [TripleShare; 2] {
        let p = self.params;
        let rng = &mut self.triples;
        let a = p.reduce(rng.next_u64());
        let b = p.reduce(rng.next_u64());
        let c = p.mul(a, b);
        let a1 = p.reduce(rng.next_u64());
        let b1 = p.reduce(rng.next_u64());
        let c1 = p.reduce(rng.next_u64());
        [TripleShare { a: a1, b: b1, c: c1 }, TripleShare { a: p.sub(a, a1), b: p.sub(b, b1), c: p.sub(c, c1) }]
    }

    pub fn next_bit(&mut self) -> [BitShare; 2] {
        let p = self.params;
        let rng = &mut self.bits;
        let bit = rng.next_u64() & 1;
        let raw = p.reduce(bit);
        let encoded = p.reduce(bit << p.frac_bits());
        let raw1 = p.reduce(rng.next_u64());
        let enc1 = p.reduce(rng.next_u64());
        [BitShare { raw: raw1, encoded: enc1 }, BitShare { raw: p.sub(raw, raw1), encoded: p.sub(encoded, enc1) }]
    }

    pub fn next_masked_pair(&mut self) -> [MaskedPairShare; 2] {
        let p = self.params;
        let rng = &mut self.pairs;
        let q = p.ring_bits();
        let r = p.reduce(rng.next_u64());
        let msb = p.reduce(r.value() >> (q - 1));
        let low = r.value() & ((1u64 << (q - 1)) - 1);
        let shifted = p.reduce(low >> p.frac_bits());
        let r1 = p.reduce(rng.next_u64());
        let m1 = p.reduce(rng.next_u64());
        let s1 = p.reduce(rng.next_u64());
        [
            MaskedPairShare { r: r1, msb: m1, shifted: s1 },
            MaskedPairShare { r: p.sub(r, r1), msb: p.sub(msb, m1), shifted: p.sub(shifted, s1) },
        ]
    }
}

/// Source of one party's correlated randomness, consumed sequentially.
pub trait MaterialSource: Send {
    fn party(&self) -> PartyId;
    fn triples(&mut self, n: usize) -> Result<Vec<TripleShare>>;
    fn bits(&mut self, n: usize) -> Result<Vec<BitShare>>;
    fn masked_pairs(&mut self, n: usize) -> Result<Vec<MaskedPairShare>>;
    /// Items handed out so far.
    fn consumed(&self) -> DealerBudget;
}

/// In-process dealer for loopback sessions and tests. Each party derives the
/// full dealer stream from the shared seed and keeps its own half, so this is
/// only meaningful where both parties are trusted to the same degree as the
/// dealer.
pub struct SeededMaterial {
    party: PartyId,
    stream: DealerStream,
    consumed: DealerBudget,
    limit: Option<DealerBudget>,
}

impl SeededMaterial {
    pub fn new(params: RingParams, seed: u64, party: PartyId) -> Self {
        SeededMaterial {
            party,
            stream: DealerStream::new(params, seed),
            consumed: DealerBudget::default(),
            limit: None,
        }
    }

    pub fn with_limit(mut self, limit: DealerBudget) -> Self {
        self.limit = Some(limit);
        self
    }

    fn reserve(&mut self, kind: MaterialKind, n: usize) -> Result<()> {
        if let Some(limit) = self.limit {
            let available = limit.count(kind) - self.consumed.count(kind);
            if n as u64 > available {
                return Err(Error::DealerExhausted { kind, requested: n as u64, available });
            }
        }
        *self.consumed.count_mut(kind) += n as u64;
        Ok(())
    }

    fn slot(&self) -> usize {
        match self.party {
            PartyId::One => 0,
            PartyId::Two => 1,
        }
    }
}

impl MaterialSource for SeededMaterial {
    fn party(&self) -> PartyId {
        self.party
    }

    fn triples(&mut self, n: usize) -> Result<Vec<TripleShare>> {
        self.reserve(MaterialKind::Triple, n)?;
        let slot = self.slot();
        Ok((0..n).map(|_| self.stream.next_triple()[slot]).collect())
    }

    fn bits(&mut self, n: usize) -> Result<Vec<BitShare>> {
        self.reserve(MaterialKind::Bit, n)?;
        let slot = self.slot();
        Ok((0..n).map(|_| self.stream.next_bit()[slot]).collect())
    }

    fn masked_pairs(&mut self, n: usize) -> Result<Vec<MaskedPairShare>> {
        self.reserve(MaterialKind::MaskedPair, n)?;
        let slot = self.slot();
        Ok((0..n).map(|_| self.stream.next_masked_pair()[slot]).collect())
    }

    fn consumed(&self) -> DealerBudget {
        self.consumed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaterialHeader {
    pub party: PartyId,
    pub params: RingParams,
    pub budget: DealerBudget,
}

impl MaterialHeader {
    fn section_offset(&self, kind: MaterialKind) -> u64 {
        let b = &self.budget;
        match kind {
            MaterialKind::Triple => HEADER_LEN,
            MaterialKind::Bit => HEADER_LEN + b.triples * MaterialKind::Triple.record_len(),
            MaterialKind::MaskedPair => {
                HEADER_LEN + b.triples * MaterialKind::Triple.record_len() + b.bits * MaterialKind::Bit.record_len()
            }
        }
    }

    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DEALER_MAGIC)?;
        w.write_all(&[DEALER_FORMAT_VERSION])?;
        for word in [
            self.party.index(),
            self.params.ring_bits() as u64,
            self.params.frac_bits() as u64,
            self.budget.triples,
            self.budget.bits,
            self.budget.masked_pairs,
        ] {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::Format { what: "dealer file", reason };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic[..7] != DEALER_MAGIC {
            return Err(bad("bad magic".into()));
        }
        if magic[7] != DEALER_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", magic[7])));
        }
        let party = PartyId::from_index(read_u64(r)?).map_err(|e| bad(e.to_string()))?;
        let q = read_u64(r)?;
        let f = read_u64(r)?;
        let params = RingParams::new(q as u32, f as u32).map_err(|e| bad(e.to_string()))?;
        let budget = DealerBudget { triples: read_u64(r)?, bits: read_u64(r)?, masked_pairs: read_u64(r)? };
        Ok(MaterialHeader { party, params, budget })
    }
}

/// Writes both parties' material files for `budget`.
pub fn generate(params: RingParams, budget: DealerBudget, seed: u64, out_p1: &Path, out_p2: &Path) -> Result<()> {
    let mut stream = DealerStream::new(params, seed);
    let mut writers = [BufWriter::new(File::create(out_p1)?), BufWriter::new(File::create(out_p2)?)];
    for (w, party) in writers.iter_mut().zip([PartyId::One, PartyId::Two]) {
        MaterialHeader { party, params, budget }.write(w)?;
    }
    let put = |w: &mut BufWriter<File>, words: &[u64]| -> Result<()> {
        for word in words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    };
    for _ in 0..budget.triples {
        let shares = stream.next_triple();
        for (w, t) in writers.iter_mut().zip(shares) {
            put(w, &[1, t.a.value(), t.b.value(), t.c.value()])?;
        }
    }
    for _ in 0..budget.bits {
        let shares = stream.next_bit();
        for (w, b) in writers.iter_mut().zip(shares) {
            put(w, &[2, b.raw.value(), b.encoded.value()])?;
        }
    }
    for _ in 0..budget.masked_pairs {
        let shares = stream.next_masked_pair();
        for (w, m) in writers.iter_mut().zip(shares) {
            put(w, &[3, m.r.value(), m.msb.value(), m.shifted.value()])?;
        }
    }
    for w in &mut writers {
        w.flush()?;
    }
    Ok(())
}

/// Conventional file names inside a dealer output directory.
pub fn material_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("dealer_p1.bin"), dir.join("dealer_p2.bin"))
}

struct Section {
    reader: Option<BufReader<File>>,
    remaining: u64,
}

/// Streams one party's material file; each kind has its own cursor.
pub struct FileMaterial {
    header: MaterialHeader,
    path: PathBuf,
    sections: [Section; 3],
    consumed: DealerBudget,
}

impl FileMaterial {
    pub fn open(path: &Path) -> Result<Self> {
        let mut f = File::open(path)?;
        let header = MaterialHeader::read(&mut f)?;
        let expected = header.section_offset(MaterialKind::MaskedPair)
            + header.budget.masked_pairs * MaterialKind::MaskedPair.record_len();
        let actual = f.metadata()?.len();
        if actual != expected {
            return Err(Error::Format {
                what: "dealer file",
                reason: format!("expected {expected} bytes, found {actual}"),
            });
        }
        let section = |kind| Section { reader: None, remaining: header.budget.count(kind) };
        let m = FileMaterial {
            header,
            path: path.to_path_buf(),
            sections: [section(MaterialKind::Triple), section(MaterialKind::Bit), section(MaterialKind::MaskedPair)],
            consumed: DealerBudget::default(),
        };
        Ok(m)
    }

    pub fn header(&self) -> &MaterialHeader {
        &self.header
    }

    fn index(kind: MaterialKind) -> usize {
        kind.tag() as usize - 1
    }

    fn records(&mut self, kind: MaterialKind, n: usize) -> Result<Vec<[u64; 3]>> {
        let width = (kind.record_len() / 8 - 1) as usize;
        let offset = self.header.section_offset(kind);
        let path = &self.path;
        let section = &mut self.sections[Self::index(kind)];
        if n as u64 > section.remaining {
            return Err(Error::DealerExhausted { kind, requested: n as u64, available: section.remaining });
        }
        if section.reader.is_none() && n > 0 {
            let mut f = File::open(path)?;
            f.seek(SeekFrom::Start(offset))?;
            section.reader = Some(BufReader::with_capacity(1 << 16, f));
        }
        let mut out = Vec::with_capacity(n);
        if let Some(r) = section.reader.as_mut() {
            for _ in 0..n {
                let tag = read_u64(r)?;
                if tag != kind.tag() {
                    return Err(Error::Format {
                        what: "dealer file",
                        reason: format!("expected tag {} in {kind} section, found {tag}", kind.tag()),
                    });
                }
                let mut rec = [0u64; 3];
                for word in rec.iter_mut().take(width) {
                    *word = read_u64(r)?;
                }
                out.push(rec);
            }
        }
        section.remaining -= n as u64;
        *self.consumed.count_mut(kind) += n as u64;
        Ok(out)
    }
}

impl MaterialSource for FileMaterial {
    fn party(&self) -> PartyId {
        self.header.party
    }

    fn triples(&mut self, n: usize) -> Result<Vec<TripleShare>> {
        let p = self.header.params;
        Ok(self
            .records(MaterialKind::Triple, n)?
            .into_iter()
            .map(|[a, b, c]| TripleShare { a: p.reduce(a), b: p.reduce(b), c: p.reduce(c) })
            .collect())
    }

    fn bits(&mut self, n: usize) -> Result<Vec<BitShare>> {
        let p = self.header.params;
        Ok(self
            .records(MaterialKind::Bit, n)?
            .into_iter()
            .map(|[raw, enc, _]| BitShare { raw: p.reduce(raw), encoded: p.reduce(enc) })
            .collect())
    }

    fn masked_pairs(&mut self, n: usize) -> Result<Vec<MaskedPairShare>> {
        let p = self.header.params;
        Ok(self
            .records(MaterialKind::MaskedPair, n)?
            .into_iter()
            .map(|[r, msb, shifted]| MaskedPairShare { r: p.reduce(r), msb: p.reduce(msb), shifted: p.reduce(shifted) })
            .collect())
    }

    fn consumed(&self) -> DealerBudget {
        self.consumed
    }
}

pub use crate::truth::cost::estimate_budget;

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> DealerBudget {
        DealerBudget { triples: 200, bits: 300, masked_pairs: 100 }
    }

    #[test]
    fn triples_satisfy_product_relation() {
        let p = RingParams::default();
        let mut s = DealerStream::new(p, 3);
        for _ in 0..2000 {
            let [t1, t2] = s.next_triple();
            let a = p.add(t1.a, t2.a);
            let b = p.add(t1.b, t2.b);
            assert_eq!(p.add(t1.c, t2.c), p.mul(a, b));
        }
    }

    #[test]
    fn bits_are_bits_in_both_encodings() {
        let p = RingParams::default();
        let mut s = DealerStream::new(p, 3);
        for _ in 0..2000 {
            let [b1, b2] = s.next_bit();
            let raw = p.add(b1.raw, b2.raw).value();
            let enc = p.add(b1.encoded, b2.encoded).value();
            assert!(raw <= 1);
            assert_eq!(enc, raw << p.frac_bits());
        }
    }

    #[test]
    fn bit_bias_is_half() {
        let p = RingParams::default();
        let mut s = DealerStream::new(p, 11);
        let n = 100_000;
        let ones: u64 = (0..n)
            .map(|_| {
                let [b1, b2] = s.next_bit();
                p.add(b1.raw, b2.raw).value()
            })
            .sum();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.01, "bias {freq}");
    }

    #[test]
    fn masked_pairs_are_consistent() {
        for q in [60, 64] {
            let p = RingParams::new(q, 20).unwrap();
            let mut s = DealerStream::new(p, 5);
            for _ in 0..1000 {
                let [m1, m2] = s.next_masked_pair();
                let r = p.add(m1.r, m2.r).value();
                let msb = p.add(m1.msb, m2.msb).value();
                let sh = p.add(m1.shifted, m2.shifted).value();
                assert_eq!(msb, r >> (q - 1));
                assert_eq!(sh, (r & ((1u64 << (q - 1)) - 1)) >> 20);
            }
        }
    }

    #[test]
    fn files_match_seeded_stream_and_are_deterministic() {
        let p = RingParams::default();
        let dir = tempfile::tempdir().unwrap();
        let (a1, a2) = (dir.path().join("a1"), dir.path().join("a2"));
        let (b1, b2) = (dir.path().join("b1"), dir.path().join("b2"));
        generate(p, budget(), 42, &a1, &a2).unwrap();
        generate(p, budget(), 42, &b1, &b2).unwrap();
        assert_eq!(std::fs::read(&a1).unwrap(), std::fs::read(&b1).unwrap());
        assert_eq!(std::fs::read(&a2).unwrap(), std::fs::read(&b2).unwrap());

        for (path, party) in [(&a1, PartyId::One), (&a2, PartyId::Two)] {
            let mut file = FileMaterial::open(path).unwrap();
            assert_eq!(file.header().party, party);
            assert_eq!(file.header().budget, budget());
            let mut seeded = SeededMaterial::new(p, 42, party);
            // interleaved consumption must not matter
            assert_eq!(file.bits(7).unwrap(), seeded.bits(7).unwrap());
            assert_eq!(file.triples(150).unwrap(), seeded.triples(150).unwrap());
            assert_eq!(file.masked_pairs(100).unwrap(), seeded.masked_pairs(100).unwrap());
            assert_eq!(file.bits(293).unwrap(), seeded.bits(293).unwrap());
            assert_eq!(file.triples(50).unwrap(), seeded.triples(50).unwrap());
            assert_eq!(file.consumed(), budget());
            assert!(matches!(file.triples(1), Err(Error::DealerExhausted { kind: MaterialKind::Triple, .. })));
        }
    }

    #[test]
    fn seeded_limit_aborts_on_exhaustion() {
        let p = RingParams::default();
        let mut m =
            SeededMaterial::new(p, 1, PartyId::One).with_limit(DealerBudget { triples: 3, ..Default::default() });
        assert_eq!(m.triples(2).unwrap().len(), 2);
        assert!(m.triples(2).is_err());
        assert!(m.bits(1).is_err());
    }

    #[test]
    fn rejects_corrupt_file() {
        let p = RingParams::default();
        let dir = tempfile::tempdir().unwrap();
        let (f1, f2) = (dir.path().join("1"), dir.path().join("2"));
        generate(p, budget(), 1, &f1, &f2).unwrap();
        let mut bytes = std::fs::read(&f1).unwrap();
        bytes.pop();
        std::fs::write(&f1, &bytes).unwrap();
        assert!(FileMaterial::open(&f1).is_err());
    }
}

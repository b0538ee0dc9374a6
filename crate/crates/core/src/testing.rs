//! Helpers for running both parties in one process. Used by tests and
//! benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dealer::SeededMaterial;
use crate::error::Result;
use crate::protocols::{MpcContext, ProtocolConfig};
use crate::ring::{RingElement, RingParams};
use crate::sharing::{reconstruct_vector, split_vector, PartyId, SharedVector};
use crate::transport::loopback_channels;

/// Builds a loopback context pair backed by the seeded dealer.
pub fn context_pair(cfg: ProtocolConfig, dealer_seed: u64) -> Result<(MpcContext, MpcContext)> {
    let (c1, c2) = loopback_channels(cfg.ring);
    let m1 = SeededMaterial::new(cfg.ring, dealer_seed, PartyId::One);
    let m2 = SeededMaterial::new(cfg.ring, dealer_seed, PartyId::Two);
    Ok((MpcContext::new(cfg, c1, Box::new(m1))?, MpcContext::new(cfg, c2, Box::new(m2))?))
}

/// Runs `f` as both parties on two threads and returns both outputs.
/// Panics if either side fails.
pub fn run_pair<T, F>(cfg: ProtocolConfig, dealer_seed: u64, f: F) -> (T, T)
where
    T: Send,
    F: Fn(&mut MpcContext) -> Result<T> + Sync,
{
    let (mut a, mut b) = context_pair(cfg, dealer_seed).expect("context setup");
    std::thread::scope(|s| {
        let h = s.spawn(|| f(&mut b));
        let r1 = f(&mut a).expect("party 1 failed");
        let r2 = h.join().expect("party 2 panicked").expect("party 2 failed");
        (r1, r2)
    })
}

fn own_half(ctx: &MpcContext, values: &[RingElement], seed: u64) -> SharedVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (s1, s2) = split_vector(&ctx.params(), values, &mut rng);
    if ctx.party().is_first() {
        s1
    } else {
        s2
    }
}

/// Both parties derive the same split of `xs` from `seed` and keep their half.
pub fn share_reals(ctx: &MpcContext, xs: &[f64], seed: u64) -> Result<SharedVector> {
    let p = ctx.params();
    let enc = xs.iter().map(|&x| p.encode(x)).collect::<Result<Vec<_>>>()?;
    Ok(own_half(ctx, &enc, seed))
}

/// Like [`share_reals`] but for raw integers (no fixed-point scaling).
pub fn share_ints(ctx: &MpcContext, xs: &[i64], seed: u64) -> Result<SharedVector> {
    let p = ctx.params();
    let raw: Vec<_> = xs.iter().map(|&x| p.from_signed(x)).collect();
    Ok(own_half(ctx, &raw, seed))
}

pub fn reveal(params: &RingParams, a: &SharedVector, b: &SharedVector) -> Vec<f64> {
    reconstruct_vector(params, a, b).expect("mismatched shares").into_iter().map(|x| params.decode(x)).collect()
}

pub fn reveal_ints(params: &RingParams, a: &SharedVector, b: &SharedVector) -> Vec<i64> {
    reconstruct_vector(params, a, b).expect("mismatched shares").into_iter().map(|x| params.to_signed(x)).collect()
}

//! Secure twins of the truth-finding algorithms.
//!
//! Answers are shared as raw ring integers in {-1, 0, 1}. Every product of an
//! answer-derived matrix (raw) with a fixed-point vector is therefore exact at
//! scale 2^f, so the `n x k` work needs no truncation; only vector-sized
//! products are rescaled.
//!
//! The 3-Estimates updates are regrouped so that divisions act on vectors:
//!
//! * `y_j = (S_j - delta_j * sum_i v_ij theta_i) / nb_j`, `S_j = sum_i sigma_ij`
//! * `delta_j = ((W_j + U_j) / 2 - y_j U_j) / nb_j` with `W_j = sum_i v_ij^2 / theta_i`
//!   and `U_j = sum_i v_ij / theta_i`
//! * `theta_i = sum_j (sigma_ij / delta_j - v_ij y_j / delta_j) / nf_i`
//!
//! which is the same arithmetic as the cleartext loop since
//! `sigma - tau = v` and `sigma + tau = v^2`.

use rand::RngCore;

use super::{AlgoConfig, Algorithm, AnswerMatrix, CosinePower, Inversion, Normalization, TruthState};
use crate::error::{Error, Result};
use crate::protocols::MpcContext;
use crate::ring::{RingElement, RingParams};
use crate::sharing::{reconstruct_vector, split_vector, PartyId, SharedVector};

/// One party's shares of an answer matrix, row-major by source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedAnswerMatrix {
    pub n: usize,
    pub k: usize,
    pub shares: SharedVector,
}

impl SharedAnswerMatrix {
    pub fn new(n: usize, k: usize, shares: SharedVector) -> Result<Self> {
        if shares.len() != n * k {
            return Err(Error::LengthMismatch { expected: n * k, actual: shares.len() });
        }
        Ok(SharedAnswerMatrix { n, k, shares })
    }
}

/// Client side: splits the answers into two raw-integer share matrices.
pub fn share_answers<R: RngCore + ?Sized>(
    params: &RingParams,
    a: &AnswerMatrix,
    rng: &mut R,
) -> (SharedAnswerMatrix, SharedAnswerMatrix) {
    let raw: Vec<RingElement> = a.values().iter().map(|&v| params.from_signed(v as i64)).collect();
    let (s1, s2) = split_vector(params, &raw, rng);
    let (n, k) = (a.sources(), a.facts());
    (SharedAnswerMatrix { n, k, shares: s1 }, SharedAnswerMatrix { n, k, shares: s2 })
}

/// Indicator shares derived from a single squaring of the answers.
#[derive(Clone, Debug)]
pub struct IndicatorMatrices {
    /// `v^2` as raw integers (`sigma + tau`).
    pub squared: SharedVector,
    /// `[v == 1]`, fixed-point encoded.
    pub sigma: SharedVector,
    /// `[v == -1]`, fixed-point encoded.
    pub tau: SharedVector,
}

impl IndicatorMatrices {
    pub fn compute(ctx: &mut MpcContext, a: &SharedAnswerMatrix) -> Result<Self> {
        let squared = ctx.square_raw(&a.shares)?;
        let sigma = ctx.eq_poly(&a.shares, 1, Some(&squared))?;
        let tau = ctx.eq_poly(&a.shares, -1, Some(&squared))?;
        Ok(IndicatorMatrices { squared, sigma, tau })
    }
}

/// One party's shares of the output state.
#[derive(Clone, Debug)]
pub struct SharedTruthState {
    pub y: SharedVector,
    pub theta: SharedVector,
    pub delta: SharedVector,
}

impl SharedTruthState {
    pub fn flatten(&self) -> Vec<RingElement> {
        [self.y.values(), self.theta.values(), self.delta.values()].concat()
    }
}

// ---- matrix helpers (row-major n x k) ---------------------------------------

/// Entry (i, j) = v[j].
fn tile_facts(ctx: &MpcContext, v: &SharedVector, n: usize) -> SharedVector {
    let mut out = Vec::with_capacity(n * v.len());
    for _ in 0..n {
        out.extend_from_slice(v.values());
    }
    ctx.shared(out)
}

/// Entry (i, j) = v[i].
fn tile_sources(ctx: &MpcContext, v: &SharedVector, k: usize) -> SharedVector {
    let out = v.values().iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
    ctx.shared(out)
}

fn column_sums(ctx: &MpcContext, m: &[RingElement], n: usize, k: usize) -> SharedVector {
    let p = ctx.params();
    let mut out = vec![RingElement::ZERO; k];
    for row in m.chunks_exact(k).take(n) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o = p.add(*o, x);
        }
    }
    ctx.shared(out)
}

fn row_sums(ctx: &MpcContext, m: &[RingElement], k: usize) -> SharedVector {
    let p = ctx.params();
    ctx.shared(m.chunks_exact(k).map(|row| row.iter().fold(RingElement::ZERO, |acc, &x| p.add(acc, x))).collect())
}

fn concat(ctx: &MpcContext, parts: &[&SharedVector]) -> SharedVector {
    ctx.shared(parts.iter().flat_map(|v| v.values().iter().copied()).collect())
}

fn split2(ctx: &MpcContext, v: &SharedVector, at: usize) -> (SharedVector, SharedVector) {
    let (a, b) = v.values().split_at(at);
    (ctx.shared(a.to_vec()), ctx.shared(b.to_vec()))
}

/// Raw-integer count matrix times fixed-point values, exact.
fn int_to_fixed(ctx: &MpcContext, v: &SharedVector) -> SharedVector {
    ctx.mul_int(v, 1 << ctx.params().frac_bits())
}

fn normalize(ctx: &mut MpcContext, x: &SharedVector, cfg: &AlgoConfig) -> Result<SharedVector> {
    match cfg.normalization {
        Normalization::MinMax => ctx.minmax_normalize(x, cfg.eps),
        Normalization::LinearH => {
            let half = ctx.shift_local(x, 1);
            ctx.add_const(&half, 0.25)
        }
    }
}

/// Extra fractional bits carried by count inverses.
fn count_bits(max_count: usize) -> u32 {
    usize::BITS - max_count.leading_zeros()
}

fn check_shape(ctx: &MpcContext, a: &SharedAnswerMatrix) -> Result<()> {
    if a.shares.owner() != ctx.party() {
        return Err(Error::PartyMismatch(format!("{} context given {} answer shares", ctx.party(), a.shares.owner())));
    }
    if a.n == 0 || a.k == 0 || a.shares.len() != a.n * a.k {
        return Err(Error::LengthMismatch { expected: a.n * a.k, actual: a.shares.len() });
    }
    Ok(())
}

pub fn three_estimates_mpc(ctx: &mut MpcContext, a: &SharedAnswerMatrix, cfg: &AlgoConfig) -> Result<SharedTruthState> {
    cfg.validate()?;
    check_shape(ctx, a)?;
    let (n, k) = (a.n, a.k);
    let v = &a.shares;
    let ind = IndicatorMatrices::compute(ctx, a)?;

    let sigma_sum = column_sums(ctx, ind.sigma.values(), n, k);
    let nb_int = column_sums(ctx, ind.squared.values(), n, k);
    let nf_int = row_sums(ctx, ind.squared.values(), k);
    let counts = concat(ctx, &[&int_to_fixed(ctx, &nb_int), &int_to_fixed(ctx, &nf_int)]);
    let s = count_bits(n.max(k));
    let inv_counts = ctx.inv_wide(&counts, s)?;
    let (inv_nb, inv_nf) = split2(ctx, &inv_counts, k);

    let mut theta = ctx.constant(cfg.theta0, n)?;
    let mut delta = ctx.constant(cfg.delta0, k)?;
    let mut y = ctx.constant(0.0, k)?;

    for it in 0..cfg.iterations {
        log::debug!("3-estimates iteration {}", it + 1);
        // truth
        let prod = ctx.mul_raw(v, &tile_sources(ctx, &theta, k))?;
        let vt = column_sums(ctx, prod.values(), n, k);
        let dvt = ctx.mul(&delta, &vt)?;
        let num = ctx.sub(&sigma_sum, &dvt)?;
        let y_pre = ctx.mul(&inv_nb, &num)?;
        let y_pre = ctx.shift_local(&y_pre, s);
        y = normalize(ctx, &y_pre, cfg)?;

        // difficulty
        let inv_theta = ctx.inv(&theta)?;
        let tiled = tile_sources(ctx, &inv_theta, k);
        let prod = ctx.mul_raw(&concat(ctx, &[&ind.squared, v]), &concat(ctx, &[&tiled, &tiled]))?;
        let (sq_part, v_part) = split2(ctx, &prod, n * k);
        let w = column_sums(ctx, sq_part.values(), n, k);
        let u = column_sums(ctx, v_part.values(), n, k);
        let yu = ctx.mul(&y, &u)?;
        let half = ctx.shift_local(&ctx.add(&w, &u)?, 1);
        let num = ctx.sub(&half, &yu)?;
        let delta_pre = ctx.mul(&inv_nb, &num)?;
        let delta_pre = ctx.shift_local(&delta_pre, s);
        delta = normalize(ctx, &delta_pre, cfg)?;

        // untrustworthiness
        let inv_delta = ctx.inv(&delta)?;
        let y_inv_delta = ctx.mul(&y, &inv_delta)?;
        let sigma2 = ctx.add(&ind.squared, v)?;
        let prod = ctx.mul_raw(
            &concat(ctx, &[&sigma2, v]),
            &concat(ctx, &[&tile_facts(ctx, &inv_delta, n), &tile_facts(ctx, &y_inv_delta, n)]),
        )?;
        let (s_part, v_part) = split2(ctx, &prod, n * k);
        let s_rows = ctx.shift_local(&row_sums(ctx, s_part.values(), k), 1);
        let v_rows = row_sums(ctx, v_part.values(), k);
        let num = ctx.sub(&s_rows, &v_rows)?;
        let theta_pre = ctx.mul(&inv_nf, &num)?;
        let theta_pre = ctx.shift_local(&theta_pre, s);
        theta = normalize(ctx, &theta_pre, cfg)?;
    }
    Ok(SharedTruthState { y, theta, delta })
}

/// `1 / x` for possibly negative secrets, following the configured inversion.
fn divide_by(ctx: &mut MpcContext, x: &SharedVector, inversion: Inversion) -> Result<SharedVector> {
    match inversion {
        Inversion::Signed => {
            let s = ctx.sign_raw(x)?;
            let abs = ctx.mul_raw(&s, x)?;
            let r = ctx.inv(&abs)?;
            ctx.mul_raw(&s, &r)
        }
        Inversion::SquareTrick => {
            let sq = ctx.square(x)?;
            let r = ctx.inv(&sq)?;
            ctx.mul(x, &r)
        }
    }
}

struct CosinePre {
    squared: SharedVector,
    inv_sqrt_cnt: SharedVector,
}

/// Cosine similarity of every source's answers with `y`.
fn cosine_similarity(
    ctx: &mut MpcContext,
    a: &SharedAnswerMatrix,
    pre: &CosinePre,
    y: &SharedVector,
) -> Result<SharedVector> {
    let (n, k) = (a.n, a.k);
    let y2 = ctx.square(y)?;
    let prod = ctx.mul_raw(
        &concat(ctx, &[&a.shares, &pre.squared]),
        &concat(ctx, &[&tile_facts(ctx, y, n), &tile_facts(ctx, &y2, n)]),
    )?;
    let (dot_part, sq_part) = split2(ctx, &prod, n * k);
    let dot = row_sums(ctx, dot_part.values(), k);
    let sq = row_sums(ctx, sq_part.values(), k);
    let r = ctx.sqrt_inv(&sq)?;
    let scale = ctx.mul(&r, &pre.inv_sqrt_cnt)?;
    ctx.mul(&dot, &scale)
}

pub fn cosine_mpc(ctx: &mut MpcContext, a: &SharedAnswerMatrix, cfg: &AlgoConfig) -> Result<SharedTruthState> {
    cfg.validate()?;
    check_shape(ctx, a)?;
    let (n, k) = (a.n, a.k);
    let v = &a.shares;
    let squared = ctx.square_raw(v)?;

    let cnt_v = int_to_fixed(ctx, &column_sums(ctx, squared.values(), n, k));
    let cnt_f = int_to_fixed(ctx, &row_sums(ctx, squared.values(), k));
    let s = count_bits(n);
    let inv_cnt_v = ctx.inv_wide(&cnt_v, s)?;
    let inv_sqrt_cnt = ctx.sqrt_inv(&cnt_f)?;
    let pre = CosinePre { squared, inv_sqrt_cnt };

    let col = int_to_fixed(ctx, &column_sums(ctx, v.values(), n, k));
    let mean = ctx.mul(&col, &inv_cnt_v)?;
    let mut y = ctx.shift_local(&mean, s);
    let mut theta = cosine_similarity(ctx, a, &pre, &y)?;

    for it in 0..cfg.iterations {
        log::debug!("cosine iteration {}", it + 1);
        let w_num = match cfg.power {
            CosinePower::Cubic => {
                let t2 = ctx.square(&theta)?;
                ctx.mul(&t2, &theta)?
            }
            CosinePower::Linear => theta.clone(),
        };
        let w_den = match cfg.inversion {
            Inversion::Signed => {
                let s = ctx.sign_raw(&theta)?;
                ctx.mul_raw(&s, &w_num)?
            }
            Inversion::SquareTrick => w_num.clone(),
        };
        let prod = ctx.mul_raw(
            &concat(ctx, &[v, &pre.squared]),
            &concat(ctx, &[&tile_sources(ctx, &w_num, k), &tile_sources(ctx, &w_den, k)]),
        )?;
        let (num_part, den_part) = split2(ctx, &prod, n * k);
        let num = column_sums(ctx, num_part.values(), n, k);
        let den = column_sums(ctx, den_part.values(), n, k);
        let inv_den = divide_by(ctx, &den, cfg.inversion)?;
        y = ctx.mul(&num, &inv_den)?;

        let cos = cosine_similarity(ctx, a, &pre, &y)?;
        let kept = ctx.scale(&theta, 1.0 - cfg.eta)?;
        let moved = ctx.scale(&cos, cfg.eta)?;
        theta = ctx.add(&kept, &moved)?;
    }
    let delta = ctx.shared(Vec::new());
    Ok(SharedTruthState { y, theta, delta })
}

pub fn run_mpc(ctx: &mut MpcContext, a: &SharedAnswerMatrix, cfg: &AlgoConfig) -> Result<SharedTruthState> {
    match cfg.algorithm {
        Algorithm::ThreeEstimates => three_estimates_mpc(ctx, a, cfg),
        Algorithm::Cosine => cosine_mpc(ctx, a, cfg),
    }
}

/// Number of output words for an `n x k` instance: y, theta, then delta.
pub fn output_len(algorithm: Algorithm, n: usize, k: usize) -> usize {
    match algorithm {
        Algorithm::ThreeEstimates => 2 * k + n,
        Algorithm::Cosine => k + n,
    }
}

/// Client side: combines both servers' released shares.
pub fn reconstruct_state(
    params: &RingParams,
    algorithm: Algorithm,
    n: usize,
    k: usize,
    first: &[RingElement],
    second: &[RingElement],
    iterations: u32,
) -> Result<TruthState> {
    let expected = output_len(algorithm, n, k);
    for got in [first.len(), second.len()] {
        if got != expected {
            return Err(Error::Protocol(format!("released share vector has {got} words, expected {expected}")));
        }
    }
    let a = SharedVector::new(PartyId::One, first.to_vec());
    let b = SharedVector::new(PartyId::Two, second.to_vec());
    let vals: Vec<f64> = reconstruct_vector(params, &a, &b)?.into_iter().map(|x| params.decode(x)).collect();
    Ok(TruthState {
        y: vals[..k].to_vec(),
        theta: vals[k..k + n].to_vec(),
        delta: vals[k + n..].to_vec(),
        iteration: iterations,
    })
}

/// Server side: sends this party's output shares to the peer acting as the
/// client endpoint, or receives the peer's shares when acting as client.
pub fn release(ctx: &mut MpcContext, out: &SharedTruthState) -> Result<()> {
    ctx.channel_mut().send_result(&out.flatten())
}

pub fn collect(ctx: &mut MpcContext) -> Result<Vec<RingElement>> {
    ctx.channel_mut().recv_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::ProtocolConfig;
    use crate::testing::{reveal, run_pair};
    use crate::truth::{plain, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn shared(cfg: &ProtocolConfig, a: &AnswerMatrix) -> (SharedAnswerMatrix, SharedAnswerMatrix) {
        share_answers(&cfg.ring, a, &mut ChaCha20Rng::seed_from_u64(1))
    }

    #[test]
    fn indicators_reconstruct() {
        let cfg = ProtocolConfig::default();
        let a = AnswerMatrix::new(2, 3, vec![1, 0, -1, -1, 1, 0]).unwrap();
        let (s1, s2) = shared(&cfg, &a);
        let (r1, r2) = run_pair(cfg, 2, |ctx| {
            let s = if ctx.party().is_first() { &s1 } else { &s2 };
            let ind = IndicatorMatrices::compute(ctx, s)?;
            Ok(ctx.shared([ind.sigma.values(), ind.tau.values()].concat()))
        });
        let got = reveal(&cfg.ring, &r1, &r2);
        assert_eq!(got, vec![1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0.]);
    }

    #[test]
    fn two_sources_one_fact() {
        let cfg = ProtocolConfig::default();
        let a = AnswerMatrix::new(2, 1, vec![1, 1]).unwrap();
        let algo = AlgoConfig::new(Algorithm::ThreeEstimates, Variant::H, 1).unwrap();
        let (s1, s2) = shared(&cfg, &a);
        let (r1, r2) = run_pair(cfg, 3, |ctx| {
            let s = if ctx.party().is_first() { &s1 } else { &s2 };
            three_estimates_mpc(ctx, s, &algo).map(|o| o.flatten())
        });
        let st = reconstruct_state(&cfg.ring, Algorithm::ThreeEstimates, 2, 1, &r1, &r2, 1).unwrap();
        let pre = (st.y[0] - 0.25) / 0.5;
        assert!((pre - 0.96).abs() < 1e-3, "{pre}");
        let want = plain::run_state(&a, &algo).unwrap();
        for (g, w) in st.flatten().iter().zip(want.flatten()) {
            assert!((g - w).abs() < 1e-3);
        }
    }

    #[test]
    fn reconstruct_rejects_bad_length() {
        let p = RingParams::default();
        let words = vec![RingElement::ZERO; 5];
        assert!(reconstruct_state(&p, Algorithm::Cosine, 2, 3, &words, &words[..4], 1).is_err());
        assert!(reconstruct_state(&p, Algorithm::Cosine, 2, 3, &words, &words, 1).is_ok());
    }
}

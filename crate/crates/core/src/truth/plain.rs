//! Cleartext reference implementations in `f64`.

use super::{AlgoConfig, Algorithm, AnswerMatrix, CosinePower, Inversion, Normalization, TruthReport, TruthState};
use crate::error::Result;

/// Sign of each column sum; ties go to +1.
pub fn majority_vote(a: &AnswerMatrix) -> Vec<i8> {
    (0..a.facts())
        .map(|j| {
            let s: i64 = (0..a.sources()).map(|i| a.get(i, j) as i64).sum();
            if s >= 0 {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// Min-max squeeze onto `[eps, 1 - eps]`. A constant vector maps to 0.5.
pub fn normalize_minmax(x: &mut [f64], eps: f64) {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    for v in x.iter_mut() {
        *v = if range > 0.0 { (eps + (1.0 - 2.0 * eps) * (*v - lo) / range).clamp(eps, 1.0 - eps) } else { 0.5 };
    }
}

pub fn normalize_h(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = 0.5 * *v + 0.25;
    }
}

fn normalize(x: &mut [f64], cfg: &AlgoConfig) {
    match cfg.normalization {
        Normalization::MinMax => normalize_minmax(x, cfg.eps),
        Normalization::LinearH => normalize_h(x),
    }
}

pub fn three_estimates_init(a: &AnswerMatrix, cfg: &AlgoConfig) -> TruthState {
    TruthState {
        y: vec![0.0; a.facts()],
        theta: vec![cfg.theta0; a.sources()],
        delta: vec![cfg.delta0; a.facts()],
        iteration: 0,
    }
}

/// One iteration: truth, then difficulty, then untrustworthiness, each
/// followed by normalisation.
pub fn three_estimates_step(a: &AnswerMatrix, s: &mut TruthState, cfg: &AlgoConfig) {
    let (n, k) = (a.sources(), a.facts());
    let sigma = |i, j| (a.get(i, j) == 1) as u8 as f64;
    let tau = |i, j| (a.get(i, j) == -1) as u8 as f64;

    for j in 0..k {
        let (mut pos, mut neg, mut nb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let td = s.theta[i] * s.delta[j];
            pos += sigma(i, j) * (1.0 - td);
            neg += tau(i, j) * td;
            nb += sigma(i, j) + tau(i, j);
        }
        s.y[j] = (pos + neg) / nb;
    }
    normalize(&mut s.y, cfg);

    for j in 0..k {
        let (mut pos, mut neg, mut nb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            pos += sigma(i, j) * (1.0 - s.y[j]) / s.theta[i];
            neg += tau(i, j) * s.y[j] / s.theta[i];
            nb += sigma(i, j) + tau(i, j);
        }
        s.delta[j] = (pos + neg) / nb;
    }
    normalize(&mut s.delta, cfg);

    for i in 0..n {
        let (mut pos, mut neg, mut nb) = (0.0, 0.0, 0.0);
        for j in 0..k {
            pos += sigma(i, j) * (1.0 - s.y[j]) / s.delta[j];
            neg += tau(i, j) * s.y[j] / s.delta[j];
            nb += sigma(i, j) + tau(i, j);
        }
        s.theta[i] = (pos + neg) / nb;
    }
    normalize(&mut s.theta, cfg);
    s.iteration += 1;
}

/// Cosine similarity between each source's answers and `y`, restricted to
/// the facts the source answered.
fn cosine_similarity(a: &AnswerMatrix, y: &[f64]) -> Vec<f64> {
    (0..a.sources())
        .map(|i| {
            let (mut dot, mut cnt, mut sq) = (0.0, 0.0, 0.0);
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0 {
                    dot += v as f64 * y[j];
                    cnt += 1.0;
                    sq += y[j] * y[j];
                }
            }
            dot / (cnt * sq).sqrt()
        })
        .collect()
}

/// Voting start: `y` is the mean answer of the answering sources, trust is
/// the unsmoothed cosine against it.
pub fn cosine_init(a: &AnswerMatrix) -> TruthState {
    let y: Vec<f64> = (0..a.facts())
        .map(|j| {
            let (mut sum, mut cnt) = (0.0, 0.0);
            for i in 0..a.sources() {
                let v = a.get(i, j);
                sum += v as f64;
                cnt += (v != 0) as u8 as f64;
            }
            sum / cnt
        })
        .collect();
    let theta = cosine_similarity(a, &y);
    TruthState { y, theta, delta: Vec::new(), iteration: 0 }
}

pub fn cosine_step(a: &AnswerMatrix, s: &mut TruthState, cfg: &AlgoConfig) {
    let weight = |t: f64| match cfg.power {
        CosinePower::Cubic => t * t * t,
        CosinePower::Linear => t,
    };
    for j in 0..a.facts() {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..a.sources() {
            let v = a.get(i, j);
            if v != 0 {
                let w = weight(s.theta[i]);
                num += w * v as f64;
                den += match cfg.inversion {
                    Inversion::Signed => w.abs(),
                    Inversion::SquareTrick => w,
                };
            }
        }
        s.y[j] = num / den;
    }
    let cos = cosine_similarity(a, &s.y);
    for (t, c) in s.theta.iter_mut().zip(cos) {
        *t = (1.0 - cfg.eta) * *t + cfg.eta * c;
    }
    s.iteration += 1;
}

pub fn init(a: &AnswerMatrix, cfg: &AlgoConfig) -> TruthState {
    match cfg.algorithm {
        Algorithm::ThreeEstimates => three_estimates_init(a, cfg),
        Algorithm::Cosine => cosine_init(a),
    }
}

pub fn step(a: &AnswerMatrix, s: &mut TruthState, cfg: &AlgoConfig) {
    match cfg.algorithm {
        Algorithm::ThreeEstimates => three_estimates_step(a, s, cfg),
        Algorithm::Cosine => cosine_step(a, s, cfg),
    }
}

pub fn run_state(a: &AnswerMatrix, cfg: &AlgoConfig) -> Result<TruthState> {
    cfg.validate()?;
    let mut s = init(a, cfg);
    for _ in 0..cfg.iterations {
        step(a, &mut s, cfg);
    }
    Ok(s)
}

pub fn run(a: &AnswerMatrix, cfg: &AlgoConfig, truth: Option<&[i8]>) -> Result<TruthReport> {
    let s = run_state(a, cfg)?;
    Ok(TruthReport::new(cfg, s, truth))
}

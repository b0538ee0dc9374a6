//! Seeded synthetic instances with a hidden ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::truth::AnswerMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    /// Probability that each source answers correctly when it answers.
    pub correctness: Vec<f64>,
    pub abstain: f64,
}

impl SynthSpec {
    /// Source accuracies drawn uniformly from `[lo, hi]` with the same seed.
    pub fn uniform(seed: u64, n: usize, k: usize, lo: f64, hi: f64, abstain: f64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_0f50_u64);
        let correctness = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        SynthSpec { seed, n, k, correctness, abstain }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("synthetic instance needs n, k >= 1".into()));
        }
        if self.correctness.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: self.correctness.len() });
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !self.correctness.iter().all(|&p| prob(p)) || !prob(self.abstain) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.abstain >= 1.0 {
            return Err(Error::Config("abstain probability 1 leaves every fact unanswered".into()));
        }
        Ok(())
    }
}

/// Generates `(answers, ground_truth)`. Empty fact columns and silent sources
/// are redrawn until every fact and source has at least one answer.
pub fn synthesize(spec: &SynthSpec) -> Result<(AnswerMatrix, Vec<i8>)> {
    spec.validate()?;
    let (n, k) = (spec.n, spec.k);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let truth: Vec<i8> = (0..k).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    let draw = |rng: &mut ChaCha20Rng, i: usize, j: usize| -> i8 {
        if rng.gen_bool(spec.abstain) {
            0
        } else if rng.gen_bool(spec.correctness[i]) {
            truth[j]
        } else {
            -truth[j]
        }
    };
    let mut values: Vec<i8> = (0..n * k).map(|idx| draw(&mut rng, idx / k, idx % k)).collect();
    loop {
        let mut redrawn = false;
        for j in 0..k {
            while (0..n).all(|i| values[i * k + j] == 0) {
                for i in 0..n {
                    values[i * k + j] = draw(&mut rng, i, j);
                }
                redrawn = true;
            }
        }
        for i in 0..n {
            while values[i * k..(i + 1) * k].iter().all(|&v| v == 0) {
                for j in 0..k {
                    values[i * k + j] = draw(&mut rng, i, j);
                }
                redrawn = true;
            }
        }
        if !redrawn {
            break;
        }
    }
    Ok((AnswerMatrix::new(n, k, values)?, truth))
}

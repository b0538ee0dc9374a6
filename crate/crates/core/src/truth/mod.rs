//! Truth-finding algorithms: cleartext references and their secure twins.

pub mod cost;
pub mod mpc;
pub mod plain;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Answers of `n` sources on `k` binary facts, row-major by source.
/// Entries are -1, 0 (abstain) or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerMatrix {
    n: usize,
    k: usize,
    values: Vec<i8>,
}

impl AnswerMatrix {
    /// Every fact needs at least one answer and every source must answer
    /// something, otherwise the per-fact and per-source counts are zero.
    pub fn new(n: usize, k: usize, values: Vec<i8>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Dataset(format!("empty answer matrix ({n} x {k})")));
        }
        if values.len() != n * k {
            return Err(Error::LengthMismatch { expected: n * k, actual: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !(-1..=1).contains(v)) {
            return Err(Error::Dataset(format!(
                "answer {} at source {}, fact {} is not in {{-1, 0, 1}}",
                values[pos],
                pos / k,
                pos % k
            )));
        }
        let m = AnswerMatrix { n, k, values };
        if let Some(j) = (0..k).find(|&j| (0..n).all(|i| m.get(i, j) == 0)) {
            return Err(Error::Dataset(format!("fact {j} has no answers")));
        }
        if let Some(i) = (0..n).find(|&i| m.row(i).iter().all(|&v| v == 0)) {
            return Err(Error::Dataset(format!("source {i} answers no fact")));
        }
        Ok(m)
    }

    pub fn sources(&self) -> usize {
        self.n
    }

    pub fn facts(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.values[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cosine,
    #[serde(rename = "3est")]
    ThreeEstimates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    MinMax,
    /// The public affine map `0.5 x + 0.25`.
    LinearH,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CosinePower {
    Cubic,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inversion {
    /// `1/x = sign(x) / |x|`; denominators use `|theta|^p`.
    Signed,
    /// `1/x = x / x^2`; no sign protocol, denominators use signed `theta^p`.
    SquareTrick,
}

/// Named algorithm variants as used on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// 3-Estimates with min-max normalisation.
    MinMax,
    /// 3-Estimates with the affine `h` normalisation.
    H,
    /// Cosine with cubic weights and signed inversion.
    Base,
    /// Cosine with linear weights and the square trick.
    Fast,
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Algorithm::Cosine),
            "3est" | "3-estimates" | "three-estimates" => Ok(Algorithm::ThreeEstimates),
            other => Err(Error::Config(format!("unknown algorithm '{other}' (cosine | 3est)"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Cosine => "cosine",
            Algorithm::ThreeEstimates => "3est",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Variant::MinMax),
            "h" | "linear_h" => Ok(Variant::H),
            "base" => Ok(Variant::Base),
            "fast" => Ok(Variant::Fast),
            other => Err(Error::Config(format!("unknown variant '{other}' (minmax | h | base | fast)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::MinMax => "minmax",
            Variant::H => "h",
            Variant::Base => "base",
            Variant::Fast => "fast",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub normalization: Normalization,
    pub power: CosinePower,
    pub inversion: Inversion,
    pub iterations: u32,
    /// Cosine trust smoothing.
    pub eta: f64,
    /// Min-max squeeze: outputs land in `[eps, 1 - eps]`.
    pub eps: f64,
    pub theta0: f64,
    pub delta0: f64,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, variant: Variant, iterations: u32) -> Result<Self> {
        let mut cfg = AlgoConfig {
            algorithm,
            normalization: Normalization::MinMax,
            power: CosinePower::Cubic,
            inversion: Inversion::Signed,
            iterations,
            eta: 0.2,
            eps: 0.05,
            theta0: 0.4,
            delta0: 0.1,
        };
        match (algorithm, variant) {
            (Algorithm::ThreeEstimates, Variant::MinMax) => {}
            (Algorithm::ThreeEstimates, Variant::H) => cfg.normalization = Normalization::LinearH,
            (Algorithm::Cosine, Variant::Base) => {}
            (Algorithm::Cosine, Variant::Fast) => {
                cfg.power = CosinePower::Linear;
                cfg.inversion = Inversion::SquareTrick;
            }
            (a, v) => return Err(Error::Config(format!("variant '{v}' does not apply to {a}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.eps >= 0.0 && self.eps < 0.5) {
            return Err(Error::Config(format!("eps must lie in [0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        match self.algorithm {
            Algorithm::ThreeEstimates => match self.normalization {
                Normalization::MinMax => Variant::MinMax,
                Normalization::LinearH => Variant::H,
            },
            Algorithm::Cosine => match self.power {
                CosinePower::Cubic => Variant::Base,
                CosinePower::Linear => Variant::Fast,
            },
        }
    }
}

/// Truth values, source factors and (3-Estimates only) fact difficulty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TruthState {
    pub y: Vec<f64>,
    /// Untrustworthiness for 3-Estimates, trust for Cosine.
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub iteration: u32,
}

impl TruthState {
    /// All values in the order y, theta, delta.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.y[..], &self.theta[..], &self.delta[..]].concat()
    }
}

/// Label in {-1, 1}: 3-Estimates thresholds at 0.5, Cosine at 0.
pub fn label(algorithm: Algorithm, y: f64) -> i8 {
    let threshold = match algorithm {
        Algorithm::ThreeEstimates => 0.5,
        Algorithm::Cosine => 0.0,
    };
    if y >= threshold {
        1
    } else {
        -1
    }
}

pub fn labels(algorithm: Algorithm, y: &[f64]) -> Vec<i8> {
    y.iter().map(|&v| label(algorithm, v)).collect()
}

pub fn count_errors(labels: &[i8], truth: &[i8]) -> usize {
    labels.iter().zip(truth).filter(|(a, b)| a != b).count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthReport {
    pub algorithm: Algorithm,
    pub variant: Variant,
    pub state: TruthState,
    pub labels: Vec<i8>,
    pub errors: Option<usize>,
}

impl TruthReport {
    pub fn new(cfg: &AlgoConfig, state: TruthState, truth: Option<&[i8]>) -> Self {
        let labels = labels(cfg.algorithm, &state.y);
        let errors = truth.map(|t| count_errors(&labels, t));
        TruthReport { algorithm: cfg.algorithm, variant: cfg.variant(), state, labels, errors }
    }
}

//! Closed-form resource model of the online protocols.
//!
//! Mirrors the call structure of `protocols`, `compare` and `truth::mpc`
//! exactly, so the dealer can be sized before a session starts and round
//! counts can be predicted without running anything. Tests check it against
//! the counters of real runs.

use super::{AlgoConfig, Algorithm, CosinePower, Inversion, Normalization};
use crate::dealer::DealerBudget;
use crate::protocols::{ProtocolConfig, TruncationMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostEstimate {
    pub budget: DealerBudget,
    pub rounds: u64,
}

pub struct CostModel {
    cfg: ProtocolConfig,
    pub total: CostEstimate,
}

impl CostModel {
    pub fn new(cfg: ProtocolConfig) -> Self {
        CostModel { cfg, total: CostEstimate::default() }
    }

    pub fn mul_raw(&mut self, m: usize) {
        if m > 0 {
            self.total.budget.triples += m as u64;
            self.total.rounds += 1;
        }
    }

    pub fn truncate(&mut self, m: usize) {
        if m > 0 && self.cfg.truncation == TruncationMode::Exact {
            self.total.budget.masked_pairs += m as u64;
            self.total.rounds += 1;
        }
    }

    pub fn mul(&mut self, m: usize) {
        if self.cfg.truncation == TruncationMode::Split {
            self.mul_raw(2 * m);
        } else {
            self.mul_raw(m);
            self.truncate(m);
        }
    }

    pub fn scale(&mut self, m: usize) {
        self.truncate(m);
    }

    pub fn inv(&mut self, m: usize) {
        self.scale(m);
        self.scale(m);
        for _ in 1..self.cfg.newton.inv_iters {
            self.mul(m);
            self.mul(m);
        }
    }

    pub fn inv_wide(&mut self, m: usize) {
        self.inv(m);
        for _ in 0..2 {
            self.mul(m);
            self.mul(m);
        }
    }

    pub fn sqrt_inv(&mut self, m: usize) {
        self.scale(m);
        self.scale(m);
        for _ in 1..self.cfg.newton.sqrt_iters {
            self.mul(m);
            self.mul(m);
            self.mul(m);
        }
    }

    pub fn sqrt(&mut self, m: usize) {
        self.sqrt_inv(m);
        self.mul(m);
    }

    pub fn ltz(&mut self, m: usize) {
        if m == 0 {
            return;
        }
        let q = self.cfg.ring.ring_bits() as usize;
        self.total.budget.bits += (q * m) as u64;
        self.total.rounds += 1;
        for _ in 1..q {
            self.mul_raw(m);
        }
    }

    pub fn max_min_pairs(&mut self, m: usize) {
        self.ltz(m);
        self.mul_raw(m);
    }

    pub fn extrema(&mut self, n: usize) {
        if n <= 1 {
            return;
        }
        self.max_min_pairs(n / 2);
        let mut size = n.div_ceil(2);
        while size > 1 {
            self.max_min_pairs(2 * (size / 2));
            size = size.div_ceil(2);
        }
    }

    pub fn minmax_normalize(&mut self, len: usize) {
        self.extrema(len);
        self.inv(1);
        self.scale(1);
        self.mul(len);
    }

    fn normalize(&mut self, algo: &AlgoConfig, len: usize) {
        if algo.normalization == Normalization::MinMax {
            self.minmax_normalize(len);
        }
    }

    pub fn three_estimates(&mut self, algo: &AlgoConfig, n: usize, k: usize) {
        let nk = n * k;
        self.mul_raw(nk);
        self.inv_wide(n + k);
        for _ in 0..algo.iterations {
            self.mul_raw(nk);
            self.mul(k);
            self.mul(k);
            self.normalize(algo, k);

            self.inv(n);
            self.mul_raw(2 * nk);
            self.mul(k);
            self.mul(k);
            self.normalize(algo, k);

            self.inv(k);
            self.mul(k);
            self.mul_raw(2 * nk);
            self.mul(n);
            self.normalize(algo, n);
        }
    }

    fn cosine_similarity(&mut self, n: usize, k: usize) {
        self.mul(k);
        self.mul_raw(2 * n * k);
        self.sqrt_inv(n);
        self.mul(n);
        self.mul(n);
    }

    pub fn cosine(&mut self, algo: &AlgoConfig, n: usize, k: usize) {
        self.mul_raw(n * k);
        self.inv_wide(k);
        self.sqrt_inv(n);
        self.mul(k);
        self.cosine_similarity(n, k);
        for _ in 0..algo.iterations {
            if algo.power == CosinePower::Cubic {
                self.mul(n);
                self.mul(n);
            }
            if algo.inversion == Inversion::Signed {
                self.ltz(n);
                self.mul_raw(n);
            }
            self.mul_raw(2 * n * k);
            match algo.inversion {
                Inversion::Signed => {
                    self.ltz(k);
                    self.mul_raw(k);
                    self.inv(k);
                    self.mul_raw(k);
                }
                Inversion::SquareTrick => {
                    self.mul(k);
                    self.inv(k);
                    self.mul(k);
                }
            }
            self.mul(k);
            self.cosine_similarity(n, k);
            self.scale(n);
            self.scale(n);
        }
    }
}

/// Resources consumed by one run of `algo` on an `n x k` instance, excluding
/// the session handshake.
pub fn estimate(proto: &ProtocolConfig, algo: &AlgoConfig, n: usize, k: usize) -> CostEstimate {
    let mut m = CostModel::new(*proto);
    match algo.algorithm {
        Algorithm::ThreeEstimates => m.three_estimates(algo, n, k),
        Algorithm::Cosine => m.cosine(algo, n, k),
    }
    m.total
}

/// Dealer material one party needs for a run.
pub fn estimate_budget(proto: &ProtocolConfig, algo: &AlgoConfig, n: usize, k: usize) -> DealerBudget {
    estimate(proto, algo, n, k).budget
}

/// Rounds spent inside one iteration of the main loop.
pub fn rounds_per_iteration(proto: &ProtocolConfig, algo: &AlgoConfig, n: usize, k: usize) -> u64 {
    let one = AlgoConfig { iterations: 1, ..*algo };
    let two = AlgoConfig { iterations: 2, ..*algo };
    estimate(proto, &two, n, k).rounds - estimate(proto, &one, n, k).rounds
}

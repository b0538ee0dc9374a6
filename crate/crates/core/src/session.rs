//! Session configuration and the per-party driver shared by the loopback
//! and TCP deployments.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dealer::{DealerBudget, MaterialSource};
use crate::error::{Error, Result};
use crate::protocols::{MpcContext, OpCounters, ProtocolConfig};
use crate::ring::{RingElement, RingParams};
use crate::sharing::PartyId;
use crate::transport::{loopback_pair, tcp_connect, tcp_listen, Channel, ChannelStats, Hello, Transport};
use crate::truth::mpc::{output_len, run_mpc, SharedAnswerMatrix};
use crate::truth::{AlgoConfig, Algorithm, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub host: String,
    pub port: u16,
    pub connect_timeout_secs: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { host: "127.0.0.1".into(), port: 47_100, connect_timeout_secs: 30 }
    }
}

/// Public description of one secure run. Both parties load the same file;
/// everything except `network` enters the handshake digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: u64,
    pub algorithm: Algorithm,
    pub variant: Variant,
    pub iterations: u32,
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub network: NetworkConfig,
}

#[derive(Serialize)]
struct DigestView<'a> {
    session_id: u64,
    algorithm: Algorithm,
    variant: Variant,
    iterations: u32,
    n: usize,
    k: usize,
    protocol: &'a ProtocolConfig,
}

impl SessionConfig {
    pub fn algo(&self) -> Result<AlgoConfig> {
        AlgoConfig::new(self.algorithm, self.variant, self.iterations)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.protocol.ring;
        RingParams::new(r.ring_bits(), r.frac_bits())?;
        self.protocol.newton.validate(&r)?;
        self.algo()?;
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SessionConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// First 8 bytes of SHA-256 over the canonical TOML of the public
    /// computation parameters.
    pub fn digest(&self) -> u64 {
        let view = DigestView {
            session_id: self.session_id,
            algorithm: self.algorithm,
            variant: self.variant,
            iterations: self.iterations,
            n: self.n,
            k: self.k,
            protocol: &self.protocol,
        };
        let text = toml::to_string(&view).expect("config view serialises");
        let hash = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
    }

    pub fn hello(&self) -> Hello {
        Hello { session_id: self.session_id, config_digest: self.digest() }
    }

    pub fn budget(&self) -> Result<DealerBudget> {
        Ok(crate::truth::cost::estimate_budget(&self.protocol, &self.algo()?, self.n, self.k))
    }
}

/// What one party ends up with after a run.
#[derive(Clone, Debug)]
pub struct PartyRun {
    pub party: PartyId,
    /// Output shares in the order y, theta, delta.
    pub outputs: Vec<RingElement>,
    pub stats: ChannelStats,
    pub counters: OpCounters,
    pub consumed: DealerBudget,
}

/// Handshake, then the configured algorithm.
pub fn run_party(
    cfg: &SessionConfig,
    answers: &SharedAnswerMatrix,
    material: Box<dyn MaterialSource>,
    transport: Box<dyn Transport>,
) -> Result<PartyRun> {
    let party = answers.shares.owner();
    if (answers.n, answers.k) != (cfg.n, cfg.k) {
        return Err(Error::Config(format!(
            "shares are {} x {}, session expects {} x {}",
            answers.n, answers.k, cfg.n, cfg.k
        )));
    }
    let algo = cfg.algo()?;
    let mut channel = Channel::new(party, cfg.protocol.ring, transport);
    channel.handshake(cfg.hello())?;
    let mut ctx = MpcContext::new(cfg.protocol, channel, material)?;
    let out = run_mpc(&mut ctx, answers, &algo)?;
    let outputs = out.flatten();
    debug_assert_eq!(outputs.len(), output_len(cfg.algorithm, cfg.n, cfg.k));
    Ok(PartyRun { party, outputs, stats: ctx.stats(), counters: ctx.counters(), consumed: ctx.consumed() })
}

/// Both parties in one process over the in-memory transport.
pub fn run_loopback(
    cfg: &SessionConfig,
    answers: [&SharedAnswerMatrix; 2],
    material: [Box<dyn MaterialSource>; 2],
) -> Result<(PartyRun, PartyRun)> {
    let (t1, t2) = loopback_pair();
    let [m1, m2] = material;
    std::thread::scope(|s| {
        let h = s.spawn(move || run_party(cfg, answers[1], m2, Box::new(t2)));
        let r1 = run_party(cfg, answers[0], m1, Box::new(t1));
        let r2 = h.join().map_err(|_| Error::Protocol("party 2 panicked".into()))?;
        match (r1, r2) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    })
}

/// Party 1 listens, party 2 connects.
pub fn tcp_transport(cfg: &SessionConfig, party: PartyId) -> Result<Box<dyn Transport>> {
    let addr = (cfg.network.host.as_str(), cfg.network.port);
    let t = match party {
        PartyId::One => tcp_listen(addr)?,
        PartyId::Two => tcp_connect(addr, Duration::from_secs(cfg.network.connect_timeout_secs))?,
    };
    Ok(Box::new(t))
}

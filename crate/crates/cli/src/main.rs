use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use vmpc::dataset::{load_dataset, load_ground_truth, write_answers, write_ground_truth, Dataset};
use vmpc::dealer::{generate, material_paths, FileMaterial, MaterialSource, SeededMaterial};
use vmpc::report::ReportBundle;
use vmpc::session::{run_loopback, run_party, tcp_transport, NetworkConfig, PartyRun, SessionConfig};
use vmpc::sharing::{read_share_file, write_share_file};
use vmpc::synth::{synthesize, SynthSpec};
use vmpc::truth::cost::rounds_per_iteration;
use vmpc::truth::mpc::{reconstruct_state, share_answers, SharedAnswerMatrix};
use vmpc::truth::{plain, AlgoConfig, Algorithm, TruthReport, TruthState, Variant};
use vmpc::{PartyId, ProtocolConfig, SharedVector};

mod output;

#[derive(Parser)]
#[command(name = "vmpc", version, about = "Two-server secure truth finding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset with its hidden ground truth.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Trusted-dealer material.
    Dealer {
        #[command(subcommand)]
        action: DealerCommand,
    },
    /// Split a dataset into two share files plus the public session file.
    ShareInput {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 47_100)]
        port: u16,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run one server over TCP. Party 1 listens, party 2 connects.
    Party {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=2))]
        id: u64,
        #[arg(long)]
        config: PathBuf,
        /// Input share file; defaults to shares_p{id}.bin next to the config.
        #[arg(long)]
        shares: Option<PathBuf>,
        /// Dealer material file; without it both parties derive material from --seed.
        #[arg(long)]
        dealer_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Where result_p{id}.bin goes; defaults to the config's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Combine both parties' result files into the final estimates.
    Reveal {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding result_p1.bin and result_p2.bin.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Cleartext run.
    RunPlain {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Secure run with both parties in this process.
    RunMpc {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        /// Directory with dealer_p1.bin and dealer_p2.bin.
        #[arg(long)]
        dealer_file: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Plain and secure runs side by side, with an error report.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
    /// Rounds, bytes and time over a grid of sizes and variants.
    Bench {
        /// Comma-separated NxK sizes.
        #[arg(long, default_value = "10x20,30x60")]
        sizes: String,
        /// Comma-separated algo:variant pairs.
        #[arg(long, default_value = "3est:h,3est:minmax,cosine:base,cosine:fast")]
        variants: String,
        #[arg(long, default_value_t = 2)]
        iters: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Writes bench.csv here instead of printing to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DealerCommand {
    /// Generate both parties' material for the session in --config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the config's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    sources: usize,
    #[arg(long, default_value_t = 60)]
    facts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// A CSV dataset, or a synthetic one when --dataset is absent.
#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Clone)]
struct AlgoArgs {
    #[arg(long, default_value = "3est")]
    algo: Algorithm,
    /// minmax | h for 3est, base | fast for cosine.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 20)]
    iters: u32,
}

impl AlgoArgs {
    fn config(&self) -> Result<AlgoConfig> {
        let variant = self.variant.unwrap_or(match self.algo {
            Algorithm::ThreeEstimates => Variant::MinMax,
            Algorithm::Cosine => Variant::Base,
        });
        Ok(AlgoConfig::new(self.algo, variant, self.iters)?)
    }
}

struct Input {
    data: Dataset,
    truth: Option<Vec<i8>>,
}

// Accuracy range and abstention rate of generated sources.
const SYNTH_ACCURACY: (f64, f64) = (0.55, 0.95);
const SYNTH_ABSTAIN: f64 = 0.2;

fn synth_dataset(s: &SynthArgs) -> Result<(Dataset, Vec<i8>)> {
    let spec = SynthSpec::uniform(s.seed, s.sources, s.facts, SYNTH_ACCURACY.0, SYNTH_ACCURACY.1, SYNTH_ABSTAIN);
    let (answers, truth) = synthesize(&spec)?;
    let data = Dataset {
        source_ids: (0..answers.sources()).map(|i| i.to_string()).collect(),
        fact_ids: (0..answers.facts()).map(|j| j.to_string()).collect(),
        answers,
    };
    Ok((data, truth))
}

impl InputArgs {
    fn load(&self) -> Result<Input> {
        match &self.dataset {
            Some(path) => {
                let data = load_dataset(path).with_context(|| format!("reading {}", path.display()))?;
                let truth = match &self.ground_truth {
                    Some(g) => Some(load_ground_truth(g, &data).with_context(|| format!("reading {}", g.display()))?),
                    None => None,
                };
                Ok(Input { data, truth })
            }
            None => {
                if self.ground_truth.is_some() {
                    bail!("--ground-truth needs --dataset");
                }
                let (data, truth) = synth_dataset(&self.synth)?;
                Ok(Input { data, truth: Some(truth) })
            }
        }
    }

    fn seed(&self) -> u64 {
        self.synth.seed
    }
}

fn session_for(input: &Input, algo: &AlgoConfig, seed: u64) -> SessionConfig {
    SessionConfig {
        session_id: seed,
        algorithm: algo.algorithm,
        variant: algo.variant(),
        iterations: algo.iterations,
        n: input.data.answers.sources(),
        k: input.data.answers.facts(),
        protocol: ProtocolConfig::default(),
        network: NetworkConfig::default(),
    }
}

fn config_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn result_path(dir: &Path, party: PartyId) -> PathBuf {
    dir.join(format!("result_p{}.bin", party.index()))
}

fn shares_path(dir: &Path, party: PartyId) -> PathBuf {
    dir.join(format!("shares_p{}.bin", party.index()))
}

fn seeded_pair(cfg: &SessionConfig, seed: u64) -> [Box<dyn MaterialSource>; 2] {
    let p = cfg.protocol.ring;
    [Box::new(SeededMaterial::new(p, seed, PartyId::One)), Box::new(SeededMaterial::new(p, seed, PartyId::Two))]
}

fn open_material(path: &Path, cfg: &SessionConfig, party: PartyId) -> Result<Box<dyn MaterialSource>> {
    let m = FileMaterial::open(path).with_context(|| format!("opening {}", path.display()))?;
    let h = m.header();
    if h.party != party {
        bail!("{} holds material for party {}, not {}", path.display(), h.party.index(), party.index());
    }
    if h.params != cfg.protocol.ring {
        bail!("{} was generated for different ring parameters", path.display());
    }
    Ok(Box::new(m))
}

/// Secure loopback run; returns the reconstructed state and party one's view.
fn secure_run(
    input: &Input,
    algo: &AlgoConfig,
    seed: u64,
    dealer_dir: Option<&Path>,
) -> Result<(TruthState, PartyRun)> {
    let cfg = session_for(input, algo, seed);
    let p = cfg.protocol.ring;
    let (s1, s2) = share_answers(&p, &input.data.answers, &mut ChaCha20Rng::seed_from_u64(seed));
    let material = match dealer_dir {
        Some(dir) => {
            let (f1, f2) = material_paths(dir);
            [open_material(&f1, &cfg, PartyId::One)?, open_material(&f2, &cfg, PartyId::Two)?]
        }
        None => seeded_pair(&cfg, seed),
    };
    let (r1, r2) = run_loopback(&cfg, [&s1, &s2], material)?;
    let state = reconstruct_state(&p, cfg.algorithm, cfg.n, cfg.k, &r1.outputs, &r2.outputs, cfg.iterations)?;
    Ok((state, r1))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { synth, out_dir } => {
            let (data, truth) = synth_dataset(&synth)?;
            std::fs::create_dir_all(&out_dir)?;
            write_answers(std::fs::File::create(out_dir.join("answers.csv"))?, &data.answers)?;
            write_ground_truth(std::fs::File::create(out_dir.join("truth.csv"))?, &truth)?;
            println!(
                "wrote {} sources x {} facts to {}",
                data.answers.sources(),
                data.answers.facts(),
                out_dir.display()
            );
        }

        Command::Dealer { action: DealerCommand::Gen { config, seed, out_dir } } => {
            let cfg = SessionConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let dir = out_dir.unwrap_or_else(|| config_dir(&config));
            std::fs::create_dir_all(&dir)?;
            let budget = cfg.budget()?;
            let (f1, f2) = material_paths(&dir);
            generate(cfg.protocol.ring, budget, seed, &f1, &f2)?;
            println!(
                "material: {} triples, {} bits, {} masked pairs per party",
                budget.triples, budget.bits, budget.masked_pairs
            );
        }

        Command::ShareInput { input, algo, host, port, out_dir } => {
            let algo = algo.config()?;
            let inp = input.load()?;
            let mut cfg = session_for(&inp, &algo, input.seed());
            cfg.network.host = host;
            cfg.network.port = port;
            std::fs::create_dir_all(&out_dir)?;
            let p = cfg.protocol.ring;
            let (s1, s2) = share_answers(&p, &inp.data.answers, &mut ChaCha20Rng::seed_from_u64(input.seed()));
            write_share_file(&shares_path(&out_dir, PartyId::One), &p, &s1.shares)?;
            write_share_file(&shares_path(&out_dir, PartyId::Two), &p, &s2.shares)?;
            cfg.save(&out_dir.join("session.toml"))?;
            output::write_ids(&out_dir, &inp.data)?;
            println!("session {} ({} x {}) written to {}", cfg.session_id, cfg.n, cfg.k, out_dir.display());
        }

        Command::Party { id, config, shares, dealer_file, seed, host, port, out_dir } => {
            let party = PartyId::from_index(id)?;
            let mut cfg = SessionConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(h) = host {
                cfg.network.host = h;
            }
            if let Some(p) = port {
                cfg.network.port = p;
            }
            let dir = config_dir(&config);
            let shares = shares.unwrap_or_else(|| shares_path(&dir, party));
            let (params, vec) =
                read_share_file(&shares, party).with_context(|| format!("reading {}", shares.display()))?;
            if params != cfg.protocol.ring {
                bail!("{} uses different ring parameters than the session", shares.display());
            }
            let answers = SharedAnswerMatrix::new(cfg.n, cfg.k, vec)?;
            let material = match &dealer_file {
                Some(path) => open_material(path, &cfg, party)?,
                None => Box::new(SeededMaterial::new(params, seed, party)),
            };
            let transport = tcp_transport(&cfg, party)?;
            let start = Instant::now();
            let out = run_party(&cfg, &answers, material, transport)?;
            let out_dir = out_dir.unwrap_or(dir);
            std::fs::create_dir_all(&out_dir)?;
            write_share_file(&result_path(&out_dir, party), &params, &SharedVector::new(party, out.outputs.clone()))?;
            output::write_party_stats(&out_dir, &out)?;
            println!(
                "party {}: rounds {}, bytes sent {}, received {}, {:.3}s",
                id,
                out.stats.rounds,
                out.stats.bytes_sent,
                out.stats.bytes_received,
                start.elapsed().as_secs_f64()
            );
        }

        Command::Reveal { config, out_dir } => {
            let cfg = SessionConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let dir = out_dir.unwrap_or_else(|| config_dir(&config));
            let (p1, a) = read_share_file(&result_path(&dir, PartyId::One), PartyId::One)?;
            let (p2, b) = read_share_file(&result_path(&dir, PartyId::Two), PartyId::Two)?;
            if p1 != cfg.protocol.ring || p2 != cfg.protocol.ring {
                bail!("result files do not match the session's ring parameters");
            }
            let state = reconstruct_state(&p1, cfg.algorithm, cfg.n, cfg.k, a.values(), b.values(), cfg.iterations)?;
            let ids = output::read_ids(&config_dir(&config), cfg.n, cfg.k)?;
            let report = TruthReport::new(&cfg.algo()?, state, None);
            output::write_estimates(&dir, &report, &ids)?;
            print!("{}", output::describe(&report));
        }

        Command::RunPlain { input, algo, out_dir } => {
            let algo = algo.config()?;
            let inp = input.load()?;
            let report = plain::run(&inp.data.answers, &algo, inp.truth.as_deref())?;
            if let Some(dir) = out_dir {
                output::write_estimates(&dir, &report, &output::Ids::from(&inp.data))?;
            }
            print!("{}", output::describe(&report));
        }

        Command::RunMpc { input, algo, dealer_file, out_dir } => {
            let algo = algo.config()?;
            let inp = input.load()?;
            let start = Instant::now();
            let (state, view) = secure_run(&inp, &algo, input.seed(), dealer_file.as_deref())?;
            let report = TruthReport::new(&algo, state, inp.truth.as_deref());
            if let Some(dir) = out_dir {
                output::write_estimates(&dir, &report, &output::Ids::from(&inp.data))?;
            }
            print!("{}", output::describe(&report));
            println!(
                "rounds: {}, bytes sent per party: {}, time: {:.3}s",
                view.stats.rounds,
                view.stats.bytes_sent,
                start.elapsed().as_secs_f64()
            );
        }

        Command::Compare { input, algo, out_dir } => {
            let algo = algo.config()?;
            let inp = input.load()?;
            let t0 = Instant::now();
            let plain_report = plain::run(&inp.data.answers, &algo, inp.truth.as_deref())?;
            let plain_time = t0.elapsed();
            let t1 = Instant::now();
            let (state, view) = secure_run(&inp, &algo, input.seed(), None)?;
            let secure_time = t1.elapsed();
            let secure_report = TruthReport::new(&algo, state, inp.truth.as_deref());
            let (n, k) = (inp.data.answers.sources(), inp.data.answers.facts());
            let rpi = rounds_per_iteration(&ProtocolConfig::default(), &algo, n, k);
            let bundle = ReportBundle::new(
                plain_report,
                secure_report,
                view.stats,
                view.counters,
                rpi as f64,
                plain_time,
                secure_time,
            );
            bundle.write_dir(&out_dir)?;
            print!("{}", bundle.summary(true));
        }

        Command::Bench { sizes, variants, iters, seed, out_dir } => {
            let sizes = output::parse_sizes(&sizes)?;
            let variants = output::parse_variants(&variants)?;
            let rows = output::bench(&sizes, &variants, iters, seed, |inp, algo| {
                let input = Input { data: inp, truth: None };
                secure_run(&input, algo, seed, None).map(|(_, view)| view)
            })?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    output::write_bench(std::fs::File::create(dir.join("bench.csv"))?, &rows)?;
                }
                None => output::write_bench(std::io::stdout().lock(), &rows)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VMPC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

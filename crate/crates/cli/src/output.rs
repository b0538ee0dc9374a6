//! Files and text the CLI writes besides the core reports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use vmpc::dataset::Dataset;
use vmpc::session::PartyRun;
use vmpc::synth::{synthesize, SynthSpec};
use vmpc::truth::cost::rounds_per_iteration;
use vmpc::truth::{AlgoConfig, Algorithm, TruthReport, Variant};
use vmpc::ProtocolConfig;

pub struct Ids {
    pub sources: Vec<String>,
    pub facts: Vec<String>,
}

impl From<&Dataset> for Ids {
    fn from(d: &Dataset) -> Self {
        Ids { sources: d.source_ids.clone(), facts: d.fact_ids.clone() }
    }
}

fn write_list(path: &Path, header: &str, ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([header])?;
    for id in ids {
        w.write_record([id])?;
    }
    w.flush()?;
    Ok(())
}

fn read_list(path: &Path, want: usize) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let ids = r.records().map(|rec| Ok(rec?.get(0).unwrap_or_default().to_string())).collect::<Result<Vec<_>>>()?;
    if ids.len() != want {
        bail!("{} lists {} ids, the session expects {}", path.display(), ids.len(), want);
    }
    Ok(ids)
}

/// Id dictionaries stay with the client; the servers only see indices.
pub fn write_ids(dir: &Path, data: &Dataset) -> Result<()> {
    write_list(&dir.join("source_ids.csv"), "source_id", &data.source_ids)?;
    write_list(&dir.join("fact_ids.csv"), "fact_id", &data.fact_ids)
}

/// Falls back to plain indices when the dictionaries are missing.
pub fn read_ids(dir: &Path, n: usize, k: usize) -> Result<Ids> {
    let (s, f) = (dir.join("source_ids.csv"), dir.join("fact_ids.csv"));
    if !s.exists() || !f.exists() {
        return Ok(Ids {
            sources: (0..n).map(|i| i.to_string()).collect(),
            facts: (0..k).map(|j| j.to_string()).collect(),
        });
    }
    Ok(Ids { sources: read_list(&s, n)?, facts: read_list(&f, k)? })
}

/// `facts.csv` and `sources.csv`.
pub fn write_estimates(dir: &Path, report: &TruthReport, ids: &Ids) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let st = &report.state;
    let with_delta = !st.delta.is_empty();
    let mut w = csv::Writer::from_path(dir.join("facts.csv"))?;
    if with_delta {
        w.write_record(["fact_id", "y", "label", "delta"])?;
    } else {
        w.write_record(["fact_id", "y", "label"])?;
    }
    for (j, id) in ids.facts.iter().enumerate() {
        let mut rec = vec![id.clone(), format!("{:.9}", st.y[j]), report.labels[j].to_string()];
        if with_delta {
            rec.push(format!("{:.9}", st.delta[j]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("sources.csv"))?;
    w.write_record(["source_id", "theta"])?;
    for (i, id) in ids.sources.iter().enumerate() {
        w.write_record([id.clone(), format!("{:.9}", st.theta[i])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn describe(report: &TruthReport) -> String {
    let mut s = String::new();
    let pos = report.labels.iter().filter(|&&l| l > 0).count();
    let _ = writeln!(s, "algorithm: {} ({})", report.algorithm, report.variant);
    let _ = writeln!(
        s,
        "facts: {} ({} true, {} false), sources: {}",
        report.labels.len(),
        pos,
        report.labels.len() - pos,
        report.state.theta.len()
    );
    if let Some(e) = report.errors {
        let _ = writeln!(s, "label errors: {e}");
    }
    s
}

pub fn write_party_stats(dir: &Path, run: &PartyRun) -> Result<()> {
    let mut t = toml::Table::new();
    let st = &run.stats;
    for (key, v) in [
        ("rounds", st.rounds),
        ("bytes_sent", st.bytes_sent),
        ("bytes_received", st.bytes_received),
        ("opens", st.opens),
        ("triples", run.consumed.triples),
        ("bits", run.consumed.bits),
        ("masked_pairs", run.consumed.masked_pairs),
    ] {
        t.insert(key.into(), toml::Value::Integer(v as i64));
    }
    let path = dir.join(format!("stats_p{}.toml", run.party.index()));
    std::fs::write(&path, toml::to_string(&t)?)?;
    Ok(())
}

pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|part| {
            let (n, k) =
                part.trim().split_once('x').with_context(|| format!("size '{part}' is not of the form NxK"))?;
            Ok((n.parse()?, k.parse()?))
        })
        .collect()
}

pub fn parse_variants(s: &str) -> Result<Vec<(Algorithm, Variant)>> {
    s.split(',')
        .map(|part| {
            let (a, v) = part
                .trim()
                .split_once(':')
                .with_context(|| format!("variant '{part}' is not of the form algo:variant"))?;
            Ok((a.parse()?, v.parse()?))
        })
        .collect()
}

pub struct BenchRow {
    pub algo: AlgoConfig,
    pub n: usize,
    pub k: usize,
    pub rounds: u64,
    pub rounds_per_iteration: u64,
    pub bytes_sent: u64,
    pub seconds: f64,
}

pub fn bench(
    sizes: &[(usize, usize)],
    variants: &[(Algorithm, Variant)],
    iters: u32,
    seed: u64,
    mut secure: impl FnMut(Dataset, &AlgoConfig) -> Result<PartyRun>,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &(n, k) in sizes {
        let (answers, _) = synthesize(&SynthSpec::uniform(seed, n, k, 0.55, 0.95, 0.2))?;
        let data = Dataset {
            source_ids: (0..n).map(|i| i.to_string()).collect(),
            fact_ids: (0..k).map(|j| j.to_string()).collect(),
            answers,
        };
        for &(alg, var) in variants {
            let algo = AlgoConfig::new(alg, var, iters)?;
            log::info!("bench {alg} {var} {n}x{k}");
            let start = Instant::now();
            let run = secure(data.clone(), &algo)?;
            rows.push(BenchRow {
                algo,
                n,
                k,
                rounds: run.stats.rounds,
                rounds_per_iteration: rounds_per_iteration(&ProtocolConfig::default(), &algo, n, k),
                bytes_sent: run.stats.bytes_sent,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

pub fn write_bench<W: Write>(w: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "algorithm",
        "variant",
        "n",
        "k",
        "iterations",
        "rounds",
        "rounds_per_iteration",
        "bytes_sent",
        "seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.algo.algorithm.to_string(),
            r.algo.variant().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.algo.iterations.to_string(),
            r.rounds.to_string(),
            r.rounds_per_iteration.to_string(),
            r.bytes_sent.to_string(),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

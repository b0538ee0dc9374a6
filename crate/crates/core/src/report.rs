//! Comparison reports: plain vs secure outputs, error histogram, costs.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::error::Result;
use crate::protocols::OpCounters;
use crate::transport::ChannelStats;
use crate::truth::TruthReport;

/// Upper edges 1e-8, 1e-7, ..., 1e-1; a final bucket collects the rest.
pub const BUCKET_EXPONENTS: std::ops::RangeInclusive<i32> = -8..=-1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bucket {
    /// `None` for the overflow bucket.
    pub upper: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorHistogram {
    pub buckets: Vec<Bucket>,
    pub max: f64,
    pub total: usize,
}

impl ErrorHistogram {
    /// Buckets `|a[i] - b[i]|`; bucket `e` holds errors in `(10^(e-1), 10^e]`,
    /// the first also holds everything smaller.
    pub fn from_pairs(a: &[f64], b: &[f64]) -> Self {
        let mut buckets: Vec<Bucket> =
            BUCKET_EXPONENTS.map(|e| Bucket { upper: Some(10f64.powi(e)), count: 0 }).collect();
        buckets.push(Bucket { upper: None, count: 0 });
        let mut max: f64 = 0.0;
        for (x, y) in a.iter().zip(b) {
            let d = (x - y).abs();
            max = max.max(if d.is_nan() { f64::INFINITY } else { d });
            let idx = buckets.iter().position(|b| b.upper.is_some_and(|u| d <= u)).unwrap_or(buckets.len() - 1);
            buckets[idx].count += 1;
        }
        ErrorHistogram { buckets, max, total: a.len().min(b.len()) }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["upper_bound", "count"])?;
        for b in &self.buckets {
            let upper = b.upper.map(|u| format!("{u:e}")).unwrap_or_else(|| "inf".into());
            wtr.write_record([upper, b.count.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub plain: TruthReport,
    pub secure: TruthReport,
    pub histogram: ErrorHistogram,
    pub label_flips: usize,
    pub stats: ChannelStats,
    pub counters: OpCounters,
    pub rounds_per_iteration: f64,
    #[serde(skip)]
    pub plain_time: Duration,
    #[serde(skip)]
    pub secure_time: Duration,
}

impl ReportBundle {
    pub fn new(
        plain: TruthReport,
        secure: TruthReport,
        stats: ChannelStats,
        counters: OpCounters,
        rounds_per_iteration: f64,
        plain_time: Duration,
        secure_time: Duration,
    ) -> Self {
        let histogram = ErrorHistogram::from_pairs(&plain.state.flatten(), &secure.state.flatten());
        let label_flips = plain.labels.iter().zip(&secure.labels).filter(|(a, b)| a != b).count();
        ReportBundle {
            plain,
            secure,
            histogram,
            label_flips,
            stats,
            counters,
            rounds_per_iteration,
            plain_time,
            secure_time,
        }
    }

    /// Text summary. Timing lines are kept last so the rest is reproducible.
    pub fn summary(&self, with_timing: bool) -> String {
        let mut s = String::new();
        let p = &self.plain;
        let _ = writeln!(s, "algorithm: {} ({})", p.algorithm, p.variant);
        let _ = writeln!(s, "facts: {}, sources: {}", p.state.y.len(), p.state.theta.len());
        let _ = writeln!(s, "iterations: {}", p.state.iteration);
        let _ = writeln!(s, "max abs error: {:.3e}", self.histogram.max);
        let _ = writeln!(s, "label flips: {}", self.label_flips);
        if let (Some(a), Some(b)) = (p.errors, self.secure.errors) {
            let _ = writeln!(s, "label errors: plain {a}, secure {b}");
        }
        let st = &self.stats;
        let _ = writeln!(s, "rounds: {} ({:.1} per iteration)", st.rounds, self.rounds_per_iteration);
        let _ = writeln!(s, "bytes sent: {}, received: {}", st.bytes_sent, st.bytes_received);
        let c = &self.counters;
        let _ = writeln!(
            s,
            "ops: {} raw products, {} truncations, {} comparisons ({} elements), {} sign, {} inv, {} sqrt",
            c.mul_raw, c.truncations, c.ltz_calls, c.ltz_elems, c.sign_calls, c.inv_calls, c.sqrt_calls
        );
        let _ = writeln!(s, "error histogram:");
        for b in &self.histogram.buckets {
            match b.upper {
                Some(u) => {
                    let _ = writeln!(s, "  <= {u:.0e}: {}", b.count);
                }
                None => {
                    let _ = writeln!(s, "  >  1e-1: {}", b.count);
                }
            }
        }
        if with_timing {
            let _ = writeln!(
                s,
                "time: plain {:.3}s, secure {:.3}s",
                self.plain_time.as_secs_f64(),
                self.secure_time.as_secs_f64()
            );
        }
        s
    }

    /// Writes `histogram.csv`, `values.csv`, `summary.txt` and `report.toml`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.histogram.write_csv(std::fs::File::create(dir.join("histogram.csv"))?)?;

        let mut wtr = csv::Writer::from_path(dir.join("values.csv"))?;
        wtr.write_record(["kind", "index", "plain", "secure", "abs_error"])?;
        let groups = [
            ("y", &self.plain.state.y, &self.secure.state.y),
            ("theta", &self.plain.state.theta, &self.secure.state.theta),
            ("delta", &self.plain.state.delta, &self.secure.state.delta),
        ];
        for (kind, a, b) in groups {
            for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
                wtr.write_record([
                    kind.to_string(),
                    i.to_string(),
                    format!("{x:.9}"),
                    format!("{y:.9}"),
                    format!("{:.3e}", (x - y).abs()),
                ])?;
            }
        }
        wtr.flush()?;

        std::fs::write(dir.join("summary.txt"), self.summary(false))?;
        let toml = toml::to_string(self).map_err(|e| crate::Error::Config(e.to_string()))?;
        std::fs::write(dir.join("report.toml"), toml)?;
        Ok(())
    }
}

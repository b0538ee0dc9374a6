//! CSV ingestion of answer matrices and ground truth.
//!
//! Answers: header `source_id,fact_id,answer`, one row per (source, fact).
//! Missing pairs count as abstentions. Ids are arbitrary strings mapped to
//! dense indices in sorted order (numeric ids sort numerically).
//!
//! Ground truth: header `fact_id,label` with label in {-1, 1}.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::truth::AnswerMatrix;

pub const ANSWER_HEADER: [&str; 3] = ["source_id", "fact_id", "answer"];
pub const TRUTH_HEADER: [&str; 2] = ["fact_id", "label"];

#[derive(Clone, Debug)]
pub struct Dataset {
    pub answers: AnswerMatrix,
    pub source_ids: Vec<String>,
    pub fact_ids: Vec<String>,
}

impl Dataset {
    pub fn fact_index(&self) -> HashMap<&str, usize> {
        self.fact_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

fn id_order(a: &String, b: &String) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn dictionary(ids: impl Iterator<Item = String>) -> (Vec<String>, HashMap<String, usize>) {
    let mut list: Vec<String> = ids.collect();
    list.sort_by(id_order);
    list.dedup();
    let map = list.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (list, map)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, want: &[&str], path: &str) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got != want {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: format!("expected header '{}', found '{}'", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

pub fn read_answers<R: Read>(reader: R, path: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &ANSWER_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |reason: String| Error::Parse { path: path.into(), line, reason };
        if rec.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", rec.len())));
        }
        let answer: i8 = rec[2]
            .parse()
            .ok()
            .filter(|v| (-1..=1).contains(v))
            .ok_or_else(|| err(format!("answer '{}' is not -1, 0 or 1", &rec[2])))?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(err("empty id".into()));
        }
        rows.push((rec[0].to_string(), rec[1].to_string(), answer, line));
    }
    let (source_ids, smap) = dictionary(rows.iter().map(|r| r.0.clone()));
    let (fact_ids, fmap) = dictionary(rows.iter().map(|r| r.1.clone()));
    let (n, k) = (source_ids.len(), fact_ids.len());
    let mut values = vec![0i8; n * k];
    let mut seen: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (s, f, a, line) in rows {
        let (i, j) = (smap[&s], fmap[&f]);
        if let Some(first) = seen.insert((i, j), line) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                reason: format!("duplicate answer of source '{s}' on fact '{f}' (first on line {first})"),
            });
        }
        values[i * k + j] = a;
    }
    let answers = AnswerMatrix::new(n, k, values).map_err(|e| match e {
        Error::Dataset(msg) => Error::Dataset(format!("{path}: {msg}")),
        other => other,
    })?;
    Ok(Dataset { answers, source_ids, fact_ids })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_answers(f, &path.display().to_string())
}

/// Labels aligned with the dataset's fact order. Every fact needs a label.
pub fn read_ground_truth<R: Read>(reader: R, path: &str, ds: &Dataset) -> Result<Vec<i8>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &TRUTH_HEADER, path)?;
    let index = ds.fact_index();
    let mut labels = vec![0i8; ds.fact_ids.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |reason: String| Error::Parse { path: path.into(), line, reason };
        if rec.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", rec.len())));
        }
        let label: i8 = match &rec[1] {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(err(format!("label '{other}' is not -1 or 1"))),
        };
        // labels for facts nobody answered are irrelevant
        if let Some(&j) = index.get(&rec[0]) {
            if labels[j] != 0 {
                return Err(err(format!("duplicate label for fact '{}'", &rec[0])));
            }
            labels[j] = label;
        }
    }
    if let Some(j) = labels.iter().position(|&l| l == 0) {
        return Err(Error::Dataset(format!("{path}: no label for fact '{}'", ds.fact_ids[j])));
    }
    Ok(labels)
}

pub fn load_ground_truth(path: &Path, ds: &Dataset) -> Result<Vec<i8>> {
    let f = std::fs::File::open(path)?;
    read_ground_truth(f, &path.display().to_string(), ds)
}

/// Writes non-zero answers with numeric ids.
pub fn write_answers<W: Write>(w: W, a: &AnswerMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ANSWER_HEADER)?;
    for i in 0..a.sources() {
        for j in 0..a.facts() {
            let v = a.get(i, j);
            if v != 0 {
                wtr.write_record([i.to_string(), j.to_string(), v.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_ground_truth<W: Write>(w: W, labels: &[i8]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRUTH_HEADER)?;
    for (j, l) in labels.iter().enumerate() {
        wtr.write_record([j.to_string(), l.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

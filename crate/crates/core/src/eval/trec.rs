use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Judgments, RunList};
use crate::error::{Error, Result};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses `qid iter docid grade` lines. `path` is only used in error messages.
pub fn parse_qrels(text: &str, path: &Path) -> Result<Judgments> {
    let mut judg = Judgments::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _iter, docid, grade] = fields[..] else {
            return Err(parse_error(path, lineno, format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: u32 = grade
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("grade {grade:?} is not a non-negative integer")))?;
        if judg.insert(qid, docid, grade).is_some() {
            return Err(parse_error(path, lineno, format!("duplicate judgment for ({qid}, {docid})")));
        }
    }
    Ok(judg)
}

/// Parses `qid Q0 docid rank score tag` lines. Each query's entries are
/// ordered by descending score; equal scores keep file order.
pub fn parse_run(text: &str, path: &Path) -> Result<RunList> {
    let mut per_query: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _q0, docid, rank, score, _tag] = fields[..] else {
            return Err(parse_error(path, lineno, format!("expected 6 fields, found {}", fields.len())));
        };
        rank.parse::<u64>()
            .map_err(|_| parse_error(path, lineno, format!("rank {rank:?} is not an integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_error(path, lineno, format!("score {score:?} is not a finite number")))?;
        if !seen.insert((qid.to_string(), docid.to_string())) {
            return Err(parse_error(path, lineno, format!("duplicate document {docid} for query {qid}")));
        }
        per_query.entry(qid.to_string()).or_default().push((docid.to_string(), score));
    }
    let mut run = RunList::new();
    for (qid, mut ranked) in per_query {
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        run.insert(qid, ranked)?;
    }
    Ok(run)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::from)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Judgments> {
    let path = path.as_ref();
    parse_qrels(&read(path)?, path)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunList> {
    let path = path.as_ref();
    parse_run(&read(path)?, path)
}

pub fn write_qrels(mut out: impl Write, judg: &Judgments) -> Result<()> {
    for (q, d, g) in judg.iter() {
        writeln!(out, "{q} 0 {d} {g}")?;
    }
    Ok(())
}

/// Writes ranks starting at 1; scores use shortest round-trip formatting.
pub fn write_run(mut out: impl Write, run: &RunList, tag: &str) -> Result<()> {
    for (q, ranked) in run.iter() {
        for (i, (d, s)) in ranked.iter().enumerate() {
            writeln!(out, "{q} Q0 {d} {} {s} {tag}", i + 1)?;
        }
    }
    Ok(())
}

//! Ranked-retrieval evaluation: nDCG@k (gain `2^g - 1`, discount
//! `log2(rank + 1)`) and Recall@k, with TREC-style qrels and run files.
//!
//! Only queries that appear in the run and have at least one relevant
//! judgment are scored. The others are counted in the report.

mod trec;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

pub use trec::{load_qrels, load_run, parse_qrels, parse_run, write_qrels, write_run};

use crate::error::{Error, Result};

/// Graded relevance; absent pairs have grade zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Judgments {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Judgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) -> Option<u32> {
        self.grades.entry(query.into()).or_default().insert(doc.into(), grade)
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.grades
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn for_query(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query)
    }

    pub fn num_relevant(&self, query: &str) -> usize {
        self.grades
            .get(query)
            .map_or(0, |docs| docs.values().filter(|&&g| g > 0).count())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.grades
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }
}

/// Per query, documents in rank order with non-increasing scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunList {
    ranked: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one query's ranking. Rejects duplicate documents, non-finite
    /// scores, and scores that increase down the list.
    pub fn insert(&mut self, query: impl Into<String>, ranked: Vec<(String, f64)>) -> Result<()> {
        let query = query.into();
        let mut seen = HashSet::with_capacity(ranked.len());
        for (doc, score) in &ranked {
            if !score.is_finite() {
                return Err(Error::Config(format!("non-finite score for ({query}, {doc})")));
            }
            if !seen.insert(doc.as_str()) {
                return Err(Error::Config(format!("duplicate document {doc} for query {query}")));
            }
        }
        if ranked.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::Config(format!("scores for query {query} are not in rank order")));
        }
        self.ranked.insert(query, ranked);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[(String, f64)]> {
        self.ranked.get(query).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.ranked.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.ranked.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

fn scored_queries<'a>(run: &'a RunList, judg: &'a Judgments) -> impl Iterator<Item = (&'a str, &'a [(String, f64)])> {
    run.iter().filter(move |(q, _)| judg.num_relevant(q) > 0)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    // rank is 1-based
    ((rank + 1) as f64).log2()
}

/// nDCG at cutoff `k` for every scored query.
pub fn ndcg_at_k(run: &RunList, judg: &Judgments, k: usize) -> BTreeMap<String, f64> {
    assert!(k >= 1, "cutoff must be at least 1");
    scored_queries(run, judg)
        .map(|(q, ranked)| {
            let dcg: f64 = ranked
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, (d, _))| gain(judg.grade(q, d)) / discount(i + 1))
                .sum();
            let mut ideal: Vec<u32> = judg
                .for_query(q)
                .map(|docs| docs.values().copied().filter(|&g| g > 0).collect())
                .unwrap_or_default();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            let idcg: f64 = ideal
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, &g)| gain(g) / discount(i + 1))
                .sum();
            (q.to_string(), dcg / idcg)
        })
        .collect()
}

/// Fraction of relevant documents retrieved in the top `k`.
pub fn recall_at_k(run: &RunList, judg: &Judgments, k: usize) -> BTreeMap<String, f64> {
    assert!(k >= 1, "cutoff must be at least 1");
    scored_queries(run, judg)
        .map(|(q, ranked)| {
            let hits = ranked.iter().take(k).filter(|(d, _)| judg.grade(q, d) > 0).count();
            (q.to_string(), hits as f64 / judg.num_relevant(q) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg(usize),
    Recall(usize),
}

impl Metric {
    pub fn compute(self, run: &RunList, judg: &Judgments) -> BTreeMap<String, f64> {
        match self {
            Metric::Ndcg(k) => ndcg_at_k(run, judg, k),
            Metric::Recall(k) => recall_at_k(run, judg, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown metric {s:?}; expected ndcg@K or recall@K"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match name.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "recall" => Ok(Metric::Recall(k)),
            _ => Err(bad()),
        }
    }
}

/// Per-query values plus the macro average under the key `"all"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    /// Run queries whose judgments contain no relevant document.
    pub excluded_no_relevant: usize,
    /// Run queries with no judgments at all.
    pub unjudged: usize,
    /// Judged queries with relevant documents that the run never mentions.
    pub missing_from_run: usize,
}

impl EvalReport {
    pub fn warnings(&self) -> usize {
        self.excluded_no_relevant + self.unjudged + self.missing_from_run
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics.get(&metric.to_string()).and_then(|m| m.get("all")).copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.metrics).expect("finite metric values")
    }
}

pub fn evaluate_run(run: &RunList, judg: &Judgments, metrics: &[Metric]) -> EvalReport {
    let mut report = EvalReport::default();
    for q in run.queries() {
        match judg.for_query(q) {
            None => report.unjudged += 1,
            Some(_) if judg.num_relevant(q) == 0 => report.excluded_no_relevant += 1,
            Some(_) => {}
        }
    }
    report.missing_from_run = judg
        .queries()
        .filter(|q| judg.num_relevant(q) > 0 && run.get(q).is_none())
        .count();
    for &metric in metrics {
        let mut per_query = metric.compute(run, judg);
        if per_query.is_empty() {
            continue;
        }
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        per_query.insert("all".to_string(), mean);
        report.metrics.insert(metric.to_string(), per_query);
    }
    report
}

#[cfg(test)]
mod tests;

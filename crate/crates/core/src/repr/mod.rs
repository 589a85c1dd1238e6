//! Sparse lexical representations.
//!
//! A [`SparseVec`] stores strictly positive weights keyed by [`TermKey`], sorted
//! by key. Every operation here is exact and total: no quantization, no
//! approximate products. Ties are always broken toward the smaller key so that
//! every downstream output is byte-deterministic.

pub mod jsonl;

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Which vocabulary a term lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    /// The shared English lexicon the head decodes onto.
    English,
    /// The input tokenizer's vocabulary, echoed by the source view.
    Source,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::English => "english",
            Namespace::Source => "source",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Namespace::English => 0,
            Namespace::Source => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Namespace::English),
            1 => Some(Namespace::Source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub namespace: Namespace,
    pub token_id: u32,
}

impl TermKey {
    pub const fn english(token_id: u32) -> Self {
        Self {
            namespace: Namespace::English,
            token_id,
        }
    }

    pub const fn source(token_id: u32) -> Self {
        Self {
            namespace: Namespace::Source,
            token_id,
        }
    }
}

impl fmt::Display for TermKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.namespace {
            Namespace::English => 'e',
            Namespace::Source => 's',
        };
        write!(f, "{prefix}:{}", self.token_id)
    }
}

/// Map from term to strictly positive weight, sorted by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(TermKey, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from arbitrary pairs. Non-positive weights are dropped
    /// and duplicate keys keep their maximum weight.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TermKey, f64)>,
    {
        let mut entries = Vec::new();
        for (key, weight) in pairs {
            if !weight.is_finite() {
                return Err(Error::NonFiniteWeight {
                    key: key.to_string(),
                    weight,
                });
            }
            if weight > 0.0 {
                entries.push((key, weight));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|later, kept| {
            if later.0 == kept.0 {
                kept.1 = kept.1.max(later.1);
                true
            } else {
                false
            }
        });
        Ok(Self { entries })
    }

    /// Wraps entries already known to be sorted, unique, finite and positive.
    pub(crate) fn from_sorted_unchecked(entries: Vec<(TermKey, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|(_, w)| w.is_finite() && *w > 0.0));
        Self { entries }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermKey, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = TermKey> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }

    pub fn entries(&self) -> &[(TermKey, f64)] {
        &self.entries
    }

    pub fn get(&self, key: TermKey) -> Option<f64> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(&key))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn all_in(&self, namespace: Namespace) -> bool {
        self.entries.iter().all(|(k, _)| k.namespace == namespace)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Keeps the `k` heaviest entries, breaking weight ties toward the smaller key.
    pub fn top_k(&self, k: usize) -> SparseVec {
        if k >= self.entries.len() {
            return self.clone();
        }
        let mut ranked = self.entries.clone();
        ranked.sort_by(weight_desc_key_asc);
        ranked.truncate(k);
        ranked.sort_by(|a, b| a.0.cmp(&b.0));
        SparseVec { entries: ranked }
    }

    /// Entries ordered by weight descending, then key ascending.
    pub fn ranked(&self) -> Vec<(TermKey, f64)> {
        let mut ranked = self.entries.clone();
        ranked.sort_by(weight_desc_key_asc);
        ranked
    }

    pub fn merge_max(&self, other: &SparseVec) -> SparseVec {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1.max(b[j].1)));
                    i += 1;
                    j += 1;
                }
            }
        }
        SparseVec { entries: out }
    }

    /// Keeps only entries accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(TermKey, f64) -> bool) -> SparseVec {
        SparseVec {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|&(k, w)| keep(k, w))
                .collect(),
        }
    }

    /// Rounds every weight through `f32`, the precision of the on-disk index.
    pub fn quantized(&self) -> SparseVec {
        let entries = self
            .entries
            .iter()
            .map(|&(k, w)| (k, w as f32 as f64))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        SparseVec { entries }
    }
}

pub(crate) fn weight_desc_key_asc(a: &(TermKey, f64), b: &(TermKey, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn from_pairs<I>(pairs: I) -> Result<SparseVec>
where
    I: IntoIterator<Item = (TermKey, f64)>,
{
    SparseVec::from_pairs(pairs)
}

pub fn sparse_dot(a: &SparseVec, b: &SparseVec) -> f64 {
    a.dot(b)
}

pub fn sparse_l1(a: &SparseVec) -> f64 {
    a.l1()
}

pub fn top_k_terms(a: &SparseVec, k: usize) -> SparseVec {
    a.top_k(k)
}

pub fn merge_max(a: &SparseVec, b: &SparseVec) -> SparseVec {
    a.merge_max(b)
}

/// English and source views of one text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualViewRepr {
    english: SparseVec,
    source: SparseVec,
}

impl DualViewRepr {
    pub fn new(english: SparseVec, source: SparseVec) -> Result<Self> {
        if !english.all_in(Namespace::English) {
            return Err(Error::Config(
                "english view holds a source-namespace key".into(),
            ));
        }
        if !source.all_in(Namespace::Source) {
            return Err(Error::Config(
                "source view holds an english-namespace key".into(),
            ));
        }
        Ok(Self { english, source })
    }

    /// Splits a mixed-namespace vector into its two views.
    pub fn from_combined(all: &SparseVec) -> Self {
        let split = all
            .entries
            .partition_point(|(k, _)| k.namespace == Namespace::English);
        Self {
            english: SparseVec::from_sorted_unchecked(all.entries[..split].to_vec()),
            source: SparseVec::from_sorted_unchecked(all.entries[split..].to_vec()),
        }
    }

    pub fn english(&self) -> &SparseVec {
        &self.english
    }

    pub fn source(&self) -> &SparseVec {
        &self.source
    }

    pub fn english_only(&self) -> DualViewRepr {
        DualViewRepr {
            english: self.english.clone(),
            source: SparseVec::new(),
        }
    }

    /// Both views as one vector; English keys sort first.
    pub fn combined(&self) -> SparseVec {
        let mut entries = self.english.entries.clone();
        entries.extend_from_slice(&self.source.entries);
        SparseVec::from_sorted_unchecked(entries)
    }

    pub fn nnz(&self) -> usize {
        self.english.nnz() + self.source.nnz()
    }

    pub fn l1(&self) -> f64 {
        self.english.l1() + self.source.l1()
    }

    pub fn quantized(&self) -> DualViewRepr {
        DualViewRepr {
            english: self.english.quantized(),
            source: self.source.quantized(),
        }
    }
}

/// Query-document score: the English-view and source-view dot products, summed
/// with equal weight.
pub fn score_pair(q: &DualViewRepr, d: &DualViewRepr) -> f64 {
    q.english.dot(&d.english) + q.source.dot(&d.source)
}

//! Impact-carrying inverted index over dual-view representations.
//!
//! Documents are pruned, rounded to `f32` and inverted into one posting list
//! per [`TermKey`]. [`search`] walks the query's lists document-at-a-time and
//! accumulates the English and source partial sums separately, in key order,
//! so its scores are bit-identical to [`brute_force_search`].

mod format;
mod prune;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

pub use format::{read_index, write_index, FORMAT_VERSION, MAGIC};
pub use prune::{count_kept, prune, MassBasis, PruneSpec};

use crate::error::{Error, Result};
use crate::repr::{score_pair, DualViewRepr, Namespace, TermKey};

/// Vocabulary sizes recorded in the index header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VocabSizes {
    pub english: u32,
    pub source: u32,
}

impl VocabSizes {
    fn get(&self, ns: Namespace) -> u32 {
        match ns {
            Namespace::English => self.english,
            Namespace::Source => self.source,
        }
    }

    /// Smallest sizes covering every key in `docs`.
    pub fn covering<'a>(docs: impl IntoIterator<Item = &'a DualViewRepr>) -> Self {
        let mut sizes = VocabSizes::default();
        for d in docs {
            if let Some((k, _)) = d.english().entries().last() {
                sizes.english = sizes.english.max(k.token_id + 1);
            }
            if let Some((k, _)) = d.source().entries().last() {
                sizes.source = sizes.source.max(k.token_id + 1);
            }
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    key: TermKey,
    docs: Vec<u32>,
    weights: Vec<f32>,
    max_weight: f32,
}

impl PostingList {
    pub(crate) fn new(key: TermKey, docs: Vec<u32>, weights: Vec<f32>) -> Self {
        let max_weight = weights.iter().copied().fold(0.0, f32::max);
        Self {
            key,
            docs,
            weights,
            max_weight,
        }
    }

    pub fn key(&self) -> TermKey {
        self.key
    }

    pub fn docs(&self) -> &[u32] {
        &self.docs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn max_weight(&self) -> f32 {
        self.max_weight
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn weight_of(&self, ordinal: u32) -> Option<f32> {
        self.docs.binary_search(&ordinal).ok().map(|i| self.weights[i])
    }
}

/// Frozen index. There are no mutating methods; build a new one to change it.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocab: VocabSizes,
    /// Sorted by key.
    lists: Vec<PostingList>,
    doc_ids: Vec<String>,
    doc_term_counts: Vec<u32>,
}

impl InvertedIndex {
    pub fn vocab_sizes(&self) -> VocabSizes {
        self.vocab
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.lists.len()
    }

    pub fn doc_id(&self, ordinal: u32) -> Option<&str> {
        self.doc_ids.get(ordinal as usize).map(String::as_str)
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Number of terms the document kept after pruning.
    pub fn doc_term_count(&self, ordinal: u32) -> Option<u32> {
        self.doc_term_counts.get(ordinal as usize).copied()
    }

    pub fn postings(&self, key: TermKey) -> Option<&PostingList> {
        self.lists
            .binary_search_by(|l| l.key.cmp(&key))
            .ok()
            .map(|i| &self.lists[i])
    }

    pub fn lists(&self) -> &[PostingList] {
        &self.lists
    }

    /// Stored weight of `key` in document `ordinal`.
    pub fn lookup(&self, key: TermKey, ordinal: u32) -> Option<f32> {
        self.postings(key).and_then(|l| l.weight_of(ordinal))
    }

    pub(crate) fn from_parts(
        vocab: VocabSizes,
        lists: Vec<PostingList>,
        doc_ids: Vec<String>,
        doc_term_counts: Vec<u32>,
    ) -> Self {
        Self {
            vocab,
            lists,
            doc_ids,
            doc_term_counts,
        }
    }
}

/// Builds an index whose header vocabulary sizes just cover the documents.
pub fn build_index<'a, I>(docs: I, spec: &PruneSpec) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (&'a str, &'a DualViewRepr)>,
{
    let docs: Vec<_> = docs.into_iter().collect();
    let vocab = VocabSizes::covering(docs.iter().map(|(_, r)| *r));
    build_index_with_vocab(docs, spec, vocab)
}

/// Builds an index, rejecting duplicate ids and keys outside `vocab`.
pub fn build_index_with_vocab<'a, I>(docs: I, spec: &PruneSpec, vocab: VocabSizes) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (&'a str, &'a DualViewRepr)>,
{
    spec.validate()?;
    let mut seen = HashSet::new();
    let mut doc_ids = Vec::new();
    let mut doc_term_counts = Vec::new();
    let mut triples: Vec<(TermKey, u32, f32)> = Vec::new();
    for (ordinal, (id, repr)) in docs.into_iter().enumerate() {
        if !seen.insert(id) {
            return Err(Error::DuplicateDoc(id.to_string()));
        }
        let ordinal = u32::try_from(ordinal).map_err(|_| Error::Config("more than u32::MAX documents".into()))?;
        let kept = prune(repr, spec).quantized().combined();
        for (key, w) in kept.iter() {
            let size = vocab.get(key.namespace);
            if key.token_id >= size {
                return Err(Error::TokenOutOfRange {
                    namespace: key.namespace.as_str(),
                    id: key.token_id,
                    size: size as usize,
                });
            }
            triples.push((key, ordinal, w as f32));
        }
        doc_ids.push(id.to_string());
        doc_term_counts.push(kept.nnz() as u32);
    }
    // Ordinals are already ascending within each key; a stable sort keeps them.
    triples.sort_by_key(|t| t.0);
    let mut lists: Vec<PostingList> = Vec::new();
    let mut start = 0;
    while start < triples.len() {
        let key = triples[start].0;
        let end = start + triples[start..].partition_point(|t| t.0 == key);
        let (docs, weights) = triples[start..end].iter().map(|t| (t.1, t.2)).unzip();
        lists.push(PostingList::new(key, docs, weights));
        start = end;
    }
    Ok(InvertedIndex {
        vocab,
        lists,
        doc_ids,
        doc_term_counts,
    })
}

struct Hit<'a> {
    score: f64,
    id: &'a str,
}

impl Ord for Hit<'_> {
    /// Greater is better: higher score, then smaller id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(self.id))
    }
}

impl PartialOrd for Hit<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Hit<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hit<'_> {}

struct TopN<'a> {
    n: usize,
    heap: BinaryHeap<Reverse<Hit<'a>>>,
}

impl<'a> TopN<'a> {
    fn new(n: usize) -> Self {
        Self {
            n,
            heap: BinaryHeap::with_capacity(n.min(1 << 16) + 1),
        }
    }

    fn offer(&mut self, hit: Hit<'a>) {
        if self.heap.len() < self.n {
            self.heap.push(Reverse(hit));
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if hit > worst.0 {
                *worst = Reverse(hit);
            }
        }
    }

    fn into_ranked(self) -> Vec<(String, f64)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(h)| (h.id.to_string(), h.score))
            .collect()
    }
}

/// Exact top-`top_n` retrieval over every document sharing a term with the
/// pruned query. Ties are broken by external id ascending.
pub fn search(idx: &InvertedIndex, q: &DualViewRepr, top_n: usize, q_spec: &PruneSpec) -> Vec<(String, f64)> {
    if top_n == 0 {
        return Vec::new();
    }
    let q = prune(q, q_spec).combined();
    // Cursors in key order, so per-view sums follow the same order as a merge dot product.
    let mut cursors: Vec<(Namespace, f64, &PostingList, usize)> = q
        .iter()
        .filter_map(|(k, w)| idx.postings(k).map(|l| (k.namespace, w, l, 0)))
        .collect();
    let mut top = TopN::new(top_n);
    loop {
        let Some(doc) = cursors.iter().filter_map(|c| c.2.docs.get(c.3)).min().copied() else {
            break;
        };
        let (mut eng, mut src) = (0.0f64, 0.0f64);
        for (ns, qw, list, pos) in cursors.iter_mut() {
            if list.docs.get(*pos) == Some(&doc) {
                let term = *qw * list.weights[*pos] as f64;
                match ns {
                    Namespace::English => eng += term,
                    Namespace::Source => src += term,
                }
                *pos += 1;
            }
        }
        top.offer(Hit {
            score: eng + src,
            id: &idx.doc_ids[doc as usize],
        });
    }
    top.into_ranked()
}

/// Linear-scan reference for [`search`]: prunes and rounds each document the
/// way [`build_index`] does, then scores with [`score_pair`].
pub fn brute_force_search<'a, I>(
    docs: I,
    q: &DualViewRepr,
    top_n: usize,
    doc_spec: &PruneSpec,
    q_spec: &PruneSpec,
) -> Vec<(String, f64)>
where
    I: IntoIterator<Item = (&'a str, &'a DualViewRepr)>,
{
    let q = prune(q, q_spec);
    let q_keys: HashSet<TermKey> = q.combined().keys().collect();
    let mut scored: Vec<(String, f64)> = docs
        .into_iter()
        .filter_map(|(id, d)| {
            let d = prune(d, doc_spec).quantized();
            let shares = d.combined().keys().any(|k| q_keys.contains(&k));
            shares.then(|| (id.to_string(), score_pair(&q, &d)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_n);
    scored
}

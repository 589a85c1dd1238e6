use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synth::{Concept, SynthLang, SynthLexicon};
use crate::error::{Error, Result};
use crate::eval::Judgments;
use crate::lexecho::TokenSeq;
use crate::losses::{Candidate, CandidateSet};

/// A synthetic text: foreign tokens for the student, the English rendering for
/// the teacher, and the concepts used for relevance. Documents are written in
/// `xb` and queries in `xa`, so words only match through their English view.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalText {
    pub id: String,
    pub source: TokenSeq,
    /// English words only; entities have no English token.
    pub english: TokenSeq,
    pub concepts: BTreeSet<Concept>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub docs: usize,
    pub train_queries: usize,
    pub eval_queries: usize,
    /// Negatives per training candidate set.
    pub negatives: usize,
    /// Words per document, inclusive range.
    pub doc_words: (usize, usize),
    /// Entities per document, inclusive range.
    pub doc_entities: (usize, usize),
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            docs: 300,
            train_queries: 120,
            eval_queries: 60,
            negatives: 7,
            doc_words: (4, 8),
            doc_entities: (0, 2),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.docs > self.negatives
            && self.train_queries > 0
            && self.eval_queries > 0
            && self.negatives > 0
            && self.doc_words.0 >= 2
            && self.doc_words.0 <= self.doc_words.1
            && self.doc_entities.0 <= self.doc_entities.1;
        if !ok {
            return Err(Error::Config(format!("invalid retrieval config {self:?}")));
        }
        Ok(())
    }
}

/// Temperature of the synthetic cross-encoder. Raw IDF sums give candidate
/// distributions so peaked that distillation mostly inflates weights.
pub const TEACHER_SCORE_SCALE: f64 = 0.5;

/// Documents, training queries and held-out queries over one lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSet {
    pub docs: Vec<RetrievalText>,
    pub train_queries: Vec<RetrievalText>,
    pub eval_queries: Vec<RetrievalText>,
    idf: BTreeMap<Concept, f64>,
}

fn render(lex: &SynthLexicon, lang: SynthLang, id: String, concepts: &[Concept]) -> Result<RetrievalText> {
    let english: Vec<u32> = concepts
        .iter()
        .filter_map(|c| match *c {
            Concept::Word(e) => Some(e),
            Concept::Entity(_) => None,
        })
        .collect();
    Ok(RetrievalText {
        id,
        source: lex.spell(lang, concepts)?,
        english: TokenSeq::new(english, "en")?,
        concepts: concepts.iter().copied().collect(),
    })
}

fn gen_query(lex: &SynthLexicon, rng: &mut ChaCha8Rng, id: String, docs: &[RetrievalText]) -> Result<RetrievalText> {
    // Two concepts from an anchor document guarantee one relevant document;
    // the entity, when present, is always one of them.
    let anchor = &docs[rng.gen_range(0..docs.len())];
    let (entities, words): (Vec<Concept>, Vec<Concept>) =
        anchor.concepts.iter().partition(|c| matches!(c, Concept::Entity(_)));
    let mut picked: Vec<Concept> = Vec::new();
    if let Some(e) = entities.choose(rng) {
        picked.push(*e);
        picked.push(*words.choose(rng).expect("documents hold at least two words"));
    } else {
        picked.extend(words.choose_multiple(rng, 2).copied());
    }
    let extra = rng.gen_range(1..=2);
    while picked.len() < 2 + extra {
        let w = Concept::Word(*lex.words().choose(rng).expect("lexicon has words"));
        if !picked.contains(&w) {
            picked.push(w);
        }
    }
    picked.shuffle(rng);
    render(lex, SynthLang::Xa, id, &picked)
}

impl RetrievalSet {
    pub fn generate(lex: &SynthLexicon, seed: u64, cfg: &RetrievalConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::with_capacity(cfg.docs);
        for i in 0..cfg.docs {
            let n_words = rng.gen_range(cfg.doc_words.0..=cfg.doc_words.1).min(lex.words().len());
            let n_ent = rng.gen_range(cfg.doc_entities.0..=cfg.doc_entities.1);
            let mut concepts: Vec<Concept> = lex
                .words()
                .choose_multiple(&mut rng, n_words)
                .map(|&e| Concept::Word(e))
                .collect();
            concepts.extend(lex.entities().choose_multiple(&mut rng, n_ent).into_iter().map(Concept::Entity));
            concepts.shuffle(&mut rng);
            docs.push(render(lex, SynthLang::Xb, format!("d{i:04}"), &concepts)?);
        }
        let train_queries = (0..cfg.train_queries)
            .map(|i| gen_query(lex, &mut rng, format!("tq{i:04}"), &docs))
            .collect::<Result<Vec<_>>>()?;
        let eval_queries = (0..cfg.eval_queries)
            .map(|i| gen_query(lex, &mut rng, format!("q{i:04}"), &docs))
            .collect::<Result<Vec<_>>>()?;

        let mut df: BTreeMap<Concept, usize> = BTreeMap::new();
        for d in &docs {
            for &c in &d.concepts {
                *df.entry(c).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df.into_iter().map(|(c, f)| (c, (n / f as f64).ln())).collect();
        Ok(Self {
            docs,
            train_queries,
            eval_queries,
            idf,
        })
    }

    pub fn idf(&self, c: Concept) -> f64 {
        self.idf.get(&c).copied().unwrap_or(0.0)
    }

    /// Oracle relevance: at least two shared concepts.
    pub fn is_relevant(q: &RetrievalText, d: &RetrievalText) -> bool {
        q.concepts.intersection(&d.concepts).count() >= 2
    }

    /// Cross-encoder stand-in: summed IDF of the shared concepts, scaled by
    /// [`TEACHER_SCORE_SCALE`].
    pub fn teacher_score(&self, q: &RetrievalText, d: &RetrievalText) -> f64 {
        TEACHER_SCORE_SCALE * q.concepts.intersection(&d.concepts).map(|&c| self.idf(c)).sum::<f64>()
    }

    pub fn judgments(&self, queries: &[RetrievalText]) -> Judgments {
        let mut j = Judgments::new();
        for q in queries {
            for d in &self.docs {
                if Self::is_relevant(q, d) {
                    j.insert(q.id.clone(), d.id.clone(), 1);
                }
            }
        }
        j
    }

    /// One set per training query: the teacher's best relevant document, then
    /// negatives drawn half from documents sharing one concept and the rest at
    /// random among non-relevant documents.
    pub fn candidate_sets(&self, seed: u64, negatives: usize) -> Vec<CandidateSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6361_6e64);
        let mut sets = Vec::with_capacity(self.train_queries.len());
        for q in &self.train_queries {
            let scored: Vec<(f64, &RetrievalText)> = self.docs.iter().map(|d| (self.teacher_score(q, d), d)).collect();
            let Some(&(_, pos)) = scored
                .iter()
                .filter(|(_, d)| Self::is_relevant(q, d))
                .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.id.cmp(&a.1.id)))
            else {
                continue;
            };
            let hard: Vec<&RetrievalText> = self
                .docs
                .iter()
                .filter(|d| q.concepts.intersection(&d.concepts).count() == 1)
                .collect();
            let mut chosen: Vec<&RetrievalText> = hard.choose_multiple(&mut rng, negatives / 2).copied().collect();
            let rest: Vec<&RetrievalText> = self
                .docs
                .iter()
                .filter(|d| !Self::is_relevant(q, d) && !chosen.iter().any(|c| c.id == d.id))
                .collect();
            chosen.extend(rest.choose_multiple(&mut rng, negatives - chosen.len()).copied());
            let mut candidates = vec![Candidate {
                doc_id: pos.id.clone(),
                teacher: self.teacher_score(q, pos),
                student: 0.0,
                positive: true,
            }];
            candidates.extend(chosen.into_iter().map(|d| Candidate {
                doc_id: d.id.clone(),
                teacher: self.teacher_score(q, d),
                student: 0.0,
                positive: false,
            }));
            sets.push(CandidateSet {
                query_id: q.id.clone(),
                candidates,
            });
        }
        sets
    }
}

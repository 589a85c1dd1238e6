use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lexecho::{logsat, HeadDims, TokenSeq};
use crate::repr::{SparseVec, TermKey};
use crate::vocab::{Vocab, UNK_TOKEN};

const ENGLISH_WORDS: [&str; 64] = [
    "river", "bank", "money", "water", "city", "king", "queen", "music", "song", "light", "dark", "house", "door",
    "road", "car", "train", "ship", "sea", "fish", "bird", "tree", "leaf", "stone", "fire", "snow", "rain", "wind",
    "sun", "moon", "star", "book", "page", "word", "school", "child", "mother", "father", "food", "bread", "salt",
    "gold", "iron", "war", "peace", "law", "court", "field", "farm", "horse", "dog", "cat", "milk", "wine", "glass",
    "paper", "clock", "bridge", "tower", "market", "church", "island", "forest", "desert", "mountain",
];

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ru", "te", "va", "no", "si", "pe", "du", "ga", "ho", "zi", "fa", "be", "wu",
];

/// One concept a text can mention: an English-translatable word or a named
/// entity that only exists in the source vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Concept {
    Word(u32),
    Entity(u32),
}

/// The two synthetic source languages. Each has its own spelling of every
/// content word; entity tokens are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SynthLang {
    Xa,
    Xb,
}

impl SynthLang {
    pub const ALL: [SynthLang; 2] = [SynthLang::Xa, SynthLang::Xb];

    pub fn tag(self) -> &'static str {
        match self {
            SynthLang::Xa => "xa",
            SynthLang::Xb => "xb",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Fixed bilingual lexicon for the synthetic world.
///
/// Half of the English vocabulary (a seeded subset) is content words. Source
/// ids: 0 is `[UNK]`, then the `xa` spellings, then the `xb` spellings (each a
/// seeded permutation of the content words), then named entities.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLexicon {
    v_e: usize,
    source_vocab: usize,
    /// Content words, ascending English ids.
    words: Vec<u32>,
    /// Per language: English id -> source id, for content words only.
    foreign: [Vec<Option<u32>>; 2],
    /// Source id -> English id, for word spellings only.
    english: Vec<Option<u32>>,
}

impl SynthLexicon {
    pub fn new(seed: u64, dims: HeadDims) -> Result<Self> {
        let n_words = dims.v_e / 2;
        if n_words == 0 || dims.v_e > ENGLISH_WORDS.len() || dims.source_vocab < 2 * n_words + 2 {
            return Err(Error::Config(format!(
                "synthetic lexicon needs 2 <= v_e <= {} and source_vocab >= v_e + 2, got v_e = {}, source_vocab = {}",
                ENGLISH_WORDS.len(),
                dims.v_e,
                dims.source_vocab
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c65_7869_636f_6e);
        let mut words: Vec<u32> = (0..dims.v_e as u32).collect::<Vec<_>>().choose_multiple(&mut rng, n_words).copied().collect();
        words.sort_unstable();
        let mut foreign = [vec![None; dims.v_e], vec![None; dims.v_e]];
        let mut english = vec![None; dims.source_vocab];
        for lang in SynthLang::ALL {
            let first = 1 + lang.index() * n_words;
            let mut slots: Vec<u32> = (first as u32..(first + n_words) as u32).collect();
            slots.shuffle(&mut rng);
            for (&e, &s) in words.iter().zip(&slots) {
                foreign[lang.index()][e as usize] = Some(s);
                english[s as usize] = Some(e);
            }
        }
        Ok(Self {
            v_e: dims.v_e,
            source_vocab: dims.source_vocab,
            words,
            foreign,
            english,
        })
    }

    pub fn v_e(&self) -> usize {
        self.v_e
    }

    pub fn source_vocab_size(&self) -> usize {
        self.source_vocab
    }

    /// English ids that have source spellings.
    pub fn words(&self) -> &[u32] {
        &self.words
    }

    /// Source spelling of a content word, `None` for other English ids.
    pub fn foreign_of(&self, lang: SynthLang, english: u32) -> Option<u32> {
        self.foreign[lang.index()].get(english as usize).copied().flatten()
    }

    pub fn english_of(&self, source: u32) -> Option<u32> {
        self.english.get(source as usize).copied().flatten()
    }

    /// Source ids of the named entities.
    pub fn entities(&self) -> std::ops::Range<u32> {
        (1 + 2 * self.words.len()) as u32..self.source_vocab as u32
    }

    pub fn concept(&self, source: u32) -> Option<Concept> {
        match self.english_of(source) {
            Some(e) => Some(Concept::Word(e)),
            None if self.entities().contains(&source) => Some(Concept::Entity(source)),
            None => None,
        }
    }

    pub fn concepts(&self, seq: &TokenSeq) -> BTreeSet<Concept> {
        seq.tokens().iter().filter_map(|&t| self.concept(t)).collect()
    }

    /// Source tokens spelling `concepts` in `lang`, in order.
    pub fn spell(&self, lang: SynthLang, concepts: &[Concept]) -> Result<TokenSeq> {
        let tokens = concepts
            .iter()
            .map(|c| match *c {
                Concept::Word(e) => self.foreign_of(lang, e).ok_or_else(|| Error::TokenOutOfRange {
                    namespace: "english",
                    id: e,
                    size: self.v_e,
                }),
                Concept::Entity(s) => Ok(s),
            })
            .collect::<Result<Vec<_>>>()?;
        TokenSeq::new(tokens, lang.tag())
    }

    pub fn english_vocab(&self) -> Vocab {
        Vocab::new(ENGLISH_WORDS[..self.v_e].iter().copied()).expect("word list is unique")
    }

    /// Words are two-syllable spellings of their slot; entities get an
    /// `x`-prefixed three-syllable name.
    pub fn source_vocab(&self) -> Vocab {
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let first_entity = self.entities().start as usize;
        for s in 1..self.source_vocab {
            let word = if s < first_entity {
                format!("{}{}", SYLLABLES[s % 16], SYLLABLES[(s / 16) % 16])
            } else {
                format!("x{}{}{}", SYLLABLES[s % 16], SYLLABLES[(s / 16) % 16], SYLLABLES[(s / 7) % 16])
            };
            tokens.push(word);
        }
        Vocab::new(tokens).expect("generated names are unique")
    }
}

/// A foreign sentence and its English translation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBitextPair {
    pub id: String,
    pub source: TokenSeq,
    pub english: TokenSeq,
}

/// Random English sentences (3 to 12 content words) with foreign renderings,
/// alternating `xa` and `xb`. Every English token is emitted as its spelling,
/// in order; before each one a random entity is inserted with probability
/// `noise`, so about a `noise` fraction of foreign tokens are distractors.
/// Insertions per pair are capped at the English length.
pub fn gen_synth_bitext(lex: &SynthLexicon, seed: u64, count: usize, noise: f64) -> Result<Vec<SynthBitextPair>> {
    if count == 0 {
        return Err(Error::Config("bitext count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::Config(format!("noise probability {noise} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = lex.entities();
    (0..count)
        .map(|i| {
            let lang = SynthLang::ALL[i % 2];
            let len = rng.gen_range(3..=12);
            let english: Vec<u32> = (0..len).map(|_| *lex.words.choose(&mut rng).expect("lexicon has words")).collect();
            let mut source = Vec::with_capacity(2 * len);
            let mut inserted = 0;
            for &e in &english {
                while inserted < len && rng.gen_bool(noise) {
                    source.push(rng.gen_range(entities.clone()));
                    inserted += 1;
                }
                source.push(lex.foreign_of(lang, e).expect("content word"));
            }
            Ok(SynthBitextPair {
                id: format!("p{i:05}"),
                source: TokenSeq::new(source, lang.tag())?,
                english: TokenSeq::new(english, "en")?,
            })
        })
        .collect()
}

/// Fraction of foreign tokens that translate some English word.
pub fn mapped_agreement(lex: &SynthLexicon, corpus: &[SynthBitextPair]) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for pair in corpus {
        for &s in pair.source.tokens() {
            hits += usize::from(lex.english_of(s).is_some());
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

pub const TEACHER_PRESENT: f64 = 1.0;
pub const TEACHER_EXPANSION: f64 = 0.3;
pub const TEACHER_ABSENT: f64 = -0.5;

/// Fixed English-side teacher: present tokens score 1.0, their expansion
/// partners 0.3, everything else -0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTeacher {
    expansion: Vec<Option<u32>>,
}

impl SynthTeacher {
    pub fn without_expansion(v_e: usize) -> Self {
        Self {
            expansion: vec![None; v_e],
        }
    }

    /// Every token gets one partner distinct from itself.
    pub fn seeded(seed: u64, v_e: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_6163_6865_72);
        let expansion = (0..v_e as u32)
            .map(|j| {
                if v_e < 2 {
                    return None;
                }
                let other = rng.gen_range(0..v_e as u32 - 1);
                Some(if other >= j { other + 1 } else { other })
            })
            .collect();
        Self { expansion }
    }

    pub fn with_expansion(expansion: Vec<Option<u32>>) -> Result<Self> {
        let v_e = expansion.len();
        if let Some(bad) = expansion.iter().flatten().find(|&&p| p as usize >= v_e) {
            return Err(Error::TokenOutOfRange {
                namespace: "english",
                id: *bad,
                size: v_e,
            });
        }
        Ok(Self { expansion })
    }

    pub fn v_e(&self) -> usize {
        self.expansion.len()
    }

    pub fn partner(&self, token: u32) -> Option<u32> {
        self.expansion.get(token as usize).copied().flatten()
    }

    pub fn logits(&self, english: &TokenSeq) -> Result<Vec<f64>> {
        english.check_vocab(self.v_e())?;
        let mut logits = vec![TEACHER_ABSENT; self.v_e()];
        for &t in english.tokens() {
            if let Some(p) = self.partner(t) {
                logits[p as usize] = logits[p as usize].max(TEACHER_EXPANSION);
            }
        }
        for &t in english.tokens() {
            logits[t as usize] = TEACHER_PRESENT;
        }
        Ok(logits)
    }
}

/// Teacher logits for an English sequence and their log-saturated sparse view.
pub fn synth_teacher_encode(english: &TokenSeq, teacher: &SynthTeacher) -> Result<(Vec<f64>, SparseVec)> {
    let logits = teacher.logits(english)?;
    let sparse = SparseVec::from_pairs(
        logits
            .iter()
            .enumerate()
            .map(|(j, &x)| (TermKey::english(j as u32), logsat(x))),
    )?;
    Ok((logits, sparse))
}

use crate::error::{Error, Result};
use crate::vocab::{Vocab, UNK_TOKEN};

/// Source token ids of one input text. Never contains the ECHO row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<u32>,
    language: String,
}

impl TokenSeq {
    pub fn new(tokens: Vec<u32>, language: impl Into<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            tokens,
            language: language.into(),
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check_vocab(&self, size: usize) -> Result<()> {
        match self.tokens.iter().find(|&&t| t as usize >= size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                namespace: "source",
                id,
                size,
            }),
            None => Ok(()),
        }
    }
}

/// Greedy longest-match tokenizer over a source vocabulary with an `[UNK]` entry.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocab,
    unk: u32,
    max_token_chars: usize,
}

impl Tokenizer {
    pub fn new(vocab: Vocab) -> Result<Self> {
        let unk = vocab.id(UNK_TOKEN).ok_or(Error::MissingUnk)?;
        let max_token_chars = vocab.tokens().iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(Self {
            vocab,
            unk,
            max_token_chars,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    fn push_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let mut pos = 0;
        while pos < chars.len() {
            let start = chars[pos].0;
            let longest = (pos + 1..=chars.len().min(pos + self.max_token_chars))
                .rev()
                .find_map(|end| {
                    let stop = chars.get(end).map_or(word.len(), |c| c.0);
                    self.vocab.id(&word[start..stop]).map(|id| (end, id))
                });
            match longest {
                Some((end, id)) => {
                    out.push(id);
                    pos = end;
                }
                None => {
                    // The unmatched remainder of the word collapses to one UNK.
                    out.push(self.unk);
                    return;
                }
            }
        }
    }
}

/// Lowercases, splits on whitespace, then covers each word with the longest
/// vocabulary entries available; unmatched remainders become `[UNK]`.
pub fn toy_tokenize(text: &str, tokenizer: &Tokenizer) -> Result<TokenSeq> {
    let normalized = text.to_lowercase();
    let mut tokens = Vec::new();
    for word in normalized.split_whitespace() {
        tokenizer.push_word(word, &mut tokens);
    }
    TokenSeq::new(tokens, "und")
}

//! Plain-text vocabularies: one token per line, line number is the token id.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::repr::{Namespace, TermKey};

pub const UNK_TOKEN: &str = "[UNK]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!(
                    "vocabulary entry {i} ({tok:?}) is empty or contains whitespace"
                )));
            }
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::new(text.lines().map(str::trim_end)).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message,
            },
            other => other,
        })
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// The English lexicon plus the shared source tokenizer vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    pub english: Vocab,
    pub source: Vocab,
}

impl Vocabularies {
    pub fn get(&self, namespace: Namespace) -> &Vocab {
        match namespace {
            Namespace::English => &self.english,
            Namespace::Source => &self.source,
        }
    }

    pub fn resolve(&self, key: TermKey) -> Result<&str> {
        let vocab = self.get(key.namespace);
        vocab.token(key.token_id).ok_or(Error::TokenOutOfRange {
            namespace: key.namespace.as_str(),
            id: key.token_id,
            size: vocab.len(),
        })
    }

    pub fn lookup(&self, namespace: Namespace, token: &str) -> Result<TermKey> {
        self.get(namespace)
            .id(token)
            .map(|token_id| TermKey {
                namespace,
                token_id,
            })
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }
}

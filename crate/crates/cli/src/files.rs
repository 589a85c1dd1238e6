//! File loading with path-bearing errors, and all-or-nothing writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use milco_core::lexecho::{HeadParams, TokenSeq, Tokenizer, toy_tokenize};
use milco_core::repr::jsonl;
use milco_core::vocab::{Vocab, Vocabularies};
use milco_core::DualViewRepr;
use tempfile::NamedTempFile;

use crate::fail::{CliResult, Failure};

pub fn require(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{}: no such file", path.display())))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path) -> CliResult<HeadParams> {
    require(path)?;
    HeadParams::load(path).map_err(|e| Failure::at(path, e))
}

pub fn load_vocabs(english: &Path, source: &Path) -> CliResult<Vocabularies> {
    let load = |p: &Path| {
        require(p)?;
        Vocab::load(p).map_err(|e| Failure::at(p, e))
    };
    Ok(Vocabularies {
        english: load(english)?,
        source: load(source)?,
    })
}

pub fn load_reprs(path: &Path, vocabs: &Vocabularies) -> CliResult<Vec<(String, DualViewRepr)>> {
    require(path)?;
    jsonl::read_records(path, vocabs).map_err(|e| Failure::at(path, e))
}

/// `id<TAB>text` lines; blank lines are skipped.
pub fn load_corpus(path: &Path, tokenizer: &Tokenizer) -> CliResult<Vec<(String, TokenSeq)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Failure::usage(format!("{}:{}: {msg}", path.display(), i + 1));
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| at("expected <id><TAB><text>".into()))?;
        if id.is_empty() {
            return Err(at("empty id".into()));
        }
        let seq = toy_tokenize(body, tokenizer).map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{}:{}: {}", path.display(), i + 1, f.message);
            f
        })?;
        out.push((id.to_string(), seq));
    }
    Ok(out)
}

/// Writes to a temporary file next to `path` and renames it into place, so
/// a failure never leaves partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| Failure::usage(format!("{}: {e}", path.display()));
    fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

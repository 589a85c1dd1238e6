//! JSONL interchange for dual-view representations.
//!
//! One object per line:
//! `{"id": "<string>", "english": {"<token>": <weight>, ...}, "source": {...}}`.
//! Terms are written in key order, weights in shortest round-trip form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;

use super::{DualViewRepr, Namespace, SparseVec};
use crate::error::{Error, Result};
use crate::vocab::Vocabularies;

pub fn to_line(id: &str, repr: &DualViewRepr, vocabs: &Vocabularies) -> Result<String> {
    let mut line = String::from("{\"id\":");
    line.push_str(&serde_json::to_string(id).expect("string serialization"));
    for (name, view) in [("english", repr.english()), ("source", repr.source())] {
        line.push_str(",\"");
        line.push_str(name);
        line.push_str("\":{");
        for (i, (key, weight)) in view.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let token = vocabs.resolve(key)?;
            line.push_str(&serde_json::to_string(token).expect("string serialization"));
            line.push(':');
            line.push_str(&serde_json::to_string(&weight).expect("finite weight"));
        }
        line.push('}');
    }
    line.push('}');
    Ok(line)
}

pub fn write_records<'a, W, I>(mut out: W, records: I, vocabs: &Vocabularies) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a DualViewRepr)>,
{
    for (id, repr) in records {
        writeln!(out, "{}", to_line(id, repr, vocabs)?)?;
    }
    Ok(())
}

/// Parses one line. The error message is returned bare so callers can attach
/// a position.
pub fn parse_line(line: &str, vocabs: &Vocabularies) -> std::result::Result<(String, DualViewRepr), String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or("missing string field \"id\"")?
        .to_string();
    let english = parse_view(obj.get("english"), Namespace::English, vocabs)?;
    let source = parse_view(obj.get("source"), Namespace::Source, vocabs)?;
    let repr = DualViewRepr::new(english, source).map_err(|e| e.to_string())?;
    Ok((id, repr))
}

fn parse_view(
    field: Option<&Value>,
    namespace: Namespace,
    vocabs: &Vocabularies,
) -> std::result::Result<SparseVec, String> {
    let Some(field) = field else {
        return Err(format!("missing field {:?}", namespace.as_str()));
    };
    let map = field
        .as_object()
        .ok_or_else(|| format!("field {:?} must be an object", namespace.as_str()))?;
    let mut pairs = Vec::with_capacity(map.len());
    for (token, weight) in map {
        let key = vocabs.lookup(namespace, token).map_err(|e| e.to_string())?;
        let weight = weight
            .as_f64()
            .ok_or_else(|| format!("weight for {token:?} is not a number"))?;
        if weight < 0.0 {
            return Err(format!("negative weight for {token:?}"));
        }
        pairs.push((key, weight));
    }
    SparseVec::from_pairs(pairs).map_err(|e| e.to_string())
}

pub fn read_records(path: impl AsRef<Path>, vocabs: &Vocabularies) -> Result<Vec<(String, DualViewRepr)>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(&line, vocabs).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

//! On-disk layout, all integers little-endian:
//!
//! ```text
//! header   magic "MILX" | version u32 | english vocab u32 | source vocab u32
//!          | doc count u32 | crc32(body) u32
//! body     term count u32
//!          | term count x (namespace u8, token_id u32, offset u64, len u32, max f32)
//!          | postings byte length u64 | postings
//!          | doc count x (id byte length u32, UTF-8 id, term count u32)
//! postings per list: len x (varint ordinal delta, f32 weight)
//! ```
//!
//! The first delta of each list is the ordinal itself. Offsets are relative to
//! the start of the postings block.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{InvertedIndex, PostingList, VocabSizes};
use crate::error::{FormatError, Result};
use crate::repr::{Namespace, TermKey};

pub const MAGIC: [u8; 4] = *b"MILX";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const DICT_ENTRY_LEN: usize = 1 + 4 + 8 + 4 + 4;

pub(super) fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn malformed(what: &'static str, detail: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        what,
        detail: detail.into(),
    }
}

pub(super) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(super) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(FormatError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(super) fn varint(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let mut v: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.u8(what)?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v).map_err(|_| malformed(what, "varint exceeds u32"));
            }
        }
        Err(malformed(what, "varint longer than 5 bytes"))
    }

    pub(super) fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn encode_body(idx: &InvertedIndex) -> Vec<u8> {
    let mut postings = Vec::new();
    let mut dict = Vec::with_capacity(4 + idx.lists.len() * DICT_ENTRY_LEN);
    dict.extend_from_slice(&(idx.lists.len() as u32).to_le_bytes());
    for list in &idx.lists {
        dict.push(list.key.namespace.tag());
        dict.extend_from_slice(&list.key.token_id.to_le_bytes());
        dict.extend_from_slice(&(postings.len() as u64).to_le_bytes());
        dict.extend_from_slice(&(list.len() as u32).to_le_bytes());
        dict.extend_from_slice(&list.max_weight.to_le_bytes());
        let mut prev = 0;
        for (&d, &w) in list.docs.iter().zip(&list.weights) {
            put_varint(&mut postings, d - prev);
            postings.extend_from_slice(&w.to_le_bytes());
            prev = d;
        }
    }
    let mut body = dict;
    body.extend_from_slice(&(postings.len() as u64).to_le_bytes());
    body.extend_from_slice(&postings);
    for (id, &count) in idx.doc_ids.iter().zip(&idx.doc_term_counts) {
        body.extend_from_slice(&(id.len() as u32).to_le_bytes());
        body.extend_from_slice(id.as_bytes());
        body.extend_from_slice(&count.to_le_bytes());
    }
    body
}

impl InvertedIndex {
    /// Serializes the index. Equal indices always give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = encode_body(self);
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.vocab.english.to_le_bytes());
        out.extend_from_slice(&self.vocab.source.to_le_bytes());
        out.extend_from_slice(&(self.doc_ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes and fully validates an index.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                found: magic,
                expected: MAGIC,
            });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let vocab = VocabSizes {
            english: r.u32("header")?,
            source: r.u32("header")?,
        };
        let num_docs = r.u32("header")?;
        let expected = r.u32("header")?;
        let actual = crc32fast::hash(&bytes[HEADER_LEN..]);
        if expected != actual {
            return Err(FormatError::Checksum { expected, actual });
        }

        let num_terms = r.u32("dictionary")? as usize;
        if num_terms.saturating_mul(DICT_ENTRY_LEN) > bytes.len() - r.pos {
            return Err(FormatError::Truncated("dictionary"));
        }
        let mut entries = Vec::with_capacity(num_terms);
        for _ in 0..num_terms {
            let tag = r.u8("dictionary")?;
            let ns = Namespace::from_tag(tag).ok_or_else(|| malformed("dictionary", format!("namespace tag {tag}")))?;
            let key = TermKey {
                namespace: ns,
                token_id: r.u32("dictionary")?,
            };
            let size = match ns {
                Namespace::English => vocab.english,
                Namespace::Source => vocab.source,
            };
            if key.token_id >= size {
                return Err(malformed("dictionary", format!("{key} outside vocabulary of size {size}")));
            }
            let offset = r.u64("dictionary")?;
            let len = r.u32("dictionary")?;
            let max = r.f32("dictionary")?;
            entries.push((key, offset, len, max));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(malformed("dictionary", "keys not strictly increasing"));
        }

        let postings_len = r.u64("postings")?;
        let postings_len = usize::try_from(postings_len).map_err(|_| FormatError::Truncated("postings"))?;
        let postings = r.take(postings_len, "postings")?;
        let mut pr = Reader::new(postings);
        let mut lists = Vec::with_capacity(num_terms);
        // Each doc table row takes at least 8 bytes.
        if (num_docs as usize).saturating_mul(8) > bytes.len() - r.pos {
            return Err(FormatError::Truncated("doc table"));
        }
        let mut term_counts = vec![0u32; num_docs as usize];
        for (key, offset, len, max) in entries {
            if offset != pr.pos as u64 {
                return Err(malformed("dictionary", format!("{key} offset {offset}, expected {}", pr.pos)));
            }
            if len == 0 {
                return Err(malformed("postings", format!("{key} has an empty list")));
            }
            let mut docs = Vec::with_capacity((len as usize).min(postings.len()));
            let mut weights = Vec::with_capacity(docs.capacity());
            let mut prev: Option<u32> = None;
            for _ in 0..len {
                let delta = pr.varint("postings")?;
                let doc = match prev {
                    None => delta,
                    Some(_) if delta == 0 => return Err(malformed("postings", format!("{key} repeats a document"))),
                    Some(p) => p
                        .checked_add(delta)
                        .ok_or_else(|| malformed("postings", "ordinal overflow"))?,
                };
                if doc >= num_docs {
                    return Err(malformed("postings", format!("{key} references document {doc} of {num_docs}")));
                }
                let w = pr.f32("postings")?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(malformed("postings", format!("{key} has weight {w}")));
                }
                term_counts[doc as usize] += 1;
                docs.push(doc);
                weights.push(w);
                prev = Some(doc);
            }
            let list = PostingList::new(key, docs, weights);
            if list.max_weight.to_bits() != max.to_bits() {
                return Err(malformed("dictionary", format!("{key} max weight {max} != {}", list.max_weight)));
            }
            lists.push(list);
        }
        if !pr.is_done() {
            return Err(malformed("postings", "trailing bytes"));
        }

        let mut doc_ids = Vec::with_capacity(num_docs as usize);
        let mut seen = std::collections::HashSet::new();
        for expected_count in &term_counts {
            let n = r.u32("doc table")? as usize;
            let id = std::str::from_utf8(r.take(n, "doc table")?)
                .map_err(|e| malformed("doc table", e.to_string()))?
                .to_string();
            if !seen.insert(id.clone()) {
                return Err(malformed("doc table", format!("duplicate id {id:?}")));
            }
            let count = r.u32("doc table")?;
            if count != *expected_count {
                return Err(malformed("doc table", format!("{id:?} claims {count} terms, postings hold {expected_count}")));
            }
            doc_ids.push(id);
        }
        if !r.is_done() {
            return Err(malformed("doc table", "trailing bytes"));
        }
        Ok(InvertedIndex::from_parts(vocab, lists, doc_ids, term_counts))
    }
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn write_index(idx: &InvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("milx.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&idx.to_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    let bytes = fs::read(path)?;
    Ok(InvertedIndex::from_bytes(&bytes)?)
}

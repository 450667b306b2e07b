//! Binary model file.
//!
//! Little-endian throughout.
//!
//! ```text
//! header   "GEX1" | u32 version | u64 offset x 5 (meta, vocab, strings, keyphrases, leaves) | u64 body_end
//! meta     str meta_category | u8 search_higher_is_better | u8 recall_lower_is_better
//! vocab    u32 n | str x n
//! strings  u32 n | str x n
//! kps      u32 n | (u32 text_ref | f64 search | f64 recall | u32 len | u32 token x len) x n
//! leaves   u32 n | (u64 leaf | u32 kp_start | u32 kp_end | u32 rows | u32 edges
//!                   | u32 row_token x rows | u32 offset x (rows + 1) | u32 edge x edges) x n
//! trailer  u32 CRC-32 of bytes [0, body_end)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. Leaves are written in
//! ascending category order so saving is deterministic.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::curation::ScoreOrientation;
use crate::graph::{GraphError, LeafGraph, Model};
use crate::vocab::Vocabulary;

pub const MAGIC: [u8; 4] = *b"GEX1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 6 * 8;
const LEAF_HEADER_LEN: usize = 8 + 4 * 4;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file")]
    NotAModelFile,

    #[error("unsupported version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },

    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<GraphError> for ModelFileError {
    fn from(e: GraphError) -> Self {
        ModelFileError::Corrupt(e.to_string())
    }
}

/// Bytes a leaf's CSR block occupies on disk.
pub fn leaf_block_len(leaf: &LeafGraph) -> usize {
    LEAF_HEADER_LEN + 4 * (leaf.num_tokens() * 2 + 1 + leaf.num_edges())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32s(&mut self, vs: &[u32]) {
        self.buf.reserve(vs.len() * 4);
        for &v in vs {
            self.u32(v);
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, ss: &[String]) {
        self.u32(ss.len() as u32);
        for s in ss {
            self.str(s);
        }
    }
    fn pos(&self) -> u64 {
        self.buf.len() as u64
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u32(FORMAT_VERSION);
    w.buf.resize(HEADER_LEN, 0);
    let mut offsets = [0u64; 6];

    offsets[0] = w.pos();
    w.str(&model.meta_category);
    w.u8(model.orientation.search_higher_is_better as u8);
    w.u8(model.orientation.recall_lower_is_better as u8);

    offsets[1] = w.pos();
    w.strs(model.vocabulary.surfaces());

    offsets[2] = w.pos();
    w.strs(&model.strings);

    offsets[3] = w.pos();
    let n = model.search.len();
    w.u32(n as u32);
    for i in 0..n {
        w.u32(model.text_ref[i]);
        w.f64(model.search[i]);
        w.f64(model.recall[i]);
        let toks = model.keyphrase_tokens(i as u32);
        w.u32(toks.len() as u32);
        w.u32s(toks);
    }

    offsets[4] = w.pos();
    let ids = model.leaf_ids();
    w.u32(ids.len() as u32);
    for id in ids {
        let g = &model.leaves[&id];
        w.u64(id);
        w.u32(g.kp_start);
        w.u32(g.kp_end);
        w.u32(g.row_tokens.len() as u32);
        w.u32(g.edges.len() as u32);
        w.u32s(&g.row_tokens);
        w.u32s(&g.offsets);
        w.u32s(&g.edges);
    }

    offsets[5] = w.pos();
    for (i, off) in offsets.iter().enumerate() {
        let at = 8 + i * 8;
        w.buf[at..at + 8].copy_from_slice(&off.to_le_bytes());
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn save(model: &Model, path: &Path) -> Result<(), ModelFileError> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, ModelFileError> {
    decode(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if self.end - self.pos < n {
            return Err(ModelFileError::Corrupt(format!("section overrun at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, ModelFileError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| ModelFileError::Corrupt("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn str(&mut self) -> Result<String, ModelFileError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelFileError::Corrupt("invalid UTF-8".into()))
    }
    fn strs(&mut self) -> Result<Vec<String>, ModelFileError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.str()).collect()
    }
    fn seek(&mut self, to: u64) -> Result<(), ModelFileError> {
        if to as usize > self.end || (to as usize) < HEADER_LEN {
            return Err(ModelFileError::Corrupt(format!("section offset {to} out of range")));
        }
        self.pos = to as usize;
        Ok(())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, ModelFileError> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            ModelFileError::Truncated { expected: HEADER_LEN as u64, found }
        } else {
            ModelFileError::NotAModelFile
        });
    }
    if bytes[..4] != MAGIC {
        return Err(ModelFileError::NotAModelFile);
    }
    if bytes.len() < 8 {
        return Err(ModelFileError::Truncated { expected: HEADER_LEN as u64, found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion { found: version });
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(ModelFileError::Truncated { expected: HEADER_LEN as u64 + 4, found });
    }
    let mut offsets = [0u64; 6];
    for (i, off) in offsets.iter_mut().enumerate() {
        let at = 8 + i * 8;
        *off = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    }
    let body_end = offsets[5];
    let expected = body_end.saturating_add(4);
    if found < expected {
        return Err(ModelFileError::Truncated { expected, found });
    }
    if found > expected {
        return Err(ModelFileError::Corrupt(format!("{} trailing bytes", found - expected)));
    }
    let body_end = body_end as usize;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader { buf: bytes, pos: HEADER_LEN, end: body_end };

    r.seek(offsets[0])?;
    let meta_category = r.str()?;
    let orientation = ScoreOrientation {
        search_higher_is_better: r.u8()? != 0,
        recall_lower_is_better: r.u8()? != 0,
    };

    r.seek(offsets[1])?;
    let vocabulary = Vocabulary::from_surfaces(r.strs()?)
        .ok_or_else(|| ModelFileError::Corrupt("duplicate vocabulary entry".into()))?;

    r.seek(offsets[2])?;
    let strings = r.strs()?;

    r.seek(offsets[3])?;
    let n = r.u32()? as usize;
    let mut text_ref = Vec::with_capacity(n);
    let mut search = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut kp_token_offsets = Vec::with_capacity(n + 1);
    let mut kp_tokens = Vec::new();
    kp_token_offsets.push(0u32);
    for _ in 0..n {
        text_ref.push(r.u32()?);
        search.push(r.f64()?);
        recall.push(r.f64()?);
        let len = r.u32()? as usize;
        kp_tokens.extend(r.u32s(len)?);
        kp_token_offsets.push(kp_tokens.len() as u32);
    }

    r.seek(offsets[4])?;
    let num_leaves = r.u32()? as usize;
    let mut leaves = std::collections::HashMap::with_capacity(num_leaves);
    for _ in 0..num_leaves {
        let id = r.u64()?;
        let kp_start = r.u32()?;
        let kp_end = r.u32()?;
        let rows = r.u32()? as usize;
        let edges = r.u32()? as usize;
        let row_tokens = r.u32s(rows)?;
        let offs = r.u32s(rows + 1)?;
        let edge_list = r.u32s(edges)?;
        let leaf = LeafGraph::from_parts(id, kp_start..kp_end, row_tokens, offs, edge_list);
        if leaves.insert(id, leaf).is_some() {
            return Err(ModelFileError::Corrupt(format!("duplicate leaf {id}")));
        }
    }

    let model = Model {
        meta_category,
        orientation,
        vocabulary,
        strings,
        kp_token_offsets,
        kp_tokens,
        search,
        recall,
        text_ref,
        leaves,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::fig3_model;

    #[test]
    fn round_trip_fig3() {
        let m = fig3_model();
        let bytes = encode(&m);
        assert_eq!(decode(&bytes).unwrap(), m);
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }

    #[test]
    fn round_trip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gex");
        let m = fig3_model();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&fig3_model());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(ModelFileError::NotAModelFile)));
        assert!(matches!(decode(b""), Err(ModelFileError::NotAModelFile)));
        assert!(matches!(decode(b"PK\x03\x04 zip"), Err(ModelFileError::NotAModelFile)));
    }

    #[test]
    fn future_version() {
        let mut bytes = encode(&fig3_model());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(ModelFileError::UnsupportedVersion { found: 2 })));
    }

    #[test]
    fn truncated() {
        let bytes = encode(&fig3_model());
        for cut in [2, 6, 30, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(ModelFileError::Truncated { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn checksum() {
        let mut bytes = encode(&fig3_model());
        let mid = HEADER_LEN + 10;
        bytes[mid] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(ModelFileError::ChecksumMismatch { .. })));
    }

    #[test]
    fn leaf_block_len_matches_encoding() {
        let m = fig3_model();
        let g = m.leaf(1).unwrap();
        let bytes = encode(&m);
        let leaves_off = u64::from_le_bytes(bytes[8 + 4 * 8..8 + 5 * 8].try_into().unwrap()) as usize;
        let end = bytes.len() - 4;
        assert_eq!(end - leaves_off - 4, leaf_block_len(g));
    }
}

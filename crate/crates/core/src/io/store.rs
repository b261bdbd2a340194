use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"SPKE";

#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub vector: Vec<f32>,
}

/// Utterance embeddings keyed by utterance id, in insertion order.
///
/// Binary layout (little-endian): `"SPKE" | u32 dim | u32 count`, then per
/// record `u16 len | utterance id | u16 len | speaker id | dim x f32`.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<StoreRecord>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.records == other.records
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, records: Vec::new(), index: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(
        &mut self,
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
        vector: Vec<f32>,
    ) -> Result<()> {
        let utterance_id = utterance_id.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, actual: vector.len() });
        }
        if self.index.contains_key(&utterance_id) {
            return Err(Error::InvalidConfig(format!("duplicate utterance id {utterance_id}")));
        }
        self.index.insert(utterance_id.clone(), self.records.len());
        self.records.push(StoreRecord { utterance_id, speaker_id: speaker_id.into(), vector });
        Ok(())
    }

    pub fn get(&self, utterance_id: &str) -> Option<&StoreRecord> {
        self.index.get(utterance_id).map(|&i| &self.records[i])
    }

    pub fn vector(&self, utterance_id: &str) -> Option<&[f32]> {
        self.get(utterance_id).map(|r| r.vector.as_slice())
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoreRecord> {
        self.records.iter()
    }

    /// Records grouped by speaker, speakers in lexicographic order.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<&StoreRecord>> {
        let mut map: BTreeMap<&str, Vec<&StoreRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.speaker_id.as_str()).or_default().push(r);
        }
        map
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.records.is_empty() {
            return Err(Error::InvalidConfig("refusing to write an empty store".into()));
        }
        let mut out = Vec::with_capacity(12 + self.records.len() * (self.dim * 4 + 32));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            for id in [&r.utterance_id, &r.speaker_id] {
                let len = u16::try_from(id.len())
                    .map_err(|_| Error::InvalidConfig(format!("id too long: {id}")))?;
                out.extend_from_slice(&len.to_le_bytes());
                out.extend_from_slice(id.as_bytes());
            }
            for v in &r.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "header")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found: magic });
        }
        let dim = cur.u32("header")? as usize;
        let count = cur.u32("header")? as usize;
        let mut store = Self::new(dim);
        for i in 0..count {
            let ctx = format!("record {i} of {count}");
            let utt = cur.string(&ctx)?;
            let spk = cur.string(&ctx)?;
            let raw = cur.take(dim * 4, &ctx)?;
            let vector = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            store.insert(utt, spk, vector)?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Truncated(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - cur.pos
            )));
        }
        Ok(store)
    }

    /// Reads a store and checks its dimension.
    pub fn from_bytes_with_dim(bytes: &[u8], expected_dim: usize) -> Result<Self> {
        let store = Self::from_bytes(bytes)?;
        if store.dim != expected_dim {
            return Err(Error::DimMismatch { expected: expected_dim, actual: store.dim });
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, ctx: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(ctx.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, ctx: &str) -> Result<u32> {
        let b = self.take(4, ctx)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, ctx: &str) -> Result<String> {
        let b = self.take(2, ctx)?;
        let len = u16::from_le_bytes([b[0], b[1]]) as usize;
        let raw = self.take(len, ctx)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Truncated(format!("{ctx}: invalid utf-8 id")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bad_magic_truncation_and_dim() {
        let mut s = EmbeddingStore::new(2);
        s.insert("u1", "s1", vec![1.0, 2.0]).unwrap();
        let mut bytes = s.to_bytes().unwrap();
        assert!(matches!(
            EmbeddingStore::from_bytes_with_dim(&bytes, 3),
            Err(Error::DimMismatch { expected: 3, actual: 2 })
        ));
        bytes.pop();
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Truncated(_))));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn empty_store_not_written() {
        assert!(EmbeddingStore::new(4).to_bytes().is_err());
    }

    #[test]
    fn duplicates_and_wrong_dim_rejected() {
        let mut s = EmbeddingStore::new(2);
        s.insert("u1", "s1", vec![1.0, 2.0]).unwrap();
        assert!(s.insert("u1", "s2", vec![0.0, 0.0]).is_err());
        assert!(s.insert("u2", "s2", vec![0.0]).is_err());
    }

    #[test]
    fn count_field_matches() {
        let mut s = EmbeddingStore::new(4);
        for i in 0..2793 {
            s.insert(format!("spk{i:04}"), format!("spk{i:04}"), vec![i as f32; 4]).unwrap();
        }
        let bytes = s.to_bytes().unwrap();
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2793);
        assert_eq!(EmbeddingStore::from_bytes(&bytes).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn roundtrip_is_bit_exact(
            dim in 1usize..8,
            ids in proptest::collection::btree_set("[a-zé中\\-_0-9]{1,12}", 1..20),
            seed in any::<u32>(),
        ) {
            let mut s = EmbeddingStore::new(dim);
            for (i, id) in ids.iter().enumerate() {
                let v: Vec<f32> = (0..dim)
                    .map(|d| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((i * dim + d) as u32) & 0x7f7f_ffff))
                    .collect();
                s.insert(id.clone(), format!("spk-{}", id.chars().rev().collect::<String>()), v).unwrap();
            }
            let back = EmbeddingStore::from_bytes(&s.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), s.to_bytes().unwrap());
            prop_assert_eq!(back, s);
        }
    }
}

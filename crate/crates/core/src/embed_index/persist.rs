//! On-disk index layout.
//!
//! `vectors.bin`:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `ARVI`                            |
//! | 4     | format version, u32 LE                  |
//! | 4     | dimension D, u32 LE                     |
//! | 8     | record count N, u64 LE                  |
//! | 4     | provider id length L, u32 LE            |
//! | L     | provider id, UTF-8                      |
//! | 4·D·N | vectors, f32 LE, in record order        |
//!
//! `chunks.jsonl` holds one [`ChunkRef`] per line, line `i` describing
//! record `i`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ChunkRef, EmbedError, EmbeddingVector, VectorIndex};

pub const INDEX_MAGIC: [u8; 4] = *b"ARVI";
pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const VECTORS_FILE: &str = "vectors.bin";
pub const SIDECAR_FILE: &str = "chunks.jsonl";

impl VectorIndex {
    pub fn save(&self, dir: &Path) -> Result<(), EmbedError> {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(fs::File::create(dir.join(VECTORS_FILE))?);
        out.write_all(&INDEX_MAGIC)?;
        out.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dimension as u32).to_le_bytes())?;
        out.write_all(&(self.records.len() as u64).to_le_bytes())?;
        out.write_all(&(self.provider_id.len() as u32).to_le_bytes())?;
        out.write_all(self.provider_id.as_bytes())?;
        for rec in &self.records {
            for v in rec.vector.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;

        let mut side = BufWriter::new(fs::File::create(dir.join(SIDECAR_FILE))?);
        for rec in &self.records {
            serde_json::to_writer(&mut side, &rec.chunk)
                .map_err(|e| EmbedError::Format(e.to_string()))?;
            side.write_all(b"\n")?;
        }
        side.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EmbedError> {
        let bytes = fs::read(dir.join(VECTORS_FILE))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != INDEX_MAGIC {
            return Err(EmbedError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(EmbedError::Format(format!("unsupported version {version}")));
        }
        let dimension = cur.u32()? as usize;
        let count = usize::try_from(cur.u64()?).map_err(|_| EmbedError::Format("count".into()))?;
        let id_len = cur.u32()? as usize;
        let provider_id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| EmbedError::Format("provider id is not UTF-8".into()))?
            .to_string();
        let expected = count
            .checked_mul(dimension)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| EmbedError::Format("size overflow".into()))?;
        if bytes.len() - cur.pos != expected {
            return Err(EmbedError::Format(format!(
                "expected {expected} vector bytes, found {}",
                bytes.len() - cur.pos
            )));
        }

        let side = BufReader::new(fs::File::open(dir.join(SIDECAR_FILE))?);
        let mut refs = Vec::with_capacity(count);
        for line in side.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            refs.push(
                serde_json::from_str::<ChunkRef>(&line)
                    .map_err(|e| EmbedError::Format(e.to_string()))?,
            );
        }
        if refs.len() != count {
            return Err(EmbedError::Format(format!(
                "sidecar has {} records, header says {count}",
                refs.len()
            )));
        }

        let mut index = VectorIndex::new(dimension, provider_id);
        for chunk in refs {
            let values = cur
                .take(dimension * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            index.add(chunk, EmbeddingVector::from_stored(values))?;
        }
        Ok(index)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbedError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| EmbedError::Format("truncated header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EmbedError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EmbedError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

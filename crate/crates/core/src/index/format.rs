//! Binary index file.
//!
//! ```text
//! "SSTR"                magic
//! u16                   format version
//! u32 + bytes           PHOC configuration (TOML)
//! u64                   configuration hash
//! u8                    backend tag (0 exact, 1 graph)
//! u32                   vector dimension
//! u64                   entry count
//! f32 * count * dim     vectors
//! f32 * count           objectness
//! u32 * count           owning image
//! u32 + (u32 + bytes)*  image id table
//! [graph section]       params, entry point, levels, adjacency
//! u32                   CRC-32 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::hnsw::HnswGraph;
use super::store::{AnnParams, BackendIndex, EntryTable, SearchIndex};
use crate::error::{Error, Result};
use crate::phoc::{ConfigHash, PhocConfig};

pub const MAGIC: &[u8; 4] = b"SSTR";
pub const FORMAT_VERSION: u16 = 1;

struct CrcWriter<W> {
    inner: W,
    crc: crc32fast::Hasher,
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

struct CrcReader<R> {
    inner: R,
    crc: crc32fast::Hasher,
}

impl<R: Read> Read for CrcReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(64 * 1024);
    for chunk in values.chunks(16 * 1024) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn write_u32s<W: Write>(w: &mut W, values: &[u32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(64 * 1024);
    for chunk in values.chunks(16 * 1024) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn write_index<W: Write>(w: &mut W, index: &SearchIndex) -> io::Result<()> {
    let table = &index.table;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let config = index.config.to_toml();
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;
    w.write_all(&index.config.hash().0.to_le_bytes())?;
    let tag: u8 = match index.backend {
        BackendIndex::Exact => 0,
        BackendIndex::Graph(_) => 1,
    };
    w.write_all(&[tag])?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    write_f32s(w, &table.vectors)?;
    write_f32s(w, &table.objectness)?;
    write_u32s(w, &table.image_of)?;
    w.write_all(&(table.image_ids.len() as u32).to_le_bytes())?;
    for id in &table.image_ids {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    if let BackendIndex::Graph(g) = &index.backend {
        let p = g.params;
        for v in [p.m, p.ef_construction, p.ef_search] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&p.seed.to_le_bytes())?;
        w.write_all(&g.entry.to_le_bytes())?;
        w.write_all(&(g.max_level as u32).to_le_bytes())?;
        w.write_all(&g.levels)?;
        for node in &g.links {
            for list in node {
                w.write_all(&(list.len() as u16).to_le_bytes())?;
                write_u32s(w, list)?;
            }
        }
    }
    Ok(())
}

impl SearchIndex {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = CrcWriter {
            inner: BufWriter::with_capacity(1 << 20, file),
            crc: crc32fast::Hasher::new(),
        };
        write_index(&mut w, self).map_err(|e| Error::io(path, e))?;
        let crc = w.crc.finalize();
        let mut inner = w.inner;
        inner
            .write_all(&crc.to_le_bytes())
            .and_then(|_| inner.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Loads an index, trusting the PHOC configuration stored in the file.
    pub fn load(path: impl AsRef<Path>) -> Result<SearchIndex> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut r = Decoder {
            reader: CrcReader {
                inner: BufReader::with_capacity(1 << 20, file),
                crc: crc32fast::Hasher::new(),
            },
            remaining: file_len,
        };
        let index = r.read_index()?;
        let computed = r.reader.crc.clone().finalize();
        let mut tail = [0u8; 4];
        r.reader.inner.read_exact(&mut tail).map_err(|_| truncated())?;
        if u32::from_le_bytes(tail) != computed {
            return Err(Error::CorruptIndex("checksum mismatch".into()));
        }
        let mut extra = [0u8; 1];
        if r.reader.inner.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::CorruptIndex("trailing bytes after checksum".into()));
        }
        Ok(index)
    }

    /// Loads an index and requires it to use `expected` as PHOC configuration.
    pub fn load_for(path: impl AsRef<Path>, expected: &PhocConfig) -> Result<SearchIndex> {
        let index = SearchIndex::load(path)?;
        let (found, wanted) = (index.config.hash(), expected.hash());
        if found != wanted {
            return Err(Error::VersionMismatch(format!(
                "index PHOC configuration hash {found} differs from expected {wanted}"
            )));
        }
        Ok(index)
    }
}

fn truncated() -> Error {
    Error::CorruptIndex("file is truncated".into())
}

struct Decoder<R> {
    reader: CrcReader<R>,
    /// Bytes left in the file, used to reject absurd lengths before allocating.
    remaining: u64,
}

impl<R: Read> Decoder<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        self.reserve(n as u64)?;
        let mut buf = vec![0u8; n];
        self.reader.read_exact(&mut buf).map_err(|_| truncated())?;
        Ok(buf)
    }

    fn reserve(&mut self, n: u64) -> Result<()> {
        if n > self.remaining {
            return Err(truncated());
        }
        self.remaining -= n;
        Ok(())
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        self.reserve(N as u64)?;
        let mut buf = [0u8; N];
        self.reader.read_exact(&mut buf).map_err(|_| truncated())?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        self.reserve(n as u64 * 4)?;
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 64 * 1024];
        let mut left = n;
        while left > 0 {
            let take = left.min(16 * 1024);
            let chunk = &mut buf[..take * 4];
            self.reader.read_exact(chunk).map_err(|_| truncated())?;
            out.extend(chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
            left -= take;
        }
        Ok(out)
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        self.reserve(n as u64 * 4)?;
        let mut buf = vec![0u8; n * 4];
        self.reader.read_exact(&mut buf).map_err(|_| truncated())?;
        Ok(buf
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    fn read_index(&mut self) -> Result<SearchIndex> {
        if &self.array::<4>()? != MAGIC {
            return Err(Error::CorruptIndex("bad magic".into()));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch(format!(
                "file format version {version}, supported {FORMAT_VERSION}"
            )));
        }
        let config_len = self.u32()? as usize;
        let config_text = String::from_utf8(self.bytes(config_len)?)
            .map_err(|_| Error::CorruptIndex("configuration is not UTF-8".into()))?;
        let config = PhocConfig::from_toml(&config_text)
            .map_err(|e| Error::CorruptIndex(format!("configuration: {e}")))?;
        let stored_hash = ConfigHash(self.u64()?);
        if stored_hash != config.hash() {
            return Err(Error::CorruptIndex("configuration hash does not match its text".into()));
        }
        let tag = self.u8()?;
        let dim = self.u32()? as usize;
        if dim != config.dimension() {
            return Err(Error::CorruptIndex(format!(
                "vector dimension {dim} disagrees with configuration ({})",
                config.dimension()
            )));
        }
        let count = self.u64()?;
        if count.saturating_mul(dim as u64 * 4 + 8) > self.remaining {
            return Err(truncated());
        }
        let count = count as usize;
        let vectors = self.f32s(count * dim)?;
        let objectness = self.f32s(count)?;
        let image_of = self.u32s(count)?;
        let image_count = self.u32()? as usize;
        let mut image_ids = Vec::with_capacity(image_count.min(count));
        for _ in 0..image_count {
            let len = self.u32()? as usize;
            let id = String::from_utf8(self.bytes(len)?)
                .map_err(|_| Error::CorruptIndex("image id is not UTF-8".into()))?;
            image_ids.push(id);
        }
        if image_of.iter().any(|&i| i as usize >= image_count) {
            return Err(Error::CorruptIndex("entry refers to unknown image".into()));
        }
        let table = EntryTable {
            dim,
            vectors,
            objectness,
            image_of,
            image_ids,
        };
        let backend = match tag {
            0 => BackendIndex::Exact,
            1 => BackendIndex::Graph(self.read_graph(count)?),
            other => return Err(Error::CorruptIndex(format!("unknown backend tag {other}"))),
        };
        Ok(SearchIndex {
            config,
            table: Arc::new(table),
            backend,
        })
    }

    fn read_graph(&mut self, count: usize) -> Result<HnswGraph> {
        let params = AnnParams {
            m: self.u32()? as usize,
            ef_construction: self.u32()? as usize,
            ef_search: self.u32()? as usize,
            seed: self.u64()?,
        };
        params
            .validate()
            .map_err(|e| Error::CorruptIndex(format!("graph parameters: {e}")))?;
        let entry = self.u32()?;
        let max_level = self.u32()? as usize;
        let levels = self.bytes(count)?;
        if count > 0 && (entry as usize >= count || levels[entry as usize] as usize != max_level) {
            return Err(Error::CorruptIndex("bad graph entry point".into()));
        }
        let mut links = Vec::with_capacity(count);
        for &level in &levels {
            let mut node = Vec::with_capacity(level as usize + 1);
            for _ in 0..=level {
                let len = self.u16()? as usize;
                let list = self.u32s(len)?;
                if list.iter().any(|&n| n as usize >= count) {
                    return Err(Error::CorruptIndex("graph link out of range".into()));
                }
                node.push(list);
            }
            links.push(node);
        }
        Ok(HnswGraph {
            params,
            entry,
            max_level,
            levels,
            links,
        })
    }
}

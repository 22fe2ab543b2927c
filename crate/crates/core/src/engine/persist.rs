//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "CSTM"
//! version    u32
//! length     u64      payload byte count
//! payload    length bytes
//! crc32      u32      CRC-32 (IEEE) of the payload
//! ```
//!
//! The payload is, in order:
//!
//! ```text
//! config     str                      JSON engine configuration
//! cursor     u8 flag, u64             last processed window (flag 0 = none)
//! vocab      u32 n_attr, per attribute: u32 n, n × str
//! per attribute:
//!   present  u8                       0 = attribute left out of the model
//!   mode     u8                       0 = explicit, 1 = implicit
//!   dim      u32
//!   clusters u32
//!   budget   u32
//!   assign   u32 n, n × u32           cluster per unit id, u32::MAX = none
//!   centroid u32 n, n × dim × f32
//!   category u32 n, n × str, u32 m, m × (str unit, u32 category)
//!   bases    per cluster: u32 n_cols, dim × n_cols f32 row-major values,
//!            then dim × n_cols f32 row-major AdaGrad history
//!   codes    u32 n, n × (u32 unit, u32 cluster, u32 nnz, nnz × (u32 index, f32 value),
//!            u32 n_basis, n_basis × f32 AdaGrad history)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. Unit symbol maps are
//! written in sorted order so equal models give equal files.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{EngineConfig, ModelState};
use crate::codebook::{
    AttributeCodebook, BasisSet, CategoryMap, ClusterBasis, ClusterMode, NoisyFixedClustering,
    SparseCode,
};
use crate::error::{Error, Result};
use crate::stream::{AttrId, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CSTM";
const NONE: u32 = u32::MAX;

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection too large for model file"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> Error {
    Error::CorruptModel(what.to_owned())
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of payload"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    /// A count, checked against the bytes left so corrupt sizes fail fast.
    fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(corrupt("collection length exceeds payload"));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| self.f32()).collect()
    }
}

fn encode_book(e: &mut Enc, book: &AttributeCodebook) {
    let c = book.clustering();
    let dim = book.bases().dim();
    e.u8(match c.mode() {
        ClusterMode::Explicit => 0,
        ClusterMode::Implicit => 1,
    });
    e.len(dim);
    e.len(c.n_clusters());
    e.len(book.bases().budget());
    e.len(c.assignments().len());
    for a in c.assignments() {
        e.u32(a.unwrap_or(NONE));
    }
    e.len(c.centroids().len());
    for cen in c.centroids() {
        cen.iter().for_each(|&x| e.f32(x));
    }
    match c.categories() {
        Some(map) => {
            e.len(map.n_categories());
            map.categories().iter().for_each(|s| e.str(s));
            let mut units: Vec<(&str, u32)> = map.unit_assignments().collect();
            units.sort_unstable();
            e.len(units.len());
            for (u, k) in units {
                e.str(u);
                e.u32(k);
            }
        }
        None => {
            e.u32(0);
            e.u32(0);
        }
    }
    for b in book.bases().clusters() {
        let n = b.len();
        e.len(n);
        for data in [b.raw(), b.accumulators()] {
            for r in 0..dim {
                for j in 0..n {
                    e.f32(data[j * dim + r]);
                }
            }
        }
    }
    e.len(book.n_codes());
    for (id, code) in book.codes() {
        e.u32(id);
        e.u32(code.cluster());
        e.len(code.nnz());
        for (i, v) in code.pairs() {
            e.u32(i);
            e.f32(v);
        }
        e.len(code.n_basis());
        code.accumulators().iter().for_each(|&a| e.f32(a));
    }
}

fn decode_book(d: &mut Dec, attr: AttrId) -> Result<AttributeCodebook> {
    let mode = match d.u8()? {
        0 => ClusterMode::Explicit,
        1 => ClusterMode::Implicit,
        m => return Err(corrupt(&format!("unknown clustering mode {m}"))),
    };
    let dim = d.u32()? as usize;
    let n_clusters = d.u32()?;
    let budget = d.u32()? as usize;
    let n = d.len(4)?;
    let assignments = (0..n)
        .map(|_| {
            let c = d.u32()?;
            match c {
                NONE => Ok(None),
                c if c < n_clusters => Ok(Some(c)),
                _ => Err(corrupt("assignment out of range")),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = d.len(4 * dim)?;
    let centroids = (0..n).map(|_| d.f32s(dim)).collect::<Result<Vec<_>>>()?;
    let n_cat = d.len(4)?;
    let cats = (0..n_cat).map(|_| d.str()).collect::<Result<Vec<_>>>()?;
    let n_map = d.len(8)?;
    let map = (0..n_map)
        .map(|_| Ok((d.str()?, d.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    let categories =
        (mode == ClusterMode::Explicit).then(|| CategoryMap::from_categories(cats, map));

    let mut clusters = Vec::with_capacity(n_clusters as usize);
    for _ in 0..n_clusters {
        let n = d.len(8 * dim)?;
        let mut parts = [vec![0.0f32; dim * n], vec![0.0f32; dim * n]];
        for data in parts.iter_mut() {
            for r in 0..dim {
                for j in 0..n {
                    data[j * dim + r] = d.f32()?;
                }
            }
        }
        let [values, accum] = parts;
        clusters.push(ClusterBasis::from_raw(dim, values, accum));
    }
    let bases = BasisSet::new(dim, budget, clusters);

    let n = d.len(16)?;
    let mut codes: Vec<Option<SparseCode>> = vec![None; assignments.len()];
    for _ in 0..n {
        let id = d.u32()? as usize;
        let cluster = d.u32()?;
        let nnz = d.len(8)?;
        let pairs = (0..nnz)
            .map(|_| Ok((d.u32()?, d.f32()?)))
            .collect::<Result<Vec<_>>>()?;
        let n_basis = d.len(4)?;
        let accum = d.f32s(n_basis)?;
        if assignments.get(id).copied().flatten() != Some(cluster) {
            return Err(corrupt("code cluster disagrees with assignment"));
        }
        if bases.cluster(cluster)?.len() != n_basis {
            return Err(corrupt("code width disagrees with basis"));
        }
        let mut code = SparseCode::from_pairs(cluster, n_basis, &pairs)?;
        code.set_accumulators(accum);
        codes[id] = Some(code);
    }
    let clustering = NoisyFixedClustering::from_parts(
        attr,
        mode,
        n_clusters,
        assignments,
        centroids,
        categories,
    );
    Ok(AttributeCodebook::from_parts(
        attr, clustering, bases, codes,
    ))
}

fn encode_payload(state: &ModelState) -> Result<Vec<u8>> {
    let mut e = Enc::default();
    e.str(&serde_json::to_string(state.config())?);
    match state.cursor() {
        Some(c) => {
            e.u8(1);
            e.u64(c);
        }
        None => {
            e.u8(0);
            e.u64(0);
        }
    }
    let vocab = state.vocab();
    e.len(vocab.n_attributes());
    for a in 0..vocab.n_attributes() {
        let syms = vocab.symbols(a as AttrId);
        e.len(syms.len());
        syms.iter().for_each(|s| e.str(s));
    }
    e.len(state.books().len());
    for book in state.books() {
        match book {
            Some(b) => {
                e.u8(1);
                encode_book(&mut e, b);
            }
            None => e.u8(0),
        }
    }
    Ok(e.0)
}

fn decode_payload(buf: &[u8]) -> Result<ModelState> {
    let mut d = Dec { buf, pos: 0 };
    let config: EngineConfig = serde_json::from_str(&d.str()?)?;
    let has_cursor = d.u8()? != 0;
    let cursor = d.u64()?;
    let n_attr = d.len(4)?;
    let mut lists = Vec::with_capacity(n_attr);
    for _ in 0..n_attr {
        let n = d.len(4)?;
        lists.push((0..n).map(|_| d.str()).collect::<Result<Vec<_>>>()?);
    }
    let vocab = Vocabulary::from_symbols(lists);
    let n_books = d.len(1)?;
    let mut books = Vec::with_capacity(n_books);
    for a in 0..n_books {
        books.push(match d.u8()? {
            0 => None,
            _ => Some(decode_book(&mut d, a as AttrId)?),
        });
    }
    if d.pos != buf.len() {
        return Err(corrupt("trailing bytes after model"));
    }
    Ok(ModelState::from_parts(
        vocab,
        books,
        config,
        has_cursor.then_some(cursor),
    ))
}

/// Serialized model including header and checksum.
pub fn to_bytes(state: &ModelState) -> Result<Vec<u8>> {
    let payload = encode_payload(state)?;
    let mut out = Vec::with_capacity(payload.len() + 20);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    // a short or padded file cannot carry a valid checksum
    if body.len() as u64 != len.saturating_add(4) {
        return Err(Error::Checksum);
    }
    let (payload, crc) = body.split_at(len as usize);
    if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::Checksum);
    }
    decode_payload(payload)
}

/// Write atomically: the file at `path` is either the old model or the new one.
pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    let bytes = to_bytes(state)?;
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelState> {
    from_bytes(&fs::read(path)?)
}

/// CRC-32 of the serialized model payload; equal models give equal sums.
pub fn model_checksum(state: &ModelState) -> Result<u32> {
    Ok(crc32fast::hash(&encode_payload(state)?))
}

//! Model archives.
//!
//! Layout: the 8-byte magic `BARTMDL\0`, a little-endian u32 format
//! version, then sections in fixed order. Each section is a 4-byte tag, a
//! u64 payload length, the payload, and a CRC-32 of tag, length and
//! payload together.
//!
//! | tag    | payload                                                    |
//! |--------|------------------------------------------------------------|
//! | `META` | [`ModelMeta`] as JSON                                      |
//! | `TREE` | sample count, then per sample the tree count, node offsets and preorder nodes |
//! | `SIGS` | kept-per-chain count, then one σ² per sample               |
//! | `TRAC` | optional per-iteration sampler diagnostics                 |
//!
//! All integers and floats are little-endian; floats are stored as raw bits.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{BartError, Result};
use crate::model::{BartModel, ModelMeta};
use crate::sampler::{ChainTrace, IterationDiagnostics, PosteriorEnsemble, PosteriorSample};
use crate::tree::{FrozenNode, FrozenTree};

pub const MAGIC: &[u8; 8] = b"BARTMDL\0";
pub const FORMAT_VERSION: u32 = 1;

const NODE_BYTES: usize = 1 + 4 + 4 + 8;

fn corrupt(msg: impl Into<String>) -> BartError {
    BartError::CorruptArchive(msg.into())
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    let start = out.len();
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_bits().to_le_bytes());
}

/// Serializes a model. `include_traces` controls the optional `TRAC` section.
pub fn encode(model: &BartModel, include_traces: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);

    let meta = serde_json::to_vec(&model.meta).map_err(|e| BartError::Invariant(format!("metadata encoding: {e}")))?;
    section(&mut out, b"META", &meta);

    let samples = &model.ensemble.samples;
    let mut trees = Vec::new();
    put_u64(&mut trees, samples.len() as u64);
    for s in samples {
        put_u32(&mut trees, s.num_trees() as u32);
        for &o in &s.offsets {
            put_u32(&mut trees, o);
        }
        for n in &s.nodes {
            trees.push(n.kind);
            put_u32(&mut trees, n.feature);
            put_u32(&mut trees, n.right);
            put_f64(&mut trees, n.value);
        }
    }
    section(&mut out, b"TREE", &trees);

    let mut sigs = Vec::with_capacity(8 + 8 * samples.len());
    put_u64(&mut sigs, model.ensemble.kept_per_chain as u64);
    for s in samples {
        put_f64(&mut sigs, s.sigma_sq);
    }
    section(&mut out, b"SIGS", &sigs);

    if include_traces && !model.ensemble.traces.is_empty() {
        let mut tr = Vec::new();
        put_u32(&mut tr, model.ensemble.traces.len() as u32);
        for t in &model.ensemble.traces {
            put_u32(&mut tr, t.chain as u32);
            put_u32(&mut tr, t.burn_in as u32);
            put_u32(&mut tr, t.iterations.len() as u32);
            for d in &t.iterations {
                put_f64(&mut tr, d.sigma_sq);
                put_f64(&mut tr, d.acceptance);
                put_f64(&mut tr, d.mean_leaves);
                put_f64(&mut tr, d.mean_depth);
            }
        }
        section(&mut out, b"TRAC", &tr);
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated archive"))?;
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }

    /// Reads a section, verifying its checksum, and returns (tag, payload).
    fn section(&mut self) -> Result<([u8; 4], &'a [u8])> {
        let start = self.pos;
        let tag: [u8; 4] = self.take(4)?.try_into().unwrap();
        let len = usize::try_from(self.u64()?).map_err(|_| corrupt("section length overflow"))?;
        let payload = self.take(len)?;
        let body = &self.buf[start..self.pos];
        let stored = self.u32()?;
        if crc32fast::hash(body) != stored {
            return Err(corrupt(format!("checksum mismatch in section {}", String::from_utf8_lossy(&tag))));
        }
        Ok((tag, payload))
    }
}

/// Reads only the header; errors on a bad magic or a foreign version.
pub fn check_header(bytes: &[u8]) -> Result<()> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a model archive (bad magic)"));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != FORMAT_VERSION {
        return Err(BartError::VersionMismatch { expected: FORMAT_VERSION, found });
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<BartModel> {
    check_header(bytes)?;
    let mut cur = Cursor { buf: bytes, pos: 12 };

    let (tag, meta_bytes) = cur.section()?;
    if &tag != b"META" {
        return Err(corrupt("expected META section"));
    }
    let meta: ModelMeta = serde_json::from_slice(meta_bytes).map_err(|e| corrupt(format!("metadata: {e}")))?;
    let p = meta.column_names.len();

    let (tag, tree_bytes) = cur.section()?;
    if &tag != b"TREE" {
        return Err(corrupt("expected TREE section"));
    }
    let mut t = Cursor { buf: tree_bytes, pos: 0 };
    let count = t.u64()? as usize;
    if count > tree_bytes.len() {
        return Err(corrupt("implausible sample count"));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let m = t.u32()? as usize;
        if m == 0 || m > tree_bytes.len() {
            return Err(corrupt("implausible tree count"));
        }
        let offsets = (0..=m).map(|_| t.u32()).collect::<Result<Vec<u32>>>()?;
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(corrupt("bad tree offsets"));
        }
        let n_nodes = offsets[m] as usize;
        if n_nodes.saturating_mul(NODE_BYTES) > tree_bytes.len() - t.pos {
            return Err(corrupt("truncated tree section"));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(FrozenNode { kind: t.u8()?, feature: t.u32()?, right: t.u32()?, value: t.f64()? });
        }
        let sample = PosteriorSample { sigma_sq: 0.0, offsets, nodes };
        for k in 0..m {
            FrozenTree { nodes: sample.tree_nodes(k).to_vec() }
                .validate(p)
                .map_err(|e| corrupt(format!("invalid tree: {e}")))?;
        }
        samples.push(sample);
    }
    if !t.done() {
        return Err(corrupt("trailing bytes in TREE section"));
    }

    let (tag, sig_bytes) = cur.section()?;
    if &tag != b"SIGS" {
        return Err(corrupt("expected SIGS section"));
    }
    let mut s = Cursor { buf: sig_bytes, pos: 0 };
    let kept_per_chain = s.u64()? as usize;
    for sample in &mut samples {
        sample.sigma_sq = s.f64()?;
    }
    if !s.done() {
        return Err(corrupt("σ² count does not match sample count"));
    }

    let mut traces = Vec::new();
    if !cur.done() {
        let (tag, tr_bytes) = cur.section()?;
        if &tag != b"TRAC" {
            return Err(corrupt("unknown section"));
        }
        let mut c = Cursor { buf: tr_bytes, pos: 0 };
        let chains = c.u32()?;
        for _ in 0..chains {
            let chain = c.u32()? as usize;
            let burn_in = c.u32()? as usize;
            let len = c.u32()? as usize;
            if len.saturating_mul(32) > tr_bytes.len() {
                return Err(corrupt("truncated trace section"));
            }
            let iterations = (0..len)
                .map(|_| {
                    Ok(IterationDiagnostics {
                        sigma_sq: c.f64()?,
                        acceptance: c.f64()?,
                        mean_leaves: c.f64()?,
                        mean_depth: c.f64()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            traces.push(ChainTrace { chain, burn_in, iterations });
        }
        if !c.done() {
            return Err(corrupt("trailing bytes in TRAC section"));
        }
    }
    if !cur.done() {
        return Err(corrupt("trailing bytes after last section"));
    }
    Ok(BartModel { meta, ensemble: PosteriorEnsemble { samples, traces, kept_per_chain } })
}

pub fn save_model(model: &BartModel, path: &Path, include_traces: bool) -> Result<()> {
    let bytes = encode(model, include_traces)?;
    fs::write(path, bytes).map_err(|e| BartError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_model(path: &Path) -> Result<BartModel> {
    let bytes = fs::read(path).map_err(|e| BartError::Io { path: path.to_path_buf(), source: e })?;
    decode(&bytes)
}

#[derive(Serialize)]
struct JsonArchive<'a> {
    format_version: u32,
    meta: &'a ModelMeta,
    ensemble: &'a PosteriorEnsemble,
}

/// Human-readable rendering of everything in the archive. Split values of
/// missingness-only rules (stored as NaN) appear as `null`.
pub fn export_json(model: &BartModel) -> Result<String> {
    let doc = JsonArchive { format_version: FORMAT_VERSION, meta: &model.meta, ensemble: &model.ensemble };
    serde_json::to_string_pretty(&doc).map_err(|e| BartError::Invariant(format!("json export: {e}")))
}

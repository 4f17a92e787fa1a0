//! Binary trajectory buffer files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SRLB" | version: u32 | count: u64 | count x (len: u64 | record bytes)
//! ```
//!
//! A record holds one [`TrajectoryTree`]: header fields, every transition
//! with its feature matrix, then the stored returns (if finalized).

use std::path::Path;

use thiserror::Error;

use super::{TrajectoryTree, Transition};
use crate::features::{FeatureMatrix, NUM_FEATURES};

const MAGIC: &[u8; 4] = b"SRLB";
pub const BUFFER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("not a trajectory buffer (bad magic)")]
    BadMagic,
    #[error("buffer version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt record {index}: {reason}")]
    CorruptRecord { index: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_tree(tree: &TrajectoryTree) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(tree.instance_id);
    w.usize(tree.root_id);
    w.usize(tree.tree_size);
    w.usize(tree.transitions().len());
    for t in tree.transitions() {
        w.usize(t.node_id);
        w.usize(t.depth);
        w.usize(t.candidates.len());
        for &c in &t.candidates {
            w.usize(c);
        }
        w.usize(t.features.rows());
        for &v in t.features.as_slice() {
            w.f64(v);
        }
        w.usize(t.action);
        t.rewards.iter().for_each(|&r| w.f64(r));
        t.children.iter().for_each(|&c| w.usize(c));
        w.f64(t.ldb);
        t.child_ldbs.iter().for_each(|&v| w.f64(v));
        match t.behavior_log_prob {
            Some(lp) => {
                w.u8(1);
                w.f64(lp);
            }
            None => w.u8(0),
        }
    }
    let finalized = tree.is_finalized() && !tree.is_empty();
    w.u8(finalized as u8);
    if finalized {
        tree.returns().iter().for_each(|&r| w.f64(r));
    }
    w.0
}

pub fn write_buffer(trees: &[TrajectoryTree]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&BUFFER_VERSION.to_le_bytes());
    w.usize(trees.len());
    for tree in trees {
        let rec = encode_tree(tree);
        w.usize(rec.len());
        w.0.extend_from_slice(&rec);
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    index: u64,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> BufferError {
        BufferError::CorruptRecord {
            index: self.index,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BufferError> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BufferError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, BufferError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, BufferError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt("length overflows usize"))
    }

    /// A count of items of `item_size` bytes that must still fit in the buffer.
    fn count(&mut self, item_size: usize) -> Result<usize, BufferError> {
        let n = self.usize()?;
        if n.saturating_mul(item_size) > self.buf.len() - self.pos {
            return Err(self.corrupt(format!("count {n} exceeds remaining bytes")));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64, BufferError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_tree(r: &mut Reader<'_>) -> Result<TrajectoryTree, BufferError> {
    let instance_id = r.u64()?;
    let root_id = r.usize()?;
    let tree_size = r.usize()?;
    let n = r.count(8)?;
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let node_id = r.usize()?;
        let depth = r.usize()?;
        let k = r.count(8)?;
        let candidates = (0..k).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let rows = r.count(8 * NUM_FEATURES)?;
        if rows != 0 && rows != k {
            return Err(r.corrupt(format!("{rows} feature rows for {k} candidates")));
        }
        let data = (0..rows * NUM_FEATURES)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>, _>>()?;
        let action = r.usize()?;
        if action >= k {
            return Err(r.corrupt(format!("action {action} out of {k} candidates")));
        }
        let rewards = [r.f64()?, r.f64()?];
        let children = [r.usize()?, r.usize()?];
        let ldb = r.f64()?;
        let child_ldbs = [r.f64()?, r.f64()?];
        let behavior_log_prob = match r.u8()? {
            0 => None,
            1 => Some(r.f64()?),
            b => return Err(r.corrupt(format!("bad log-prob flag {b}"))),
        };
        transitions.push(Transition {
            node_id,
            depth,
            candidates,
            features: FeatureMatrix::from_rows(rows, data),
            action,
            rewards,
            children,
            ldb,
            child_ldbs,
            behavior_log_prob,
        });
    }
    let mut tree = TrajectoryTree::new(instance_id, root_id, tree_size, transitions)
        .map_err(|e| r.corrupt(e.to_string()))?;
    match r.u8()? {
        0 => {}
        1 => {
            let returns = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            tree.set_returns(returns);
        }
        b => return Err(r.corrupt(format!("bad returns flag {b}"))),
    }
    Ok(tree)
}

pub fn read_buffer(bytes: &[u8]) -> Result<Vec<TrajectoryTree>, BufferError> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(BufferError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BUFFER_VERSION {
        return Err(BufferError::VersionMismatch {
            found: version,
            expected: BUFFER_VERSION,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let mut outer = Reader {
        buf: bytes,
        pos: 16,
        index: 0,
    };
    let mut trees = Vec::new();
    for index in 0..count {
        outer.index = index;
        let len = outer.usize()?;
        let body = outer.take(len)?;
        let mut r = Reader {
            buf: body,
            pos: 0,
            index,
        };
        let tree = decode_tree(&mut r)?;
        if r.pos != body.len() {
            return Err(r.corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        trees.push(tree);
    }
    if outer.pos != bytes.len() {
        return Err(BufferError::CorruptRecord {
            index: count,
            reason: "trailing bytes after last record".into(),
        });
    }
    Ok(trees)
}

pub fn write_buffer_file(path: impl AsRef<Path>, trees: &[TrajectoryTree]) -> Result<(), BufferError> {
    std::fs::write(path, write_buffer(trees))?;
    Ok(())
}

pub fn read_buffer_file(path: impl AsRef<Path>) -> Result<Vec<TrajectoryTree>, BufferError> {
    read_buffer(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::test_trees::bare;
    use super::super::ReturnConfig;
    use super::*;

    fn three_node() -> TrajectoryTree {
        let mut t = bare(0, [1, 2], 0.25, [1.0, 2.0]);
        t.candidates = vec![3, 5];
        t.action = 1;
        t.features = FeatureMatrix::from_rows(2, (0..2 * NUM_FEATURES).map(|v| v as f64 / 7.0).collect());
        t.behavior_log_prob = Some(-0.7);
        let mut tree = TrajectoryTree::new(9, 0, 3, vec![t]).unwrap();
        tree.finalize(&ReturnConfig::default()).unwrap();
        tree
    }

    #[test]
    fn byte_identical_reserialization() {
        let bytes = write_buffer(&[three_node()]);
        let back = read_buffer(&bytes).unwrap();
        assert_eq!(back, vec![three_node()]);
        assert_eq!(write_buffer(&back), bytes);
    }

    #[test]
    fn truncation_reports_record_index() {
        let bytes = write_buffer(&[three_node(), three_node()]);
        let cut = &bytes[..bytes.len() - 5];
        match read_buffer(cut) {
            Err(BufferError::CorruptRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = write_buffer(&[three_node()]);
        bytes[4] = 9;
        assert!(matches!(read_buffer(&bytes), Err(BufferError::VersionMismatch { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(read_buffer(&bytes), Err(BufferError::BadMagic)));
    }

    #[test]
    fn empty_buffer() {
        assert!(read_buffer(&write_buffer(&[])).unwrap().is_empty());
    }
}

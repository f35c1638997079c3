use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{Index, IvfLayout};
use crate::datastore::Datastore;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: [u8; 4] = *b"KNNI";
const VERSION: u8 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn encode_index(index: &Index) -> Vec<u8> {
    let store = index.store();
    let mut buf = Vec::new();
    buf.extend_from_slice(&INDEX_MAGIC);
    buf.push(VERSION);
    buf.push(index.layout().is_some() as u8);
    buf.extend_from_slice(&[0, 0]);
    put_u32(&mut buf, store.dim() as u32);
    put_u64(&mut buf, store.len() as u64);
    match index.layout() {
        None => {
            put_u32(&mut buf, 0);
            put_u32(&mut buf, 0);
            put_u64(&mut buf, 0);
        }
        Some(l) => {
            put_u32(&mut buf, l.nlist as u32);
            put_u32(&mut buf, l.nprobe as u32);
            put_u64(&mut buf, l.seed);
            for x in &l.centroids {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for &o in &l.offsets {
                put_u64(&mut buf, o as u64);
            }
            for &p in &l.perm {
                put_u32(&mut buf, p);
            }
        }
    }
    buf
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.0.len() {
            return Err(Error::format("truncated index file"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
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
}

pub(crate) fn decode_index(buf: &[u8], store: Arc<Datastore>) -> Result<Index> {
    let mut c = Cursor(buf);
    if c.take(4)? != INDEX_MAGIC {
        return Err(Error::format("bad magic bytes; not an index file"));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported index version {version}")));
    }
    let kind = c.u8()?;
    c.take(2)?;
    let dim = c.u32()? as usize;
    let count = c.u64()?;
    if dim != store.dim() || count != store.len() as u64 {
        return Err(Error::format(format!(
            "index covers {count} entries of dimension {dim}; store has {} of dimension {}",
            store.len(),
            store.dim()
        )));
    }
    let nlist = c.u32()? as usize;
    let nprobe = c.u32()? as usize;
    let seed = c.u64()?;
    let layout = match kind {
        0 => None,
        1 => {
            if nlist == 0 || nprobe == 0 || nprobe > nlist || nlist > store.len() {
                return Err(Error::format("inconsistent IVF parameters"));
            }
            let centroids = (0..nlist * dim).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
            let offsets =
                (0..=nlist).map(|_| c.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let perm = (0..store.len()).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
            let monotone = offsets.windows(2).all(|w| w[0] <= w[1]);
            if offsets[0] != 0 || *offsets.last().unwrap() != store.len() || !monotone {
                return Err(Error::format("invalid IVF cell offsets"));
            }
            let mut seen = vec![false; store.len()];
            for &p in &perm {
                match seen.get_mut(p as usize) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(Error::format("IVF permutation is not a permutation")),
                }
            }
            Some(IvfLayout { nlist, nprobe, seed, centroids, offsets, perm })
        }
        k => return Err(Error::format(format!("unknown index kind {k}"))),
    };
    if !c.0.is_empty() {
        return Err(Error::format("trailing bytes after index"));
    }
    Ok(Index::from_parts(store, layout))
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

/// Loads an index previously saved over `store`.
pub fn load_index(path: &Path, store: Arc<Datastore>) -> Result<Index> {
    decode_index(&fs::read(path)?, store)
}

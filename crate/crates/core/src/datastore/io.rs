use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Datastore, Origin, OriginTable};
use crate::error::{Error, Result};
use crate::lang::LanguageTag;

pub const MAGIC: [u8; 4] = *b"KNND";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 3 + 4 + 8;

/// Contents of the `<name>.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format: String,
    pub target_lang: LanguageTag,
    pub origins: Vec<Origin>,
    pub provenance: Vec<String>,
    pub count: u64,
    pub dim: usize,
    /// Hex SHA-256 of the binary file.
    pub sha256: String,
}

/// `dir/store.kds` → `dir/store.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

pub(crate) fn encoded_len(dim: usize, count: usize) -> u64 {
    let per_row = dim * 4 + 4 + 2 + 4 + 2;
    (HEADER_LEN + count * per_row) as u64
}

pub(crate) fn encode(store: &Datastore) -> Vec<u8> {
    let mut buf = Vec::with_capacity(encoded_len(store.dim, store.len()) as usize);
    buf.extend_from_slice(&MAGIC);
    buf.push(FORMAT_VERSION);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(store.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for x in &store.keys {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in &store.values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in &store.origin_ids {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in &store.sentence_ids {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in &store.positions {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format("truncated datastore file"))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn column<const W: usize, T>(&mut self, n: usize, f: fn([u8; W]) -> T) -> Result<Vec<T>> {
        let bytes = self.take(n.checked_mul(W).ok_or_else(|| Error::format("count overflow"))?)?;
        Ok(bytes.chunks_exact(W).map(|c| f(c.try_into().unwrap())).collect())
    }
}

/// `(dim, keys, values, origin_ids, sentence_ids, positions)`.
type Columns = (usize, Vec<f32>, Vec<u32>, Vec<u16>, Vec<u32>, Vec<u16>);

pub(crate) fn decode(buf: &[u8]) -> Result<Columns> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("bad magic bytes; not a datastore file"));
    }
    let version = r.take(1)?[0];
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported datastore version {version}")));
    }
    r.take(3)?;
    let dim = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if dim == 0 {
        return Err(Error::format("datastore dimension is zero"));
    }
    let count = usize::try_from(count).map_err(|_| Error::format("count overflow"))?;
    let nkeys = count.checked_mul(dim).ok_or_else(|| Error::format("count overflow"))?;
    let keys = r.column(nkeys, f32::from_le_bytes)?;
    let values = r.column(count, u32::from_le_bytes)?;
    let origin_ids = r.column(count, u16::from_le_bytes)?;
    let sentence_ids = r.column(count, u32::from_le_bytes)?;
    let positions = r.column(count, u16::from_le_bytes)?;
    if r.at != buf.len() {
        return Err(Error::format("trailing bytes after datastore columns"));
    }
    Ok((dim, keys, values, origin_ids, sentence_ids, positions))
}

/// Writes a sealed store to `path` plus its JSON sidecar.
pub fn save(store: &Datastore, path: &Path) -> Result<StoreMeta> {
    if !store.is_sealed() {
        return Err(Error::InvalidState("only sealed stores can be saved".into()));
    }
    let bytes = encode(store);
    let meta = StoreMeta {
        format: "KDS1".into(),
        target_lang: store.target_lang.clone(),
        origins: store.origins.iter().cloned().collect(),
        provenance: store.provenance.clone(),
        count: store.len() as u64,
        dim: store.dim,
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    fs::write(path, &bytes)?;
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(meta)
}

/// Reads a store written by [`save`]. The result is sealed.
pub fn load(path: &Path) -> Result<Datastore> {
    let bytes = fs::read(path)?;
    let meta: StoreMeta = serde_json::from_slice(&fs::read(meta_path(path))?)?;
    let (dim, keys, values, origin_ids, sentence_ids, positions) = decode(&bytes)?;
    if hex::encode(Sha256::digest(&bytes)) != meta.sha256 {
        return Err(Error::format("datastore content hash does not match its metadata"));
    }
    if meta.dim != dim || meta.count != values.len() as u64 {
        return Err(Error::format("datastore header disagrees with its metadata"));
    }
    meta.target_lang.validate().map_err(|e| Error::format(e.to_string()))?;
    let origins = OriginTable::from_entries(meta.origins)?;
    if let Some(&bad) = origin_ids.iter().find(|&&o| o as usize >= origins.len()) {
        return Err(Error::format(format!("origin id {bad} out of range")));
    }
    if keys.iter().any(|x| !x.is_finite()) {
        return Err(Error::format("non-finite key component"));
    }
    Ok(Datastore {
        dim,
        target_lang: meta.target_lang,
        origins,
        keys,
        values,
        origin_ids,
        sentence_ids,
        positions,
        provenance: meta.provenance,
        sealed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Entry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lang(c: &str) -> LanguageTag {
        LanguageTag::new(c).unwrap()
    }

    fn random_store(n: usize, dim: usize, seed: u64) -> Datastore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Datastore::new(dim, lang("en")).unwrap();
        s.add_origin(&lang("be"), &lang("en")).unwrap();
        s.add_origin(&lang("uk"), &lang("en")).unwrap();
        s.add_provenance("random test store").unwrap();
        for i in 0..n {
            let key: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.append_entry(&Entry {
                key,
                value: rng.gen_range(0..1000),
                origin: (i % 2) as u16,
                sentence_id: (i / 10) as u32,
                position: (i % 10) as u16,
            })
            .unwrap();
        }
        s.seal();
        s
    }

    #[test]
    fn header_layout() {
        let s = random_store(3, 2, 1);
        let b = encode(&s);
        assert_eq!(&b[..4], &[0x4B, 0x4E, 0x4E, 0x44]);
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..8], &[0, 0, 0]);
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..20], &3u64.to_le_bytes());
        assert_eq!(&b[20..24], &s.keys()[0].to_le_bytes());
        assert_eq!(b.len() as u64, encoded_len(2, 3));
        // values block follows the 6 keys
        assert_eq!(&b[44..48], &s.values()[0].to_le_bytes());
    }

    #[test]
    fn round_trip_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.kds");
        let s = random_store(3, 4, 7);
        save(&s, &path).unwrap();
        assert!(dir.path().join("s.meta.json").exists());
        let t = load(&path).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn round_trip_large_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.kds"), dir.path().join("b.kds"));
        let s = random_store(100_000, 8, 3);
        let m1 = save(&s, &p1).unwrap();
        let t = load(&p1).unwrap();
        let m2 = save(&t, &p2).unwrap();
        let h1 = hex::encode(Sha256::digest(fs::read(&p1).unwrap()));
        let h2 = hex::encode(Sha256::digest(fs::read(&p2).unwrap()));
        assert_eq!(h1, h2);
        assert_eq!(m1.sha256, h1);
        assert_eq!(m1, m2);
    }

    #[test]
    fn unsealed_store_cannot_be_saved() {
        let dir = tempfile::tempdir().unwrap();
        let s = Datastore::new(2, lang("en")).unwrap();
        assert!(matches!(save(&s, &dir.path().join("x.kds")), Err(Error::InvalidState(_))));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let s = random_store(5, 3, 2);
        let good = encode(&s);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Format(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode(&bad_version), Err(Error::Format(_))));

        for cut in [0, 3, 10, 19, 20, good.len() - 1] {
            assert!(matches!(decode(&good[..cut]), Err(Error::Format(_))), "cut at {cut}");
        }

        let mut huge = good.clone();
        huge[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&huge), Err(Error::Format(_))));
    }

    #[test]
    fn tampered_file_fails_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.kds");
        save(&random_store(4, 2, 5), &path).unwrap();
        let mut b = fs::read(&path).unwrap();
        let last = b.len() - 1;
        b[last] ^= 1;
        fs::write(&path, b).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.is_data_error());
    }

    #[test]
    fn meta_path_replaces_extension() {
        assert_eq!(meta_path(Path::new("/a/b/store.kds")), Path::new("/a/b/store.meta.json"));
        assert_eq!(meta_path(Path::new("x")), Path::new("x.meta.json"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn encode_decode_identity(n in 0usize..40, dim in 1usize..6, seed in any::<u64>()) {
            let s = random_store(n, dim, seed);
            let (d, keys, values, origins, sids, pos) = decode(&encode(&s)).unwrap();
            prop_assert_eq!(d, dim);
            prop_assert_eq!(keys.as_slice(), s.keys());
            prop_assert_eq!(values.as_slice(), s.values());
            prop_assert_eq!(origins.as_slice(), s.origin_ids());
            prop_assert_eq!(sids.as_slice(), s.sentence_ids());
            prop_assert_eq!(pos.as_slice(), s.positions());
        }
    }
}

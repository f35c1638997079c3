//! Columnar key-value datastores of translation contexts.
//!
//! A [`Datastore`] holds one row per cached target token: the context vector
//! (key), the token id (value), the bilingual origin the row came from, and
//! the `(sentence_id, position)` coordinate of the token in its corpus. The
//! coordinate is what lets two stores built over the same target sentences be
//! joined row by row (see [`crate::xmap::extract_aligned_pairs`]).
//!
//! Stores are built single-writer and then sealed. A sealed store never
//! changes and can be shared across threads behind an `Arc`.

mod io;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::io::{load, meta_path, save, StoreMeta, FORMAT_VERSION, MAGIC};
use crate::error::{Error, Result};
use crate::lang::LanguageTag;
use crate::retrieval::ContextProvider;

/// Maximum number of distinct origins; origin ids are 16-bit.
pub const MAX_ORIGINS: usize = u16::MAX as usize;

/// One datastore row.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: Vec<f32>,
    pub value: u32,
    pub origin: u16,
    pub sentence_id: u32,
    pub position: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub source: LanguageTag,
    pub target: LanguageTag,
    pub label: String,
}

/// Ordered list of the bilingual `(source, target)` pairs rows came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OriginTable {
    entries: Vec<Origin>,
}

impl OriginTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u16) -> Option<&Origin> {
        self.entries.get(id as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Origin> {
        self.entries.iter()
    }

    pub fn find(&self, source: &LanguageTag, target: &LanguageTag) -> Option<u16> {
        self.entries
            .iter()
            .position(|o| o.source.same_language(source) && o.target.same_language(target))
            .map(|i| i as u16)
    }

    /// Returns the id of `(source, target)`, adding it if absent.
    pub fn intern(&mut self, source: &LanguageTag, target: &LanguageTag) -> Result<u16> {
        if let Some(id) = self.find(source, target) {
            return Ok(id);
        }
        if self.entries.len() >= MAX_ORIGINS {
            return Err(Error::CapacityExceeded(format!(
                "origin table holds at most {MAX_ORIGINS} entries"
            )));
        }
        self.entries.push(Origin {
            source: source.clone(),
            target: target.clone(),
            label: format!("{}-{}", source.code(), target.code()),
        });
        Ok((self.entries.len() - 1) as u16)
    }

    pub(crate) fn from_entries(entries: Vec<Origin>) -> Result<Self> {
        let mut table = OriginTable::new();
        for o in entries {
            if table.find(&o.source, &o.target).is_some() {
                return Err(Error::format(format!("duplicate origin {}", o.label)));
            }
            if table.entries.len() >= MAX_ORIGINS {
                return Err(Error::format("origin table too large"));
            }
            table.entries.push(o);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginCount {
    pub origin: u16,
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreStats {
    pub count: u64,
    pub dim: usize,
    pub target_lang: String,
    pub per_origin: Vec<OriginCount>,
    /// Size of the binary file this store serializes to.
    pub bytes_on_disk: u64,
    pub sealed: bool,
}

/// Source/target sentence pairs a datastore can be built from.
pub trait ParallelCorpus {
    type Source;

    fn source_lang(&self) -> &LanguageTag;
    fn target_lang(&self) -> &LanguageTag;
    fn num_pairs(&self) -> usize;
    /// `(sentence_id, source, target tokens)` of the `i`-th pair.
    fn pair(&self, i: usize) -> (u32, &Self::Source, &[u32]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datastore {
    dim: usize,
    target_lang: LanguageTag,
    origins: OriginTable,
    keys: Vec<f32>,
    values: Vec<u32>,
    origin_ids: Vec<u16>,
    sentence_ids: Vec<u32>,
    positions: Vec<u16>,
    provenance: Vec<String>,
    sealed: bool,
}

impl Datastore {
    /// Creates an empty, unsealed store.
    pub fn new(dim: usize, target_lang: LanguageTag) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("datastore dimension must be at least 1"));
        }
        target_lang.validate()?;
        Ok(Datastore {
            dim,
            target_lang,
            origins: OriginTable::new(),
            keys: Vec::new(),
            values: Vec::new(),
            origin_ids: Vec::new(),
            sentence_ids: Vec::new(),
            positions: Vec::new(),
            provenance: Vec::new(),
            sealed: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn target_lang(&self) -> &LanguageTag {
        &self.target_lang
    }

    pub fn origins(&self) -> &OriginTable {
        &self.origins
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    /// Free-form notes describing how the store was produced.
    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn add_provenance(&mut self, note: impl Into<String>) -> Result<()> {
        self.check_writable()?;
        self.provenance.push(note.into());
        Ok(())
    }

    pub fn add_origin(&mut self, source: &LanguageTag, target: &LanguageTag) -> Result<u16> {
        self.check_writable()?;
        self.origins.intern(source, target)
    }

    /// All keys as one contiguous row-major `len × dim` block.
    pub fn keys(&self) -> &[f32] {
        &self.keys
    }

    pub fn key(&self, i: usize) -> &[f32] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn origin_ids(&self) -> &[u16] {
        &self.origin_ids
    }

    pub fn sentence_ids(&self) -> &[u32] {
        &self.sentence_ids
    }

    pub fn positions(&self) -> &[u16] {
        &self.positions
    }

    pub fn entry(&self, i: usize) -> Entry {
        Entry {
            key: self.key(i).to_vec(),
            value: self.values[i],
            origin: self.origin_ids[i],
            sentence_id: self.sentence_ids[i],
            position: self.positions[i],
        }
    }

    fn check_writable(&self) -> Result<()> {
        if self.sealed {
            Err(Error::StoreSealed)
        } else {
            Ok(())
        }
    }

    pub fn append_entry(&mut self, entry: &Entry) -> Result<()> {
        self.push_row(&entry.key, entry.value, entry.origin, entry.sentence_id, entry.position)
    }

    fn push_row(
        &mut self,
        key: &[f32],
        value: u32,
        origin: u16,
        sentence_id: u32,
        position: u16,
    ) -> Result<()> {
        self.check_writable()?;
        if key.len() != self.dim {
            return Err(Error::invalid(format!(
                "key has dimension {}, store expects {}",
                key.len(),
                self.dim
            )));
        }
        if !key.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("key components must be finite"));
        }
        if origin as usize >= self.origins.len() {
            return Err(Error::invalid(format!("unknown origin id {origin}")));
        }
        self.keys.extend_from_slice(key);
        self.values.push(value);
        self.origin_ids.push(origin);
        self.sentence_ids.push(sentence_id);
        self.positions.push(position);
        Ok(())
    }

    /// Appends one teacher-forced entry per target token of `corpus`.
    ///
    /// The context for position `t` is computed from the gold prefix
    /// `y[..t]`. Entries are tagged with the corpus's `(source, target)`
    /// origin, added to the origin table when absent.
    pub fn build_from_corpus<P, C>(&mut self, corpus: &C, provider: &P) -> Result<()>
    where
        P: ContextProvider,
        C: ParallelCorpus<Source = P::Source> + Sync,
        P::Source: Sync,
    {
        self.check_writable()?;
        if !corpus.target_lang().same_language(&self.target_lang) {
            return Err(Error::invalid(format!(
                "corpus targets {}, store targets {}",
                corpus.target_lang(),
                self.target_lang
            )));
        }
        if provider.dim() != self.dim {
            return Err(Error::invalid(format!(
                "provider dimension {} does not match store dimension {}",
                provider.dim(),
                self.dim
            )));
        }
        let origin = self.origins.intern(corpus.source_lang(), corpus.target_lang())?;

        let contexts: Vec<Vec<f32>> = (0..corpus.num_pairs())
            .into_par_iter()
            .map(|i| {
                let (_, source, target) = corpus.pair(i);
                let mut keys = Vec::with_capacity(target.len() * self.dim);
                for t in 0..target.len() {
                    keys.extend(provider.context(source, &target[..t])?);
                }
                Ok(keys)
            })
            .collect::<Result<_>>()?;

        for (i, keys) in contexts.iter().enumerate() {
            let (sentence_id, _, target) = corpus.pair(i);
            if target.len() > u16::MAX as usize {
                return Err(Error::invalid(format!(
                    "sentence {sentence_id} has {} tokens; positions are 16-bit",
                    target.len()
                )));
            }
            for (t, &token) in target.iter().enumerate() {
                let key = &keys[t * self.dim..(t + 1) * self.dim];
                self.push_row(key, token, origin, sentence_id, t as u16)?;
            }
        }
        Ok(())
    }

    /// Counts rows per origin id, in origin-table order.
    pub fn origin_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.origins.len()];
        for &o in &self.origin_ids {
            counts[o as usize] += 1;
        }
        counts
    }

    pub fn stats(&self) -> StoreStats {
        let per_origin = self
            .origin_counts()
            .into_iter()
            .zip(self.origins.iter())
            .enumerate()
            .map(|(i, (count, o))| OriginCount { origin: i as u16, label: o.label.clone(), count })
            .collect();
        StoreStats {
            count: self.len() as u64,
            dim: self.dim,
            target_lang: self.target_lang.code().to_owned(),
            per_origin,
            bytes_on_disk: io::encoded_len(self.dim, self.len()),
            sealed: self.sealed,
        }
    }

    /// Copies every column but the keys, which are produced by `f(row, key)`.
    pub(crate) fn map_keys<F>(&self, mut f: F) -> Result<Datastore>
    where
        F: FnMut(&[f32]) -> Vec<f32>,
    {
        let mut keys = Vec::with_capacity(self.keys.len());
        for i in 0..self.len() {
            let k = f(self.key(i));
            if k.len() != self.dim || !k.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid("mapped key must be finite with the store dimension"));
            }
            keys.extend(k);
        }
        Ok(Datastore { keys, sealed: false, ..self.clone() })
    }
}

/// Sum of the sizes of the bilingual stores merged into one multilingual store.
pub fn merged_size(sizes: &[u64]) -> u64 {
    sizes.iter().sum()
}

/// Concatenates sealed stores sharing dimension and target language.
///
/// The output origin table is the deduplicated union of the inputs' tables
/// (first occurrence wins) and every row's origin id is rewritten into it.
/// Rows keep input order: all of store `i` precedes store `i + 1`.
pub fn merge(stores: &[&Datastore]) -> Result<Datastore> {
    let first = stores.first().ok_or_else(|| Error::invalid("merge needs at least one store"))?;
    for s in stores {
        if !s.is_sealed() {
            return Err(Error::invalid("merge inputs must be sealed"));
        }
        if s.dim != first.dim {
            return Err(Error::invalid(format!("mixed dimensions {} and {}", first.dim, s.dim)));
        }
        if !s.target_lang.same_language(&first.target_lang) {
            return Err(Error::invalid(format!(
                "mixed target languages {} and {}",
                first.target_lang, s.target_lang
            )));
        }
    }

    let mut out = Datastore::new(first.dim, first.target_lang.clone())?;
    let total: usize = stores.iter().map(|s| s.len()).sum();
    out.keys.reserve(total * first.dim);
    out.values.reserve(total);
    out.origin_ids.reserve(total);
    out.sentence_ids.reserve(total);
    out.positions.reserve(total);

    for s in stores {
        let remap: Vec<u16> = s
            .origins
            .iter()
            .map(|o| out.origins.intern(&o.source, &o.target))
            .collect::<Result<_>>()?;
        out.keys.extend_from_slice(&s.keys);
        out.values.extend_from_slice(&s.values);
        out.origin_ids.extend(s.origin_ids.iter().map(|&o| remap[o as usize]));
        out.sentence_ids.extend_from_slice(&s.sentence_ids);
        out.positions.extend_from_slice(&s.positions);
    }
    let labels: Vec<&str> = out.origins.iter().map(|o| o.label.as_str()).collect();
    out.provenance.push(format!("merge of {} stores: {}", stores.len(), labels.join(",")));
    out.seal();
    Ok(out)
}

/// Maps each `(sentence_id, position)` coordinate to its row.
pub(crate) fn coordinate_index(store: &Datastore) -> Result<HashMap<(u32, u16), usize>> {
    let mut map = HashMap::with_capacity(store.len());
    for i in 0..store.len() {
        let coord = (store.sentence_ids[i], store.positions[i]);
        if map.insert(coord, i).is_some() {
            return Err(Error::invalid(format!(
                "coordinate (sentence {}, position {}) occurs twice; expected a bilingual store",
                coord.0, coord.1
            )));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> LanguageTag {
        LanguageTag::new("en").unwrap()
    }

    fn lang(code: &str) -> LanguageTag {
        LanguageTag::new(code).unwrap()
    }

    fn store_with(code: &str, n: usize, dim: usize) -> Datastore {
        let mut s = Datastore::new(dim, en()).unwrap();
        let o = s.add_origin(&lang(code), &en()).unwrap();
        for i in 0..n {
            let key: Vec<f32> = (0..dim).map(|j| (i * dim + j) as f32).collect();
            s.append_entry(&Entry {
                key,
                value: i as u32 % 7,
                origin: o,
                sentence_id: i as u32 / 5,
                position: (i % 5) as u16,
            })
            .unwrap();
        }
        s.seal();
        s
    }

    #[test]
    fn create_store() {
        let s = Datastore::new(32, en()).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(s.dim(), 32);
        assert!(!s.is_sealed());
        assert!(s.origins().is_empty());
        assert_eq!(Datastore::new(1, en()).unwrap().dim(), 1);
        assert!(matches!(Datastore::new(0, en()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn append_counts_and_keeps_duplicates() {
        let mut s = Datastore::new(2, en()).unwrap();
        let o = s.add_origin(&lang("be"), &en()).unwrap();
        let e = Entry { key: vec![1.0, 2.0], value: 3, origin: o, sentence_id: 0, position: 0 };
        s.append_entry(&e).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.entry(0), e);
        s.append_entry(&e).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.entry(1), e);
    }

    #[test]
    fn append_rejects_bad_rows() {
        let mut s = Datastore::new(2, en()).unwrap();
        let o = s.add_origin(&lang("be"), &en()).unwrap();
        let bad_dim = Entry { key: vec![1.0], value: 0, origin: o, sentence_id: 0, position: 0 };
        assert!(matches!(s.append_entry(&bad_dim), Err(Error::InvalidArgument(_))));
        let bad_origin = Entry { key: vec![1.0, 1.0], value: 0, origin: 9, sentence_id: 0, position: 0 };
        assert!(matches!(s.append_entry(&bad_origin), Err(Error::InvalidArgument(_))));
        let nan = Entry { key: vec![f32::NAN, 1.0], value: 0, origin: o, sentence_id: 0, position: 0 };
        assert!(s.append_entry(&nan).is_err());
        assert_eq!(s.len(), 0);
    }

    #[test]
    fn sealed_store_is_immutable() {
        let mut s = store_with("be", 3, 2);
        let before = s.clone();
        let e = Entry { key: vec![0.0, 0.0], value: 0, origin: 0, sentence_id: 0, position: 0 };
        assert!(matches!(s.append_entry(&e), Err(Error::StoreSealed)));
        assert!(matches!(s.add_origin(&lang("uk"), &en()), Err(Error::StoreSealed)));
        assert!(matches!(s.add_provenance("x"), Err(Error::StoreSealed)));
        assert_eq!(s, before);
    }

    #[test]
    fn merge_counts_and_origins() {
        let a = store_with("be", 100, 4);
        let b = store_with("uk", 50, 4);
        let m = merge(&[&a, &b]).unwrap();
        assert!(m.is_sealed());
        assert_eq!(m.len(), 150);
        assert_eq!(m.origin_counts(), vec![100, 50]);
        let stats = m.stats();
        assert_eq!(stats.per_origin.iter().map(|o| o.count).sum::<u64>(), 150);
        // Input order is preserved.
        assert_eq!(m.key(100), b.key(0));
        assert_eq!(m.key(99), a.key(99));
    }

    #[test]
    fn merge_single_is_identity_up_to_renumbering() {
        let a = store_with("be", 10, 3);
        let m = merge(&[&a]).unwrap();
        assert_eq!(m.keys(), a.keys());
        assert_eq!(m.values(), a.values());
        assert_eq!(m.sentence_ids(), a.sentence_ids());
        assert_eq!(m.positions(), a.positions());
        assert_eq!(m.origins(), a.origins());
    }

    #[test]
    fn merge_dedups_shared_origins() {
        let a = store_with("be", 4, 2);
        let b = store_with("uk", 4, 2);
        let ab = merge(&[&a, &b]).unwrap();
        let m = merge(&[&b, &ab]).unwrap();
        assert_eq!(m.origins().len(), 2);
        assert_eq!(m.origin_counts(), vec![8, 4]);
        assert_eq!(m.origins().get(0).unwrap().label, "uk-en");
    }

    #[test]
    fn merge_rejects_incompatible_inputs() {
        let a = store_with("be", 4, 2);
        let b = store_with("uk", 4, 3);
        assert!(matches!(merge(&[&a, &b]), Err(Error::InvalidArgument(_))));
        let mut c = Datastore::new(2, lang("de")).unwrap();
        c.seal();
        assert!(matches!(merge(&[&a, &c]), Err(Error::InvalidArgument(_))));
        let d = Datastore::new(2, en()).unwrap();
        assert!(matches!(merge(&[&a, &d]), Err(Error::InvalidArgument(_))));
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn origin_table_overflow() {
        let mut t = OriginTable::new();
        for i in 0..MAX_ORIGINS {
            let src = LanguageTag::new(&base26(i)).unwrap();
            t.intern(&src, &en()).unwrap();
        }
        let err = t.intern(&LanguageTag::new("zzzzzzzz").unwrap(), &en()).unwrap_err();
        assert!(matches!(err, Error::CapacityExceeded(_)));
    }

    fn base26(mut i: usize) -> String {
        let mut s = String::new();
        loop {
            s.push((b'a' + (i % 26) as u8) as char);
            i /= 26;
            if i == 0 {
                break s;
            }
        }
    }

    #[test]
    fn stats_of_empty_store() {
        let mut s = Datastore::new(8, en()).unwrap();
        s.add_origin(&lang("be"), &en()).unwrap();
        let st = s.stats();
        assert_eq!(st.count, 0);
        assert_eq!(st.per_origin[0].count, 0);
        assert!(!st.sealed);
        s.seal();
        assert!(s.stats().sealed);
    }

    #[test]
    fn slavic_sizes_sum_to_reported_grouping_store() {
        let sizes = [
            116_000, 146_000, 520_000, 683_000, 1_600_000, 2_700_000, 2_900_000, 3_300_000,
            3_600_000, 4_700_000, 4_700_000, 5_600_000,
        ];
        assert_eq!(merged_size(&sizes), 30_565_000);
    }

    proptest::proptest! {
        #[test]
        fn merge_is_associative(na in 0usize..20, nb in 0usize..20, nc in 0usize..20) {
            let (a, b, c) = (store_with("be", na, 2), store_with("uk", nb, 2), store_with("be", nc, 2));
            let left = merge(&[&merge(&[&a, &b]).unwrap(), &c]).unwrap();
            let right = merge(&[&a, &merge(&[&b, &c]).unwrap()]).unwrap();
            let flat = merge(&[&a, &b, &c]).unwrap();
            for m in [&left, &right] {
                proptest::prop_assert_eq!(m.keys(), flat.keys());
                proptest::prop_assert_eq!(m.values(), flat.values());
                proptest::prop_assert_eq!(m.origin_ids(), flat.origin_ids());
                proptest::prop_assert_eq!(m.origins(), flat.origins());
                proptest::prop_assert_eq!(m.sentence_ids(), flat.sentence_ids());
            }
            proptest::prop_assert_eq!(flat.len(), na + nb + nc);
        }
    }
}

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::stream;
use super::World;
use crate::datastore::ParallelCorpus;
use crate::error::{Error, Result};
use crate::lang::LanguageTag;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    #[serde(rename = "sentence_id")]
    pub id: u32,
    pub tokens: Vec<u32>,
}

/// Sentence pairs `(x, y)` for one `(source, target)` direction. In the toy
/// world the source and target share one concept sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub source: LanguageTag,
    pub target: LanguageTag,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

impl ParallelCorpus for Corpus {
    type Source = Sentence;

    fn source_lang(&self) -> &LanguageTag {
        &self.source
    }

    fn target_lang(&self) -> &LanguageTag {
        &self.target
    }

    fn num_pairs(&self) -> usize {
        self.sentences.len()
    }

    fn pair(&self, i: usize) -> (u32, &Sentence, &[u32]) {
        let s = &self.sentences[i];
        (s.id, s, &s.tokens)
    }
}

/// Sentences with ids `first_id .. first_id + n`.
///
/// Lengths are uniform on `[max(3, m/2), m + m/2]` and tokens uniform over the
/// vocabulary, both keyed by sentence id only, so every language sees the
/// same sequence for a given id.
pub fn gen_corpus(world: &World, lang: &LanguageTag, n: usize, mean_length: usize, first_id: u32) -> Result<Corpus> {
    let source = world.language(lang.code())?;
    if mean_length == 0 {
        return Err(Error::invalid("mean sentence length must be positive"));
    }
    if first_id as u64 + n as u64 > u32::MAX as u64 + 1 {
        return Err(Error::invalid("sentence ids overflow 32 bits"));
    }
    let lo = (mean_length / 2).max(3);
    let hi = (mean_length + mean_length / 2).clamp(lo, u16::MAX as usize);
    let lo = lo.min(hi);
    let seed = world.config().seed;
    let v = world.vocab_size() as u32;
    let sentences = (0..n as u32)
        .map(|i| {
            let id = first_id + i;
            let len = stream(seed, "length", &[id as u64]).gen_range(lo..=hi);
            let mut r = stream(seed, "tokens", &[id as u64]);
            Sentence { id, tokens: (0..len).map(|_| r.gen_range(0..v)).collect() }
        })
        .collect();
    Ok(Corpus { source, target: world.target_lang(), sentences })
}

pub fn write_corpus_jsonl<W: Write>(mut w: W, corpus: &Corpus) -> Result<()> {
    for s in &corpus.sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_jsonl<R: BufRead>(r: R, source: LanguageTag, target: LanguageTag) -> Result<Corpus> {
    let mut sentences = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sentence = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("corpus line {}: {e}", n + 1)))?;
        if s.tokens.len() > u16::MAX as usize {
            return Err(Error::format(format!("corpus line {}: sentence too long", n + 1)));
        }
        sentences.push(s);
    }
    Ok(Corpus { source, target, sentences })
}

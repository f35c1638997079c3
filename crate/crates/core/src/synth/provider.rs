use super::{Sentence, World};
use crate::error::Result;
use crate::lang::LanguageTag;
use crate::retrieval::{ContextProvider, ProbabilityDistribution};

/// The toy translation model for one source language.
///
/// Contexts depend on the source sentence and the target position only, so
/// the decoder's own prefix never changes what is retrieved. Output length is
/// the source length; the vocabulary has no end-of-sequence token.
#[derive(Debug, Clone, Copy)]
pub struct ToyProvider<'w> {
    world: &'w World,
    lang: usize,
}

impl<'w> ToyProvider<'w> {
    pub fn new(world: &'w World, lang: &LanguageTag) -> Result<Self> {
        Ok(ToyProvider { world, lang: world.lang_index(lang.code())? })
    }

    pub fn world(&self) -> &'w World {
        self.world
    }
}

impl ContextProvider for ToyProvider<'_> {
    type Source = Sentence;

    fn dim(&self) -> usize {
        self.world.dim()
    }

    fn vocab_size(&self) -> usize {
        self.world.vocab_size()
    }

    fn max_len(&self, source: &Sentence) -> Option<usize> {
        Some(source.tokens.len())
    }

    fn context(&self, source: &Sentence, prefix: &[u32]) -> Result<Vec<f32>> {
        let lang = &self.world.langs[self.lang].tag;
        super::toy_context(self.world, lang, source, prefix.len())
    }

    fn base_distribution(&self, _: &Sentence, _: &[u32], context: &[f32]) -> Result<ProbabilityDistribution> {
        self.world.base_at(self.lang, context)
    }
}

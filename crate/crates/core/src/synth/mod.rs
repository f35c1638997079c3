//! A seeded toy multilingual world standing in for a neural translation model.
//!
//! Every target token `y` is a concept with a unit-norm embedding `e(y)`.
//! Each source language `ℓ` sees the target side through a linear distortion
//! `M_ℓ = R_g (I + α_ℓ G_ℓ)`, where `R_g` is a random rotation shared by the
//! language's group and `G_ℓ` a random matrix of unit spectral norm. The
//! translation context at target position `t` is `M_ℓ (e(y_t) + ε)` with
//! Gaussian noise `ε`. The base model scores tokens against corrupted
//! embeddings `ê(y)`, so it is competent but imperfect.

mod corpus;
mod provider;
pub mod rng;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use self::corpus::{gen_corpus, read_corpus_jsonl, write_corpus_jsonl, Corpus, Sentence};
pub use self::provider::ToyProvider;
use self::rng::{gaussians, stream};
use crate::datastore::{Datastore, Entry};
use crate::error::{Error, Result};
use crate::lang::LanguageTag;
use crate::retrieval::ProbabilityDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub code: String,
    pub group: String,
    #[serde(default)]
    pub alpha: f64,
}

impl LanguageSpec {
    pub fn new(code: &str, group: &str, alpha: f64) -> Self {
        LanguageSpec { code: code.into(), group: group.into(), alpha }
    }
}

fn d_dim() -> usize {
    32
}
fn d_vocab() -> usize {
    64
}
fn d_target() -> String {
    "en".into()
}
fn d_sigma() -> f64 {
    1.2
}
fn d_sigma_base() -> f64 {
    0.9
}
fn d_tau() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_vocab")]
    pub vocab_size: usize,
    pub languages: Vec<LanguageSpec>,
    #[serde(default = "d_target")]
    pub target_lang: String,
    /// Context noise scale; `ε ~ N(0, σ²/d · I)`.
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    /// Base-model embedding corruption scale.
    #[serde(default = "d_sigma_base")]
    pub sigma_base: f64,
    #[serde(default = "d_tau")]
    pub tau_base: f64,
    #[serde(default)]
    pub seed: u64,
    /// Replace every group rotation with the identity.
    #[serde(default)]
    pub identity_rotations: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig::reference(42)
    }
}

impl WorldConfig {
    /// Three groups of three languages, the first of each group low-resource
    /// by convention of the corpus sizes chosen for it.
    pub fn reference(seed: u64) -> Self {
        let groups = [("slavic", ["be", "uk", "ru"]), ("romance", ["gl", "pt", "es"]), ("turkic", ["kk", "az", "tr"])];
        let languages = groups
            .iter()
            .flat_map(|(g, codes)| codes.iter().map(move |c| LanguageSpec::new(c, g, 0.5)))
            .collect();
        WorldConfig {
            dim: d_dim(),
            vocab_size: d_vocab(),
            languages,
            target_lang: d_target(),
            sigma: d_sigma(),
            sigma_base: d_sigma_base(),
            tau_base: d_tau(),
            seed,
            identity_rotations: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.dim < 2 {
            return Err(Error::invalid("world needs vocab_size ≥ 2 and dim ≥ 2"));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(Error::invalid("vocabulary too large"));
        }
        if !(self.sigma >= 0.0 && self.sigma_base >= 0.0 && self.sigma.is_finite() && self.sigma_base.is_finite()) {
            return Err(Error::invalid("noise scales must be finite and non-negative"));
        }
        if self.tau_base.is_nan() || self.tau_base <= 0.0 {
            return Err(Error::invalid("base temperature must be positive"));
        }
        LanguageTag::new(&self.target_lang)?;
        let mut seen = std::collections::HashSet::new();
        for l in &self.languages {
            LanguageTag::new(&l.code)?;
            if !(l.alpha >= 0.0 && l.alpha.is_finite()) {
                return Err(Error::invalid(format!("alpha for {} must be non-negative", l.code)));
            }
            if l.code == self.target_lang {
                return Err(Error::invalid("source languages must differ from the target"));
            }
            if !seen.insert(&l.code) {
                return Err(Error::invalid(format!("language {} listed twice", l.code)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LangWorld {
    tag: LanguageTag,
    m: DMatrix<f64>,
    /// `M_ℓ ê(y)` for every token, row-major `V × d`.
    protos: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    embeddings: Vec<f64>,
    base_embeddings: Vec<f64>,
    rotations: BTreeMap<String, DMatrix<f64>>,
    langs: Vec<LangWorld>,
    fingerprint: String,
}

fn gaussian_matrix(seed: u64, tag: &str, d: usize) -> DMatrix<f64> {
    let mut rng = stream(seed, tag, &[]);
    DMatrix::from_row_slice(d, d, &gaussians(&mut rng, d * d))
}

/// Haar-style random orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
fn random_orthogonal(seed: u64, tag: &str, d: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(seed, tag, d).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn gen_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let (d, v, seed) = (config.dim, config.vocab_size, config.seed);

    let mut embeddings = Vec::with_capacity(v * d);
    let mut base_embeddings = Vec::with_capacity(v * d);
    for y in 0..v as u64 {
        let mut e = gaussians(&mut stream(seed, "embedding", &[y]), d);
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        e.iter_mut().for_each(|x| *x /= norm);
        let noise = gaussians(&mut stream(seed, "base-noise", &[y]), d);
        let scale = config.sigma_base / (d as f64).sqrt();
        base_embeddings.extend(e.iter().zip(&noise).map(|(a, n)| a + scale * n));
        embeddings.extend(e);
    }

    let mut rotations = BTreeMap::new();
    for l in &config.languages {
        rotations.entry(l.group.clone()).or_insert_with(|| {
            if config.identity_rotations {
                DMatrix::identity(d, d)
            } else {
                random_orthogonal(seed, &format!("rotation/{}", l.group), d)
            }
        });
    }

    let base = DMatrix::from_row_slice(v, d, &base_embeddings);
    let mut langs = Vec::new();
    for l in &config.languages {
        let mut g = gaussian_matrix(seed, &format!("distortion/{}", l.code), d);
        let spectral = g.clone().singular_values().max();
        g /= spectral;
        let m = &rotations[&l.group] * (DMatrix::identity(d, d) + g * l.alpha);
        // Rows of base·Mᵀ are M·ê(y).
        let protos = (&base * m.transpose()).transpose().as_slice().to_vec();
        langs.push(LangWorld { tag: LanguageTag::new(&l.code)?.with_grouping(&l.group), m, protos });
    }

    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for x in embeddings.iter().chain(&base_embeddings) {
        h.update(x.to_le_bytes());
    }
    for l in &langs {
        for x in l.m.iter() {
            h.update(x.to_le_bytes());
        }
    }
    let fingerprint = hex::encode(h.finalize());

    Ok(World { config: config.clone(), embeddings, base_embeddings, rotations, langs, fingerprint })
}

impl World {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Hex SHA-256 over the configuration and every generated parameter.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn target_lang(&self) -> LanguageTag {
        LanguageTag::new(&self.config.target_lang).expect("validated")
    }

    pub fn languages(&self) -> Vec<LanguageTag> {
        self.langs.iter().map(|l| l.tag.clone()).collect()
    }

    pub fn language(&self, code: &str) -> Result<LanguageTag> {
        Ok(self.langs[self.lang_index(code)?].tag.clone())
    }

    pub(crate) fn lang_index(&self, code: &str) -> Result<usize> {
        self.langs
            .iter()
            .position(|l| l.tag.code() == code)
            .ok_or_else(|| Error::invalid(format!("language {code} is not part of the world")))
    }

    pub fn embedding(&self, token: u32) -> &[f64] {
        let d = self.dim();
        &self.embeddings[token as usize * d..(token as usize + 1) * d]
    }

    pub fn base_embedding(&self, token: u32) -> &[f64] {
        let d = self.dim();
        &self.base_embeddings[token as usize * d..(token as usize + 1) * d]
    }

    pub fn rotation(&self, group: &str) -> Option<&DMatrix<f64>> {
        self.rotations.get(group)
    }

    /// `M_ℓ`.
    pub fn distortion(&self, code: &str) -> Result<&DMatrix<f64>> {
        Ok(&self.langs[self.lang_index(code)?].m)
    }

    pub(crate) fn context_at(&self, li: usize, sentence_id: u32, t: usize, token: u32) -> Vec<f32> {
        let d = self.dim();
        let lw = &self.langs[li];
        let mut u: Vec<f64> = self.embedding(token).to_vec();
        if self.config.sigma > 0.0 {
            let tag = format!("context/{}", lw.tag.code());
            let noise = gaussians(&mut stream(self.config.seed, &tag, &[sentence_id as u64, t as u64]), d);
            let scale = self.config.sigma / (d as f64).sqrt();
            u.iter_mut().zip(noise).for_each(|(a, n)| *a += scale * n);
        }
        (0..d)
            .map(|r| (0..d).map(|c| lw.m[(r, c)] * u[c]).sum::<f64>() as f32)
            .collect()
    }

    pub(crate) fn base_at(&self, li: usize, context: &[f32]) -> Result<ProbabilityDistribution> {
        let d = self.dim();
        if context.len() != d {
            return Err(Error::invalid(format!("context has dimension {}, world uses {d}", context.len())));
        }
        let tau = self.config.tau_base;
        let logits: Vec<f64> = self.langs[li]
            .protos
            .chunks_exact(d)
            .map(|p| -p.iter().zip(context).map(|(a, c)| (*c as f64 - a).powi(2)).sum::<f64>() / tau)
            .collect();
        ProbabilityDistribution::softmax(&logits)
    }
}

/// The translation context `M_ℓ (e(y_t) + ε)` of position `t` in `sentence`.
pub fn toy_context(world: &World, lang: &LanguageTag, sentence: &Sentence, t: usize) -> Result<Vec<f32>> {
    let li = world.lang_index(lang.code())?;
    let token = *sentence.tokens.get(t).ok_or_else(|| {
        Error::invalid(format!("position {t} outside sentence of length {}", sentence.tokens.len()))
    })?;
    if token as usize >= world.vocab_size() {
        return Err(Error::invalid(format!("token {token} outside the world vocabulary")));
    }
    Ok(world.context_at(li, sentence.id, t, token))
}

/// Softmax over `y` of `−‖context − M_ℓ ê(y)‖² / τ_base`.
pub fn toy_base_distribution(world: &World, lang: &LanguageTag, context: &[f32]) -> Result<ProbabilityDistribution> {
    world.base_at(world.lang_index(lang.code())?, context)
}

/// `n` points around `clusters` random centers with per-axis spread
/// `spread`, stored as a sealed store whose value is the cluster id.
pub fn clustered_store(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> Result<Datastore> {
    if clusters == 0 {
        return Err(Error::invalid("need at least one cluster"));
    }
    let en = LanguageTag::new("en")?;
    let mut s = Datastore::new(dim, en.clone())?;
    let o = s.add_origin(&LanguageTag::new("xx")?, &en)?;
    for (i, (c, key)) in clustered_points(n, dim, clusters, spread, seed, "points").into_iter().enumerate() {
        s.append_entry(&Entry { key, value: c as u32, origin: o, sentence_id: i as u32, position: 0 })?;
    }
    s.add_provenance(format!("clustered n={n} dim={dim} clusters={clusters} spread={spread} seed={seed}"))?;
    s.seal();
    Ok(s)
}

/// Query points drawn from the same mixture as [`clustered_store`].
pub fn clustered_queries(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> Vec<Vec<f32>> {
    clustered_points(n, dim, clusters, spread, seed, "queries").into_iter().map(|(_, p)| p).collect()
}

fn clustered_points(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64, tag: &str) -> Vec<(usize, Vec<f32>)> {
    let centers: Vec<Vec<f64>> =
        (0..clusters as u64).map(|c| gaussians(&mut stream(seed, "cluster-center", &[c]), dim)).collect();
    (0..n as u64)
        .map(|i| {
            let mut r = stream(seed, tag, &[i]);
            let c = (rand::Rng::gen::<u64>(&mut r) % clusters as u64) as usize;
            let noise = gaussians(&mut r, dim);
            (c, centers[c].iter().zip(noise).map(|(m, z)| (m + spread * z) as f32).collect())
        })
        .collect()
}

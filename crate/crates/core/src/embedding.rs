//! Text embedding and cosine similarity.
//!
//! The default embedder hashes lowercased word n-grams into a fixed-dimension
//! signed-count vector and L2-normalizes it. It is a pure function of
//! (text, config), needs no model files, and is bit-identical across runs and
//! platforms. An external-service mode can swap in a real embedding API behind
//! the same interface.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the bearer token for external-service mode.
pub const EMBED_TOKEN_ENV: &str = "MINDSTORES_EMBED_TOKEN";

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 768;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector is neither zero nor unit-norm (norm = {norm})")]
    NotNormalized { norm: f64 },
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("embedding service error (retryable): {0}")]
    Service(String),
}

impl EmbeddingError {
    /// True for transient failures worth retrying (transport, bad response).
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Service(_))
    }
}

/// A fixed-dimension vector that is either all zeros (the empty-text
/// sentinel) or L2-normalized to unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    /// Wraps raw components, validating the zero-or-unit-norm invariant.
    pub fn new(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = l2_norm(&components);
        if norm != 0.0 && (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::NotNormalized { norm });
        }
        Ok(Self { components })
    }

    /// Normalizes arbitrary components to unit length (zero stays zero).
    pub fn normalized(mut components: Vec<f64>) -> Self {
        let norm = l2_norm(&components);
        if norm > 0.0 {
            for c in &mut components {
                *c /= norm;
            }
        }
        Self { components }
    }

    /// The all-zero vector used for empty text.
    pub fn zero(dim: usize) -> Self {
        Self {
            components: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }
}

/// How field texts are turned into vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderMode {
    /// Deterministic signed feature hashing of word n-grams (the default).
    HashedNgram,
    /// POST texts to an embeddings API and use its vectors.
    ExternalService,
}

/// Embedder settings. `service_endpoint` must be set exactly when the mode
/// is [`EmbedderMode::ExternalService`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub mode: EmbedderMode,
    pub ngram_sizes: BTreeSet<usize>,
    pub service_endpoint: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            mode: EmbedderMode::HashedNgram,
            ngram_sizes: BTreeSet::from([1, 2]),
            service_endpoint: None,
        }
    }
}

impl EmbedderConfig {
    /// Hashed-ngram config at the given dimension, defaults elsewhere.
    pub fn hashed(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim < 8 {
            return Err(EmbeddingError::Config(format!(
                "dim must be at least 8, got {}",
                self.dim
            )));
        }
        if self.ngram_sizes.is_empty() || self.ngram_sizes.iter().any(|n| *n == 0) {
            return Err(EmbeddingError::Config(
                "ngram_sizes must be a non-empty set of positive sizes".into(),
            ));
        }
        match self.mode {
            EmbedderMode::HashedNgram => {
                if self.service_endpoint.is_some() {
                    return Err(EmbeddingError::Config(
                        "service_endpoint is only valid in external-service mode".into(),
                    ));
                }
            }
            EmbedderMode::ExternalService => {
                if self.service_endpoint.is_none() {
                    return Err(EmbeddingError::Config(
                        "external-service mode requires a service_endpoint".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Embeds `text` under `config`. Hashed-ngram mode cannot fail; external
/// service failures surface as retryable [`EmbeddingError::Service`] errors.
pub fn embed_text(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector, EmbeddingError> {
    config.validate()?;
    match config.mode {
        EmbedderMode::HashedNgram => Ok(hash_embed(text, config)),
        EmbedderMode::ExternalService => {
            let endpoint = config.service_endpoint.as_deref().expect("validated above");
            embed_via_service(&[text], endpoint, config.dim)
                .map(|mut v| v.pop().expect("one vector per input"))
        }
    }
}

/// Cosine similarity per the usual dot / (|a||b|) formula. Zero vectors have
/// no direction, so any comparison against one is defined as 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

/// Same as [`cosine_similarity`] but assumes matching dimensions.
pub(crate) fn cosine_unchecked(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.components.iter().zip(&b.components) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = na.sqrt() * nb.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

fn l2_norm(components: &[f64]) -> f64 {
    components.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn hash_embed(text: &str, config: &EmbedderConfig) -> EmbeddingVector {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    if tokens.is_empty() {
        return EmbeddingVector::zero(config.dim);
    }
    let mut acc = vec![0.0f64; config.dim];
    let mut gram = String::new();
    for &n in &config.ngram_sizes {
        if n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            gram.clear();
            for (i, token) in window.iter().enumerate() {
                if i > 0 {
                    gram.push(' ');
                }
                gram.push_str(token);
            }
            let h = mix64(fnv1a64(gram.as_bytes()));
            let index = ((h >> 1) % config.dim as u64) as usize;
            let sign = if h & 1 == 1 { -1.0 } else { 1.0 };
            acc[index] += sign;
        }
    }
    EmbeddingVector::normalized(acc)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

// splitmix64 finalizer; decorrelates the index bits from the sign bit.
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    z
}

#[derive(Serialize)]
struct ServiceRequest<'a> {
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct ServiceResponse {
    data: Vec<ServiceEmbedding>,
}

#[derive(Deserialize)]
struct ServiceEmbedding {
    embedding: Vec<f64>,
}

/// POSTs `{"input": [texts...]}` and reads the common
/// `{"data": [{"embedding": [...]}]}` response shape. Vectors are
/// re-normalized locally so the unit-norm invariant holds regardless of
/// what the service returns.
pub fn embed_via_service(
    texts: &[&str],
    endpoint: &str,
    dim: usize,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    let client = reqwest::blocking::Client::new();
    let mut request = client.post(endpoint).json(&ServiceRequest { input: texts });
    if let Ok(token) = std::env::var(EMBED_TOKEN_ENV) {
        request = request.bearer_auth(token);
    }
    let response = request
        .send()
        .map_err(|e| EmbeddingError::Service(format!("transport: {e}")))?;
    if !response.status().is_success() {
        return Err(EmbeddingError::Service(format!(
            "status {}",
            response.status()
        )));
    }
    let body: ServiceResponse = response
        .json()
        .map_err(|e| EmbeddingError::Service(format!("malformed response: {e}")))?;
    if body.data.len() != texts.len() {
        return Err(EmbeddingError::Service(format!(
            "expected {} embeddings, got {}",
            texts.len(),
            body.data.len()
        )));
    }
    body.data
        .into_iter()
        .map(|e| {
            if e.embedding.len() != dim {
                return Err(EmbeddingError::Service(format!(
                    "service returned dimension {}, expected {dim}",
                    e.embedding.len()
                )));
            }
            Ok(EmbeddingVector::normalized(e.embedding))
        })
        .collect()
}

/// A configured embedder, shareable across threads.
#[derive(Debug, Clone)]
pub struct Embedder {
    config: EmbedderConfig,
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        embed_text(text, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize) -> EmbedderConfig {
        EmbedderConfig::hashed(dim)
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let v = embed_text("", &cfg(8)).unwrap();
        assert_eq!(v.dim(), 8);
        assert!(v.is_zero());
        assert!(embed_text("   \t\n", &cfg(8)).unwrap().is_zero());
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = embed_text("mine iron ore", &cfg(768)).unwrap();
        let b = embed_text("mine iron ore", &cfg(768)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_is_case_insensitive() {
        let a = embed_text("Mine Iron ORE", &cfg(64)).unwrap();
        let b = embed_text("mine iron ore", &cfg(64)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nonzero_embedding_is_unit_norm() {
        let v = embed_text("mine iron ore", &cfg(64)).unwrap();
        let norm: f64 = v.components().iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "norm was {norm}");
    }

    #[test]
    fn self_similarity_is_one() {
        let v = embed_text("craft a stone pickaxe", &cfg(32)).unwrap();
        let sim = cosine_similarity(&v, &v).unwrap();
        assert!((sim - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_vectors_have_zero_similarity() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn forty_five_degree_similarity() {
        // dot([1,0], [1,1]/sqrt(2)) = 1/sqrt(2) = 0.7071...
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::normalized(vec![1.0, 1.0]);
        let sim = cosine_similarity(&a, &b).unwrap();
        assert!((sim - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn zero_vector_similarity_is_zero() {
        let b = embed_text("wood", &cfg(8)).unwrap();
        let a = EmbeddingVector::zero(b.dim());
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&b, &a).unwrap(), 0.0);
        let z = EmbeddingVector::zero(b.dim());
        assert_eq!(cosine_similarity(&a, &z).unwrap(), 0.0);
    }

    // Reference scalar implementation of the hashing pipeline, written
    // independently of the production path: explicit byte loops, explicit
    // window indexing. Used once to derive the frozen golden values below
    // and kept to guard the pipeline against drift.
    fn reference_embed(text: &str, dim: usize) -> Vec<f64> {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered.split_whitespace().collect();
        let mut acc = vec![0.0f64; dim];
        if tokens.is_empty() {
            return acc;
        }
        for n in [1usize, 2] {
            if n > tokens.len() {
                continue;
            }
            for start in 0..=(tokens.len() - n) {
                let gram = tokens[start..start + n].join(" ");
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                for b in gram.bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                h ^= h >> 30;
                h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
                h ^= h >> 27;
                h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
                h ^= h >> 31;
                let index = ((h >> 1) % dim as u64) as usize;
                acc[index] += if h & 1 == 1 { -1.0 } else { 1.0 };
            }
        }
        let norm: f64 = acc.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in &mut acc {
                *c /= norm;
            }
        }
        acc
    }

    // Golden vector for ("mine iron ore", dim 64): five n-grams, no index
    // collisions, so every live component is +-1/sqrt(5).
    #[test]
    fn golden_vector_for_mine_iron_ore_at_dim_64() {
        let v = embed_text("mine iron ore", &cfg(64)).unwrap();
        let expected_component = 1.0 / 5.0f64.sqrt(); // 0.4472135954999579
        let frozen: [(usize, f64); 5] = [
            (6, expected_component),
            (14, -expected_component),
            (27, -expected_component),
            (31, expected_component),
            (36, expected_component),
        ];
        let mut expected = vec![0.0; 64];
        for (index, value) in frozen {
            expected[index] = value;
        }
        assert_eq!(v.components(), expected.as_slice());
        let norm: f64 = v.components().iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(v.components(), reference_embed("mine iron ore", 64));
    }

    #[test]
    fn production_embedding_matches_the_reference_pipeline() {
        for text in [
            "",
            "wood",
            "craft a stone pickaxe at the crafting table",
            "Inventory: wooden_axe x1.\nHunger: 0 of 120.",
        ] {
            for dim in [8usize, 32, 768] {
                let got = embed_text(text, &cfg(dim)).unwrap();
                assert_eq!(got.components(), reference_embed(text, dim), "{text:?} dim {dim}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = EmbeddingVector::zero(8);
        let b = EmbeddingVector::zero(16);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbeddingError::DimensionMismatch { left: 8, right: 16 })
        ));
    }

    #[test]
    fn config_rejects_small_dim_and_endpoint_mismatch() {
        assert!(EmbedderConfig::hashed(4).validate().is_err());
        assert!(EmbedderConfig::hashed(8).validate().is_ok());

        let mut c = EmbedderConfig::hashed(32);
        c.service_endpoint = Some("http://localhost:1".into());
        assert!(c.validate().is_err());

        let mut c = EmbedderConfig::hashed(32);
        c.mode = EmbedderMode::ExternalService;
        assert!(c.validate().is_err());
        c.service_endpoint = Some("http://localhost:1".into());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn new_rejects_unnormalized_components() {
        assert!(EmbeddingVector::new(vec![1.0, 1.0]).is_err());
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_ok());
        assert!(EmbeddingVector::new(vec![0.6, 0.8]).is_ok());
    }
}

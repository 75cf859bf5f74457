//! Embedding-based tool retrieval with an exhaustive cosine scan, plus NDCG.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruct::ToolInstruction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("index build failed: {0}")]
    IndexBuildError(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding provider failed: {0}")]
    ProviderError(String),
    #[error("index was built with `{expected}`, not `{found}`")]
    ProviderMismatch { expected: String, found: String },
    #[error("index file: {0}")]
    Persistence(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

pub const HASH_DIMENSION: usize = 256;

/// Feature-hashed bag of lowercased word tokens, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dimension: usize,
    id: String,
}

impl Default for HashEmbedding {
    fn default() -> Self {
        Self::new(HASH_DIMENSION)
    }
}

impl HashEmbedding {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            id: format!("hash-{dimension}"),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased runs of alphanumeric characters.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl EmbeddingProvider for HashEmbedding {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut v = vec![0.0; self.dimension];
        for w in word_tokens(text) {
            v[(fnv1a(w.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub tool_id: String,
    pub description: String,
    pub vector: Vec<f64>,
}

/// Immutable tool index. Entries are kept sorted by tool id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    format_version: u32,
    provider_id: String,
    dimension: usize,
    entries: Vec<IndexEntry>,
}

const FORMAT_VERSION: u32 = 1;

impl RetrievalIndex {
    pub fn build<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a str)>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, RetrievalError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (tool_id, description) in items {
            if !seen.insert(tool_id.to_string()) {
                return Err(RetrievalError::IndexBuildError(format!("duplicate tool id `{tool_id}`")));
            }
            if description.trim().is_empty() {
                return Err(RetrievalError::IndexBuildError(format!(
                    "tool `{tool_id}` has an empty description"
                )));
            }
            let vector = provider.embed(description)?;
            if vector.len() != provider.dimension() {
                return Err(RetrievalError::DimensionMismatch(vector.len(), provider.dimension()));
            }
            entries.push(IndexEntry {
                tool_id: tool_id.to_string(),
                description: description.to_string(),
                vector,
            });
        }
        entries.sort_by(|a, b| a.tool_id.cmp(&b.tool_id));
        Ok(Self {
            format_version: FORMAT_VERSION,
            provider_id: provider.id().to_string(),
            dimension: provider.dimension(),
            entries,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tool_id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.tool_id.as_str().cmp(tool_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    pub fn from_json(text: &str, provider: &dyn EmbeddingProvider) -> Result<Self, RetrievalError> {
        let index: Self =
            serde_json::from_str(text).map_err(|e| RetrievalError::Persistence(e.to_string()))?;
        if index.format_version != FORMAT_VERSION {
            return Err(RetrievalError::Persistence(format!(
                "unsupported format version {}",
                index.format_version
            )));
        }
        if index.provider_id != provider.id() {
            return Err(RetrievalError::ProviderMismatch {
                expected: index.provider_id,
                found: provider.id().to_string(),
            });
        }
        if let Some(bad) = index.entries.iter().find(|e| e.vector.len() != index.dimension) {
            return Err(RetrievalError::DimensionMismatch(bad.vector.len(), index.dimension));
        }
        let mut sorted = index.entries.windows(2).all(|w| w[0].tool_id < w[1].tool_id);
        sorted &= index.dimension == provider.dimension();
        if !sorted {
            return Err(RetrievalError::Persistence("entries unsorted, duplicated or wrong dimension".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        std::fs::write(path, self.to_json()).map_err(|e| RetrievalError::Persistence(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>, provider: &dyn EmbeddingProvider) -> Result<Self, RetrievalError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RetrievalError::Persistence(e.to_string()))?;
        Self::from_json(&text, provider)
    }
}

/// Index keyed by tool name over the generated descriptions.
pub fn build_index(
    instructions: &[ToolInstruction],
    provider: &dyn EmbeddingProvider,
) -> Result<RetrievalIndex, RetrievalError> {
    RetrievalIndex::build(
        instructions
            .iter()
            .map(|i| (i.tool_name.as_str(), i.description.as_str())),
        provider,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub tool_id: String,
    pub score: f64,
}

/// Score of one entry against a query vector; zero vectors score 0.
pub fn score(query: &[f64], entry: &[f64]) -> f64 {
    cosine_similarity(query, entry).unwrap_or(0.0)
}

/// Sort by score descending, then tool id ascending.
pub fn rank(mut scored: Vec<Scored>) -> Vec<Scored> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tool_id.cmp(&b.tool_id)));
    scored
}

pub fn top_k_vector(index: &RetrievalIndex, query: &[f64], k: usize) -> Result<Vec<Scored>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if query.len() != index.dimension {
        return Err(RetrievalError::DimensionMismatch(query.len(), index.dimension));
    }
    let mut ranked = rank(
        index
            .entries
            .iter()
            .map(|e| Scored {
                tool_id: e.tool_id.clone(),
                score: score(query, &e.vector),
            })
            .collect(),
    );
    ranked.truncate(k);
    Ok(ranked)
}

pub fn top_k(
    index: &RetrievalIndex,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Scored>, RetrievalError> {
    if provider.id() != index.provider_id {
        return Err(RetrievalError::ProviderMismatch {
            expected: index.provider_id.clone(),
            found: provider.id().to_string(),
        });
    }
    top_k_vector(index, &provider.embed(query)?, k)
}

/// NDCG with binary gains. A relevant id counts only at its first position.
pub fn ndcg_at_k(ranked: &[String], relevant: &HashSet<String>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let mut seen = HashSet::new();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id) && seen.insert(id.as_str()))
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

/// One judged query for index evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qrel {
    pub request: String,
    pub relevant_tools: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub request: String,
    pub ndcg_at_1: f64,
    pub ndcg_at_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: Vec<QueryScore>,
    pub mean_ndcg_at_1: f64,
    pub mean_ndcg_at_5: f64,
}

pub fn evaluate_index(
    index: &RetrievalIndex,
    qrels: &[Qrel],
    provider: &dyn EmbeddingProvider,
) -> Result<RetrievalReport, RetrievalError> {
    let mut queries = Vec::with_capacity(qrels.len());
    for q in qrels {
        let ranked: Vec<String> = top_k(index, &q.request, 5, provider)?
            .into_iter()
            .map(|s| s.tool_id)
            .collect();
        let relevant: HashSet<String> = q.relevant_tools.iter().cloned().collect();
        queries.push(QueryScore {
            request: q.request.clone(),
            ndcg_at_1: ndcg_at_k(&ranked, &relevant, 1),
            ndcg_at_5: ndcg_at_k(&ranked, &relevant, 5),
        });
    }
    let n = queries.len().max(1) as f64;
    Ok(RetrievalReport {
        mean_ndcg_at_1: queries.iter().map(|q| q.ndcg_at_1).sum::<f64>() / n,
        mean_ndcg_at_5: queries.iter().map(|q| q.ndcg_at_5).sum::<f64>() / n,
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cosine_cases() {
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974631846).abs() < 1e-9);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), Err(RetrievalError::ZeroVector));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(RetrievalError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn hash_embedding_is_normalized_and_deterministic() {
        let h = HashEmbedding::default();
        let a = h.embed("Get the product details for a product id").unwrap();
        assert_eq!(a.len(), 256);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, h.embed("get THE product details, for a product-id").unwrap());
        assert!(h.embed("").unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn index_build_and_query() {
        let h = HashEmbedding::default();
        let items = [
            ("weather", "current weather forecast for a city"),
            ("movies", "search movies by title and list cast"),
            ("ebay", "get product details from ebay"),
        ];
        let index = RetrievalIndex::build(items, &h).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index.dimension(), 256);
        let r = top_k(&index, "search movies by title and list cast", 1, &h).unwrap();
        assert_eq!(r[0].tool_id, "movies");
        assert!((r[0].score - 1.0).abs() < 1e-12);
        assert_eq!(top_k(&index, "anything", 10, &h).unwrap().len(), 3);
        assert_eq!(top_k(&index, "x", 0, &h), Err(RetrievalError::InvalidK));

        let dup = RetrievalIndex::build([("a", "x"), ("a", "y")], &h);
        assert!(matches!(dup, Err(RetrievalError::IndexBuildError(_))));
        let empty = RetrievalIndex::build([], &h).unwrap();
        assert_eq!(empty.dimension(), 256);
        assert!(top_k(&empty, "x", 3, &h).unwrap().is_empty());
    }

    #[test]
    fn persistence_checks_provider() {
        let h = HashEmbedding::default();
        let index = RetrievalIndex::build([("a", "alpha tool"), ("b", "beta tool")], &h).unwrap();
        let json = index.to_json();
        assert_eq!(RetrievalIndex::from_json(&json, &h).unwrap(), index);
        let other = HashEmbedding::new(64);
        assert!(matches!(
            RetrievalIndex::from_json(&json, &other),
            Err(RetrievalError::ProviderMismatch { .. })
        ));
    }

    #[test]
    fn ndcg_cases() {
        let rel: HashSet<String> = ["g".to_string()].into();
        assert_eq!(ndcg_at_k(&ids(&["g"]), &rel, 1), 1.0);
        let v = ndcg_at_k(&ids(&["x", "g"]), &rel, 5);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&ids(&["x", "g"]), &HashSet::new(), 5), 0.0);
        assert_eq!(ndcg_at_k(&ids(&["g", "g"]), &rel, 2), 1.0);
    }
}

//! Word vectors with a hashed character n-gram fallback, and IDF weights.
//!
//! Out-of-vocabulary tokens are embedded as the mean of bucket vectors for
//! the character n-grams of `<token>`. N-grams are hashed with 64-bit
//! FNV-1a over their UTF-8 bytes, modulo the bucket count. Bucket vectors
//! are not stored: bucket `b` is drawn from a ChaCha8 stream keyed by
//! `(seed, b)`, uniform in `[-0.5/dim, 0.5/dim]`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: usize = 1 << 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordConfig {
    pub buckets: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub seed: u64,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKETS,
            ngram_min: 3,
            ngram_max: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: HashMap<String, Vec<f64>>,
    subword: SubwordConfig,
}

impl EmbeddingTable {
    pub fn new(
        dim: usize,
        words: HashMap<String, Vec<f64>>,
        subword: SubwordConfig,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if subword.buckets == 0 {
            return Err(Error::invalid("bucket count must be positive"));
        }
        if subword.ngram_min == 0 || subword.ngram_min > subword.ngram_max {
            return Err(Error::invalid(format!(
                "bad n-gram range [{}, {}]",
                subword.ngram_min, subword.ngram_max
            )));
        }
        if let Some((w, _)) = words.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::invalid(format!(
                "vector for `{w}` does not have {dim} components"
            )));
        }
        Ok(Self {
            dim,
            words,
            subword,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subword(&self) -> SubwordConfig {
        self.subword
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn word_vector(&self, token: &str) -> Option<&[f64]> {
        self.words.get(token).map(Vec::as_slice)
    }

    /// Deterministic vector of bucket `b`.
    pub fn bucket_vector(&self, bucket: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.subword.seed);
        rng.set_stream(bucket as u64);
        let scale = 0.5 / self.dim as f64;
        (0..self.dim)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect()
    }

    pub fn bucket_of(&self, ngram: &str) -> usize {
        (fnv1a64(ngram.as_bytes()) % self.subword.buckets as u64) as usize
    }

    /// Stored vector if known, otherwise the mean bucket vector over the
    /// character n-grams of `<token>`.
    pub fn embed_token(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.words.get(token) {
            return v.clone();
        }
        let grams = char_ngrams(token, self.subword.ngram_min, self.subword.ngram_max);
        let mut acc = vec![0.0; self.dim];
        if grams.is_empty() {
            return acc;
        }
        for g in &grams {
            for (a, b) in acc.iter_mut().zip(self.bucket_vector(self.bucket_of(g))) {
                *a += b;
            }
        }
        let n = grams.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// All character n-grams of `<token>` with `min <= n <= max`.
///
/// The bracketed word itself is included when its length falls in range.
pub fn char_ngrams(token: &str, min: usize, max: usize) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in min..=max.min(chars.len()) {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

/// Reads `word v1 .. vd` lines. A leading `count dim` line is skipped.
pub fn parse_vectors(content: &str, subword: SubwordConfig) -> Result<EmbeddingTable> {
    let mut words = HashMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().unwrap());
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad vector component: {e}"),
            })?;
        match dim {
            None if values.is_empty() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "vector has no components".into(),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        words.insert(fields[0].to_string(), values);
    }
    let dim = dim.ok_or_else(|| Error::invalid("vector file is empty"))?;
    EmbeddingTable::new(dim, words, subword)
}

pub fn load_vectors(path: &Path, subword: SubwordConfig) -> Result<EmbeddingTable> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&content, subword)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    doc_count: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    /// `ln(N / df)`; unseen tokens get `ln N`.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.doc_count as f64;
        match self.df.get(token) {
            Some(&df) => (n / df as f64).ln(),
            None => n.ln(),
        }
    }
}

pub fn compute_idf<D: AsRef<[String]>>(docs: &[D]) -> Result<IdfTable> {
    if docs.is_empty() {
        return Err(Error::invalid("IDF needs at least one document"));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = doc.as_ref().iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t.to_string()).or_default() += 1;
        }
    }
    Ok(IdfTable {
        doc_count: docs.len(),
        df,
    })
}

/// IDF-weighted mean of token embeddings; zero when all weights vanish.
pub fn idf_weighted_vector(table: &EmbeddingTable, idf: &IdfTable, tokens: &[String]) -> Vec<f64> {
    let mut acc = vec![0.0; table.dim()];
    let mut total = 0.0;
    for t in tokens {
        let w = idf.idf(t);
        if w == 0.0 {
            continue;
        }
        total += w;
        for (a, v) in acc.iter_mut().zip(table.embed_token(t)) {
            *a += w * v;
        }
    }
    if total == 0.0 {
        return vec![0.0; table.dim()];
    }
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

//! Per-slice token-embedding stores.
//!
//! A store holds, for one (language, period) slice, the cloud of contextual
//! token embeddings of every word. On disk a store is a directory with a
//! `manifest.json` and a headerless little-endian `vectors.bin` of `f32`
//! values laid out row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";

/// Identifies one corpus slice: a language tag plus a period tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceId {
    pub language: String,
    pub period: String,
}

impl SliceId {
    pub fn new(language: impl Into<String>, period: impl Into<String>) -> Result<Self> {
        let slice = SliceId {
            language: language.into(),
            period: period.into(),
        };
        if slice.language.is_empty() || slice.period.is_empty() {
            return Err(Error::InvalidSlice);
        }
        Ok(slice)
    }
}

impl std::fmt::Display for SliceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}", self.language, self.period)
    }
}

/// All token embeddings of one word in one slice, `n x d`, row-major.
#[derive(Clone, Debug)]
pub struct TokenCloud {
    word: String,
    dim: usize,
    data: Vec<f32>,
}

impl PartialEq for TokenCloud {
    /// Bit-exact comparison of the stored values.
    fn eq(&self, other: &Self) -> bool {
        self.word == other.word
            && self.dim == other.dim
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TokenCloud {
    /// Builds a cloud from a flat row-major buffer. Rejects empty clouds,
    /// non-finite values and zero-norm rows.
    pub fn new(word: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let word = word.into();
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "cloud for `{word}` has no tokens"
            )));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("token {i} of `{word}`")));
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::DegenerateVector(format!(
                    "token {i} of `{word}` has zero norm"
                )));
            }
        }
        Ok(TokenCloud { word, dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(word: impl Into<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        TokenCloud::new(word, dim, data)
    }

    /// Like [`TokenCloud::from_rows`] but narrows `f64` rows to `f32`.
    pub fn from_rows_f64<R: AsRef<[f64]>>(word: impl Into<String>, rows: &[R]) -> Result<Self> {
        let rows: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| x as f32).collect())
            .collect();
        TokenCloud::from_rows(word, &rows)
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    /// Number of token occurrences.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }

    /// The cloud restricted to the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<TokenCloud> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} out of range for cloud of {} tokens",
                    self.len()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        TokenCloud::new(self.word.clone(), self.dim, data)
    }

    /// Concatenates two clouds of the same word and dimension.
    pub fn concat(&self, other: &TokenCloud) -> Result<TokenCloud> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        TokenCloud::new(self.word.clone(), self.dim, data)
    }

    /// Every row translated by `offset`.
    pub fn shifted(&self, offset: &[f64]) -> Result<TokenCloud> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: offset.len(),
            });
        }
        let data = self
            .rows()
            .flat_map(|r| r.iter().zip(offset).map(|(&x, &o)| (x as f64 + o) as f32))
            .collect();
        TokenCloud::new(self.word.clone(), self.dim, data)
    }

    /// Every row scaled to unit length.
    pub fn normalized(&self) -> TokenCloud {
        let data = self
            .rows()
            .flat_map(|r| {
                let n = linalg::norm_f32(r);
                r.iter().map(move |&x| (x as f64 / n) as f32)
            })
            .collect();
        TokenCloud {
            word: self.word.clone(),
            dim: self.dim,
            data,
        }
    }
}

/// Mean of the cloud's rows, accumulated in `f64`.
pub fn centroid(cloud: &TokenCloud) -> Vec<f64> {
    let mut acc = vec![0.0f64; cloud.dim()];
    for row in cloud.rows() {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64;
        }
    }
    let n = cloud.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = linalg::norm(u);
    let nv = linalg::norm(v);
    if !(nu > 0.0) || !(nv > 0.0) || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::DegenerateVector("zero or non-finite norm".into()));
    }
    let sim = linalg::dot(u, v) / (nu * nv);
    Ok((1.0 - sim).clamp(0.0, 2.0))
}

/// Load-time options.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Scale every token embedding to unit length after reading.
    pub normalize_tokens: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestWord {
    word: String,
    offset: u64,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    language: String,
    period: String,
    dim: u64,
    language_mean_offset: Option<u64>,
    words: Vec<ManifestWord>,
}

/// Immutable collection of token clouds for one slice.
#[derive(Clone, Debug)]
pub struct EmbeddingStore {
    slice: SliceId,
    dim: usize,
    clouds: BTreeMap<String, TokenCloud>,
    language_mean: Option<Vec<f32>>,
    representatives: BTreeMap<String, Vec<f64>>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        let mean_eq = match (&self.language_mean, &other.language_mean) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        };
        self.slice == other.slice && self.dim == other.dim && self.clouds == other.clouds && mean_eq
    }
}

impl EmbeddingStore {
    pub fn new(
        slice: SliceId,
        clouds: impl IntoIterator<Item = TokenCloud>,
        language_mean: Option<Vec<f32>>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for cloud in clouds {
            match dim {
                None => dim = Some(cloud.dim()),
                Some(d) if d != cloud.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: cloud.dim(),
                    })
                }
                _ => {}
            }
            let word = cloud.word().to_string();
            if map.insert(word.clone(), cloud).is_some() {
                return Err(Error::MalformedManifest(format!("duplicate word `{word}`")));
            }
        }
        let dim = dim.ok_or(Error::EmptyStore)?;
        if let Some(mean) = &language_mean {
            if mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mean.len(),
                });
            }
            if mean.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("language mean".into()));
            }
        }
        let representatives = map
            .iter()
            .map(|(w, c)| (w.clone(), centroid(c)))
            .collect();
        Ok(EmbeddingStore {
            slice,
            dim,
            clouds: map,
            language_mean,
            representatives,
        })
    }

    pub fn slice(&self) -> &SliceId {
        &self.slice
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.clouds.keys().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.clouds.contains_key(word)
    }

    pub fn cloud(&self, word: &str) -> Result<&TokenCloud> {
        self.clouds
            .get(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn clouds(&self) -> impl Iterator<Item = &TokenCloud> + '_ {
        self.clouds.values()
    }

    /// `(word, token count, representative embedding)` for every word, sorted by word.
    pub(crate) fn representatives(&self) -> impl Iterator<Item = (&str, usize, &[f64])> + '_ {
        self.clouds
            .iter()
            .zip(self.representatives.values())
            .map(|((w, c), r)| (w.as_str(), c.len(), r.as_slice()))
    }

    /// The stored language mean, if any.
    pub fn language_mean(&self) -> Option<&[f32]> {
        self.language_mean.as_deref()
    }

    /// Mean over every token of every word, weighted by token count.
    pub fn token_mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        let mut n = 0usize;
        for cloud in self.clouds.values() {
            for row in cloud.rows() {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x as f64;
                }
            }
            n += cloud.len();
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        acc
    }

    /// The stored language mean, falling back to [`EmbeddingStore::token_mean`].
    pub fn mean_embedding(&self) -> Vec<f64> {
        match &self.language_mean {
            Some(m) => m.iter().map(|&x| x as f64).collect(),
            None => self.token_mean(),
        }
    }

    /// A copy of this store with every vector (and the language mean) translated by `offset`.
    pub fn shifted(&self, offset: &[f64]) -> Result<EmbeddingStore> {
        let clouds = self
            .clouds
            .values()
            .map(|c| c.shifted(offset))
            .collect::<Result<Vec<_>>>()?;
        let mean = self.language_mean.as_ref().map(|m| {
            m.iter()
                .zip(offset)
                .map(|(&x, &o)| (x as f64 + o) as f32)
                .collect()
        });
        EmbeddingStore::new(self.slice.clone(), clouds, mean)
    }
}

/// The node embedding `e_w` of a word: the centroid of its cloud.
pub fn representative_embedding(store: &EmbeddingStore, word: &str) -> Result<Vec<f64>> {
    store
        .representatives
        .get(word)
        .cloned()
        .ok_or_else(|| Error::UnknownWord(word.to_string()))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    load_store_with(path, LoadOptions::default())
}

pub fn load_store_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<EmbeddingStore> {
    let dir = path.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let vectors_path = dir.join(VECTORS_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::MalformedManifest(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let slice = SliceId::new(manifest.language, manifest.period)
        .map_err(|_| Error::MalformedManifest("empty language or period".into()))?;
    if manifest.dim == 0 {
        return Err(Error::MalformedManifest("dim must be positive".into()));
    }
    let dim = usize::try_from(manifest.dim)
        .map_err(|_| Error::MalformedManifest("dim too large".into()))?;
    if manifest.words.is_empty() {
        return Err(Error::EmptyStore);
    }
    for pair in manifest.words.windows(2) {
        if pair[0].word >= pair[1].word {
            return Err(Error::MalformedManifest(format!(
                "words not strictly sorted at `{}`",
                pair[1].word
            )));
        }
    }

    let bytes = fs::read(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::TruncatedVectors(format!(
            "length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let total = (bytes.len() / 4) as u64;
    let read_range = |offset: u64, elems: u64, what: &str| -> Result<Vec<f32>> {
        let end = offset
            .checked_add(elems)
            .ok_or_else(|| Error::TruncatedVectors(format!("{what}: offset overflow")))?;
        if end > total {
            return Err(Error::TruncatedVectors(format!(
                "{what} needs elements up to {end}, file holds {total}"
            )));
        }
        let start = offset as usize * 4;
        let stop = end as usize * 4;
        Ok(bytes[start..stop]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    };

    let mut clouds = Vec::with_capacity(manifest.words.len());
    for entry in &manifest.words {
        if entry.count == 0 {
            return Err(Error::MalformedManifest(format!(
                "word `{}` has zero count",
                entry.word
            )));
        }
        let elems = entry.count.checked_mul(manifest.dim).ok_or_else(|| {
            Error::TruncatedVectors(format!("`{}`: count overflow", entry.word))
        })?;
        let data = read_range(entry.offset, elems, &format!("word `{}`", entry.word))?;
        let cloud = TokenCloud::new(entry.word.clone(), dim, data)?;
        clouds.push(if opts.normalize_tokens {
            cloud.normalized()
        } else {
            cloud
        });
    }
    let language_mean = match manifest.language_mean_offset {
        Some(off) => Some(read_range(off, manifest.dim, "language mean")?),
        None => None,
    };
    EmbeddingStore::new(slice, clouds, language_mean)
}

/// Writes `store` as `manifest.json` + `vectors.bin` under `path`, creating
/// the directory if needed. Clouds are laid out in word order, followed by
/// the language mean.
pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut words = Vec::with_capacity(store.len());
    let mut offset = 0u64;
    for (word, cloud) in &store.clouds {
        words.push(ManifestWord {
            word: word.clone(),
            offset,
            count: cloud.len() as u64,
        });
        for x in cloud.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        offset += cloud.data().len() as u64;
    }
    let language_mean_offset = store.language_mean.as_ref().map(|mean| {
        for x in mean {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        offset
    });
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        language: store.slice.language.clone(),
        period: store.slice.period.clone(),
        dim: store.dim as u64,
        language_mean_offset,
        words,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::MalformedManifest(e.to_string()))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    let vectors_path = dir.join(VECTORS_FILE);
    fs::write(&vectors_path, bytes).map_err(|e| Error::io(&vectors_path, e))?;
    Ok(())
}

/// One planted component of a synthetic cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    pub direction: Vec<f64>,
    pub count: usize,
    /// Standard deviation of the isotropic Gaussian added to the unit direction.
    pub spread: f64,
}

impl SynthComponent {
    pub fn new(direction: Vec<f64>, count: usize, spread: f64) -> Self {
        SynthComponent {
            direction,
            count,
            spread,
        }
    }
}

/// Generates a cloud whose rows are unit-normalized Gaussian perturbations of
/// the component directions. Rows of each component are contiguous, in
/// component order, so ground-truth labels are `synth_labels(components)`.
pub fn synth_cloud(word: &str, components: &[SynthComponent], seed: u64) -> Result<TokenCloud> {
    let dim = components
        .first()
        .map(|c| c.direction.len())
        .ok_or_else(|| Error::InvalidParameter("no components".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    for (ci, comp) in components.iter().enumerate() {
        if comp.direction.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: comp.direction.len(),
            });
        }
        if comp.count == 0 {
            return Err(Error::InvalidParameter(format!("component {ci} has count 0")));
        }
        let n = linalg::norm(&comp.direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateVector(format!("component {ci} direction")));
        }
        let unit: Vec<f64> = comp.direction.iter().map(|x| x / n).collect();
        for _ in 0..comp.count {
            let row: Vec<f64> = unit
                .iter()
                .map(|&u| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    u + comp.spread * z
                })
                .collect();
            let rn = linalg::norm(&row);
            data.extend(row.iter().map(|&x| (x / rn) as f32));
        }
    }
    TokenCloud::new(word, dim, data)
}

/// Ground-truth component label of every row produced by [`synth_cloud`].
pub fn synth_labels(components: &[SynthComponent]) -> Vec<usize> {
    components
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat(i).take(c.count))
        .collect()
}

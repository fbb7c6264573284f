//! Neighbor-based similarity between sense clusters.
//!
//! A sense is described by the representative embeddings of the `k` words
//! nearest to its centroid. Two senses are compared by optimally matching
//! their neighbor lists one-to-one under cosine distance; the similarity is
//! one minus the mean matched distance.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve, CostMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::store::{cosine_distance, EmbeddingStore};

/// Number of neighboring words per sense.
pub const DEFAULT_K: usize = 14;
/// Minimum token count for a word to be a neighbor candidate.
pub const DEFAULT_MIN_TOKENS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub word: String,
    pub embedding: Vec<f64>,
}

/// The `k` nearest neighboring words of an anchor, closest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub anchor: Vec<f64>,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.neighbors.iter().map(|n| n.word.as_str())
    }
}

/// Exact full-scan k-nearest-neighbor search over the representative
/// embeddings of `store`. Candidates must have at least `min_tokens` tokens
/// and not appear in `exclude`; ties are broken by word.
pub fn knn(
    store: &EmbeddingStore,
    anchor: &[f64],
    k: usize,
    exclude: &BTreeSet<String>,
    min_tokens: usize,
) -> Result<NeighborSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if anchor.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            got: anchor.len(),
        });
    }
    let anchor_norm = linalg::norm(anchor);
    if !(anchor_norm > 0.0) {
        return Err(Error::DegenerateVector("knn anchor".into()));
    }
    let mut scored: Vec<(f64, &str, &[f64])> = store
        .representatives()
        .filter(|(w, n, _)| *n >= min_tokens && !exclude.contains(*w))
        .map(|(w, _, rep)| Ok((cosine_distance(anchor, rep)?, w, rep)))
        .collect::<Result<_>>()?;
    if scored.len() < k {
        return Err(Error::InsufficientNeighbors {
            needed: k,
            found: scored.len(),
        });
    }
    // representatives() is word-sorted, so a stable sort keeps word order among ties
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(NeighborSet {
        anchor: anchor.to_vec(),
        neighbors: scored
            .into_iter()
            .take(k)
            .map(|(_, w, rep)| Neighbor {
                word: w.to_string(),
                embedding: rep.to_vec(),
            })
            .collect(),
    })
}

/// `1 - (optimal matching cost) / k` between two neighbor sets. When
/// `offset` is given it is added to every embedding of `u` first.
pub fn sense_similarity(u: &NeighborSet, v: &NeighborSet, offset: Option<&[f64]>) -> Result<f64> {
    let k = u.k();
    if k == 0 || k != v.k() {
        return Err(Error::ShapeMismatch(format!(
            "neighbor sets must have equal positive size, got {} and {}",
            u.k(),
            v.k()
        )));
    }
    let shifted: Vec<Vec<f64>> = match offset {
        Some(b) => {
            if b.len() != u.anchor.len() {
                return Err(Error::DimensionMismatch {
                    expected: u.anchor.len(),
                    got: b.len(),
                });
            }
            u.neighbors
                .iter()
                .map(|n| linalg::add(&n.embedding, b))
                .collect()
        }
        None => u.neighbors.iter().map(|n| n.embedding.clone()).collect(),
    };
    let mut data = Vec::with_capacity(k * k);
    for a in &shifted {
        for b in &v.neighbors {
            data.push(cosine_distance(a, &b.embedding)?);
        }
    }
    let matching = solve(&CostMatrix::new(k, data)?);
    Ok((1.0 - matching.total_cost / k as f64).clamp(-1.0, 1.0))
}

/// Sense-to-sense similarities between two slices (rows: earlier period or
/// first language, columns: later period or second language).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// Builds a matrix with default ids `r0, r1, ...` and `c0, c1, ...`.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let cols = values.first().map(Vec::len).unwrap_or(0);
        if values.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged similarity matrix".into()));
        }
        Ok(SimilarityMatrix {
            row_ids: (0..values.len()).map(|i| format!("r{i}")).collect(),
            col_ids: (0..cols).map(|j| format!("c{j}")).collect(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        let values = (0..self.cols())
            .map(|j| (0..self.rows()).map(|i| self.values[i][j]).collect())
            .collect();
        SimilarityMatrix {
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
            values,
        }
    }

    pub fn with_ids(mut self, row_ids: Vec<String>, col_ids: Vec<String>) -> Result<Self> {
        if row_ids.len() != self.rows() || col_ids.len() != self.cols() {
            return Err(Error::ShapeMismatch("id lists do not match matrix shape".into()));
        }
        self.row_ids = row_ids;
        self.col_ids = col_ids;
        Ok(self)
    }
}

/// `values[i][j] = sense_similarity(senses_a[i], senses_b[j], offset)`.
pub fn similarity_matrix(
    senses_a: &[NeighborSet],
    senses_b: &[NeighborSet],
    offset: Option<&[f64]>,
) -> Result<SimilarityMatrix> {
    if senses_a.is_empty() || senses_b.is_empty() {
        return Err(Error::InvalidParameter(
            "similarity matrix needs at least one sense on each side".into(),
        ));
    }
    let values = senses_a
        .par_iter()
        .map(|a| {
            senses_b
                .iter()
                .map(|b| sense_similarity(a, b, offset))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    SimilarityMatrix::from_values(values)
}

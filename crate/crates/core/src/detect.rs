//! Binary semantic change detection.
//!
//! A sense of the earlier period is lost when every entry in its row of the
//! similarity matrix is below `t_sc`; a sense of the later period is gained
//! when every entry in its column is below `t_sc`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{two_pass, ClusterSet, TwoPassParams};
use crate::config::{binary_preset, Language};
use crate::error::{Error, Result};
use crate::linalg;
use crate::similarity::{knn, similarity_matrix, NeighborSet, SimilarityMatrix, DEFAULT_MIN_TOKENS};
use crate::store::{cosine_distance, EmbeddingStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    NeighborBased,
    CentroidCosine,
    CentroidEuclidean,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neighbor_based" | "neighbor-based" => Ok(Metric::NeighborBased),
            "centroid_cosine" | "centroid-cosine" => Ok(Metric::CentroidCosine),
            "centroid_euclidean" | "centroid-euclidean" => Ok(Metric::CentroidEuclidean),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Cluster each period separately and compare senses across periods.
    #[default]
    TimeDependent,
    /// Cluster the pooled tokens once and apply the frequency criterion.
    TimeIndependent,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_dependent" | "time-dependent" => Ok(Strategy::TimeDependent),
            "time_independent" | "time-independent" => Ok(Strategy::TimeIndependent),
            other => Err(Error::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Similarity threshold of the detection criterion.
    pub t_sc: f64,
    pub metric: Metric,
    pub strategy: Strategy,
    pub cluster_params: TwoPassParams,
    pub k: usize,
    pub min_tokens: usize,
}

impl DetectionConfig {
    /// Binary-task preset; the detection threshold is the second-pass threshold.
    pub fn for_language(lang: Language) -> Self {
        let p = binary_preset(lang);
        DetectionConfig {
            t_sc: p.t1_sc,
            metric: Metric::NeighborBased,
            strategy: Strategy::TimeDependent,
            cluster_params: p.two_pass(),
            k: p.k,
            min_tokens: DEFAULT_MIN_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_sc > -1.0 && self.t_sc <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "detection threshold must lie in (-1, 1], got {}",
                self.t_sc
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        self.cluster_params.validate()
    }
}

/// Gained and lost senses of one word.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub word: String,
    /// Earlier-period senses with no similar later sense.
    pub lost: Vec<usize>,
    /// Later-period senses with no similar earlier sense.
    pub gained: Vec<usize>,
    pub changed: bool,
}

impl ChangeReport {
    pub fn with_word(mut self, word: impl Into<String>) -> Self {
        self.word = word.into();
        self
    }

    pub fn tsv_line(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{}\t{}\t{}\t{}",
            self.word,
            u8::from(self.changed),
            join(&self.gained),
            join(&self.lost)
        )
    }
}

/// `word<TAB>changed<TAB>gained<TAB>lost`, one line per report, sense indices comma-separated.
pub fn reports_to_tsv(reports: &[ChangeReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{}", r.tsv_line());
    }
    out
}

/// Row/column threshold rule; strict `<` so equality counts as similar.
pub fn detect(s: &SimilarityMatrix, t_sc: f64) -> ChangeReport {
    let lost: Vec<usize> = (0..s.rows())
        .filter(|&i| (0..s.cols()).all(|j| s.get(i, j) < t_sc))
        .collect();
    let gained: Vec<usize> = (0..s.cols())
        .filter(|&j| (0..s.rows()).all(|i| s.get(i, j) < t_sc))
        .collect();
    ChangeReport {
        word: String::new(),
        changed: !lost.is_empty() || !gained.is_empty(),
        lost,
        gained,
    }
}

/// Which of the two compared periods something belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Earlier,
    Later,
}

/// Fewer than this many earlier tokens...
pub const NEW_SENSE_MAX_EARLIER: usize = 2;
/// ...and more than this many later tokens make a cluster a new sense.
pub const NEW_SENSE_MIN_LATER: usize = 5;

/// Indices of pooled clusters with `< 2` earlier tokens and `> 5` later tokens.
pub fn new_sense_clusters(pooled: &ClusterSet, slice_of_token: &[Period]) -> Vec<usize> {
    pooled
        .clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let earlier = c
                .members
                .iter()
                .filter(|&&m| slice_of_token.get(m) == Some(&Period::Earlier))
                .count();
            let later = c
                .members
                .iter()
                .filter(|&&m| slice_of_token.get(m) == Some(&Period::Later))
                .count();
            earlier < NEW_SENSE_MAX_EARLIER && later > NEW_SENSE_MIN_LATER
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn frequency_criterion(pooled: &ClusterSet, slice_of_token: &[Period]) -> bool {
    !new_sense_clusters(pooled, slice_of_token).is_empty()
}

/// Intermediate products of the time-dependent pipeline for one word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordAnalysis {
    pub clusters_t0: ClusterSet,
    pub clusters_t1: ClusterSet,
    pub neighbors_t0: Vec<NeighborSet>,
    pub neighbors_t1: Vec<NeighborSet>,
    pub similarity: SimilarityMatrix,
    pub report: ChangeReport,
}

/// Neighbor sets around every cluster centroid, excluding the word itself.
pub fn neighbor_sets(
    store: &EmbeddingStore,
    clusters: &ClusterSet,
    k: usize,
    min_tokens: usize,
) -> Result<Vec<NeighborSet>> {
    let exclude: BTreeSet<String> = std::iter::once(clusters.word.clone()).collect();
    clusters
        .clusters
        .iter()
        .map(|c| knn(store, &c.centroid, k, &exclude, min_tokens))
        .collect()
}

fn centroid_similarity(clusters_a: &ClusterSet, clusters_b: &ClusterSet, metric: Metric) -> Result<SimilarityMatrix> {
    let values = clusters_a
        .clusters
        .iter()
        .map(|a| {
            clusters_b
                .clusters
                .iter()
                .map(|b| match metric {
                    Metric::CentroidEuclidean => {
                        let ua = linalg::unit(&a.centroid);
                        let ub = linalg::unit(&b.centroid);
                        Ok(1.0 - linalg::norm(&linalg::sub(&ua, &ub)))
                    }
                    _ => Ok(1.0 - cosine_distance(&a.centroid, &b.centroid)?),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    SimilarityMatrix::from_values(values)
}

fn sense_ids(clusters: &ClusterSet, tag: &str) -> Vec<String> {
    (0..clusters.len()).map(|i| format!("{tag}:{i}")).collect()
}

/// Clusters both periods, builds neighbor sets and the similarity matrix, and
/// applies the detection rule.
pub fn analyze_word(
    word: &str,
    store_t0: &EmbeddingStore,
    store_t1: &EmbeddingStore,
    cfg: &DetectionConfig,
) -> Result<WordAnalysis> {
    cfg.validate()?;
    let clusters_t0 = two_pass(store_t0.cloud(word)?, &cfg.cluster_params)?
        .with_slice(store_t0.slice().clone());
    let clusters_t1 = two_pass(store_t1.cloud(word)?, &cfg.cluster_params)?
        .with_slice(store_t1.slice().clone());
    let (neighbors_t0, neighbors_t1, similarity) = match cfg.metric {
        Metric::NeighborBased => {
            let n0 = neighbor_sets(store_t0, &clusters_t0, cfg.k, cfg.min_tokens)?;
            let n1 = neighbor_sets(store_t1, &clusters_t1, cfg.k, cfg.min_tokens)?;
            let s = similarity_matrix(&n0, &n1, None)?;
            (n0, n1, s)
        }
        m => (Vec::new(), Vec::new(), centroid_similarity(&clusters_t0, &clusters_t1, m)?),
    };
    let similarity = similarity.with_ids(
        sense_ids(&clusters_t0, &store_t0.slice().to_string()),
        sense_ids(&clusters_t1, &store_t1.slice().to_string()),
    )?;
    let report = detect(&similarity, cfg.t_sc).with_word(word);
    Ok(WordAnalysis {
        clusters_t0,
        clusters_t1,
        neighbors_t0,
        neighbors_t1,
        similarity,
        report,
    })
}

/// Binary change decision for one word under `cfg`.
pub fn classify_word(
    word: &str,
    store_t0: &EmbeddingStore,
    store_t1: &EmbeddingStore,
    cfg: &DetectionConfig,
) -> Result<ChangeReport> {
    match cfg.strategy {
        Strategy::TimeDependent => Ok(analyze_word(word, store_t0, store_t1, cfg)?.report),
        Strategy::TimeIndependent => {
            cfg.validate()?;
            let early = store_t0.cloud(word)?;
            let late = store_t1.cloud(word)?;
            let pooled_cloud = early.concat(late)?;
            let slices: Vec<Period> = std::iter::repeat(Period::Earlier)
                .take(early.len())
                .chain(std::iter::repeat(Period::Later).take(late.len()))
                .collect();
            let pooled = two_pass(&pooled_cloud, &cfg.cluster_params)?;
            let gained = new_sense_clusters(&pooled, &slices);
            Ok(ChangeReport {
                word: word.to_string(),
                changed: !gained.is_empty(),
                lost: Vec::new(),
                gained,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::SenseCluster;

    fn m(values: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix::from_values(values).unwrap()
    }

    #[test]
    fn single_similar_sense_is_unchanged() {
        let r = detect(&m(vec![vec![0.9]]), 0.40);
        assert!(r.lost.is_empty() && r.gained.is_empty() && !r.changed);
    }

    #[test]
    fn hand_traced_two_by_two() {
        let r = detect(&m(vec![vec![0.1, 0.2], vec![0.9, 0.1]]), 0.40);
        assert_eq!(r.lost, vec![0]);
        assert_eq!(r.gained, vec![1]);
        assert!(r.changed);
    }

    #[test]
    fn all_above_threshold() {
        let r = detect(&m(vec![vec![0.5, 0.5], vec![0.5, 0.5]]), 0.40);
        assert!(!r.changed);
    }

    #[test]
    fn equality_counts_as_similar() {
        let r = detect(&m(vec![vec![0.4]]), 0.40);
        assert!(!r.changed);
    }

    #[test]
    fn tsv_format() {
        let r = ChangeReport {
            word: "plane".into(),
            lost: vec![0],
            gained: vec![1, 2],
            changed: true,
        };
        assert_eq!(r.tsv_line(), "plane\t1\t1,2\t0");
        let r = ChangeReport {
            word: "tree".into(),
            ..Default::default()
        };
        assert_eq!(reports_to_tsv(&[r]), "tree\t0\t\t\n");
    }

    #[test]
    fn frequency_criterion_examples() {
        let cs = |members: Vec<Vec<usize>>| ClusterSet {
            word: "w".into(),
            slice: None,
            clusters: members
                .into_iter()
                .map(|m| SenseCluster {
                    centroid: vec![1.0],
                    members: m,
                })
                .collect(),
            pruned: vec![],
        };
        let mut slices = vec![Period::Earlier; 10];
        slices.extend(vec![Period::Later; 10]);
        // 0 early / 10 late
        assert!(frequency_criterion(&cs(vec![(10..20).collect()]), &slices));
        // every cluster has >= 2 early tokens
        assert!(!frequency_criterion(
            &cs(vec![vec![0, 1, 10, 11, 12, 13, 14, 15], vec![2, 3, 16, 17, 18, 19]]),
            &slices
        ));
        // 1 early, 6 late
        assert!(frequency_criterion(&cs(vec![vec![0, 10, 11, 12, 13, 14, 15]]), &slices));
        // 0 early, exactly 5 late is not enough
        assert!(!frequency_criterion(&cs(vec![vec![10, 11, 12, 13, 14]]), &slices));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectionConfig::for_language(Language::En);
        assert_eq!(cfg.t_sc, 0.40);
        assert_eq!(cfg.k, 14);
        assert!(cfg.validate().is_ok());
        cfg.t_sc = 1.5;
        assert!(cfg.validate().is_err());
    }
}

//! Cross-lingual comparison of detected changes.
//!
//! Two languages' embedding spaces are co-located with a single translation
//! vector `b` (difference of the languages' mean token embeddings). Gained
//! (or lost) senses of a translation pair are then compared with the
//! neighbor-based similarity, `b` added to the first language's side.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve, CostMatrix};
use crate::detect::{analyze_word, neighbor_sets, DetectionConfig, WordAnalysis};
use crate::error::{Error, Result};
use crate::linalg;
use crate::similarity::{sense_similarity, NeighborSet, SimilarityMatrix};
use crate::store::{EmbeddingStore, SliceId, TokenCloud};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifiedVector {
    pub b: Vec<f64>,
    /// `(from, to)`: adding `b` to `from` embeddings moves them into `to`'s space.
    pub source: (SliceId, SliceId),
}

/// `b = mean(l2) - mean(l1)`, using each store's language mean when present and
/// the token-weighted mean of its clouds otherwise.
pub fn rectification_vector(store_l1: &EmbeddingStore, store_l2: &EmbeddingStore) -> Result<RectifiedVector> {
    if store_l1.dim() != store_l2.dim() {
        return Err(Error::DimensionMismatch {
            expected: store_l1.dim(),
            got: store_l2.dim(),
        });
    }
    if store_l1.is_empty() || store_l2.is_empty() {
        return Err(Error::EmptyStore);
    }
    let b = linalg::sub(&store_l2.mean_embedding(), &store_l1.mean_embedding());
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rectification vector".into()));
    }
    Ok(RectifiedVector {
        b,
        source: (store_l1.slice().clone(), store_l2.slice().clone()),
    })
}

/// Mean cosine similarity between `e` and every token of `cloud`.
pub fn topology_score(e: &[f64], cloud: &TokenCloud) -> Result<f64> {
    if e.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: e.len(),
        });
    }
    let ne = linalg::norm(e);
    if !(ne > 0.0) || !ne.is_finite() {
        return Err(Error::DegenerateVector("topology anchor".into()));
    }
    let mut total = 0.0;
    for row in cloud.rows() {
        let nr = linalg::norm_f32(row);
        if !(nr > 0.0) {
            return Err(Error::DegenerateVector("topology cloud row".into()));
        }
        let dot: f64 = e.iter().zip(row).map(|(a, &b)| a * b as f64).sum();
        total += dot / (ne * nr);
    }
    Ok(total / cloud.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensePair {
    /// Sense index in the first language.
    pub l1: usize,
    /// Sense index in the second language.
    pub l2: usize,
    pub similarity: f64,
}

/// How gained (lost) senses of two languages are paired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Highest similarity first, each sense used at most once.
    #[default]
    Greedy,
    /// Maximum number of above-threshold pairs, then maximum total similarity.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XlingComparison {
    pub word_pair: (String, String),
    pub consistent_gains: Vec<SensePair>,
    pub divergent_gains_l1: Vec<usize>,
    pub divergent_gains_l2: Vec<usize>,
    pub consistent_losses: Vec<SensePair>,
    pub divergent_losses_l1: Vec<usize>,
    pub divergent_losses_l2: Vec<usize>,
    pub t_cs: f64,
}

fn check_shape(s: &SimilarityMatrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    let ok = s.rows() == rows && (rows == 0 || s.cols() == cols);
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what} similarity matrix is {}x{}, expected {rows}x{cols}",
            s.rows(),
            s.cols()
        )))
    }
}

/// Pairs rows and columns of `s` with similarity strictly above `t_cs`.
/// Returns `(row, col, s)` triples plus the unpaired rows and columns.
fn pair_up(s: &SimilarityMatrix, rows: usize, cols: usize, t_cs: f64, pairing: Pairing)
    -> (Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>)
{
    let mut pairs = Vec::new();
    if rows > 0 && cols > 0 {
        match pairing {
            Pairing::Greedy => {
                let mut cand: Vec<(f64, usize, usize)> = (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i, j)))
                    .filter_map(|(i, j)| {
                        let v = s.get(i, j);
                        (v > t_cs).then_some((v, i, j))
                    })
                    .collect();
                cand.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
                let mut used_r = vec![false; rows];
                let mut used_c = vec![false; cols];
                for (v, i, j) in cand {
                    if !used_r[i] && !used_c[j] {
                        used_r[i] = true;
                        used_c[j] = true;
                        pairs.push((i, j, v));
                    }
                }
            }
            Pairing::Optimal => {
                // Above-threshold pairs cost 2 - s in [1, 3); anything else costs 4, so
                // adding one more valid pair always beats any similarity gain.
                const NO_PAIR: f64 = 4.0;
                let k = rows.max(cols);
                let mut data = vec![NO_PAIR; k * k];
                for i in 0..rows {
                    for j in 0..cols {
                        let v = s.get(i, j);
                        if v > t_cs {
                            data[i * k + j] = 2.0 - v;
                        }
                    }
                }
                let m = solve(&CostMatrix::new(k, data).expect("finite nonnegative costs"));
                for (i, &j) in m.perm.iter().enumerate() {
                    if i < rows && j < cols && s.get(i, j) > t_cs {
                        pairs.push((i, j, s.get(i, j)));
                    }
                }
                pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
            }
        }
    }
    let free_r = (0..rows).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let free_c = (0..cols).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    (pairs, free_r, free_c)
}

/// Greedy cross-lingual comparison of two change reports.
///
/// `sims_gain` is indexed by positions in `gained_l1 x gained_l2` and
/// `sims_loss` by positions in `lost_l1 x lost_l2`; the returned buckets hold
/// sense indices.
pub fn compare_changes(
    report_l1: &crate::detect::ChangeReport,
    report_l2: &crate::detect::ChangeReport,
    sims_gain: &SimilarityMatrix,
    sims_loss: &SimilarityMatrix,
    t_cs: f64,
) -> Result<XlingComparison> {
    compare_changes_with(report_l1, report_l2, sims_gain, sims_loss, t_cs, Pairing::Greedy)
}

pub fn compare_changes_with(
    report_l1: &crate::detect::ChangeReport,
    report_l2: &crate::detect::ChangeReport,
    sims_gain: &SimilarityMatrix,
    sims_loss: &SimilarityMatrix,
    t_cs: f64,
    pairing: Pairing,
) -> Result<XlingComparison> {
    let (g1, g2) = (&report_l1.gained, &report_l2.gained);
    let (l1, l2) = (&report_l1.lost, &report_l2.lost);
    check_shape(sims_gain, g1.len(), g2.len(), "gain")?;
    check_shape(sims_loss, l1.len(), l2.len(), "loss")?;

    let resolve = |pairs: Vec<(usize, usize, f64)>, a: &[usize], b: &[usize]| -> Vec<SensePair> {
        pairs
            .into_iter()
            .map(|(i, j, s)| SensePair {
                l1: a[i],
                l2: b[j],
                similarity: s,
            })
            .collect()
    };
    let (gp, gr, gc) = pair_up(sims_gain, g1.len(), g2.len(), t_cs, pairing);
    let (lp, lr, lc) = pair_up(sims_loss, l1.len(), l2.len(), t_cs, pairing);
    Ok(XlingComparison {
        word_pair: (report_l1.word.clone(), report_l2.word.clone()),
        consistent_gains: resolve(gp, g1, g2),
        divergent_gains_l1: gr.into_iter().map(|i| g1[i]).collect(),
        divergent_gains_l2: gc.into_iter().map(|j| g2[j]).collect(),
        consistent_losses: resolve(lp, l1, l2),
        divergent_losses_l1: lr.into_iter().map(|i| l1[i]).collect(),
        divergent_losses_l2: lc.into_iter().map(|j| l2[j]).collect(),
        t_cs,
    })
}

/// Similarities between selected senses of two languages, `b` applied to the first.
pub fn cross_lingual_sims(
    senses_l1: &[NeighborSet],
    pick_l1: &[usize],
    senses_l2: &[NeighborSet],
    pick_l2: &[usize],
    b: &[f64],
) -> Result<SimilarityMatrix> {
    let get = |s: &[NeighborSet], i: usize| -> Result<NeighborSet> {
        s.get(i)
            .cloned()
            .ok_or_else(|| Error::ShapeMismatch(format!("sense {i} has no neighbor set")))
    };
    let values = pick_l1
        .iter()
        .map(|&i| {
            let u = get(senses_l1, i)?;
            pick_l2
                .iter()
                .map(|&j| sense_similarity(&u, &get(senses_l2, j)?, Some(b)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = SimilarityMatrix::from_values(values)?;
    m.row_ids = pick_l1.iter().map(|i| i.to_string()).collect();
    m.col_ids = pick_l2.iter().map(|j| j.to_string()).collect();
    Ok(m)
}

/// The four stores of a translation pair: two languages at two periods.
#[derive(Clone, Copy, Debug)]
pub struct PairStores<'a> {
    pub l1_t0: &'a EmbeddingStore,
    pub l1_t1: &'a EmbeddingStore,
    pub l2_t0: &'a EmbeddingStore,
    pub l2_t1: &'a EmbeddingStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XlingAnalysis {
    pub l1: WordAnalysis,
    pub l2: WordAnalysis,
    pub b_t0: RectifiedVector,
    pub b_t1: RectifiedVector,
    pub comparison: XlingComparison,
}

fn ensure_neighbors(a: &mut WordAnalysis, t0: &EmbeddingStore, t1: &EmbeddingStore, cfg: &DetectionConfig) -> Result<()> {
    if a.neighbors_t0.len() != a.clusters_t0.len() {
        a.neighbors_t0 = neighbor_sets(t0, &a.clusters_t0, cfg.k, cfg.min_tokens)?;
    }
    if a.neighbors_t1.len() != a.clusters_t1.len() {
        a.neighbors_t1 = neighbor_sets(t1, &a.clusters_t1, cfg.k, cfg.min_tokens)?;
    }
    Ok(())
}

/// Detects changes of a translation pair in each language and compares them.
pub fn compare_word_pair(
    word_l1: &str,
    word_l2: &str,
    stores: PairStores<'_>,
    cfg_l1: &DetectionConfig,
    cfg_l2: &DetectionConfig,
    t_cs: f64,
    pairing: Pairing,
) -> Result<XlingAnalysis> {
    let mut l1 = analyze_word(word_l1, stores.l1_t0, stores.l1_t1, cfg_l1)?;
    let mut l2 = analyze_word(word_l2, stores.l2_t0, stores.l2_t1, cfg_l2)?;
    ensure_neighbors(&mut l1, stores.l1_t0, stores.l1_t1, cfg_l1)?;
    ensure_neighbors(&mut l2, stores.l2_t0, stores.l2_t1, cfg_l2)?;
    let b_t0 = rectification_vector(stores.l1_t0, stores.l2_t0)?;
    let b_t1 = rectification_vector(stores.l1_t1, stores.l2_t1)?;
    let sims_gain = cross_lingual_sims(
        &l1.neighbors_t1,
        &l1.report.gained,
        &l2.neighbors_t1,
        &l2.report.gained,
        &b_t1.b,
    )?;
    let sims_loss = cross_lingual_sims(
        &l1.neighbors_t0,
        &l1.report.lost,
        &l2.neighbors_t0,
        &l2.report.lost,
        &b_t0.b,
    )?;
    let comparison = compare_changes_with(&l1.report, &l2.report, &sims_gain, &sims_loss, t_cs, pairing)?;
    Ok(XlingAnalysis {
        l1,
        l2,
        b_t0,
        b_t1,
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::ChangeReport;

    fn report(word: &str, gained: Vec<usize>, lost: Vec<usize>) -> ChangeReport {
        ChangeReport {
            word: word.into(),
            changed: !gained.is_empty() || !lost.is_empty(),
            gained,
            lost,
        }
    }

    fn sm(v: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix::from_values(v).unwrap()
    }

    #[test]
    fn empty_reports_give_empty_buckets() {
        let c = compare_changes(
            &report("mouse", vec![], vec![]),
            &report("Maus", vec![], vec![]),
            &sm(vec![]),
            &sm(vec![]),
            0.40,
        )
        .unwrap();
        assert!(c.consistent_gains.is_empty() && c.divergent_gains_l1.is_empty());
        assert!(c.consistent_losses.is_empty() && c.divergent_losses_l2.is_empty());
    }

    #[test]
    fn one_consistent_gain() {
        let c = compare_changes(
            &report("mouse", vec![2], vec![]),
            &report("Maus", vec![1], vec![]),
            &sm(vec![vec![0.9]]),
            &sm(vec![]),
            0.40,
        )
        .unwrap();
        assert_eq!(c.consistent_gains, vec![SensePair { l1: 2, l2: 1, similarity: 0.9 }]);
    }

    #[test]
    fn greedy_trace() {
        let c = compare_changes(
            &report("a", vec![0, 1], vec![]),
            &report("b", vec![0, 1], vec![]),
            &sm(vec![vec![0.9, 0.5], vec![0.5, 0.1]]),
            &sm(vec![]),
            0.40,
        )
        .unwrap();
        assert_eq!(c.consistent_gains.len(), 1);
        assert_eq!((c.consistent_gains[0].l1, c.consistent_gains[0].l2), (0, 0));
        assert_eq!(c.divergent_gains_l1, vec![1]);
        assert_eq!(c.divergent_gains_l2, vec![1]);
    }

    #[test]
    fn optimal_pairing_maximizes_pairs() {
        // greedy takes (0,0) and strands both remaining senses; optimal pairs (0,1), (1,0)
        let s = sm(vec![vec![0.9, 0.8], vec![0.7, 0.1]]);
        let r1 = report("a", vec![0, 1], vec![]);
        let r2 = report("b", vec![0, 1], vec![]);
        let g = compare_changes_with(&r1, &r2, &s, &sm(vec![]), 0.40, Pairing::Greedy).unwrap();
        assert_eq!(g.consistent_gains.len(), 1);
        let o = compare_changes_with(&r1, &r2, &s, &sm(vec![]), 0.40, Pairing::Optimal).unwrap();
        assert_eq!(o.consistent_gains.len(), 2);
        assert!(o.divergent_gains_l1.is_empty());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = compare_changes(
            &report("a", vec![0, 1], vec![]),
            &report("b", vec![0], vec![]),
            &sm(vec![vec![0.9]]),
            &sm(vec![]),
            0.40,
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn topology_examples() {
        let e = [1.0, 0.0, 0.0];
        let same = TokenCloud::from_rows("w", &vec![vec![2.0f32, 0.0, 0.0]; 4]).unwrap();
        assert!((topology_score(&e, &same).unwrap() - 1.0).abs() < 1e-12);
        let ortho = TokenCloud::from_rows("w", &[vec![0.0f32, 1.0, 0.0], vec![0.0, 0.0, 3.0]]).unwrap();
        assert!(topology_score(&e, &ortho).unwrap().abs() < 1e-12);
        assert!(topology_score(&[0.0, 0.0, 0.0], &same).is_err());
    }

    #[test]
    fn identical_stores_give_zero_vector() {
        let c = TokenCloud::from_rows("w", &[vec![1.0f32, 2.0], vec![3.0, -1.0]]).unwrap();
        let s = EmbeddingStore::new(SliceId::new("en", "t1").unwrap(), vec![c], None).unwrap();
        let b = rectification_vector(&s, &s).unwrap();
        assert!(b.b.iter().all(|&x| x == 0.0));
    }
}

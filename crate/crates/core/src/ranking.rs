//! Graded change scores.
//!
//! Senses of both periods are grouped into time-spanning sense groups; each
//! period then yields a frequency distribution over the groups, and the
//! word's score is the Jensen-Shannon distance between the two.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{two_pass, ClusterSet, TwoPassParams};
use crate::config::{ranking_preset, Language};
use crate::detect::{neighbor_sets, Period};
use crate::error::{Error, Result};
use crate::similarity::{sense_similarity, NeighborSet, DEFAULT_MIN_TOKENS};
use crate::store::EmbeddingStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SenseRef {
    pub period: Period,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseGroup {
    pub id: usize,
    /// Sorted, earlier period first.
    pub members: Vec<SenseRef>,
}

/// How senses with similarity above the threshold are grouped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Connected components of the above-threshold graph.
    #[default]
    SingleLink,
    /// Greedy cliques: a sense joins the first group it is similar to in full.
    Clique,
}

/// Groups `n0` earlier and `n1` later senses given a pairwise similarity.
pub fn group_by_similarity<F>(n0: usize, n1: usize, t_sc: f64, grouping: Grouping, sim: F) -> Result<Vec<SenseGroup>>
where
    F: Fn(SenseRef, SenseRef) -> Result<f64>,
{
    let nodes: Vec<SenseRef> = (0..n0)
        .map(|index| SenseRef { period: Period::Earlier, index })
        .chain((0..n1).map(|index| SenseRef { period: Period::Later, index }))
        .collect();
    let n = nodes.len();
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let s = sim(nodes[a], nodes[b])?;
            adj[a][b] = s > t_sc;
            adj[b][a] = adj[a][b];
        }
    }

    let mut label: Vec<usize> = (0..n).collect();
    match grouping {
        Grouping::SingleLink => {
            fn find(p: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while p[r] != r {
                    r = p[r];
                }
                let mut c = x;
                while p[c] != r {
                    let next = p[c];
                    p[c] = r;
                    c = next;
                }
                r
            }
            for a in 0..n {
                for b in (a + 1)..n {
                    if adj[a][b] {
                        let (ra, rb) = (find(&mut label, a), find(&mut label, b));
                        label[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
            for x in 0..n {
                label[x] = find(&mut label, x);
            }
        }
        Grouping::Clique => {
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for x in 0..n {
                match groups.iter_mut().find(|g| g.iter().all(|&y| adj[x][y])) {
                    Some(g) => g.push(x),
                    None => groups.push(vec![x]),
                }
            }
            for g in &groups {
                for &x in g {
                    label[x] = g[0];
                }
            }
        }
    }

    let mut roots: Vec<usize> = label.clone();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots
        .iter()
        .enumerate()
        .map(|(id, &root)| SenseGroup {
            id,
            members: (0..n).filter(|&x| label[x] == root).map(|x| nodes[x]).collect(),
        })
        .collect())
}

/// Groups the senses of two periods by neighbor-based similarity.
pub fn group_senses(
    neighbors_t0: &[NeighborSet],
    neighbors_t1: &[NeighborSet],
    t_sc: f64,
    grouping: Grouping,
) -> Result<Vec<SenseGroup>> {
    let pick = |r: SenseRef| match r.period {
        Period::Earlier => &neighbors_t0[r.index],
        Period::Later => &neighbors_t1[r.index],
    };
    group_by_similarity(neighbors_t0.len(), neighbors_t1.len(), t_sc, grouping, |a, b| {
        sense_similarity(pick(a), pick(b), None)
    })
}

/// Sense-group frequency distribution of one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqDist {
    pub weights: Vec<f64>,
}

/// Share of the period's clustered tokens falling in each group.
pub fn freq_dist(groups: &[SenseGroup], clusters: &ClusterSet, period: Period) -> Result<FreqDist> {
    let total: usize = clusters.clusters.iter().map(|c| c.len()).sum();
    if total == 0 {
        return Err(Error::InvalidParameter("no clustered tokens in period".into()));
    }
    let mut covered = vec![false; clusters.len()];
    let mut weights = Vec::with_capacity(groups.len());
    for g in groups {
        let mut count = 0usize;
        for m in g.members.iter().filter(|m| m.period == period) {
            let c = clusters.clusters.get(m.index).ok_or_else(|| {
                Error::ShapeMismatch(format!("sense {} out of range", m.index))
            })?;
            covered[m.index] = true;
            count += c.len();
        }
        weights.push(count as f64 / total as f64);
    }
    if covered.iter().any(|c| !c) {
        return Err(Error::ShapeMismatch("groups do not cover every sense".into()));
    }
    Ok(FreqDist { weights })
}

/// Jensen-Shannon distance with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &FreqDist, q: &FreqDist) -> Result<f64> {
    if p.weights.len() != q.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "distributions of length {} and {}",
            p.weights.len(),
            q.weights.len()
        )));
    }
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / ((x + y) / 2.0)).log2())
            .sum()
    };
    let div = 0.5 * kl_to_mid(&p.weights, &q.weights) + 0.5 * kl_to_mid(&q.weights, &p.weights);
    Ok(div.clamp(0.0, 1.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    /// Threshold for grouping senses across periods.
    pub t_sc: f64,
    pub cluster_params: TwoPassParams,
    pub k: usize,
    pub min_tokens: usize,
    pub grouping: Grouping,
}

impl RankingConfig {
    pub fn for_language(lang: Language) -> Self {
        let p = ranking_preset(lang);
        RankingConfig {
            t_sc: p.t1_sc,
            cluster_params: p.two_pass(),
            k: p.k,
            min_tokens: DEFAULT_MIN_TOKENS,
            grouping: Grouping::SingleLink,
        }
    }
}

/// Everything computed while scoring one word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    pub groups: Vec<SenseGroup>,
    pub dist_t0: FreqDist,
    pub dist_t1: FreqDist,
    pub score: f64,
}

/// Scores a single word. Pruning is always disabled here.
pub fn score_word(word: &str, store_t0: &EmbeddingStore, store_t1: &EmbeddingStore, cfg: &RankingConfig) -> Result<WordScore> {
    let params = cfg.cluster_params.without_pruning();
    let c0 = two_pass(store_t0.cloud(word)?, &params)?;
    let c1 = two_pass(store_t1.cloud(word)?, &params)?;
    let n0 = neighbor_sets(store_t0, &c0, cfg.k, cfg.min_tokens)?;
    let n1 = neighbor_sets(store_t1, &c1, cfg.k, cfg.min_tokens)?;
    let groups = group_senses(&n0, &n1, cfg.t_sc, cfg.grouping)?;
    let dist_t0 = freq_dist(&groups, &c0, Period::Earlier)?;
    let dist_t1 = freq_dist(&groups, &c1, Period::Later)?;
    let score = jsd(&dist_t0, &dist_t1)?;
    Ok(WordScore {
        word: word.to_string(),
        groups,
        dist_t0,
        dist_t1,
        score,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Sorted by descending score, then word.
    pub scores: Vec<(String, f64)>,
    /// Words that could not be scored, with the reason.
    pub failures: Vec<(String, String)>,
}

impl Ranking {
    /// `word<TAB>score` with six decimals, highest score first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (w, s) in &self.scores {
            let _ = writeln!(out, "{w}\t{s:.6}");
        }
        out
    }
}

pub fn rank_words<S: AsRef<str> + Sync>(
    words: &[S],
    store_t0: &EmbeddingStore,
    store_t1: &EmbeddingStore,
    cfg: &RankingConfig,
) -> Ranking {
    let results: Vec<(String, Result<f64>)> = words
        .par_iter()
        .map(|w| {
            let w = w.as_ref();
            (w.to_string(), score_word(w, store_t0, store_t1, cfg).map(|s| s.score))
        })
        .collect();
    let mut ranking = Ranking::default();
    for (w, r) in results {
        match r {
            Ok(s) => ranking.scores.push((w, s)),
            Err(e) => ranking.failures.push((w, e.to_string())),
        }
    }
    ranking
        .scores
        .sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranking.failures.sort();
    ranking
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::SenseCluster;

    fn fd(w: &[f64]) -> FreqDist {
        FreqDist { weights: w.to_vec() }
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&fd(&[0.3, 0.7]), &fd(&[0.3, 0.7])).unwrap(), 0.0);
        assert!((jsd(&fd(&[1.0, 0.0]), &fd(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-12);
        // M = (0.75, 0.25); KL(P||M) = log2(4/3); KL(Q||M) = 0.5 log2(2/3) + 0.5 log2 2
        let kl_p = (1.0f64 / 0.75).log2();
        let kl_q = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2();
        let expected = ((kl_p + kl_q) / 2.0).sqrt();
        let got = jsd(&fd(&[1.0, 0.0]), &fd(&[0.5, 0.5])).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5579).abs() < 1e-4);
        assert!(jsd(&fd(&[1.0]), &fd(&[0.5, 0.5])).is_err());
    }

    fn table(values: [[f64; 4]; 4]) -> impl Fn(SenseRef, SenseRef) -> Result<f64> {
        move |a: SenseRef, b: SenseRef| {
            let idx = |r: SenseRef| r.index + if r.period == Period::Later { 2 } else { 0 };
            Ok(values[idx(a)][idx(b)])
        }
    }

    #[test]
    fn grouping_examples() {
        let all_high = group_by_similarity(2, 2, 0.4, Grouping::SingleLink, |_, _| Ok(0.9)).unwrap();
        assert_eq!(all_high.len(), 1);
        assert_eq!(all_high[0].members.len(), 4);
        let all_low = group_by_similarity(2, 2, 0.4, Grouping::SingleLink, |_, _| Ok(0.1)).unwrap();
        assert_eq!(all_low.len(), 4);

        // earlier {0,1}, later {2,3}: cross sims 0.9 on the diagonal, everything else 0.1
        let sims = table([
            [1.0, 0.1, 0.9, 0.1],
            [0.1, 1.0, 0.1, 0.9],
            [0.9, 0.1, 1.0, 0.1],
            [0.1, 0.9, 0.1, 1.0],
        ]);
        let g = group_by_similarity(2, 2, 0.4, Grouping::SingleLink, sims).unwrap();
        assert_eq!(g.len(), 2);
        let e = |i| SenseRef { period: Period::Earlier, index: i };
        let l = |i| SenseRef { period: Period::Later, index: i };
        assert_eq!(g[0].members, vec![e(0), l(0)]);
        assert_eq!(g[1].members, vec![e(1), l(1)]);
    }

    #[test]
    fn clique_mode_breaks_chains() {
        // chain e0 - l0 - l1 with e0, l1 dissimilar
        let sims = table([
            [1.0, 0.0, 0.9, 0.1],
            [0.0, 1.0, 0.0, 0.0],
            [0.9, 0.0, 1.0, 0.9],
            [0.1, 0.0, 0.9, 1.0],
        ]);
        let single = group_by_similarity(2, 2, 0.4, Grouping::SingleLink, &sims).unwrap();
        let clique = group_by_similarity(2, 2, 0.4, Grouping::Clique, &sims).unwrap();
        assert_eq!(single.len(), 2);
        assert_eq!(clique.len(), 3);
    }

    fn clusters(sizes: &[usize]) -> ClusterSet {
        let mut next = 0;
        ClusterSet {
            word: "w".into(),
            slice: None,
            clusters: sizes
                .iter()
                .map(|&s| {
                    let members = (next..next + s).collect();
                    next += s;
                    SenseCluster { centroid: vec![1.0], members }
                })
                .collect(),
            pruned: vec![],
        }
    }

    #[test]
    fn freq_dist_examples() {
        let one = vec![SenseGroup {
            id: 0,
            members: vec![SenseRef { period: Period::Earlier, index: 0 }],
        }];
        assert_eq!(freq_dist(&one, &clusters(&[7]), Period::Earlier).unwrap().weights, vec![1.0]);

        let two = vec![
            SenseGroup { id: 0, members: vec![SenseRef { period: Period::Later, index: 0 }] },
            SenseGroup { id: 1, members: vec![SenseRef { period: Period::Later, index: 1 }] },
        ];
        assert_eq!(
            freq_dist(&two, &clusters(&[30, 10]), Period::Later).unwrap().weights,
            vec![0.75, 0.25]
        );
        assert_eq!(
            freq_dist(&two[..1], &clusters(&[30, 10]), Period::Later).map(|_| ()).unwrap_err().to_string(),
            "shape mismatch: groups do not cover every sense"
        );
    }

    #[test]
    fn tsv_has_six_decimals() {
        let r = Ranking {
            scores: vec![("a".into(), 1.0), ("b".into(), 0.123456789)],
            failures: vec![],
        };
        assert_eq!(r.to_tsv(), "a\t1.000000\nb\t0.123457\n");
    }
}

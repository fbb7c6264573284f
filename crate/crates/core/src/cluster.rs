//! Sense induction over a word's token cloud.
//!
//! [`agglomerate`] starts from one cluster per token and repeatedly merges the
//! closest pair while their linkage distance is below `t_sc`, then drops
//! clusters smaller than `t_low`. [`two_pass`] runs it twice: a first pass
//! with a low threshold over-segments the cloud so that small noisy groups
//! can be pruned, and a second pass re-clusters the surviving tokens into
//! the final senses.
//!
//! Linkage is the mean pairwise cosine distance between members (average
//! linkage). Pair distances are kept in a triangular cache and updated with
//! the Lance-Williams recurrence on every merge, with a per-row nearest
//! neighbour cache so a merge step costs `O(n)` amortised instead of `O(n^2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::store::{centroid, cosine_distance, SliceId, TokenCloud};

/// How a merged cluster's centroid is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidUpdate {
    /// Mean of all member tokens; merge guard is the average-linkage distance.
    #[default]
    MemberMean,
    /// `(p_i + p_j) / 2`; merge guard is the cosine distance between centroids.
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Merge while the closest pair is strictly below this distance.
    pub t_sc: f64,
    /// Clusters with fewer members are pruned as noise.
    pub t_low: usize,
    #[serde(default)]
    pub centroid_update: CentroidUpdate,
}

impl ClusterParams {
    pub fn new(t_sc: f64, t_low: usize) -> Self {
        ClusterParams {
            t_sc,
            t_low,
            centroid_update: CentroidUpdate::MemberMean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_sc > 0.0 && self.t_sc < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "t_sc must lie in (0, 2), got {}",
                self.t_sc
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPassParams {
    pub pass0: ClusterParams,
    pub pass1: ClusterParams,
}

impl TwoPassParams {
    pub fn new(t0_sc: f64, t1_sc: f64, t0_low: usize, t1_low: usize) -> Self {
        TwoPassParams {
            pass0: ClusterParams::new(t0_sc, t0_low),
            pass1: ClusterParams::new(t1_sc, t1_low),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pass0.validate()?;
        self.pass1.validate()
    }

    /// Same thresholds with pruning disabled in both passes.
    pub fn without_pruning(mut self) -> Self {
        self.pass0.t_low = 0;
        self.pass1.t_low = 0;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseCluster {
    pub centroid: Vec<f64>,
    /// Sorted row indices into the source cloud.
    pub members: Vec<usize>,
}

impl SenseCluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// The sense clusters of one word in one slice, plus the tokens pruned as noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub word: String,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceId>,
    pub clusters: Vec<SenseCluster>,
    pub pruned: Vec<usize>,
}

impl ClusterSet {
    pub fn with_slice(mut self, slice: SliceId) -> Self {
        self.slice = Some(slice);
        self
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn centroids(&self) -> Vec<Vec<f64>> {
        self.clusters.iter().map(|c| c.centroid.clone()).collect()
    }

    /// Cluster index of every token; `None` for pruned tokens.
    pub fn labels(&self, n_tokens: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n_tokens];
        for (ci, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                if m < n_tokens {
                    labels[m] = Some(ci);
                }
            }
        }
        labels
    }
}

/// Average pairwise cosine distance between the members of `a` and `b`.
pub fn cluster_link_distance(a: &SenseCluster, b: &SenseCluster, cloud: &TokenCloud) -> Result<f64> {
    if a.members.is_empty() || b.members.is_empty() {
        return Err(Error::InvalidParameter("empty cluster".into()));
    }
    let rows = |c: &SenseCluster| -> Result<Vec<Vec<f64>>> {
        c.members
            .iter()
            .map(|&i| {
                if i < cloud.len() {
                    Ok(cloud.row_f64(i))
                } else {
                    Err(Error::ShapeMismatch(format!("member {i} out of range")))
                }
            })
            .collect()
    };
    let ra = rows(a)?;
    let rb = rows(b)?;
    let mut total = 0.0;
    for x in &ra {
        for y in &rb {
            total += cosine_distance(x, y)?;
        }
    }
    Ok(total / (ra.len() * rb.len()) as f64)
}

/// Upper-triangular distance cache with per-row nearest neighbours.
///
/// `rows[i][j - i - 1]` holds the distance between clusters `i < j`; `nn[i]`
/// is the closest live `j > i` with ties resolved to the smallest `j`.
struct LinkageCache {
    rows: Vec<Vec<f64>>,
    live: Vec<bool>,
    nn: Vec<Option<(f64, usize)>>,
}

impl LinkageCache {
    fn new(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let mut cache = LinkageCache {
            rows,
            live: vec![true; n],
            nn: vec![None; n],
        };
        for i in 0..n {
            cache.rescan(i);
        }
        cache
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.rows[a][b - a - 1]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, d: f64) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.rows[a][b - a - 1] = d;
    }

    fn rescan(&mut self, i: usize) {
        let mut best: Option<(f64, usize)> = None;
        for (off, &d) in self.rows[i].iter().enumerate() {
            let j = i + 1 + off;
            if !self.live[j] {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        self.nn[i] = best;
    }

    /// Closest live pair, lexicographically smallest `(i, j)` among ties.
    fn closest(&self) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, nn) in self.nn.iter().enumerate() {
            if !self.live[i] {
                continue;
            }
            if let Some((d, j)) = *nn {
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        best
    }

    /// Retires `j`, after the caller has written the merged distances into row/column `i`.
    fn merged(&mut self, i: usize, j: usize) {
        self.live[j] = false;
        self.nn[j] = None;
        self.rescan(i);
        for k in 0..j {
            if k == i || !self.live[k] {
                continue;
            }
            match self.nn[k] {
                Some((_, nk)) if nk == i || nk == j => self.rescan(k),
                Some((d, nk)) if k < i => {
                    let dk = self.get(k, i);
                    if dk < d || (dk == d && i < nk) {
                        self.nn[k] = Some((dk, i));
                    }
                }
                None if k < i => self.nn[k] = Some((self.get(k, i), i)),
                _ => {}
            }
        }
    }
}

/// Clusters a token cloud by iterative merging; see the module docs.
pub fn agglomerate(cloud: &TokenCloud, params: &ClusterParams) -> Result<ClusterSet> {
    params.validate()?;
    let n = cloud.len();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut midpoints: Vec<Vec<f64>> = Vec::new();

    let rows: Vec<Vec<f64>> = match params.centroid_update {
        CentroidUpdate::MemberMean => {
            let units: Vec<Vec<f64>> = cloud.rows().map(linalg::unit_f32).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    ((i + 1)..n)
                        .map(|j| (1.0 - linalg::dot(&units[i], &units[j])).clamp(0.0, 2.0))
                        .collect()
                })
                .collect()
        }
        CentroidUpdate::Midpoint => {
            midpoints = (0..n).map(|i| cloud.row_f64(i)).collect();
            let mp = &midpoints;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    ((i + 1)..n)
                        .map(|j| centroid_distance(&mp[i], &mp[j]))
                        .collect()
                })
                .collect()
        }
    };
    let mut cache = LinkageCache::new(rows);

    while let Some((d, i, j)) = cache.closest() {
        if !(d < params.t_sc) {
            break;
        }
        let (si, sj) = (members[i].len() as f64, members[j].len() as f64);
        match params.centroid_update {
            CentroidUpdate::MemberMean => {
                for k in 0..n {
                    if k == i || k == j || !cache.live[k] {
                        continue;
                    }
                    let merged = (si * cache.get(k, i) + sj * cache.get(k, j)) / (si + sj);
                    cache.set(k, i, merged);
                }
            }
            CentroidUpdate::Midpoint => {
                let mid: Vec<f64> = midpoints[i]
                    .iter()
                    .zip(&midpoints[j])
                    .map(|(a, b)| (a + b) / 2.0)
                    .collect();
                midpoints[i] = mid;
                for k in 0..n {
                    if k == i || k == j || !cache.live[k] {
                        continue;
                    }
                    let dk = centroid_distance(&midpoints[k], &midpoints[i]);
                    cache.set(k, i, dk);
                }
            }
        }
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        cache.merged(i, j);
    }

    let mut clusters = Vec::new();
    let mut pruned = Vec::new();
    for i in 0..n {
        if !cache.live[i] {
            continue;
        }
        let mut m = std::mem::take(&mut members[i]);
        m.sort_unstable();
        if m.len() < params.t_low {
            pruned.extend(m);
            continue;
        }
        let centroid = match params.centroid_update {
            CentroidUpdate::MemberMean => centroid(&cloud.subset(&m)?),
            CentroidUpdate::Midpoint => midpoints[i].clone(),
        };
        clusters.push(SenseCluster {
            centroid,
            members: m,
        });
    }
    pruned.sort_unstable();
    Ok(ClusterSet {
        word: cloud.word().to_string(),
        slice: None,
        clusters,
        pruned,
    })
}

fn centroid_distance(a: &[f64], b: &[f64]) -> f64 {
    // Midpoints of antipodal centroids can vanish; treat them as maximally far.
    cosine_distance(a, b).unwrap_or(2.0)
}

/// Noise-pruning pass followed by a re-clustering pass over the surviving tokens.
pub fn two_pass(cloud: &TokenCloud, params: &TwoPassParams) -> Result<ClusterSet> {
    params.validate()?;
    let first = agglomerate(cloud, &params.pass0)?;
    let mut keep: Vec<usize> = first
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().copied())
        .collect();
    keep.sort_unstable();
    if keep.is_empty() {
        return Err(Error::AllPruned);
    }
    let sub = cloud.subset(&keep)?;
    let second = agglomerate(&sub, &params.pass1)?;
    if second.clusters.is_empty() {
        return Err(Error::AllPruned);
    }
    let clusters = second
        .clusters
        .into_iter()
        .map(|c| SenseCluster {
            centroid: c.centroid,
            members: c.members.iter().map(|&m| keep[m]).collect(),
        })
        .collect();
    let mut pruned = first.pruned;
    pruned.extend(second.pruned.iter().map(|&m| keep[m]));
    pruned.sort_unstable();
    Ok(ClusterSet {
        word: cloud.word().to_string(),
        slice: None,
        clusters,
        pruned,
    })
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// Lloyd's k-means on unit-normalized tokens with k-means++ seeding.
///
/// Reported centroids are the means of the raw member tokens; empty clusters
/// are dropped and clusters are ordered by their smallest member.
pub fn kmeans_baseline(cloud: &TokenCloud, k: usize, seed: u64) -> Result<ClusterSet> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let points: Vec<Vec<f64>> = cloud.rows().map(linalg::unit_f32).collect();
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq(p, &points[next]));
        }
    }

    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let d = sq(p, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
        }
        let dim = cloud.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq(&updated, &centers[c]).sqrt());
            centers[c] = updated;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        groups[a].push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    groups.sort_by_key(|g| g[0]);
    let clusters = groups
        .into_iter()
        .map(|m| {
            Ok(SenseCluster {
                centroid: centroid(&cloud.subset(&m)?),
                members: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterSet {
        word: cloud.word().to_string(),
        slice: None,
        clusters,
        pruned: Vec::new(),
    })
}

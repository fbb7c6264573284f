//! Scoring against gold data and grid-search tuning of clustering thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{two_pass, ClusterSet, TwoPassParams};
use crate::error::{Error, Result};
use crate::store::{cosine_distance, load_store, TokenCloud};

/// Gold annotations for the binary and graded tasks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub binary: BTreeMap<String, u8>,
    pub graded: BTreeMap<String, f64>,
}

fn tsv_rows(text: &str, what: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(word), Some(value)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse(format!(
                "{what} line {}: expected `word<TAB>value`",
                lineno + 1
            )));
        };
        out.push((word.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Parses `word<TAB>label` lines. Extra columns are ignored, so the output
/// of binary detection can be read back directly.
pub fn parse_binary_tsv(text: &str) -> Result<BTreeMap<String, u8>> {
    let mut map = BTreeMap::new();
    for (word, value) in tsv_rows(text, "binary labels")? {
        let label = match value.as_str() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse(format!("label for `{word}` must be 0 or 1, got `{other}`")))
            }
        };
        if map.insert(word.clone(), label).is_some() {
            return Err(Error::Parse(format!("duplicate word `{word}`")));
        }
    }
    Ok(map)
}

/// Parses `word<TAB>score` lines.
pub fn parse_graded_tsv(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for (word, value) in tsv_rows(text, "graded scores")? {
        let score: f64 = value
            .parse()
            .map_err(|_| Error::Parse(format!("score for `{word}` is not a number: `{value}`")))?;
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("score for `{word}`")));
        }
        if map.insert(word.clone(), score).is_some() {
            return Err(Error::Parse(format!("duplicate word `{word}`")));
        }
    }
    Ok(map)
}

fn check_keys<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> Result<()> {
    if a.keys().ne(b.keys()) {
        let ka: BTreeSet<&String> = a.keys().collect();
        let kb: BTreeSet<&String> = b.keys().collect();
        let only_a: Vec<_> = ka.difference(&kb).take(5).collect();
        let only_b: Vec<_> = kb.difference(&ka).take(5).collect();
        return Err(Error::KeyMismatch(format!(
            "only in predictions: {only_a:?}; only in gold: {only_b:?}"
        )));
    }
    Ok(())
}

/// Fraction of words whose predicted label equals the gold label.
pub fn accuracy(pred: &BTreeMap<String, u8>, gold: &BTreeMap<String, u8>) -> Result<f64> {
    check_keys(pred, gold)?;
    if gold.is_empty() {
        return Err(Error::InvalidParameter("no words to score".into()));
    }
    let hits = pred.iter().filter(|(w, p)| gold[*w] == **p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Average ranks, 1-based; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation of two aligned score vectors.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} gold scores",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two items".into()));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(gold))
}

/// Spearman correlation over the words shared by two score maps.
pub fn spearman_maps(pred: &BTreeMap<String, f64>, gold: &BTreeMap<String, f64>) -> Result<f64> {
    check_keys(pred, gold)?;
    let p: Vec<f64> = pred.values().copied().collect();
    let g: Vec<f64> = gold.values().copied().collect();
    spearman(&p, &g)
}

/// Compacts arbitrary labels to `0..k` in order of first appearance.
fn compact<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn contingency<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<Vec<Vec<usize>>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "labelings have {} and {} items",
            a.len(),
            b.len()
        )));
    }
    let (ia, ka) = compact(a);
    let (ib, kb) = compact(b);
    let mut table = vec![vec![0usize; kb]; ka];
    for (x, y) in ia.into_iter().zip(ib) {
        table[x][y] += 1;
    }
    Ok(table)
}

/// Share of tokens that belong to the majority gold sense of their cluster.
pub fn purity<A: Ord + Clone, B: Ord + Clone>(pred: &[A], gold: &[B]) -> Result<f64> {
    let table = contingency(pred, gold)?;
    if pred.is_empty() {
        return Err(Error::InvalidParameter("purity of an empty labeling".into()));
    }
    let hits: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / pred.len() as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Expected mutual information of two labelings with the given marginals
/// under the hypergeometric permutation model.
pub fn expected_mutual_info(a: &[usize], b: &[usize], n: usize) -> f64 {
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let x = nij as f64;
                let log_p = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                    - lf[n]
                    - lf[nij]
                    - lf[ai - nij]
                    - lf[bj - nij]
                    - lf[n + nij - ai - bj];
                emi += x / nf * (nf * x / (ai as f64 * bj as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with the arithmetic-mean normalizer.
///
/// Returns 0 when the normalizer is zero, e.g. when either labeling is
/// constant.
pub fn ami<A: Ord + Clone, B: Ord + Clone>(labels_a: &[A], labels_b: &[B]) -> Result<f64> {
    let table = contingency(labels_a, labels_b)?;
    let n = labels_a.len();
    if n == 0 {
        return Err(Error::InvalidParameter("AMI of an empty labeling".into()));
    }
    let nf = n as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (nf * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_info(&rows, &cols, n);
    let mean_h = (entropy(&rows, nf) + entropy(&cols, nf)) / 2.0;
    let denom = mean_h - emi;
    if denom.abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok(((mi - emi) / denom).min(1.0))
}

/// A token cloud with one gold sense label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DevWord {
    pub labels: Vec<usize>,
    pub cloud: TokenCloud,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DevSet {
    pub words: BTreeMap<String, DevWord>,
}

impl DevSet {
    pub fn insert(&mut self, labels: Vec<usize>, cloud: TokenCloud) -> Result<()> {
        if labels.len() != cloud.len() {
            return Err(Error::ShapeMismatch(format!(
                "`{}` has {} labels for {} tokens",
                cloud.word(),
                labels.len(),
                cloud.len()
            )));
        }
        self.words
            .insert(cloud.word().to_string(), DevWord { labels, cloud });
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Deserialize)]
struct DevEntry {
    labels: Vec<usize>,
    store_ref: String,
}

/// Reads a dev set: a JSON object mapping each word to
/// `{"labels": [...], "store_ref": "<store dir>"}`. Relative store paths are
/// resolved against the dev file's directory.
pub fn load_devset(path: impl AsRef<Path>) -> Result<DevSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: BTreeMap<String, DevEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut stores = BTreeMap::new();
    let mut dev = DevSet::default();
    for (word, entry) in entries {
        if !stores.contains_key(&entry.store_ref) {
            let store = load_store(base.join(&entry.store_ref))?;
            stores.insert(entry.store_ref.clone(), store);
        }
        let cloud = stores[&entry.store_ref].cloud(&word)?.clone();
        dev.insert(entry.labels, cloud)?;
    }
    Ok(dev)
}

/// Inclusive grid `lo, lo + step, ..., hi`, rounded to 1e-9 to avoid drift.
pub fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::InvalidParameter(format!(
            "bad grid {lo}..{hi} step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Default first-pass grid: the open interval (0.10, 0.35) in steps of 0.01.
pub fn default_grid_t0() -> Vec<f64> {
    grid(0.11, 0.34, 0.01).expect("static grid")
}

/// Default second-pass grid: the open interval (0.10, 0.45) in steps of 0.01.
pub fn default_grid_t1() -> Vec<f64> {
    grid(0.11, 0.44, 0.01).expect("static grid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneFixed {
    pub t0_low: usize,
    pub t1_low: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t0_sc: f64,
    pub t1_sc: f64,
    /// Sum of per-word AMI.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: GridPoint,
    pub fixed: TuneFixed,
    pub words: Vec<String>,
    /// Every grid point, first-pass threshold major.
    pub surface: Vec<GridPoint>,
}

impl TuneReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Token labels for AMI: cluster index, with every pruned token in one
/// extra noise cluster.
pub fn token_labels(clusters: &ClusterSet, n_tokens: usize) -> Vec<usize> {
    let noise = clusters.len();
    clusters
        .labels(n_tokens)
        .into_iter()
        .map(|l| l.unwrap_or(noise))
        .collect()
}

/// Token labels with every pruned token attached to the cluster whose
/// centroid is nearest in cosine distance (ties to the lower index).
pub fn attached_labels(clusters: &ClusterSet, cloud: &TokenCloud) -> Result<Vec<usize>> {
    if clusters.is_empty() {
        return Err(Error::AllPruned);
    }
    let mut labels = token_labels(clusters, cloud.len());
    for &p in &clusters.pruned {
        let row = cloud.row_f64(p);
        let mut best = (0, f64::INFINITY);
        for (ci, c) in clusters.clusters.iter().enumerate() {
            let d = cosine_distance(&row, &c.centroid)?;
            if d < best.1 {
                best = (ci, d);
            }
        }
        labels[p] = best.0;
    }
    Ok(labels)
}

fn score_point(dev: &DevSet, params: &TwoPassParams) -> Result<f64> {
    let mut total = 0.0;
    for w in dev.words.values() {
        let predicted = match two_pass(&w.cloud, params) {
            Ok(c) => token_labels(&c, w.cloud.len()),
            Err(Error::AllPruned) => vec![0; w.cloud.len()],
            Err(e) => return Err(e),
        };
        total += ami(&w.labels, &predicted)?;
    }
    Ok(total)
}

/// Grid search maximizing summed AMI between gold and clustered labels.
/// Ties go to the lexicographically smallest `(t0_sc, t1_sc)`.
pub fn tune(dev: &DevSet, grid_t0: &[f64], grid_t1: &[f64], fixed: TuneFixed) -> Result<TuneReport> {
    if grid_t0.is_empty() || grid_t1.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidParameter("empty dev set".into()));
    }
    let mut g0 = grid_t0.to_vec();
    let mut g1 = grid_t1.to_vec();
    g0.sort_by(f64::total_cmp);
    g0.dedup();
    g1.sort_by(f64::total_cmp);
    g1.dedup();
    let points: Vec<(f64, f64)> = g0
        .iter()
        .flat_map(|&a| g1.iter().map(move |&b| (a, b)))
        .collect();
    let surface = points
        .par_iter()
        .map(|&(t0, t1)| {
            let params = TwoPassParams::new(t0, t1, fixed.t0_low, fixed.t1_low);
            Ok(GridPoint {
                t0_sc: t0,
                t1_sc: t1,
                score: score_point(dev, &params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = surface[0];
    for p in &surface[1..] {
        if p.score > best.score {
            best = *p;
        }
    }
    Ok(TuneReport {
        best,
        fixed,
        words: dev.words.keys().cloned().collect(),
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map<T: Copy>(pairs: &[(&str, T)]) -> BTreeMap<String, T> {
        pairs.iter().map(|(w, v)| (w.to_string(), *v)).collect()
    }

    #[test]
    fn accuracy_examples() {
        let gold = map(&[("a", 1u8), ("b", 0), ("c", 1)]);
        assert_eq!(accuracy(&gold, &gold).unwrap(), 1.0);
        let flipped: BTreeMap<_, _> = gold.iter().map(|(w, v)| (w.clone(), 1 - v)).collect();
        assert_eq!(accuracy(&flipped, &gold).unwrap(), 0.0);
        let fewer = map(&[("a", 1u8)]);
        assert!(matches!(accuracy(&fewer, &gold), Err(Error::KeyMismatch(_))));

        let gold: BTreeMap<String, u8> = (0..37).map(|i| (format!("w{i:02}"), 1)).collect();
        let pred: BTreeMap<String, u8> = (0..37).map(|i| (format!("w{i:02}"), u8::from(i < 29))).collect();
        assert!((accuracy(&pred, &gold).unwrap() - 0.784).abs() < 5e-4);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(spearman(&x, &[2.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn purity_examples() {
        let gold = [0, 0, 1, 1, 2];
        assert_eq!(purity(&[5, 5, 7, 7, 9], &gold).unwrap(), 1.0);
        let gold: Vec<u8> = (0..10).map(|i| u8::from(i >= 6)).collect();
        assert!((purity(&[0u8; 10], &gold).unwrap() - 0.6).abs() < 1e-12);
        assert!(purity(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ami_examples() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((ami(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ami(&a, &[2, 2, 0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ami(&a, &[7; 6]).unwrap(), 0.0);
        assert!(ami(&a, &[0, 1]).is_err());
    }

    #[test]
    fn ami_reference_value() {
        // Fixture checked against a widely used implementation
        // (arithmetic normalizer).
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let v = ami(&a, &b).unwrap();
        assert!((v - 0.2987924581708901).abs() < 1e-9, "{v}");
    }

    #[test]
    fn tsv_parsing() {
        let m = parse_binary_tsv("a\t1\nb\t0\t\t\n\n").unwrap();
        assert_eq!(m, map(&[("a", 1u8), ("b", 0)]));
        assert!(parse_binary_tsv("a\t2\n").is_err());
        assert!(parse_binary_tsv("a\n").is_err());
        assert!(parse_binary_tsv("a\t1\na\t0\n").is_err());
        let g = parse_graded_tsv("x\t0.25\ny\t1e-1\n").unwrap();
        assert_eq!(g["y"], 0.1);
        assert!(parse_graded_tsv("x\tnan\n").is_err());
    }

    #[test]
    fn grids() {
        let g = default_grid_t0();
        assert_eq!(g.len(), 24);
        assert_eq!((g[0], g[23]), (0.11, 0.34));
        assert_eq!(default_grid_t1().len(), 34);
        assert!(grid(0.3, 0.2, 0.01).is_err());
        assert_eq!(grid(0.2, 0.2, 0.01).unwrap(), vec![0.2]);
    }

    #[test]
    fn tune_rejects_empty_grid() {
        let mut dev = DevSet::default();
        let cloud = TokenCloud::from_rows_f64("w", &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        dev.insert(vec![0, 1], cloud).unwrap();
        let fixed = TuneFixed { t0_low: 0, t1_low: 0 };
        assert!(tune(&dev, &[], &[0.2], fixed).is_err());
        let single = tune(&dev, &[0.2], &[0.3], fixed).unwrap();
        assert_eq!((single.best.t0_sc, single.best.t1_sc), (0.2, 0.3));
        assert_eq!(single.surface.len(), 1);
    }
}

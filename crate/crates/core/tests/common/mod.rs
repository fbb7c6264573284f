//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semshift::store::TokenCloud;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cos_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0)
}

/// Average-linkage clustering that recomputes every cluster-pair distance
/// from token pairs on each iteration. Returns (clusters, pruned) with each
/// cluster's members sorted and clusters ordered by smallest member.
pub fn naive_agglomerate(cloud: &TokenCloud, t_sc: f64, t_low: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = cloud.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut total = 0.0;
                for &x in &clusters[a] {
                    for &y in &clusters[b] {
                        total += cos_dist(cloud.row(x), cloud.row(y));
                    }
                }
                let d = total / (clusters[a].len() * clusters[b].len()) as f64;
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d < t_sc => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    let mut pruned = Vec::new();
    let mut kept = Vec::new();
    for c in clusters {
        if c.len() < t_low {
            pruned.extend(c);
        } else {
            kept.push(c);
        }
    }
    kept.sort();
    pruned.sort_unstable();
    (kept, pruned)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> TokenCloud {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| loop {
            let r: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            if r.iter().any(|x| x.abs() > 1e-3) {
                break r;
            }
        })
        .collect();
    TokenCloud::from_rows("w", &rows).unwrap()
}

/// Lost rows and gained columns by direct scanning.
pub fn detect_oracle(values: &[Vec<f64>], t: f64) -> (Vec<usize>, Vec<usize>) {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    let lost = (0..rows)
        .filter(|&i| (0..cols).all(|j| values[i][j] < t))
        .collect();
    let gained = (0..cols)
        .filter(|&j| (0..rows).all(|i| values[i][j] < t))
        .collect();
    (lost, gained)
}

/// Jensen-Shannon distance (base 2) straight from the definition.
pub fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    let kl = |a: &[f64], sa: f64, m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| (x / sa) * ((x / sa) / y).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a / sp + b / sq)).collect();
    (0.5 * kl(p, sp, &m) + 0.5 * kl(q, sq, &m)).max(0.0).sqrt()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Sample covariance (n - 1 denominator).
pub fn covariance(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in x {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    c
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Expected mutual information under the permutation model, enumerating
/// the hypergeometric distribution of every contingency cell directly.
pub fn emi_oracle(a: &[usize], b: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            for nij in 1..=ai.min(bj) {
                let p = binomial(bj, nij) * binomial(n - bj, ai - nij) / binomial(n, ai);
                if p == 0.0 {
                    continue;
                }
                let x = nij as f64;
                emi += p * (x / nf) * (nf * x / (ai * bj) as f64).ln();
            }
        }
    }
    emi
}

/// AMI (arithmetic normalizer) built on [`emi_oracle`].
pub fn ami_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
    }
    let ra: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cb: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |m: &[usize]| -> f64 {
        m.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (nf * c / (ra[i] * cb[j]) as f64).ln();
            }
        }
    }
    let ra: Vec<usize> = ra.into_iter().filter(|&x| x > 0).collect();
    let cb: Vec<usize> = cb.into_iter().filter(|&x| x > 0).collect();
    let emi = emi_oracle(&ra, &cb, n);
    let denom = 0.5 * (h(&ra) + h(&cb)) - emi;
    if denom.abs() < 1e-12 {
        0.0
    } else {
        (mi - emi) / denom
    }
}

/// Minimum total cost over all permutations via Heap's algorithm.
pub fn min_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum() };
    let mut best = total(&perm);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Partition as a set of member sets, for order-free comparison.
pub fn partition(clusters: &[Vec<usize>]) -> BTreeSet<Vec<usize>> {
    clusters.iter().cloned().collect()
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use semshift::assignment::{brute_force, solve, CostMatrix};
use semshift::cluster::{agglomerate, ClusterParams};
use semshift::detect::detect;
use semshift::eval::{ami, purity, spearman};
use semshift::graph::pca2;
use semshift::ranking::{jsd, FreqDist};
use semshift::similarity::{knn, sense_similarity, Neighbor, NeighborSet, SimilarityMatrix};
use semshift::store::{centroid, cosine_distance, load_store, save_store, EmbeddingStore, SliceId, TokenCloud};

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn cloud_strategy(max_n: usize) -> impl Strategy<Value = TokenCloud> {
    (1..=max_n, 2usize..5).prop_flat_map(|(n, dim)| {
        prop::collection::vec(vec_strategy(dim), n)
            .prop_map(|rows| TokenCloud::from_rows_f64("w", &rows).unwrap())
    })
}

fn dist_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len)
        .prop_filter("non-zero mass", |v| v.iter().sum::<f64>() > 1e-6)
        .prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
}

fn square(k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..3.0, k), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_is_symmetric_and_scale_free(
        (u, v) in (2usize..8).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
        a in 0.01f64..100.0,
        b in 0.01f64..100.0,
    ) {
        let d = cosine_distance(&u, &v).unwrap();
        prop_assert!((d - cosine_distance(&v, &u).unwrap()).abs() < 1e-12);
        let su: Vec<f64> = u.iter().map(|x| x * a).collect();
        let sv: Vec<f64> = v.iter().map(|x| x * b).collect();
        prop_assert!((d - cosine_distance(&su, &sv).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn centroid_ignores_row_order(cloud in cloud_strategy(10), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let mut rng = common::rng(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let shuffled = cloud.subset(&order).unwrap();
        for (a, b) in centroid(&cloud).iter().zip(centroid(&shuffled)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn agglomerate_partitions_and_matches_rescan(
        cloud in cloud_strategy(12),
        t_sc in 0.05f64..1.5,
        t_low in 0usize..4,
    ) {
        let got = agglomerate(&cloud, &ClusterParams::new(t_sc, t_low)).unwrap();
        let mut seen: Vec<usize> = got.clusters.iter().flat_map(|c| c.members.clone()).collect();
        seen.extend(&got.pruned);
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..cloud.len()).collect::<Vec<_>>());
        prop_assert!(got.clusters.iter().all(|c| c.len() >= t_low.max(1)));
        let members: Vec<Vec<usize>> = got.clusters.iter().map(|c| c.members.clone()).collect();
        let (want, pruned) = common::naive_agglomerate(&cloud, t_sc, t_low);
        prop_assert_eq!(common::partition(&members), common::partition(&want));
        prop_assert_eq!(got.pruned, pruned);
    }

    #[test]
    fn higher_threshold_never_adds_clusters(cloud in cloud_strategy(14), a in 0.05f64..1.9, b in 0.05f64..1.9) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let n_lo = agglomerate(&cloud, &ClusterParams::new(lo, 0)).unwrap().len();
        let n_hi = agglomerate(&cloud, &ClusterParams::new(hi, 0)).unwrap().len();
        prop_assert!(n_hi <= n_lo);
    }

    #[test]
    fn assignment_matches_brute_force(rows in (1usize..7).prop_flat_map(square)) {
        let c = CostMatrix::from_rows(&rows).unwrap();
        let s = solve(&c);
        let b = brute_force(&c).unwrap();
        prop_assert!((s.total_cost - b.total_cost).abs() < 1e-9);
        prop_assert!((s.total_cost - common::min_assignment_cost(&rows)).abs() < 1e-9);
        let mut perm = s.perm.clone();
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..rows.len()).collect::<Vec<_>>());
    }

    #[test]
    fn assignment_row_shift_and_permutation(
        rows in (2usize..7).prop_flat_map(square),
        shift in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let base = solve(&CostMatrix::from_rows(&rows).unwrap()).total_cost;
        let mut shifted = rows.clone();
        shifted[0].iter_mut().for_each(|x| *x += shift);
        let s = solve(&CostMatrix::from_rows(&shifted).unwrap()).total_cost;
        prop_assert!((s - base - shift).abs() < 1e-9);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut common::rng(seed));
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let p = solve(&CostMatrix::from_rows(&permuted).unwrap()).total_cost;
        prop_assert!((p - base).abs() < 1e-9);
    }

    #[test]
    fn sense_similarity_is_symmetric(
        (a, b) in (2usize..5, 1usize..6).prop_flat_map(|(d, k)| (
            prop::collection::vec(vec_strategy(d), k),
            prop::collection::vec(vec_strategy(d), k),
        )),
    ) {
        let set = |rows: &[Vec<f64>]| NeighborSet {
            anchor: rows[0].clone(),
            neighbors: rows.iter().enumerate().map(|(i, r)| Neighbor { word: format!("n{i}"), embedding: r.clone() }).collect(),
        };
        let (u, v) = (set(&a), set(&b));
        let s = sense_similarity(&u, &v, None).unwrap();
        prop_assert!((s - sense_similarity(&v, &u, None).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((sense_similarity(&u, &u, None).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn knn_ignores_anchor_scale(
        rows in prop::collection::vec(vec_strategy(3), 6..12),
        anchor in vec_strategy(3),
        scale in 0.01f64..50.0,
    ) {
        let clouds: Vec<TokenCloud> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| TokenCloud::from_rows_f64(format!("w{i:02}"), &[r.clone()]).unwrap())
            .collect();
        let store = EmbeddingStore::new(SliceId::new("en", "t0").unwrap(), clouds, None).unwrap();
        let none = BTreeSet::new();
        let a = knn(&store, &anchor, 4, &none, 1).unwrap();
        let scaled: Vec<f64> = anchor.iter().map(|x| x * scale).collect();
        let b = knn(&store, &scaled, 4, &none, 1).unwrap();
        let wa: Vec<&str> = a.words().collect();
        let wb: Vec<&str> = b.words().collect();
        prop_assert_eq!(wa, wb);
    }

    #[test]
    fn raising_detection_threshold_only_adds_changes(
        values in (1usize..4, 1usize..4).prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, m), n)),
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = SimilarityMatrix::from_values(values.clone()).unwrap();
        let r_lo = detect(&s, lo);
        let r_hi = detect(&s, hi);
        prop_assert!(r_lo.lost.iter().all(|i| r_hi.lost.contains(i)));
        prop_assert!(r_lo.gained.iter().all(|j| r_hi.gained.contains(j)));
        let (lost, gained) = common::detect_oracle(&values, hi);
        prop_assert_eq!(r_hi.lost, lost);
        prop_assert_eq!(r_hi.gained, gained);
    }

    #[test]
    fn jsd_is_a_bounded_metric(
        (p, q, r) in (1usize..7).prop_flat_map(|n| (dist_strategy(n), dist_strategy(n), dist_strategy(n))),
    ) {
        let d = |a: &[f64], b: &[f64]| jsd(&FreqDist { weights: a.to_vec() }, &FreqDist { weights: b.to_vec() }).unwrap();
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-12);
        prop_assert!(d(&p, &p) < 1e-9);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
        prop_assert!((0.0..=1.0).contains(&d(&p, &q)));
        prop_assert!((d(&p, &q) - common::jsd_oracle(&p, &q)).abs() < 1e-9);
    }

    #[test]
    fn ami_relabeling_and_oracle(
        (a, b) in (2usize..40).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..3, n),
        )),
        perm_seed in any::<u64>(),
    ) {
        let v = ami(&a, &b).unwrap();
        prop_assert!(v <= 1.0 + 1e-12);
        let mut map: Vec<usize> = (0..4).collect();
        rand::seq::SliceRandom::shuffle(map.as_mut_slice(), &mut common::rng(perm_seed));
        let relabeled: Vec<usize> = a.iter().map(|&x| map[x] + 10).collect();
        prop_assert!((v - ami(&relabeled, &b).unwrap()).abs() < 1e-9);
        prop_assert!((v - ami(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((v - common::ami_oracle(&a, &b)).abs() < 1e-9, "{} vs oracle {}", v, common::ami_oracle(&a, &b));
        let p = purity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        (x, y) in (3usize..20).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )),
    ) {
        if let Ok(r) = spearman(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let gy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
            prop_assert!((r - spearman(&fx, &gy).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_is_translation_invariant(
        rows in (2usize..6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 3..10)),
        t in -10.0f64..10.0,
    ) {
        let a = pca2(&rows).unwrap();
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + t).collect()).collect();
        let b = pca2(&moved).unwrap();
        // Axes are only defined up to sign when eigenvalues coincide; compare distances.
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let da = (a[i][0] - a[j][0]).hypot(a[i][1] - a[j][1]);
                let db = (b[i][0] - b[j][0]).hypot(b[i][1] - b[j][1]);
                prop_assert!((da - db).abs() < 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn store_round_trip_is_bit_exact(
        clouds in prop::collection::vec(cloud_strategy(5), 1..4),
        mean in prop::option::of(prop::collection::vec(-2.0f32..2.0, 1)),
    ) {
        let dim = clouds[0].dim();
        let clouds: Vec<TokenCloud> = clouds
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.dim() == dim)
            .map(|(i, c)| TokenCloud::new(format!("w{i}"), dim, c.data().to_vec()).unwrap())
            .collect();
        let mean = mean.map(|m| vec![m[0]; dim]);
        let store = EmbeddingStore::new(SliceId::new("de", "1800").unwrap(), clouds, mean).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_store(&store, tmp.path()).unwrap();
        prop_assert_eq!(load_store(tmp.path()).unwrap(), store);
    }
}

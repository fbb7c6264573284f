//! Square linear assignment.
//!
//! [`solve`] is the shortest-augmenting-path form of Jonker-Volgenant: rows
//! are inserted one at a time, each by a Dijkstra-like search over reduced
//! costs, with dual potentials updated after every augmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dual-feasibility slack.
const EPS: f64 = 1e-12;

/// A `k x k` matrix of finite, nonnegative costs.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    k: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "cost matrix of size {k} needs {} entries, got {}",
                k * k,
                data.len()
            )));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cost entries must be finite and nonnegative, got {x}"
            )));
        }
        Ok(CostMatrix { k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "cost matrix must be square: {k} rows but a row of length {}",
                r.len()
            )));
        }
        CostMatrix::new(k, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    /// Total cost of a row-to-column assignment, summed in row order.
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `perm[i]` is the column matched to row `i`.
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost perfect matching.
pub fn solve(cost: &CostMatrix) -> Matching {
    let n = cost.size();
    if n == 0 {
        return Matching {
            perm: Vec::new(),
            total_cost: 0.0,
        };
    }
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut path = vec![NONE; n];
    let mut spc = vec![f64::INFINITY; n];
    let mut in_rows = vec![false; n];
    let mut in_cols = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for cur_row in 0..n {
        spc.fill(f64::INFINITY);
        in_rows.fill(false);
        in_cols.fill(false);
        remaining.clear();
        // reversed so a constant matrix yields the identity
        remaining.extend((0..n).rev());

        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let sink = loop {
            in_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining.iter().enumerate() {
                let r = min_val + cost.get(i, j) - u[i] - v[j];
                if r < spc[j] {
                    path[j] = i;
                    spc[j] = r;
                }
                if spc[j] < lowest || (spc[j] == lowest && row4col[j] == NONE) {
                    lowest = spc[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining.swap_remove(index);
            in_cols[j] = true;
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..n {
            if in_rows[r] && r != cur_row {
                u[r] += min_val - spc[col4row[r]];
            }
        }
        for c in 0..n {
            if in_cols[c] {
                v[c] -= min_val - spc[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }

    debug_assert!(dual_feasible(cost, &u, &v), "reduced costs must stay nonnegative");
    Matching {
        total_cost: cost.cost_of(&col4row),
        perm: col4row,
    }
}

fn dual_feasible(cost: &CostMatrix, u: &[f64], v: &[f64]) -> bool {
    let n = cost.size();
    let scale = 1.0 + cost.data.iter().fold(0.0f64, |a, &b| a.max(b));
    (0..n).all(|i| (0..n).all(|j| cost.get(i, j) - u[i] - v[j] >= -EPS * scale * n as f64))
}

/// Exhaustive minimum over all `k!` permutations, visited in lexicographic
/// order so ties resolve to the lexicographically smallest permutation.
pub fn brute_force(cost: &CostMatrix) -> Result<Matching> {
    let k = cost.size();
    if k > 9 {
        return Err(Error::InvalidParameter(format!(
            "brute force limited to k <= 9, got {k}"
        )));
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = Matching {
        total_cost: cost.cost_of(&perm),
        perm: perm.clone(),
    };
    while next_permutation(&mut perm) {
        let c = cost.cost_of(&perm);
        if c < best.total_cost {
            best = Matching {
                perm: perm.clone(),
                total_cost: c,
            };
        }
    }
    Ok(best)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn diagonal_is_free() {
        let c = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let s = solve(&c);
        assert_eq!(s.perm, vec![0, 1]);
        assert_eq!(s.total_cost, 0.0);
        assert_eq!(brute_force(&c).unwrap(), s);
    }

    #[test]
    fn single_entry() {
        let s = solve(&m(&[&[7.0]]));
        assert_eq!(s.perm, vec![0]);
        assert_eq!(s.total_cost, 7.0);
    }

    #[test]
    fn constant_matrix_identity_tiebreak() {
        let c = CostMatrix::new(4, vec![2.5; 16]).unwrap();
        let b = brute_force(&c).unwrap();
        assert_eq!(b.perm, vec![0, 1, 2, 3]);
        assert_eq!(b.total_cost, 10.0);
        assert_eq!(solve(&c).total_cost, 10.0);
    }

    #[test]
    fn hand_enumerated_three_by_three() {
        // perms of [[1,2,3],[2,4,6],[3,6,9]]: 14, 13, 13, 11, 11, 10 -> min 10 at (2,1,0)
        let c = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[3.0, 6.0, 9.0]]);
        let b = brute_force(&c).unwrap();
        assert_eq!(b.total_cost, 10.0);
        assert_eq!(b.perm, vec![2, 1, 0]);
        assert_eq!(solve(&c).total_cost, 10.0);
    }

    #[test]
    fn random_six_by_six_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let c = CostMatrix::new(6, (0..36).map(|_| rng.gen::<f64>() * 2.0).collect()).unwrap();
            assert_eq!(solve(&c).total_cost, brute_force(&c).unwrap().total_cost);
        }
    }

    #[test]
    fn integer_costs_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for k in 1..=7 {
            for _ in 0..50 {
                let c = CostMatrix::new(k, (0..k * k).map(|_| rng.gen_range(0..4) as f64).collect())
                    .unwrap();
                let s = solve(&c);
                let mut seen = s.perm.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..k).collect::<Vec<_>>());
                assert_eq!(s.total_cost, brute_force(&c).unwrap().total_cost);
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(CostMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![-1.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(brute_force(&CostMatrix::new(10, vec![0.0; 100]).unwrap()).is_err());
    }
}

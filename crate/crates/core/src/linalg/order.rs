use std::collections::VecDeque;

use super::SparseOperator;

/// Symmetric permutation applied before banded factorization.
///
/// `perm[new] = old`, `inverse[old] = new`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            perm: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    /// Panics unless `perm` is a permutation of `0..perm.len()`.
    pub fn from_permutation(perm: Vec<usize>) -> Self {
        let n = perm.len();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            assert!(old < n && inverse[old] == usize::MAX, "not a permutation");
            inverse[old] = new;
        }
        Ordering { perm, inverse }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn old_index(&self, new: usize) -> usize {
        self.perm[new]
    }

    pub fn new_index(&self, old: usize) -> usize {
        self.inverse[old]
    }

    /// Half-bandwidth `max |new(i) - new(j)|` over the nonzero pattern.
    pub fn bandwidth(&self, a: &SparseOperator) -> usize {
        (0..a.dim())
            .flat_map(|i| {
                let ni = self.inverse[i];
                a.neighbours(i).iter().map(move |&j| ni.abs_diff(self.inverse[j]))
            })
            .max()
            .unwrap_or(0)
    }

    /// Reverse Cuthill-McKee on the (assumed symmetric) pattern of `a`.
    pub fn reverse_cuthill_mckee(a: &SparseOperator) -> Self {
        let n = a.dim();
        let degree: Vec<usize> = (0..n).map(|i| a.neighbours(i).len()).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap();
            let start = pseudo_peripheral(a, seed, &visited);
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(i) = queue.pop_front() {
                order.push(i);
                let mut next: Vec<usize> = a.neighbours(i).iter().copied().filter(|&j| !visited[j]).collect();
                next.sort_by_key(|&j| (degree[j], j));
                for j in next {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        Self::from_permutation(order)
    }

    /// The candidate with the smallest bandwidth on `a` (first wins ties).
    pub fn narrowest(a: &SparseOperator, candidates: impl IntoIterator<Item = Ordering>) -> Self {
        candidates
            .into_iter()
            .min_by_key(|o| o.bandwidth(a))
            .unwrap_or_else(|| Self::identity(a.dim()))
    }
}

fn bfs_levels(a: &SparseOperator, start: usize, blocked: &[bool]) -> (usize, usize) {
    // Returns (eccentricity, a node of minimum degree in the last level).
    let n = a.dim();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(i) = queue.pop_front() {
        last = i;
        for &j in a.neighbours(i) {
            if !blocked[j] && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let ecc = level[last];
    let far = (0..n)
        .filter(|&i| level[i] == ecc)
        .min_by_key(|&i| a.neighbours(i).len())
        .unwrap_or(last);
    (ecc, far)
}

fn pseudo_peripheral(a: &SparseOperator, seed: usize, blocked: &[bool]) -> usize {
    let mut node = seed;
    let (mut ecc, mut far) = bfs_levels(a, node, blocked);
    for _ in 0..8 {
        let (e2, f2) = bfs_levels(a, far, blocked);
        if e2 <= ecc {
            break;
        }
        node = far;
        ecc = e2;
        far = f2;
    }
    node
}

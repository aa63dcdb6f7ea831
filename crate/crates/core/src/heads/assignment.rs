//! Exact linear assignment (Hungarian method with potentials).

use ndarray::{Array2, ArrayView2};

/// Square 0/1 matrix with exactly one 1 per row and column, stored as the
/// column index chosen for each row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationMatrix {
    cols: Vec<usize>,
}

impl PermutationMatrix {
    /// `None` unless `cols` is a permutation of `0..cols.len()`.
    pub fn from_columns(cols: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; cols.len()];
        for &c in &cols {
            if c >= cols.len() || std::mem::replace(&mut seen[c], true) {
                return None;
            }
        }
        Some(Self { cols })
    }

    pub fn identity(n: usize) -> Self {
        Self { cols: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn column_of(&self, row: usize) -> usize {
        self.cols[row]
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for (r, &c) in self.cols.iter().enumerate() {
            m[[r, c]] = 1.0;
        }
        m
    }

    /// `<X, P>_F`, the objective value of this assignment.
    pub fn score(&self, x: ArrayView2<f64>) -> f64 {
        self.cols.iter().enumerate().map(|(r, &c)| x[[r, c]]).sum()
    }
}

/// Permutation maximizing `sum_i X[i, P(i)]`.
///
/// Among optimal permutations the lexicographically smallest column
/// sequence wins (lowest row first, then lowest column); entries within a
/// relative `1e-9` of optimal count as ties. An all-equal `X` yields the
/// identity.
pub fn hard_assignment(x: ArrayView2<f64>) -> PermutationMatrix {
    let n = x.nrows();
    assert_eq!(n, x.ncols(), "assignment needs a square matrix");
    if n == 0 {
        return PermutationMatrix { cols: Vec::new() };
    }
    let cost = x.mapv(|v| -v);
    let (mut row_to_col, u, v) = hungarian(&cost);
    let scale = 1.0 + cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let tight = Array2::from_shape_fn((n, n), |(i, j)| cost[[i, j]] - u[i] - v[j] <= tol);
    lexicographic_refine(&tight, &mut row_to_col);
    PermutationMatrix { cols: row_to_col }
}

/// O(n³) Hungarian algorithm for minimum cost. Returns the assignment and
/// dual potentials with `u[i] + v[j] <= cost[i][j]`, equality on the
/// assignment.
fn hungarian(cost: &Array2<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every perfect matching on tight edges is optimal. Walk rows in order and
/// give each the lowest tight column that still leaves a perfect matching
/// for the remaining rows, repairing the matching along an alternating path.
fn lexicographic_refine(tight: &Array2<bool>, row_to_col: &mut [usize]) {
    let n = row_to_col.len();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        for j in 0..row_to_col[i] {
            if col_fixed[j] || !tight[[i, j]] {
                continue;
            }
            // Row r holding j must move to another column, cascading until
            // the column freed by row i is taken.
            let r = col_to_row[j];
            let freed = row_to_col[i];
            let mut visited = vec![false; n];
            visited[j] = true;
            if let Some(path) = augment(tight, r, freed, i, &col_fixed, &col_to_row, &mut visited) {
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        col_fixed[row_to_col[i]] = true;
    }
}

/// Depth-first search for a re-assignment of `row` that ends by taking
/// `target`. Returns the (row, column) moves.
fn augment(
    tight: &Array2<bool>,
    row: usize,
    target: usize,
    blocked_row: usize,
    col_fixed: &[bool],
    col_to_row: &[usize],
    visited: &mut [bool],
) -> Option<Vec<(usize, usize)>> {
    let n = col_fixed.len();
    for c in 0..n {
        if visited[c] || col_fixed[c] || !tight[[row, c]] {
            continue;
        }
        visited[c] = true;
        if c == target {
            return Some(vec![(row, c)]);
        }
        let next = col_to_row[c];
        if next == blocked_row {
            continue;
        }
        if let Some(mut path) = augment(tight, next, target, blocked_row, col_fixed, col_to_row, visited) {
            path.push((row, c));
            return Some(path);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn diagonal_gives_identity() {
        let mut x = Array2::zeros((26, 26));
        for i in 0..26 {
            x[[i, i]] = 100.0;
        }
        assert_eq!(hard_assignment(x.view()), PermutationMatrix::identity(26));
    }

    #[test]
    fn all_equal_gives_identity() {
        for n in 1..=26 {
            assert_eq!(hard_assignment(Array2::from_elem((n, n), 0.37).view()), PermutationMatrix::identity(n));
        }
    }

    #[test]
    fn ties_break_to_lowest_row_then_column() {
        // Four optimal assignments score 2; [1, 0, 2] is the smallest.
        let x = ndarray::array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let p = hard_assignment(x.view());
        assert_eq!(p.score(x.view()), 2.0);
        assert_eq!(p.columns(), &[1, 0, 2][..]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = stream_rng(9, 0);
        for n in 2..=6 {
            let perms = permutations(n);
            for _ in 0..50 {
                let x = Array2::from_shape_simple_fn((n, n), || rng.random_range(-5.0..5.0));
                let best = perms
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| x[[i, j]]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                let p = hard_assignment(x.view());
                assert!((p.score(x.view()) - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn integer_ties_take_lexicographic_minimum() {
        let mut rng = stream_rng(10, 0);
        for n in 2..=5 {
            let perms = permutations(n);
            for _ in 0..100 {
                let x = Array2::from_shape_simple_fn((n, n), || rng.random_range(0..3) as f64);
                let score = |p: &Vec<usize>| p.iter().enumerate().map(|(i, &j)| x[[i, j]]).sum::<f64>();
                let best = perms.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
                let lex_min = perms.iter().filter(|p| score(p) == best).min().unwrap();
                assert_eq!(hard_assignment(x.view()).columns(), &lex_min[..], "{x}");
            }
        }
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(PermutationMatrix::from_columns(vec![0, 0]).is_none());
        assert!(PermutationMatrix::from_columns(vec![2, 0]).is_none());
        let p = PermutationMatrix::from_columns(vec![1, 0]).unwrap();
        assert_eq!(p.to_matrix(), ndarray::array![[0.0, 1.0], [1.0, 0.0]]);
    }

    use proptest::prelude::*;

    fn matrix(max_n: usize) -> impl Strategy<Value = Array2<f64>> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn result_is_a_permutation(x in matrix(12)) {
            let p = hard_assignment(x.view());
            let mut cols = p.columns().to_vec();
            cols.sort_unstable();
            prop_assert_eq!(cols, (0..x.nrows()).collect::<Vec<_>>());
        }

        #[test]
        fn no_swap_improves_the_score(x in matrix(12)) {
            let p = hard_assignment(x.view());
            let best = p.score(x.view());
            let n = x.nrows();
            for i in 0..n {
                for j in i + 1..n {
                    let mut cols = p.columns().to_vec();
                    cols.swap(i, j);
                    let q = PermutationMatrix::from_columns(cols).unwrap();
                    prop_assert!(q.score(x.view()) <= best + 1e-9);
                }
            }
        }
    }
}

use super::Graph;
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Square sparse matrix in CSR form with explicit values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`, columns increasing.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => T::zero(),
        }
    }

    /// `self · dense`
    pub fn matmul(&self, dense: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.n, dense.rows(), "sparse matmul: dimension mismatch");
        let c = dense.cols();
        let mut out = Matrix::zeros(self.n, c);
        for i in 0..self.n {
            let dst = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (d, &s) in dst.iter_mut().zip(dense.row(j)) {
                    *d += v * s;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Scalar>(g: &Graph<T>) -> SparseMatrix<T> {
    let adj = g.adjacency();
    let n = g.num_nodes();
    let deg: Vec<T> = (0..n).map(|i| T::count(adj.degree(i) + 1)).collect();
    let weight = |i: usize, j: usize| (deg[i] * deg[j]).sqrt().recip();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.indices().len() + n);
    let mut values = Vec::with_capacity(adj.indices().len() + n);
    offsets.push(0);
    for i in 0..n {
        let nb = adj.neighbors(i);
        let split = nb.partition_point(|&j| j < i);
        let (lo, hi) = nb.split_at(split);
        for &j in lo {
            indices.push(j);
            values.push(weight(i, j));
        }
        indices.push(i);
        values.push(deg[i].recip());
        for &j in hi {
            indices.push(j);
            values.push(weight(i, j));
        }
        offsets.push(indices.len());
    }
    SparseMatrix { n, offsets, indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph<f64> {
        Graph::from_edges(2, Matrix::zeros(n, 1), edges, None).unwrap()
    }

    /// Dense reference: build A + I, degrees, then scale.
    fn dense_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j) in edges {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        (0..n).map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect()).collect()
    }

    #[test]
    fn isolated_node_is_one() {
        let a = normalize_adjacency(&graph(1, &[]));
        assert_eq!(a.to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn single_edge_is_half_everywhere() {
        let a = normalize_adjacency(&graph(2, &[(0, 1)]));
        assert_eq!(a.to_dense().as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn path_matches_dense_oracle() {
        let edges = [(0, 1), (1, 2)];
        let a = normalize_adjacency(&graph(3, &edges)).to_dense();
        let o = dense_oracle(3, &edges);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[(i, j)] - o[i][j]).abs() < 1e-15);
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
        // hand values: degrees (2, 3, 2)
        assert!((a[(0, 1)] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn entries_in_unit_interval() {
        let edges = [(0, 1), (0, 2), (0, 3), (2, 3), (4, 1)];
        let a = normalize_adjacency(&graph(6, &edges));
        for i in 0..6 {
            for (_, v) in a.row(i) {
                assert!(v > 0.0 && v <= 1.0);
            }
        }
        assert_eq!(a.get(4, 4), 0.5);
        assert_eq!(a.get(5, 5), 1.0);
    }
}

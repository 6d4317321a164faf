//! Node-feature graphs with symmetric CSR adjacency, their JSON container,
//! the GCN propagation operator and distribution-shift generators.

mod io;
mod norm;
mod shift;
pub mod synth;

pub use io::{load_graph, read_graph_json, save_graph, write_graph_json};
pub use norm::{normalize_adjacency, SparseMatrix};
pub use shift::{apply_shift, generate_test_suite, ShiftKind, ShiftSpec, ShiftedGraph};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Compressed sparse rows of an undirected simple graph.
///
/// Each row is strictly increasing, contains no self-loop, and `(i, j)` is
/// stored iff `(j, i)` is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    pub fn empty(num_nodes: usize) -> Self {
        Self { offsets: vec![0; num_nodes + 1], indices: Vec::new() }
    }

    /// Builds the adjacency from undirected edges given in either direction.
    ///
    /// Duplicates collapse to one edge and self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (k, &(a, b)) in edges.iter().enumerate() {
            for v in [a, b] {
                if v >= num_nodes {
                    return Err(Error::Invariant(format!(
                        "edge {k} references node {v} but num_nodes is {num_nodes}"
                    )));
                }
            }
            if a != b {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            indices.extend(l);
            offsets.push(indices.len());
        }
        Ok(Self { offsets, indices })
    }

    /// Takes raw CSR arrays and checks every structural invariant.
    pub fn from_raw(offsets: Vec<usize>, indices: Vec<usize>) -> Result<Self> {
        let csr = Self { offsets, indices };
        csr.validate()?;
        Ok(csr)
    }

    /// For derived neighborhoods such as `N(i) ∪ {i}`; skips validation.
    pub(crate) fn from_raw_unchecked(offsets: Vec<usize>, indices: Vec<usize>) -> Self {
        Self { offsets, indices }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.offsets.first() != Some(&0) || *self.offsets.last().unwrap_or(&1) != self.indices.len()
        {
            return Err(Error::Invariant("CSR offsets do not span the index array".into()));
        }
        for i in 0..n {
            if self.offsets[i] > self.offsets[i + 1] {
                return Err(Error::Invariant(format!("CSR offsets decrease at row {i}")));
            }
            let row = self.neighbors(i);
            for (p, &j) in row.iter().enumerate() {
                if j >= n {
                    return Err(Error::Invariant(format!("row {i} references node {j} >= {n}")));
                }
                if j == i {
                    return Err(Error::Invariant(format!("self-loop stored at node {i}")));
                }
                if p > 0 && row[p - 1] >= j {
                    return Err(Error::Invariant(format!("row {i} is not strictly increasing")));
                }
                if !self.has_edge(j, i) {
                    return Err(Error::Invariant(format!("edge ({i}, {j}) has no reverse")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes())
            .flat_map(move |i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

/// A node-classification graph: features `X`, adjacency `A`, optional labels `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    num_classes: usize,
    features: Matrix<T>,
    adjacency: Csr,
    labels: Option<Vec<usize>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new(
        num_classes: usize,
        features: Matrix<T>,
        adjacency: Csr,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Invariant("graph has no nodes".into()));
        }
        if num_classes == 0 {
            return Err(Error::Invariant("num_classes must be at least 1".into()));
        }
        if adjacency.num_nodes() != n {
            return Err(Error::Invariant(format!(
                "adjacency covers {} nodes but features have {n} rows",
                adjacency.num_nodes()
            )));
        }
        if let Some(p) = features.as_slice().iter().position(|x| !x.is_finite()) {
            let cols = features.cols().max(1);
            return Err(Error::Invariant(format!(
                "non-finite feature at node {} column {}",
                p / cols,
                p % cols
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Invariant(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            if let Some(i) = labels.iter().position(|&y| y >= num_classes) {
                return Err(Error::Invariant(format!("label out of range at node {i}")));
            }
        }
        Ok(Self { num_classes, features, adjacency, labels })
    }

    pub fn from_edges(
        num_classes: usize,
        features: Matrix<T>,
        edges: &[(usize, usize)],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let adjacency = Csr::from_edges(features.rows(), edges)?;
        Self::new(num_classes, features, adjacency, labels)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    #[inline]
    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    #[inline]
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels().ok_or_else(|| Error::Invalid("graph has no labels".into()))
    }

    /// Copy with labels removed; what every score sees.
    pub fn without_labels(&self) -> Self {
        Self { labels: None, ..self.clone() }
    }

    pub fn with_features(&self, features: Matrix<T>) -> Result<Self> {
        Self::new(self.num_classes, features, self.adjacency.clone(), self.labels.clone())
    }

    pub fn with_adjacency(&self, adjacency: Csr) -> Result<Self> {
        Self::new(self.num_classes, self.features.clone(), adjacency, self.labels.clone())
    }

    /// Subgraph induced by `nodes` (any order, no repeats); node `nodes[k]` becomes `k`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut remap = vec![usize::MAX; n];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= n || remap[v] != usize::MAX {
                return Err(Error::Invariant(format!("bad subgraph node list entry {v}")));
            }
            remap[v] = k;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for &v in nodes {
            let start = indices.len();
            indices.extend(self.adjacency.neighbors(v).iter().filter_map(|&u| {
                let r = remap[u];
                (r != usize::MAX).then_some(r)
            }));
            indices[start..].sort_unstable();
            offsets.push(indices.len());
        }
        let labels = self.labels.as_ref().map(|l| nodes.iter().map(|&v| l[v]).collect());
        Self::new(
            self.num_classes,
            self.features.select_rows(nodes),
            Csr { offsets, indices },
            labels,
        )
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::Dimension(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut inverse = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::Invariant("not a permutation".into()));
            }
            inverse[p] = i;
        }
        self.induced_subgraph(&inverse)
    }

    pub fn cast<U: Scalar>(&self) -> Graph<U> {
        Graph {
            num_classes: self.num_classes,
            features: self.features.cast(),
            adjacency: self.adjacency.clone(),
            labels: self.labels.clone(),
        }
    }
}

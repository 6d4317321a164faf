use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Csr, Graph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// `X + magnitude · N(0, 1)` entry-wise.
    FeaturePerturb,
    /// A fraction `magnitude` of feature columns set to zero.
    FeatureMask,
    /// Induced subgraph on a fraction `1 - magnitude` of the nodes.
    SubgraphSample,
    /// A fraction `magnitude` of undirected edges removed.
    EdgeDrop,
}

impl ShiftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftKind::FeaturePerturb => "feature_perturb",
            ShiftKind::FeatureMask => "feature_mask",
            ShiftKind::SubgraphSample => "subgraph_sample",
            ShiftKind::EdgeDrop => "edge_drop",
        }
    }
}

impl std::fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "feature_perturb" => ShiftKind::FeaturePerturb,
            "feature_mask" => ShiftKind::FeatureMask,
            "subgraph_sample" => ShiftKind::SubgraphSample,
            "edge_drop" => ShiftKind::EdgeDrop,
            "raw" | "none" => return Err(Error::Invalid(format!("{s} is not a shift kind"))),
            other => return Err(Error::Invalid(format!("unknown shift kind {other:?}"))),
        })
    }
}

fn default_range() -> (f64, f64) {
    (0.1, 0.7)
}

/// How many shifted copies of one kind to draw, and from which magnitude range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    #[serde(default = "default_range")]
    pub magnitude_range: (f64, f64),
    pub count: usize,
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind, count: usize) -> Self {
        Self { kind, magnitude_range: default_range(), count }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.magnitude_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Invariant(format!("magnitude range [{lo}, {hi}] not within [0, 1]")));
        }
        if self.count == 0 {
            return Err(Error::Invariant("shift count must be at least 1".into()));
        }
        Ok(())
    }
}

/// One member of a generated test suite.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedGraph<T> {
    pub kind: ShiftKind,
    pub magnitude: f64,
    pub graph: Graph<T>,
}

fn fraction(total: usize, magnitude: f64) -> usize {
    ((total as f64) * magnitude).round().min(total as f64) as usize
}

/// Applies one shift. Deterministic in `(kind, magnitude, seed)`.
pub fn apply_shift<T: Scalar>(
    g: &Graph<T>,
    kind: ShiftKind,
    magnitude: f64,
    seed: u64,
) -> Result<Graph<T>> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::Invariant(format!("shift magnitude {magnitude} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ShiftKind::FeaturePerturb => {
            let scale = T::lit(magnitude);
            let mut x = g.features().clone();
            for v in x.as_mut_slice() {
                let z: f64 = rng.sample(StandardNormal);
                *v += scale * T::lit(z);
            }
            g.with_features(x)
        }
        ShiftKind::FeatureMask => {
            let d = g.num_features();
            let k = fraction(d, magnitude);
            let mut masked = vec![false; d];
            for c in index::sample(&mut rng, d, k) {
                masked[c] = true;
            }
            let mut x = g.features().clone();
            for i in 0..x.rows() {
                for (v, &m) in x.row_mut(i).iter_mut().zip(&masked) {
                    if m {
                        *v = T::zero();
                    }
                }
            }
            g.with_features(x)
        }
        ShiftKind::SubgraphSample => {
            let n = g.num_nodes();
            let keep = fraction(n, 1.0 - magnitude);
            if keep == 0 {
                return Err(Error::Invalid(format!(
                    "subgraph sampling with magnitude {magnitude} leaves no nodes"
                )));
            }
            let mut nodes = index::sample(&mut rng, n, keep).into_vec();
            nodes.sort_unstable();
            g.induced_subgraph(&nodes)
        }
        ShiftKind::EdgeDrop => {
            let edges: Vec<(usize, usize)> = g.adjacency().edges().collect();
            let k = fraction(edges.len(), magnitude);
            if k == 0 {
                return Ok(g.clone());
            }
            let mut dropped = vec![false; edges.len()];
            for e in index::sample(&mut rng, edges.len(), k) {
                dropped[e] = true;
            }
            let kept: Vec<_> =
                edges.into_iter().zip(dropped).filter(|(_, d)| !d).map(|(e, _)| e).collect();
            g.with_adjacency(Csr::from_edges(g.num_nodes(), &kept)?)
        }
    }
}

/// Expands `g` into `Σ count` shifted graphs, in the order given.
///
/// Magnitudes are drawn uniformly from each `ShiftSpec`'s range; every draw and the
/// per-graph seeds come from one stream seeded by `seed`.
pub fn generate_test_suite<T: Scalar>(
    g: &Graph<T>,
    specs: &[ShiftSpec],
    seed: u64,
) -> Result<Vec<ShiftedGraph<T>>> {
    for s in specs {
        s.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(specs.iter().map(|s| s.count).sum());
    for spec in specs {
        let (lo, hi) = spec.magnitude_range;
        for _ in 0..spec.count {
            let magnitude = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let sub_seed = rng.next_u64();
            let graph = apply_shift(g, spec.kind, magnitude, sub_seed)?;
            out.push(ShiftedGraph { kind: spec.kind, magnitude, graph });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn ring(n: usize) -> Graph<f64> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).chain([(0, n / 2)]).collect();
        let x = Matrix::from_fn(n, 4, |i, j| (i * 4 + j) as f64 * 0.1 + 1.0);
        Graph::from_edges(3, x, &edges, Some((0..n).map(|i| i % 3).collect())).unwrap()
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let g = ring(10);
        for kind in [ShiftKind::FeaturePerturb, ShiftKind::FeatureMask, ShiftKind::EdgeDrop] {
            assert_eq!(apply_shift(&g, kind, 0.0, 3).unwrap(), g, "{kind}");
        }
    }

    #[test]
    fn full_mask_zeroes_features_keeps_edges() {
        let g = ring(10);
        let s = apply_shift(&g, ShiftKind::FeatureMask, 1.0, 9).unwrap();
        assert!(s.features().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(s.adjacency(), g.adjacency());
        assert_eq!(s.labels(), g.labels());
    }

    #[test]
    fn subgraph_matches_brute_force_induced_edges() {
        let g = ring(10);
        let s = apply_shift(&g, ShiftKind::SubgraphSample, 0.5, 42).unwrap();
        assert_eq!(s.num_nodes(), 5);
        // recover the kept node ids through the (distinct) first feature column
        let kept: Vec<usize> = (0..5)
            .map(|k| {
                (0..10).find(|&v| g.features()[(v, 0)] == s.features()[(k, 0)]).unwrap()
            })
            .collect();
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        let mut oracle = Vec::new();
        for a in 0..5 {
            for b in a + 1..5 {
                if g.adjacency().has_edge(kept[a], kept[b]) {
                    oracle.push((a, b));
                }
            }
        }
        assert_eq!(s.adjacency().edges().collect::<Vec<_>>(), oracle);
        for k in 0..5 {
            assert_eq!(s.labels().unwrap()[k], g.labels().unwrap()[kept[k]]);
        }
    }

    #[test]
    fn subgraph_to_nothing_fails() {
        assert!(apply_shift(&ring(4), ShiftKind::SubgraphSample, 1.0, 0).is_err());
    }

    #[test]
    fn edge_drop_removes_requested_fraction() {
        let g = ring(10);
        let s = apply_shift(&g, ShiftKind::EdgeDrop, 0.5, 5).unwrap();
        assert_eq!(g.adjacency().num_edges(), 11);
        assert_eq!(s.adjacency().num_edges(), 11 - 6);
        for (i, j) in s.adjacency().edges() {
            assert!(g.adjacency().has_edge(i, j));
        }
    }

    #[test]
    fn perturb_is_seed_deterministic() {
        let g = ring(6);
        let a = apply_shift(&g, ShiftKind::FeaturePerturb, 0.3, 1).unwrap();
        let b = apply_shift(&g, ShiftKind::FeaturePerturb, 0.3, 1).unwrap();
        let c = apply_shift(&g, ShiftKind::FeaturePerturb, 0.3, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.adjacency(), g.adjacency());
    }

    #[test]
    fn suite_sizes_and_determinism() {
        let g = ring(8);
        assert!(generate_test_suite(&g, &[], 0).unwrap().is_empty());
        let specs =
            [ShiftSpec::new(ShiftKind::FeaturePerturb, 20), ShiftSpec::new(ShiftKind::FeatureMask, 20)];
        let a = generate_test_suite(&g, &specs, 11).unwrap();
        let b = generate_test_suite(&g, &specs, 11).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| (0.1..=0.7).contains(&s.magnitude)));
        assert!(a[..20].iter().all(|s| s.kind == ShiftKind::FeaturePerturb));
    }

    #[test]
    fn bad_specs_rejected() {
        let g = ring(4);
        let mut s = ShiftSpec::new(ShiftKind::EdgeDrop, 1);
        s.magnitude_range = (0.8, 0.2);
        assert!(generate_test_suite(&g, &[s], 0).is_err());
        s.magnitude_range = (0.1, 0.2);
        s.count = 0;
        assert!(generate_test_suite(&g, &[s], 0).is_err());
    }

    #[test]
    fn spec_json_defaults_range() {
        let s: ShiftSpec = serde_json::from_str(r#"{"kind":"edge_drop","count":3}"#).unwrap();
        assert_eq!(s.magnitude_range, (0.1, 0.7));
    }
}

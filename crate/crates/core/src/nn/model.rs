//! Two-layer GCN, SAGE, GIN, GAT and MLP encoders with a linear classifier
//! head, and their hand-derived reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy_with_grad;
use super::{Matrix, Param, ParamSet};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Csr, Graph, SparseMatrix};
use crate::scalar::Scalar;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Sage,
    Gin,
    Gat,
    Mlp,
}

impl Architecture {
    pub const ALL: [Architecture; 5] =
        [Architecture::Gcn, Architecture::Sage, Architecture::Gin, Architecture::Gat, Architecture::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Sage => "sage",
            Architecture::Gin => "gin",
            Architecture::Gat => "gat",
            Architecture::Mlp => "mlp",
        }
    }

    /// Tensor names of one layer, in registration order.
    fn layer_tensors(self) -> &'static [&'static str] {
        match self {
            Architecture::Gcn | Architecture::Gin | Architecture::Mlp => &["weight", "bias"],
            Architecture::Sage => &["weight_self", "weight_neigh", "bias"],
            Architecture::Gat => &["weight", "attention"],
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown architecture {s:?}")))
    }
}

/// Architecture and widths `[d_in, d_hidden, d_embed]` plus the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub dims: [usize; 3],
    pub num_classes: usize,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: usize = 256;
    pub const DEFAULT_EMBED: usize = 32;

    pub fn new(architecture: Architecture, dims: [usize; 3], num_classes: usize) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || num_classes == 0 {
            return Err(Error::Invalid(format!(
                "model dims {dims:?} and num_classes {num_classes} must all be >= 1"
            )));
        }
        Ok(Self { architecture, dims, num_classes })
    }

    /// Hidden width 256 and embedding width 32.
    pub fn with_default_widths(architecture: Architecture, d_in: usize, num_classes: usize) -> Result<Self> {
        Self::new(architecture, [d_in, Self::DEFAULT_HIDDEN, Self::DEFAULT_EMBED], num_classes)
    }

    pub fn d_in(&self) -> usize {
        self.dims[0]
    }

    pub fn d_embed(&self) -> usize {
        self.dims[2]
    }

    /// `(name, rows, cols)` for every tensor in registration order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for layer in 0..2 {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            for &t in self.architecture.layer_tensors() {
                let shape = match t {
                    "bias" => (1, fan_out),
                    "attention" => (1, 2 * fan_out),
                    _ => (fan_in, fan_out),
                };
                out.push((format!("layer{}.{t}", layer + 1), shape.0, shape.1));
            }
        }
        out.push(("head.weight".into(), self.dims[2], self.num_classes));
        out.push(("head.bias".into(), 1, self.num_classes));
        out
    }

    fn tensors_per_layer(&self) -> usize {
        self.architecture.layer_tensors().len()
    }

    fn head_index(&self) -> usize {
        2 * self.tensors_per_layer()
    }
}

/// Glorot-uniform weights and zero biases, drawn in registration order.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = config
        .layout()
        .into_iter()
        .map(|(name, r, c)| {
            let value = if name.ends_with("bias") {
                Matrix::zeros(r, c)
            } else {
                let bound = (6.0 / (r + c) as f64).sqrt();
                Matrix::from_fn(r, c, |_, _| T::lit(rng.random_range(-bound..bound)))
            };
            Param { name, value }
        })
        .collect();
    ParamSet::new(params).expect("layout names are unique")
}

/// Graph-derived operators reused across every pass over the same graph.
pub struct GraphContext<'g, T> {
    graph: &'g Graph<T>,
    normalized: Option<SparseMatrix<T>>,
    with_self: Option<Csr>,
}

impl<'g, T: Scalar> GraphContext<'g, T> {
    pub fn new(config: &ModelConfig, graph: &'g Graph<T>) -> Result<Self> {
        if graph.num_features() != config.d_in() {
            return Err(Error::Dimension(format!(
                "graph has {} features, model expects {}",
                graph.num_features(),
                config.d_in()
            )));
        }
        let normalized = (config.architecture == Architecture::Gcn).then(|| normalize_adjacency(graph));
        let with_self = (config.architecture == Architecture::Gat).then(|| self_augmented(graph.adjacency()));
        Ok(Self { graph, normalized, with_self })
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }
}

/// Neighborhoods `N(i) ∪ {i}`, still sorted.
fn self_augmented(adj: &Csr) -> Csr {
    let n = adj.num_nodes();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.indices().len() + n);
    offsets.push(0);
    for i in 0..n {
        let nb = adj.neighbors(i);
        let split = nb.partition_point(|&j| j < i);
        indices.extend_from_slice(&nb[..split]);
        indices.push(i);
        indices.extend_from_slice(&nb[split..]);
        offsets.push(indices.len());
    }
    // this is a CSR with self-loops; it never goes through `Csr::validate`
    Csr::from_raw_unchecked(offsets, indices)
}

fn neighbor_sum<T: Scalar>(adj: &Csr, h: &Matrix<T>, mean: bool) -> Matrix<T> {
    let mut out = Matrix::zeros(h.rows(), h.cols());
    for i in 0..h.rows() {
        let nb = adj.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let dst = out.row_mut(i);
        for &j in nb {
            for (d, &s) in dst.iter_mut().zip(h.row(j)) {
                *d += s;
            }
        }
        if mean {
            let inv = T::count(nb.len()).recip();
            for d in dst.iter_mut() {
                *d *= inv;
            }
        }
    }
    out
}

/// Adjoint of the neighbor mean: `out_j = Σ_{i ∈ N(j)} g_i / deg(i)`.
fn neighbor_mean_adjoint<T: Scalar>(adj: &Csr, g: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(g.rows(), g.cols());
    for j in 0..g.rows() {
        let dst = out.row_mut(j);
        for &i in adj.neighbors(j) {
            let inv = T::count(adj.degree(i)).recip();
            for (d, &s) in dst.iter_mut().zip(g.row(i)) {
                *d += inv * s;
            }
        }
    }
    out
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

#[inline]
fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn leaky<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::lit(LEAKY_SLOPE) * x
    }
}

enum LayerCache<T> {
    /// `Â H` and the pre-activation.
    Gcn { propagated: Matrix<T>, pre: Matrix<T> },
    Sage { neigh: Matrix<T>, pre: Matrix<T> },
    Gin { aggregated: Matrix<T>, pre: Matrix<T> },
    /// Projection `H W`, per-edge raw scores and attention, pre-activation.
    Gat { projected: Matrix<T>, raw: Vec<T>, alpha: Vec<T>, pre: Matrix<T> },
    Mlp { pre: Matrix<T> },
}

impl<T> LayerCache<T> {
    fn pre(&self) -> &Matrix<T> {
        match self {
            LayerCache::Gcn { pre, .. }
            | LayerCache::Sage { pre, .. }
            | LayerCache::Gin { pre, .. }
            | LayerCache::Gat { pre, .. }
            | LayerCache::Mlp { pre } => pre,
        }
    }
}

fn linear<T: Scalar>(input: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut out = input.matmul(w);
    out.add_row_broadcast(b);
    out
}

fn layer_forward<T: Scalar>(
    config: &ModelConfig,
    ctx: &GraphContext<'_, T>,
    params: &ParamSet<T>,
    base: usize,
    input: &Matrix<T>,
) -> (Matrix<T>, LayerCache<T>) {
    let adj = ctx.graph.adjacency();
    match config.architecture {
        Architecture::Gcn => {
            let propagated = ctx.normalized.as_ref().expect("gcn context").matmul(input);
            let pre = linear(&propagated, params.tensor(base), params.tensor(base + 1));
            (pre.map(relu), LayerCache::Gcn { propagated, pre })
        }
        Architecture::Sage => {
            let neigh = neighbor_sum(adj, input, true);
            let mut pre = linear(input, params.tensor(base), params.tensor(base + 2));
            pre.add_assign(&neigh.matmul(params.tensor(base + 1)));
            (pre.map(relu), LayerCache::Sage { neigh, pre })
        }
        Architecture::Gin => {
            let mut aggregated = neighbor_sum(adj, input, false);
            aggregated.add_assign(input);
            let pre = linear(&aggregated, params.tensor(base), params.tensor(base + 1));
            (pre.map(relu), LayerCache::Gin { aggregated, pre })
        }
        Architecture::Gat => {
            let nbhd = ctx.with_self.as_ref().expect("gat context");
            let projected = input.matmul(params.tensor(base));
            let att = params.tensor(base + 1).as_slice();
            let f = projected.cols();
            let (att_dst, att_src) = att.split_at(f);
            let dot = |row: &[T], a: &[T]| row.iter().zip(a).map(|(&x, &y)| x * y).sum::<T>();
            let s: Vec<T> = (0..projected.rows()).map(|i| dot(projected.row(i), att_dst)).collect();
            let t: Vec<T> = (0..projected.rows()).map(|j| dot(projected.row(j), att_src)).collect();
            let mut raw = Vec::with_capacity(nbhd.indices().len());
            let mut alpha = Vec::with_capacity(nbhd.indices().len());
            let mut pre = Matrix::zeros(projected.rows(), f);
            for i in 0..projected.rows() {
                let nb = nbhd.neighbors(i);
                let start = raw.len();
                raw.extend(nb.iter().map(|&j| s[i] + t[j]));
                let scores: Vec<T> = raw[start..].iter().map(|&r| leaky(r)).collect();
                let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
                let exps: Vec<T> = scores.iter().map(|&e| (e - max).exp()).collect();
                let z: T = exps.iter().copied().sum();
                let dst = pre.row_mut(i);
                for (&j, &e) in nb.iter().zip(&exps) {
                    let a = e / z;
                    alpha.push(a);
                    for (d, &g) in dst.iter_mut().zip(projected.row(j)) {
                        *d += a * g;
                    }
                }
            }
            (pre.map(elu), LayerCache::Gat { projected, raw, alpha, pre })
        }
        Architecture::Mlp => {
            let pre = linear(input, params.tensor(base), params.tensor(base + 1));
            (pre.map(relu), LayerCache::Mlp { pre })
        }
    }
}

/// Accumulates this layer's parameter gradients into `grads`; returns the
/// gradient w.r.t. `input` when requested.
#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Scalar>(
    config: &ModelConfig,
    ctx: &GraphContext<'_, T>,
    params: &ParamSet<T>,
    base: usize,
    input: &Matrix<T>,
    cache: &LayerCache<T>,
    d_out: &Matrix<T>,
    grads: &mut ParamSet<T>,
    need_input_grad: bool,
) -> Option<Matrix<T>> {
    let adj = ctx.graph.adjacency();
    let pre = cache.pre();
    let d_pre = if config.architecture == Architecture::Gat {
        d_out.zip_map(pre, |g, x| if x > T::zero() { g } else { g * x.exp() })
    } else {
        d_out.zip_map(pre, |g, x| if x > T::zero() { g } else { T::zero() })
    };
    match cache {
        LayerCache::Gcn { propagated, .. } => {
            *grads.tensor_mut(base) = propagated.t_matmul(&d_pre);
            *grads.tensor_mut(base + 1) = d_pre.col_sums();
            need_input_grad.then(|| {
                let d_prop = d_pre.matmul_t(params.tensor(base));
                // Â is symmetric
                ctx.normalized.as_ref().expect("gcn context").matmul(&d_prop)
            })
        }
        LayerCache::Sage { neigh, .. } => {
            *grads.tensor_mut(base) = input.t_matmul(&d_pre);
            *grads.tensor_mut(base + 1) = neigh.t_matmul(&d_pre);
            *grads.tensor_mut(base + 2) = d_pre.col_sums();
            need_input_grad.then(|| {
                let mut d_in = d_pre.matmul_t(params.tensor(base));
                let d_neigh = d_pre.matmul_t(params.tensor(base + 1));
                d_in.add_assign(&neighbor_mean_adjoint(adj, &d_neigh));
                d_in
            })
        }
        LayerCache::Gin { aggregated, .. } => {
            *grads.tensor_mut(base) = aggregated.t_matmul(&d_pre);
            *grads.tensor_mut(base + 1) = d_pre.col_sums();
            need_input_grad.then(|| {
                let d_agg = d_pre.matmul_t(params.tensor(base));
                let mut d_in = neighbor_sum(adj, &d_agg, false);
                d_in.add_assign(&d_agg);
                d_in
            })
        }
        LayerCache::Gat { projected, raw, alpha, .. } => {
            let nbhd = ctx.with_self.as_ref().expect("gat context");
            let f = projected.cols();
            let m = projected.rows();
            let att = params.tensor(base + 1).as_slice();
            let (att_dst, att_src) = att.split_at(f);
            let mut d_proj = Matrix::zeros(m, f);
            let mut ds = vec![T::zero(); m];
            let mut dt = vec![T::zero(); m];
            let slope = T::lit(LEAKY_SLOPE);
            for i in 0..m {
                let range = nbhd.offsets()[i]..nbhd.offsets()[i + 1];
                let nb = &nbhd.indices()[range.clone()];
                let a = &alpha[range.clone()];
                let r = &raw[range];
                let dpi = d_pre.row(i);
                let d_alpha: Vec<T> = nb
                    .iter()
                    .map(|&j| dpi.iter().zip(projected.row(j)).map(|(&x, &y)| x * y).sum::<T>())
                    .collect();
                let weighted: T = a.iter().zip(&d_alpha).map(|(&x, &y)| x * y).sum();
                for (p, &j) in nb.iter().enumerate() {
                    let dst = d_proj.row_mut(j);
                    for (d, &g) in dst.iter_mut().zip(dpi) {
                        *d += a[p] * g;
                    }
                    let d_score = a[p] * (d_alpha[p] - weighted);
                    let d_raw = if r[p] > T::zero() { d_score } else { d_score * slope };
                    ds[i] += d_raw;
                    dt[j] += d_raw;
                }
            }
            let mut d_att = Matrix::zeros(1, 2 * f);
            {
                let (ga_dst, ga_src) = d_att.as_mut_slice().split_at_mut(f);
                for i in 0..m {
                    let row = projected.row(i);
                    for k in 0..f {
                        ga_dst[k] += ds[i] * row[k];
                        ga_src[k] += dt[i] * row[k];
                    }
                    let dst = d_proj.row_mut(i);
                    for k in 0..f {
                        dst[k] += ds[i] * att_dst[k] + dt[i] * att_src[k];
                    }
                }
            }
            *grads.tensor_mut(base) = input.t_matmul(&d_proj);
            *grads.tensor_mut(base + 1) = d_att;
            need_input_grad.then(|| d_proj.matmul_t(params.tensor(base)))
        }
        LayerCache::Mlp { .. } => {
            *grads.tensor_mut(base) = input.t_matmul(&d_pre);
            *grads.tensor_mut(base + 1) = d_pre.col_sums();
            need_input_grad.then(|| d_pre.matmul_t(params.tensor(base)))
        }
    }
}

/// Activations of one forward pass, kept for the backward pass.
pub struct ForwardPass<T> {
    /// Second-layer output `Z`, post-activation.
    pub embeddings: Matrix<T>,
    pub logits: Matrix<T>,
    hidden: Matrix<T>,
    caches: [LayerCache<T>; 2],
}

fn check_params<T: Scalar>(config: &ModelConfig, params: &ParamSet<T>) -> Result<()> {
    if params.matches_config(config) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "parameters do not match the {} layout {:?}",
            config.architecture, config.dims
        )))
    }
}

pub fn forward_pass<T: Scalar>(
    config: &ModelConfig,
    params: &ParamSet<T>,
    ctx: &GraphContext<'_, T>,
) -> Result<ForwardPass<T>> {
    check_params(config, params)?;
    let per = config.tensors_per_layer();
    let x = ctx.graph.features();
    let (hidden, c1) = layer_forward(config, ctx, params, 0, x);
    let (embeddings, c2) = layer_forward(config, ctx, params, per, &hidden);
    let h = config.head_index();
    let logits = linear(&embeddings, params.tensor(h), params.tensor(h + 1));
    Ok(ForwardPass { embeddings, logits, hidden, caches: [c1, c2] })
}

impl<T: Scalar> ForwardPass<T> {
    /// Cross-entropy against `labels` and its gradient for every parameter.
    pub fn backward(
        &self,
        config: &ModelConfig,
        params: &ParamSet<T>,
        ctx: &GraphContext<'_, T>,
        labels: &[usize],
    ) -> Result<(T, ParamSet<T>)> {
        check_params(config, params)?;
        let (loss, d_logits) = cross_entropy_with_grad(&self.logits, labels)?;
        let mut grads = params.zeros_like();
        let h = config.head_index();
        *grads.tensor_mut(h) = self.embeddings.t_matmul(&d_logits);
        *grads.tensor_mut(h + 1) = d_logits.col_sums();
        let d_embed = d_logits.matmul_t(params.tensor(h));
        let per = config.tensors_per_layer();
        let d_hidden = layer_backward(
            config,
            ctx,
            params,
            per,
            &self.hidden,
            &self.caches[1],
            &d_embed,
            &mut grads,
            true,
        )
        .expect("input gradient requested");
        layer_backward(
            config,
            ctx,
            params,
            0,
            ctx.graph.features(),
            &self.caches[0],
            &d_hidden,
            &mut grads,
            false,
        );
        Ok((loss, grads))
    }
}

/// Embeddings `Z` and logits for `g`.
pub fn forward<T: Scalar>(
    config: &ModelConfig,
    params: &ParamSet<T>,
    g: &Graph<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let ctx = GraphContext::new(config, g)?;
    let fp = forward_pass(config, params, &ctx)?;
    Ok((fp.embeddings, fp.logits))
}

/// Cross-entropy of the model on `g` against `labels`, and its gradient.
pub fn backward<T: Scalar>(
    config: &ModelConfig,
    params: &ParamSet<T>,
    g: &Graph<T>,
    labels: &[usize],
) -> Result<(T, ParamSet<T>)> {
    let ctx = GraphContext::new(config, g)?;
    forward_pass(config, params, &ctx)?.backward(config, params, &ctx, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(arch: Architecture) -> (ModelConfig, Graph<f64>) {
        let cfg = ModelConfig::new(arch, [3, 4, 2], 2).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let g = Graph::from_edges(2, x, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], Some(vec![0, 1, 1, 0]))
            .unwrap();
        (cfg, g)
    }

    #[test]
    fn gcn_layout_names_and_shapes() {
        let cfg = ModelConfig::new(Architecture::Gcn, [4, 8, 3], 2).unwrap();
        let layout = cfg.layout();
        let expect = [
            ("layer1.weight", 4, 8),
            ("layer1.bias", 1, 8),
            ("layer2.weight", 8, 3),
            ("layer2.bias", 1, 3),
            ("head.weight", 3, 2),
            ("head.bias", 1, 2),
        ];
        assert_eq!(layout.len(), expect.len());
        for ((n, r, c), (en, er, ec)) in layout.iter().zip(expect) {
            assert_eq!((n.as_str(), *r, *c), (en, er, ec));
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig::new(Architecture::Sage, [5, 7, 3], 4).unwrap();
        let a = init_params::<f64>(&cfg, 9);
        let b = init_params::<f64>(&cfg, 9);
        let bits = |p: &ParamSet<f64>| p.flatten().into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&init_params::<f64>(&cfg, 10)));
        for p in a.iter() {
            if p.name.ends_with("bias") {
                assert!(p.value.as_slice().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(ModelConfig::new(Architecture::Gcn, [0, 2, 2], 2).is_err());
        assert!(ModelConfig::new(Architecture::Gcn, [1, 2, 2], 0).is_err());
    }

    #[test]
    fn feature_dim_mismatch_is_error() {
        let (cfg, g) = tiny(Architecture::Gcn);
        let wrong = ModelConfig { dims: [5, 4, 2], ..cfg };
        let p = init_params::<f64>(&wrong, 0);
        assert!(matches!(forward(&wrong, &p, &g), Err(Error::Dimension(_))));
    }

    #[test]
    fn param_mismatch_is_error() {
        let (cfg, g) = tiny(Architecture::Gcn);
        let other = ModelConfig { architecture: Architecture::Sage, ..cfg.clone() };
        let p = init_params::<f64>(&other, 0);
        assert!(forward(&cfg, &p, &g).is_err());
    }

    #[test]
    fn bias_and_head_shapes_in_forward() {
        for arch in Architecture::ALL {
            let (cfg, g) = tiny(arch);
            let p = init_params::<f64>(&cfg, 1);
            let (z, logits) = forward(&cfg, &p, &g).unwrap();
            assert_eq!(z.shape(), (4, 2), "{arch}");
            assert_eq!(logits.shape(), (4, 2), "{arch}");
            let (_, grads) = backward(&cfg, &p, &g, &[0, 1, 1, 0]).unwrap();
            assert!(grads.same_layout(&p));
        }
    }

    #[test]
    fn arch_parses_case_insensitively() {
        assert_eq!("GAT".parse::<Architecture>().unwrap(), Architecture::Gat);
        assert!("transformer".parse::<Architecture>().is_err());
    }
}

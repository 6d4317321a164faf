#![allow(dead_code)]

use lebed::graph::Graph;
use lebed::nn::{backward, cross_entropy, forward, init_params, Architecture, Matrix, ModelConfig, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| scale * normal(rng))
}

/// Erdős–Rényi graph with Gaussian features and uniform labels.
pub fn random_graph(rng: &mut impl Rng, m: usize, d: usize, c: usize, p: f64) -> Graph<f64> {
    let mut edges = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..m).map(|_| rng.random_range(0..c)).collect();
    Graph::from_edges(c, random_matrix(rng, m, d, 1.0), &edges, Some(labels)).unwrap()
}

/// Initialized weights plus noise, so biases are nonzero too.
pub fn random_params(rng: &mut impl Rng, config: &ModelConfig) -> ParamSet<f64> {
    let mut p = init_params::<f64>(config, rng.random());
    for t in p.iter_mut() {
        for v in t.value.as_mut_slice() {
            *v += 0.3 * normal(rng);
        }
    }
    p
}

pub struct GradInstance {
    pub config: ModelConfig,
    pub graph: Graph<f64>,
    pub params: ParamSet<f64>,
}

/// Tiny instance: at most 6 nodes, every width at most 5.
pub fn tiny_instance(rng: &mut impl Rng, arch: Architecture) -> GradInstance {
    let m = rng.random_range(1..=6);
    let dims = [rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=5)];
    let c = rng.random_range(2..=5);
    let config = ModelConfig::new(arch, dims, c).unwrap();
    let graph = random_graph(rng, m, dims[0], c, 0.5);
    let params = random_params(rng, &config);
    GradInstance { config, graph, params }
}

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error between the analytic gradient and central
/// differences. Entries whose magnitudes are both below `1e-5` are compared
/// against that floor instead: central differences with this step carry
/// round-off near `1e-10`, which would swamp a relative test on gradients
/// that are themselves that small.
pub fn max_grad_error(inst: &GradInstance) -> f64 {
    let labels = inst.graph.labels().unwrap();
    let (_, grads) = backward(&inst.config, &inst.params, &inst.graph, labels).unwrap();
    let analytic = grads.flatten();
    let base = inst.params.flatten();
    let loss_at = |theta: &[f64]| {
        let p = ParamSet::unflatten(theta, &inst.config).unwrap();
        let (_, logits) = forward(&inst.config, &p, &inst.graph).unwrap();
        cross_entropy(&logits, labels).unwrap()
    };
    let mut worst = 0.0f64;
    let mut theta = base.clone();
    for k in 0..base.len() {
        theta[k] = base[k] + FD_STEP;
        let up = loss_at(&theta);
        theta[k] = base[k] - FD_STEP;
        let down = loss_at(&theta);
        theta[k] = base[k];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
        worst = worst.max(rel);
    }
    worst
}

pub fn naive_cosine(z: &Matrix<f64>) -> Matrix<f64> {
    let m = z.rows();
    let norm = |i: usize| z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    Matrix::from_fn(m, m, |i, j| {
        let (ni, nj) = (norm(i), norm(j));
        if ni == 0.0 || nj == 0.0 {
            0.0
        } else {
            z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum::<f64>() / (ni * nj)
        }
    })
}

pub fn naive_recon(s: &Matrix<f64>, g: &Graph<f64>) -> f64 {
    let m = g.num_nodes();
    let clamp = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let p = 1.0 / (1.0 + (-s[(i, j)]).exp());
            total += if g.adjacency().has_edge(i, j) { clamp(p).ln() } else { (1.0 - clamp(p)).ln() };
        }
    }
    total / m as f64
}

pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn naive_max_probs(logits: &Matrix<f64>) -> Vec<f64> {
    (0..logits.rows()).map(|i| naive_softmax(logits.row(i)).into_iter().fold(0.0, f64::max)).collect()
}

pub fn naive_neg_entropies(logits: &Matrix<f64>) -> Vec<f64> {
    (0..logits.rows())
        .map(|i| naive_softmax(logits.row(i)).into_iter().filter(|&p| p > 0.0).map(|p| p * p.ln()).sum())
        .collect()
}

/// Ranks by counting: `1 + #smaller + (#equal - 1) / 2`.
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let smaller = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// `1 - SSE / SST` of the ordinary least-squares fit of `y` on `x`.
pub fn naive_r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || sst == 0.0 {
        return 0.0;
    }
    let b = x.iter().zip(y).map(|(a, c)| (a - mx) * (c - my)).sum::<f64>() / sxx;
    let a = my - b * mx;
    let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    1.0 - sse / sst
}

/// Small citation-style world: labeled train and val graphs and a GCN well-trained on them.
pub fn small_world(seed: u64) -> (Graph<f64>, Graph<f64>, lebed::TrainedModel) {
    use lebed::graph::synth::{CitationSbm, Environment};
    use lebed::training::{train_model, TrainConfig};
    let sbm = CitationSbm { num_nodes: 80, num_classes: 3, num_features: 6, num_edges: 160, homophily: 0.8, signal: 1.0 };
    let train = sbm.sample(seed, 1, &Environment::none()).unwrap();
    let val = sbm.sample(seed, 2, &Environment::none()).unwrap();
    let config = ModelConfig::new(Architecture::Gcn, [6, 8, 4], 3).unwrap();
    let tc = TrainConfig { lr: 0.01, max_epochs: 60, patience: 20, seed, ..TrainConfig::default() };
    let tm = train_model(&config, &tc, &train, &val).unwrap();
    (train, val, tm)
}

/// A drifted, labeled test graph from the same world as [`small_world`].
pub fn small_shifted(seed: u64, sample: u64, drift: f64) -> Graph<f64> {
    use lebed::graph::synth::{CitationSbm, Environment};
    let sbm = CitationSbm { num_nodes: 80, num_classes: 3, num_features: 6, num_edges: 160, homophily: 0.8, signal: 1.0 };
    sbm.sample(seed, sample, &Environment { drift, homophily: Some(0.6) }).unwrap()
}

//! Learning-behavior-discrepancy score.
//!
//! The deployed model labels the test graph; a fresh copy of the same
//! architecture, started from the deployed model's initialization, is
//! re-trained on those pseudo-labels. Re-training stops once the re-trained
//! embeddings reconstruct the test adjacency about as well as the deployed
//! embeddings do, and the score is the L2 distance between the two weight
//! vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{forward_pass, GraphContext, Matrix, OptimizerKind, OptimizerState, ParamSet};
use crate::scalar::{softplus, Scalar};
use crate::training::{TrainConfig, TrainedModel};

/// Probabilities fed to the logarithms are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

pub const DEFAULT_Q_MAX: usize = 200;

/// Default constant tolerance on `D_Stru`. The reconstruction term sums `M²`
/// pairs and divides by `M`, so sensible constants grow with the graph size;
/// this value suits graphs of a few thousand nodes.
pub const DEFAULT_EPSILON: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    /// Stop when `D_Stru < value`.
    FixedConstant,
    /// Stop when `D_Stru < value · |g(s(Z*), A)|`.
    FixedRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSpec {
    pub mode: EpsilonMode,
    pub value: f64,
}

impl EpsilonSpec {
    pub fn constant(value: f64) -> Self {
        Self { mode: EpsilonMode::FixedConstant, value }
    }

    pub fn ratio(value: f64) -> Self {
        Self { mode: EpsilonMode::FixedRatio, value }
    }

    pub fn validate(&self) -> Result<()> {
        if self.value.is_nan() || self.value < 0.0 {
            return Err(Error::Invalid(format!("epsilon must be >= 0, got {}", self.value)));
        }
        if self.mode == EpsilonMode::FixedRatio && self.value > 1.0 {
            return Err(Error::Invalid(format!("epsilon ratio must be <= 1, got {}", self.value)));
        }
        Ok(())
    }

    /// Absolute tolerance given the reference reconstruction term.
    pub fn tolerance(&self, reference: f64) -> f64 {
        match self.mode {
            EpsilonMode::FixedConstant => self.value,
            EpsilonMode::FixedRatio => self.value * reference.abs(),
        }
    }
}

/// Optimizer settings for the pseudo-label re-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub q_max: usize,
}

impl RetrainConfig {
    /// Same optimizer, learning rate and weight decay as the well-training run.
    pub fn mirroring(tc: &TrainConfig, q_max: usize) -> Self {
        Self { optimizer: tc.optimizer, lr: tc.lr, weight_decay: tc.weight_decay, q_max }
    }
}

/// Embeddings, logits and hard pseudo-labels of the deployed model on a test graph.
#[derive(Debug, Clone)]
pub struct Inference<T> {
    pub embeddings: Matrix<T>,
    pub logits: Matrix<T>,
    pub pseudo_labels: Vec<usize>,
}

pub fn infer<T: Scalar>(tm: &TrainedModel<T>, g_te: &Graph<T>) -> Result<Inference<T>> {
    let ctx = GraphContext::new(&tm.config, g_te)?;
    let fp = forward_pass(&tm.config, &tm.theta_star, &ctx)?;
    let pseudo_labels = fp.logits.argmax_rows();
    Ok(Inference { embeddings: fp.embeddings, logits: fp.logits, pseudo_labels })
}

fn unit_rows<T: Scalar>(z: &Matrix<T>) -> Matrix<T> {
    let mut u = z.clone();
    for i in 0..u.rows() {
        let row = u.row_mut(i);
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            for v in row.iter_mut() {
                *v /= norm;
            }
        } else {
            row.fill(T::zero());
        }
    }
    u
}

/// Row-pairwise cosine similarity. Zero rows have similarity 0 with everything.
pub fn cosine_sim<T: Scalar>(z: &Matrix<T>) -> Matrix<T> {
    let u = unit_rows(z);
    let mut s = u.matmul_t(&u);
    let one = T::one();
    for v in s.as_mut_slice() {
        *v = v.max(-one).min(one);
    }
    s
}

#[inline]
fn logit_clamp<T: Scalar>() -> T {
    T::lit(((1.0 - PROB_CLAMP) / PROB_CLAMP).ln())
}

/// `log clamp(σ(s))`
#[inline]
fn log_sigmoid_clamped<T: Scalar>(s: T) -> T {
    let l = logit_clamp::<T>();
    -softplus(-(s.max(-l).min(l)))
}

/// `log clamp(1 - σ(s))`
#[inline]
fn log_one_minus_sigmoid_clamped<T: Scalar>(s: T) -> T {
    let l = logit_clamp::<T>();
    -softplus(s.max(-l).min(l))
}

/// Binary cross-entropy agreement between a similarity matrix and the 0/1
/// adjacency (zero diagonal), summed over all cells and divided by `M`.
/// Always `<= 0`.
pub fn recon_loss<T: Scalar>(s: &Matrix<T>, g: &Graph<T>) -> T {
    let m = g.num_nodes();
    assert_eq!(s.shape(), (m, m), "similarity matrix must be M x M");
    let adj = g.adjacency();
    let mut total = T::zero();
    for i in 0..m {
        let row = s.row(i);
        let mut nb = adj.neighbors(i).iter().peekable();
        for (j, &v) in row.iter().enumerate() {
            if nb.peek() == Some(&&j) {
                nb.next();
                total += log_sigmoid_clamped(v);
            } else {
                total += log_one_minus_sigmoid_clamped(v);
            }
        }
    }
    total / T::count(m)
}

const PROBE_BLOCK: usize = 64;

/// Degree of the polynomial in `y = s²` that approximates `ln cosh(s / 2)` on
/// `s ∈ [-1, 1]`. The nearest singularity sits at `y = -π²`, so Chebyshev
/// coefficients on `[0, 1]` decay about 40× per degree and nine terms reach
/// round-off.
const LNCOSH_DEGREE: usize = 9;

/// Monomial coefficients (in `y = s²`) of the Chebyshev interpolant of
/// `ln cosh(√y / 2)` on `y ∈ [0, 1]`.
fn lncosh_coefficients() -> [f64; LNCOSH_DEGREE + 1] {
    const N: usize = LNCOSH_DEGREE + 1;
    // interpolate in t ∈ [-1, 1] with y = (t + 1) / 2
    let f = |t: f64| (((t + 1.0) / 2.0).sqrt() / 2.0).cosh().ln();
    let pi = std::f64::consts::PI;
    let nodes: Vec<f64> = (0..N).map(|k| (pi * (k as f64 + 0.5) / N as f64).cos()).collect();
    let vals: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
    let mut cheb = [0.0; N];
    for (j, c) in cheb.iter_mut().enumerate() {
        let sum: f64 = (0..N).map(|k| vals[k] * (pi * j as f64 * (k as f64 + 0.5) / N as f64).cos()).sum();
        *c = sum * 2.0 / N as f64;
    }
    cheb[0] /= 2.0;
    // T_j in the monomial basis of t via T_{j+1} = 2t T_j - T_{j-1}
    let mut in_t = [0.0; N];
    let mut prev = [0.0; N];
    let mut cur = [0.0; N];
    prev[0] = 1.0;
    cur[1] = 1.0;
    in_t[0] += cheb[0];
    for i in 0..N {
        in_t[i] += cheb[1] * cur[i];
    }
    for c in cheb.iter().skip(2) {
        let mut next = [0.0; N];
        for i in 0..N {
            next[i] = -prev[i] + if i > 0 { 2.0 * cur[i - 1] } else { 0.0 };
        }
        for i in 0..N {
            in_t[i] += c * next[i];
        }
        prev = cur;
        cur = next;
    }
    // substitute t = 2y - 1
    let mut out = [0.0; N];
    for (k, &a) in in_t.iter().enumerate() {
        let mut binom = 1.0;
        for i in 0..=k {
            let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            out[i] += a * binom * 2f64.powi(i as i32) * sign;
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// `recon_loss(cosine_sim(Z), A)` without materializing the `M × M` matrix.
///
/// Cosines lie in `[-1, 1]`, well inside the probability clamp, so with
/// `softplus(s) = s/2 + ln 2 + ln cosh(s/2)` the loss becomes
/// `(Σ_{A_ij=1} s_ij - Σ_ij softplus(s_ij)) / M`. The linear part has the
/// closed form `‖Σ_i u_i‖²` over unit rows and the even part is summed over
/// the upper triangle in row blocks.
pub struct ReconProbe<'g, T> {
    graph: &'g Graph<T>,
    lncosh: [T; LNCOSH_DEGREE + 1],
}

impl<'g, T: Scalar> ReconProbe<'g, T> {
    pub fn new(graph: &'g Graph<T>) -> Self {
        Self { graph, lncosh: lncosh_coefficients().map(T::lit) }
    }

    #[inline]
    fn lncosh_half(&self, s: T) -> T {
        let y = s * s;
        let mut acc = self.lncosh[LNCOSH_DEGREE];
        for &c in self.lncosh[..LNCOSH_DEGREE].iter().rev() {
            acc = acc * y + c;
        }
        acc
    }

    /// `Σ ln cosh(v / 2)` in independent lanes so the Horner chains overlap.
    /// Gram entries of unit rows overshoot `±1` by at most a few ulps, where
    /// the polynomial is still accurate, so no clamp is applied.
    fn lncosh_sum(&self, values: &[T]) -> T {
        const LANES: usize = 32;
        let mut acc = [T::zero(); LANES];
        let chunks = values.chunks_exact(LANES);
        let tail = chunks.remainder();
        for chunk in chunks {
            for (a, &v) in acc.iter_mut().zip(chunk) {
                *a += self.lncosh_half(v);
            }
        }
        let mut total = acc.iter().copied().sum::<T>();
        for &v in tail {
            total += self.lncosh_half(v);
        }
        total
    }

    pub fn loss(&self, z: &Matrix<T>) -> T {
        let m = self.graph.num_nodes();
        assert_eq!(z.rows(), m, "embedding rows must equal node count");
        let u = unit_rows(z);
        let d = u.cols();
        let one = T::one();
        let two = T::lit(2.0);

        let mut even = T::zero();
        let mut buf = vec![T::zero(); PROBE_BLOCK * m];
        let mut start = 0;
        while start < m {
            let end = (start + PROBE_BLOCK).min(m);
            let rows = end - start;
            let width = m - start;
            // S[start..end, start..m]
            T::gemm(
                rows,
                d,
                width,
                T::one(),
                &u.as_slice()[start * d..],
                d as isize,
                1,
                &u.as_slice()[start * d..],
                1,
                d as isize,
                T::zero(),
                &mut buf,
                width as isize,
                1,
            );
            for r in 0..rows {
                let row = &buf[r * width..(r + 1) * width];
                even += self.lncosh_half(row[r].max(-one).min(one));
                even += two * self.lncosh_sum(&row[r + 1..]);
            }
            start = end;
        }

        let mut col_sum = vec![T::zero(); d];
        for i in 0..m {
            for (a, &b) in col_sum.iter_mut().zip(u.row(i)) {
                *a += b;
            }
        }
        let linear: T = col_sum.iter().map(|&v| v * v).sum();

        let adj = self.graph.adjacency();
        let mut edges = T::zero();
        for i in 0..m {
            let ui = u.row(i);
            for &j in adj.neighbors(i) {
                edges += ui.iter().zip(u.row(j)).map(|(&a, &b)| a * b).sum::<T>().max(-one).min(one);
            }
        }
        let ln2 = T::lit(std::f64::consts::LN_2);
        let cells = T::count(m) * T::count(m);
        (edges - linear / two - cells * ln2 - even) / T::count(m)
    }
}

/// `|g(s(Z), A) - g(s(Z*), A)|`
pub fn d_stru<T: Scalar>(z: &Matrix<T>, z_star: &Matrix<T>, g: &Graph<T>) -> T {
    let probe = ReconProbe::new(g);
    (probe.loss(z) - probe.loss(z_star)).abs()
}

/// Distance between two weight vectors of one configuration.
pub fn lebed_score<T: Scalar>(theta_star: &ParamSet<T>, theta_dagger: &ParamSet<T>) -> Result<f64> {
    Ok(theta_star.distance(theta_dagger)?.as_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LebedResult<T> {
    pub score: f64,
    /// 1-based iteration at which re-training stopped.
    pub stop_iteration: usize,
    /// Whether the structure criterion fired (as opposed to hitting `q_max`).
    pub early_stopped: bool,
    /// `g(s(Z*), A)` of the deployed model.
    pub reference_recon: f64,
    /// Absolute tolerance the criterion compared against.
    pub tolerance: f64,
    /// `D_Stru` after each update.
    pub dstru_trace: Vec<f64>,
    /// Pseudo-label cross-entropy before each update.
    pub dpred_trace: Vec<f64>,
    pub theta_dagger: ParamSet<T>,
}

#[derive(Serialize)]
struct LebedResultJson<'a> {
    score: f64,
    stop_iteration: usize,
    early_stopped: bool,
    reference_recon: f64,
    tolerance: f64,
    dstru_trace: &'a [f64],
    dpred_trace: &'a [f64],
}

impl<T: Scalar> LebedResult<T> {
    /// JSON without the re-trained weights.
    pub fn to_json(&self) -> String {
        let j = LebedResultJson {
            score: self.score,
            stop_iteration: self.stop_iteration,
            early_stopped: self.early_stopped,
            reference_recon: self.reference_recon,
            tolerance: self.tolerance,
            dstru_trace: &self.dstru_trace,
            dpred_trace: &self.dpred_trace,
        };
        serde_json::to_string_pretty(&j).expect("result serializes")
    }
}

/// Pseudo-label re-training from `θ₀` with the structure-reconstruction stop rule.
pub fn retrain<T: Scalar>(
    tm: &TrainedModel<T>,
    g_te: &Graph<T>,
    inference: &Inference<T>,
    eps: &EpsilonSpec,
    rc: &RetrainConfig,
) -> Result<LebedResult<T>> {
    eps.validate()?;
    if rc.q_max == 0 {
        return Err(Error::Invalid("q_max must be at least 1".into()));
    }
    let config = &tm.config;
    let ctx = GraphContext::new(config, g_te)?;
    let probe = ReconProbe::new(g_te);
    let reference = probe.loss(&inference.embeddings).as_f64();
    let tolerance = eps.tolerance(reference);

    let mut theta = tm.theta0.clone();
    let mut opt = OptimizerState::new(rc.optimizer, rc.lr, rc.weight_decay);
    let mut fp = forward_pass(config, &theta, &ctx)?;
    let mut dstru_trace = Vec::new();
    let mut dpred_trace = Vec::new();
    let mut stop_iteration = rc.q_max;
    let mut early_stopped = false;

    for t in 1..=rc.q_max {
        let (loss, grads) = fp.backward(config, &theta, &ctx, &inference.pseudo_labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { stage: "re-training iteration", index: t });
        }
        dpred_trace.push(loss.as_f64());
        opt.step(&mut theta, &grads)?;
        fp = forward_pass(config, &theta, &ctx)?;
        let d = (probe.loss(&fp.embeddings).as_f64() - reference).abs();
        if !d.is_finite() {
            return Err(Error::NonFinite { stage: "re-training iteration", index: t });
        }
        dstru_trace.push(d);
        if d < tolerance {
            stop_iteration = t;
            early_stopped = true;
            break;
        }
    }

    let score = lebed_score(&tm.theta_star, &theta)?;
    Ok(LebedResult {
        score,
        stop_iteration,
        early_stopped,
        reference_recon: reference,
        tolerance,
        dstru_trace,
        dpred_trace,
        theta_dagger: theta,
    })
}

/// Inference followed by re-training.
pub fn score_graph<T: Scalar>(
    tm: &TrainedModel<T>,
    g_te: &Graph<T>,
    eps: &EpsilonSpec,
    rc: &RetrainConfig,
) -> Result<LebedResult<T>> {
    let inference = infer(tm, g_te)?;
    retrain(tm, g_te, &inference, eps, rc)
}

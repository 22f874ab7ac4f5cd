//! Exact t-SNE over a user-selected metadata matrix.
//!
//! Pairwise affinities are dense (O(N²) memory for the joint matrix, stored as
//! the packed upper triangle). The gradient pass is single-threaded so results
//! are bit-identical across machines with the same float semantics.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{ArrayName, XrlDataset};
use crate::error::{Error, Result};
use crate::xrld::{ArrayData, Container, Meta, NamedArray};

/// Smallest joint affinity after flooring.
pub const AFFINITY_FLOOR: f64 = 1e-12;
/// Bandwidth search limits.
pub const BANDWIDTH_MAX_ITERS: usize = 50;
pub const ENTROPY_TOL: f64 = 1e-5;

/// Column-concatenates the named arrays in order and z-scores every column.
/// Zero-variance columns become all zeros.
pub fn build_feature_matrix(dataset: &XrlDataset, spec: &[ArrayName]) -> Result<Array2<f64>> {
    if spec.is_empty() {
        return Err(Error::Config("feature spec is empty".into()));
    }
    let mut blocks = Vec::with_capacity(spec.len());
    for &name in spec {
        let block = dataset
            .column_block(name)
            .ok_or_else(|| Error::Config(format!("dataset has no {name} array")))?;
        blocks.push(block);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let mut features =
        ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Input(format!("cannot concatenate features: {e}")))?;
    zscore_columns(&mut features);
    Ok(features)
}

/// In-place z-scoring with population variance.
pub fn zscore_columns(m: &mut Array2<f64>) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    for mut col in m.columns_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - mean) / std);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Defaults to `max(N / 12, 50)`.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_std: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            seed: 0,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_std: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    /// `[N × 2]`, column means zero.
    pub coords: Array2<f64>,
    /// Perplexity actually used (after clamping to `(N - 1) / 3`).
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_kl: f64,
    pub feature_spec: Vec<String>,
    /// `(iteration, KL)` every [`KL_TRACE_EVERY`] iterations after early
    /// exaggeration, plus the final value.
    pub kl_trace: Vec<(usize, f64)>,
}

/// Per-point conditional distributions `p_{j|i}` (row `i`, zero diagonal).
#[derive(Debug, Clone)]
pub struct ConditionalAffinities {
    pub probs: Array2<f64>,
    /// Precision `1 / (2σ_i²)` found by the bandwidth search.
    pub betas: Vec<f64>,
}

impl ConditionalAffinities {
    /// Shannon entropy of each row in bits.
    pub fn entropies_bits(&self) -> Vec<f64> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>())
            .collect()
    }
}

fn row_sq_distances(x: ArrayView2<f64>, i: usize, out: &mut [f64]) {
    let xi = x.row(i);
    for (j, o) in out.iter_mut().enumerate() {
        *o = xi.iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    }
}

/// Binary search on each point's precision so the conditional distribution
/// over its neighbours has entropy `ln(perplexity)`.
pub fn conditional_affinities(x: ArrayView2<f64>, perplexity: f64) -> ConditionalAffinities {
    let n = x.nrows();
    let target = perplexity.ln();
    let mut probs = Array2::<f64>::zeros((n, n));
    let mut betas = vec![1.0; n];
    let mut dist = vec![0.0; n];

    for i in 0..n {
        row_sq_distances(x, i, &mut dist);
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[j])
            .fold(f64::INFINITY, f64::min);
        let mut row = probs.row_mut(i);
        let row = row.as_slice_mut().expect("standard layout");

        let mut beta = 1.0;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut sum = 1.0;
        for _ in 0..BANDWIDTH_MAX_ITERS {
            sum = 0.0;
            let mut weighted = 0.0;
            let mut tail = 0.0;
            for j in 0..n {
                let shifted = dist[j] - dmin;
                let p = if j == i { 0.0 } else { (-beta * shifted).exp() };
                row[j] = p;
                sum += p;
                weighted += p * shifted;
                if shifted > 0.0 {
                    tail += p;
                }
            }
            let entropy = sum.ln() + beta * weighted / sum;
            betas[i] = beta;

            let diff = entropy - target;
            // Once every non-nearest weight underflows, raising beta changes nothing.
            if diff.abs() < ENTROPY_TOL || (diff > 0.0 && tail == 0.0) {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        row.iter_mut().for_each(|p| *p /= sum);
    }
    ConditionalAffinities { probs, betas }
}

/// Symmetric joint affinities, packed upper triangle (`i < j`).
#[derive(Debug, Clone)]
pub struct JointAffinities {
    n: usize,
    packed: Vec<f64>,
}

impl JointAffinities {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `p_ij`; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.packed[self.index(i, j)],
            std::cmp::Ordering::Greater => self.packed[self.index(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(i, j))
    }
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2N`, then lifted so every off-diagonal entry is
/// at least [`AFFINITY_FLOOR`] while the total stays exactly normalised:
/// `p'_ij = floor + p_ij (1 - N(N-1) floor)`.
pub fn joint_affinities(cond: &ConditionalAffinities) -> JointAffinities {
    let n = cond.probs.nrows();
    let pairs = (n * n.saturating_sub(1)) as f64;
    let scale = 1.0 - pairs * AFFINITY_FLOOR;
    let mut packed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let p = (cond.probs[[i, j]] + cond.probs[[j, i]]) / (2.0 * n as f64);
            packed.push(AFFINITY_FLOOR + p * scale);
        }
    }
    JointAffinities { n, packed }
}

/// KL costs a logarithm per pair, so the trace samples it sparsely.
pub const KL_TRACE_EVERY: usize = 50;

const LANES: usize = 4;

/// Work buffers for the fused KL / gradient pass, one vector per coordinate.
struct GradientPass {
    y0: Vec<f64>,
    y1: Vec<f64>,
    attract0: Vec<f64>,
    attract1: Vec<f64>,
    repulse0: Vec<f64>,
    repulse1: Vec<f64>,
}

impl GradientPass {
    fn new(n: usize) -> Self {
        Self {
            y0: vec![0.0; n],
            y1: vec![0.0; n],
            attract0: vec![0.0; n],
            attract1: vec![0.0; n],
            repulse0: vec![0.0; n],
            repulse1: vec![0.0; n],
        }
    }

    fn run(
        &mut self,
        p: &JointAffinities,
        y: &[f64],
        exaggeration: f64,
        with_kl: bool,
        grad: &mut [f64],
    ) -> (f64, f64) {
        if with_kl {
            self.pass::<true>(p, y, exaggeration, grad)
        } else {
            self.pass::<false>(p, y, exaggeration, grad)
        }
    }

    /// Writes `∂KL/∂y` (with `P` scaled by `exaggeration`) into `grad` and
    /// returns `Σ_{i<j} p_ij ln(num_ij)` (when `KL`) and `Z`.
    ///
    /// Uses `q_ij = num_ij / Z`, `num_ij = 1 / (1 + |y_i - y_j|²)` and
    /// `grad_i = 4 Σ_j (α p_ij - q_ij) num_ij (y_i - y_j)`, split into an
    /// attractive sum over `p·num` and a repulsive sum over `num²` so one pass
    /// over the pairs suffices. Row sums run in [`LANES`] interleaved
    /// accumulators.
    fn pass<const KL: bool>(
        &mut self,
        p: &JointAffinities,
        y: &[f64],
        exaggeration: f64,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let n = p.n;
        for (k, pt) in y.chunks_exact(2).enumerate() {
            self.y0[k] = pt[0];
            self.y1[k] = pt[1];
        }
        let Self {
            y0,
            y1,
            attract0,
            attract1,
            repulse0,
            repulse1,
        } = self;
        for buf in [&mut *attract0, &mut *attract1, &mut *repulse0, &mut *repulse1] {
            buf.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut half_z = 0.0;
        let mut p_log_num = 0.0;
        let mut start = 0;
        for i in 0..n {
            let len = n - i - 1;
            let whole = len / LANES * LANES;
            let prow = &p.packed[start..start + len];
            start += len;
            let (yi0, yi1) = (y0[i], y1[i]);
            let (ty0, ty1) = (&y0[i + 1..], &y1[i + 1..]);
            let (a0i, a0) = attract0.split_at_mut(i + 1);
            let (a1i, a1) = attract1.split_at_mut(i + 1);
            let (r0i, r0) = repulse0.split_at_mut(i + 1);
            let (r1i, r1) = repulse1.split_at_mut(i + 1);

            // Lane `l` of row `acc[k]` sums term `k` over every LANES-th pair.
            let mut acc = [[0.0f64; LANES]; 6];
            let chunks = prow[..whole]
                .chunks_exact(LANES)
                .zip(ty0[..whole].chunks_exact(LANES))
                .zip(ty1[..whole].chunks_exact(LANES))
                .zip(a0[..whole].chunks_exact_mut(LANES))
                .zip(a1[..whole].chunks_exact_mut(LANES))
                .zip(r0[..whole].chunks_exact_mut(LANES))
                .zip(r1[..whole].chunks_exact_mut(LANES));
            for ((((((pc, yc0), yc1), ac0), ac1), rc0), rc1) in chunks {
                let pc: &[f64; LANES] = pc.try_into().unwrap();
                let yc0: &[f64; LANES] = yc0.try_into().unwrap();
                let yc1: &[f64; LANES] = yc1.try_into().unwrap();
                let ac0: &mut [f64; LANES] = ac0.try_into().unwrap();
                let ac1: &mut [f64; LANES] = ac1.try_into().unwrap();
                let rc0: &mut [f64; LANES] = rc0.try_into().unwrap();
                let rc1: &mut [f64; LANES] = rc1.try_into().unwrap();
                for l in 0..LANES {
                    let d0 = yi0 - yc0[l];
                    let d1 = yi1 - yc1[l];
                    let num = 1.0 / (1.0 + d0 * d0 + d1 * d1);
                    let a = pc[l] * num;
                    let r = num * num;
                    acc[0][l] += a * d0;
                    acc[1][l] += a * d1;
                    acc[2][l] += r * d0;
                    acc[3][l] += r * d1;
                    acc[4][l] += num;
                    if KL {
                        acc[5][l] += pc[l] * num.ln();
                    }
                    ac0[l] -= a * d0;
                    ac1[l] -= a * d1;
                    rc0[l] -= r * d0;
                    rc1[l] -= r * d1;
                }
            }
            for j in whole..len {
                let d0 = yi0 - ty0[j];
                let d1 = yi1 - ty1[j];
                let num = 1.0 / (1.0 + d0 * d0 + d1 * d1);
                let a = prow[j] * num;
                let r = num * num;
                acc[0][0] += a * d0;
                acc[1][0] += a * d1;
                acc[2][0] += r * d0;
                acc[3][0] += r * d1;
                acc[4][0] += num;
                if KL {
                    acc[5][0] += prow[j] * num.ln();
                }
                a0[j] -= a * d0;
                a1[j] -= a * d1;
                r0[j] -= r * d0;
                r1[j] -= r * d1;
            }
            let total = |k: usize| acc[k].iter().sum::<f64>();
            a0i[i] += total(0);
            a1i[i] += total(1);
            r0i[i] += total(2);
            r1i[i] += total(3);
            half_z += total(4);
            p_log_num += total(5);
        }
        let z = 2.0 * half_z;
        for (k, g) in grad.chunks_exact_mut(2).enumerate() {
            g[0] = 4.0 * (exaggeration * attract0[k] - repulse0[k] / z);
            g[1] = 4.0 * (exaggeration * attract1[k] - repulse1[k] / z);
        }
        (p_log_num, z)
    }
}

fn p_log_p(p: &JointAffinities) -> f64 {
    2.0 * p.packed.iter().map(|&v| v * v.ln()).sum::<f64>()
}

/// KL(P‖Q) and its gradient at `y` (`[N × 2]`), without exaggeration.
pub fn kl_divergence_and_gradient(p: &JointAffinities, y: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = p.n;
    let flat: Vec<f64> = y.iter().copied().collect();
    let mut grad = vec![0.0; 2 * n];
    let mut pass = GradientPass::new(n);
    let (p_log_num, z) = pass.run(p, &flat, 1.0, true, &mut grad);
    let kl = p_log_p(p) - 2.0 * p_log_num + z.ln();
    (kl, Array2::from_shape_vec((n, 2), grad).expect("2 per point"))
}

/// Embeds `features` (`[N × F]`) into two dimensions.
pub fn tsne_embed(features: ArrayView2<f64>, config: &TsneConfig) -> Result<EmbeddingMap> {
    let n = features.nrows();
    if n < 4 {
        return Err(Error::Input(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    if !(config.perplexity > 0.0) {
        return Err(Error::Input(format!("perplexity {} must be > 0", config.perplexity)));
    }
    let perplexity = config.perplexity.min((n - 1) as f64 / 3.0);
    let learning_rate = config.learning_rate.unwrap_or_else(|| (n as f64 / 12.0).max(50.0));

    let p = joint_affinities(&conditional_affinities(features, perplexity));
    let entropy_term = p_log_p(&p);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Input(format!("bad init_std: {e}")))?;
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    center(&mut y);

    let mut grad = vec![0.0; 2 * n];
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut pass = GradientPass::new(n);
    let mut kl_trace = Vec::new();

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let record = iter >= config.exaggeration_iters && iter % KL_TRACE_EVERY == 0;
        let (p_log_num, z) = pass.run(&p, &y, exaggeration, record, &mut grad);
        if record {
            kl_trace.push((iter, entropy_term - 2.0 * p_log_num + z.ln()));
        }

        let momentum = if iter < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        center(&mut y);
    }

    let (p_log_num, z) = pass.run(&p, &y, 1.0, true, &mut grad);
    let final_kl = (entropy_term - 2.0 * p_log_num + z.ln()).max(0.0);
    kl_trace.push((config.iterations, final_kl));

    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE diverged to non-finite coordinates".into()));
    }
    Ok(EmbeddingMap {
        coords: Array2::from_shape_vec((n, 2), y).expect("2 per point"),
        perplexity,
        iterations: config.iterations,
        learning_rate,
        seed: config.seed,
        final_kl,
        feature_spec: Vec::new(),
        kl_trace,
    })
}

fn center(y: &mut [f64]) {
    let n = (y.len() / 2) as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    for pt in y.chunks_exact(2) {
        m0 += pt[0];
        m1 += pt[1];
    }
    m0 /= n;
    m1 /= n;
    for pt in y.chunks_exact_mut(2) {
        pt[0] -= m0;
        pt[1] -= m1;
    }
}

impl EmbeddingMap {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// Side-file form: `coords` as f32 `[N × 2]`, hyperparameters in `attrs`.
    pub fn to_container(&self, meta: &Meta) -> Container {
        Container {
            meta: meta.clone(),
            attrs: Some(json!({
                "kind": "embedding",
                "perplexity": self.perplexity,
                "iterations": self.iterations,
                "learning_rate": self.learning_rate,
                "seed": self.seed,
                "final_kl": self.final_kl,
                "feature_spec": self.feature_spec,
            })),
            arrays: vec![NamedArray::new(
                "coords",
                vec![self.len(), 2],
                ArrayData::F32(self.coords.iter().map(|&v| v as f32).collect()),
            )],
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let attrs = c
            .attrs
            .as_ref()
            .filter(|a| a["kind"] == "embedding")
            .ok_or_else(|| Error::Format("not an embedding side file".into()))?;
        let coords = c
            .get("coords")
            .ok_or_else(|| Error::Format("embedding file has no coords array".into()))?;
        let ArrayData::F32(values) = &coords.data else {
            return Err(Error::Format("coords must be f32".into()));
        };
        if coords.shape.len() != 2 || coords.shape[1] != 2 {
            return Err(Error::Format(format!("coords shape {:?}", coords.shape)));
        }
        let field = |k: &str| {
            attrs
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("embedding header lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?
                .as_f64()
                .ok_or_else(|| Error::Format(format!("embedding header {k} is not a number")))
        };
        Ok(EmbeddingMap {
            coords: Array2::from_shape_vec((coords.shape[0], 2), values.iter().map(|&v| v as f64).collect())
                .map_err(|e| Error::Corruption(e.to_string()))?,
            perplexity: num("perplexity")?,
            iterations: num("iterations")? as usize,
            learning_rate: num("learning_rate")?,
            seed: field("seed")?.as_u64().unwrap_or_default(),
            final_kl: num("final_kl")?,
            feature_spec: serde_json::from_value(field("feature_spec")?)
                .map_err(|e| Error::Format(format!("feature_spec: {e}")))?,
            kl_trace: Vec::new(),
        })
    }
}

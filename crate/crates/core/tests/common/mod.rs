//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xrl_core::clustering::Stage;
use xrl_core::dataset::XrlDataset;
use xrl_core::synth::{generate_dataset, value_iteration, GridSpec, GridworldMdp, SyntheticPolicy};

pub fn mdp(layout: &str) -> GridworldMdp {
    GridworldMdp::preset(layout).unwrap()
}

pub fn mdp_from(spec: &GridSpec) -> GridworldMdp {
    GridworldMdp::from_spec(spec).unwrap()
}

/// ε-greedy policy over the optimal Q-values of `mdp`.
pub fn policy(mdp: &GridworldMdp, epsilon: f64) -> SyntheticPolicy {
    let (_, q) = value_iteration(mdp, 1e-9).unwrap();
    SyntheticPolicy::new(q, epsilon).unwrap()
}

pub fn synth(layout: &str, episodes: usize, epsilon: f64, seed: u64) -> XrlDataset {
    let m = mdp(layout);
    generate_dataset(&m, &policy(&m, epsilon), episodes, seed).unwrap()
}

/// Two isotropic Gaussian blobs of `per_blob` points with unit σ whose
/// centres are `separation` apart along the first axis.
pub fn blobs(per_blob: usize, dim: usize, separation: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((2 * per_blob, dim), |(i, j)| {
        let shift = if i >= per_blob && j == 0 { separation } else { 0.0 };
        shift + normal.sample(&mut rng)
    })
}

/// Random data with `clusters` loose groups.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize, clusters: usize) -> Array2<f64> {
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
        .collect();
    let normal = Normal::new(0.0, 1.5).unwrap();
    Array2::from_shape_fn((n, dim), |(i, j)| centres[i % clusters][j] + normal.sample(rng))
}

/// Transition probability of the best action from `f` to `t`, computed
/// straight from the counts.
pub fn hop_probability(counts: &Array3<u64>, f: usize, t: usize) -> f64 {
    let (c, a, _) = counts.dim();
    let mut best = 0.0f64;
    for act in 0..a {
        let total: u64 = (0..c).map(|u| counts[[f, act, u]]).sum();
        if counts[[f, act, t]] > 0 {
            best = best.max(counts[[f, act, t]] as f64 / total as f64);
        }
    }
    best
}

/// Every simple path `from → to` of at most `max_hops` hops over observed
/// non-self transitions, with its probability multiplied from the start.
/// Enumerates node sequences by brute force over all orderings.
pub fn enumerate_paths(counts: &Array3<u64>, from: usize, to: usize, max_hops: usize) -> Vec<(Vec<usize>, f64)> {
    let c = counts.dim().0;
    let mut out = Vec::new();
    let mut seq = vec![from];
    fn grow(
        counts: &Array3<u64>,
        c: usize,
        to: usize,
        max_hops: usize,
        seq: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        let last = *seq.last().unwrap();
        if last == to {
            let mut p = 1.0;
            for w in seq.windows(2) {
                p *= hop_probability(counts, w[0], w[1]);
            }
            out.push((seq.clone(), p));
            return;
        }
        if seq.len() > max_hops {
            return;
        }
        for next in 0..c {
            if seq.contains(&next) || hop_probability(counts, last, next) == 0.0 {
                continue;
            }
            seq.push(next);
            grow(counts, c, to, max_hops, seq, out);
            seq.pop();
        }
    }
    grow(counts, c, to, max_hops, &mut seq, &mut out);
    out
}

/// Random `[6 × actions × 6]` count tensor with one initial, four
/// intermediate and one terminal cluster (ids 0..4 intermediate, 4 initial,
/// 5 terminal). Terminal rows stay empty.
pub fn random_counts(seed: u64, actions: usize, density: f64) -> (Array3<u64>, Vec<Stage>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 6;
    let stages = vec![
        Stage::Intermediate,
        Stage::Intermediate,
        Stage::Intermediate,
        Stage::Intermediate,
        Stage::Initial,
        Stage::Terminal,
    ];
    let mut counts = Array3::zeros((c, actions, c));
    for f in 0..c - 1 {
        for a in 0..actions {
            for t in 0..c {
                if rng.gen::<f64>() < density {
                    counts[[f, a, t]] = rng.gen_range(1..6);
                }
            }
        }
    }
    (counts, stages)
}

/// Central finite-difference gradient of `f` at `y`.
pub fn finite_difference(y: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(y.dim());
    for idx in 0..y.len() {
        let (i, j) = (idx / y.ncols(), idx % y.ncols());
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[[i, j]] += h;
        minus[[i, j]] -= h;
        g[[i, j]] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn xrl_binary() -> &'static str {
    env!("CARGO_BIN_EXE_xrl")
}

//! K-Means, flat-kernel MeanShift and staged cluster generation.
//!
//! Staged clustering splits datapoints into episode starts, episode ends and
//! everything in between. Boundary populations are clustered with MeanShift
//! (their cluster count is unknown), the rest with K-Means. Ids are contiguous:
//! intermediate `[0, k)`, then initial, then terminal.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{ArrayName, DerivedFields, XrlDataset};
use crate::embedding::build_feature_matrix;
use crate::error::{Error, Result};
use crate::xrld::{ArrayData, Container, Meta, NamedArray};

pub const KMEANS_MAX_ITERS: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;
pub const MEANSHIFT_MAX_ITERS: usize = 300;
/// Convergence threshold as a fraction of the bandwidth.
pub const MEANSHIFT_TOL: f64 = 1e-3;
pub const BANDWIDTH_SAMPLE: usize = 1000;
pub const BANDWIDTH_FALLBACK: f64 = 1e-3;
pub const DEFAULT_QUANTILE: f64 = 0.3;

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Inertia after every assignment step, final assignment included.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// Nearest centroid per row (ties to the lowest index) and the inertia.
fn assign(x: ArrayView2<f64>, centroids: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    inertia
}

fn kmeans_plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut nearest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();

    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                if acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, row) in x.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(row, x.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Stops when no centroid moves by [`KMEANS_TOL`] or more, or after
/// [`KMEANS_MAX_ITERS`] updates. A cluster left empty by an assignment step is
/// reseeded at the point farthest from its own centroid. The returned labels
/// are the assignment to the returned centroids, so they are a fixed point of
/// the assignment step.
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::Input("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::Input(format!("k = {k} exceeds {n} points")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..KMEANS_MAX_ITERS {
        history.push(assign(x, &centroids, &mut labels));
        iterations += 1;

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, row) in x.rows().into_iter().enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &row);
            counts[labels[i]] += 1;
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                next.row_mut(c).assign(&mean);
            }
        }
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .map(|i| (i, sq_dist(x.row(i), next.row(labels[i]))))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                next.row_mut(c).assign(&x.row(i));
            }
        }

        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < KMEANS_TOL {
            break;
        }
    }

    let inertia = assign(x, &centroids, &mut labels);
    history.push(inertia);
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Estimated with [`estimate_bandwidth`].
    Auto {
        quantile: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftResult {
    pub labels: Vec<usize>,
    pub modes: Array2<f64>,
    /// Points within one bandwidth of each mode at convergence.
    pub support: Vec<usize>,
    pub bandwidth: f64,
}

/// Mean over (a seeded subsample of at most 1000) points of the distance to
/// the `⌈quantile·N⌉`-th nearest neighbour, the point itself counting as the
/// first. Falls back to [`BANDWIDTH_FALLBACK`] when that mean is zero.
pub fn estimate_bandwidth(x: ArrayView2<f64>, quantile: f64, seed: u64) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Input(format!("bandwidth estimation needs >= 2 points, got {n}")));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Input(format!("quantile {quantile} outside (0, 1]")));
    }
    let sample: Vec<usize> = if n <= BANDWIDTH_SAMPLE {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, n, BANDWIDTH_SAMPLE).into_vec();
        picked.sort_unstable();
        picked
    };
    let k = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let mut dists = vec![0.0; n];
    let mut total = 0.0;
    for &i in &sample {
        for (j, d) in dists.iter_mut().enumerate() {
            *d = sq_dist(x.row(i), x.row(j));
        }
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        total += kth.sqrt();
    }
    let mean = total / sample.len() as f64;
    Ok(if mean > 0.0 { mean } else { BANDWIDTH_FALLBACK })
}

/// Flat-kernel MeanShift seeded at every point.
///
/// Each seed moves to the mean of the points within `bandwidth` until it moves
/// less than `1e-3·bandwidth`. Converged modes are taken by decreasing support
/// (ties to the lower seed index); a mode within `bandwidth / 2` of a kept one
/// is merged into it. Points are labelled by their nearest kept mode.
pub fn meanshift(x: ArrayView2<f64>, bandwidth: Bandwidth) -> Result<MeanShiftResult> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Input("meanshift needs at least one point".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    let bw = match bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(b) => return Err(Error::Input(format!("bandwidth {b} must be > 0"))),
        Bandwidth::Auto { .. } if n == 1 => 1.0,
        Bandwidth::Auto { quantile, seed } => estimate_bandwidth(x, quantile, seed)?,
    };
    let bw2 = bw * bw;
    let dim = x.ncols();

    let mut converged: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for seed in x.rows() {
        let mut mode = seed.to_vec();
        let mut support = 0;
        for _ in 0..MEANSHIFT_MAX_ITERS {
            let mut mean = vec![0.0; dim];
            let mut count = 0usize;
            for row in x.rows() {
                if sq_dist(row, ArrayView1::from(&mode)) <= bw2 {
                    mean.iter_mut().zip(row.iter()).for_each(|(m, v)| *m += v);
                    count += 1;
                }
            }
            support = count;
            if count == 0 {
                break;
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            let moved = sq_dist(ArrayView1::from(&mean), ArrayView1::from(&mode)).sqrt();
            mode = mean;
            if moved < MEANSHIFT_TOL * bw {
                break;
            }
        }
        converged.push((mode, support));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| converged[b].1.cmp(&converged[a].1).then(a.cmp(&b)));
    let merge2 = (bw / 2.0) * (bw / 2.0);
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let close = kept
            .iter()
            .any(|&j| sq_dist(ArrayView1::from(&converged[i].0), ArrayView1::from(&converged[j].0)) < merge2);
        if !close {
            kept.push(i);
        }
    }

    let modes = Array2::from_shape_fn((kept.len(), dim), |(m, d)| converged[kept[m]].0[d]);
    let mut labels = vec![0usize; n];
    assign(x, &modes, &mut labels);

    // A kept mode can lose every point to a closer one; drop it and relabel.
    let mut used = vec![false; kept.len()];
    labels.iter().for_each(|&l| used[l] = true);
    let remap: Vec<Option<usize>> = used
        .iter()
        .scan(0usize, |next, &u| {
            Some(u.then(|| {
                *next += 1;
                *next - 1
            }))
        })
        .collect();
    let surviving: Vec<usize> = (0..kept.len()).filter(|&m| used[m]).collect();
    let modes = modes.select(Axis(0), &surviving);
    let support = surviving.iter().map(|&m| converged[kept[m]].1).collect();
    let labels = labels.into_iter().map(|l| remap[l].expect("used")).collect();

    Ok(MeanShiftResult {
        labels,
        modes,
        support,
        bandwidth: bw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Intermediate,
    Terminal,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Initial => "initial",
            Stage::Intermediate => "intermediate",
            Stage::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k_intermediate: usize,
    pub n_initial: usize,
    pub n_terminal: usize,
    pub feature_spec: Vec<String>,
    pub seed: u64,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.k_intermediate + self.n_initial + self.n_terminal
    }

    pub fn stage_of(&self, id: usize) -> Stage {
        if id < self.k_intermediate {
            Stage::Intermediate
        } else if id < self.k_intermediate + self.n_initial {
            Stage::Initial
        } else {
            Stage::Terminal
        }
    }

    pub fn stages(&self) -> Vec<Stage> {
        (0..self.num_clusters()).map(|c| self.stage_of(c)).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_clusters()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    pub fn members(&self, id: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == id).collect()
    }

    pub fn to_container(&self, meta: &Meta) -> Container {
        Container {
            meta: meta.clone(),
            attrs: Some(json!({
                "kind": "clusters",
                "k_intermediate": self.k_intermediate,
                "n_initial": self.n_initial,
                "n_terminal": self.n_terminal,
                "stages": self.stages(),
                "feature_spec": self.feature_spec,
                "seed": self.seed,
            })),
            arrays: vec![NamedArray::new(
                "labels",
                vec![self.labels.len()],
                ArrayData::I32(self.labels.iter().map(|&l| l as i32).collect()),
            )],
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        #[derive(Deserialize)]
        struct Attrs {
            kind: String,
            k_intermediate: usize,
            n_initial: usize,
            n_terminal: usize,
            feature_spec: Vec<String>,
            seed: u64,
        }
        let attrs: Attrs = c
            .attrs
            .clone()
            .ok_or_else(|| Error::Format("cluster file has no attrs".into()))
            .and_then(|a| serde_json::from_value(a).map_err(|e| Error::Format(format!("cluster attrs: {e}"))))?;
        if attrs.kind != "clusters" {
            return Err(Error::Format(format!("expected clusters, found {}", attrs.kind)));
        }
        let labels = match c.get("labels").map(|a| &a.data) {
            Some(ArrayData::I32(v)) => v,
            _ => return Err(Error::Format("cluster file needs an i32 labels array".into())),
        };
        let total = attrs.k_intermediate + attrs.n_initial + attrs.n_terminal;
        if labels.iter().any(|&l| l < 0 || l as usize >= total) {
            return Err(Error::Corruption("cluster label out of range".into()));
        }
        Ok(ClusterAssignment {
            labels: labels.iter().map(|&l| l as usize).collect(),
            k_intermediate: attrs.k_intermediate,
            n_initial: attrs.n_initial,
            n_terminal: attrs.n_terminal,
            feature_spec: attrs.feature_spec,
            seed: attrs.seed,
        })
    }
}

/// Staged clustering on a prepared feature matrix.
///
/// `initial` and `terminal` are the start and done masks. A record that is
/// both (a one-step episode) is treated as terminal.
pub fn stage_clusters(
    features: ArrayView2<f64>,
    initial: &[bool],
    terminal: &[bool],
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = features.nrows();
    let pick = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> { (0..n).filter(|&i| pred(i)).collect() };
    let term_idx = pick(&|i| terminal[i]);
    let init_idx = pick(&|i| initial[i] && !terminal[i]);
    let mid_idx = pick(&|i| !initial[i] && !terminal[i]);

    if term_idx.is_empty() {
        return Err(Error::Staging("no terminal datapoints".into()));
    }
    if init_idx.is_empty() {
        return Err(Error::Staging("no initial datapoints".into()));
    }
    if k == 0 {
        return Err(Error::Input("k must be >= 1".into()));
    }
    if k > mid_idx.len() {
        return Err(Error::Input(format!(
            "k = {k} exceeds the {} intermediate datapoints",
            mid_idx.len()
        )));
    }

    let mid = kmeans(features.select(Axis(0), &mid_idx).view(), k, seed)?;
    let mut counts = vec![0usize; k];
    mid.labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Input(format!(
            "k-means left cluster {empty} empty; k = {k} exceeds the distinct intermediate feature rows"
        )));
    }
    let auto = Bandwidth::Auto {
        quantile: DEFAULT_QUANTILE,
        seed,
    };
    let init = meanshift(features.select(Axis(0), &init_idx).view(), auto)?;
    let term = meanshift(features.select(Axis(0), &term_idx).view(), auto)?;
    let n_initial = init.modes.nrows();
    let n_terminal = term.modes.nrows();

    let mut labels = vec![0usize; n];
    for (&i, &l) in mid_idx.iter().zip(&mid.labels) {
        labels[i] = l;
    }
    for (&i, &l) in init_idx.iter().zip(&init.labels) {
        labels[i] = k + l;
    }
    for (&i, &l) in term_idx.iter().zip(&term.labels) {
        labels[i] = k + n_initial + l;
    }
    Ok(ClusterAssignment {
        labels,
        k_intermediate: k,
        n_initial,
        n_terminal,
        feature_spec: Vec::new(),
        seed,
    })
}

/// Builds the z-scored feature matrix from `feature_spec` and runs
/// [`stage_clusters`] with masks from the derived episode boundaries.
pub fn generate_clusters(
    dataset: &XrlDataset,
    derived: &DerivedFields,
    feature_spec: &[ArrayName],
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let features = build_feature_matrix(dataset, feature_spec)?;
    let n = dataset.len();
    let mut initial = vec![false; n];
    let mut terminal = vec![false; n];
    derived.start_indices.iter().for_each(|&i| initial[i] = true);
    derived.done_indices.iter().for_each(|&i| terminal[i] = true);
    let mut out = stage_clusters(features.view(), &initial, &terminal, k, seed)?;
    out.feature_spec = feature_spec.iter().map(|n| n.to_string()).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{derive, tests::hand_dataset};
    use ndarray::array;

    fn line() -> Array2<f64> {
        array![[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]]
    }

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]];
        let r = kmeans(x.view(), 1, 0).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert_eq!(r.centroids.row(0).to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn line_instance_reaches_optimum() {
        for seed in 0..20 {
            let r = kmeans(line().view(), 2, seed).unwrap();
            assert_eq!(r.inertia, 4.0);
            assert_eq!(r.labels[0], r.labels[2]);
            assert_ne!(r.labels[0], r.labels[3]);
            assert_eq!(r.labels[3], r.labels[5]);
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        assert!(matches!(kmeans(line().view(), 0, 0), Err(Error::Input(_))));
        assert!(matches!(kmeans(line().view(), 7, 0), Err(Error::Input(_))));
    }

    #[test]
    fn kmeans_ties_go_to_lowest_centroid() {
        let centroids = array![[1.0], [-1.0]];
        let x = array![[0.0]];
        let mut labels = vec![9];
        assign(x.view(), &centroids, &mut labels);
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn duplicate_points_leave_surplus_clusters_empty() {
        let x = array![[1.0], [1.0], [1.0]];
        let r = kmeans(x.view(), 2, 3).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(r.labels.iter().all(|&l| l == r.labels[0]));
    }

    #[test]
    fn meanshift_degenerate_inputs() {
        let one = array![[3.0, -1.0]];
        let r = meanshift(one.view(), Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(r.labels, vec![0]);
        assert_eq!(r.modes.row(0).to_vec(), vec![3.0, -1.0]);

        let same = Array2::from_elem((5, 2), 7.0);
        let auto = Bandwidth::Auto { quantile: 0.3, seed: 0 };
        let r = meanshift(same.view(), auto).unwrap();
        assert_eq!(r.modes.nrows(), 1);
        assert_eq!(r.bandwidth, BANDWIDTH_FALLBACK);

        let mut bad = Array2::<f64>::zeros((2, 1));
        bad[[0, 0]] = f64::INFINITY;
        assert!(meanshift(bad.view(), Bandwidth::Fixed(1.0)).is_err());
    }

    #[test]
    fn meanshift_separates_distant_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.05;
            rows.extend_from_slice(&[t, -t]);
        }
        for i in 0..10 {
            let t = i as f64 * 0.05;
            rows.extend_from_slice(&[20.0 + t, t]);
        }
        let x = Array2::from_shape_vec((20, 2), rows).unwrap();
        let r = meanshift(x.view(), Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(r.modes.nrows(), 2);
        assert!(r.labels[..10].iter().all(|&l| l == r.labels[0]));
        assert!(r.labels[10..].iter().all(|&l| l == r.labels[10]));
        assert_ne!(r.labels[0], r.labels[10]);
    }

    #[test]
    fn bandwidth_estimates() {
        let two = array![[0.0, 0.0], [2.0, 0.0]];
        assert_eq!(estimate_bandwidth(two.view(), 1.0, 0).unwrap(), 2.0);
        let same = Array2::from_elem((4, 3), 1.5);
        assert_eq!(estimate_bandwidth(same.view(), 0.3, 0).unwrap(), BANDWIDTH_FALLBACK);
        assert!(estimate_bandwidth(two.slice(ndarray::s![..1, ..]), 0.3, 0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cube = Array2::from_shape_fn((1500, 3), |_| rng.gen::<f64>());
        let a = estimate_bandwidth(cube.view(), 0.3, 42).unwrap();
        let b = estimate_bandwidth(cube.view(), 0.3, 42).unwrap();
        assert!(a > 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn one_episode_minimal_staging() {
        let d = hand_dataset(&[0, 1, 2], &[false, false, true], &[0.0; 3], 1.0);
        let derived = derive(&d).unwrap();
        let c = generate_clusters(&d, &derived, &[ArrayName::Observations], 1, 0).unwrap();
        assert_eq!(c.labels, vec![1, 0, 2]);
        assert_eq!(c.stages(), vec![Stage::Intermediate, Stage::Initial, Stage::Terminal]);
    }

    #[test]
    fn staging_errors() {
        let d = hand_dataset(&[0, 1, 2], &[false, false, true], &[0.0; 3], 1.0);
        let derived = derive(&d).unwrap();
        assert!(matches!(
            generate_clusters(&d, &derived, &[ArrayName::Observations], 2, 0),
            Err(Error::Input(_))
        ));
        let x = array![[0.0], [1.0], [2.0]];
        assert!(matches!(
            stage_clusters(x.view(), &[true, false, false], &[false; 3], 1, 0),
            Err(Error::Staging(_))
        ));
    }

    #[test]
    fn ids_follow_stage_order() {
        // two separated initial groups, three terminal groups, plenty of middles
        let mut rows = Vec::new();
        let mut initial = Vec::new();
        let mut terminal = Vec::new();
        for g in 0..2 {
            for _ in 0..4 {
                rows.push(g as f64 * 100.0);
                initial.push(true);
                terminal.push(false);
            }
        }
        for g in 0..3 {
            for _ in 0..4 {
                rows.push(1000.0 + g as f64 * 100.0);
                initial.push(false);
                terminal.push(true);
            }
        }
        for i in 0..40 {
            rows.push(50.0 + i as f64);
            initial.push(false);
            terminal.push(false);
        }
        let n = rows.len();
        let x = Array2::from_shape_vec((n, 1), rows).unwrap();
        let c = stage_clusters(x.view(), &initial, &terminal, 20, 1).unwrap();
        assert_eq!((c.k_intermediate, c.n_initial, c.n_terminal), (20, 2, 3));
        let mut init_ids: Vec<_> = (0..n).filter(|&i| initial[i]).map(|i| c.labels[i]).collect();
        init_ids.sort();
        init_ids.dedup();
        assert_eq!(init_ids, vec![20, 21]);
        let mut term_ids: Vec<_> = (0..n).filter(|&i| terminal[i]).map(|i| c.labels[i]).collect();
        term_ids.sort();
        term_ids.dedup();
        assert_eq!(term_ids, vec![22, 23, 24]);
    }

    #[test]
    fn side_file_round_trip() {
        let c = ClusterAssignment {
            labels: vec![1, 0, 2, 0],
            k_intermediate: 1,
            n_initial: 1,
            n_terminal: 1,
            feature_spec: vec!["latents".into()],
            seed: 9,
        };
        let meta = crate::dataset::tests::meta(4, 1.0);
        let decoded = Container::decode(&c.to_container(&meta).encode().unwrap()).unwrap();
        assert_eq!(ClusterAssignment::from_container(&decoded).unwrap(), c);
    }
}

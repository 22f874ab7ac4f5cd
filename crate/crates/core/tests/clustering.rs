mod common;

use std::collections::BTreeSet;

use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xrl_core::analysis::{cluster_metric, cluster_metric_report, cluster_representatives, MetricKind};
use xrl_core::clustering::{estimate_bandwidth, generate_clusters, kmeans, meanshift, Bandwidth, Stage};
use xrl_core::dataset::{derive, ArrayName};
use xrl_core::synth::cell_of_observation;

fn inertia(x: &Array2<f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    x.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            row.iter()
                .zip(centroids.row(l))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lloyd_never_increases_inertia(seed in any::<u64>(), n in 10usize..120, k in 1usize..8, dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_instance(&mut rng, n, dim, 3);
        let r = kmeans(x.view(), k.min(n), seed).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", r.inertia_history);
        }
        prop_assert_eq!(r.inertia, *r.inertia_history.last().unwrap());
        prop_assert!((inertia(&x, &r.labels, &r.centroids) - r.inertia).abs() <= 1e-9 * r.inertia.max(1.0));
    }

    #[test]
    fn labels_are_nearest_centroids(seed in any::<u64>(), n in 5usize..60, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_instance(&mut rng, n, 2, 4);
        let r = kmeans(x.view(), k.min(n), seed).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let d = |c: usize| row.iter().zip(r.centroids.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let own = d(r.labels[i]);
            for c in 0..r.centroids.nrows() {
                prop_assert!(own <= d(c));
            }
        }
    }

    #[test]
    fn meanshift_covers_every_point(seed in any::<u64>(), n in 3usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_instance(&mut rng, n, 2, 3);
        let r = meanshift(x.view(), Bandwidth::Auto { quantile: 0.3, seed }).unwrap();
        prop_assert_eq!(r.labels.len(), n);
        let used: BTreeSet<usize> = r.labels.iter().copied().collect();
        prop_assert_eq!(used.len(), r.modes.nrows());
        prop_assert!(r.bandwidth > 0.0);
    }
}

#[test]
fn line_instance_optimum() {
    let x = array![[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]];
    for seed in 0..10 {
        assert_eq!(kmeans(x.view(), 2, seed).unwrap().inertia, 4.0);
    }
}

#[test]
fn meanshift_finds_separated_groups() {
    let x = common::blobs(40, 2, 30.0, 6);
    let r = meanshift(x.view(), Bandwidth::Fixed(6.0)).unwrap();
    assert_eq!(r.modes.nrows(), 2);
    assert!(r.labels[..40].iter().all(|&l| l == r.labels[0]));
    assert!(r.labels[40..].iter().all(|&l| l == r.labels[40]));
    let bw = estimate_bandwidth(x.view(), 0.3, 0).unwrap();
    assert!(bw > 0.0 && bw < 30.0);
}

#[test]
fn staged_clusters_on_gridworld() {
    let d = common::synth("openfield-8x8", 120, 0.1, 4);
    let der = derive(&d).unwrap();
    let c = generate_clusters(&d, &der, &[ArrayName::Latents], 5, 4).unwrap();
    assert_eq!(c.k_intermediate, 5);
    let used: BTreeSet<usize> = c.labels.iter().copied().collect();
    assert_eq!(used, (0..c.num_clusters()).collect());
    for (i, &l) in c.labels.iter().enumerate() {
        let stage = c.stage_of(l);
        if d.dones[i] {
            assert_eq!(stage, Stage::Terminal, "record {i}");
        } else if d.steps[i] == 0 {
            assert_eq!(stage, Stage::Initial, "record {i}");
        } else {
            assert_eq!(stage, Stage::Intermediate, "record {i}");
        }
    }
    let mut expected = vec![Stage::Intermediate; 5];
    expected.extend(vec![Stage::Initial; c.n_initial]);
    expected.extend(vec![Stage::Terminal; c.n_terminal]);
    assert_eq!(c.stages(), expected);
}

#[test]
fn representatives_lie_in_their_cells() {
    let d = common::synth("openfield-8x8", 80, 0.2, 9);
    let der = derive(&d).unwrap();
    let m = common::mdp("openfield-8x8");
    let c = generate_clusters(&d, &der, &[ArrayName::Observations], 8, 9).unwrap();
    let reps = cluster_representatives(&d, &c, 3).unwrap();
    for (cluster, idx) in &reps {
        assert!(!idx.is_empty() && idx.len() <= 3);
        let cells: BTreeSet<usize> = c
            .members(*cluster)
            .into_iter()
            .map(|i| cell_of_observation(&m, d.observations.row(i).as_slice().unwrap()))
            .collect();
        for &i in idx {
            assert_eq!(c.labels[i], *cluster);
            let cell = cell_of_observation(&m, d.observations.row(i).as_slice().unwrap());
            assert!(cells.contains(&cell));
        }
    }
}

#[test]
fn confidence_bounds_and_recombination() {
    for (epsilon, exact) in [(0.3, false), (0.0, true)] {
        let d = common::synth("openfield-8x8", 100, epsilon, 1);
        let der = derive(&d).unwrap();
        let c = generate_clusters(&d, &der, &[ArrayName::Latents], 6, 1).unwrap();
        let conf = cluster_metric(&d, &der, &c, MetricKind::Confidence).unwrap();
        for (&m, &s) in conf.mean.iter().zip(&conf.std) {
            if exact {
                assert_eq!((m, s), (1.0, 0.0));
            } else {
                assert!((0.25..=1.0).contains(&m), "{m}");
            }
        }
        let ret = cluster_metric(&d, &der, &c, MetricKind::ExpectedReturn).unwrap();
        let n = d.len() as f64;
        let pooled: f64 = ret.mean.iter().zip(&ret.count).map(|(m, &k)| m * k as f64).sum::<f64>() / n;
        let global = der.returns_to_go.iter().sum::<f64>() / n;
        assert!((pooled - global).abs() < 1e-6);
        assert_eq!(ret.count.iter().sum::<usize>(), d.len());

        let report = cluster_metric_report(&[conf, ret]).unwrap();
        assert_eq!(report.rows.len(), c.num_clusters());
    }
}

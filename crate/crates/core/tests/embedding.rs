mod common;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xrl_core::embedding::{
    conditional_affinities, joint_affinities, kl_divergence_and_gradient, tsne_embed, EmbeddingMap, TsneConfig,
};
use xrl_core::xrld::Container;

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng))
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..5 {
        let x = gaussian(10, 4, seed);
        let p = joint_affinities(&conditional_affinities(x.view(), 3.0));
        let y = gaussian(10, 2, seed + 100);
        let (_, grad) = kl_divergence_and_gradient(&p, y.view());
        let fd = common::finite_difference(&y, 1e-5, |yy| kl_divergence_and_gradient(&p, yy.view()).0);
        let rel = common::frobenius(&(&grad - &fd)) / common::frobenius(&fd);
        assert!(rel <= 1e-4, "seed {seed}: relative error {rel}");
    }
}

#[test]
fn kl_matches_dense_definition() {
    let x = gaussian(12, 3, 9);
    let p = joint_affinities(&conditional_affinities(x.view(), 4.0)).to_dense();
    let y = gaussian(12, 2, 10);
    let mut q = Array2::<f64>::zeros((12, 12));
    for i in 0..12 {
        for j in 0..12 {
            if i != j {
                let d = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
                q[[i, j]] = 1.0 / (1.0 + d);
            }
        }
    }
    let z = q.sum();
    let mut kl = 0.0;
    for i in 0..12 {
        for j in 0..12 {
            if i != j {
                kl += p[[i, j]] * (p[[i, j]] / (q[[i, j]] / z)).ln();
            }
        }
    }
    let pj = joint_affinities(&conditional_affinities(x.view(), 4.0));
    let (ours, _) = kl_divergence_and_gradient(&pj, y.view());
    assert!((ours - kl).abs() < 1e-10, "{ours} vs {kl}");
    assert!((p.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn entropies_hit_the_perplexity() {
    let x = gaussian(300, 6, 4);
    for perplexity in [5.0, 30.0, 50.0] {
        let cond = conditional_affinities(x.view(), perplexity);
        for (i, h) in cond.entropies_bits().iter().enumerate() {
            assert!((h - perplexity.log2()).abs() <= 1e-3, "point {i}: {h} bits");
        }
    }
}

#[test]
fn separated_blobs_stay_apart() {
    let x = common::blobs(50, 10, 20.0, 3);
    let map = tsne_embed(
        x.view(),
        &TsneConfig {
            seed: 3,
            ..TsneConfig::default()
        },
    )
    .unwrap();
    let y = &map.coords;
    let dist = |i: usize, j: usize| (y[[i, 0]] - y[[j, 0]]).hypot(y[[i, 1]] - y[[j, 1]]);
    let mut max_intra: f64 = 0.0;
    let mut min_inter = f64::INFINITY;
    for i in 0..100 {
        for j in 0..i {
            if (i < 50) == (j < 50) {
                max_intra = max_intra.max(dist(i, j));
            } else {
                min_inter = min_inter.min(dist(i, j));
            }
        }
    }
    assert!(min_inter > max_intra, "inter {min_inter} intra {max_intra}");
    let trace_kl: Vec<f64> = map.kl_trace.iter().map(|&(_, kl)| kl).collect();
    assert!(trace_kl.last().unwrap() <= &trace_kl[0]);
}

#[test]
fn embedding_is_seeded_and_centred() {
    let x = gaussian(60, 5, 8);
    let cfg = TsneConfig {
        iterations: 300,
        seed: 17,
        ..TsneConfig::default()
    };
    let a = tsne_embed(x.view(), &cfg).unwrap();
    let b = tsne_embed(x.view(), &cfg).unwrap();
    assert_eq!(a.coords, b.coords);
    let means = a.coords.mean_axis(ndarray::Axis(0)).unwrap();
    assert!(means.iter().all(|m| m.abs() < 1e-9));
    assert_eq!(a.perplexity, 30.0_f64.min(59.0 / 3.0));
}

#[test]
fn side_file_round_trip() {
    let x = gaussian(20, 3, 1);
    let mut map = tsne_embed(
        x.view(),
        &TsneConfig {
            iterations: 50,
            ..TsneConfig::default()
        },
    )
    .unwrap();
    map.feature_spec = vec!["latents".into()];
    let d = common::synth("corridor", 1, 0.0, 0);
    let bytes = map.to_container(&d.meta).encode().unwrap();
    let back = EmbeddingMap::from_container(&Container::decode(&bytes).unwrap()).unwrap();
    assert_eq!(back.feature_spec, map.feature_spec);
    assert_eq!(back.final_kl, map.final_kl);
    let f32_coords = map.coords.mapv(|v| v as f32 as f64);
    assert_eq!(back.coords.slice(s![.., ..]), f32_coords);
}

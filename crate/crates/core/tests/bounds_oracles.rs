use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use fewbit::bounds::sigma_matrix;
use fewbit::harness::sweep::{restricted_matrix, trial_model};
use fewbit::harness::{emit_bound_overlay, ExperimentConfig};
use fewbit::rng::rng_from_seed;

#[test]
fn sigma_is_the_projected_noise_covariance() {
    let cfg = ExperimentConfig::default();
    let model = trial_model(&cfg, 0, 100).unwrap();
    let a = restricted_matrix(&model, &[3, 17, 50, 51, 140]);
    let sigma = 0.2;
    let want = sigma_matrix(&a, sigma).unwrap();
    let pinv = a.clone().pseudo_inverse(1e-12).unwrap();

    let draws = 10_000;
    let mut rng = rng_from_seed(77);
    let mut cov = DMatrix::<f64>::zeros(5, 5);
    for _ in 0..draws {
        let e = DMatrix::from_fn(a.nrows(), 1, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let x = &pinv * e;
        cov += &x * x.transpose();
    }
    cov /= draws as f64;
    let scale = want.diagonal().max();
    for i in 0..5 {
        assert!((cov[(i, i)] - want[(i, i)]).abs() < 0.05 * want[(i, i)]);
        for j in 0..5 {
            assert!((cov[(i, j)] - want[(i, j)]).abs() < 0.05 * scale);
        }
    }
}

#[test]
fn overlay_rises_with_snr_and_resolution() {
    let cfg = ExperimentConfig {
        bit_depths: vec![3, 20],
        m_override: Some(vec![250, 250]),
        snr_db: vec![-10.0, 0.0, 10.0, 20.0],
        trials: 20,
        rip_samples: 200,
        ..ExperimentConfig::default()
    };
    let rows = emit_bound_overlay(&cfg).unwrap();
    let curve = |b: u32| -> Vec<f64> { rows.iter().filter(|r| r.bit_depth == b).map(|r| r.bound_db).collect() };
    let (b3, b20) = (curve(3), curve(20));
    assert_eq!(b3.len(), 4);
    for w in b3.windows(2) {
        assert!(w[1] >= w[0]);
    }
    for (lo, hi) in b3.iter().zip(&b20) {
        assert!(hi >= lo);
    }
}

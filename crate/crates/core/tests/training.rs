use diffhash::cmdif::{covariance_difference, linear_surrogate_loss, projections_from_difference};
use diffhash::dataset::{PointSet, SynthConfig};
use diffhash::eval::{evaluate_cross_modal, Direction};
use diffhash::mmkdif::{kernel_difference, kernel_matrix, kernel_surrogate_loss, select_bases, KernelSpec};
use diffhash::numerics::{svd, Matrix};
use diffhash::{
    generate_synthetic, sample_pairs, train_cmdif, train_mmkdif, Error, HashModel, HashParams, MultimodalDataset,
    ProjectionMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> MultimodalDataset {
    generate_synthetic(&SynthConfig {
        n: 12,
        n_prime: 8,
        num_classes: 5,
        points_per_class_x: 30,
        points_per_class_y: 30,
        noise_std_range: (1.0, 2.0),
        center_std: 3.0,
        seed,
    })
    .unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn first_dimensions_do_not_depend_on_m() {
    let d = small(1);
    let pairs = sample_pairs(&d, 300, 900, 2).unwrap();
    let full = train_cmdif(&d, &pairs, &HashParams::new(8)).unwrap();
    for m in [1, 3, 7] {
        assert_eq!(train_cmdif(&d, &pairs, &HashParams::new(m)).unwrap(), full.truncated(m));
    }
    let bases = select_bases(&d, 25, 20, 3).unwrap();
    let full = train_mmkdif(&d, &pairs, &bases, &HashParams::new(12)).unwrap();
    for m in [2, 9] {
        assert_eq!(train_mmkdif(&d, &pairs, &bases, &HashParams::new(m)).unwrap(), full.truncated(m));
    }
}

#[test]
fn kernel_hash_length_exceeds_dimensionality() {
    let d = small(2);
    let pairs = sample_pairs(&d, 200, 600, 5).unwrap();
    let err = train_cmdif(&d, &pairs, &HashParams::new(9)).unwrap_err();
    assert!(matches!(err, Error::DimensionalityCap { m: 9, bound: 8 }));
    let bases = select_bases(&d, 30, 30, 1).unwrap();
    let model = train_mmkdif(&d, &pairs, &bases, &HashParams::new(30)).unwrap();
    assert_eq!(model.m(), 30);
    let code = HashModel::from(model).encode(d.y.point(0), diffhash::Modality::Y).unwrap();
    assert_eq!(code.len(), 30);
}

#[test]
fn linear_loss_is_a_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = small(3);
    for _ in 0..10 {
        let pairs = sample_pairs(&d, rng.random_range(1..50), rng.random_range(1..50), rng.random()).unwrap();
        let gamma = rng.random_range(0.1..20.0);
        let m = rng.random_range(1..6);
        let p = random_matrix(&mut rng, m, d.n());
        let q = random_matrix(&mut rng, m, d.n_prime());
        let loss = linear_surrogate_loss(&p, &q, &d, &pairs, gamma).unwrap();
        let sigma = covariance_difference(pairs.positive_vectors(&d), pairs.negative_vectors(&d), gamma).unwrap();
        let trace = p.matmul(&sigma).unwrap().matmul(&q.transpose()).unwrap().trace();
        assert!((loss - trace).abs() <= 1e-9 * (1.0 + trace.abs()), "{loss} vs {trace}");
    }
}

#[test]
fn kernel_loss_is_a_bilinear_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let (l, lp) = (rng.random_range(1..7), rng.random_range(1..7));
        let (np, nn) = (rng.random_range(1..9), rng.random_range(1..9));
        let kp_x = random_matrix(&mut rng, l, np);
        let kp_y = random_matrix(&mut rng, lp, np);
        let kn_x = random_matrix(&mut rng, l, nn);
        let kn_y = random_matrix(&mut rng, lp, nn);
        let alpha: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let beta: Vec<f64> = (0..lp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(0.1..20.0);
        let loss = kernel_surrogate_loss(&alpha, &beta, &kp_x, &kp_y, &kn_x, &kn_y, gamma).unwrap();
        let k = kernel_difference(&kp_x, &kp_y, &kn_x, &kn_y, gamma).unwrap();
        let form: f64 = (0..l)
            .flat_map(|i| (0..lp).map(move |j| (i, j)))
            .map(|(i, j)| alpha[i] * k.get(i, j) * beta[j])
            .sum();
        assert!((loss - form).abs() <= 1e-9 * (1.0 + form.abs()));
    }
}

#[test]
fn min_trace_projections_reach_minus_the_singular_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let (n, np) = (rng.random_range(1..9), rng.random_range(1..9));
        let sigma = random_matrix(&mut rng, n, np);
        let s = svd(&sigma).unwrap().singular_values;
        for m in 1..=n.min(np) {
            let (p, q) = projections_from_difference(&sigma, m, ProjectionMode::MinTrace).unwrap();
            let trace = p.matmul(&sigma).unwrap().matmul(&q.transpose()).unwrap().trace();
            let target: f64 = -s[..m].iter().sum::<f64>();
            assert!((trace - target).abs() < 1e-10);
        }
    }
}

#[test]
fn kernel_matrix_entries_are_pointwise_kernels() {
    let d = small(4);
    let spec = KernelSpec::gaussian_with_bandwidth(d.diag_cov_x.clone(), 30.0).unwrap();
    let bases = select_bases(&d, 6, 6, 0).unwrap();
    let pts: Vec<&[f64]> = d.x.points().take(9).collect();
    let k = kernel_matrix(&bases.x, pts.iter().copied(), &spec).unwrap();
    assert_eq!(k.shape(), (6, 9));
    for i in 0..6 {
        for (j, p) in pts.iter().enumerate() {
            assert_eq!(k.get(i, j), spec.eval(bases.x.row(i), p).unwrap());
        }
    }
}

/// Class 0 occupies two opposite quadrants, class 1 the other two: no
/// single hyperplane separates them, a Gaussian kernel expansion can.
fn quadrant_toy() -> MultimodalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (cx, cy, label) in [(3.0, 3.0, 0), (-3.0, -3.0, 0), (3.0, -3.0, 1), (-3.0, 3.0, 1)] {
        for _ in 0..15 {
            data.push(cx + rng.random_range(-1.0..1.0));
            data.push(cy + rng.random_range(-1.0..1.0));
            labels.push(label);
        }
    }
    let x = PointSet::new(2, data.clone(), labels.clone()).unwrap();
    let y = PointSet::new(2, data, labels).unwrap();
    MultimodalDataset::new(x, y, vec![1.0, 1.0], vec![1.0, 1.0], 2).unwrap()
}

#[test]
fn kernels_separate_what_projections_cannot() {
    let d = quadrant_toy();
    let pairs = sample_pairs(&d, 400, 400, 1).unwrap();
    let params = HashParams::new(2);
    let linear = HashModel::from(train_cmdif(&d, &pairs, &params).unwrap());
    let bases = select_bases(&d, 20, 20, 2).unwrap();
    let kernel = HashModel::from(train_mmkdif(&d, &pairs, &bases, &params).unwrap());
    let eer_linear = evaluate_cross_modal(&linear, &d, Direction::XToY).unwrap().eer;
    let eer_kernel = evaluate_cross_modal(&kernel, &d, Direction::XToY).unwrap().eer;
    assert!(eer_kernel <= eer_linear, "kernel {eer_kernel} vs linear {eer_linear}");
}

#[test]
fn empty_pair_sets_are_rejected() {
    let d = small(5);
    let mut pairs = sample_pairs(&d, 10, 10, 0).unwrap();
    pairs.negatives.clear();
    assert!(matches!(train_cmdif(&d, &pairs, &HashParams::new(2)), Err(Error::EmptyPairSet)));
    let bases = select_bases(&d, 5, 5, 0).unwrap();
    assert!(matches!(
        train_mmkdif(&d, &pairs, &bases, &HashParams::new(2)),
        Err(Error::EmptyPairSet)
    ));
}

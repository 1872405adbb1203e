use hcci_smpc::pce::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn choose(n: usize, k: usize) -> usize {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

/// He_n(t) / sqrt(n!) for n <= 3, written out.
fn he(n: u32, t: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => t,
        2 => (t * t - 1.0) / 2f64.sqrt(),
        3 => (t * t * t - 3.0 * t) / 6f64.sqrt(),
        _ => unreachable!(),
    }
}

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect()
}

#[test]
fn basis_is_orthonormal_under_exact_quadrature() {
    let rule = gauss_hermite(12);
    for (dim, degree) in [(1, 4), (2, 3), (3, 2)] {
        let set = MultiIndexSet::new(dim, degree);
        let p = set.len();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut idx = vec![0usize; dim];
        loop {
            let w: Vec<f64> = idx.iter().map(|&i| rule[i].0).collect();
            let weight: f64 = idx.iter().map(|&i| rule[i].1).product();
            let phi = eval_basis(&set, &w).unwrap();
            for a in 0..p {
                for b in 0..p {
                    gram[(a, b)] += weight * phi[a] * phi[b];
                }
            }
            let mut d = 0;
            while d < dim {
                idx[d] += 1;
                if idx[d] < rule.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dim {
                break;
            }
        }
        let err = (gram - DMatrix::identity(p, p)).abs().max();
        assert!(err < 1e-10, "({dim}, {degree}): {err}");
    }
}

#[test]
fn paper_sized_expansions() {
    assert_eq!(MultiIndexSet::new(2, 3).len(), 10);
    assert_eq!(MultiIndexSet::new(5, 2).len(), 21);
}

fn weighting() -> impl Strategy<Value = DensityWeighting> {
    prop_oneof![
        Just(DensityWeighting::Uniform),
        Just(DensityWeighting::Linear),
        Just(DensityWeighting::Squared)
    ]
}

fn regularized(samples: usize, seed: u64, weighting: DensityWeighting) -> PceConfig {
    PceConfig {
        samples,
        seed,
        weighting,
        ..PceConfig::later_step()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_law(n in 1usize..=6, p in 0usize..=4) {
        let set = MultiIndexSet::new(n, p);
        prop_assert_eq!(set.len(), choose(n + p, p));
        prop_assert_eq!(set.len(), binomial(n + p, p));
    }

    #[test]
    fn projection_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, w in weighting()) {
        let proj = build_projection(&MultiIndexSet::new(5, 2), &regularized(45, seed, w)).unwrap();
        let n = proj.samples();
        let y1 = DMatrix::from_fn(n, 2, |j, c| ((j * 7 + c * 3) as f64).sin());
        let y2 = DMatrix::from_fn(n, 2, |j, c| ((j + 2 * c) as f64 * 0.37).cos());
        let lhs = proj.project(&(&y1 * a + &y2 * b)).unwrap().coeffs;
        let rhs = proj.project(&y1).unwrap().coeffs * a + proj.project(&y2).unwrap().coeffs * b;
        prop_assert!((lhs - rhs).abs().max() < 1e-10);
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in 0u64..1000, w in weighting(), scale in 0.01f64..10.0) {
        let proj = build_projection(&MultiIndexSet::new(5, 2), &regularized(45, seed, w)).unwrap();
        let y = DMatrix::from_fn(proj.samples(), 3, |j, c| scale * ((seed as usize + 3 * j + 11 * c) as f64 * 0.71).sin());
        let cov = proj.project(&y).unwrap().covariance();
        prop_assert!((&cov - cov.transpose()).abs().max() <= 1e-12 * cov.abs().max().max(1.0));
        let min = SymmetricEigen::new(cov).eigenvalues.min();
        prop_assert!(min >= -1e-10, "min eigenvalue {}", min);
    }

    #[test]
    fn unregularized_projection_recovers_polynomials(
        dim in 1usize..=3,
        degree in 0usize..=3,
        seed in 0u64..1000,
        w in weighting(),
    ) {
        let set = MultiIndexSet::new(dim, degree);
        let p = set.len();
        let mut s = hcci_smpc::rng::stream(seed, 9);
        let coeffs: Vec<f64> = (0..p).map(|_| hcci_smpc::rng::normal(&mut s)).collect();
        let points = DMatrix::from_fn(2 * p + 3, dim, |_, _| hcci_smpc::rng::normal(&mut s));
        let cfg = regularized(points.nrows(), seed, w);
        let weights = cfg.point_weights(&points);
        let values = DMatrix::from_fn(points.nrows(), 1, |j, _| {
            set.indices()
                .iter()
                .zip(&coeffs)
                .map(|(alpha, c)| c * alpha.iter().enumerate().map(|(i, &a)| he(a, points[(j, i)])).product::<f64>())
                .sum()
        });
        let proj = build_projection_from_points(&set, points, &weights, cfg.scale, &vec![0.0; p]).unwrap();
        let got = proj.project(&values).unwrap().coeffs;
        for k in 0..p {
            prop_assert!((got[(k, 0)] - coeffs[k]).abs() < 1e-8, "{}: {} vs {}", k, got[(k, 0)], coeffs[k]);
        }
    }

    #[test]
    fn woodbury_equals_direct(seed in 0u64..1000, w in weighting(), w0 in 0.001f64..1.0) {
        let mut cfg = regularized(45, seed, w);
        cfg.degree_weights[0] = w0;
        let set = MultiIndexSet::new(5, 2);
        let a = build_projection(&set, &cfg).unwrap();
        let b = build_projection_woodbury(&set, &cfg).unwrap();
        prop_assert!((a.operator() - b.operator()).abs().max() < 1e-8);
    }
}

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::engine::OperatingLimits;
use crate::error::{Error, Result};
use crate::genmodel::GaussianKernel;

use super::config::cantelli_kappa;

/// Mean and lower-triangular Cholesky factor of a predicted state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub mean: Vector3<f64>,
    pub chol: Matrix3<f64>,
}

impl MomentState {
    pub fn deterministic(x: [f64; 3]) -> Self {
        Self {
            mean: Vector3::from(x),
            chol: Matrix3::zeros(),
        }
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        self.chol * self.chol.transpose()
    }
}

/// Row-wise `max(0, G_r m + kappa * |S' G_r'| - g_r)` for a spread factor `S`
/// with covariance `S S'`.
pub fn tightened_violations(
    g: &SMatrix<f64, 6, 3>,
    h: &SVector<f64, 6>,
    mean: &Vector3<f64>,
    spread: &Matrix3<f64>,
    kappa: f64,
) -> [f64; 6] {
    std::array::from_fn(|r| {
        let row = g.row(r);
        let sd = (spread.transpose() * row.transpose()).norm();
        ((row * mean)[0] + kappa * sd - h[r]).max(0.0)
    })
}

/// Cantelli-tightened state constraint violations, one per limit row.
pub fn chance_penalty_state(m: &MomentState, limits: &OperatingLimits, eps: f64) -> [f64; 6] {
    tightened_violations(&limits.g_state, &limits.h_state, &m.mean, &m.chol, cantelli_kappa(eps))
}

/// Cantelli-tightened input constraint violations for `u = K xi + u~`.
pub fn chance_penalty_input(u: &Vector3<f64>, gain: &Matrix3<f64>, limits: &OperatingLimits, eps: f64) -> [f64; 6] {
    tightened_violations(&limits.g_input, &limits.h_input, u, gain, cantelli_kappa(eps))
}

/// `dev' W dev + tr(W cov)`: the expectation of `x' W x` for a random
/// deviation with the given mean and covariance.
pub fn quadratic_stage(dev: &Vector3<f64>, cov: &Matrix3<f64>, w: &Matrix3<f64>) -> f64 {
    (dev.transpose() * w * dev)[0] + (w * cov).trace()
}

/// Expected quadratic cost of a predicted trajectory: state stages with `Q`
/// (terminal stage with `Q_T`), input stages `(u~ - u_ref)' R (u~ - u_ref) +
/// tr(R K K')`.
pub fn quadratic_cost(
    states: &[MomentState],
    inputs: &[(Vector3<f64>, Matrix3<f64>)],
    x_ref: &Vector3<f64>,
    u_ref: &Vector3<f64>,
    q: &Matrix3<f64>,
    r: &Matrix3<f64>,
    q_t: &Matrix3<f64>,
) -> f64 {
    let mut total = 0.0;
    for (i, m) in states.iter().enumerate() {
        let w = if i + 1 == states.len() { q_t } else { q };
        total += quadratic_stage(&(m.mean - x_ref), &m.covariance(), w);
    }
    for (u, k) in inputs {
        total += quadratic_stage(&(u - u_ref), &(k * k.transpose()), r);
    }
    total
}

/// Distributional stage cost against a point reference. For every sample
/// `chi_j = mean_{z != j} k(x_j, x_z) - 2 k(x_ref, x_j)`, aggregated with the
/// expectation row `a1`. The constant `k(x_ref, x_ref)` is added only when
/// `include_constant` is set.
pub fn mmd_stage_cost(
    samples: &[[f64; 2]],
    x_ref: [f64; 2],
    kernel: GaussianKernel,
    a1: &[f64],
    include_constant: bool,
) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "MMD stage cost needs at least 2 samples, got {n}"
        )));
    }
    if a1.len() != n {
        return Err(Error::Dimension(format!("{} weights for {n} samples", a1.len())));
    }
    let mut row_sums = vec![0.0; n];
    for j in 0..n {
        for z in j + 1..n {
            let k = kernel.eval(&samples[j], &samples[z]);
            row_sums[j] += k;
            row_sums[z] += k;
        }
    }
    let inv = 1.0 / (n - 1) as f64;
    let mut cost = 0.0;
    let mut weight = 0.0;
    for j in 0..n {
        let chi = row_sums[j] * inv - 2.0 * kernel.eval(&x_ref, &samples[j]);
        cost += a1[j] * chi;
        weight += a1[j];
    }
    if include_constant {
        cost += weight;
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantelli_rows() {
        let phys = OperatingLimits::physical();
        let m = MomentState {
            mean: Vector3::new(12.0, 3.0, 2.0),
            chol: Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        };
        let v = chance_penalty_state(&m, &phys, 0.5);
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(v[1..].iter().all(|x| *x == 0.0));
        // L = 0 reduces to the deterministic check
        let det = MomentState::deterministic([14.0, 3.0, 2.0]);
        assert_eq!(chance_penalty_state(&det, &phys, 0.05)[0], 1.0);
        let u = Vector3::new(0.5, -1.2, 0.0);
        let v = chance_penalty_input(&u, &Matrix3::zeros(), &OperatingLimits::normalized(), 0.3);
        assert!((v[3] - 0.2).abs() < 1e-12);
        assert_eq!(v.iter().filter(|x| **x > 0.0).count(), 1);
    }

    #[test]
    fn quadratic_examples() {
        let q = Matrix3::from_diagonal(&Vector3::new(10.0, 10.0, 0.1));
        assert_eq!(
            quadratic_stage(&Vector3::new(1.0, 0.0, 0.0), &Matrix3::zeros(), &q),
            10.0
        );
        let cov = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        assert!((quadratic_stage(&Vector3::zeros(), &cov, &q) - 30.3).abs() < 1e-12);
        let x = Vector3::new(0.1, 0.2, 0.3);
        let u = Vector3::new(-0.1, 0.0, 0.4);
        let states = [MomentState::deterministic([0.1, 0.2, 0.3]); 3];
        let c = quadratic_cost(&states, &[(u, Matrix3::zeros())], &x, &u, &q, &q, &q);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn mmd_stage_examples() {
        let k = GaussianKernel::new(1.0).unwrap();
        let uniform = |n: usize| vec![1.0 / n as f64; n];
        let r = [0.2, -0.1];
        let at_ref = mmd_stage_cost(&[r; 5], r, k, &uniform(5), false).unwrap();
        assert!((at_ref + 1.0).abs() < 1e-12);
        let far = mmd_stage_cost(&[[1e3, 1e3]; 4], r, k, &uniform(4), false).unwrap();
        assert!((far - 1.0).abs() < 1e-12);
        let a = [1.2, -0.1]; // |a - r| = 1, k = e^-0.5
        let v = mmd_stage_cost(&[r, a, a], r, k, &uniform(3), false).unwrap();
        assert!((v - (-1.0 - 2.0 * (-0.5f64).exp()) / 3.0).abs() < 1e-12);
        assert!((v + 0.737687106).abs() < 1e-9);
        let with_const = mmd_stage_cost(&[r, a, a], r, k, &uniform(3), true).unwrap();
        assert!((with_const - v - 1.0).abs() < 1e-12);
        assert!(mmd_stage_cost(&[r], r, k, &[1.0], false).is_err());
    }
}

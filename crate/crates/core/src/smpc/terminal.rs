use nalgebra::Matrix3;

use super::dynamics::{jacobians, Dynamics};
use crate::error::{Error, Result};

/// Central-difference Jacobians `(dF/dx, dF/du)` of the residual-free
/// dynamics.
pub fn linearize<D: Dynamics + ?Sized>(plant: &D, x: &[f64; 3], u: &[f64; 3]) -> (Matrix3<f64>, Matrix3<f64>) {
    let (a, b, _) = jacobians(plant, x, u, &[0.0, 0.0]);
    (a, b)
}

fn converged(next: &Matrix3<f64>, prev: &Matrix3<f64>) -> bool {
    (next - prev).abs().max() <= 1e-12 * (1.0 + next.abs().max())
}

/// LQR gain from the discrete algebraic Riccati equation (`u = K x`) and the
/// terminal weight solving `Q_T = Q + K'RK + (A+BK)' Q_T (A+BK)`.
pub fn terminal_weight(
    a: &Matrix3<f64>,
    b: &Matrix3<f64>,
    q: &Matrix3<f64>,
    r: &Matrix3<f64>,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let mut p = *q;
    let mut done = false;
    for _ in 0..100_000 {
        let s = r + b.transpose() * p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Singular("R + B'PB in the Riccati iteration".into()))?;
        let next = q + a.transpose() * p * a - a.transpose() * p * b * s_inv * b.transpose() * p * a;
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let stop = converged(&next, &p);
        p = 0.5 * (next + next.transpose());
        if stop {
            done = true;
            break;
        }
    }
    if !done {
        return Err(Error::NoConvergence(
            "Riccati iteration diverged; (A, B) may not be stabilizable".into(),
        ));
    }
    let s = r + b.transpose() * p * b;
    let k = -(s.try_inverse().expect("checked above") * b.transpose() * p * a);
    let acl = a + b * k;
    let base = q + k.transpose() * r * k;
    let mut qt = *q;
    for _ in 0..100_000 {
        let next = base + acl.transpose() * qt * acl;
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        if converged(&next, &qt) {
            return Ok((k, 0.5 * (next + next.transpose())));
        }
        qt = next;
    }
    Err(Error::NoConvergence("Lyapunov iteration diverged".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{equilibrium, DriftParams, Normalizer};

    #[test]
    fn zero_dynamics_give_zero_gain_and_q() {
        let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(10.0, 10.0, 0.1));
        let (k, qt) = terminal_weight(&Matrix3::zeros(), &Matrix3::zeros(), &q, &Matrix3::identity()).unwrap();
        assert_eq!(k, Matrix3::zeros());
        assert_eq!(qt, q);
    }

    #[test]
    fn scalar_lyapunov() {
        let a = Matrix3::new(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let q = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (k, qt) = terminal_weight(&a, &Matrix3::zeros(), &q, &Matrix3::identity()).unwrap();
        assert_eq!(k, Matrix3::zeros());
        assert!((qt[(0, 0)] - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_riccati_matches_closed_form() {
        let a = Matrix3::new(1.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let b = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let q = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (k, qt) = terminal_weight(&a, &b, &q, &Matrix3::identity()).unwrap();
        // scalar DARE: p = 1 + a^2 p / (1 + p)  =>  p^2 - a^2 p - 1 = 0
        let p = (1.44 + (1.44f64 * 1.44 + 4.0).sqrt()) / 2.0;
        assert!((qt[(0, 0)] - p).abs() < 1e-8);
        assert!((k[(0, 0)] + 1.2 * p / (1.0 + p)).abs() < 1e-8);
    }

    #[test]
    fn surrogate_terminal_weight_is_symmetric_psd() {
        let drift = DriftParams::default();
        let eq = equilibrium(&drift, 7.0, 2.8, [0.2, 1.0, 0.5]).unwrap();
        let (a, b) = linearize(&drift, &eq.state_normalized(), &Normalizer.input(&eq.input));
        let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(10.0, 10.0, 0.1));
        let r = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.2, 1.0, 0.5));
        let (_, qt) = terminal_weight(&a, &b, &q, &r).unwrap();
        assert!((qt - qt.transpose()).abs().max() < 1e-12);
        assert!(qt.symmetric_eigenvalues().min() >= -1e-10);
        assert!(qt[(0, 0)] >= q[(0, 0)]);
    }
}

use nalgebra::{Matrix3, Matrix3x2};

use crate::engine::DriftParams;

/// One-step prediction model on normalized coordinates:
/// `x+ = F(x, u, r)` with `r` the CA50/IMEP residual.
pub trait Dynamics: Send + Sync {
    fn step(&self, x: &[f64; 3], u: &[f64; 3], r: &[f64; 2]) -> [f64; 3];
}

impl Dynamics for DriftParams {
    #[inline]
    fn step(&self, x: &[f64; 3], u: &[f64; 3], r: &[f64; 2]) -> [f64; 3] {
        self.advance_normalized(x, u, r)
    }
}

/// `x+ = A x + B u + E r`, used as an analytic test plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub e: Matrix3x2<f64>,
}

impl LinearPlant {
    /// Residual enters the first two state components unchanged.
    pub fn new(a: Matrix3<f64>, b: Matrix3<f64>) -> Self {
        Self {
            a,
            b,
            e: Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        }
    }
}

impl Dynamics for LinearPlant {
    fn step(&self, x: &[f64; 3], u: &[f64; 3], r: &[f64; 2]) -> [f64; 3] {
        let v = self.a * nalgebra::Vector3::from(*x)
            + self.b * nalgebra::Vector3::from(*u)
            + self.e * nalgebra::Vector2::from(*r);
        [v[0], v[1], v[2]]
    }
}

/// Central-difference Jacobians `(dF/dx, dF/du, dF/dr)`.
pub fn jacobians<D: Dynamics + ?Sized>(
    plant: &D,
    x: &[f64; 3],
    u: &[f64; 3],
    r: &[f64; 2],
) -> (Matrix3<f64>, Matrix3<f64>, Matrix3x2<f64>) {
    let h = 1e-6;
    let mut a = Matrix3::zeros();
    let mut b = Matrix3::zeros();
    let mut e = Matrix3x2::zeros();
    for k in 0..3 {
        let (mut xp, mut xm) = (*x, *x);
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (plant.step(&xp, u, r), plant.step(&xm, u, r));
        let (mut up, mut um) = (*u, *u);
        up[k] += h;
        um[k] -= h;
        let (gp, gm) = (plant.step(x, &up, r), plant.step(x, &um, r));
        for row in 0..3 {
            a[(row, k)] = (fp[row] - fm[row]) / (2.0 * h);
            b[(row, k)] = (gp[row] - gm[row]) / (2.0 * h);
        }
    }
    for k in 0..2 {
        let (mut rp, mut rm) = (*r, *r);
        rp[k] += h;
        rm[k] -= h;
        let (fp, fm) = (plant.step(x, u, &rp), plant.step(x, u, &rm));
        for row in 0..3 {
            e[(row, k)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    (a, b, e)
}

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};

use super::{ControlInput, DriftParams, EngineState, Normalizer};
use crate::error::{Error, Result};

/// Steady operating point: state and input with `f(x, u) = x` (no residual).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub state: EngineState,
    pub input: ControlInput,
}

impl Equilibrium {
    pub fn state_normalized(&self) -> [f64; 3] {
        Normalizer.state(&self.state)
    }

    pub fn input_normalized(&self) -> [f64; 3] {
        Normalizer.input(&self.input)
    }
}

/// Minimum weighted-norm normalized input that holds CA50 and IMEP at the
/// targets: `min u' W u  s.t.  drift(x*, u) = x*`, solved by Gauss-Newton on
/// the linearized constraint. Fails when the solution leaves the input box.
pub fn equilibrium_input(drift: &DriftParams, ca50: f64, imep: f64, weights: [f64; 3]) -> Result<[f64; 3]> {
    if weights.iter().any(|w| *w <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "equilibrium weights must be positive, got {weights:?}"
        )));
    }
    let x = EngineState::new(ca50, imep, drift.dpmax(ca50, imep));
    let residual = |u: &Vector3<f64>| -> Vector2<f64> {
        let d = drift.drift(&x, &Normalizer.denormalize_input(&[u[0], u[1], u[2]]));
        Vector2::new(d[0] - ca50, d[1] - imep)
    };
    let winv = Vector3::new(1.0 / weights[0], 1.0 / weights[1], 1.0 / weights[2]);
    let mut u = Vector3::zeros();
    let h = 1e-6;
    for _ in 0..100 {
        let r = residual(&u);
        let mut jac = Matrix2x3::zeros();
        for k in 0..3 {
            let mut up = u;
            let mut um = u;
            up[k] += h;
            um[k] -= h;
            jac.set_column(k, &((residual(&up) - residual(&um)) / (2.0 * h)));
        }
        // u+ = W^-1 J' (J W^-1 J')^-1 (J u - r)
        let jw = Matrix2x3::from_fn(|i, k| jac[(i, k)] * winv[k]);
        let gram: Matrix2<f64> = jw * jac.transpose();
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Singular("equilibrium Jacobian".into()))?;
        let next = jw.transpose() * (inv * (jac * u - r));
        let step = (next - u).norm();
        u = next;
        if step < 1e-13 {
            break;
        }
    }
    let r = residual(&u);
    if r.norm() > 1e-9 {
        return Err(Error::NoConvergence(format!(
            "equilibrium for ca50={ca50}, imep={imep}: residual {:.3e}",
            r.norm()
        )));
    }
    if u.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "equilibrium for ca50={ca50}, imep={imep} needs input {u:?} outside the box"
        )));
    }
    Ok([u[0], u[1], u[2]])
}

/// Equilibrium at the given CA50/IMEP targets.
pub fn equilibrium(drift: &DriftParams, ca50: f64, imep: f64, weights: [f64; 3]) -> Result<Equilibrium> {
    let un = equilibrium_input(drift, ca50, imep, weights)?;
    Ok(Equilibrium {
        state: EngineState::new(ca50, imep, drift.dpmax(ca50, imep)),
        input: Normalizer.denormalize_input(&un),
    })
}

/// Fixed point of `x -> f(x, u)` for a fixed input, by plain iteration
/// (the drift is a contraction for the default coefficients).
pub fn fixed_point(drift: &DriftParams, u: &ControlInput, start: EngineState) -> Result<EngineState> {
    let mut x = start;
    for _ in 0..10_000 {
        let next = drift.advance(&x, u, [0.0, 0.0]);
        let diff = (next.ca50 - x.ca50).abs() + (next.imep - x.imep).abs();
        x = next;
        if diff < 1e-14 {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence("fixed-point iteration".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::STATE_BOX;

    const W: [f64; 3] = [0.2, 1.0, 0.5];

    #[test]
    fn equilibrium_holds_state_for_every_reference_level() {
        let d = DriftParams::default();
        for imep in [2.2, 2.8, 3.2, 3.9] {
            let eq = equilibrium(&d, 7.0, imep, W).unwrap();
            let next = d.advance(&eq.state, &eq.input, [0.0, 0.0]);
            assert!((next.ca50 - 7.0).abs() < 1e-9);
            assert!((next.imep - imep).abs() < 1e-9);
            assert!(eq.input.in_box());
        }
    }

    #[test]
    fn fixed_point_oracle_lies_inside_state_box() {
        let d = DriftParams::default();
        let eq = equilibrium(&d, 7.0, 2.8, W).unwrap();
        for start in [
            EngineState::new(2.0, 2.0, 0.0),
            EngineState::new(13.0, 4.5, 5.0),
            EngineState::new(9.0, 3.0, 1.0),
        ] {
            let fp = fixed_point(&d, &eq.input, start).unwrap();
            for (v, b) in fp.to_array().iter().zip(STATE_BOX.iter()) {
                assert!(*v >= b.lo && *v <= b.hi, "{fp:?}");
            }
            assert!((fp.ca50 - 7.0).abs() < 1e-9 && (fp.imep - 2.8).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_target_is_rejected() {
        let d = DriftParams::default();
        assert!(equilibrium_input(&d, 7.0, 4.45, W).is_err());
    }
}

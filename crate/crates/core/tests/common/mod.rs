#![allow(dead_code)]

use std::sync::Arc;

use hcci_smpc::engine::{equilibrium, DriftParams};
use hcci_smpc::smpc::{linearize, terminal_weight, LinearPlant, ScenarioSet, SmpcConfig, Tracking};
use nalgebra::{Matrix3, Vector3};

pub fn diag(v: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::from(v))
}

pub fn test_plant() -> LinearPlant {
    LinearPlant::new(
        Matrix3::new(0.9, 0.2, 0.0, -0.1, 0.8, 0.0, 0.3, 0.2, 0.1),
        Matrix3::new(0.6, -0.3, 0.2, 0.1, 0.5, 0.0, 0.0, 0.2, 0.4),
    )
}

pub fn scenarios(cfg: &SmpcConfig) -> Arc<ScenarioSet> {
    Arc::new(ScenarioSet::build(cfg.horizon, &cfg.pce_initial, &cfg.pce_later).unwrap())
}

pub fn surrogate_tracking(cfg: &SmpcConfig, imep: f64) -> Tracking {
    let drift = DriftParams::default();
    let eq = equilibrium(&drift, 7.0, imep, cfg.r_diag).unwrap();
    let (x_ref, u_ref) = (eq.state_normalized(), eq.input_normalized());
    let (a, b) = linearize(&drift, &x_ref, &u_ref);
    let (q, r) = (diag(cfg.q_diag), diag(cfg.r_diag));
    Tracking {
        x_ref,
        u_ref,
        q,
        r,
        q_t: terminal_weight(&a, &b, &q, &r).unwrap().1,
    }
}

/// Backward Riccati recursion over the same cost: stage weights `Q` on
/// `x_1..x_{N-1}`, `Q_T` on `x_N`, `R` on `u_0..u_{N-1}`.
pub fn lqr_inputs(
    p: &LinearPlant,
    q: &Matrix3<f64>,
    r: &Matrix3<f64>,
    q_t: &Matrix3<f64>,
    x0: Vector3<f64>,
    n: usize,
) -> Vec<Vector3<f64>> {
    let mut gains = vec![Matrix3::zeros(); n];
    let mut pm = *q_t;
    for i in (0..n).rev() {
        let k = (r + p.b.transpose() * pm * p.b).try_inverse().unwrap() * p.b.transpose() * pm * p.a;
        gains[i] = k;
        pm = q + p.a.transpose() * pm * (p.a - p.b * k);
    }
    let mut x = x0;
    gains
        .iter()
        .map(|k| {
            let u = -k * x;
            x = p.a * x + p.b * u;
            u
        })
        .collect()
}

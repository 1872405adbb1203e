use std::sync::Arc;

use hcci_smpc::engine::{DriftParams, EngineState, Normalizer};
use hcci_smpc::genmodel::{GroundTruthResidual, ResidualModel, ZeroResidual};
use hcci_smpc::smpc::*;
use proptest::prelude::*;

mod common;
use common::*;

fn start(ca50: f64, imep: f64) -> [f64; 3] {
    let d = DriftParams::default();
    Normalizer.state(&EngineState::new(ca50, imep, d.dpmax(ca50, imep)))
}

fn decision(layout: Layout, values: &[f64]) -> Vec<f64> {
    (0..layout.len()).map(|k| values[k % values.len()]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// No analytic gradient exists, so two central-difference step sizes
    /// must agree on the sign of nearly every coordinate.
    #[test]
    fn finite_difference_directions_agree(
        values in prop::collection::vec(-0.6f64..0.6, 39),
        ca50 in 4.0f64..10.0,
        imep in 2.4f64..3.8,
        mmd in any::<bool>(),
    ) {
        let cfg = SmpcConfig::default();
        let drift = DriftParams::default();
        let model: Arc<dyn ResidualModel> = Arc::new(GroundTruthResidual::default());
        let prop = Propagation::Scenario { set: scenarios(&cfg), model };
        let cost = if mmd { CostKind::Mmd } else { CostKind::Quadratic };
        let problem = Problem::new(&drift, &prop, cost, &cfg, start(ca50, imep), surrogate_tracking(&cfg, 3.0)).unwrap();
        let d = decision(problem.layout(), &values);
        let f = |x: &[f64]| problem.rollout(x).objective(cfg.penalty_initial);
        let fd = |h: f64, k: usize| {
            let mut x = d.clone();
            x[k] += h;
            let up = f(&x);
            x[k] -= 2.0 * h;
            (up - f(&x)) / (2.0 * h)
        };
        let (mut agree, mut counted) = (0, 0);
        for k in 0..d.len() {
            let (a, b) = (fd(1e-4, k), fd(1e-5, k));
            if a.abs().max(b.abs()) < 1e-9 {
                continue;
            }
            counted += 1;
            if a.signum() == b.signum() {
                agree += 1;
            }
        }
        prop_assert!(agree as f64 >= 0.95 * counted as f64, "{}/{}", agree, counted);
        // the solver's gradient is the 1e-5 central difference
        let g = problem.gradient(&d, cfg.penalty_initial, &problem.rollout(&d));
        for (k, gk) in g.iter().enumerate() {
            let want = fd(cfg.fd_step, k);
            prop_assert!((gk - want).abs() <= 1e-6 * (1.0 + want.abs()), "{}: {} vs {}", k, gk, want);
        }
    }

    /// With the decoder off and no feedback, the scenario rollout carries the
    /// same means as the deterministic one.
    #[test]
    fn zero_residual_scenarios_nest_the_nominal_rollout(
        inputs in prop::collection::vec(-0.9f64..0.9, 12),
        ca50 in 3.0f64..11.0,
        imep in 2.3f64..3.9,
    ) {
        let cfg = SmpcConfig {
            eps_state: 1.0 - 1e-12,
            eps_input: 1.0 - 1e-12,
            ..SmpcConfig::default()
        };
        let drift = DriftParams::default();
        let x0 = start(ca50, imep);
        let tracking = surrogate_tracking(&SmpcConfig::default(), 3.0);
        let nominal = Propagation::Deterministic;
        let pc = Propagation::Scenario { set: scenarios(&cfg), model: Arc::new(ZeroResidual) };
        let a = Problem::new(&drift, &nominal, CostKind::Quadratic, &cfg, x0, tracking.clone()).unwrap();
        let b = Problem::new(&drift, &pc, CostKind::Quadratic, &cfg, x0, tracking).unwrap();
        let da = inputs.clone();
        let mut db = vec![0.0; b.layout().len()];
        db[..3].copy_from_slice(&inputs[..3]);
        for i in 1..cfg.horizon {
            let s = b.layout().block_start(i);
            db[s..s + 3].copy_from_slice(&inputs[3 * i..3 * i + 3]);
        }
        let (ma, mb) = (a.rollout(&da).means(), b.rollout(&db).means());
        for (p, q) in ma.iter().zip(&mb) {
            for c in 0..3 {
                prop_assert!((p[c] - q[c]).abs() <= 1e-8, "{:?} vs {:?}", p, q);
            }
        }
    }
}

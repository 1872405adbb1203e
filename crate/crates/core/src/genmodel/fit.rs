use serde::{Deserialize, Serialize};

use super::kernel::{mmd2_unbiased, permutation_null_quantile, GaussianKernel};
use super::wae::WaeModel;
use crate::engine::{DatasetRecord, DriftParams, EngineState, Normalizer, ResidualParams};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Conditional residual sampler `g(x, w)` on normalized state and residual,
/// driven by a standard-normal germ `w`.
pub trait ResidualModel: Send + Sync {
    fn residual(&self, x: &[f64; 3], w: &[f64; 2]) -> [f64; 2];

    fn residual_batch(&self, xs: &[[f64; 3]], ws: &[[f64; 2]], out: &mut [[f64; 2]]) {
        for ((x, w), o) in xs.iter().zip(ws).zip(out.iter_mut()) {
            *o = self.residual(x, w);
        }
    }

    /// Encoder sample for an observed residual, if the model has an encoder.
    fn latent(&self, _y: &[f64; 2], _x: &[f64; 3], _rng: &mut Stream) -> Option<[f64; 2]> {
        None
    }
}

impl ResidualModel for WaeModel {
    fn residual(&self, x: &[f64; 3], w: &[f64; 2]) -> [f64; 2] {
        self.decoder_eval(w, x)
    }

    fn residual_batch(&self, xs: &[[f64; 3]], ws: &[[f64; 2]], out: &mut [[f64; 2]]) {
        self.decoder_batch(xs, ws, out)
    }

    fn latent(&self, y: &[f64; 2], x: &[f64; 3], rng: &mut Stream) -> Option<[f64; 2]> {
        Some(self.encoder_sample(y, x, rng))
    }
}

/// The plant's own residual generator expressed in normalized units.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthResidual {
    pub params: ResidualParams,
}

impl ResidualModel for GroundTruthResidual {
    fn residual(&self, x: &[f64; 3], w: &[f64; 2]) -> [f64; 2] {
        let s = Normalizer.denormalize_state(x);
        Normalizer.residual(&self.params.from_latent(&s, *w))
    }
}

/// Always zero: the nominal model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroResidual;

impl ResidualModel for ZeroResidual {
    fn residual(&self, _x: &[f64; 3], _w: &[f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Decoder applied to `n` fresh prior draws at the fixed normalized state `x`.
pub fn sample_conditional_residuals<M: ResidualModel + ?Sized>(
    model: &M,
    x: &[f64; 3],
    n: usize,
    rng: &mut Stream,
) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let ws: Vec<[f64; 2]> = (0..n).map(|_| [rng::normal(rng), rng::normal(rng)]).collect();
    let xs = vec![*x; n];
    let mut out = vec![[0.0; 2]; n];
    model.residual_batch(&xs, &ws, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub bandwidth: f64,
    /// Permutations for the null quantiles; 0 skips them.
    pub permutations: usize,
    pub samples_per_slice: usize,
    /// Normalized (ca50, imep) radius for collecting test records near a slice.
    pub slice_radius: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            permutations: 100,
            samples_per_slice: 10000,
            slice_radius: 0.1,
            seed: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub label: String,
    pub ca50: f64,
    pub imep: f64,
    pub generated_mean: [f64; 2],
    pub generated_std: [f64; 2],
    pub generated_corr: f64,
    pub nearby_count: usize,
    pub nearby_mean: Option<[f64; 2]>,
    pub nearby_std: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Generated residuals (one per test state) against test residuals.
    pub marginal_mmd2: f64,
    pub marginal_null_q95: Option<f64>,
    /// Encoder latents of the test set against prior draws.
    pub latent_mmd2: Option<f64>,
    pub latent_null_q95: Option<f64>,
    pub slices: Vec<SliceSummary>,
}

fn moments(v: &[[f64; 2]]) -> ([f64; 2], [f64; 2], f64) {
    let n = v.len() as f64;
    let m = [
        v.iter().map(|r| r[0]).sum::<f64>() / n,
        v.iter().map(|r| r[1]).sum::<f64>() / n,
    ];
    let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
    for r in v {
        let (a, b) = (r[0] - m[0], r[1] - m[1]);
        s00 += a * a;
        s11 += b * b;
        s01 += a * b;
    }
    let sd = [(s00 / n).sqrt(), (s11 / n).sqrt()];
    let corr = if sd[0] > 0.0 && sd[1] > 0.0 {
        s01 / n / (sd[0] * sd[1])
    } else {
        0.0
    };
    (m, sd, corr)
}

/// Operating points at which conditional slices are summarized: a stable
/// point and a late-load boundary point.
pub const SLICE_POINTS: [(&str, f64, f64); 2] = [("stable", 7.0, 3.0), ("boundary", 2.0, 2.2)];

pub fn slice_state(ca50: f64, imep: f64) -> [f64; 3] {
    let dp = DriftParams::default().dpmax(ca50, imep);
    Normalizer.state(&EngineState::new(ca50, imep, dp))
}

pub fn evaluate_fit<M: ResidualModel + ?Sized>(
    model: &M,
    test: &[DatasetRecord],
    opts: &FitOptions,
) -> Result<FitReport> {
    if test.len() < 2 {
        return Err(Error::InvalidArgument(
            "fit evaluation needs at least two test records".into(),
        ));
    }
    let kernel = GaussianKernel::new(opts.bandwidth)?;
    let mut rng = rng::stream(opts.seed, rng::ids::FIT);

    let xs: Vec<[f64; 3]> = test.iter().map(|r| r.state).collect();
    let ys: Vec<[f64; 2]> = test.iter().map(|r| r.residual).collect();
    let ws: Vec<[f64; 2]> = (0..test.len())
        .map(|_| [rng::normal(&mut rng), rng::normal(&mut rng)])
        .collect();
    let mut generated = vec![[0.0; 2]; test.len()];
    model.residual_batch(&xs, &ws, &mut generated);
    let marginal_mmd2 = mmd2_unbiased(&generated, &ys, kernel)?;
    let marginal_null_q95 = if opts.permutations > 0 {
        Some(permutation_null_quantile(
            &generated,
            &ys,
            kernel,
            opts.permutations,
            0.95,
            opts.seed,
        )?)
    } else {
        None
    };

    let mut latents = Vec::with_capacity(test.len());
    for r in test {
        match model.latent(&r.residual, &r.state, &mut rng) {
            Some(z) => latents.push(z),
            None => break,
        }
    }
    let (latent_mmd2, latent_null_q95) = if latents.len() == test.len() {
        let n = latents.len();
        let draw =
            |rng: &mut Stream| -> Vec<[f64; 2]> { (0..n).map(|_| [rng::normal(rng), rng::normal(rng)]).collect() };
        let prior = draw(&mut rng);
        let v = mmd2_unbiased(&latents, &prior, kernel)?;
        let q = if opts.permutations > 0 {
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            Some(permutation_null_quantile(
                &a,
                &b,
                kernel,
                opts.permutations,
                0.95,
                opts.seed + 1,
            )?)
        } else {
            None
        };
        (Some(v), q)
    } else {
        (None, None)
    };

    let mut slices = Vec::new();
    for (label, ca50, imep) in SLICE_POINTS {
        let x = slice_state(ca50, imep);
        let samples = sample_conditional_residuals(model, &x, opts.samples_per_slice, &mut rng)?;
        let (gm, gs, gc) = moments(&samples);
        let near: Vec<[f64; 2]> = test
            .iter()
            .filter(|r| (r.state[0] - x[0]).hypot(r.state[1] - x[1]) <= opts.slice_radius)
            .map(|r| r.residual)
            .collect();
        let (nm, ns) = if near.len() >= 2 {
            let (m, s, _) = moments(&near);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        slices.push(SliceSummary {
            label: label.to_string(),
            ca50,
            imep,
            generated_mean: gm,
            generated_std: gs,
            generated_corr: gc,
            nearby_count: near.len(),
            nearby_mean: nm,
            nearby_std: ns,
        });
    }
    let report = FitReport {
        marginal_mmd2,
        marginal_null_q95,
        latent_mmd2,
        latent_null_q95,
        slices,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{generate_dataset, EnginePlant, ExcitationPolicy};

    #[test]
    fn ground_truth_matches_plant_generator() {
        let gt = GroundTruthResidual::default();
        let s = EngineState::new(9.0, 2.7, 2.0);
        let x = Normalizer.state(&s);
        let r = gt.residual(&x, &[0.3, -1.1]);
        let want = Normalizer.residual(&ResidualParams::default().from_latent(&s, [0.3, -1.1]));
        assert!((r[0] - want[0]).abs() < 1e-12 && (r[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn sampling_counts_and_determinism() {
        let gt = GroundTruthResidual::default();
        let x = slice_state(7.0, 3.0);
        assert_eq!(
            sample_conditional_residuals(&gt, &x, 1, &mut rng::stream(1, 0))
                .unwrap()
                .len(),
            1
        );
        let a = sample_conditional_residuals(&gt, &x, 50, &mut rng::stream(1, 0)).unwrap();
        let b = sample_conditional_residuals(&gt, &x, 50, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(a, b);
        assert!(sample_conditional_residuals(&gt, &x, 0, &mut rng::stream(1, 0)).is_err());
    }

    #[test]
    fn ground_truth_passes_and_zero_model_fails_the_null() {
        let data = generate_dataset(&EnginePlant::default(), 1500, &ExcitationPolicy::default(), 3).unwrap();
        let opts = FitOptions {
            permutations: 60,
            samples_per_slice: 500,
            ..FitOptions::default()
        };
        let good = evaluate_fit(&GroundTruthResidual::default(), &data, &opts).unwrap();
        assert!(good.marginal_mmd2 < good.marginal_null_q95.unwrap());
        assert!(good.latent_mmd2.is_none());
        let bad = evaluate_fit(&ZeroResidual, &data, &opts).unwrap();
        assert!(bad.marginal_mmd2 > bad.marginal_null_q95.unwrap());
        for s in good.slices.iter().chain(&bad.slices) {
            assert!(s.generated_mean.iter().chain(&s.generated_std).all(|v| v.is_finite()));
        }
    }
}

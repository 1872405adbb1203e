use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kernel::{mmd2_unbiased_grad, GaussianKernel};
use super::mlp::Mlp;
use super::optim::Adam;
use crate::engine::DatasetRecord;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const LATENT_DIM: usize = 2;
pub const RESIDUAL_DIM: usize = 2;
/// The decoder is conditioned on normalized (ca50, imep); dpmax is a
/// deterministic function of the two.
pub const COND_DIM: usize = 2;
/// Clamp applied to the encoder log-variance head.
pub const LOGVAR_RANGE: (f64, f64) = (-8.0, 4.0);

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the latent MMD penalty.
    pub lambda: f64,
    pub learning_rate: f64,
    /// Learning rate reached at the last batch; the rate follows a cosine
    /// decay from `learning_rate`. Equal values give a constant rate.
    pub final_learning_rate: f64,
    /// Kernel bandwidth of the latent MMD penalty.
    pub bandwidth: f64,
    pub hidden: Vec<usize>,
    /// Divide residuals by their training standard deviation inside the model.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 320,
            epochs: 15,
            lambda: 2.5,
            learning_rate: 3e-3,
            final_learning_rate: 1e-5,
            bandwidth: 0.5,
            hidden: vec![30, 30, 30],
            standardize: true,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.final_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be nonzero".into()));
        }
        GaussianKernel::new(self.bandwidth)?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        GaussianKernel::new(self.bandwidth)
    }
}

/// Encoder/decoder pair. Residuals are divided by `residual_scale` before they
/// reach either network, so both work on unit-scale targets; the decoder
/// output is scaled back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaeModel {
    pub format_version: u32,
    pub latent_dim: usize,
    /// Encoder input layout, residual block first.
    pub encoder_input: Vec<String>,
    pub decoder_input: Vec<String>,
    pub residual_scale: [f64; 2],
    pub train_seed: u64,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Result of one loss evaluation.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub reconstruction: f64,
    pub mmd2: f64,
    /// Encoder parameters first, then decoder parameters.
    pub grad: Vec<f64>,
}

/// Random draws consumed by one loss evaluation.
#[derive(Debug, Clone)]
pub struct BatchNoise {
    /// Reparameterization noise, one per batch element.
    pub eta: Vec<[f64; 2]>,
    /// Prior draws for the MMD penalty.
    pub prior: Vec<[f64; 2]>,
}

impl BatchNoise {
    pub fn draw(n: usize, rng: &mut Stream) -> Self {
        let mut pair = || [rng::normal(rng), rng::normal(rng)];
        let eta = (0..n).map(|_| pair()).collect();
        let prior = (0..n).map(|_| pair()).collect();
        Self { eta, prior }
    }
}

impl WaeModel {
    fn with_networks(encoder: Mlp, decoder: Mlp, residual_scale: [f64; 2], train_seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            latent_dim: LATENT_DIM,
            encoder_input: ["r_ca50_n", "r_imep_n", "ca50_n", "imep_n"].map(String::from).to_vec(),
            decoder_input: ["w1", "w2", "ca50_n", "imep_n"].map(String::from).to_vec(),
            residual_scale,
            train_seed,
            encoder,
            decoder,
        }
    }

    /// All-zero networks: the decoder returns a zero residual everywhere.
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        let enc = Mlp::zeros(&layer_sizes(RESIDUAL_DIM + COND_DIM, hidden, 2 * LATENT_DIM))?;
        let dec = Mlp::zeros(&layer_sizes(LATENT_DIM + COND_DIM, hidden, RESIDUAL_DIM))?;
        Ok(Self::with_networks(enc, dec, [1.0, 1.0], 0))
    }

    /// Randomly initialized networks.
    pub fn init(hidden: &[usize], residual_scale: [f64; 2], seed: u64, rng: &mut Stream) -> Result<Self> {
        if !residual_scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument("residual scale must be positive".into()));
        }
        let enc = Mlp::new(&layer_sizes(RESIDUAL_DIM + COND_DIM, hidden, 2 * LATENT_DIM), rng)?;
        let dec = Mlp::new(&layer_sizes(LATENT_DIM + COND_DIM, hidden, RESIDUAL_DIM), rng)?;
        Ok(Self::with_networks(enc, dec, residual_scale, seed))
    }

    #[inline]
    pub fn condition(x: &[f64; 3]) -> [f64; 2] {
        [x[0], x[1]]
    }

    fn encoder_input(&self, y: &[f64; 2], x: &[f64; 3]) -> [f64; 4] {
        [y[0] / self.residual_scale[0], y[1] / self.residual_scale[1], x[0], x[1]]
    }

    /// Latent mean and clamped log-variance for normalized residual `y` at
    /// normalized state `x`.
    pub fn encoder_moments(&self, y: &[f64; 2], x: &[f64; 3]) -> ([f64; 2], [f64; 2]) {
        let o = self
            .encoder
            .eval(&self.encoder_input(y, x))
            .expect("encoder input size");
        let (lo, hi) = LOGVAR_RANGE;
        ([o[0], o[1]], [o[2].clamp(lo, hi), o[3].clamp(lo, hi)])
    }

    /// `mu + exp(logvar / 2) * eta` for a given standard-normal `eta`.
    pub fn encode_with(&self, y: &[f64; 2], x: &[f64; 3], eta: [f64; 2]) -> [f64; 2] {
        let (mu, lv) = self.encoder_moments(y, x);
        [
            mu[0] + (0.5 * lv[0]).exp() * eta[0],
            mu[1] + (0.5 * lv[1]).exp() * eta[1],
        ]
    }

    pub fn encoder_sample(&self, y: &[f64; 2], x: &[f64; 3], rng: &mut Stream) -> [f64; 2] {
        let eta = [rng::normal(rng), rng::normal(rng)];
        self.encode_with(y, x, eta)
    }

    /// Normalized residual `g(x, w)`.
    pub fn decoder_eval(&self, w: &[f64; 2], x: &[f64; 3]) -> [f64; 2] {
        let o = self
            .decoder
            .eval(&[w[0], w[1], x[0], x[1]])
            .expect("decoder input size");
        [o[0] * self.residual_scale[0], o[1] * self.residual_scale[1]]
    }

    pub fn decoder_batch(&self, xs: &[[f64; 3]], ws: &[[f64; 2]], out: &mut [[f64; 2]]) {
        assert!(xs.len() == ws.len() && ws.len() == out.len(), "decoder batch lengths");
        let mut input = Vec::with_capacity(4 * xs.len());
        for (x, w) in xs.iter().zip(ws) {
            input.extend_from_slice(&[w[0], w[1], x[0], x[1]]);
        }
        let mut flat = vec![0.0; 2 * xs.len()];
        self.decoder.eval_batch(&input, &mut flat);
        for (o, f) in out.iter_mut().zip(flat.chunks_exact(2)) {
            *o = [f[0] * self.residual_scale[0], f[1] * self.residual_scale[1]];
        }
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params().to_vec();
        p.extend_from_slice(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let ne = self.encoder.num_params();
        assert_eq!(p.len(), self.num_params());
        self.encoder.params_mut().copy_from_slice(&p[..ne]);
        self.decoder.params_mut().copy_from_slice(&p[ne..]);
    }

    fn apply_step(&mut self, opt: &mut Adam, lr: f64, grad: &[f64]) {
        let mut p = self.params();
        opt.set_learning_rate(lr);
        opt.step(&mut p, grad);
        self.set_params(&p);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: WaeModel = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported format_version {}", m.format_version),
            ));
        }
        let shapes_ok = m.latent_dim == LATENT_DIM
            && m.encoder.input_dim() == RESIDUAL_DIM + COND_DIM
            && m.encoder.output_dim() == 2 * LATENT_DIM
            && m.decoder.input_dim() == LATENT_DIM + COND_DIM
            && m.decoder.output_dim() == RESIDUAL_DIM;
        if !shapes_ok {
            return Err(Error::parse(path, "network shapes do not match the model layout"));
        }
        Ok(m)
    }
}

/// Loss and gradient with explicitly supplied noise.
///
/// `loss = MSE(t, dec(enc(t, c), c)) + lambda * MMD^2(latents, prior)` where `t`
/// is the scaled residual and the MSE averages over batch and components.
pub fn wae_batch_loss_with(
    model: &WaeModel,
    batch: &[DatasetRecord],
    lambda: f64,
    kernel: GaussianKernel,
    noise: &BatchNoise,
) -> Result<BatchLoss> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch of size {b}; the MMD term needs at least 2"
        )));
    }
    if noise.eta.len() != b || noise.prior.len() < 2 {
        return Err(Error::Dimension("noise does not match batch".into()));
    }
    let (lo, hi) = LOGVAR_RANGE;
    let ne = model.encoder.num_params();
    let mut grad = vec![0.0; model.num_params()];
    let (g_enc, g_dec) = grad.split_at_mut(ne);

    let mut enc_traces = Vec::with_capacity(b);
    let mut z = Vec::with_capacity(2 * b);
    let mut stds = Vec::with_capacity(b);
    for (rec, eta) in batch.iter().zip(&noise.eta) {
        let tr = model.encoder.trace(&model.encoder_input(&rec.residual, &rec.state));
        let o = tr.output();
        let sd = [(0.5 * o[2].clamp(lo, hi)).exp(), (0.5 * o[3].clamp(lo, hi)).exp()];
        z.push(o[0] + sd[0] * eta[0]);
        z.push(o[1] + sd[1] * eta[1]);
        stds.push(sd);
        enc_traces.push(tr);
    }

    let prior: Vec<f64> = noise.prior.iter().flat_map(|p| *p).collect();
    let (mmd2, g_mmd) = mmd2_unbiased_grad(&z, &prior, LATENT_DIM, kernel)?;

    let mut recon = 0.0;
    let scale = 1.0 / (RESIDUAL_DIM * b) as f64;
    for (i, rec) in batch.iter().enumerate() {
        let c = WaeModel::condition(&rec.state);
        let t = [
            rec.residual[0] / model.residual_scale[0],
            rec.residual[1] / model.residual_scale[1],
        ];
        let tr = model.decoder.trace(&[z[2 * i], z[2 * i + 1], c[0], c[1]]);
        let out = tr.output();
        let d = [out[0] - t[0], out[1] - t[1]];
        recon += scale * (d[0] * d[0] + d[1] * d[1]);
        let g_out = [2.0 * scale * d[0], 2.0 * scale * d[1]];
        let g_in = model.decoder.backward(&tr, &g_out, g_dec);

        let eta = noise.eta[i];
        let o = enc_traces[i].output();
        let mut g_enc_out = [0.0; 4];
        for a in 0..2 {
            let gz = g_in[a] + lambda * g_mmd[2 * i + a];
            g_enc_out[a] = gz;
            if o[2 + a] > lo && o[2 + a] < hi {
                g_enc_out[2 + a] = gz * eta[a] * 0.5 * stds[i][a];
            }
        }
        model.encoder.backward(&enc_traces[i], &g_enc_out, g_enc);
    }
    let loss = recon + lambda * mmd2;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(BatchLoss {
        loss,
        reconstruction: recon,
        mmd2,
        grad,
    })
}

/// Draws fresh noise from `rng` and evaluates [`wae_batch_loss_with`].
pub fn wae_batch_loss(
    model: &WaeModel,
    batch: &[DatasetRecord],
    cfg: &TrainConfig,
    rng: &mut Stream,
) -> Result<BatchLoss> {
    let noise = BatchNoise::draw(batch.len(), rng);
    wae_batch_loss_with(model, batch, cfg.lambda, cfg.kernel()?, &noise)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: WaeModel,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Splits off the last `test` records as the held-out set.
pub fn split_dataset(data: &[DatasetRecord], test: usize) -> Result<(&[DatasetRecord], &[DatasetRecord])> {
    if test >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {test} of {} records",
            data.len()
        )));
    }
    Ok(data.split_at(data.len() - test))
}

fn residual_std(data: &[DatasetRecord]) -> [f64; 2] {
    let n = data.len() as f64;
    let mut out = [0.0; 2];
    for (c, o) in out.iter_mut().enumerate() {
        let mean = data.iter().map(|r| r.residual[c]).sum::<f64>() / n;
        let var = data.iter().map(|r| (r.residual[c] - mean).powi(2)).sum::<f64>() / n;
        *o = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    out
}

/// Mini-batch Adam over reshuffled epochs. A trailing batch with fewer than
/// two records is dropped.
pub fn wae_train(data: &[DatasetRecord], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two records".into()));
    }
    for r in data {
        crate::error::ensure_finite(
            "training record",
            &[r.state[0], r.state[1], r.residual[0], r.residual[1]],
        )?;
    }
    let kernel = cfg.kernel()?;
    let mut rng = rng::stream(cfg.seed, rng::ids::TRAIN);
    let scale = if cfg.standardize {
        residual_std(data)
    } else {
        [1.0, 1.0]
    };
    let mut model = WaeModel::init(&cfg.hidden, scale, cfg.seed, &mut rng)?;
    let mut opt = Adam::new(model.num_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let per_epoch = order.chunks(cfg.batch_size).filter(|c| c.len() >= 2).count();
    let total_steps = (per_epoch * cfg.epochs).max(2);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|i| data[*i]));
            let noise = BatchNoise::draw(batch.len(), &mut rng);
            let eval = wae_batch_loss_with(&model, &batch, cfg.lambda, kernel, &noise)
                .map_err(|e| Error::NonFinite(format!("epoch {}: {e}", epoch + 1)))?;
            let frac = step as f64 / (total_steps - 1) as f64;
            let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
            let lr = cfg.final_learning_rate + (cfg.learning_rate - cfg.final_learning_rate) * cos;
            model.apply_step(&mut opt, lr, &eval.grad);
            step += 1;
            total += eval.loss;
            count += 1;
        }
        epoch_losses.push(total / count as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        let mut s = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                let x = [0.5 * rng::normal(&mut s), 0.5 * rng::normal(&mut s), 0.0];
                let w = rng::normal(&mut s);
                DatasetRecord {
                    state: x,
                    residual: [0.2 * w * (1.0 + 0.3 * x[0]), -0.02 * w + 0.01 * rng::normal(&mut s)],
                }
            })
            .collect()
    }

    fn small_model(seed: u64) -> WaeModel {
        let mut s = rng::stream(seed, 1);
        WaeModel::init(&[8, 8], [0.2, 0.03], seed, &mut s).unwrap()
    }

    #[test]
    fn zero_model_decodes_to_zero() {
        let m = WaeModel::zeros(&[30, 30, 30]).unwrap();
        assert_eq!(m.decoder_eval(&[0.4, -1.0], &[0.1, 0.2, 0.3]), [0.0, 0.0]);
    }

    #[test]
    fn decoder_is_deterministic_and_batch_consistent() {
        let m = small_model(3);
        let x = [0.1, -0.3, 0.2];
        let a = m.decoder_eval(&[0.5, 0.7], &x);
        assert_eq!(a, m.decoder_eval(&[0.5, 0.7], &x));
        let mut out = [[0.0; 2]; 2];
        m.decoder_batch(&[x, x], &[[0.5, 0.7], [0.0, 0.0]], &mut out);
        assert_eq!(out[0], a);
        assert_eq!(out[1], m.decoder_eval(&[0.0, 0.0], &x));
    }

    #[test]
    fn zero_noise_returns_mean() {
        let m = small_model(4);
        let (mu, _) = m.encoder_moments(&[0.1, 0.01], &[0.0, 0.2, 0.0]);
        assert_eq!(m.encode_with(&[0.1, 0.01], &[0.0, 0.2, 0.0], [0.0, 0.0]), mu);
    }

    #[test]
    fn logvar_floor_limits_the_spread() {
        let mut m = small_model(5);
        let (lo, _) = LOGVAR_RANGE;
        // push the log-variance bias far below the clamp
        let n = m.encoder.num_params();
        m.encoder.params_mut()[n - 2] = -1e6;
        m.encoder.params_mut()[n - 1] = -1e6;
        let (mu, lv) = m.encoder_moments(&[0.1, 0.0], &[0.0; 3]);
        assert_eq!(lv, [lo, lo]);
        let z = m.encode_with(&[0.1, 0.0], &[0.0; 3], [1.0, -1.0]);
        assert!(((z[0] - mu[0]) - (0.5 * lo).exp()).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_offset_of_one() {
        // decoder = y/scale + (1, 0): only the output bias differs from identity
        // through a single linear layer, with a tiny latent passing nothing.
        use super::super::mlp::Activation;
        let dec = Mlp::from_parts(
            vec![4, 2],
            vec![Activation::Linear],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let enc = Mlp::zeros(&[4, 4]).unwrap();
        let mut m = WaeModel::with_networks(enc, dec, [1.0, 1.0], 0);
        m.encoder.params_mut()[16 + 2] = -1e6;
        m.encoder.params_mut()[16 + 3] = -1e6;
        let batch = vec![
            DatasetRecord {
                state: [0.0; 3],
                residual: [0.0, 0.0],
            };
            4
        ];
        let noise = BatchNoise {
            eta: vec![[0.0; 2]; 4],
            prior: vec![[0.0; 2]; 4],
        };
        let l = wae_batch_loss_with(&m, &batch, 2.5, GaussianKernel::new(0.5).unwrap(), &noise).unwrap();
        assert!((l.reconstruction - 0.5).abs() < 1e-15);
        assert_eq!(l.mmd2, 0.0);
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let mut m = small_model(6);
        let batch = records(12, 2);
        let noise = BatchNoise::draw(12, &mut rng::stream(1, 2));
        let k = GaussianKernel::new(0.5).unwrap();
        let l = wae_batch_loss_with(&m, &batch, 2.5, k, &noise).unwrap();
        let p0 = m.params();
        let mut pick = rng::stream(77, 0);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 10 {
            let k_idx = rand::Rng::random_range(&mut pick, 0..p0.len());
            let mut p = p0.clone();
            p[k_idx] += h;
            m.set_params(&p);
            let up = wae_batch_loss_with(&m, &batch, 2.5, k, &noise).unwrap().loss;
            p[k_idx] -= 2.0 * h;
            m.set_params(&p);
            let dn = wae_batch_loss_with(&m, &batch, 2.5, k, &noise).unwrap().loss;
            let fd = (up - dn) / (2.0 * h);
            if fd.abs() < 1e-5 {
                continue;
            }
            assert!(
                ((l.grad[k_idx] - fd) / fd).abs() < 1e-4,
                "{k_idx}: {} vs {fd}",
                l.grad[k_idx]
            );
            checked += 1;
        }
        m.set_params(&p0);
    }

    #[test]
    fn tiny_batches_are_rejected() {
        let m = small_model(1);
        let batch = records(1, 0);
        let cfg = TrainConfig::default();
        assert!(wae_batch_loss(&m, &batch, &cfg, &mut rng::stream(0, 0)).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = records(2000, 5);
        let cfg = TrainConfig {
            batch_size: 100,
            epochs: 6,
            hidden: vec![12, 12],
            ..TrainConfig::default()
        };
        let a = wae_train(&data, &cfg).unwrap();
        let b = wae_train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses.len(), 6);
        assert!(a.epoch_losses[5] < a.epoch_losses[0]);
    }

    #[test]
    fn model_file_round_trip() {
        let m = small_model(8);
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("m.wae.json");
        m.save(&f).unwrap();
        assert_eq!(WaeModel::load(&f).unwrap(), m);
    }
}

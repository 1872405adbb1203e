use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }
}

/// Fully connected network with all parameters in one flat vector.
///
/// Layer `l` stores its `out x in` weight matrix row-major, followed by its
/// bias, starting at `offsets[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpDoc", try_from = "MlpDoc")]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpDoc {
    layers: Vec<LayerDoc>,
}

impl From<Mlp> for MlpDoc {
    fn from(m: Mlp) -> Self {
        let layers = (0..m.num_layers())
            .map(|l| {
                let (i, o) = (m.sizes[l], m.sizes[l + 1]);
                let off = m.offsets[l];
                LayerDoc {
                    inputs: i,
                    outputs: o,
                    activation: m.activations[l],
                    weights: m.params[off..off + i * o].to_vec(),
                    bias: m.params[off + i * o..off + i * o + o].to_vec(),
                }
            })
            .collect();
        MlpDoc { layers }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;
    fn try_from(doc: MlpDoc) -> Result<Self> {
        if doc.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut sizes = vec![doc.layers[0].inputs];
        let mut activations = Vec::new();
        let mut params = Vec::new();
        for (l, layer) in doc.layers.iter().enumerate() {
            if layer.inputs != *sizes.last().unwrap() {
                return Err(Error::Dimension(format!("layer {l} input size does not chain")));
            }
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(Error::Dimension(format!("layer {l} array sizes")));
            }
            sizes.push(layer.outputs);
            activations.push(layer.activation);
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        Mlp::from_parts(sizes, activations, params)
    }
}

/// Per-layer outputs recorded by a forward pass, input first.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for w in sizes.windows(2) {
        offsets.push(at);
        at += w[0] * w[1] + w[1];
    }
    offsets.push(at);
    offsets
}

impl Mlp {
    pub fn from_parts(sizes: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Dimension(
                "network needs at least two nonzero layer sizes".into(),
            ));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Dimension("one activation per layer".into()));
        }
        let offsets = layer_offsets(&sizes);
        if params.len() != offsets[sizes.len() - 1] {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                offsets[sizes.len() - 1],
                params.len()
            )));
        }
        crate::error::ensure_finite("network parameters", &params)?;
        Ok(Self {
            sizes,
            activations,
            params,
            offsets,
        })
    }

    fn default_activations(n: usize) -> Vec<Activation> {
        let mut a = vec![Activation::Relu; n - 1];
        a.push(Activation::Linear);
        a
    }

    /// ReLU hidden layers and a linear output layer, all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Dimension("network needs at least two layer sizes".into()));
        }
        let n = layer_offsets(sizes)[sizes.len() - 1];
        Self::from_parts(sizes.to_vec(), Self::default_activations(sizes.len() - 1), vec![0.0; n])
    }

    /// ReLU hidden layers and a linear output; weights and biases uniform in
    /// `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        for l in 0..m.num_layers() {
            let bound = 1.0 / (m.sizes[l] as f64).sqrt();
            let (a, b) = (m.offsets[l], m.offsets[l + 1]);
            for p in &mut m.params[a..b] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn widest(&self) -> usize {
        *self.sizes.iter().max().unwrap()
    }

    #[inline]
    fn layer_forward(&self, l: usize, input: &[f64], out: &mut [f64]) {
        let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        let w = &self.params[off..off + ni * no];
        let b = &self.params[off + ni * no..off + ni * no + no];
        let act = self.activations[l];
        for o in 0..no {
            let row = &w[o * ni..(o + 1) * ni];
            let mut s = b[o];
            for i in 0..ni {
                s += row[i] * input[i];
            }
            out[o] = act.apply(s);
        }
    }

    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network input has length {}, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(self.trace(input).values.pop().unwrap())
    }

    /// Evaluates `n` inputs stored row-major in `inputs` into `out`
    /// (`n x output_dim`, row-major).
    pub fn eval_batch(&self, inputs: &[f64], out: &mut [f64]) {
        let (ni, no) = (self.input_dim(), self.output_dim());
        assert_eq!(inputs.len() % ni, 0, "batch input length");
        let n = inputs.len() / ni;
        assert_eq!(out.len(), n * no, "batch output length");
        let width = self.widest();
        let mut a = vec![0.0; width];
        let mut b = vec![0.0; width];
        for r in 0..n {
            a[..ni].copy_from_slice(&inputs[r * ni..(r + 1) * ni]);
            for l in 0..self.num_layers() {
                let (src, dst) = (&a[..self.sizes[l]], &mut b[..self.sizes[l + 1]]);
                self.layer_forward(l, src, dst);
                std::mem::swap(&mut a, &mut b);
            }
            out[r * no..(r + 1) * no].copy_from_slice(&a[..no]);
        }
    }

    /// Forward pass keeping every layer output for [`Mlp::backward`].
    pub fn trace(&self, input: &[f64]) -> Trace {
        assert_eq!(input.len(), self.input_dim(), "network input length");
        let mut values = Vec::with_capacity(self.sizes.len());
        values.push(input.to_vec());
        for l in 0..self.num_layers() {
            let mut out = vec![0.0; self.sizes[l + 1]];
            self.layer_forward(l, &values[l], &mut out);
            values.push(out);
        }
        Trace { values }
    }

    /// Reverse pass: adds `d(grad_out . output)/d params` into `grad_params`
    /// and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad_params.len(), self.params.len());
        let mut delta = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let out = &trace.values[l + 1];
            if self.activations[l] == Activation::Relu {
                for o in 0..no {
                    if out[o] <= 0.0 {
                        delta[o] = 0.0;
                    }
                }
            }
            let input = &trace.values[l];
            let off = self.offsets[l];
            let mut next = vec![0.0; ni];
            for o in 0..no {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = off + o * ni;
                for i in 0..ni {
                    grad_params[row + i] += d * input[i];
                    next[i] += d * self.params[row + i];
                }
                grad_params[off + ni * no + o] += d;
            }
            delta = next;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_network_gives_zero() {
        let m = Mlp::zeros(&[4, 30, 30, 2]).unwrap();
        assert_eq!(m.eval(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let m = Mlp::from_parts(vec![2, 2], vec![Activation::Linear], params).unwrap();
        assert_eq!(m.eval(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = Mlp::zeros(&[3, 2]).unwrap();
        assert!(m.eval(&[1.0]).is_err());
        assert!(Mlp::from_parts(vec![2, 2], vec![Activation::Linear], vec![0.0; 5]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let mut s = rng::stream(5, 0);
        let m = Mlp::new(&[4, 30, 30, 30, 2], &mut s).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; 20];
        m.eval_batch(&xs, &mut out);
        for r in 0..10 {
            let single = m.eval(&xs[r * 4..r * 4 + 4]).unwrap();
            assert_eq!(&out[r * 2..r * 2 + 2], &single[..]);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut s = rng::stream(9, 0);
        let mut m = Mlp::new(&[4, 30, 30, 30, 2], &mut s).unwrap();
        let x = [0.2, -0.4, 0.7, 0.1];
        let g_out = [0.6, -1.3];
        let f = |m: &Mlp| {
            let y = m.eval(&x).unwrap();
            y[0] * g_out[0] + y[1] * g_out[1]
        };
        let mut grad = vec![0.0; m.num_params()];
        let gin = m.backward(&m.trace(&x), &g_out, &mut grad);
        let h = 1e-6;
        let mut checked = 0;
        for k in (0..m.num_params()).step_by(37) {
            let p = m.params()[k];
            m.params_mut()[k] = p + h;
            let up = f(&m);
            m.params_mut()[k] = p - h;
            let dn = f(&m);
            m.params_mut()[k] = p;
            let fd = (up - dn) / (2.0 * h);
            if fd.abs() > 1e-4 {
                assert!(((grad[k] - fd) / fd).abs() < 1e-5, "param {k}: {} vs {fd}", grad[k]);
                checked += 1;
            } else {
                assert!((grad[k] - fd).abs() < 1e-9);
            }
        }
        assert!(checked > 10);
        for i in 0..4 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (m.eval(&xp).unwrap()[0] * g_out[0] + m.eval(&xp).unwrap()[1] * g_out[1]
                - m.eval(&xm).unwrap()[0] * g_out[0]
                - m.eval(&xm).unwrap()[1] * g_out[1])
                / (2.0 * h);
            assert!((gin[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn serde_round_trip() {
        let mut s = rng::stream(1, 0);
        let m = Mlp::new(&[3, 5, 2], &mut s).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: Mlp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}

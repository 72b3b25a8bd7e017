use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dense ReLU network with a linear output layer. Parameters live in one flat
/// buffer: for each layer the `out x in` row-major weights, then the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept for the backward pass. `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub widths: Vec<usize>,
}

impl Mlp {
    /// `widths = [input, hidden.., output]`; `widths.len() - 1` linear layers.
    /// Weights are He-uniform, biases zero.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        assert!(widths.iter().all(|&w| w > 0), "layer widths must be positive");
        let mut rng = rng::rng_from(seed);
        let mut params = Vec::with_capacity(Self::count(widths));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            widths: widths.to_vec(),
            params,
        }
    }

    /// `n_layers` linear layers of width `hidden` between `input` and `output`.
    pub fn with_layers(input: usize, hidden: usize, n_layers: usize, output: usize, seed: u64) -> Self {
        assert!(n_layers >= 1);
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, n_layers - 1));
        widths.push(output);
        Self::new(&widths, seed)
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || params.len() != Self::count(&widths) {
            return Err(Error::InvalidArgument(format!(
                "{} parameters do not fit widths {widths:?}",
                params.len()
            )));
        }
        Ok(Self { widths, params })
    }

    fn count(widths: &[usize]) -> usize {
        widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn arch(&self) -> MlpArch {
        MlpArch {
            widths: self.widths.clone(),
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "input width {} does not match network width {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.acts.pop().expect("output"))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<MlpTrace> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_vec());
        let mut off = 0;
        let last = self.n_layers() - 1;
        for (l, pair) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = acts.last().expect("input");
            let mut out: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| bias + dot(row, input))
                .collect();
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Ok(MlpTrace { acts })
    }

    /// Backpropagates `grad_out` (dLoss/dOutput), accumulating parameter
    /// gradients into `grads`. Returns dLoss/dInput.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = grad_out.to_vec();
        let mut off = self.params.len();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            off -= n_in * n_out + n_out;
            let input = &trace.acts[l];
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((grow, gbias), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                if d != 0.0 {
                    axpy(d, input, grow);
                    *gbias += d;
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (row, &d) in w.chunks_exact(n_in).zip(&delta) {
                if d != 0.0 {
                    axpy(d, row, &mut prev);
                }
            }
            if l > 0 {
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    /// Forward pass, then backprop of the gradient produced by `loss_grad`
    /// from the output. Returns the output.
    pub fn accumulate<F>(&self, x: &[f64], grads: &mut [f64], loss_grad: F) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        let trace = self.forward_trace(x)?;
        let g = loss_grad(trace.output());
        self.backward(&trace, &g, grads);
        Ok(trace.acts.last().expect("output").clone())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

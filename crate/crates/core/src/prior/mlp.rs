//! Small dense classifier: rectified hidden layers, softmax output,
//! cross-entropy loss and Adam updates.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `inputs x outputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        Dense { weights, bias }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Moments {
    w: (Array2<f64>, Array2<f64>),
    b: (Array1<f64>, Array1<f64>),
}

pub(crate) struct Adam {
    cfg: AdamConfig,
    step: i32,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, net: &Mlp) -> Self {
        let moments = net
            .layers
            .iter()
            .map(|l| Moments {
                w: (Array2::zeros(l.weights.raw_dim()), Array2::zeros(l.weights.raw_dim())),
                b: (Array1::zeros(l.bias.raw_dim()), Array1::zeros(l.bias.raw_dim())),
            })
            .collect();
        Adam {
            cfg,
            step: 0,
            moments,
        }
    }

    fn update(&mut self, net: &mut Mlp, grads: &[(Array2<f64>, Array1<f64>)]) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for ((layer, m), (gw, gb)) in net.layers.iter_mut().zip(&mut self.moments).zip(grads) {
            adam_apply(
                layer.weights.view_mut().into_slice().expect("standard layout"),
                m.w.0.as_slice_mut().expect("standard layout"),
                m.w.1.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout"),
                (learning_rate, beta1, beta2, epsilon, c1, c2),
            );
            adam_apply(
                layer.bias.as_slice_mut().expect("contiguous"),
                m.b.0.as_slice_mut().expect("contiguous"),
                m.b.1.as_slice_mut().expect("contiguous"),
                gb.as_slice().expect("contiguous"),
                (learning_rate, beta1, beta2, epsilon, c1, c2),
            );
        }
    }
}

fn adam_apply(
    param: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    (lr, b1, b2, eps, c1, c2): (f64, f64, f64, f64, f64, f64),
) {
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.ncols())
    }

    /// Returns the input followed by every layer's post-activation output;
    /// the last entry holds raw logits.
    fn forward_all(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts.last().expect("non-empty"));
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_all(x).pop().expect("non-empty")
    }

    /// One optimizer step on a batch. `targets` rows carry per-class weights;
    /// the loss is `-sum(targets * log softmax(logits))`, so a batch whose
    /// targets sum to one yields a mean cross-entropy.
    pub fn train_step(&mut self, x: &Array2<f64>, targets: &Array2<f64>, opt: &mut Adam) -> f64 {
        let acts = self.forward_all(x);
        let logits = acts.last().expect("non-empty");
        let log_probs = log_softmax_rows(logits);
        let loss = -(targets * &log_probs).sum();

        // d loss / d logits = p * rowsum(T) - T
        let row_weight = targets.sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut delta = log_probs.mapv(f64::exp) * &row_weight - targets;

        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                back.zip_mut_with(&acts[i], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads[i] = (gw, gb);
        }
        opt.update(self, &grads);
        loss
    }
}

pub(crate) fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

//! Fully connected rectifier network with a single logit output, plus
//! backpropagation of the mean focal loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::focal::{focal_loss, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer { weights: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    /// He-uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn he_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(rng));
        Layer { weights, bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Gradients shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Closed-form parameter count `Σ (fan_in + 1) · fan_out`.
pub fn param_count_for(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Self {
        Mlp { layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    pub fn he_uniform<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Mlp { layers: dims.windows(2).map(|w| Layer::he_uniform(w[0], w[1], rng)).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Layer::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Logits for a batch of row vectors.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h.column(0).to_owned()
    }

    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        self.logits(x.insert_axis(Axis(0)))[0]
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Mean focal loss over the batch and its gradient with respect to every
    /// parameter.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[bool],
        gamma: f64,
        alpha: f64,
    ) -> (f64, Gradients) {
        let batch = x.nrows() as f64;
        let last = self.layers.len() - 1;

        // activations[0] is the input; activations[i + 1] is the output of
        // layer i (post-rectifier for hidden layers, logits for the last).
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }

        let logits = activations[last + 1].column(0);
        let mut total = 0.0;
        let mut delta = Array2::<f64>::zeros((x.nrows(), 1));
        for (r, (&z, &y)) in logits.iter().zip(labels).enumerate() {
            let (loss, dz) = focal_loss(sigmoid(z), y, gamma, alpha);
            total += loss;
            delta[[r, 0]] = dz / batch;
        }

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                // Rectifier derivative, read off the stored post-activation.
                Zip::from(&mut upstream).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        (total / batch, Gradients { layers: grads })
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn quantize_f32(&mut self) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|v| v as f32 as f64);
            l.bias.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

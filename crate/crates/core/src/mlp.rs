//! Small fully connected network with logistic activations, trained by full-batch
//! gradient descent on binary cross-entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Layer<T: Scalar> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| T::of(rng.random_range(-limit..limit)))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![T::zero(); outputs],
        }
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let z = row.iter().zip(x).fold(self.biases[o], |acc, (&w, &xi)| acc + w * xi);
                sigmoid(z)
            })
            .collect()
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Binary cross-entropy with the probability clamped away from 0 and 1.
pub fn bce<T: Scalar>(p: T, y: T) -> T {
    let eps = T::of(1e-12);
    let p = p.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Network with the given layer widths, e.g. `[5, 8, 1]`. The last width must be 1.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        assert_eq!(*sizes.last().unwrap(), 1, "single logistic output");
        let layers = sizes
            .windows(2)
            .map(|w| Layer::xavier(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    /// Probability of the positive class.
    pub fn forward(&self, x: &[T]) -> T {
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l.forward(&a);
        }
        a[0]
    }

    fn activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts = vec![x.to_vec()];
        for l in &self.layers {
            let next = l.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Mean cross-entropy over `(xs, ys)`.
    pub fn loss(&self, xs: &[Vec<T>], ys: &[T]) -> T {
        let total: T = xs.iter().zip(ys).map(|(x, &y)| bce(self.forward(x), y)).sum();
        total / T::of_usize(xs.len())
    }

    /// Gradient of [`Mlp::loss`], laid out like [`Mlp::params`].
    pub fn gradient(&self, xs: &[Vec<T>], ys: &[T]) -> Vec<T> {
        let mut grads: Vec<Layer<T>> = self
            .layers
            .iter()
            .map(|l| Layer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: vec![T::zero(); l.weights.len()],
                biases: vec![T::zero(); l.biases.len()],
            })
            .collect();
        let scale = T::one() / T::of_usize(xs.len());
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.activations(x);
            // sigmoid output with cross-entropy: dL/dz = p - y
            let mut delta = vec![acts.last().unwrap()[0] - y];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grads[li];
                for o in 0..layer.outputs {
                    g.biases[o] = g.biases[o] + delta[o] * scale;
                    for i in 0..layer.inputs {
                        let k = o * layer.inputs + i;
                        g.weights[k] = g.weights[k] + delta[o] * input[i] * scale;
                    }
                }
                if li > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let back: T = (0..layer.outputs)
                                .map(|o| layer.weights[o * layer.inputs + i] * delta[o])
                                .sum();
                            let a = input[i];
                            back * a * (T::one() - a)
                        })
                        .collect();
                }
            }
        }
        Mlp { layers: grads }.params()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[T]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("parameter count");
            }
        }
        assert!(it.next().is_none(), "parameter count");
    }

    /// Full-batch gradient descent.
    pub fn train(&mut self, xs: &[Vec<T>], ys: &[T], epochs: usize, learning_rate: T) {
        for _ in 0..epochs {
            let g = self.gradient(xs, ys);
            let p: Vec<T> = self
                .params()
                .into_iter()
                .zip(g)
                .map(|(p, g)| p - learning_rate * g)
                .collect();
            self.set_params(&p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite_difference(net: &Mlp<f64>, xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let base = net.params();
        (0..base.len())
            .map(|k| {
                let mut plus = net.clone();
                let mut p = base.clone();
                p[k] += h;
                plus.set_params(&p);
                let mut minus = net.clone();
                p[k] -= 2.0 * h;
                minus.set_params(&p);
                (plus.loss(xs, ys) - minus.loss(xs, ys)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sizes in [vec![5, 8, 1], vec![3, 4, 3, 1], vec![2, 1]] {
            let mut net = Mlp::<f64>::new(&sizes, &mut rng);
            let p: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.5..1.5)).collect();
            net.set_params(&p);
            let xs: Vec<Vec<f64>> = (0..7)
                .map(|_| (0..sizes[0]).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let ys: Vec<f64> = (0..7).map(|i| (i % 2) as f64).collect();
            let analytic = net.gradient(&xs, &ys);
            let numeric = finite_difference(&net, &xs, &ys);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
                assert!(rel < 1e-4, "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f32>::new(&[5, 8, 1], &mut rng);
        assert_eq!(net.params().len(), 5 * 8 + 8 + 8 + 1);
        let mut other = Mlp::<f32>::new(&[5, 8, 1], &mut rng);
        other.set_params(&net.params());
        assert_eq!(other, net);
        assert_eq!(net.sizes(), vec![5, 8, 1]);
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::<f64>::new(&[2, 4, 1], &mut rng);
        let xs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ys = vec![0.0, 0.0, 1.0, 1.0];
        let before = net.loss(&xs, &ys);
        net.train(&xs, &ys, 100, 0.5);
        assert!(net.loss(&xs, &ys) < before);
    }
}

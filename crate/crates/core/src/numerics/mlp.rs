use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Fully connected feed-forward network. Hidden layers use the activation,
/// the last layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` (cols) to layer `l + 1` (rows).
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Scaled-uniform fan-in initialization: every weight and bias of a layer
    /// with fan-in `k` is drawn from `U(-1/√k, 1/√k)`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<MlpParams, NumericsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::zeros(layer_sizes)?;
        for l in 0..p.weights.len() {
            let bound = 1.0 / (layer_sizes[l] as f64).sqrt();
            for w in p.weights[l].as_mut_slice() {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut p.biases[l] {
                *b = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<MlpParams, NumericsError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NumericsError::Shape(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    /// Builds from explicit layers, checking that shapes chain.
    pub fn from_layers(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<MlpParams, NumericsError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NumericsError::Shape("weights/biases count mismatch".into()));
        }
        let mut sizes = vec![weights[0].cols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.cols() != *sizes.last().unwrap() || b.len() != w.rows() {
                return Err(NumericsError::Shape("incompatible consecutive layers".into()));
            }
            sizes.push(w.rows());
        }
        Ok(MlpParams {
            layer_sizes: sizes,
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NumericsError> {
        if flat.len() != self.num_params() {
            return Err(NumericsError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let nb = b.len();
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// `self += scale · grads`
    pub fn add_scaled(&mut self, grads: &MlpGrads, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (a, d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += scale * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (a, d) in b.iter_mut().zip(g) {
                *a += scale * d;
            }
        }
    }

    fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, NumericsError> {
        if x.len() != self.input_dim() {
            return Err(NumericsError::Shape(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        // pre-activations of every layer; layer inputs are recovered by relu
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.matvec(&h)?;
            z.iter_mut().zip(b).for_each(|(z, b)| *z += b);
            h = if l == last { z.clone() } else { relu(&z) };
            pre.push(z);
        }
        Ok(pre)
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> MlpGrads {
        MlpGrads {
            weights: p
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// `self += scale · other`
    pub fn accumulate(&mut self, other: &MlpGrads, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            for (a, d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += scale * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&other.biases) {
            for (a, d) in b.iter_mut().zip(g) {
                *a += scale * d;
            }
        }
    }
}

pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
    Ok(p.forward_trace(x)?.pop().unwrap())
}

/// Gradients of `⟨forward(x), upstream⟩` with respect to every parameter and
/// to `x`. The ReLU derivative at exactly zero is taken as zero.
pub fn mlp_backward(
    p: &MlpParams,
    x: &[f64],
    upstream: &[f64],
) -> Result<(MlpGrads, Vec<f64>), NumericsError> {
    let pre = p.forward_trace(x)?;
    if upstream.len() != p.output_dim() {
        return Err(NumericsError::Shape(format!(
            "upstream gradient of length {} for output dimension {}",
            upstream.len(),
            p.output_dim()
        )));
    }
    let mut grads = MlpGrads::zeros_like(p);
    let mut delta = upstream.to_vec();
    for l in (0..p.weights.len()).rev() {
        if l + 1 < p.weights.len() {
            // delta arrives w.r.t. the activation output of layer l
            for (d, z) in delta.iter_mut().zip(&pre[l]) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input: Vec<f64> = if l == 0 { x.to_vec() } else { relu(&pre[l - 1]) };
        let gw = &mut grads.weights[l];
        for (i, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for (g, a) in gw.row_mut(i).iter_mut().zip(&input) {
                *g += d * a;
            }
        }
        grads.biases[l].copy_from_slice(&delta);
        delta = p.weights[l].tr_matvec(&delta)?;
    }
    Ok((grads, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(mlp_forward(&p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let p = MlpParams::from_layers(vec![Matrix::identity(3)], vec![vec![0.0; 3]]).unwrap();
        let x = [0.5, -1.5, 2.0];
        assert_eq!(mlp_forward(&p, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn hand_forward_2_3_2() {
        let w1 = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0], [-1.0, -1.0]]).unwrap();
        let b1 = vec![0.0, -1.0, 0.5];
        let w2 = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.0, 1.0]]).unwrap();
        let b2 = vec![0.1, -0.2];
        let p = MlpParams::from_layers(vec![w1, w2], vec![b1, b2]).unwrap();
        // x = (2, 1): z1 = (1, 2, -2.5) -> h1 = (1, 2, 0)
        // z2 = (1 + 4 + 0 + 0.1, -1 + 0 + 0 - 0.2) = (5.1, -1.2)
        let y = mlp_forward(&p, &[2.0, 1.0]).unwrap();
        assert!((y[0] - 5.1).abs() < 1e-15 && (y[1] + 1.2).abs() < 1e-15);
    }

    #[test]
    fn linear_input_grad_is_wt_upstream() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let p = MlpParams::from_layers(vec![w.clone()], vec![vec![0.0; 3]]).unwrap();
        let up = [1.0, -1.0, 2.0];
        let (g, gx) = mlp_backward(&p, &[0.3, 0.7], &up).unwrap();
        assert_eq!(gx, w.tr_matvec(&up).unwrap());
        assert_eq!(g.biases[0], up.to_vec());
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let w1 = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let b1 = vec![-100.0, -100.0];
        let w2 = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let p = MlpParams::from_layers(vec![w1, w2], vec![b1, vec![0.0]]).unwrap();
        let (g, gx) = mlp_backward(&p, &[1.0, 2.0], &[1.0]).unwrap();
        assert!(g.weights[0].as_slice().iter().all(|v| *v == 0.0));
        assert!(g.biases[0].iter().all(|v| *v == 0.0));
        assert_eq!(gx, vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5u64 {
            let sizes = [9usize, 50, 10];
            let p = MlpParams::init(&sizes, seed).unwrap();
            let x: Vec<f64> = (0..9).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect();
            let up: Vec<f64> = (0..10).map(|i| ((i as f64) * 0.91 + 0.3).cos()).collect();
            let (g, gx) = mlp_backward(&p, &x, &up).unwrap();
            let f = |flat: &[f64]| {
                let mut q = p.clone();
                q.set_flat(flat).unwrap();
                super::super::matrix::dot(&mlp_forward(&q, &x).unwrap(), &up)
            };
            let err = grad_check(f, &g.to_flat(), &p.to_flat()).unwrap();
            assert!(err < 1e-5, "param grad err {err}");
            let fx = |xv: &[f64]| super::super::matrix::dot(&mlp_forward(&p, xv).unwrap(), &up);
            let err = grad_check(fx, &gx, &x).unwrap();
            assert!(err < 1e-5, "input grad err {err}");
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::init(&[9, 50, 10], 42).unwrap();
        let b = MlpParams::init(&[9, 50, 10], 42).unwrap();
        let c = MlpParams::init(&[9, 50, 10], 43).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn shape_mismatch() {
        let p = MlpParams::init(&[2, 3], 0).unwrap();
        assert!(mlp_forward(&p, &[1.0]).is_err());
        assert!(mlp_backward(&p, &[1.0, 2.0], &[1.0]).is_err());
        assert!(MlpParams::zeros(&[3]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let mut p = MlpParams::init(&[4, 5, 2], 1).unwrap();
        let flat = p.to_flat();
        let doubled: Vec<f64> = flat.iter().map(|v| 2.0 * v).collect();
        p.set_flat(&doubled).unwrap();
        assert_eq!(p.to_flat(), doubled);
    }
}

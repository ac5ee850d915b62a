//! Fully connected layers and fixed-topology MLP stacks with analytic
//! backpropagation.
//!
//! Everything runs on row-major batches: a batch of `n` inputs is an `n × in`
//! [`Matrix`]. The single-vector entry points are thin wrappers over the batch
//! path, so both produce bitwise-identical results.

use rand::Rng;

use super::matrix::{gemm, Matrix, Operand};
use crate::error::{Error, Result};

/// Negative slope used by every hidden LeakyReLU unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // Zero maps to zero either way; only strictly negative inputs are scaled.
            Activation::LeakyRelu(slope) if x < 0.0 => slope * x,
            _ => x,
        }
    }

    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) if pre < 0.0 => slope,
            _ => 1.0,
        }
    }
}

/// An affine layer `y = act(W·x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Gradient accumulators for one [`Dense`] layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Pre-activation and output of a batched layer evaluation.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    pub pre: Matrix,
    pub out: Matrix,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("dense bias", weight.rows(), bias.len()));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument(
                "dense parameters must be finite".into(),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Weights and biases drawn uniformly from `±sqrt(1 / in_dim)`.
    pub fn uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weight: Vec<f64> = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias: Vec<f64> = (0..out_dim).map(|_| draw()).collect();
        Self {
            weight: Matrix::from_vec(out_dim, in_dim, weight).expect("sized above"),
            bias,
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        self.weight.as_mut_slice()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights plus biases.
    /// Weight and bias storage, borrowed together.
    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), self.bias.as_mut_slice()]
    }

    pub fn param_count(&self) -> usize {
        self.out_dim() * self.in_dim() + self.out_dim()
    }

    /// Multiply-adds per input row, with each bias addition counted as one.
    pub fn mac_count(&self) -> usize {
        self.param_count()
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            weight: vec![0.0; self.out_dim() * self.in_dim()],
            bias: vec![0.0; self.out_dim()],
        }
    }

    /// Affine map without the activation.
    pub fn affine_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("dense input", self.in_dim(), x.cols()));
        }
        let n = x.rows();
        let out_dim = self.out_dim();
        let mut pre = Matrix::zeros(n, out_dim);
        for r in 0..n {
            pre.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(
            n,
            self.in_dim(),
            out_dim,
            1.0,
            Operand::plain(x.as_slice(), self.in_dim()),
            Operand::transposed(self.weight.as_slice(), self.in_dim()),
            1.0,
            pre.as_mut_slice(),
        );
        Ok(pre)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<DenseOutput> {
        let pre = self.affine_batch(x)?;
        let out = self.activate(&pre);
        Ok(DenseOutput { pre, out })
    }

    /// Output only, for inference paths that never backpropagate.
    pub fn infer_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut pre = self.affine_batch(x)?;
        if let Activation::LeakyRelu(_) = self.activation {
            for v in pre.as_mut_slice() {
                *v = self.activation.apply(*v);
            }
        }
        Ok(pre)
    }

    fn activate(&self, pre: &Matrix) -> Matrix {
        match self.activation {
            Activation::Identity => pre.clone(),
            act => {
                let mut out = pre.clone();
                for v in out.as_mut_slice() {
                    *v = act.apply(*v);
                }
                out
            }
        }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the activated output).
    ///
    /// Parameter gradients are accumulated into `grads` when given; the input
    /// gradient is returned when `want_input` is set.
    pub fn backward_batch(
        &self,
        x: &Matrix,
        pre: &Matrix,
        d_out: &Matrix,
        grads: Option<&mut DenseGrads>,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        let (n, in_dim, out_dim) = (x.rows(), self.in_dim(), self.out_dim());
        if d_out.rows() != n || d_out.cols() != out_dim {
            return Err(Error::shape(
                "dense output gradient",
                n * out_dim,
                d_out.rows() * d_out.cols(),
            ));
        }
        if pre.rows() != n || pre.cols() != out_dim || x.cols() != in_dim {
            return Err(Error::shape(
                "dense cache",
                n * out_dim,
                pre.rows() * pre.cols(),
            ));
        }
        let d_pre = match self.activation {
            Activation::Identity => d_out.clone(),
            act => {
                let mut d = d_out.clone();
                for (g, p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g *= act.derivative(*p);
                }
                d
            }
        };
        if let Some(grads) = grads {
            gemm(
                out_dim,
                n,
                in_dim,
                1.0,
                Operand::transposed(d_pre.as_slice(), out_dim),
                Operand::plain(x.as_slice(), in_dim),
                1.0,
                &mut grads.weight,
            );
            for r in 0..n {
                for (gb, d) in grads.bias.iter_mut().zip(d_pre.row(r)) {
                    *gb += d;
                }
            }
        }
        if !want_input {
            return Ok(None);
        }
        let mut d_x = Matrix::zeros(n, in_dim);
        gemm(
            n,
            out_dim,
            in_dim,
            1.0,
            Operand::plain(d_pre.as_slice(), out_dim),
            Operand::plain(self.weight.as_slice(), in_dim),
            0.0,
            d_x.as_mut_slice(),
        );
        Ok(Some(d_x))
    }
}

/// A chain of dense layers; every layer but the last uses LeakyReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of a batched forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    shapes: Vec<(usize, usize)>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }

    /// Pre-activations of each layer, in order.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

impl MlpGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v *= s);
        }
    }
}

impl Mlp {
    /// Builds a stack from explicit layers, checking that dimensions chain and
    /// that the final layer is linear.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "an MLP needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "MLP layer chain",
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        if layers.last().map(Dense::activation) != Some(Activation::Identity) {
            return Err(Error::InvalidArgument(
                "the last MLP layer must be linear".into(),
            ));
        }
        Ok(Self { layers })
    }

    /// Uniformly initialized stack with widths `dims[0] → dims[1] → … → dims[n]`.
    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], slope: f64, rng: &mut R) -> Self {
        assert!(
            dims.len() >= 2,
            "an MLP needs at least an input and output width"
        );
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                let act = if j == last {
                    Activation::Identity
                } else {
                    Activation::LeakyRelu(slope)
                };
                Dense::uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn mac_count(&self) -> usize {
        self.layers.iter().map(Dense::mac_count).sum()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(Dense::zero_grads).collect(),
        }
    }

    /// Parameter tensors in storage order, named `{prefix}.layer{j}.{w|b}`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Vec<usize>, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(j, l)| {
                [
                    (
                        format!("{prefix}.layer{j}.w"),
                        vec![l.out_dim(), l.in_dim()],
                        l.weight.as_slice(),
                    ),
                    (
                        format!("{prefix}.layer{j}.b"),
                        vec![l.out_dim()],
                        l.bias.as_slice(),
                    ),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.out_dim(), l.in_dim()))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (y, cache) = self.forward_batch(input)?;
        Ok((y.into_vec(), cache))
    }

    pub fn backward(&self, cache: &MlpCache, d_y: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let d = Matrix::from_vec(1, d_y.len(), d_y.to_vec())?;
        let mut grads = self.zero_grads();
        let d_x = self
            .backward_batch(cache, &d, Some(&mut grads), true)?
            .expect("input gradient requested");
        Ok((grads, d_x.into_vec()))
    }

    pub fn forward_batch(&self, x: Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("MLP input", self.input_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let DenseOutput { pre: p, out } = layer.forward_batch(&cur)?;
            inputs.push(cur);
            pre.push(p);
            cur = out;
        }
        Ok((
            cur,
            MlpCache {
                inputs,
                pre,
                shapes: self.shapes(),
            },
        ))
    }

    pub fn infer_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut cur = self.layers[0].infer_batch(x)?;
        for layer in &self.layers[1..] {
            cur = layer.infer_batch(&cur)?;
        }
        Ok(cur)
    }

    /// Backpropagates through the whole stack, accumulating parameter
    /// gradients into `grads` when given.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        d_y: &Matrix,
        mut grads: Option<&mut MlpGrads>,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        if cache.shapes != self.shapes() {
            return Err(Error::InvalidArgument(
                "MLP cache was produced by a stack of different shape".into(),
            ));
        }
        if d_y.rows() != cache.batch() || d_y.cols() != self.output_dim() {
            return Err(Error::shape(
                "MLP output gradient",
                cache.batch() * self.output_dim(),
                d_y.rows() * d_y.cols(),
            ));
        }
        let mut d = d_y.clone();
        for j in (0..self.layers.len()).rev() {
            let need_input = j > 0 || want_input;
            let layer_grads = grads.as_deref_mut().map(|g| &mut g.layers[j]);
            match self.layers[j].backward_batch(
                &cache.inputs[j],
                &cache.pre[j],
                &d,
                layer_grads,
                need_input,
            )? {
                Some(next) => d = next,
                None => return Ok(None),
            }
        }
        Ok(Some(d))
    }
}

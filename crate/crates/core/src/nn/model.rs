//! Encoder/decoder network mapping 16 room features to per-band decay curves.
//!
//! Encoder: dense layers with ReLU, the last one linear, reshaped to
//! `(C0, L0)`. Decoder: three stride-1 convolutions. The first two are
//! followed by ReLU and align-corners upsampling to `L/4` and `L/2`; the
//! last produces one channel per band, is upsampled to `L`, and passes
//! through a sigmoid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bands::NUM_BANDS;
use crate::error::{Error, Result};
use crate::nn::layers::{
    conv1d_backward_into, conv1d_forward, dense_backward_into, dense_forward, interp_upsample,
    interp_upsample_backward, relu, relu_backward, sigmoid, sigmoid_backward,
};
use crate::nn::tensor::Tensor;
use crate::roomgen::NUM_FEATURES;
use crate::scalar::Scalar;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Hidden widths of the encoder MLP.
    pub hidden: Vec<usize>,
    /// Decoder channel plan `C0 -> C1 -> C2`, followed by one output channel per band.
    pub channels: [usize; 3],
    /// Latent sequence length `L0`.
    pub base_len: usize,
    /// Output curve length `L`.
    pub out_len: usize,
    pub kernel: usize,
    pub bands: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Default size for training on a workstation CPU (about 4.3 M parameters).
    pub fn desk() -> Self {
        ModelConfig {
            input_dim: NUM_FEATURES,
            hidden: vec![256, 512],
            channels: [64, 64, 32],
            base_len: 125,
            out_len: 1000,
            kernel: 5,
            bands: NUM_BANDS,
        }
    }

    /// Short curves (`L = 20`) and about 26 k parameters; enough to memorize a handful of rooms.
    pub fn tiny() -> Self {
        ModelConfig {
            hidden: vec![64],
            channels: [32, 32, 32],
            ..Self::micro()
        }
    }

    /// Under a thousand parameters; sized for finite-difference gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            input_dim: NUM_FEATURES,
            hidden: vec![8],
            channels: [4, 4, 4],
            base_len: 5,
            out_len: 20,
            kernel: 5,
            bands: NUM_BANDS,
        }
    }

    /// Roughly nine million parameters.
    pub fn paper9m() -> Self {
        ModelConfig {
            channels: [136, 128, 64],
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            "micro" => Ok(Self::micro()),
            "paper9m" => Ok(Self::paper9m()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?} (expected desk, tiny, micro or paper9m)"
            ))),
        }
    }

    /// Sequence lengths after each decoder stage.
    pub fn stage_lens(&self) -> [usize; 3] {
        [self.out_len / 4, self.out_len / 2, self.out_len]
    }

    pub fn latent_dim(&self) -> usize {
        self.channels[0] * self.base_len
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.input_dim == 0 || self.bands == 0 {
            return bad("input_dim and bands must be positive".into());
        }
        if self.hidden.iter().chain(&self.channels).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.base_len < 2 {
            return bad(format!("base_len {} < 2", self.base_len));
        }
        let [l4, l2, l] = self.stage_lens();
        if self.base_len > l4 || l4 < 2 || l2 < l4 || l < l2 {
            return bad(format!(
                "length schedule {} -> {l4} -> {l2} -> {l} is not non-decreasing",
                self.base_len
            ));
        }
        Ok(())
    }

    fn conv_shapes(&self) -> [[usize; 3]; 3] {
        let [c0, c1, c2] = self.channels;
        [
            [c1, c0, self.kernel],
            [c2, c1, self.kernel],
            [self.bands, c2, self.kernel],
        ]
    }

    fn dense_shapes(&self) -> Vec<[usize; 2]> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.latent_dim());
        widths.windows(2).map(|w| [w[1], w[0]]).collect()
    }

    /// Parameter count without allocating.
    pub fn count_params(&self) -> usize {
        let dense: usize = self.dense_shapes().iter().map(|[o, i]| o * i + o).sum();
        let conv: usize = self.conv_shapes().iter().map(|[o, i, k]| o * i * k + o).sum();
        dense + conv
    }
}

/// Weight matrix `(out, in)` and bias `(out,)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Kernel `(cout, cin, k)` and bias `(cout,)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All trainable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: Vec<DenseLayer<T>>,
    pub decoder: Vec<ConvLayer<T>>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input of every encoder layer.
    dense_inputs: Vec<Vec<T>>,
    /// Input of every decoder convolution.
    conv_inputs: Vec<Tensor<T>>,
    /// ReLU outputs of the first two decoder stages.
    conv_relu: Vec<Tensor<T>>,
    /// Pre-upsampling length of the final stage.
    last_len: usize,
    output: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }
}

fn check_finite<T: Scalar>(v: &[T], layer: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("activation of layer {layer}")))
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Zero-valued parameters; the gradient accumulator layout.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelParams {
            config: config.clone(),
            encoder: config
                .dense_shapes()
                .iter()
                .map(|&[o, i]| DenseLayer {
                    weight: Tensor::zeros(&[o, i]),
                    bias: Tensor::zeros(&[o]),
                })
                .collect(),
            decoder: config
                .conv_shapes()
                .iter()
                .map(|&[o, i, k]| ConvLayer {
                    kernel: Tensor::zeros(&[o, i, k]),
                    bias: Tensor::zeros(&[o]),
                })
                .collect(),
        })
    }

    /// Glorot-uniform weights `U(+-sqrt(6 / (fan_in + fan_out)))`, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut Tensor<T>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data.iter_mut() {
                *v = T::lit(rng.gen_range(-limit..limit));
            }
        };
        for l in p.encoder.iter_mut() {
            let (o, i) = (l.weight.shape()[0], l.weight.shape()[1]);
            fill(&mut l.weight, i, o);
        }
        for l in p.decoder.iter_mut() {
            let s = l.kernel.shape().to_vec();
            fill(&mut l.kernel, s[1] * s[2], s[0] * s[2]);
        }
        Ok(p)
    }

    pub fn count_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Tensors in declaration order: encoder (weight, bias)..., decoder (kernel, bias)...
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for l in &self.encoder {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        for l in &self.decoder {
            v.push(&l.kernel);
            v.push(&l.bias);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for l in self.encoder.iter_mut() {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        for l in self.decoder.iter_mut() {
            v.push(&mut l.kernel);
            v.push(&mut l.bias);
        }
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.encoder.len() {
            v.push(format!("encoder.{i}.weight"));
            v.push(format!("encoder.{i}.bias"));
        }
        for i in 0..self.decoder.len() {
            v.push(format!("decoder.{i}.kernel"));
            v.push(format!("decoder.{i}.bias"));
        }
        v
    }

    pub fn fill_zero(&mut self) {
        self.tensors_mut().into_iter().for_each(|t| t.fill_zero());
    }

    pub fn add_assign(&mut self, other: &ModelParams<T>) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |t: &Tensor<T>| {
            Tensor::new(t.shape(), t.data.iter().map(|v| U::lit(v.as_f64())).collect())
                .expect("same shape")
        };
        ModelParams {
            config: self.config.clone(),
            encoder: self
                .encoder
                .iter()
                .map(|l| DenseLayer { weight: c(&l.weight), bias: c(&l.bias) })
                .collect(),
            decoder: self
                .decoder
                .iter()
                .map(|l| ConvLayer { kernel: c(&l.kernel), bias: c(&l.bias) })
                .collect(),
        }
    }

    /// Row-major `(bands, out_len)` prediction and the cache for [`Self::backward`].
    pub fn forward(&self, features: &[T]) -> Result<ForwardCache<T>> {
        let cfg = &self.config;
        let mut a = features.to_vec();
        let mut dense_inputs = Vec::with_capacity(self.encoder.len());
        let last = self.encoder.len() - 1;
        for (i, l) in self.encoder.iter().enumerate() {
            let z = dense_forward(&a, &l.weight, &l.bias)?;
            check_finite(&z, &format!("encoder.{i}"))?;
            dense_inputs.push(std::mem::replace(&mut a, if i < last { relu(&z) } else { z }));
        }

        let mut h = Tensor::new(&[cfg.channels[0], cfg.base_len], a)?;
        let lens = cfg.stage_lens();
        let mut conv_inputs = Vec::with_capacity(3);
        let mut conv_relu = Vec::with_capacity(2);
        for (i, l) in self.decoder.iter().enumerate().take(2) {
            let c = conv1d_forward(&h, &l.kernel, &l.bias)?;
            check_finite(&c.data, &format!("decoder.{i}"))?;
            let r = Tensor::new(c.shape(), relu(&c.data))?;
            let up = interp_upsample(&r, lens[i])?;
            conv_inputs.push(std::mem::replace(&mut h, up));
            conv_relu.push(r);
        }
        let l = &self.decoder[2];
        let c = conv1d_forward(&h, &l.kernel, &l.bias)?;
        let last_len = c.shape()[1];
        conv_inputs.push(h);
        let up = interp_upsample(&c, lens[2])?;
        check_finite(&up.data, "decoder.2")?;
        let output = sigmoid(&up.data);
        Ok(ForwardCache {
            dense_inputs,
            conv_inputs,
            conv_relu,
            last_len,
            output,
        })
    }

    /// Prediction only.
    pub fn predict(&self, features: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(features)?.output)
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/doutput`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &[T],
        grads: &mut ModelParams<T>,
    ) -> Result<()> {
        let cfg = &self.config;
        if grad_output.len() != cache.output.len() {
            return Err(Error::shape(
                format!("({}, {})", cfg.bands, cfg.out_len),
                format!("{} values", grad_output.len()),
            ));
        }
        let g = sigmoid_backward(&cache.output, grad_output);
        let g = Tensor::new(&[cfg.bands, cfg.out_len], g)?;
        let mut g = interp_upsample_backward(&g, cache.last_len)?;
        for i in (0..3).rev() {
            if i < 2 {
                let r = &cache.conv_relu[i];
                let gr = interp_upsample_backward(&g, r.shape()[1])?;
                g = Tensor::new(r.shape(), relu_backward(&r.data, &gr.data))?;
            }
            let l = &self.decoder[i];
            let gl = &mut grads.decoder[i];
            g = conv1d_backward_into(&cache.conv_inputs[i], &l.kernel, &g, &mut gl.kernel, &mut gl.bias)?;
        }
        let mut gv = g.data;
        for i in (0..self.encoder.len()).rev() {
            let l = &self.encoder[i];
            let gl = &mut grads.encoder[i];
            let x = &cache.dense_inputs[i];
            gv = dense_backward_into(x, &l.weight, &gv, &mut gl.weight, &mut gl.bias)?;
            if i > 0 {
                // x is the ReLU output of the previous layer
                gv = relu_backward(x, &gv);
            }
        }
        Ok(())
    }
}

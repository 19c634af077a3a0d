use rand::Rng;

use super::layer::{conv_backward_into, conv_forward, conv_infer, Activation, ConvCache, ConvLayer, LayerGrads};
use super::tensor::SignalTensor;
use crate::error::{Error, Result};

/// An ordered stack of convolution layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    pub name: String,
    pub layers: Vec<ConvLayer>,
}

/// Parameter gradients for every layer of a model, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<LayerGrads>,
}

impl ModelGrads {
    pub fn zeros_like(model: &FcnModel) -> Self {
        Self {
            layers: model.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().chain(g.biases.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Flattened view in the canonical parameter order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.biases).copied())
            .collect()
    }
}

impl FcnModel {
    /// Checks that adjacent layers are channel compatible.
    pub fn new(name: impl Into<String>, layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Config(format!(
                    "layer {k} emits {} channels but layer {} expects {}",
                    pair[0].out_channels,
                    k + 1,
                    pair[1].in_channels
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    /// Build from `(in, out, kernel, activation)` specs with zero parameters.
    pub fn from_spec(name: impl Into<String>, spec: &[(usize, usize, usize, Activation)]) -> Result<Self> {
        let layers = spec
            .iter()
            .map(|&(i, o, k, a)| ConvLayer::new(i, o, k, a))
            .collect::<Result<_>>()?;
        Self::new(name, layers)
    }

    /// The waveform-to-waveform contract: 1 or 2 input channels, a single
    /// tanh output channel.
    pub fn check_waveform_io(&self) -> Result<()> {
        let first = &self.layers[0];
        let last = self.layers.last().expect("non-empty");
        if !(1..=2).contains(&first.in_channels) {
            return Err(Error::Config(format!(
                "model {} takes {} input channels, expected 1 or 2",
                self.name, first.in_channels
            )));
        }
        if last.out_channels != 1 || last.activation != Activation::Tanh {
            return Err(Error::Config(format!(
                "model {} must end in a single tanh channel",
                self.name
            )));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().expect("non-empty").out_channels
    }

    pub fn max_kernel(&self) -> usize {
        self.layers.iter().map(|l| l.kernel_size).max().unwrap_or(1)
    }

    /// Sum over layers of `out * in * k + out`.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn init_random<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init_random(rng);
        }
    }

    /// All parameters in canonical order: per layer, weights then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn forward(&self, x: &SignalTensor) -> Result<SignalTensor> {
        let mut h = conv_infer(x, &self.layers[0])?;
        for layer in &self.layers[1..] {
            h = conv_infer(&h, layer)?;
        }
        Ok(h)
    }

    pub fn forward_train(&self, x: &SignalTensor) -> Result<(SignalTensor, Vec<ConvCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = conv_forward(&h, layer)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Backpropagate `grad_out`, accumulating parameter gradients into `acc`;
    /// returns the gradient with respect to the model input.
    pub fn backward_into(
        &self,
        grad_out: &SignalTensor,
        caches: &[ConvCache],
        acc: &mut ModelGrads,
    ) -> Result<SignalTensor> {
        if caches.len() != self.layers.len() || acc.layers.len() != self.layers.len() {
            return Err(Error::Shape("cache or gradient count does not match the model".into()));
        }
        let mut g = grad_out.clone();
        for ((layer, cache), acc) in self.layers.iter().zip(caches).zip(&mut acc.layers).rev() {
            g = conv_backward_into(&g, layer, cache, acc)?;
        }
        Ok(g)
    }

    pub fn backward(&self, grad_out: &SignalTensor, caches: &[ConvCache]) -> Result<(SignalTensor, ModelGrads)> {
        let mut grads = ModelGrads::zeros_like(self);
        let gx = self.backward_into(grad_out, caches, &mut grads)?;
        Ok((gx, grads))
    }
}

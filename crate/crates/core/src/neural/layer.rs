//! One 1-D "same" convolution layer.
//!
//! The forward map is a cross-correlation with centred zero padding,
//!
//! ```text
//! z[o][t] = b[o] + sum_{i,j} w[o][i][j] * x[i][t + j - (k - 1) / 2]
//! y = act(z)
//! ```
//!
//! evaluated as im2col followed by a GEMM over time tiles so that long
//! signals do not need a full unrolled copy in memory.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::SignalTensor;
use crate::error::{Error, Result};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Columns of the unrolled input materialised at once.
const TIME_TILE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z` with output `y`. The leaky ReLU tie
    /// at `z == 0` takes the negative-side slope.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    /// Row-major `(out, in, k)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

/// Forward-pass state needed by [`conv_backward`].
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub input: SignalTensor,
    pub pre_activation: SignalTensor,
    pub output: SignalTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }
}

impl ConvLayer {
    /// A zero-initialised layer.
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize, activation: Activation) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("layer channel counts must be positive".into()));
        }
        if kernel_size == 0 || kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd and positive, got {kernel_size}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            weights: vec![0.0; out_channels * in_channels * kernel_size],
            biases: vec![0.0; out_channels],
            activation,
        })
    }

    pub fn with_params(mut self, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() || biases.len() != self.biases.len() {
            return Err(Error::Shape(format!(
                "layer {}x{}x{} needs {} weights and {} biases, got {} and {}",
                self.out_channels,
                self.in_channels,
                self.kernel_size,
                self.weights.len(),
                self.biases.len(),
                weights.len(),
                biases.len()
            )));
        }
        self.weights = weights;
        self.biases = biases;
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, j: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel_size + j]
    }

    /// He-normal weights for leaky-ReLU layers, Glorot-normal otherwise;
    /// zero biases.
    pub fn init_random<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.fan_in() as f64;
        let std = match self.activation {
            Activation::LeakyRelu => (2.0 / (fan_in * (1.0 + LEAKY_SLOPE * LEAKY_SLOPE))).sqrt(),
            Activation::Tanh | Activation::Linear => {
                (2.0 / (fan_in + (self.out_channels * self.kernel_size) as f64)).sqrt()
            }
        };
        let dist = Normal::new(0.0, std).expect("finite std");
        self.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
        self.biases.iter_mut().for_each(|b| *b = 0.0);
    }

    fn check_input(&self, x: &SignalTensor) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "layer expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }
}

/// Unroll `x[:, t0..t0+len]` into `col` as a `(in * k) x len` row-major matrix.
fn im2col(x: &SignalTensor, k: usize, t0: usize, len: usize, col: &mut [f64]) {
    let pad = (k - 1) / 2;
    let time = x.time() as isize;
    for i in 0..x.channels() {
        let src = x.channel(i);
        for j in 0..k {
            let row = &mut col[(i * k + j) * len..(i * k + j + 1) * len];
            // Source index for column c is t0 + c + j - pad.
            let offset = t0 as isize + j as isize - pad as isize;
            let lo = (-offset).clamp(0, len as isize) as usize;
            let hi = (time - offset).clamp(0, len as isize) as usize;
            row[..lo].fill(0.0);
            if hi > lo {
                let s = (offset + lo as isize) as usize;
                row[lo..hi].copy_from_slice(&src[s..s + (hi - lo)]);
            }
            row[hi.max(lo)..].fill(0.0);
        }
    }
}

/// Scatter-add the transpose of [`im2col`].
fn col2im(col: &[f64], k: usize, t0: usize, len: usize, grad_x: &mut SignalTensor) {
    let pad = (k - 1) / 2;
    let time = grad_x.time() as isize;
    for i in 0..grad_x.channels() {
        let dst = grad_x.channel_mut(i);
        for j in 0..k {
            let row = &col[(i * k + j) * len..(i * k + j + 1) * len];
            let offset = t0 as isize + j as isize - pad as isize;
            let lo = (-offset).clamp(0, len as isize) as usize;
            let hi = (time - offset).clamp(0, len as isize) as usize;
            if hi > lo {
                let s = (offset + lo as isize) as usize;
                for (d, v) in dst[s..s + (hi - lo)].iter_mut().zip(&row[lo..hi]) {
                    *d += v;
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    // Bounds: the last element touched by each operand must be in range.
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!(m == 0 || n == 0 || (m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the strides and extents above keep every access inside the
    // borrowed slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn pre_activation(x: &SignalTensor, layer: &ConvLayer) -> SignalTensor {
    let (cin, k, cout) = (layer.in_channels, layer.kernel_size, layer.out_channels);
    let time = x.time();
    let rows = cin * k;
    let mut z = SignalTensor::zeros(cout, time);
    for o in 0..cout {
        z.channel_mut(o).fill(layer.biases[o]);
    }
    let mut col = vec![0.0; rows * TIME_TILE.min(time)];
    let mut t0 = 0;
    while t0 < time {
        let len = TIME_TILE.min(time - t0);
        let col = &mut col[..rows * len];
        im2col(x, k, t0, len, col);
        gemm(
            cout,
            rows,
            len,
            1.0,
            &layer.weights,
            rows,
            1,
            col,
            len,
            1,
            1.0,
            &mut z.data_mut()[t0..],
            time,
            1,
        );
        t0 += len;
    }
    z
}

/// Forward pass without retaining a cache.
pub fn conv_infer(x: &SignalTensor, layer: &ConvLayer) -> Result<SignalTensor> {
    layer.check_input(x)?;
    let mut z = pre_activation(x, layer);
    let act = layer.activation;
    z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
    Ok(z)
}

pub fn conv_forward(x: &SignalTensor, layer: &ConvLayer) -> Result<(SignalTensor, ConvCache)> {
    layer.check_input(x)?;
    let z = pre_activation(x, layer);
    let act = layer.activation;
    let mut y = z.clone();
    y.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
    let cache = ConvCache {
        input: x.clone(),
        pre_activation: z,
        output: y.clone(),
    };
    Ok((y, cache))
}

/// Gradients of the forward map with respect to its input, weights and
/// biases, given the gradient with respect to its output.
pub fn conv_backward(
    grad_y: &SignalTensor,
    layer: &ConvLayer,
    cache: &ConvCache,
) -> Result<(SignalTensor, LayerGrads)> {
    let mut grads = LayerGrads::zeros_like(layer);
    let grad_x = conv_backward_into(grad_y, layer, cache, &mut grads)?;
    Ok((grad_x, grads))
}

/// Like [`conv_backward`] but accumulates parameter gradients into `acc`.
pub fn conv_backward_into(
    grad_y: &SignalTensor,
    layer: &ConvLayer,
    cache: &ConvCache,
    acc: &mut LayerGrads,
) -> Result<SignalTensor> {
    if grad_y.shape() != cache.pre_activation.shape() || grad_y.channels() != layer.out_channels {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, forward output was {:?}",
            grad_y.shape(),
            cache.pre_activation.shape()
        )));
    }
    if acc.weights.len() != layer.weights.len() || acc.biases.len() != layer.biases.len() {
        return Err(Error::Shape("gradient accumulator does not match layer".into()));
    }
    let (cin, k, cout) = (layer.in_channels, layer.kernel_size, layer.out_channels);
    let x = &cache.input;
    let time = x.time();
    let rows = cin * k;
    let act = layer.activation;

    let mut grad_z = grad_y.clone();
    for ((g, &z), &y) in grad_z
        .data_mut()
        .iter_mut()
        .zip(cache.pre_activation.data())
        .zip(cache.output.data())
    {
        *g *= act.derivative(z, y);
    }
    for o in 0..cout {
        acc.biases[o] += grad_z.channel(o).iter().sum::<f64>();
    }

    let mut grad_x = SignalTensor::zeros(cin, time);
    let tile = TIME_TILE.min(time);
    let mut col = vec![0.0; rows * tile];
    let mut dcol = vec![0.0; rows * tile];
    let mut t0 = 0;
    while t0 < time {
        let len = TIME_TILE.min(time - t0);
        let col = &mut col[..rows * len];
        let dcol = &mut dcol[..rows * len];
        im2col(x, k, t0, len, col);
        let dz = &grad_z.data()[t0..];
        // dW += dZ_tile * col_tile^T
        gemm(cout, len, rows, 1.0, dz, time, 1, col, 1, len, 1.0, &mut acc.weights, rows, 1);
        // dcol = W^T * dZ_tile
        gemm(rows, cout, len, 1.0, &layer.weights, 1, rows, dz, time, 1, 0.0, dcol, len, 1);
        col2im(dcol, k, t0, len, &mut grad_x);
        t0 += len;
    }
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Direct evaluation of the defining sum.
    pub(crate) fn naive_forward(x: &SignalTensor, layer: &ConvLayer) -> SignalTensor {
        let k = layer.kernel_size as isize;
        let pad = (k - 1) / 2;
        let t_len = x.time() as isize;
        let mut y = SignalTensor::zeros(layer.out_channels, x.time());
        for o in 0..layer.out_channels {
            for t in 0..t_len {
                let mut z = layer.biases[o];
                for i in 0..layer.in_channels {
                    for j in 0..k {
                        let s = t + j - pad;
                        if (0..t_len).contains(&s) {
                            z += layer.weight(o, i, j as usize) * x.channel(i)[s as usize];
                        }
                    }
                }
                y.channel_mut(o)[t as usize] = layer.activation.apply(z);
            }
        }
        y
    }

    fn linear(cin: usize, cout: usize, k: usize, w: Vec<f64>, b: Vec<f64>) -> ConvLayer {
        ConvLayer::new(cin, cout, k, Activation::Linear)
            .unwrap()
            .with_params(w, b)
            .unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let layer = linear(1, 1, 5, vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0]);
        let x = SignalTensor::from_signal(&[0.1, -0.4, 0.9, 0.3]).unwrap();
        assert_eq!(conv_forward(&x, &layer).unwrap().0, x);
    }

    #[test]
    fn small_cross_correlation() {
        let layer = linear(1, 1, 3, vec![1.0, 0.0, -1.0], vec![0.0]);
        let x = SignalTensor::from_signal(&[1.0, 2.0, 3.0]).unwrap();
        let (y, _) = conv_forward(&x, &layer).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);
        assert_eq!(naive_forward(&x, &layer).data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn bias_only_layer_is_constant() {
        let layer = linear(2, 1, 3, vec![0.0; 6], vec![0.7]);
        let x = SignalTensor::new(2, 4, vec![1.0, -2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let (y, _) = conv_forward(&x, &layer).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn kernel_longer_than_signal() {
        let mut r = rng::stream(9, "t");
        let mut layer = ConvLayer::new(2, 3, 9, Activation::Tanh).unwrap();
        layer.init_random(&mut r);
        let x = SignalTensor::new(2, 3, vec![0.5, -0.1, 0.2, 0.3, 0.9, -0.7]).unwrap();
        let (y, _) = conv_forward(&x, &layer).unwrap();
        for (a, b) in y.data().iter().zip(naive_forward(&x, &layer).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tiled_forward_matches_naive_past_tile_boundary() {
        let mut r = rng::stream(3, "t");
        let mut layer = ConvLayer::new(1, 2, 7, Activation::LeakyRelu).unwrap();
        layer.init_random(&mut r);
        layer.biases = vec![0.1, -0.2];
        let n = TIME_TILE + 123;
        let x = SignalTensor::from_signal(&(0..n).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect::<Vec<_>>()).unwrap();
        let y = conv_infer(&x, &layer).unwrap();
        for (a, b) in y.data().iter().zip(naive_forward(&x, &layer).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut r = rng::stream(4, "t");
        let mut layer = ConvLayer::new(2, 3, 5, Activation::LeakyRelu).unwrap();
        layer.init_random(&mut r);
        let x = SignalTensor::new(2, 16, (0..32).map(|i| (i as f64).sin()).collect()).unwrap();
        let (y, cache) = conv_forward(&x, &layer).unwrap();
        let (gx, g) = conv_backward(&SignalTensor::zeros(3, 16), &layer, &cache).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.iter().chain(&g.biases).all(|&v| v == 0.0));
        assert_eq!(y.time(), 16);
    }

    #[test]
    fn linear_bias_gradient_is_sum_of_output_gradient() {
        let layer = linear(1, 2, 3, vec![0.2, -0.1, 0.4, 0.3, 0.0, -0.5], vec![0.0, 0.0]);
        let x = SignalTensor::from_signal(&[0.3, 0.1, -0.2, 0.5]).unwrap();
        let (_, cache) = conv_forward(&x, &layer).unwrap();
        let gy = SignalTensor::new(2, 4, vec![1.0, 2.0, -1.0, 0.5, 0.25, -3.0, 4.0, 1.0]).unwrap();
        let (_, g) = conv_backward(&gy, &layer, &cache).unwrap();
        assert_eq!(g.biases, vec![2.5, 2.25]);
    }

    #[test]
    fn shape_errors() {
        let layer = linear(2, 1, 3, vec![0.0; 6], vec![0.0]);
        let x = SignalTensor::from_signal(&[1.0, 2.0]).unwrap();
        assert!(matches!(conv_forward(&x, &layer), Err(Error::Shape(_))));
        let x2 = SignalTensor::zeros(2, 4);
        let (_, cache) = conv_forward(&x2, &layer).unwrap();
        assert!(matches!(
            conv_backward(&SignalTensor::zeros(1, 5), &layer, &cache),
            Err(Error::Shape(_))
        ));
        assert!(ConvLayer::new(1, 1, 4, Activation::Linear).is_err());
    }

    #[test]
    fn leaky_relu_tie_takes_negative_slope() {
        assert_eq!(Activation::LeakyRelu.derivative(0.0, 0.0), LEAKY_SLOPE);
        assert_eq!(Activation::LeakyRelu.apply(-2.0), -0.02);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::conv::{conv_forward, conv_param_grad, conv_transpose, ConvShape};
use crate::error::{dim_err, param_err, Result};
use crate::linops::ComplexImage;

/// Real channels used to carry a complex image (real and imaginary planes).
pub const IO_CHANNELS: usize = 2;
/// Power iterations used by [`NetworkWeights::global_lipschitz_bound`].
const SPECTRAL_REFINE_ROUNDS: usize = 20;
const BOUND_POWER_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    /// No nonlinearity; makes the network a linear map.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    z
                } else {
                    s * z
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative recovered from the activation output `a = act(z)`.
    /// The ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => (a > 0.0) as u8 as f64,
            Activation::LeakyRelu(s) => {
                if a > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture of the learned operator H.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub num_layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub activation: Activation,
    /// Image size on which per-layer operator norms are measured.
    pub image_shape: (usize, usize),
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_layers: 5,
            channels: 64,
            kernel_size: 3,
            activation: Activation::Relu,
            image_shape: (32, 32),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return param_err("network needs at least 2 layers");
        }
        if self.channels == 0 {
            return param_err("channel count must be positive");
        }
        if self.kernel_size % 2 == 0 {
            return param_err("kernel size must be odd");
        }
        if self.image_shape.0 == 0 || self.image_shape.1 == 0 {
            return param_err("image shape must be positive");
        }
        if let Activation::LeakyRelu(s) = self.activation {
            if !(0.0..=1.0).contains(&s) {
                return param_err("leaky slope must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// One convolution layer: kernel `(out, in, k, k)` and bias `(out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(out_ch: usize, in_ch: usize, k: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if k % 2 == 0 {
            return param_err("kernel size must be odd");
        }
        if kernel.len() != out_ch * in_ch * k * k || bias.len() != out_ch {
            return dim_err("kernel/bias length does not match layer shape");
        }
        Ok(Self {
            out_ch,
            in_ch,
            k,
            kernel,
            bias,
        })
    }

    fn shape(&self, h: usize, w: usize) -> ConvShape {
        ConvShape {
            out_ch: self.out_ch,
            in_ch: self.in_ch,
            k: self.k,
            h,
            w,
        }
    }
}

/// Parameters of H plus the persisted power-iteration vectors used by
/// spectral normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<ConvLayer>,
    activation: Activation,
    shape: (usize, usize),
    spectral_state: Vec<Vec<f64>>,
}

/// Gradient with the same layout as [`NetworkWeights`] kernels and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGradient {
    pub kernels: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl WeightGradient {
    pub fn zeros_like(w: &NetworkWeights) -> Self {
        Self {
            kernels: w.layers.iter().map(|l| vec![0.0; l.kernel.len()]).collect(),
            biases: w.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, b) in self.kernels.iter().zip(&self.biases) {
            out.extend_from_slice(k);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.kernels.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &WeightGradient) {
        for (a, b) in self.kernels.iter_mut().zip(&other.kernels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.kernels.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.iter_mut().for_each(|x| *x *= s));
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Stored layer inputs from a forward pass, consumed by the VJPs.
pub(crate) struct Tape {
    /// `inputs[l]` is the input to layer `l` (post-activation of layer `l-1`).
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn random_unit(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl NetworkWeights {
    /// Builds a network from explicit layers. Layer channels must chain and
    /// start/end at [`IO_CHANNELS`].
    pub fn from_layers(layers: Vec<ConvLayer>, activation: Activation, shape: (usize, usize)) -> Result<Self> {
        if layers.is_empty() {
            return param_err("network needs at least one layer");
        }
        if layers[0].in_ch != IO_CHANNELS || layers.last().unwrap().out_ch != IO_CHANNELS {
            return dim_err("first layer input and last layer output must have 2 channels");
        }
        for pair in layers.windows(2) {
            if pair[0].out_ch != pair[1].in_ch {
                return dim_err("layer channel counts do not chain");
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let spectral_state = layers
            .iter()
            .map(|l| random_unit(l.in_ch * shape.0 * shape.1, &mut rng))
            .collect();
        Ok(Self {
            layers,
            activation,
            shape,
            spectral_state,
        })
    }

    /// A single 1x1 linear layer `x -> M x` acting on the (re, im) channel pair.
    pub fn linear_1x1(m: [[f64; 2]; 2], shape: (usize, usize)) -> Self {
        let kernel = vec![m[0][0], m[0][1], m[1][0], m[1][1]];
        let layer = ConvLayer::new(2, 2, 1, kernel, vec![0.0; 2]).expect("valid 1x1 layer");
        Self::from_layers(vec![layer], Activation::Identity, shape).expect("valid network")
    }

    /// `H(x) = c x`.
    pub fn scaled_identity(c: f64, shape: (usize, usize)) -> Self {
        Self::linear_1x1([[c, 0.0], [0.0, c]], shape)
    }

    /// The zero map with the architecture of `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = Self::layer_shapes(cfg)
            .into_iter()
            .map(|(o, i)| ConvLayer::new(o, i, cfg.kernel_size, vec![0.0; o * i * cfg.kernel_size.pow(2)], vec![0.0; o]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, cfg.activation, cfg.image_shape)
    }

    fn layer_shapes(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
        (0..cfg.num_layers)
            .map(|l| {
                let i = if l == 0 { IO_CHANNELS } else { cfg.channels };
                let o = if l + 1 == cfg.num_layers { IO_CHANNELS } else { cfg.channels };
                (o, i)
            })
            .collect()
    }

    /// Seeded fan-in (He) initialization followed by one spectral
    /// normalization pass so the global Lipschitz bound starts at most 1.
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = cfg.kernel_size;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for (o, i) in Self::layer_shapes(cfg) {
            let std = (2.0 / (i * k * k) as f64).sqrt();
            let kernel = (0..o * i * k * k)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            layers.push(ConvLayer::new(o, i, k, kernel, vec![0.0; o])?);
        }
        let spectral_state = layers
            .iter()
            .map(|l| random_unit(l.in_ch * cfg.image_shape.0 * cfg.image_shape.1, &mut rng))
            .collect();
        let w = Self {
            layers,
            activation: cfg.activation,
            shape: cfg.image_shape,
            spectral_state,
        };
        Ok(w.spectral_normalize(1.0, 100))
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn spectral_shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn spectral_state(&self) -> &[Vec<f64>] {
        &self.spectral_state
    }

    pub(crate) fn from_parts(
        layers: Vec<ConvLayer>,
        activation: Activation,
        shape: (usize, usize),
        spectral_state: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut w = Self::from_layers(layers, activation, shape)?;
        if spectral_state.len() != w.layers.len()
            || spectral_state.iter().zip(&w.layers).any(|(s, l)| s.len() != l.in_ch * shape.0 * shape.1)
        {
            return dim_err("spectral state does not match layer shapes");
        }
        w.spectral_state = spectral_state;
        Ok(w)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order: kernel then bias for each layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.kernel);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Returns a copy with parameters replaced by `params` (layout of [`flatten`](Self::flatten)).
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return dim_err("parameter vector length mismatch");
        }
        let mut out = self.clone();
        let mut off = 0;
        for l in &mut out.layers {
            let nk = l.kernel.len();
            l.kernel.copy_from_slice(&params[off..off + nk]);
            off += nk;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(out)
    }

    /// Multiplies the output layer by `factor`, so `H -> factor * H` and the
    /// global Lipschitz bound scales by `|factor|`.
    pub fn rescale_output(&self, factor: f64) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().unwrap();
        last.kernel.iter_mut().for_each(|x| *x *= factor);
        last.bias.iter_mut().for_each(|x| *x *= factor);
        out
    }

    /// Rescales the output layer so that the global Lipschitz bound equals `target`.
    pub fn rescaled_to_bound(&self, target: f64) -> Self {
        let b = self.global_lipschitz_bound();
        if b == 0.0 {
            return self.clone();
        }
        self.rescale_output(target / b)
    }

    fn check_input(&self, x: &ComplexImage) -> Result<()> {
        if x.shape() != self.shape {
            return dim_err(format!(
                "network expects {}x{} images, got {}x{}",
                self.shape.0,
                self.shape.1,
                x.height(),
                x.width()
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_tape(&self, x: &ComplexImage) -> Result<Tape> {
        self.check_input(x)?;
        let (h, w) = self.shape;
        let hw = h * w;
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut cur = x.to_channels();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_ch * hw];
            conv_forward(&layer.shape(h, w), &layer.kernel, Some(&layer.bias), &cur, &mut out);
            if idx + 1 < n_layers {
                let act = self.activation;
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            inputs.push(std::mem::replace(&mut cur, out));
        }
        Ok(Tape { inputs, output: cur })
    }

    /// Evaluates H at `x`.
    pub fn h_forward(&self, x: &ComplexImage) -> Result<ComplexImage> {
        let tape = self.forward_tape(x)?;
        ComplexImage::from_channels(self.shape.0, self.shape.1, &tape.output)
    }

    /// Backpropagates `v` through a recorded tape. Returns the input
    /// cotangent and, when requested, the parameter gradient.
    fn backward(&self, tape: &Tape, v: &ComplexImage, want_params: bool) -> (Vec<f64>, Option<WeightGradient>) {
        let (h, w) = self.shape;
        let mut grad = v.to_channels();
        let mut pg = want_params.then(|| WeightGradient::zeros_like(self));
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.inputs[idx];
            let s = layer.shape(h, w);
            if let Some(pg) = pg.as_mut() {
                conv_param_grad(&s, input, &grad, &mut pg.kernels[idx], &mut pg.biases[idx]);
            }
            let mut gin = vec![0.0; input.len()];
            conv_transpose(&s, &layer.kernel, &grad, &mut gin);
            if idx > 0 {
                let act = self.activation;
                gin.iter_mut().zip(input).for_each(|(g, &a)| *g *= act.derivative_from_output(a));
            }
            grad = gin;
        }
        (grad, pg)
    }

    /// `(dH/dx)^T v` at `x`.
    pub fn h_vjp_input(&self, x: &ComplexImage, v: &ComplexImage) -> Result<ComplexImage> {
        x.check_shape(v)?;
        let tape = self.forward_tape(x)?;
        let (g, _) = self.backward(&tape, v, false);
        ComplexImage::from_channels(self.shape.0, self.shape.1, &g)
    }

    /// `(dH/dw)^T v` at `(w, x)`.
    pub fn h_vjp_params(&self, x: &ComplexImage, v: &ComplexImage) -> Result<WeightGradient> {
        x.check_shape(v)?;
        let tape = self.forward_tape(x)?;
        let (_, pg) = self.backward(&tape, v, true);
        Ok(pg.expect("requested parameter gradient"))
    }

    /// Both VJPs from a single forward pass.
    pub fn h_vjp_both(&self, x: &ComplexImage, v: &ComplexImage) -> Result<(ComplexImage, WeightGradient)> {
        x.check_shape(v)?;
        let tape = self.forward_tape(x)?;
        let (g, pg) = self.backward(&tape, v, true);
        Ok((
            ComplexImage::from_channels(self.shape.0, self.shape.1, &g)?,
            pg.expect("requested parameter gradient"),
        ))
    }

    pub(crate) fn vjp_input_from_tape(&self, tape: &Tape, v: &ComplexImage) -> Result<ComplexImage> {
        let (g, _) = self.backward(tape, v, false);
        ComplexImage::from_channels(self.shape.0, self.shape.1, &g)
    }

    pub(crate) fn vjp_params_from_tape(&self, tape: &Tape, v: &ComplexImage) -> Result<WeightGradient> {
        let (_, pg) = self.backward(tape, v, true);
        Ok(pg.expect("requested parameter gradient"))
    }

    pub(crate) fn vjp_both_from_tape(&self, tape: &Tape, v: &ComplexImage) -> Result<(ComplexImage, WeightGradient)> {
        let (g, pg) = self.backward(tape, v, true);
        Ok((
            ComplexImage::from_channels(self.shape.0, self.shape.1, &g)?,
            pg.expect("requested parameter gradient"),
        ))
    }

    pub(crate) fn tape_output(&self, tape: &Tape) -> Result<ComplexImage> {
        ComplexImage::from_channels(self.shape.0, self.shape.1, &tape.output)
    }

    /// Number of `f64` values a forward tape retains, in units of complex
    /// images of the configured size (2 reals per pixel).
    pub fn activation_image_equivalents(&self) -> f64 {
        let (h, w) = self.shape;
        let floats: usize = self.layers.iter().map(|l| l.in_ch * h * w).sum::<usize>() + IO_CHANNELS * h * w;
        floats as f64 / (2 * h * w) as f64
    }

    /// Power iteration on one layer's linear convolution map, warm-started
    /// from `state`. Returns the estimate `||conv(v)||` and the updated vector.
    fn layer_power_iteration(&self, idx: usize, state: &[f64], iters: usize) -> (f64, Vec<f64>) {
        let (h, w) = self.shape;
        let layer = &self.layers[idx];
        let s = layer.shape(h, w);
        let mut v = state.to_vec();
        let n0 = norm(&v);
        if n0 == 0.0 {
            return (0.0, v);
        }
        v.iter_mut().for_each(|x| *x /= n0);
        let mut u = vec![0.0; layer.out_ch * h * w];
        for _ in 0..iters {
            conv_forward(&s, &layer.kernel, None, &v, &mut u);
            let mut next = vec![0.0; v.len()];
            conv_transpose(&s, &layer.kernel, &u, &mut next);
            let nn = norm(&next);
            if nn == 0.0 || !nn.is_finite() {
                return (0.0, v);
            }
            next.iter_mut().for_each(|x| *x /= nn);
            v = next;
        }
        conv_forward(&s, &layer.kernel, None, &v, &mut u);
        (norm(&u), v)
    }

    /// Per-layer operator-norm estimates, warm-started from the persisted vectors.
    pub fn layer_norms(&self, iters: usize) -> Vec<f64> {
        (0..self.layers.len())
            .map(|l| self.layer_power_iteration(l, &self.spectral_state[l], iters).0)
            .collect()
    }

    /// Rescales every layer whose operator-norm estimate exceeds
    /// `target^(1/L)` down to exactly that value. Compliant layers are left
    /// untouched. The refreshed power vectors are stored in the result.
    pub fn spectral_normalize(&self, target: f64, power_iters: usize) -> Self {
        let per_layer = target.powf(1.0 / self.layers.len() as f64);
        let mut out = self.clone();
        for l in 0..out.layers.len() {
            // Power iteration approaches sigma from below, so keep refining the
            // warm-started estimate until the rescaled layer stops exceeding the target.
            for _ in 0..SPECTRAL_REFINE_ROUNDS {
                let (sigma, v) = out.layer_power_iteration(l, &out.spectral_state[l], power_iters.max(1));
                out.spectral_state[l] = v;
                if sigma <= per_layer * (1.0 + 1e-9) {
                    break;
                }
                let f = per_layer / sigma;
                out.layers[l].kernel.iter_mut().for_each(|x| *x *= f);
            }
        }
        out
    }

    /// Product of per-layer operator-norm estimates; an upper bound on the
    /// Lipschitz constant of H when activation slopes are at most 1.
    pub fn global_lipschitz_bound(&self) -> f64 {
        self.layer_norms(BOUND_POWER_ITERS).iter().product()
    }
}

impl NetworkConfig {
    /// Convenience alias for [`NetworkWeights::init`].
    pub fn init_weights(&self, seed: u64) -> Result<NetworkWeights> {
        NetworkWeights::init(self, seed)
    }
}

/// Draws a seeded random network (fan-in scaled, no normalization); useful
/// for building unconstrained test fixtures.
pub fn random_unnormalized(cfg: &NetworkConfig, seed: u64) -> Result<NetworkWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NetworkWeights::zeros(cfg)?;
    let params: Vec<f64> = base
        .layers
        .iter()
        .flat_map(|l| {
            let std = (2.0 / (l.in_ch * l.k * l.k) as f64).sqrt();
            let mut v: Vec<f64> = (0..l.kernel.len()).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
            v.extend((0..l.bias.len()).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)));
            v
        })
        .collect();
    base.with_params(&params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NetworkConfig {
        NetworkConfig {
            num_layers: 5,
            channels: 6,
            kernel_size: 3,
            activation: Activation::Relu,
            image_shape: (6, 6),
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        assert!(c.validate().is_ok());
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        c.kernel_size = 3;
        c.num_layers = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_with_five_layers() {
        let a = NetworkWeights::init(&small_cfg(), 7).unwrap();
        let b = NetworkWeights::init(&small_cfg(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers().len(), 5);
        let g = a.global_lipschitz_bound();
        assert!(g <= 1.0 + 1e-4, "bound {g} norms {:?}", a.layer_norms(500));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let w = NetworkWeights::zeros(&small_cfg()).unwrap();
        let x = ComplexImage::from_fn(6, 6, |r, c| num_complex::Complex64::new(r as f64, c as f64));
        assert_eq!(w.h_forward(&x).unwrap().norm(), 0.0);
        assert_eq!(w.global_lipschitz_bound(), 0.0);
    }

    #[test]
    fn linear_layer_is_matrix_multiply() {
        let w = NetworkWeights::scaled_identity(0.3, (3, 4));
        let x = ComplexImage::from_fn(3, 4, |r, c| num_complex::Complex64::new(r as f64 - 1.0, c as f64 * 0.5));
        let y = w.h_forward(&x).unwrap();
        assert!(crate::linops::relative_error(&y, &x.scaled(0.3)) < 1e-15);
    }

    #[test]
    fn linear_vjp_is_transpose() {
        let m = [[1.0, 2.0], [-0.5, 0.25]];
        let w = NetworkWeights::linear_1x1(m, (2, 2));
        let x = ComplexImage::zeros(2, 2);
        let v = ComplexImage::from_fn(2, 2, |r, c| num_complex::Complex64::new(1.0 + r as f64, c as f64 - 2.0));
        let g = w.h_vjp_input(&x, &v).unwrap();
        for (gz, vz) in g.data().iter().zip(v.data()) {
            assert!((gz.re - (m[0][0] * vz.re + m[1][0] * vz.im)).abs() < 1e-15);
            assert!((gz.im - (m[0][1] * vz.re + m[1][1] * vz.im)).abs() < 1e-15);
        }
    }

    #[test]
    fn bias_gradient_is_spatial_sum() {
        let w = NetworkWeights::linear_1x1([[0.5, 0.1], [0.2, 0.3]], (3, 3));
        let x = ComplexImage::from_fn(3, 3, |r, c| num_complex::Complex64::new(r as f64, c as f64));
        let v = ComplexImage::from_fn(3, 3, |r, c| num_complex::Complex64::new((r * c) as f64, 1.0));
        let g = w.h_vjp_params(&x, &v).unwrap();
        let sum_re: f64 = v.data().iter().map(|z| z.re).sum();
        let sum_im: f64 = v.data().iter().map(|z| z.im).sum();
        assert!((g.biases[0][0] - sum_re).abs() < 1e-12);
        assert!((g.biases[0][1] - sum_im).abs() < 1e-12);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let w = NetworkWeights::init(&small_cfg(), 1).unwrap();
        let x = ComplexImage::from_fn(6, 6, |r, c| num_complex::Complex64::new((r + c) as f64 * 0.1, 0.2));
        let v = ComplexImage::zeros(6, 6);
        assert_eq!(w.h_vjp_input(&x, &v).unwrap().norm(), 0.0);
        assert_eq!(w.h_vjp_params(&x, &v).unwrap().norm(), 0.0);
    }

    #[test]
    fn spectral_normalize_halves_norm_two_layer() {
        let w = NetworkWeights::scaled_identity(2.0, (4, 4));
        let n = w.spectral_normalize(1.0, 20);
        assert!((n.layers()[0].kernel[0] - 1.0).abs() < 1e-12);
        assert!((n.layers()[0].kernel[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_normalize_is_idempotent_on_compliant_weights() {
        let w = NetworkWeights::init(&small_cfg(), 3).unwrap();
        let n = w.spectral_normalize(4.0, 50);
        for (a, b) in w.flatten().iter().zip(n.flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_rule_for_two_linear_layers() {
        let l1 = ConvLayer::new(2, 2, 1, vec![0.5, 0.0, 0.0, 0.5], vec![0.0; 2]).unwrap();
        let l2 = ConvLayer::new(2, 2, 1, vec![0.8, 0.0, 0.0, -0.8], vec![0.0; 2]).unwrap();
        let w = NetworkWeights::from_layers(vec![l1, l2], Activation::Identity, (3, 3)).unwrap();
        assert!((w.global_lipschitz_bound() - 0.4).abs() < 1e-10);
    }

    #[test]
    fn params_round_trip() {
        let w = NetworkWeights::init(&small_cfg(), 5).unwrap();
        let p = w.flatten();
        assert_eq!(w.with_params(&p).unwrap(), w);
        assert!(w.with_params(&p[1..]).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let w = NetworkWeights::init(&small_cfg(), 5).unwrap();
        assert!(w.h_forward(&ComplexImage::zeros(5, 6)).is_err());
    }
}

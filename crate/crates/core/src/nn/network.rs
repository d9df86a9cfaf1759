use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    /// Valid (unpadded) convolution over `[channels, height, width]` input.
    Conv2d { in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize, stride_h: usize, stride_w: usize },
    Relu,
}

impl Layer {
    fn has_params(&self) -> bool {
        !matches!(self, Layer::Relu)
    }

    fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, .. } => {
                Some((vec![out_channels, in_channels, kernel_h, kernel_w], vec![out_channels]))
            }
            Layer::Relu => None,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            Layer::Dense { inputs, outputs } => (inputs, outputs),
            Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, .. } => {
                (in_channels * kernel_h * kernel_w, out_channels * kernel_h * kernel_w)
            }
            Layer::Relu => (0, 0),
        }
    }

    fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |detail: String| Error::Shape { layer: index, detail };
        match *self {
            Layer::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(mismatch(format!("dense layer expects {inputs} inputs, got shape {input:?}")));
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride_h, stride_w } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(mismatch(format!("conv layer expects [{in_channels}, h, w], got {input:?}")));
                }
                let (oh, ow) = conv_output_geometry(input[1], input[2], kernel_h, kernel_w, stride_h, stride_w)
                    .map_err(|e| mismatch(e.to_string()))?;
                Ok(vec![out_channels, oh, ow])
            }
            Layer::Relu => Ok(input.to_vec()),
        }
    }
}

/// Output size of a valid convolution: `floor((in − k) / s) + 1` per axis.
pub fn conv_output_geometry(
    in_h: usize,
    in_w: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride_h: usize,
    stride_w: usize,
) -> Result<(usize, usize)> {
    if kernel_h == 0 || kernel_w == 0 || stride_h == 0 || stride_w == 0 {
        return Err(Error::Config("kernel and stride must be positive".into()));
    }
    if kernel_h > in_h || kernel_w > in_w {
        return Err(Error::Config(format!("kernel {kernel_h}x{kernel_w} larger than input {in_h}x{in_w}")));
    }
    Ok(((in_h - kernel_h) / stride_h + 1, (in_w - kernel_w) / stride_w + 1))
}

/// Layer inputs recorded by [`Network::forward`], consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    version: u64,
    inputs: Vec<Tensor>,
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            params: net.params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            input: Tensor::zeros(&net.input_shape),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_scaled(b, 1.0);
        }
        self.input.add_scaled(&other.input, 1.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.params.iter_mut().for_each(|p| p.scale(factor));
        self.input.scale(factor);
    }
}

/// Feed-forward stack of dense, conv and relu layers. Equality compares
/// shape, layers and parameters.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers && self.params == other.params
    }
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_shape: &[usize], layers: Vec<Layer>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(input_shape, layers)?;
        let mut k = 0;
        for layer in &net.layers {
            if layer.has_params() {
                let (fan_in, fan_out) = layer.fans();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in net.params[k].data_mut() {
                    *w = rng.random_range(-limit..=limit);
                }
                k += 2;
            }
        }
        Ok(net)
    }

    pub fn zeros(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut params = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(i, &shape)?;
            if let Some((w, b)) = layer.param_shapes() {
                params.push(Tensor::zeros(&w));
                params.push(Tensor::zeros(&b));
            }
        }
        Ok(Network { input_shape: input_shape.to_vec(), layers, params, version: next_version() })
    }

    /// Rebuilds a network from stored parameters, checking every shape.
    pub fn from_parts(input_shape: &[usize], layers: Vec<Layer>, params: Vec<Tensor>) -> Result<Self> {
        let mut net = Self::zeros(input_shape, layers)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension { expected: net.params.len(), got: params.len() });
        }
        for (slot, p) in net.params.iter_mut().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::Dimension { expected: slot.len(), got: p.len() });
            }
            *slot = p;
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for (i, l) in self.layers.iter().enumerate() {
            shape = l.output_shape(i, &shape).expect("validated at construction");
        }
        shape
    }

    /// Mutable access to the parameters. Invalidates outstanding traces.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version = next_version();
        &mut self.params
    }

    /// Rounds every parameter to the nearest `f32`, the precision of weight files.
    pub fn round_to_f32(&mut self) {
        for p in self.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let ok = if matches!(self.layers.first(), Some(Layer::Dense { .. })) {
            input.len() == self.input_shape.iter().product::<usize>()
        } else {
            input.shape() == self.input_shape.as_slice()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape { layer: 0, detail: format!("expected input {:?}, got {:?}", self.input_shape, input.shape()) })
        }
    }

    /// Output only, without recording a trace.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut k = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            x = self.apply(i, layer, &x, k)?;
            if layer.has_params() {
                k += 2;
            }
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        let mut k = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let y = self.apply(i, layer, &x, k)?;
            inputs.push(x);
            x = y;
            if layer.has_params() {
                k += 2;
            }
        }
        Ok((x, Trace { version: self.version, inputs }))
    }

    fn apply(&self, index: usize, layer: &Layer, x: &Tensor, k: usize) -> Result<Tensor> {
        let out_shape = layer.output_shape(index, x.shape())?;
        let mut out = Tensor::zeros(&out_shape);
        match *layer {
            Layer::Dense { inputs, outputs } => {
                let (w, b) = (self.params[k].data(), self.params[k + 1].data());
                let xin = x.data();
                for (o, y) in out.data_mut().iter_mut().enumerate() {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    *y = b[o] + row.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>();
                }
                debug_assert_eq!(out.len(), outputs);
            }
            Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride_h, stride_w } => {
                let (ih, iw) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let (w, b) = (self.params[k].data(), self.params[k + 1].data());
                let xin = x.data();
                let od = out.data_mut();
                for o in 0..out_channels {
                    let plane = &mut od[o * oh * ow..(o + 1) * oh * ow];
                    plane.iter_mut().for_each(|v| *v = b[o]);
                    for c in 0..in_channels {
                        let src = &xin[c * ih * iw..(c + 1) * ih * iw];
                        for i in 0..kernel_h {
                            for j in 0..kernel_w {
                                let wv = w[((o * in_channels + c) * kernel_h + i) * kernel_w + j];
                                if wv == 0.0 {
                                    continue;
                                }
                                for y in 0..oh {
                                    let row = &src[(y * stride_h + i) * iw + j..];
                                    let dst = &mut plane[y * ow..(y + 1) * ow];
                                    for (xo, d) in dst.iter_mut().enumerate() {
                                        *d += wv * row[xo * stride_w];
                                    }
                                }
                            }
                        }
                    }
                }
                debug_assert_eq!(ih * iw * in_channels, xin.len());
            }
            Layer::Relu => {
                for (y, v) in out.data_mut().iter_mut().zip(x.data()) {
                    *y = v.max(0.0);
                }
            }
        }
        Ok(out)
    }

    /// Back-propagates `output_grad` through the recorded trace.
    pub fn backward(&self, trace: &Trace, output_grad: &Tensor) -> Result<Gradients> {
        if trace.version != self.version || trace.inputs.len() != self.layers.len() {
            return Err(Error::StaleTrace(format!(
                "trace recorded at version {} with {} layers, network is at version {} with {} layers",
                trace.version,
                trace.inputs.len(),
                self.version,
                self.layers.len()
            )));
        }
        let out_shape = self.output_shape();
        if output_grad.len() != out_shape.iter().product::<usize>() {
            return Err(Error::Shape {
                layer: self.layers.len().saturating_sub(1),
                detail: format!("output gradient has {} values, output shape is {:?}", output_grad.len(), out_shape),
            });
        }

        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut g = output_grad.clone();
        let mut k = self.params.len();
        for (layer, x) in self.layers.iter().zip(&trace.inputs).rev() {
            let mut gin = Tensor::zeros(x.shape());
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    k -= 2;
                    let w = self.params[k].data();
                    let xin = x.data();
                    let (gw, rest) = grads[k..].split_at_mut(1);
                    let (gw, gb) = (gw[0].data_mut(), rest[0].data_mut());
                    let gi = gin.data_mut();
                    for o in 0..outputs {
                        let go = g.data()[o];
                        gb[o] += go;
                        if go == 0.0 {
                            continue;
                        }
                        let row = &w[o * inputs..(o + 1) * inputs];
                        let grow = &mut gw[o * inputs..(o + 1) * inputs];
                        for i in 0..inputs {
                            grow[i] += go * xin[i];
                            gi[i] += go * row[i];
                        }
                    }
                }
                Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride_h, stride_w } => {
                    k -= 2;
                    let (ih, iw) = (x.shape()[1], x.shape()[2]);
                    let (oh, ow) = conv_output_geometry(ih, iw, kernel_h, kernel_w, stride_h, stride_w)?;
                    let w = self.params[k].data();
                    let xin = x.data();
                    let (gw, rest) = grads[k..].split_at_mut(1);
                    let (gw, gb) = (gw[0].data_mut(), rest[0].data_mut());
                    let gi = gin.data_mut();
                    let gd = g.data();
                    for o in 0..out_channels {
                        let plane = &gd[o * oh * ow..(o + 1) * oh * ow];
                        gb[o] += plane.iter().sum::<f64>();
                        for c in 0..in_channels {
                            let src = &xin[c * ih * iw..(c + 1) * ih * iw];
                            let dsrc = &mut gi[c * ih * iw..(c + 1) * ih * iw];
                            for i in 0..kernel_h {
                                for j in 0..kernel_w {
                                    let widx = ((o * in_channels + c) * kernel_h + i) * kernel_w + j;
                                    let wv = w[widx];
                                    let mut acc = 0.0;
                                    for y in 0..oh {
                                        let base = (y * stride_h + i) * iw + j;
                                        let grow = &plane[y * ow..(y + 1) * ow];
                                        for (xo, &gv) in grow.iter().enumerate() {
                                            let idx = base + xo * stride_w;
                                            acc += gv * src[idx];
                                            dsrc[idx] += gv * wv;
                                        }
                                    }
                                    gw[widx] += acc;
                                }
                            }
                        }
                    }
                }
                Layer::Relu => {
                    for ((gi, &go), &v) in gin.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *gi = if v > 0.0 { go } else { 0.0 };
                    }
                }
            }
            g = gin;
        }
        let input = g.reshape(self.input_shape.clone())?;
        Ok(Gradients { params: grads, input })
    }

    /// `p ← p − lr·g` for every parameter. Refuses non-finite gradients.
    pub fn sgd_step(&mut self, grads: &[Tensor], learning_rate: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: grads.len() });
        }
        for (p, g) in self.params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension { expected: p.len(), got: g.len() });
            }
            if !g.is_finite() {
                return Err(Error::Divergence("non-finite gradient".into()));
            }
        }
        if learning_rate == 0.0 {
            return Ok(());
        }
        for (p, g) in self.params_mut().iter_mut().zip(grads) {
            p.add_scaled(g, -learning_rate);
        }
        Ok(())
    }
}

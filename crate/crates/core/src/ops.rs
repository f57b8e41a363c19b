//! Layer primitives: 2-D convolution, ReLU, unit-weight transposed
//! convolution, residual block, global average pooling, linear, sigmoid.
//!
//! Every forward has a hand-written backward. Convolution is
//! cross-correlation (no kernel flip), the usual deep-learning convention.
//! All spatial tensors are laid out `[C, H, W]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution parameters: `weights [out_c, in_c, kh, kw]`, `bias [out_c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::InvalidSpec(format!(
                "conv weights must be rank 4, got shape {:?}",
                weights.shape()
            )));
        }
        if bias.rank() != 1 || bias.shape()[0] != weights.shape()[0] {
            return Err(Error::ShapeMismatch {
                context: "conv bias vs out_channels",
                left: bias.shape().to_vec(),
                right: vec![weights.shape()[0]],
            });
        }
        if stride == 0 || weights.shape()[2] == 0 || weights.shape()[3] == 0 {
            return Err(Error::InvalidSpec("conv stride and kernel must be >= 1".into()));
        }
        Ok(ConvParams {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

/// Output extent of a conv along one spatial dimension, if positive.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let (c_in, h, w) = spatial3(x, "conv2d input")?;
    if c_in != p.in_channels() {
        return Err(Error::ShapeMismatch {
            context: "conv2d input channels vs weights",
            left: vec![c_in],
            right: vec![p.in_channels()],
        });
    }
    let (kh, kw) = p.kernel();
    let (h_out, w_out) = match (
        conv_out_extent(h, kh, p.stride, p.padding),
        conv_out_extent(w, kw, p.stride, p.padding),
    ) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => {
            return Err(Error::InvalidSpec(format!(
                "conv over {h}x{w} with kernel {kh}x{kw} stride {} pad {} has nonpositive output",
                p.stride, p.padding
            )))
        }
    };
    let c_out = p.out_channels();
    let mut out = Tensor::zeros(&[c_out, h_out, w_out]);
    let xd = x.data();
    let wd = p.weights.data();
    let bd = p.bias.data();
    let od = out.data_mut();

    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bd[oc];
                for ic in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += xd[(ic * h + iy as usize) * w + ix as usize]
                                * wd[((oc * c_in + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                od[(oc * h_out + oy) * w_out + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of a conv layer given the upstream gradient of its output.
pub fn conv2d_backward(x: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, h, w) = spatial3(x, "conv2d input")?;
    let (c_out_g, h_out, w_out) = spatial3(grad_out, "conv2d grad_out")?;
    let expect = conv2d_output_shape(x, p)?;
    if [c_out_g, h_out, w_out] != expect[..] {
        return Err(Error::ShapeMismatch {
            context: "conv2d grad_out vs forward output",
            left: grad_out.shape().to_vec(),
            right: expect,
        });
    }
    let (kh, kw) = p.kernel();
    let c_out = p.out_channels();
    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(p.weights.shape());
    let mut grad_b = Tensor::zeros(p.bias.shape());
    let xd = x.data();
    let wd = p.weights.data();
    let gd = grad_out.data();
    let gxd = grad_x.data_mut();

    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let g = gd[(oc * h_out + oy) * w_out + ox];
                if g == 0.0 {
                    continue;
                }
                grad_b.data_mut()[oc] += g;
                for ic in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = (ic * h + iy as usize) * w + ix as usize;
                            let wi = ((oc * c_in + ic) * kh + ky) * kw + kx;
                            grad_w.data_mut()[wi] += g * xd[xi];
                            gxd[xi] += g * wd[wi];
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

/// Shape a conv forward would produce for this input.
pub fn conv2d_output_shape(x: &Tensor, p: &ConvParams) -> Result<Vec<usize>> {
    let (_, h, w) = spatial3(x, "conv2d input")?;
    let (kh, kw) = p.kernel();
    match (
        conv_out_extent(h, kh, p.stride, p.padding),
        conv_out_extent(w, kw, p.stride, p.padding),
    ) {
        (Some(a), Some(b)) if a > 0 && b > 0 => Ok(vec![p.out_channels(), a, b]),
        _ => Err(Error::InvalidSpec("nonpositive conv output extent".into())),
    }
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            context: "relu_backward",
            left: x.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data)
}

/// Geometry of the unit-weight transposed convolution that projects a feature
/// map back to the resolution of the layer input it came from.
///
/// `output_shape` is always the recorded input shape of the inverted conv
/// layer, never the bare inversion formula: when the conv lost pixels to
/// floor division the scatter windows simply don't cover the lost border,
/// and writes past the declared bounds are clipped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeconvGeometry {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub output_shape: (usize, usize),
}

impl DeconvGeometry {
    /// Check that `output_shape` is a size the conv with this kernel/stride/
    /// padding could have consumed to produce an `in_h x in_w` map.
    pub fn validate_for_input(&self, in_h: usize, in_w: usize) -> Result<()> {
        let check = |extent: usize, k: usize, out: usize| -> bool {
            let base = (extent as isize - 1) * self.stride as isize + k as isize
                - 2 * self.padding as isize;
            let out = out as isize;
            out >= base && out < base + self.stride as isize && out >= 1
        };
        let (kh, kw) = self.kernel;
        if self.stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::Geometry("stride and kernel must be >= 1".into()));
        }
        if !check(in_h, kh, self.output_shape.0) || !check(in_w, kw, self.output_shape.1) {
            return Err(Error::Geometry(format!(
                "{}x{} input with kernel {kh}x{kw} stride {} pad {} cannot map to {}x{}",
                in_h, in_w, self.stride, self.padding, self.output_shape.0, self.output_shape.1
            )));
        }
        Ok(())
    }
}

/// Transposed convolution with an all-ones kernel and zero bias: every input
/// value is scatter-added into its stride-spaced output window.
pub fn deconv_unit_forward(x: &Tensor, g: &DeconvGeometry) -> Result<Tensor> {
    let (c, h, w) = spatial3(x, "deconv input")?;
    if c != 1 {
        return Err(Error::ShapeMismatch {
            context: "deconv input must be single-channel",
            left: x.shape().to_vec(),
            right: vec![1, h, w],
        });
    }
    g.validate_for_input(h, w)?;
    let (h_out, w_out) = g.output_shape;
    let (kh, kw) = g.kernel;
    let mut out = Tensor::zeros(&[1, h_out, w_out]);
    let xd = x.data();
    let od = out.data_mut();
    for iy in 0..h {
        for ix in 0..w {
            let v = xd[iy * w + ix];
            if v == 0.0 {
                continue;
            }
            let oy0 = (iy * g.stride) as isize - g.padding as isize;
            let ox0 = (ix * g.stride) as isize - g.padding as isize;
            for ky in 0..kh {
                let oy = oy0 + ky as isize;
                if oy < 0 || oy >= h_out as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ox = ox0 + kx as isize;
                    if ox < 0 || ox >= w_out as isize {
                        continue;
                    }
                    od[oy as usize * w_out + ox as usize] += v;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`deconv_unit_forward`]: gather each input position's window.
pub fn deconv_unit_backward(g: &DeconvGeometry, grad_out: &Tensor, input_shape: (usize, usize)) -> Result<Tensor> {
    let (c, h_out, w_out) = spatial3(grad_out, "deconv grad_out")?;
    if c != 1 || (h_out, w_out) != g.output_shape {
        return Err(Error::ShapeMismatch {
            context: "deconv grad_out vs geometry output_shape",
            left: grad_out.shape().to_vec(),
            right: vec![1, g.output_shape.0, g.output_shape.1],
        });
    }
    let (h, w) = input_shape;
    g.validate_for_input(h, w)?;
    let (kh, kw) = g.kernel;
    let mut grad_x = Tensor::zeros(&[1, h, w]);
    let gd = grad_out.data();
    let gxd = grad_x.data_mut();
    for iy in 0..h {
        for ix in 0..w {
            let oy0 = (iy * g.stride) as isize - g.padding as isize;
            let ox0 = (ix * g.stride) as isize - g.padding as isize;
            let mut acc = 0.0;
            for ky in 0..kh {
                let oy = oy0 + ky as isize;
                if oy < 0 || oy >= h_out as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ox = ox0 + kx as isize;
                    if ox < 0 || ox >= w_out as isize {
                        continue;
                    }
                    acc += gd[oy as usize * w_out + ox as usize];
                }
            }
            gxd[iy * w + ix] = acc;
        }
    }
    Ok(grad_x)
}

/// conv-ReLU-conv plus identity skip, closed by a final ReLU. Channel count
/// and spatial extent are preserved (stride 1, "same" padding, odd kernel).
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlockParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl ResBlockParams {
    pub fn new(conv1: ConvParams, conv2: ConvParams) -> Result<Self> {
        for (name, c) in [("conv1", &conv1), ("conv2", &conv2)] {
            let (kh, kw) = c.kernel();
            if kh != kw || kh % 2 == 0 {
                return Err(Error::InvalidSpec(format!(
                    "residual {name} kernel must be square and odd, got {kh}x{kw}"
                )));
            }
            if c.stride != 1 || c.padding != (kh - 1) / 2 {
                return Err(Error::InvalidSpec(format!(
                    "residual {name} must use stride 1 and same-padding"
                )));
            }
            if c.in_channels() != c.out_channels() {
                return Err(Error::ShapeMismatch {
                    context: "residual conv must preserve channels",
                    left: vec![c.in_channels()],
                    right: vec![c.out_channels()],
                });
            }
        }
        if conv1.out_channels() != conv2.in_channels() {
            return Err(Error::ShapeMismatch {
                context: "residual conv1 out vs conv2 in",
                left: vec![conv1.out_channels()],
                right: vec![conv2.in_channels()],
            });
        }
        Ok(ResBlockParams { conv1, conv2 })
    }

    pub fn channels(&self) -> usize {
        self.conv1.in_channels()
    }
}

/// Intermediate activations a residual block backward pass needs.
pub struct ResBlockCache {
    pub pre1: Tensor,
    pub act1: Tensor,
    pub pre2_plus_skip: Tensor,
    pub output: Tensor,
}

pub fn residual_block_forward(x: &Tensor, p: &ResBlockParams) -> Result<Tensor> {
    Ok(residual_block_forward_cached(x, p)?.output)
}

pub fn residual_block_forward_cached(x: &Tensor, p: &ResBlockParams) -> Result<ResBlockCache> {
    let (c, _, _) = spatial3(x, "residual input")?;
    if c != p.channels() {
        return Err(Error::ShapeMismatch {
            context: "residual input channels",
            left: vec![c],
            right: vec![p.channels()],
        });
    }
    let pre1 = conv2d_forward(x, &p.conv1)?;
    let act1 = relu_forward(&pre1);
    let pre2 = conv2d_forward(&act1, &p.conv2)?;
    let pre2_plus_skip = pre2.add(x)?;
    let output = relu_forward(&pre2_plus_skip);
    Ok(ResBlockCache {
        pre1,
        act1,
        pre2_plus_skip,
        output,
    })
}

/// Gradients of a residual block. Intermediates come from the forward cache.
pub struct ResBlockGrads {
    pub input: Tensor,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
}

pub fn residual_block_backward(
    x: &Tensor,
    p: &ResBlockParams,
    cache: &ResBlockCache,
    grad_out: &Tensor,
) -> Result<ResBlockGrads> {
    let g = relu_backward(&cache.pre2_plus_skip, grad_out)?;
    let (g_act1, conv2_w, conv2_b) = conv2d_backward(&cache.act1, &p.conv2, &g)?;
    let g_pre1 = relu_backward(&cache.pre1, &g_act1)?;
    let (g_x_main, conv1_w, conv1_b) = conv2d_backward(x, &p.conv1, &g_pre1)?;
    // Skip connection routes the post-ReLU gradient straight to the input.
    let input = g_x_main.add(&g)?;
    Ok(ResBlockGrads {
        input,
        conv1_w,
        conv1_b,
        conv2_w,
        conv2_b,
    })
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = spatial3(x, "global_avg_pool input")?;
    let xd = x.data();
    let mut out = vec![0.0; c];
    for (ci, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for v in &xd[ci * h * w..(ci + 1) * h * w] {
            acc += v;
        }
        *o = acc / (h * w) as f64;
    }
    Tensor::new(&[c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if input_shape.len() != 3 || grad_out.shape() != [input_shape[0]] {
        return Err(Error::ShapeMismatch {
            context: "global_avg_pool_backward",
            left: grad_out.shape().to_vec(),
            right: input_shape.to_vec(),
        });
    }
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut grad = Tensor::zeros(input_shape);
    let scale = 1.0 / (h * w) as f64;
    for ci in 0..c {
        let g = grad_out.data()[ci] * scale;
        for v in &mut grad.data_mut()[ci * h * w..(ci + 1) * h * w] {
            *v = g;
        }
    }
    Ok(grad)
}

/// Fully connected layer: `w [out, in]`, `b [out]`, input rank 1.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (out_f, in_f) = (w.shape()[0], w.shape()[1]);
    if x.shape() != [in_f] || b.shape() != [out_f] {
        return Err(Error::ShapeMismatch {
            context: "linear input/weights",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; out_f];
    for (o, ov) in out.iter_mut().enumerate() {
        let mut acc = b.data()[o];
        for i in 0..in_f {
            acc += w.data()[o * in_f + i] * x.data()[i];
        }
        *ov = acc;
    }
    Tensor::new(&[out_f], out)
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (out_f, in_f) = (w.shape()[0], w.shape()[1]);
    if x.shape() != [in_f] || grad_out.shape() != [out_f] {
        return Err(Error::ShapeMismatch {
            context: "linear_backward",
            left: grad_out.shape().to_vec(),
            right: vec![out_f],
        });
    }
    let mut grad_x = Tensor::zeros(&[in_f]);
    let mut grad_w = Tensor::zeros(&[out_f, in_f]);
    let mut grad_b = Tensor::zeros(&[out_f]);
    for o in 0..out_f {
        let g = grad_out.data()[o];
        grad_b.data_mut()[o] = g;
        for i in 0..in_f {
            grad_w.data_mut()[o * in_f + i] = g * x.data()[i];
            grad_x.data_mut()[i] += g * w.data()[o * in_f + i];
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Backward through sigmoid given its own output.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            context: "sigmoid_backward",
            left: output.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::new(output.shape(), data)
}

fn spatial3(x: &Tensor, context: &'static str) -> Result<(usize, usize, usize)> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context: "expected rank-3 [C,H,W] tensor",
            left: x.shape().to_vec(),
            right: vec![3],
        });
    }
    let _ = context;
    Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
}

//! Network construction, the trace-collecting forward pass, backprop through
//! the whole objective (classification plus mask penalty), and checkpoints.

use crate::error::{Error, Result};
use crate::losses::{
    bce_multilabel_grad, full_focus_grad, half_focus_grad, total_loss, FocusMode, LossValue,
};
use crate::ops::{
    conv2d_backward, conv2d_forward, conv_out_extent, global_avg_pool, global_avg_pool_backward,
    linear, linear_backward, relu_backward, relu_forward, residual_block_backward,
    residual_block_forward_cached, sigmoid, sigmoid_backward, ConvParams, DeconvGeometry,
    ResBlockCache, ResBlockParams,
};
use crate::rng::Rng;
use crate::saliency::{self, ForwardTrace, TraceEntry, VisualizationMask};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

/// Declarative layer descriptor. Every `Conv` must be directly followed by
/// `Relu`; the network must end with exactly `GlobalAvgPool, Linear, Sigmoid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    ResBlock {
        kernel: usize,
    },
    GlobalAvgPool,
    Linear {
        out_features: usize,
    },
    Sigmoid,
}

/// Declarative network description: input shape, layer list, class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

/// Shape of the value flowing between layers during validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Spatial(usize, usize, usize),
    Flat(usize),
}

impl NetworkSpec {
    /// Static shape check. Returns the per-layer input stages on success.
    fn stages(&self) -> Result<Vec<Stage>> {
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidSpec("input extents must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidSpec("num_classes must be positive".into()));
        }
        let n = self.layers.len();
        if n < 3 {
            return Err(Error::InvalidSpec(
                "network must end with global pool, linear, sigmoid".into(),
            ));
        }
        let tail_ok = self.layers[n - 3] == LayerSpec::GlobalAvgPool
            && matches!(self.layers[n - 2], LayerSpec::Linear { .. })
            && self.layers[n - 1] == LayerSpec::Sigmoid;
        if !tail_ok {
            return Err(Error::InvalidSpec(
                "network must end with global pool, linear, sigmoid".into(),
            ));
        }
        let body = &self.layers[..n - 3];
        if !body
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::ResBlock { .. }))
        {
            return Err(Error::InvalidSpec(
                "network needs at least one conv or residual block".into(),
            ));
        }

        let mut stages = Vec::with_capacity(n);
        let mut cur = Stage::Spatial(c, h, w);
        for (i, layer) in self.layers.iter().enumerate() {
            stages.push(cur);
            cur = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let Stage::Spatial(_, h, w) = cur else {
                        return Err(Error::InvalidSpec(format!("layer {i}: conv after pooling")));
                    };
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: conv extents must be positive"
                        )));
                    }
                    if !matches!(self.layers.get(i + 1), Some(LayerSpec::Relu)) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: conv must be followed by relu"
                        )));
                    }
                    let oh = conv_out_extent(h, kernel, stride, padding).unwrap_or(0);
                    let ow = conv_out_extent(w, kernel, stride, padding).unwrap_or(0);
                    if oh == 0 || ow == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: conv output collapses to zero on {h}x{w} input"
                        )));
                    }
                    Stage::Spatial(out_channels, oh, ow)
                }
                LayerSpec::Relu => {
                    if i == 0 || !matches!(self.layers[i - 1], LayerSpec::Conv { .. }) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: relu only directly after conv"
                        )));
                    }
                    cur
                }
                LayerSpec::ResBlock { kernel } => {
                    let Stage::Spatial(..) = cur else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: residual block after pooling"
                        )));
                    };
                    if kernel == 0 || kernel % 2 == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: residual kernel must be odd"
                        )));
                    }
                    cur
                }
                LayerSpec::GlobalAvgPool => {
                    if i != n - 3 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: global pool allowed only in the tail"
                        )));
                    }
                    let Stage::Spatial(c, _, _) = cur else {
                        return Err(Error::InvalidSpec(format!("layer {i}: double pooling")));
                    };
                    Stage::Flat(c)
                }
                LayerSpec::Linear { out_features } => {
                    if i != n - 2 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: linear allowed only in the tail"
                        )));
                    }
                    let Stage::Flat(_) = cur else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: linear before pooling"
                        )));
                    };
                    if out_features != self.num_classes {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: linear outputs {out_features}, expected {} classes",
                            self.num_classes
                        )));
                    }
                    Stage::Flat(out_features)
                }
                LayerSpec::Sigmoid => {
                    if i != n - 1 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: sigmoid allowed only in the tail"
                        )));
                    }
                    cur
                }
            };
        }
        Ok(stages)
    }

    pub fn validate(&self) -> Result<()> {
        self.stages().map(|_| ())
    }

    /// Line-oriented text form, also used inside checkpoints.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (c, h, w) = self.input_shape;
        out.push_str(&format!("input {c} {h} {w}\n"));
        out.push_str(&format!("classes {}\n", self.num_classes));
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => out.push_str(&format!("conv {out_channels} {kernel} {stride} {padding}\n")),
                LayerSpec::Relu => out.push_str("relu\n"),
                LayerSpec::ResBlock { kernel } => out.push_str(&format!("resblock {kernel}\n")),
                LayerSpec::GlobalAvgPool => out.push_str("gap\n"),
                LayerSpec::Linear { out_features } => {
                    out.push_str(&format!("linear {out_features}\n"))
                }
                LayerSpec::Sigmoid => out.push_str("sigmoid\n"),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<NetworkSpec> {
        let mut input_shape = None;
        let mut num_classes = None;
        let mut layers = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap();
            let mut ints = || -> Result<Vec<usize>> {
                parts
                    .by_ref()
                    .map(|t| {
                        t.parse::<usize>().map_err(|_| {
                            Error::Format(format!("spec line {}: bad integer '{t}'", ln + 1))
                        })
                    })
                    .collect()
            };
            match word {
                "input" => {
                    let v = ints()?;
                    if v.len() != 3 {
                        return Err(Error::Format(format!(
                            "spec line {}: input wants C H W",
                            ln + 1
                        )));
                    }
                    input_shape = Some((v[0], v[1], v[2]));
                }
                "classes" => {
                    let v = ints()?;
                    if v.len() != 1 {
                        return Err(Error::Format(format!(
                            "spec line {}: classes wants one integer",
                            ln + 1
                        )));
                    }
                    num_classes = Some(v[0]);
                }
                "conv" => {
                    let v = ints()?;
                    if v.len() != 4 {
                        return Err(Error::Format(format!(
                            "spec line {}: conv wants OUT K STRIDE PAD",
                            ln + 1
                        )));
                    }
                    layers.push(LayerSpec::Conv {
                        out_channels: v[0],
                        kernel: v[1],
                        stride: v[2],
                        padding: v[3],
                    });
                }
                "relu" => layers.push(LayerSpec::Relu),
                "resblock" => {
                    let v = ints()?;
                    if v.len() != 1 {
                        return Err(Error::Format(format!(
                            "spec line {}: resblock wants K",
                            ln + 1
                        )));
                    }
                    layers.push(LayerSpec::ResBlock { kernel: v[0] });
                }
                "gap" => layers.push(LayerSpec::GlobalAvgPool),
                "linear" => {
                    let v = ints()?;
                    if v.len() != 1 {
                        return Err(Error::Format(format!(
                            "spec line {}: linear wants OUT",
                            ln + 1
                        )));
                    }
                    layers.push(LayerSpec::Linear { out_features: v[0] });
                }
                "sigmoid" => layers.push(LayerSpec::Sigmoid),
                other => {
                    return Err(Error::Format(format!(
                        "spec line {}: unknown layer '{other}'",
                        ln + 1
                    )))
                }
            }
        }
        let spec = NetworkSpec {
            input_shape: input_shape
                .ok_or_else(|| Error::Format("spec missing 'input' line".into()))?,
            layers,
            num_classes: num_classes
                .ok_or_else(|| Error::Format("spec missing 'classes' line".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Instantiated parameters of one layer.
#[derive(Clone, Debug)]
enum LayerParams {
    Conv(ConvParams),
    Res(ResBlockParams),
    Linear { weight: Tensor, bias: Tensor },
    Stateless,
}

/// A built network: spec, parameters, and the seed they were drawn from.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<LayerParams>,
    rng_seed: u64,
}

fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-bound, bound)).collect()).unwrap()
}

impl Network {
    /// Instantiate `spec` with Glorot-uniform weights and zero biases,
    /// deterministically in `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Network> {
        let stages = spec.stages()?;
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, stage) in spec.layers.iter().zip(&stages) {
            let params = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let Stage::Spatial(c, _, _) = *stage else { unreachable!() };
                    let fan_in = c * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    let weights = glorot(&mut rng, &[out_channels, c, kernel, kernel], fan_in, fan_out);
                    LayerParams::Conv(ConvParams::new(
                        weights,
                        Tensor::zeros(&[out_channels]),
                        stride,
                        padding,
                    )?)
                }
                LayerSpec::ResBlock { kernel } => {
                    let Stage::Spatial(c, _, _) = *stage else { unreachable!() };
                    let fan = c * kernel * kernel;
                    let pad = (kernel - 1) / 2;
                    let mut conv = || -> Result<ConvParams> {
                        let w = glorot(&mut rng, &[c, c, kernel, kernel], fan, fan);
                        ConvParams::new(w, Tensor::zeros(&[c]), 1, pad)
                    };
                    LayerParams::Res(ResBlockParams::new(conv()?, conv()?)?)
                }
                LayerSpec::Linear { out_features } => {
                    let Stage::Flat(in_features) = *stage else { unreachable!() };
                    let weight =
                        glorot(&mut rng, &[out_features, in_features], in_features, out_features);
                    LayerParams::Linear {
                        weight,
                        bias: Tensor::zeros(&[out_features]),
                    }
                }
                _ => LayerParams::Stateless,
            };
            layers.push(params);
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
            rng_seed: seed,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Parameter tensors with stable names, in declaration order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Conv(p) => {
                    out.push((format!("layer{i}.weight"), &p.weights));
                    out.push((format!("layer{i}.bias"), &p.bias));
                }
                LayerParams::Res(p) => {
                    out.push((format!("layer{i}.conv1.weight"), &p.conv1.weights));
                    out.push((format!("layer{i}.conv1.bias"), &p.conv1.bias));
                    out.push((format!("layer{i}.conv2.weight"), &p.conv2.weights));
                    out.push((format!("layer{i}.conv2.bias"), &p.conv2.bias));
                }
                LayerParams::Linear { weight, bias } => {
                    out.push((format!("layer{i}.weight"), weight));
                    out.push((format!("layer{i}.bias"), bias));
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    /// Mutable parameter tensors in the same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Conv(p) => {
                    out.push(&mut p.weights);
                    out.push(&mut p.bias);
                }
                LayerParams::Res(p) => {
                    out.push(&mut p.conv1.weights);
                    out.push(&mut p.conv1.bias);
                    out.push(&mut p.conv2.weights);
                    out.push(&mut p.conv2.bias);
                }
                LayerParams::Linear { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    fn assemble_input(&self, x: &Tensor, aux_mask: Option<&Tensor>) -> Result<Tensor> {
        let (sc, sh, sw) = self.spec.input_shape;
        if x.rank() != 3 {
            return Err(Error::ShapeMismatch {
                context: "network input must be [C,H,W]",
                left: x.shape().to_vec(),
                right: vec![sc, sh, sw],
            });
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        match aux_mask {
            None => {
                if (c, h, w) != (sc, sh, sw) {
                    return Err(Error::ShapeMismatch {
                        context: "network input vs spec",
                        left: x.shape().to_vec(),
                        right: vec![sc, sh, sw],
                    });
                }
                Ok(x.clone())
            }
            Some(mask) => {
                if mask.shape() != [1, h, w] || (c + 1, h, w) != (sc, sh, sw) {
                    return Err(Error::ShapeMismatch {
                        context: "aux mask channel does not fit this spec",
                        left: vec![c + 1, h, w],
                        right: vec![sc, sh, sw],
                    });
                }
                let mut data = Vec::with_capacity((c + 1) * h * w);
                data.extend_from_slice(x.data());
                data.extend_from_slice(mask.data());
                Tensor::new(&[c + 1, h, w], data)
            }
        }
    }

    /// Class probabilities only; no trace is materialized. The saliency head
    /// never feeds back into this path, so the probabilities are bit-for-bit
    /// the ones [`Self::forward_with_trace`] returns.
    pub fn predict(&self, x: &Tensor, aux_mask: Option<&Tensor>) -> Result<Tensor> {
        let input = self.assemble_input(x, aux_mask)?;
        let (probs, _, _) = self.run_forward(&input, false)?;
        Ok(probs)
    }

    /// Forward pass that also records one post-ReLU feature map per conv
    /// layer and per residual block, shallow to deep.
    pub fn forward_with_trace(
        &self,
        x: &Tensor,
        aux_mask: Option<&Tensor>,
    ) -> Result<(Tensor, ForwardTrace)> {
        let input = self.assemble_input(x, aux_mask)?;
        let (probs, trace, _) = self.run_forward(&input, false)?;
        let (_, h, w) = self.spec.input_shape;
        Ok((
            probs,
            ForwardTrace {
                entries: trace,
                input_shape: (h, w),
            },
        ))
    }

    fn run_forward(
        &self,
        input: &Tensor,
        keep_caches: bool,
    ) -> Result<(Tensor, Vec<TraceEntry>, Vec<Cache>)> {
        let mut cur = input.clone();
        let mut trace = Vec::new();
        let mut caches = Vec::with_capacity(self.layers.len());
        // Set by each conv for the relu that follows it: the geometry that
        // projects the post-ReLU map back onto the shape the conv consumed.
        let mut pending_geometry: Option<DeconvGeometry> = None;
        for (layer_spec, layer) in self.spec.layers.iter().zip(&self.layers) {
            match (layer_spec, layer) {
                (LayerSpec::Conv { .. }, LayerParams::Conv(p)) => {
                    let out = conv2d_forward(&cur, p)?;
                    pending_geometry = Some(DeconvGeometry {
                        kernel: p.kernel(),
                        stride: p.stride,
                        padding: p.padding,
                        output_shape: (cur.shape()[1], cur.shape()[2]),
                    });
                    caches.push(if keep_caches {
                        Cache::Conv { input: cur }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                (LayerSpec::Relu, _) => {
                    let out = relu_forward(&cur);
                    let geometry = pending_geometry
                        .take()
                        .expect("validated spec pairs relu with conv");
                    trace.push(TraceEntry {
                        feature_map: out.clone(),
                        geometry,
                    });
                    caches.push(if keep_caches {
                        Cache::Relu {
                            input: cur,
                            trace_index: trace.len() - 1,
                        }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                (LayerSpec::ResBlock { .. }, LayerParams::Res(p)) => {
                    let cache = residual_block_forward_cached(&cur, p)?;
                    let (h, w) = (cur.shape()[1], cur.shape()[2]);
                    trace.push(TraceEntry {
                        feature_map: cache.output.clone(),
                        geometry: DeconvGeometry {
                            kernel: p.conv1.kernel(),
                            stride: 1,
                            padding: p.conv1.padding,
                            output_shape: (h, w),
                        },
                    });
                    let out = cache.output.clone();
                    caches.push(if keep_caches {
                        Cache::Res {
                            input: cur,
                            cache,
                            trace_index: trace.len() - 1,
                        }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                (LayerSpec::GlobalAvgPool, _) => {
                    let out = global_avg_pool(&cur)?;
                    caches.push(if keep_caches {
                        Cache::Gap {
                            input_shape: cur.shape().to_vec(),
                        }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                (LayerSpec::Linear { .. }, LayerParams::Linear { weight, bias }) => {
                    let out = linear(&cur, weight, bias)?;
                    caches.push(if keep_caches {
                        Cache::Linear { input: cur }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                (LayerSpec::Sigmoid, _) => {
                    let out = sigmoid(&cur);
                    caches.push(if keep_caches {
                        Cache::Sigmoid {
                            output: out.clone(),
                        }
                    } else {
                        Cache::None
                    });
                    cur = out;
                }
                _ => unreachable!("layer params out of sync with spec"),
            }
        }
        Ok((cur, trace, caches))
    }

}

enum Cache {
    None,
    Conv {
        input: Tensor,
    },
    Relu {
        input: Tensor,
        trace_index: usize,
    },
    Res {
        input: Tensor,
        cache: ResBlockCache,
        trace_index: usize,
    },
    Gap {
        input_shape: Vec<usize>,
    },
    Linear {
        input: Tensor,
    },
    Sigmoid {
        output: Tensor,
    },
}

/// Per-parameter gradients, aligned with [`Network::named_params`] order.
#[derive(Clone, Debug)]
pub struct Gradients {
    slots: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients {
            slots: net
                .named_params()
                .iter()
                .map(|(_, t)| t.zeros_like())
                .collect(),
        }
    }

    pub fn slots(&self) -> &[Tensor] {
        &self.slots
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, scale: f64) {
        for t in &mut self.slots {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(Tensor::all_finite)
    }
}

/// Everything one optimization step needs from a sample.
pub struct SampleGrad {
    pub loss: LossValue,
    pub probs: Tensor,
    pub grads: Gradients,
}

/// Objective value without the backward pass.
pub fn loss_value(
    net: &Network,
    x: &Tensor,
    aux_mask: Option<&Tensor>,
    targets: &Tensor,
    seg_mask: Option<&Tensor>,
    mode: FocusMode,
    lambda: f64,
) -> Result<LossValue> {
    let (probs, trace) = net.forward_with_trace(x, aux_mask)?;
    let mask = if mode.needs_mask() {
        Some(saliency::forward(&trace)?)
    } else {
        None
    };
    total_loss(
        &probs,
        targets,
        mask.as_ref().map(|m| m.values()),
        seg_mask,
        mode,
        lambda,
    )
}

/// Smallest |pre-activation| over every ReLU in the network, including the
/// two inside each residual block. Gradient checks reject points too close
/// to a ReLU kink.
pub fn relu_clearance(net: &Network, x: &Tensor, aux_mask: Option<&Tensor>) -> Result<f64> {
    let input = net.assemble_input(x, aux_mask)?;
    let (_, _, caches) = net.run_forward(&input, true)?;
    let mut clearance = f64::INFINITY;
    let mut scan = |t: &Tensor| {
        for &v in t.data() {
            clearance = clearance.min(v.abs());
        }
    };
    for cache in &caches {
        match cache {
            Cache::Relu { input, .. } => scan(input),
            Cache::Res { cache, .. } => {
                scan(&cache.pre1);
                scan(&cache.pre2_plus_skip);
            }
            _ => {}
        }
    }
    Ok(clearance)
}

/// Forward, objective, and full backward for one sample.
///
/// In the focus modes the penalty gradient enters the backward pass at each
/// recorded feature map, on top of the classification gradient arriving from
/// the deeper layers. With `lambda == 0` the penalty path is skipped entirely
/// so the parameter trajectory is bit-identical to regular training.
pub fn loss_and_gradients(
    net: &Network,
    x: &Tensor,
    aux_mask: Option<&Tensor>,
    targets: &Tensor,
    seg_mask: Option<&Tensor>,
    mode: FocusMode,
    lambda: f64,
) -> Result<SampleGrad> {
    let input = net.assemble_input(x, aux_mask)?;
    let (probs, entries, caches) = net.run_forward(&input, true)?;
    let (_, h, w) = net.spec.input_shape;
    let trace = ForwardTrace {
        entries,
        input_shape: (h, w),
    };

    let mask: Option<VisualizationMask> = if mode.needs_mask() {
        Some(saliency::forward(&trace)?)
    } else {
        None
    };
    let vis = mask.as_ref().map(|m| m.values());
    let loss = total_loss(&probs, targets, vis, seg_mask, mode, lambda)?;

    let entry_grads: Option<Vec<Tensor>> = if mode.needs_mask() && lambda != 0.0 {
        let vis = vis.unwrap();
        let seg = seg_mask.ok_or_else(|| {
            Error::Config("focus mode requires a segmentation mask".into())
        })?;
        let grad_mask = match mode {
            FocusMode::Full => full_focus_grad(vis, seg)?,
            FocusMode::Half => half_focus_grad(vis, seg)?,
            FocusMode::Regular => unreachable!(),
        }
        .scale(lambda);
        Some(saliency::backward(&trace, &grad_mask)?)
    } else {
        None
    };

    let mut grads = Gradients::zeros_like(net);
    let slot_starts = slot_starts(net);
    let mut g = bce_multilabel_grad(&probs, targets)?;

    for (i, cache) in caches.iter().enumerate().rev() {
        match (&net.layers[i], cache) {
            (_, Cache::Sigmoid { output }) => {
                g = sigmoid_backward(output, &g)?;
            }
            (LayerParams::Linear { weight, .. }, Cache::Linear { input }) => {
                let (gx, gw, gb) = linear_backward(input, weight, &g)?;
                grads.slots[slot_starts[i]] = gw;
                grads.slots[slot_starts[i] + 1] = gb;
                g = gx;
            }
            (_, Cache::Gap { input_shape }) => {
                g = global_avg_pool_backward(input_shape, &g)?;
            }
            (_, Cache::Relu { input, trace_index }) => {
                if let Some(eg) = &entry_grads {
                    g.add_scaled(&eg[*trace_index], 1.0)?;
                }
                g = relu_backward(input, &g)?;
            }
            (LayerParams::Conv(p), Cache::Conv { input, .. }) => {
                let (gx, gw, gb) = conv2d_backward(input, p, &g)?;
                grads.slots[slot_starts[i]] = gw;
                grads.slots[slot_starts[i] + 1] = gb;
                g = gx;
            }
            (
                LayerParams::Res(p),
                Cache::Res {
                    input,
                    cache,
                    trace_index,
                },
            ) => {
                if let Some(eg) = &entry_grads {
                    g.add_scaled(&eg[*trace_index], 1.0)?;
                }
                let rg = residual_block_backward(input, p, cache, &g)?;
                grads.slots[slot_starts[i]] = rg.conv1_w;
                grads.slots[slot_starts[i] + 1] = rg.conv1_b;
                grads.slots[slot_starts[i] + 2] = rg.conv2_w;
                grads.slots[slot_starts[i] + 3] = rg.conv2_b;
                g = rg.input;
            }
            _ => unreachable!("cache out of sync with layers"),
        }
    }

    Ok(SampleGrad { loss, probs, grads })
}

/// First gradient-slot index of each layer.
fn slot_starts(net: &Network) -> Vec<usize> {
    let mut starts = Vec::with_capacity(net.layers.len());
    let mut next = 0;
    for layer in &net.layers {
        starts.push(next);
        next += match layer {
            LayerParams::Conv(_) | LayerParams::Linear { .. } => 2,
            LayerParams::Res(_) => 4,
            LayerParams::Stateless => 0,
        };
    }
    starts
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"PFCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Write the network to `path` in the checkpoint format: magic, version,
/// length-prefixed spec text (with seed), then parameters as little-endian
/// f64 in declaration order.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let text = format!("seed {}\n{}", net.rng_seed, net.spec.to_text());
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    let params = net.named_params();
    let scalar_count: usize = params.iter().map(|(_, t)| t.len()).sum();
    buf.extend_from_slice(&(scalar_count as u64).to_le_bytes());
    for (_, t) in &params {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let text_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let text = std::str::from_utf8(take(&mut pos, text_len)?)
        .map_err(|_| Error::Format("checkpoint spec text is not UTF-8".into()))?
        .to_string();

    let mut seed = None;
    let mut spec_lines = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("seed ") {
            seed = Some(
                rest.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Format("bad seed in checkpoint".into()))?,
            );
        } else {
            spec_lines.push_str(line);
            spec_lines.push('\n');
        }
    }
    let spec = NetworkSpec::from_text(&spec_lines)?;
    let seed = seed.ok_or_else(|| Error::Format("checkpoint missing seed".into()))?;

    let scalar_count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let mut net = Network::build(&spec, seed)?;
    let expected: usize = net.named_params().iter().map(|(_, t)| t.len()).sum();
    if scalar_count != expected {
        return Err(Error::Format(format!(
            "checkpoint carries {scalar_count} parameters, spec wants {expected}"
        )));
    }
    let payload = take(&mut pos, scalar_count * 8)?.to_vec();
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    let mut offset = 0;
    for t in net.params_mut() {
        for v in t.data_mut() {
            *v = f64::from_le_bytes(payload[offset..offset + 8].try_into().unwrap());
            offset += 8;
        }
    }
    Ok(net)
}

//! The in-graph saliency head.
//!
//! Consumes the ordered record of post-ReLU feature maps captured during a
//! forward pass and projects the deepest evidence back to input resolution:
//! average each layer's maps across channels, repeatedly upsample the running
//! map with a unit-weight transposed convolution (same kernel size and stride
//! as the conv layer being inverted), pointwise-multiply with the next
//! shallower average, and finally min-max normalize to [0, 1].
//!
//! The whole chain is differentiable; [`backward`] implements its exact
//! reverse-mode derivative so a loss on the mask can train the network.

use crate::error::{Error, Result};
use crate::ops::{deconv_unit_backward, deconv_unit_forward, DeconvGeometry};
use crate::tensor::Tensor;

/// Range guard below which a map is treated as constant and normalizes to
/// all zeros ("no localized evidence").
pub const NORM_EPS: f64 = 1e-8;

/// One recorded feature map plus the geometry that projects it back to the
/// resolution of the layer input it was computed from.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub feature_map: Tensor,
    pub geometry: DeconvGeometry,
}

/// Ordered post-ReLU feature maps from one forward pass, shallowest first.
/// A residual block contributes exactly one entry (its final output).
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub entries: Vec<TraceEntry>,
    pub input_shape: (usize, usize),
}

impl ForwardTrace {
    /// Verify the geometry chain: every entry's deconvolution must land on
    /// the previous entry's resolution, and entry 0 on the input resolution.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Geometry("trace has no entries".into()));
        }
        for (l, entry) in self.entries.iter().enumerate() {
            let shape = entry.feature_map.shape();
            if shape.len() != 3 {
                return Err(Error::Geometry(format!(
                    "trace entry {l} is not [C,H,W]: {shape:?}"
                )));
            }
            let (h, w) = (shape[1], shape[2]);
            entry.geometry.validate_for_input(h, w)?;
            let target = if l == 0 {
                self.input_shape
            } else {
                let prev = self.entries[l - 1].feature_map.shape();
                (prev[1], prev[2])
            };
            if entry.geometry.output_shape != target {
                return Err(Error::Geometry(format!(
                    "trace entry {l} projects to {:?}, expected {:?}",
                    entry.geometry.output_shape, target
                )));
            }
        }
        Ok(())
    }
}

/// Input-resolution saliency map with all values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct VisualizationMask {
    values: Tensor,
}

impl VisualizationMask {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.values.shape()[1], self.values.shape()[2])
    }
}

/// Mean over the channel axis: `[C,H,W] -> [1,H,W]`.
pub fn channel_average(f: &Tensor) -> Result<Tensor> {
    let shape = f.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            context: "channel_average expects [C,H,W]",
            left: shape.to_vec(),
            right: vec![3],
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = Tensor::zeros(&[1, h, w]);
    let fd = f.data();
    let od = out.data_mut();
    for ci in 0..c {
        for i in 0..h * w {
            od[i] += fd[ci * h * w + i];
        }
    }
    let inv = 1.0 / c as f64;
    for v in od {
        *v *= inv;
    }
    Ok(out)
}

/// Adjoint of [`channel_average`]: spread the gradient evenly over channels.
fn channel_average_backward(grad: &Tensor, channels: usize) -> Tensor {
    let (h, w) = (grad.shape()[1], grad.shape()[2]);
    let mut out = Tensor::zeros(&[channels, h, w]);
    let inv = 1.0 / channels as f64;
    for ci in 0..channels {
        for i in 0..h * w {
            out.data_mut()[ci * h * w + i] = grad.data()[i] * inv;
        }
    }
    out
}

/// Min-max rescale to [0, 1]. A map whose range is below [`NORM_EPS`] maps
/// to all zeros. Min and max are located at their first flat index, which is
/// also the subgradient choice [`backward`] differentiates through.
pub fn normalize_01(m: &Tensor) -> Tensor {
    let (mn, mx, _, _) = extrema(m);
    if mx - mn <= NORM_EPS {
        return m.zeros_like();
    }
    let inv = 1.0 / (mx - mn);
    m.map(|v| (v - mn) * inv)
}

fn extrema(m: &Tensor) -> (f64, f64, usize, usize) {
    let data = m.data();
    let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut i_min, mut i_max) = (0, 0);
    for (i, &v) in data.iter().enumerate() {
        if v < mn {
            mn = v;
            i_min = i;
        }
        if v > mx {
            mx = v;
            i_max = i;
        }
    }
    (mn, mx, i_min, i_max)
}

fn normalize_backward(m: &Tensor, grad: &Tensor) -> Tensor {
    let (mn, mx, i_min, i_max) = extrema(m);
    let r = mx - mn;
    if r <= NORM_EPS {
        return m.zeros_like();
    }
    let inv = 1.0 / r;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&g, &v) in grad.data().iter().zip(m.data()) {
        s1 += g;
        s2 += g * (v - mn) * inv;
    }
    let mut out = grad.scale(inv);
    out.data_mut()[i_min] += (s2 - s1) * inv;
    out.data_mut()[i_max] -= s2 * inv;
    out
}

struct Intermediates {
    /// Channel averages, one per entry.
    averages: Vec<Tensor>,
    /// Running products M_l (M for the deepest entry is its average).
    products: Vec<Tensor>,
    /// Deconvolved deeper map at each multiplication step (index l holds
    /// the upsampled M_{l+1}).
    upsampled: Vec<Option<Tensor>>,
    /// Final projection to input resolution, before normalization.
    pre_norm: Tensor,
}

fn run_forward(trace: &ForwardTrace) -> Result<Intermediates> {
    trace.validate()?;
    let n = trace.entries.len();
    let averages: Vec<Tensor> = trace
        .entries
        .iter()
        .map(|e| channel_average(&e.feature_map))
        .collect::<Result<_>>()?;
    let mut products: Vec<Option<Tensor>> = vec![None; n];
    let mut upsampled: Vec<Option<Tensor>> = vec![None; n];
    products[n - 1] = Some(averages[n - 1].clone());
    for l in (0..n.saturating_sub(1)).rev() {
        let deeper = products[l + 1].as_ref().unwrap();
        let up = deconv_unit_forward(deeper, &trace.entries[l + 1].geometry)?;
        products[l] = Some(up.mul(&averages[l])?);
        upsampled[l] = Some(up);
    }
    let pre_norm = deconv_unit_forward(products[0].as_ref().unwrap(), &trace.entries[0].geometry)?;
    Ok(Intermediates {
        averages,
        products: products.into_iter().map(Option::unwrap).collect(),
        upsampled,
        pre_norm,
    })
}

/// Project the trace down to an input-resolution mask in [0, 1].
pub fn forward(trace: &ForwardTrace) -> Result<VisualizationMask> {
    let inter = run_forward(trace)?;
    let values = normalize_01(&inter.pre_norm);
    debug_assert!(values.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    Ok(VisualizationMask { values })
}

/// The raw input-resolution projection before min-max normalization.
/// Diagnostic surface: its extrema decide the normalization branch.
pub fn forward_unnormalized(trace: &ForwardTrace) -> Result<Tensor> {
    Ok(run_forward(trace)?.pre_norm)
}

/// Exact reverse-mode derivative of [`forward`]: returns the gradient of the
/// mask loss with respect to each entry's full `[C,H,W]` feature map.
pub fn backward(trace: &ForwardTrace, grad_mask: &Tensor) -> Result<Vec<Tensor>> {
    let inter = run_forward(trace)?;
    if grad_mask.shape() != inter.pre_norm.shape() {
        return Err(Error::ShapeMismatch {
            context: "saliency grad_mask vs input resolution",
            left: grad_mask.shape().to_vec(),
            right: inter.pre_norm.shape().to_vec(),
        });
    }
    let n = trace.entries.len();
    let mut grad_avg: Vec<Option<Tensor>> = vec![None; n];

    let g_pre = normalize_backward(&inter.pre_norm, grad_mask);
    let p0 = inter.products[0].shape();
    let mut g_prod = deconv_unit_backward(&trace.entries[0].geometry, &g_pre, (p0[1], p0[2]))?;
    for l in 0..n - 1 {
        let up = inter.upsampled[l].as_ref().unwrap();
        grad_avg[l] = Some(g_prod.mul(up)?);
        let g_up = g_prod.mul(&inter.averages[l])?;
        let deeper = inter.products[l + 1].shape();
        g_prod = deconv_unit_backward(&trace.entries[l + 1].geometry, &g_up, (deeper[1], deeper[2]))?;
    }
    grad_avg[n - 1] = Some(g_prod);

    let grads = grad_avg
        .into_iter()
        .zip(&trace.entries)
        .map(|(g, e)| channel_average_backward(&g.unwrap(), e.feature_map.shape()[0]))
        .collect();
    Ok(grads)
}

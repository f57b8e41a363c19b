//! Brute-force reference implementations used only by test suites.
//!
//! Everything here deliberately re-derives results with plain loops and its
//! own index arithmetic. Nothing calls into the production kernels it is
//! used to check: the convolution below is a direct definition-following
//! quadruple loop, the saliency reconstruction re-implements the whole
//! back-projection chain gather-style, and gradients come from central
//! finite differences. Agreement between these and the production paths is
//! the evidence the fast paths are right.

pub mod endtoend;
pub mod gen;
pub mod metrics_ref;

use focusnet_core::ops::{ConvParams, DeconvGeometry};
use focusnet_core::saliency::ForwardTrace;
use focusnet_core::tensor::Tensor;

/// Step sizes and tolerances for finite-difference gradient checks.
#[derive(Clone, Copy, Debug)]
pub struct FiniteDiffConfig {
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Minimum distance of any ReLU pre-activation (or normalization
    /// extremum tie) from its kink for a test point to be admissible.
    pub kink_margin: f64,
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        FiniteDiffConfig {
            h: 1e-6,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            kink_margin: 1e-3,
        }
    }
}

/// Definition-following cross-correlation: quadruple loop, no shortcuts.
pub fn naive_conv2d(x: &Tensor, p: &ConvParams) -> Tensor {
    let xs = x.shape();
    let ws = p.weights.shape();
    let (c_in, h, w) = (xs[0], xs[1], xs[2]);
    let (c_out, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    assert_eq!(c_in, kc, "channel mismatch");
    let (s, pad) = (p.stride as isize, p.padding as isize);
    let h_out = ((h + 2 * p.padding - kh) / p.stride) + 1;
    let w_out = ((w + 2 * p.padding - kw) / p.stride) + 1;
    let mut out = vec![0.0; c_out * h_out * w_out];
    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = p.bias.data()[oc];
                for ic in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize * s + ky as isize - pad;
                            let ix = ox as isize * s + kx as isize - pad;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = ic * h * w + iy as usize * w + ix as usize;
                            let wi = oc * (c_in * kh * kw) + ic * (kh * kw) + ky * kw + kx;
                            acc += x.data()[xi] * p.weights.data()[wi];
                        }
                    }
                }
                out[oc * (h_out * w_out) + oy * w_out + ox] = acc;
            }
        }
    }
    Tensor::new(&[c_out, h_out, w_out], out).unwrap()
}

/// Gather-style unit-weight transposed convolution: for every output pixel,
/// sum the input positions whose window covers it.
fn gather_deconv(m: &[f64], h: usize, w: usize, g: &DeconvGeometry) -> Vec<f64> {
    let (h_out, w_out) = g.output_shape;
    let (kh, kw) = g.kernel;
    let (s, pad) = (g.stride as isize, g.padding as isize);
    let mut out = vec![0.0; h_out * w_out];
    for oy in 0..h_out as isize {
        for ox in 0..w_out as isize {
            let mut acc = 0.0;
            for iy in 0..h as isize {
                for ix in 0..w as isize {
                    let dy = oy - (iy * s - pad);
                    let dx = ox - (ix * s - pad);
                    if dy >= 0 && dy < kh as isize && dx >= 0 && dx < kw as isize {
                        acc += m[iy as usize * w + ix as usize];
                    }
                }
            }
            out[oy as usize * w_out + ox as usize] = acc;
        }
    }
    out
}

/// Post-hoc reconstruction of the saliency mask from a recorded trace,
/// sharing no helpers with the production head.
pub fn posthoc_saliency(trace: &ForwardTrace) -> Tensor {
    let n = trace.entries.len();
    assert!(n > 0, "empty trace");

    // channel averages, plain loops
    let mut avgs: Vec<(Vec<f64>, usize, usize)> = Vec::with_capacity(n);
    for entry in &trace.entries {
        let s = entry.feature_map.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut avg = vec![0.0; h * w];
        for i in 0..h * w {
            let mut acc = 0.0;
            for ci in 0..c {
                acc += entry.feature_map.data()[ci * h * w + i];
            }
            avg[i] = acc / c as f64;
        }
        avgs.push((avg, h, w));
    }

    // deepest average, then upsample / multiply down the chain
    let mut running = avgs[n - 1].0.clone();
    let (mut rh, mut rw) = (avgs[n - 1].1, avgs[n - 1].2);
    for l in (0..n - 1).rev() {
        let up = gather_deconv(&running, rh, rw, &trace.entries[l + 1].geometry);
        let (ah, aw) = (avgs[l].1, avgs[l].2);
        assert_eq!(up.len(), ah * aw, "chain shape break at entry {l}");
        running = up
            .iter()
            .zip(&avgs[l].0)
            .map(|(&u, &a)| u * a)
            .collect();
        rh = ah;
        rw = aw;
    }
    let projected = gather_deconv(&running, rh, rw, &trace.entries[0].geometry);

    // min-max normalization with the shared degeneracy rule
    let mut mn = f64::INFINITY;
    let mut mx = f64::NEG_INFINITY;
    for &v in &projected {
        if v < mn {
            mn = v;
        }
        if v > mx {
            mx = v;
        }
    }
    let (h, w) = trace.input_shape;
    let values = if mx - mn <= 1e-8 {
        vec![0.0; projected.len()]
    } else {
        projected.iter().map(|&v| (v - mn) / (mx - mn)).collect()
    };
    Tensor::new(&[1, h, w], values).unwrap()
}

/// Central finite differences of a scalar function, coordinate by coordinate.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    cfg: &FiniteDiffConfig,
) -> Tensor {
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += cfg.h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= cfg.h;
        grad.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * cfg.h);
    }
    grad
}

/// Worst relative error between an analytic gradient and a finite-difference
/// one, with an absolute floor: coordinates where both are below `abs_tol`
/// count as exact.
pub fn max_rel_error(analytic: &Tensor, fd: &Tensor, cfg: &FiniteDiffConfig) -> f64 {
    assert_eq!(analytic.shape(), fd.shape());
    let mut worst: f64 = 0.0;
    for (&a, &b) in analytic.data().iter().zip(fd.data()) {
        let diff = (a - b).abs();
        if diff <= cfg.abs_tol {
            continue;
        }
        worst = worst.max(diff / a.abs().max(b.abs()));
    }
    worst
}

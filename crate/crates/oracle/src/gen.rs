//! Deterministic random-case generators shared by test suites.

use focusnet_core::ops::{conv_out_extent, ConvParams, DeconvGeometry};
use focusnet_core::rng::Rng;
use focusnet_core::saliency::{ForwardTrace, TraceEntry};
use focusnet_core::tensor::Tensor;

/// Random nonnegative feature map with a sprinkling of exact zeros, the way
/// post-ReLU maps look.
pub fn random_feature_map(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.next_f64() < 0.2 {
                0.0
            } else {
                rng.uniform(0.0, 1.0)
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Random valid trace: a chain of feature maps whose geometries project each
/// entry exactly onto the previous entry's resolution.
pub fn random_trace(rng: &mut Rng, max_entries: usize, max_spatial: usize) -> ForwardTrace {
    let n = 1 + rng.below(max_entries);
    let input_h = 3 + rng.below(max_spatial.saturating_sub(2));
    let input_w = 3 + rng.below(max_spatial.saturating_sub(2));
    let mut entries = Vec::with_capacity(n);
    let (mut h, mut w) = (input_h, input_w);
    for _ in 0..n {
        // draw geometries until the conv output stays positive
        let (kernel, stride, padding, oh, ow) = loop {
            let kernel = [1, 2, 3, 5][rng.below(4)];
            let stride = 1 + rng.below(2);
            let padding = rng.below(2);
            match (
                conv_out_extent(h, kernel, stride, padding),
                conv_out_extent(w, kernel, stride, padding),
            ) {
                (Some(a), Some(b)) if a > 0 && b > 0 => break (kernel, stride, padding, a, b),
                _ => continue,
            }
        };
        let channels = 1 + rng.below(4);
        entries.push(TraceEntry {
            feature_map: random_feature_map(rng, &[channels, oh, ow]),
            geometry: DeconvGeometry {
                kernel: (kernel, kernel),
                stride,
                padding,
                output_shape: (h, w),
            },
        });
        h = oh;
        w = ow;
    }
    ForwardTrace {
        entries,
        input_shape: (input_h, input_w),
    }
}

/// Random convolution case within the small regime the agreement suite
/// covers: channels <= 4, spatial <= 8, stride 1 or 2.
pub fn random_conv_case(rng: &mut Rng) -> (Tensor, ConvParams) {
    loop {
        let c_in = 1 + rng.below(4);
        let c_out = 1 + rng.below(4);
        let h = 1 + rng.below(8);
        let w = 1 + rng.below(8);
        let kernel = 1 + rng.below(3.min(h.min(w)));
        let stride = 1 + rng.below(2);
        let padding = rng.below(2);
        let ok = |extent: usize| {
            conv_out_extent(extent, kernel, stride, padding).is_some_and(|e| e > 0)
        };
        if !ok(h) || !ok(w) {
            continue;
        }
        let wn = c_out * c_in * kernel * kernel;
        let weights = Tensor::new(
            &[c_out, c_in, kernel, kernel],
            (0..wn).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let bias = Tensor::new(&[c_out], (0..c_out).map(|_| rng.uniform(-0.5, 0.5)).collect())
            .unwrap();
        let x = Tensor::new(
            &[c_in, h, w],
            (0..c_in * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        return (x, ConvParams::new(weights, bias, stride, padding).unwrap());
    }
}

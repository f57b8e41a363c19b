//! Kink-excluded sampling and full-objective gradient checking.
//!
//! The training objective is piecewise smooth: ReLUs, the min-max
//! normalization, and the L1 penalties all have kinks. Finite differences
//! are only trustworthy away from them, so test points are rejection-sampled
//! until every nonsmooth site has clearance. The analytic gradient is exact
//! everywhere; only the comparison needs the margin.

use crate::{finite_diff_grad, max_rel_error, FiniteDiffConfig};
use focusnet_core::losses::FocusMode;
use focusnet_core::model::{self, Network, NetworkSpec};
use focusnet_core::rng::Rng;
use focusnet_core::saliency;
use focusnet_core::tensor::Tensor;

/// One admissible test point for an end-to-end gradient check.
pub struct TestPoint {
    pub net: Network,
    pub x: Tensor,
    pub targets: Tensor,
    pub seg: Tensor,
}

/// Minimum spread of the un-normalized projection; below this the
/// normalization branch could flip under perturbation.
const MIN_RANGE: f64 = 0.05;

fn random_unit_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
}

fn random_binary_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

/// Draw one candidate point; `None` when any kink is closer than the margin.
pub fn sample_point(
    spec: &NetworkSpec,
    mode: FocusMode,
    rng: &mut Rng,
    cfg: &FiniteDiffConfig,
) -> Option<TestPoint> {
    let net = Network::build(spec, rng.next_u64()).ok()?;
    let (c, h, w) = spec.input_shape;
    let x = random_unit_tensor(rng, &[c, h, w]);
    let targets = random_binary_tensor(rng, &[spec.num_classes]);
    let seg = random_binary_tensor(rng, &[1, h, w]);

    if model::relu_clearance(&net, &x, None).ok()? <= cfg.kink_margin {
        return None;
    }

    let (probs, trace) = net.forward_with_trace(&x, None).ok()?;
    if probs
        .data()
        .iter()
        .any(|&p| !(1e-6..=1.0 - 1e-6).contains(&p))
    {
        return None;
    }

    let pre = saliency::forward_unnormalized(&trace).ok()?;
    let mut sorted = pre.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if sorted[n - 1] - sorted[0] <= MIN_RANGE {
        return None;
    }
    if sorted[1] - sorted[0] <= cfg.kink_margin || sorted[n - 1] - sorted[n - 2] <= cfg.kink_margin
    {
        return None;
    }

    // L1 kink clearance per pixel; the extremum attainers are locally pinned
    // to 0 and 1 so they are exempt.
    let i_min = argmin(pre.data());
    let i_max = argmax(pre.data());
    let vis = saliency::normalize_01(&pre);
    for (i, (&v, &m)) in vis.data().iter().zip(seg.data()).enumerate() {
        if i == i_min || i == i_max {
            continue;
        }
        let clearance = match mode {
            FocusMode::Full => (v - m).abs(),
            FocusMode::Half => {
                if m == 0.0 {
                    v
                } else {
                    continue;
                }
            }
            FocusMode::Regular => continue,
        };
        if clearance <= cfg.kink_margin {
            return None;
        }
    }

    Some(TestPoint {
        net,
        x,
        targets,
        seg,
    })
}

/// Keep drawing until `count` admissible points have been produced.
pub fn sample_points(
    spec: &NetworkSpec,
    mode: FocusMode,
    rng: &mut Rng,
    cfg: &FiniteDiffConfig,
    count: usize,
) -> Vec<TestPoint> {
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0;
    while points.len() < count {
        attempts += 1;
        assert!(
            attempts < count * 1000,
            "kink-excluded sampling is not converging"
        );
        if let Some(p) = sample_point(spec, mode, rng, cfg) {
            points.push(p);
        }
    }
    points
}

/// Worst relative disagreement between the analytic gradient of the total
/// loss and central finite differences, over every parameter of the network.
pub fn max_grad_error(point: &TestPoint, mode: FocusMode, lambda: f64, cfg: &FiniteDiffConfig) -> f64 {
    let seg = if mode.needs_mask() {
        Some(&point.seg)
    } else {
        None
    };
    let analytic = model::loss_and_gradients(
        &point.net,
        &point.x,
        None,
        &point.targets,
        seg,
        mode,
        lambda,
    )
    .expect("analytic gradient")
    .grads;

    let n_slots = analytic.slots().len();
    let mut worst: f64 = 0.0;
    for slot in 0..n_slots {
        let base = {
            let scratch = point.net.clone();
            let named = scratch.named_params();
            named[slot].1.clone()
        };
        let mut scratch = point.net.clone();
        let mut f = |candidate: &Tensor| -> f64 {
            *scratch.params_mut()[slot] = candidate.clone();
            model::loss_value(
                &scratch,
                &point.x,
                None,
                &point.targets,
                seg,
                mode,
                lambda,
            )
            .expect("loss evaluation")
            .total
        };
        let fd = finite_diff_grad(&mut f, &base, cfg);
        worst = worst.max(max_rel_error(&analytic.slots()[slot], &fd, cfg));
    }
    worst
}

fn argmin(data: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v < data[best] {
            best = i;
        }
    }
    best
}

fn argmax(data: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    best
}

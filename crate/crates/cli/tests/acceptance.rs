//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria 5 and 6 train full models and take a few minutes per regime and
//! seed; everything else is fast. Run with `--nocapture` to see the
//! per-criterion lines.

use focusnet_cli::config::{MaskCorruption, RawConfig, Regime, RunConfig};
use focusnet_cli::{cmd_eval, cmd_gen_data, cmd_train, GenConfig};
use focusnet_core::data::{pnm, Split};
use focusnet_core::losses::{full_focus, half_focus, FocusMode};
use focusnet_core::model::{LayerSpec, Network, NetworkSpec};
use focusnet_core::optim::{Adam, Sgd};
use focusnet_core::rng::Rng;
use focusnet_core::saliency;
use focusnet_core::tensor::Tensor;
use focusnet_oracle::gen::{random_conv_case, random_trace};
use focusnet_oracle::{endtoend, metrics_ref, naive_conv2d, posthoc_saliency, FiniteDiffConfig};
use std::path::{Path, PathBuf};
use std::time::Instant;

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("focusnet_acceptance_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// The gradient-check network: two convs and one residual block on an 8x8
/// single-channel input.
fn grad_check_spec() -> NetworkSpec {
    NetworkSpec {
        input_shape: (1, 8, 8),
        layers: vec![
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::ResBlock { kernel: 3 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out_features: 3 },
            LayerSpec::Sigmoid,
        ],
        num_classes: 3,
    }
}

#[test]
fn criterion_01_end_to_end_gradients() {
    let started = Instant::now();
    let cfg = FiniteDiffConfig::default();
    let spec = grad_check_spec();
    let mut rng = Rng::new(0xC1);
    for mode in [FocusMode::Full, FocusMode::Half] {
        let points = endtoend::sample_points(&spec, mode, &mut rng, &cfg, 20);
        for (i, point) in points.iter().enumerate() {
            let err = endtoend::max_grad_error(point, mode, 1.0, &cfg);
            assert!(
                err < cfg.rel_tol,
                "{mode:?} point {i}: rel err {err} >= {}",
                cfg.rel_tol
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!(
        "[criterion 01] PASS - analytic total-loss gradient matches finite differences \
         (full+half, 20 points each, <1e-5 rel, {:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = Rng::new(0xC2);
    for case in 0..100 {
        let trace = random_trace(&mut rng, 4, 16);
        let built_in = saliency::forward(&trace).unwrap();
        let reference = posthoc_saliency(&trace);
        let worst = built_in
            .values()
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "trace case {case}: abs err {worst}");
    }
    for case in 0..50 {
        let (x, p) = random_conv_case(&mut rng);
        let fast = focusnet_core::ops::conv2d_forward(&x, &p).unwrap();
        let slow = naive_conv2d(&x, &p);
        let worst = fast
            .data()
            .iter()
            .zip(slow.data())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "conv case {case}: rel err {worst}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!(
        "[criterion 02] PASS - saliency head == post-hoc reconstruction (100 traces, 1e-10), \
         conv == naive loops (50 cases, 1e-12, {:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_03_head_transparency() {
    let spec = grad_check_spec();
    let mut rng = Rng::new(0xC3);
    for case in 0..100 {
        let net = Network::build(&spec, rng.next_u64()).unwrap();
        let x = Tensor::new(&[1, 8, 8], (0..64).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
        let direct = net.predict(&x, None).unwrap();
        let (traced, _) = net.forward_with_trace(&x, None).unwrap();
        for (a, b) in direct.data().iter().zip(traced.data()) {
            assert_eq!(a.to_bits(), b.to_bits(), "case {case}");
        }
    }
    println!(
        "[criterion 03] PASS - predictions identical bitwise with and without the saliency head \
         (100 networks)"
    );
}

#[test]
fn criterion_04_mask_invariants() {
    let mut rng = Rng::new(0xC4);
    for case in 0..1000 {
        let trace = random_trace(&mut rng, 4, 12);
        let mask = saliency::forward(&trace).unwrap();
        let (h, w) = trace.input_shape;
        assert_eq!(mask.values().shape(), [1, h, w], "case {case}");
        for &v in mask.values().data() {
            assert!((0.0..=1.0).contains(&v), "case {case}: {v}");
        }
    }
    // constant-trace degeneracy
    let trace = focusnet_core::saliency::ForwardTrace {
        entries: vec![focusnet_core::saliency::TraceEntry {
            feature_map: Tensor::filled(&[3, 5, 5], 0.7),
            geometry: focusnet_core::ops::DeconvGeometry {
                kernel: (1, 1),
                stride: 1,
                padding: 0,
                output_shape: (5, 5),
            },
        }],
        input_shape: (5, 5),
    };
    let mask = saliency::forward(&trace).unwrap();
    assert!(mask.values().data().iter().all(|&v| v == 0.0));
    println!(
        "[criterion 04] PASS - masks in [0,1] at input resolution on 1000 random traces; \
         constant trace degenerates to zeros"
    );
}

#[test]
fn criterion_07_loss_values_and_lambda_zero_trajectory() {
    // worked 2x2 examples
    let vis = Tensor::new(&[1, 2, 2], vec![0.5, 0.2, 0.0, 1.0]).unwrap();
    let seg = Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let full = full_focus(&vis, &seg).unwrap();
    assert!((full - 0.7).abs() < 1e-15, "full focus {full}");
    let half = half_focus(&vis, &seg).unwrap();
    assert_eq!(half, 0.2, "half focus {half}");

    // lambda = 0 focus run must reproduce the regular trajectory bitwise
    let dir = work_dir("c07");
    let data_dir = dir.join("data");
    let gen = GenConfig::from_raw(
        &RawConfig::parse(&format!(
            "[dataset]\nnum_samples = 60\nimage_size = 16\nnum_classes = 3\nseed = 5\n\
             split = 0.8 0.1 0.1\noutput_dir = {}\n",
            data_dir.display()
        ))
        .unwrap(),
    )
    .unwrap();
    cmd_gen_data(&gen).unwrap();

    let run_cfg = |regime: &str, lambda: f64, out: &Path| -> RunConfig {
        RunConfig::from_raw(
            &RawConfig::parse(&format!(
                "[run]\nregime = {regime}\nlambda = {lambda}\nmanifest = {}\nseed = 11\n\
                 epochs = 2\nbatch_size = 8\noutput_dir = {}\n\
                 [network]\ninput = 3 16 16\nclasses = 3\nlayer = conv 6 3 1 1\nlayer = relu\n\
                 layer = resblock 3\nlayer = gap\nlayer = linear 3\nlayer = sigmoid\n\
                 [optimizer]\nadam_lr = 1e-3\nswitch_step = 100000\npatience = 0\n",
                data_dir.join("manifest.tsv").display(),
                out.display()
            ))
            .unwrap(),
        )
        .unwrap()
    };
    let out_regular = cmd_train(&run_cfg("regular", 1.0, &dir.join("regular"))).unwrap();
    let out_lambda0 = cmd_train(&run_cfg("full-focus", 0.0, &dir.join("lambda0"))).unwrap();
    let regular_net = focusnet_core::model::load_checkpoint(&out_regular.checkpoint).unwrap();
    let lambda0_net = focusnet_core::model::load_checkpoint(&out_lambda0.checkpoint).unwrap();
    for ((name, a), (_, b)) in regular_net
        .named_params()
        .iter()
        .zip(lambda0_net.named_params().iter())
    {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits(), "{name} diverged");
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    println!(
        "[criterion 07] PASS - focus losses reproduce the worked 2x2 values (0.7, 0.2); \
         lambda=0 parameters are bit-identical to regular training"
    );
}

#[test]
fn criterion_08_metrics_match_counting_oracles() {
    // per-class metrics: exhaustive labelings, distinct scores, several
    // presentation orders
    let base_scores: Vec<f64> = (0..8).map(|i| 0.93 - 0.11 * i as f64).collect();
    for n in 1..=8usize {
        for pattern in 0..3 {
            let scores: Vec<f64> = match pattern {
                0 => base_scores[..n].to_vec(),
                1 => base_scores[..n].iter().rev().copied().collect(),
                _ => {
                    let mut v = base_scores[..n].to_vec();
                    v.rotate_left(n / 2);
                    v
                }
            };
            for bits in 0..(1u32 << n) {
                let labels: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                let positives = labels.iter().filter(|&&l| l).count();
                if positives > 0 {
                    let ours = focusnet_core::metrics::average_precision(&scores, &labels).unwrap();
                    let oracle = metrics_ref::ap_rank_count(&scores, &labels);
                    assert_eq!(ours, oracle, "AP n={n} pattern={pattern} bits={bits:b}");
                }
                if positives > 0 && positives < n {
                    let ours = focusnet_core::metrics::roc_auc(&scores, &labels).unwrap();
                    let oracle = metrics_ref::auc_pair_count(&scores, &labels);
                    assert_eq!(ours, oracle, "AUC n={n} pattern={pattern} bits={bits:b}");
                }
            }
        }
    }

    // micro/macro over pooled (sample, class) pairs, exhaustive for K=3, n=4
    let (k, n) = (3usize, 4usize);
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|c| ((i * k + c) as f64).mul_add(0.07, 0.05)).collect())
        .collect();
    let mut checked = 0usize;
    for bits in 0..(1u32 << (n * k)) {
        let labels: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..k).map(|c| bits >> (i * k + c) & 1 == 1).collect())
            .collect();
        let pooled_pos: usize = labels.iter().flatten().filter(|&&l| l).count();
        if pooled_pos == 0 || pooled_pos == n * k {
            continue;
        }
        let ours = focusnet_core::metrics::micro_auc(&scores, &labels).unwrap();
        let oracle = metrics_ref::micro_auc_pair_count(&scores, &labels);
        assert_eq!(ours, oracle, "micro bits={bits:b}");
        checked += 1;

        // macro: mean of per-class AUCs over classes where both labels occur
        let mut per_class = Vec::new();
        for c in 0..k {
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let l: Vec<bool> = labels.iter().map(|row| row[c]).collect();
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                per_class.push((
                    focusnet_core::metrics::roc_auc(&s, &l).unwrap(),
                    metrics_ref::auc_pair_count(&s, &l),
                ));
            }
        }
        for (ours, oracle) in per_class {
            assert_eq!(ours, oracle, "macro component bits={bits:b}");
        }
    }
    assert!(checked > 1000);
    println!(
        "[criterion 08] PASS - AP and ROC-AUC equal brute-force rank/pair counting exactly on \
         exhaustive small instances; micro-AUC matches pooled pair counting ({checked} pooled cases)"
    );
}

#[test]
fn criterion_09_optimizer_single_step_values() {
    // SGD: mu=0, lr=0.1, theta=1, g=2 -> 0.8
    let mut sgd = Sgd::new(0.0);
    let mut theta = Tensor::new(&[1], vec![1.0]).unwrap();
    sgd.step(&mut [&mut theta], &[Tensor::new(&[1], vec![2.0]).unwrap()], 0.1)
        .unwrap();
    assert!((theta.data()[0] - 0.8).abs() < 1e-12);

    // SGD two-step recursion with momentum 0.9, lr 1
    let mut sgd = Sgd::new(0.9);
    let mut theta = Tensor::new(&[1], vec![0.0]).unwrap();
    let g = [Tensor::new(&[1], vec![1.0]).unwrap()];
    sgd.step(&mut [&mut theta], &g, 1.0).unwrap();
    assert!((theta.data()[0] + 1.0).abs() < 1e-12);
    sgd.step(&mut [&mut theta], &g, 1.0).unwrap();
    assert!((theta.data()[0] + 2.9).abs() < 1e-12);

    // Adam first step magnitude equals lr in the epsilon -> 0 limit
    for g0 in [2.5, -0.3, 1e6] {
        let mut adam = Adam::new(0.9, 0.99, 0.0);
        let mut theta = Tensor::new(&[1], vec![0.0]).unwrap();
        adam.step(&mut [&mut theta], &[Tensor::new(&[1], vec![g0]).unwrap()], 0.07)
            .unwrap();
        assert!((theta.data()[0].abs() - 0.07).abs() < 1e-12, "g0={g0}");
        assert_eq!(theta.data()[0].signum(), -g0.signum());
    }

    // beta1 = beta2 = 0 degenerate closed form
    let mut adam = Adam::new(0.0, 0.0, 1e-8);
    let mut theta = Tensor::new(&[1], vec![0.0]).unwrap();
    adam.step(&mut [&mut theta], &[Tensor::new(&[1], vec![4.0]).unwrap()], 0.1)
        .unwrap();
    assert!((theta.data()[0] - (-0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-12);

    println!(
        "[criterion 09] PASS - SGD and Adam single-step updates match hand-derived values \
         within 1e-12"
    );
}

#[test]
fn criterion_10_determinism_and_file_io() {
    let dir = work_dir("c10");

    // byte-identical dataset generation
    let gen_text = |out: &Path| {
        format!(
            "[dataset]\nnum_samples = 40\nimage_size = 16\nnum_classes = 3\nseed = 9\n\
             split = 0.8 0.1 0.1\noutput_dir = {}\n",
            out.display()
        )
    };
    let d1 = dir.join("data1");
    let d2 = dir.join("data2");
    cmd_gen_data(&GenConfig::from_raw(&RawConfig::parse(&gen_text(&d1)).unwrap()).unwrap()).unwrap();
    cmd_gen_data(&GenConfig::from_raw(&RawConfig::parse(&gen_text(&d2)).unwrap()).unwrap()).unwrap();
    // regenerating over an existing directory must also be byte-identical
    cmd_gen_data(&GenConfig::from_raw(&RawConfig::parse(&gen_text(&d1)).unwrap()).unwrap()).unwrap();
    assert_eq!(
        std::fs::read(d1.join("manifest.tsv")).unwrap(),
        std::fs::read(d2.join("manifest.tsv")).unwrap()
    );
    for name in ["images/s000000.ppm", "masks/s000000.pgm", "images/s000039.ppm"] {
        assert_eq!(
            std::fs::read(d1.join(name)).unwrap(),
            std::fs::read(d2.join(name)).unwrap(),
            "{name}"
        );
    }

    // byte-identical training artifacts
    let run_text = |out: &Path| {
        format!(
            "[run]\nregime = half-focus\nlambda = 1.0\nmanifest = {}\nseed = 3\nepochs = 2\n\
             batch_size = 8\noutput_dir = {}\n\
             [network]\ninput = 3 16 16\nclasses = 3\nlayer = conv 4 3 1 1\nlayer = relu\n\
             layer = gap\nlayer = linear 3\nlayer = sigmoid\n\
             [optimizer]\nadam_lr = 1e-3\nswitch_step = 4\npatience = 0\n\
             decay_unit = steps\ndecay_interval = 5\nsgd_lr = 1e-3\n",
            d1.join("manifest.tsv").display(),
            out.display()
        )
    };
    let r1 = dir.join("run1");
    let r2 = dir.join("run2");
    cmd_train(&RunConfig::from_raw(&RawConfig::parse(&run_text(&r1)).unwrap()).unwrap()).unwrap();
    cmd_train(&RunConfig::from_raw(&RawConfig::parse(&run_text(&r2)).unwrap()).unwrap()).unwrap();
    for name in ["checkpoint.pfck", "train_log.tsv", "config.resolved"] {
        assert_eq!(
            std::fs::read(r1.join(name)).unwrap(),
            std::fs::read(r2.join(name)).unwrap(),
            "{name}"
        );
    }

    // evaluation reports are reproducible too
    let e1 = cmd_eval(&r1.join("checkpoint.pfck"), &d1.join("manifest.tsv"), Split::Test).unwrap();
    let e2 = cmd_eval(&r2.join("checkpoint.pfck"), &d2.join("manifest.tsv"), Split::Test).unwrap();
    assert_eq!(
        std::fs::read(&e1.report_tsv).unwrap(),
        std::fs::read(&e2.report_tsv).unwrap()
    );

    // PGM/PPM round-trips are exact at 8-bit quantization
    let mut rng = Rng::new(0xC10);
    for case in 0..5 {
        let gray = Tensor::new(&[1, 7, 9], (0..63).map(|_| rng.next_f64()).collect()).unwrap();
        let quantized = gray.map(|v| (v * 255.0).round_ties_even() / 255.0);
        let path = dir.join(format!("rt_{case}.pgm"));
        pnm::write_pgm(&gray, &path).unwrap();
        assert_eq!(pnm::read_pgm(&path).unwrap(), quantized);

        let rgb = Tensor::new(&[3, 5, 4], (0..60).map(|_| rng.next_f64()).collect()).unwrap();
        let quantized = rgb.map(|v| (v * 255.0).round_ties_even() / 255.0);
        let path = dir.join(format!("rt_{case}.ppm"));
        pnm::write_ppm(&rgb, &path).unwrap();
        assert_eq!(pnm::read_ppm(&path).unwrap(), quantized);
    }

    std::fs::remove_dir_all(&dir).ok();
    println!(
        "[criterion 10] PASS - regeneration, retraining and re-evaluation are byte-identical; \
         image round-trips exact at 8-bit quantization"
    );
}

// Criteria 5 and 6 (directional LUPI benefit and coarse-mask robustness)
// live in their own module so the experiment configuration sits in one place.
mod experiment;

#[test]
fn criterion_05_and_06_directional_benefit_and_bbox_robustness() {
    experiment::run_criteria_5_and_6();
}

//! `train`: the deterministic training loop for all five regimes.
//!
//! Per batch: mean of per-sample gradients, one optimizer step at the
//! schedule's current phase and learning rate. Per epoch: deterministic
//! reshuffle, then mAP on the validation split under test-time input rules
//! (privileged channels zeroed / raw image), which also feeds the
//! over-fitting hand-over.

use crate::config::{MaskCorruption, Regime, RunConfig};
use crate::data_io::{load_split, test_time_input, train_time_input, LoadedSample};
use focusnet_core::data::Split;
use focusnet_core::metrics::average_precision;
use focusnet_core::model::{self, Gradients, Network};
use focusnet_core::optim::{Adam, Phase, Schedule, Sgd};
use focusnet_core::rng::{mix_seed, Rng};
use focusnet_core::{Error, Result};

/// Stream id for the per-epoch shuffle, separating it from other seed uses.
const SHUFFLE_STREAM: u64 = 0x5487_55ff;

pub struct TrainOutputs {
    pub checkpoint: std::path::PathBuf,
    pub log: std::path::PathBuf,
    pub final_val_map: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutputs> {
    let train_set = load_split(
        &cfg.manifest,
        Split::Train,
        cfg.regime.reads_masks(),
        cfg.mask_corruption,
    )?;
    if train_set.is_empty() {
        return Err(Error::Config("manifest has no training samples".into()));
    }
    // validation never uses privileged inputs, so masks are not loaded
    let val_set = load_split(&cfg.manifest, Split::Val, false, MaskCorruption::None)?;

    check_channels(cfg, &train_set[0])?;

    let mut net = Network::build(&cfg.spec, cfg.seed)?;
    let mut schedule = Schedule::new(cfg.schedule.clone())?;
    let mut adam = Adam::new(
        cfg.schedule.adam_beta1,
        cfg.schedule.adam_beta2,
        cfg.schedule.adam_epsilon,
    );
    let mut sgd = Sgd::new(cfg.schedule.sgd_momentum);

    let mode = cfg.regime.focus_mode();
    let mut global_step: u64 = 0;
    let mut log = String::from("epoch\tstep\ttrain_loss\tcls_loss\tpi_loss\tlr\tval_mAP\n");
    let mut final_val_map = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::new(mix_seed(mix_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64)).shuffle(&mut order);

        let (mut sum_total, mut sum_cls, mut sum_pi) = (0.0, 0.0, 0.0);
        let mut last_lr = f64::NAN;

        for batch in order.chunks(cfg.batch_size) {
            let (phase, lr) = schedule.choice(global_step, epoch as u64);
            last_lr = lr;

            let mut grads = Gradients::zeros_like(&net);
            for &idx in batch {
                let sample = &train_set[idx];
                let (input, aux, seg) = train_time_input(cfg.regime, sample)?;
                let sg = model::loss_and_gradients(
                    &net,
                    &input,
                    aux.as_ref(),
                    &sample.labels,
                    seg,
                    mode,
                    cfg.lambda,
                )?;
                if !sg.loss.total.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch} step {global_step} sample {}",
                        sample.id
                    )));
                }
                sum_total += sg.loss.total;
                sum_cls += sg.loss.classification;
                sum_pi += sg.loss.privileged;
                grads.add_scaled(&sg.grads, 1.0)?;
            }
            grads.scale_in_place(1.0 / batch.len() as f64);
            if !grads.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch} step {global_step}"
                )));
            }
            let mut params = net.params_mut();
            match phase {
                Phase::Adam => adam.step(&mut params, grads.slots(), lr)?,
                Phase::Sgd => sgd.step(&mut params, grads.slots(), lr)?,
            }
            global_step += 1;
        }

        let n = train_set.len() as f64;
        let val_map = validation_map(&net, cfg.regime, &val_set)?;
        if val_map.is_finite() {
            schedule.observe_validation_loss(1.0 - val_map);
            final_val_map = val_map;
        }
        log.push_str(&format!(
            "{epoch}\t{global_step}\t{:.6}\t{:.6}\t{:.6}\t{:.6e}\t{:.6}\n",
            sum_total / n,
            sum_cls / n,
            sum_pi / n,
            last_lr,
            val_map
        ));
    }

    std::fs::create_dir_all(&cfg.output_dir)?;
    let checkpoint = cfg.output_dir.join("checkpoint.pfck");
    model::save_checkpoint(&net, &checkpoint)?;
    let log_path = cfg.output_dir.join("train_log.tsv");
    std::fs::write(&log_path, &log)?;
    std::fs::write(cfg.output_dir.join("config.resolved"), cfg.to_resolved_text())?;

    Ok(TrainOutputs {
        checkpoint,
        log: log_path,
        final_val_map,
    })
}

fn check_channels(cfg: &RunConfig, sample: &LoadedSample) -> Result<()> {
    let img_c = sample.image.shape()[0];
    let spec_c = cfg.spec.input_shape.0;
    let want = match cfg.regime {
        Regime::AddedSegMask => img_c + 1,
        _ => img_c,
    };
    if spec_c != want {
        return Err(Error::Config(format!(
            "regime {} over {img_c}-channel images needs input channels {want}, spec has {spec_c}",
            cfg.regime.as_str()
        )));
    }
    Ok(())
}

/// Mean AP over classes with at least one positive; NaN when the split is
/// empty or no class is scorable.
fn validation_map(net: &Network, regime: Regime, val: &[LoadedSample]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let k = net.num_classes();
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(val.len());
    for sample in val {
        let (input, aux) = test_time_input(regime, sample);
        let probs = net.predict(&input, aux.as_ref())?;
        scores.push(probs.data().to_vec());
    }
    let mut aps = Vec::new();
    for class in 0..k {
        let s: Vec<f64> = scores.iter().map(|row| row[class]).collect();
        let l: Vec<bool> = val.iter().map(|v| v.labels.data()[class] == 1.0).collect();
        if let Ok(ap) = average_precision(&s, &l) {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

//! `eval`: score a checkpoint on one split and write the report files.
//!
//! Prediction never sees privileged information: when the checkpoint expects
//! one more channel than the images carry, that channel is fed as zeros.
//! Ground-truth masks are read only for the saliency diagnostics (IoU and
//! outside-mask energy).

use crate::config::MaskCorruption;
use crate::data_io::load_split;
use focusnet_core::data::Split;
use focusnet_core::metrics::{mask_iou, outside_mask_energy, EvalReport};
use focusnet_core::model;
use focusnet_core::saliency;
use focusnet_core::tensor::Tensor;
use focusnet_core::{Error, Result};
use std::path::{Path, PathBuf};

pub struct EvalOutputs {
    pub report: EvalReport,
    pub report_tsv: PathBuf,
    pub metrics_txt: PathBuf,
    pub pr_files: Vec<PathBuf>,
}

pub fn cmd_eval(checkpoint: &Path, manifest: &Path, split: Split) -> Result<EvalOutputs> {
    let net = model::load_checkpoint(checkpoint)?;
    let samples = load_split(manifest, split, true, MaskCorruption::None)?;
    if samples.is_empty() {
        return Err(Error::Config(format!("split '{split}' is empty")));
    }

    let (spec_c, _, _) = net.spec().input_shape;
    let img_c = samples[0].image.shape()[0];
    let zero_aux = if spec_c == img_c + 1 {
        let (h, w) = (samples[0].image.shape()[1], samples[0].image.shape()[2]);
        Some(Tensor::zeros(&[1, h, w]))
    } else if spec_c == img_c {
        None
    } else {
        return Err(Error::Config(format!(
            "checkpoint expects {spec_c} input channels, images have {img_c}"
        )));
    };

    let mut scores = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut ious = Vec::with_capacity(samples.len());
    let mut energies = Vec::with_capacity(samples.len());
    for sample in &samples {
        let (probs, trace) = net.forward_with_trace(&sample.image, zero_aux.as_ref())?;
        scores.push(probs.data().to_vec());
        labels.push(sample.labels.data().iter().map(|&v| v == 1.0).collect::<Vec<bool>>());
        let vis = saliency::forward(&trace)?;
        let seg = sample.mask.as_ref().expect("loaded with masks");
        ious.push(mask_iou(vis.values(), seg, 0.5)?);
        energies.push(outside_mask_energy(vis.values(), seg)?);
    }

    let report = EvalReport::compute(&scores, &labels, &ious, &energies)?;
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let report_tsv = dir.join(format!("eval_{split}_report.tsv"));
    std::fs::write(&report_tsv, report.to_tsv())?;
    let metrics_txt = dir.join(format!("eval_{split}_metrics.txt"));
    std::fs::write(&metrics_txt, report.to_kv())?;
    let mut pr_files = Vec::new();
    for class in 0..net.num_classes() {
        let path = dir.join(format!("eval_{split}_pr_class_{class}.tsv"));
        std::fs::write(&path, report.pr_curve_text(class))?;
        pr_files.push(path);
    }
    Ok(EvalOutputs {
        report,
        report_tsv,
        metrics_txt,
        pr_files,
    })
}

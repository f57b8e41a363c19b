//! Manifest-driven sample loading and the regime-specific input rules.

use crate::config::{MaskCorruption, Regime};
use focusnet_core::data::{self, pnm, Split};
use focusnet_core::tensor::Tensor;
use focusnet_core::{Error, Result};
use std::path::Path;

/// A sample materialized from disk. `mask` is present only when the caller
/// asked for masks (the plain regime never reads them).
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub id: String,
    pub image: Tensor,
    pub mask: Option<Tensor>,
    pub labels: Tensor,
}

/// Load one split. `with_masks` controls whether mask files are opened at
/// all; `corruption` (bounding-box coarsening) applies to the loaded masks.
pub fn load_split(
    manifest: &Path,
    split: Split,
    with_masks: bool,
    corruption: MaskCorruption,
) -> Result<Vec<LoadedSample>> {
    let root = manifest.parent().unwrap_or_else(|| Path::new("."));
    let entries = data::read_manifest(manifest)?;
    let mut out = Vec::new();
    for entry in entries.into_iter().filter(|e| e.split == split) {
        let image = pnm::read_ppm(&root.join(&entry.image_path))?;
        let mask = if with_masks {
            if entry.mask_path.is_empty() {
                return Err(Error::Config(format!(
                    "sample {} has no mask but the regime requires one",
                    entry.id
                )));
            }
            let raw = pnm::read_pgm(&root.join(&entry.mask_path))?;
            let binary = raw.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
            Some(match corruption {
                MaskCorruption::None => binary,
                MaskCorruption::Bbox => data::corrupt_mask_bbox(&binary)?,
            })
        } else {
            None
        };
        let labels = entry.label_tensor();
        out.push(LoadedSample {
            id: entry.id,
            image,
            mask,
            labels,
        });
    }
    Ok(out)
}

/// Training-time inputs for a regime: network input, optional extra input
/// channel, and the segmentation mask the focus losses compare against.
pub fn train_time_input<'a>(
    regime: Regime,
    sample: &'a LoadedSample,
) -> Result<(Tensor, Option<Tensor>, Option<&'a Tensor>)> {
    let need = |m: &'a Option<Tensor>| -> Result<&'a Tensor> {
        m.as_ref().ok_or_else(|| {
            Error::Config(format!("sample {} loaded without its mask", sample.id))
        })
    };
    Ok(match regime {
        Regime::Regular => (sample.image.clone(), None, None),
        Regime::AddedSegMask => (sample.image.clone(), Some(need(&sample.mask)?.clone()), None),
        Regime::SegMole => (mask_input(&sample.image, need(&sample.mask)?)?, None, None),
        Regime::FullFocus | Regime::HalfFocus => {
            (sample.image.clone(), None, Some(need(&sample.mask)?))
        }
    })
}

/// Test-time inputs: privileged information is unavailable, so the extra
/// channel is all zeros and the mole regime sees the raw image.
pub fn test_time_input(regime: Regime, sample: &LoadedSample) -> (Tensor, Option<Tensor>) {
    match regime {
        Regime::AddedSegMask => {
            let (h, w) = (sample.image.shape()[1], sample.image.shape()[2]);
            (sample.image.clone(), Some(Tensor::zeros(&[1, h, w])))
        }
        _ => (sample.image.clone(), None),
    }
}

/// Image with every channel gated by the mask.
fn mask_input(image: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    if mask.shape() != [1, h, w] {
        return Err(Error::ShapeMismatch {
            context: "mask vs image",
            left: mask.shape().to_vec(),
            right: vec![1, h, w],
        });
    }
    let mut out = image.clone();
    for ci in 0..c {
        for i in 0..h * w {
            out.data_mut()[ci * h * w + i] *= mask.data()[i];
        }
    }
    Ok(out)
}

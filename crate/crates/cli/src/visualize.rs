//! `visualize`: saliency mask and red overlay for one image.

use focusnet_core::data::pnm;
use focusnet_core::model;
use focusnet_core::saliency;
use focusnet_core::tensor::Tensor;
use focusnet_core::{Error, Result};
use std::path::{Path, PathBuf};

pub struct VisualizeOutputs {
    pub mask_pgm: PathBuf,
    pub overlay_ppm: PathBuf,
}

pub fn cmd_visualize(checkpoint: &Path, image_path: &Path, out_dir: &Path) -> Result<VisualizeOutputs> {
    let net = model::load_checkpoint(checkpoint)?;
    let image = read_image(image_path)?;
    let (spec_c, _, _) = net.spec().input_shape;
    let img_c = image.shape()[0];
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let aux = if spec_c == img_c + 1 {
        Some(Tensor::zeros(&[1, h, w]))
    } else if spec_c == img_c {
        None
    } else {
        return Err(Error::Config(format!(
            "checkpoint expects {spec_c} input channels, image has {img_c}"
        )));
    };

    let (_, trace) = net.forward_with_trace(&image, aux.as_ref())?;
    let mask = saliency::forward(&trace)?;

    std::fs::create_dir_all(out_dir)?;
    let stem = image_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let mask_pgm = out_dir.join(format!("{stem}_mask.pgm"));
    pnm::write_pgm(mask.values(), &mask_pgm)?;

    let overlay = overlay_red(&image, mask.values())?;
    let overlay_ppm = out_dir.join(format!("{stem}_overlay.ppm"));
    pnm::write_ppm(&overlay, &overlay_ppm)?;

    Ok(VisualizeOutputs {
        mask_pgm,
        overlay_ppm,
    })
}

fn read_image(path: &Path) -> Result<Tensor> {
    let mut magic = [0u8; 2];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        f.read_exact(&mut magic)
            .map_err(|_| Error::Format("image file too short".into()))?;
    }
    match &magic {
        b"P6" => pnm::read_ppm(path),
        b"P5" => pnm::read_pgm(path),
        _ => Err(Error::Format(
            "unsupported image format (want binary PGM or PPM)".into(),
        )),
    }
}

/// Mask added into the red channel, clamped; grayscale inputs are first
/// replicated to RGB.
fn overlay_red(image: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let plane = h * w;
    let mut rgb = if c == 3 {
        image.clone()
    } else {
        let mut data = Vec::with_capacity(3 * plane);
        for _ in 0..3 {
            data.extend_from_slice(&image.data()[..plane]);
        }
        Tensor::new(&[3, h, w], data)?
    };
    for i in 0..plane {
        let v = (rgb.data()[i] + mask.data()[i]).clamp(0.0, 1.0);
        rgb.data_mut()[i] = v;
    }
    Ok(rgb)
}

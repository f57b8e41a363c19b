//! `gen-data`: materialize a synthetic dataset on disk.

use crate::config::GenConfig;
use focusnet_core::data::{self, pnm};
use focusnet_core::Result;
use std::path::Path;

/// Generate every sample, write images/masks/manifest, and copy the resolved
/// config next to them. Re-running with the same config rewrites identical
/// bytes.
pub fn cmd_gen_data(cfg: &GenConfig) -> Result<()> {
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root.join("images"))?;
    std::fs::create_dir_all(root.join("masks"))?;

    let mut entries = Vec::with_capacity(cfg.dataset.num_samples);
    for index in 0..cfg.dataset.num_samples {
        let sample = data::generate_sample(&cfg.dataset, index)?;
        let labels: Vec<bool> = sample.labels.data().iter().map(|&v| v == 1.0).collect();
        let entry = data::manifest_entry(&cfg.dataset, index, &labels);
        pnm::write_ppm(&sample.image, &root.join(&entry.image_path))?;
        pnm::write_pgm(&sample.seg_mask, &root.join(&entry.mask_path))?;
        entries.push(entry);
    }
    data::write_manifest(&entries, &root.join("manifest.tsv"))?;
    std::fs::write(root.join("config.resolved"), cfg.to_resolved_text())?;
    Ok(())
}

/// Path of the manifest a generation run produces.
pub fn manifest_path(output_dir: &Path) -> std::path::PathBuf {
    output_dir.join("manifest.tsv")
}

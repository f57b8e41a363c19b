//! Synthetic dataset generation, mask coarsening, and dataset manifests.
//!
//! Each sample is a small RGB image of 1-3 filled shapes over a uniform
//! background, the binary union mask of the shape pixels, and a multi-hot
//! label vector. Background clutter (lines or speckle clusters) imitates the
//! spurious markers real data carries. Each class has a signature clutter
//! pattern; on training-split samples a configurable fraction of clutter
//! instances use the signature of a class that is actually present, so a
//! classifier can shortcut through the background. On validation and test
//! samples clutter patterns are drawn uniformly instead, which is what makes
//! shortcut reliance measurable.
//!
//! Generation is deterministic per `(seed, index)`; samples can be produced
//! in any order.

pub mod pnm;

use crate::error::{Error, Result};
use crate::rng::{mix_seed, Rng};
use crate::tensor::Tensor;
use std::fmt;
use std::path::Path;

/// Shape families; class `k` uses `shapes[k % shapes.len()]`. The bar kinds
/// are thick oriented strokes whose orientation is the class cue, which puts
/// the discriminative feature inside the segmentation mask by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Disk,
    Square,
    Triangle,
    BarH,
    BarV,
    BarD,
    BarA,
}

impl ShapeKind {
    pub fn parse(s: &str) -> Result<ShapeKind> {
        match s {
            "disk" => Ok(ShapeKind::Disk),
            "square" => Ok(ShapeKind::Square),
            "triangle" => Ok(ShapeKind::Triangle),
            "bar-h" => Ok(ShapeKind::BarH),
            "bar-v" => Ok(ShapeKind::BarV),
            "bar-d" => Ok(ShapeKind::BarD),
            "bar-a" => Ok(ShapeKind::BarA),
            other => Err(Error::Config(format!("unknown shape '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Disk => "disk",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::BarH => "bar-h",
            ShapeKind::BarV => "bar-v",
            ShapeKind::BarD => "bar-d",
            ShapeKind::BarA => "bar-a",
        }
    }
}

/// Clutter pattern family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClutterStyle {
    Lines,
    Speckles,
}

impl ClutterStyle {
    pub fn parse(s: &str) -> Result<ClutterStyle> {
        match s {
            "lines" => Ok(ClutterStyle::Lines),
            "speckles" => Ok(ClutterStyle::Speckles),
            other => Err(Error::Config(format!("unknown clutter style '{other}'"))),
        }
    }
}

/// Dataset split, derived from the sample index: the first `train` fraction
/// of indices, then validation, then test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub num_samples: usize,
    pub image_size: usize,
    pub num_classes: usize,
    pub shapes: Vec<ShapeKind>,
    pub clutter_density: f64,
    pub clutter_style: ClutterStyle,
    /// Fraction of training-split clutter instances whose pattern matches a
    /// class present in the image.
    pub clutter_correlation: f64,
    pub seed: u64,
    /// Train/val/test fractions, summing to 1.
    pub split: (f64, f64, f64),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_samples: 1000,
            image_size: 16,
            num_classes: 3,
            shapes: vec![ShapeKind::Disk, ShapeKind::Square, ShapeKind::Triangle],
            clutter_density: 0.5,
            clutter_style: ClutterStyle::Lines,
            clutter_correlation: 0.6,
            seed: 0,
            split: (0.8, 0.1, 0.1),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be positive".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Config(format!(
                "image_size {} too small for the shape generator (min 8)",
                self.image_size
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("shapes must not be empty".into()));
        }
        for (name, v) in [
            ("clutter_density", self.clutter_density),
            ("clutter_correlation", self.clutter_correlation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {v}")));
            }
        }
        let (a, b, c) = self.split;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be nonnegative and sum to 1, got {a} {b} {c}"
            )));
        }
        Ok(())
    }

    /// (train, val, test) sample counts.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.num_samples;
        let n_train = (self.split.0 * n as f64).floor() as usize;
        let n_val = (self.split.1 * n as f64).floor() as usize;
        (n_train, n_val, n - n_train - n_val)
    }

    pub fn split_of_index(&self, index: usize) -> Split {
        let (n_train, n_val, _) = self.split_counts();
        if index < n_train {
            Split::Train
        } else if index < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn sample_id(&self, index: usize) -> String {
        format!("s{index:06}")
    }
}

/// One generated example: RGB image, binary segmentation mask of the shape
/// pixels, multi-hot labels, and a stable id.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Tensor,
    pub seg_mask: Tensor,
    pub labels: Tensor,
    pub id: String,
}

const CHANNELS: usize = 3;

/// Deterministically generate sample `index`.
pub fn generate_sample(cfg: &DatasetConfig, index: usize) -> Result<Sample> {
    cfg.validate()?;
    if index >= cfg.num_samples {
        return Err(Error::Config(format!(
            "sample index {index} out of range (num_samples {})",
            cfg.num_samples
        )));
    }
    let mut rng = Rng::new(mix_seed(cfg.seed, index as u64));
    let size = cfg.image_size;
    let k = cfg.num_classes;

    let n_objects = 1 + rng.below(3);
    let classes: Vec<usize> = (0..n_objects).map(|_| rng.below(k)).collect();
    let mut labels = vec![0.0; k];
    for &c in &classes {
        labels[c] = 1.0;
    }

    // One dominant clutter signature per image: the background tint and all
    // line/speckle patterns follow it. On the training split it matches a
    // present class for `clutter_correlation` of the images; on held-out
    // splits it is uniform, so the background carries no label information
    // there.
    let split = cfg.split_of_index(index);
    let correlated = split == Split::Train && rng.next_f64() < cfg.clutter_correlation;
    let sig_class = if correlated {
        classes[rng.below(classes.len())]
    } else {
        rng.below(k)
    };

    let tint = 0.04 + 0.22 * sig_class as f64 / (k - 1).max(1) as f64;
    let background = tint + rng.uniform(-0.015, 0.015);
    let mut image = Tensor::filled(&[CHANNELS, size, size], background);
    let mut mask = Tensor::zeros(&[1, size, size]);
    for &class in &classes {
        draw_shape(&mut image, &mut mask, &mut rng, cfg, class)?;
    }

    let n_patterns = (cfg.clutter_density * 5.0).round() as usize;
    for _ in 0..n_patterns {
        draw_clutter(&mut image, &mask, &mut rng, cfg.clutter_style, sig_class);
    }
    let n_speckles = (cfg.clutter_density * 8.0).round() as usize;
    for _ in 0..n_speckles {
        let y = rng.below(size);
        let x = rng.below(size);
        let v = rng.uniform(0.18, 0.3);
        paint(&mut image, &mask, y, x, v, &mut rng);
    }

    Ok(Sample {
        image,
        seg_mask: mask,
        labels: Tensor::new(&[k], labels)?,
        id: cfg.sample_id(index),
    })
}

/// Fill a class shape at a random position and scale, writing both the image
/// and the segmentation mask. Class identity is carried by the geometry;
/// intensity is class-correlated but overlapping across classes.
fn draw_shape(
    image: &mut Tensor,
    mask: &mut Tensor,
    rng: &mut Rng,
    cfg: &DatasetConfig,
    class: usize,
) -> Result<()> {
    let size = cfg.image_size;
    // sized so a couple of objects dominate the frame; thin clutter stays
    // the minority of foreground-looking pixels
    let min_r = (size / 5).max(2);
    let max_r = (size / 3).max(min_r + 1);
    if 2 * max_r + 1 > size {
        return Err(Error::Config(format!(
            "shapes too large for image size {size}"
        )));
    }
    let r = min_r + rng.below(max_r - min_r + 1);
    let cy = r + rng.below(size - 2 * r);
    let cx = r + rng.below(size - 2 * r);
    let k1 = (cfg.num_classes - 1).max(1);
    let base = 0.55 + 0.4 * class as f64 / k1 as f64;
    let intensity = (base + rng.uniform(-0.05, 0.05)).clamp(0.5, 1.0);
    let kind = cfg.shapes[class % cfg.shapes.len()];

    let size_i = size as isize;
    let (cyi, cxi, ri) = (cy as isize, cx as isize, r as isize);
    let mut channel_jitter = [0.0; CHANNELS];
    for j in &mut channel_jitter {
        *j = rng.uniform(-0.06, 0.06);
    }
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let inside = match kind {
                ShapeKind::Disk => dy * dy + dx * dx <= ri * ri,
                ShapeKind::Square => true,
                ShapeKind::Triangle => {
                    // apex at the top row, base at the bottom
                    let row = dy + ri; // 0..=2r
                    dx.abs() <= row / 2
                }
                // thick strokes, thickness 3, spanning the 2r+1 box
                ShapeKind::BarH => dy.abs() <= 1,
                ShapeKind::BarV => dx.abs() <= 1,
                ShapeKind::BarD => (dy - dx).abs() <= 1,
                ShapeKind::BarA => (dy + dx).abs() <= 1,
            };
            if !inside {
                continue;
            }
            let (y, x) = (cyi + dy, cxi + dx);
            if y < 0 || y >= size_i || x < 0 || x >= size_i {
                continue;
            }
            let (y, x) = (y as usize, x as usize);
            mask.set(&[0, y, x], 1.0);
            for c in 0..CHANNELS {
                let v = (intensity + channel_jitter[c]).clamp(0.0, 1.0);
                image.set(&[c, y, x], v);
            }
        }
    }
    Ok(())
}

/// One clutter pattern instance carrying the signature of `sig_class`,
/// painted onto background pixels only.
fn draw_clutter(image: &mut Tensor, mask: &Tensor, rng: &mut Rng, style: ClutterStyle, sig_class: usize) {
    let size = image.shape()[1];
    // clearly above the background, clearly below the shapes: visible enough
    // to be a usable shortcut, separable enough that suppressing it does not
    // force the foreground response down with it
    let v = rng.uniform(0.2, 0.33);
    match style {
        ClutterStyle::Lines => {
            // signature = line orientation
            match sig_class % 4 {
                0 => {
                    let y = rng.below(size);
                    for x in 0..size {
                        paint_fixed(image, mask, y, x, v);
                    }
                }
                1 => {
                    let x = rng.below(size);
                    for y in 0..size {
                        paint_fixed(image, mask, y, x, v);
                    }
                }
                2 => {
                    let off = rng.below(2 * size - 1) as isize - (size as isize - 1);
                    for y in 0..size as isize {
                        let x = y + off;
                        if x >= 0 && x < size as isize {
                            paint_fixed(image, mask, y as usize, x as usize, v);
                        }
                    }
                }
                _ => {
                    let c = rng.below(2 * size - 1) as isize;
                    for y in 0..size as isize {
                        let x = c - y;
                        if x >= 0 && x < size as isize {
                            paint_fixed(image, mask, y as usize, x as usize, v);
                        }
                    }
                }
            }
        }
        ClutterStyle::Speckles => {
            // signature = lattice period of a local dot cluster
            let period = 2 + sig_class % 3;
            let cy = rng.below(size);
            let cx = rng.below(size);
            let reach = 4isize;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if dy.rem_euclid(period as isize) != 0 || dx.rem_euclid(period as isize) != 0 {
                        continue;
                    }
                    let (y, x) = (cy as isize + dy, cx as isize + dx);
                    if y >= 0 && y < size as isize && x >= 0 && x < size as isize {
                        paint_fixed(image, mask, y as usize, x as usize, v);
                    }
                }
            }
        }
    }
}

fn paint_fixed(image: &mut Tensor, mask: &Tensor, y: usize, x: usize, v: f64) {
    if mask.at(&[0, y, x]) != 0.0 {
        return;
    }
    for c in 0..CHANNELS {
        image.set(&[c, y, x], v);
    }
}

fn paint(image: &mut Tensor, mask: &Tensor, y: usize, x: usize, v: f64, rng: &mut Rng) {
    let jitter = rng.uniform(-0.03, 0.03);
    if mask.at(&[0, y, x]) != 0.0 {
        return;
    }
    for c in 0..CHANNELS {
        image.set(&[c, y, x], (v + jitter).clamp(0.0, 1.0));
    }
}

/// Replace every 4-connected foreground component by its filled axis-aligned
/// bounding box. Coarsening only: the result covers the input pointwise.
pub fn corrupt_mask_bbox(mask: &Tensor) -> Result<Tensor> {
    let shape = mask.shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::ShapeMismatch {
            context: "corrupt_mask_bbox expects [1,H,W]",
            left: shape.to_vec(),
            right: vec![1],
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let d = mask.data();
    let mut seen = vec![false; h * w];
    let mut out = Tensor::zeros(shape);
    let mut stack = Vec::new();
    for start in 0..h * w {
        if d[start] == 0.0 || seen[start] {
            continue;
        }
        let (mut y0, mut y1) = (start / w, start / w);
        let (mut x0, mut x1) = (start % w, start % w);
        stack.push(start);
        seen[start] = true;
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            y0 = y0.min(y);
            y1 = y1.max(y);
            x0 = x0.min(x);
            x1 = x1.max(x);
            let mut push = |q: usize| {
                if d[q] != 0.0 && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                out.data_mut()[y * w + x] = 1.0;
            }
        }
    }
    Ok(out)
}

/// One manifest line: id, image and mask paths (relative to the manifest),
/// label bit-string, split tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub labels: Vec<bool>,
    pub split: Split,
}

impl ManifestEntry {
    pub fn label_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.labels.len()],
            self.labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap()
    }
}

/// Manifest entry for sample `index`, with the canonical relative paths.
pub fn manifest_entry(cfg: &DatasetConfig, index: usize, labels: &[bool]) -> ManifestEntry {
    let id = cfg.sample_id(index);
    ManifestEntry {
        image_path: format!("images/{id}.ppm"),
        mask_path: format!("masks/{id}.pgm"),
        id,
        labels: labels.to_vec(),
        split: cfg.split_of_index(index),
    }
}

/// Serialize entries as tab-separated lines, LF endings.
pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let bits: String = e.labels.iter().map(|&b| if b { '1' } else { '0' }).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.id,
            e.image_path,
            e.mask_path,
            bits,
            e.split.as_str()
        ));
    }
    out
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    std::fs::write(path, manifest_to_string(entries))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "manifest line {}: want 5 tab-separated fields, got {}",
                ln + 1,
                fields.len()
            )));
        }
        let labels = fields[3]
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!(
                    "manifest line {}: bad label bit '{other}'",
                    ln + 1
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        entries.push(ManifestEntry {
            id: fields[0].to_string(),
            image_path: fields[1].to_string(),
            mask_path: fields[2].to_string(),
            labels,
            split: Split::parse(fields[4])?,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DatasetConfig {
        DatasetConfig {
            num_samples: 100,
            image_size: 16,
            seed: 7,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn no_clutter_means_uniform_background() {
        let cfg = DatasetConfig {
            clutter_density: 0.0,
            ..cfg()
        };
        let s = generate_sample(&cfg, 3).unwrap();
        // off-mask pixels all share one background value
        let mut bg = None;
        for y in 0..16 {
            for x in 0..16 {
                if s.seg_mask.at(&[0, y, x]) == 0.0 {
                    let v = s.image.at(&[0, y, x]);
                    match bg {
                        None => bg = Some(v),
                        Some(b) => assert_eq!(v, b),
                    }
                } else {
                    // foreground differs from background on every channel
                    assert!(s.image.at(&[0, y, x]) > 0.3);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg();
        let a = generate_sample(&c, 11).unwrap();
        let b = generate_sample(&c, 11).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.seg_mask, b.seg_mask);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.id, b.id);
        let other = generate_sample(&c, 12).unwrap();
        assert_ne!(a.image, other.image);
    }

    #[test]
    fn labels_match_binomial_frequency() {
        let c = DatasetConfig {
            num_samples: 10_000,
            clutter_density: 0.2,
            seed: 13,
            ..cfg()
        };
        let k = c.num_classes as f64;
        // P(class present) for 1-3 independent uniform draws
        let p: f64 = (1..=3).map(|n| 1.0 - (1.0 - 1.0 / k).powi(n)).sum::<f64>() / 3.0;
        let mut counts = vec![0usize; c.num_classes];
        for i in 0..c.num_samples {
            let s = generate_sample(&c, i).unwrap();
            for (cnt, &l) in counts.iter_mut().zip(s.labels.data()) {
                if l == 1.0 {
                    *cnt += 1;
                }
            }
        }
        let sigma = (p * (1.0 - p) / c.num_samples as f64).sqrt();
        for (class, &cnt) in counts.iter().enumerate() {
            let freq = cnt as f64 / c.num_samples as f64;
            assert!(
                (freq - p).abs() < 3.0 * sigma,
                "class {class}: freq {freq}, expected {p} +- {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn clutter_never_marks_the_mask() {
        let c = DatasetConfig {
            clutter_density: 1.0,
            ..cfg()
        };
        for i in 0..20 {
            let s = generate_sample(&c, i).unwrap();
            // mask pixels are exactly the shape pixels: every masked pixel is
            // bright foreground, and mask values are binary
            for v in s.seg_mask.data() {
                assert!(*v == 0.0 || *v == 1.0);
            }
        }
    }

    #[test]
    fn bbox_of_disk_is_circumscribing_square() {
        let mut mask = Tensor::zeros(&[1, 16, 16]);
        let (cy, cx, r) = (8isize, 8isize, 3isize);
        for dy in -r..=r {
            for dx in -r..=r {
                if dy * dy + dx * dx <= r * r {
                    mask.set(&[0, (cy + dy) as usize, (cx + dx) as usize], 1.0);
                }
            }
        }
        let boxed = corrupt_mask_bbox(&mask).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let inside = (y as isize - cy).abs() <= r && (x as isize - cx).abs() <= r;
                assert_eq!(boxed.at(&[0, y, x]), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn bbox_fixed_points() {
        // already-rectangular mask is unchanged
        let mut rect = Tensor::zeros(&[1, 8, 8]);
        for y in 2..5 {
            for x in 3..7 {
                rect.set(&[0, y, x], 1.0);
            }
        }
        assert_eq!(corrupt_mask_bbox(&rect).unwrap(), rect);
        // empty mask stays empty
        let empty = Tensor::zeros(&[1, 8, 8]);
        assert_eq!(corrupt_mask_bbox(&empty).unwrap(), empty);
    }

    #[test]
    fn bbox_covers_input_pointwise() {
        let c = cfg();
        for i in 0..20 {
            let s = generate_sample(&c, i).unwrap();
            let boxed = corrupt_mask_bbox(&s.seg_mask).unwrap();
            for (b, m) in boxed.data().iter().zip(s.seg_mask.data()) {
                assert!(b >= m);
            }
        }
    }

    #[test]
    fn split_counts_follow_fractions() {
        let c = DatasetConfig {
            num_samples: 10,
            split: (0.8, 0.1, 0.1),
            ..cfg()
        };
        assert_eq!(c.split_counts(), (8, 1, 1));
        let splits: Vec<Split> = (0..10).map(|i| c.split_of_index(i)).collect();
        assert_eq!(splits.iter().filter(|s| **s == Split::Train).count(), 8);
        assert_eq!(splits.iter().filter(|s| **s == Split::Val).count(), 1);
        assert_eq!(splits.iter().filter(|s| **s == Split::Test).count(), 1);
    }

    #[test]
    fn manifest_roundtrip_and_shape() {
        let c = DatasetConfig {
            num_samples: 10,
            split: (0.8, 0.1, 0.1),
            ..cfg()
        };
        let entries: Vec<ManifestEntry> = (0..10)
            .map(|i| {
                let s = generate_sample(&c, i).unwrap();
                let labels: Vec<bool> = s.labels.data().iter().map(|&v| v == 1.0).collect();
                manifest_entry(&c, i, &labels)
            })
            .collect();
        let text = manifest_to_string(&entries);
        assert_eq!(text.lines().count(), 10);
        for line in text.lines() {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 5);
            assert_eq!(fields[3].len(), c.num_classes);
        }
        let path = std::env::temp_dir().join(format!("focusnet_manifest_{}", std::process::id()));
        write_manifest(&entries, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(entries, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg();
        c.split = (0.5, 0.2, 0.2);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.image_size = 4;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.clutter_correlation = 1.5;
        assert!(c.validate().is_err());
    }
}

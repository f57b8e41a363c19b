//! Flat `key = value` config files with `[section]` headers.
//!
//! Keys may repeat (layer lists rely on that); `#` starts a comment. Every
//! run writes its fully resolved configuration back into the output
//! directory so an experiment is reproducible from its artifacts alone.

use focusnet_core::data::{ClutterStyle, DatasetConfig, ShapeKind};
use focusnet_core::losses::FocusMode;
use focusnet_core::model::NetworkSpec;
use focusnet_core::optim::{DecayUnit, ScheduleConfig};
use focusnet_core::{Error, Result};
use std::path::{Path, PathBuf};

/// Parsed but untyped config: sections of (key, value, line) entries.
#[derive(Debug, Default)]
pub struct RawConfig {
    sections: Vec<(String, Vec<(String, String, usize)>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut cfg = RawConfig::default();
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {line_no}: unterminated section header")))?;
                cfg.sections.push((name.trim().to_string(), Vec::new()));
                current = Some(cfg.sections.len() - 1);
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected 'key = value', got '{line}'"
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            let Some(section) = current else {
                return Err(Error::Config(format!(
                    "line {line_no}: '{key}' appears before any [section]"
                )));
            };
            cfg.sections[section].1.push((key, value, line_no));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path)?;
        RawConfig::parse(&text)
    }

    fn section(&self, name: &str) -> Option<&[(String, String, usize)]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, entries)| entries.as_slice())
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.section(name).is_some()
    }

    /// Last value wins for singular keys.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section)?
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    /// All values of a repeatable key, in file order.
    pub fn get_all(&self, section: &str, key: &str) -> Vec<&str> {
        self.section(section)
            .map(|entries| {
                entries
                    .iter()
                    .filter(|(k, _, _)| k == key)
                    .map(|(_, v, _)| v.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            Error::Config(format!("missing required key '{key}' in section [{section}]"))
        })
    }

    fn parse_with<T>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| {
                Error::Config(format!("[{section}] {key}: cannot parse '{v}'"))
            }),
        }
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        self.parse_with(section, key, default)
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        self.parse_with(section, key, default)
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        self.parse_with(section, key, default)
    }
}

/// Which experiment arm a training run belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Regular,
    AddedSegMask,
    SegMole,
    FullFocus,
    HalfFocus,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Regime> {
        match s {
            "regular" => Ok(Regime::Regular),
            "added-seg-mask" => Ok(Regime::AddedSegMask),
            "seg-mole" => Ok(Regime::SegMole),
            "full-focus" => Ok(Regime::FullFocus),
            "half-focus" => Ok(Regime::HalfFocus),
            other => Err(Error::Config(format!(
                "unknown regime '{other}' (want regular | added-seg-mask | seg-mole | full-focus | half-focus)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Regular => "regular",
            Regime::AddedSegMask => "added-seg-mask",
            Regime::SegMole => "seg-mole",
            Regime::FullFocus => "full-focus",
            Regime::HalfFocus => "half-focus",
        }
    }

    pub fn focus_mode(self) -> FocusMode {
        match self {
            Regime::FullFocus => FocusMode::Full,
            Regime::HalfFocus => FocusMode::Half,
            _ => FocusMode::Regular,
        }
    }

    /// Every regime except plain training consumes mask files at train time.
    pub fn reads_masks(self) -> bool {
        self != Regime::Regular
    }
}

/// How training masks are degraded before use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskCorruption {
    None,
    Bbox,
}

impl MaskCorruption {
    pub fn parse(s: &str) -> Result<MaskCorruption> {
        match s {
            "none" => Ok(MaskCorruption::None),
            "bbox" => Ok(MaskCorruption::Bbox),
            other => Err(Error::Config(format!(
                "unknown mask_corruption '{other}' (want none | bbox)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskCorruption::None => "none",
            MaskCorruption::Bbox => "bbox",
        }
    }
}

/// Fully resolved training-run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub regime: Regime,
    pub lambda: f64,
    pub manifest: PathBuf,
    pub mask_corruption: MaskCorruption,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub output_dir: PathBuf,
    pub spec: NetworkSpec,
    pub schedule: ScheduleConfig,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<RunConfig> {
        let regime = Regime::parse(raw.require("run", "regime")?)?;
        let manifest = PathBuf::from(raw.require("run", "manifest")?);
        let output_dir = PathBuf::from(raw.require("run", "output_dir")?);
        let mask_corruption = match raw.get("run", "mask_corruption") {
            None => MaskCorruption::None,
            Some(v) => MaskCorruption::parse(v)?,
        };
        let lambda = raw.f64_or("run", "lambda", 1.0)?;
        if lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        let epochs = raw.usize_or("run", "epochs", 10)?;
        let batch_size = raw.usize_or("run", "batch_size", 16)?;
        if epochs == 0 || batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }

        if !raw.has_section("network") {
            return Err(Error::Config("missing [network] section".into()));
        }
        let mut spec_text = String::new();
        if let Some(input) = raw.get("network", "input") {
            spec_text.push_str(&format!("input {input}\n"));
        } else {
            return Err(Error::Config("[network] needs 'input = C H W'".into()));
        }
        if let Some(classes) = raw.get("network", "classes") {
            spec_text.push_str(&format!("classes {classes}\n"));
        } else {
            return Err(Error::Config("[network] needs 'classes = K'".into()));
        }
        for layer in raw.get_all("network", "layer") {
            spec_text.push_str(layer);
            spec_text.push('\n');
        }
        let spec = NetworkSpec::from_text(&spec_text)?;

        let schedule = schedule_from_raw(raw)?;
        schedule.validate()?;

        Ok(RunConfig {
            regime,
            lambda,
            manifest,
            mask_corruption,
            seed: raw.u64_or("run", "seed", 0)?,
            epochs,
            batch_size,
            output_dir,
            spec,
            schedule,
        })
    }

    /// Canonical serialization with every default filled in.
    pub fn to_resolved_text(&self) -> String {
        let mut out = String::from("[run]\n");
        out.push_str(&format!("regime = {}\n", self.regime.as_str()));
        out.push_str(&format!("lambda = {}\n", self.lambda));
        out.push_str(&format!("manifest = {}\n", self.manifest.display()));
        out.push_str(&format!("mask_corruption = {}\n", self.mask_corruption.as_str()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("epochs = {}\n", self.epochs));
        out.push_str(&format!("batch_size = {}\n", self.batch_size));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out.push_str("\n[network]\n");
        let (c, h, w) = self.spec.input_shape;
        out.push_str(&format!("input = {c} {h} {w}\n"));
        out.push_str(&format!("classes = {}\n", self.spec.num_classes));
        for line in self.spec.to_text().lines() {
            if !line.starts_with("input") && !line.starts_with("classes") {
                out.push_str(&format!("layer = {line}\n"));
            }
        }
        let s = &self.schedule;
        out.push_str("\n[optimizer]\n");
        out.push_str(&format!("adam_lr = {}\n", s.adam_lr));
        out.push_str(&format!("adam_beta1 = {}\n", s.adam_beta1));
        out.push_str(&format!("adam_beta2 = {}\n", s.adam_beta2));
        out.push_str(&format!("adam_epsilon = {}\n", s.adam_epsilon));
        out.push_str(&format!("sgd_lr = {}\n", s.sgd_lr));
        out.push_str(&format!("sgd_momentum = {}\n", s.sgd_momentum));
        out.push_str(&format!("switch_step = {}\n", s.switch_step));
        out.push_str(&format!("decay_factor = {}\n", s.decay_factor));
        out.push_str(&format!("decay_interval = {}\n", s.decay_interval));
        out.push_str(&format!(
            "decay_unit = {}\n",
            match s.decay_unit {
                DecayUnit::Steps => "steps",
                DecayUnit::Epochs => "epochs",
            }
        ));
        out.push_str(&format!("lr_min = {}\n", s.lr_min));
        out.push_str(&format!("patience = {}\n", s.patience));
        out
    }
}

fn schedule_from_raw(raw: &RawConfig) -> Result<ScheduleConfig> {
    let d = ScheduleConfig::default();
    let decay_unit = match raw.get("optimizer", "decay_unit") {
        None => d.decay_unit,
        Some("steps") => DecayUnit::Steps,
        Some("epochs") => DecayUnit::Epochs,
        Some(other) => {
            return Err(Error::Config(format!(
                "[optimizer] decay_unit: '{other}' (want steps | epochs)"
            )))
        }
    };
    Ok(ScheduleConfig {
        adam_lr: raw.f64_or("optimizer", "adam_lr", d.adam_lr)?,
        adam_beta1: raw.f64_or("optimizer", "adam_beta1", d.adam_beta1)?,
        adam_beta2: raw.f64_or("optimizer", "adam_beta2", d.adam_beta2)?,
        adam_epsilon: raw.f64_or("optimizer", "adam_epsilon", d.adam_epsilon)?,
        sgd_lr: raw.f64_or("optimizer", "sgd_lr", d.sgd_lr)?,
        sgd_momentum: raw.f64_or("optimizer", "sgd_momentum", d.sgd_momentum)?,
        switch_step: raw.u64_or("optimizer", "switch_step", d.switch_step)?,
        decay_factor: raw.f64_or("optimizer", "decay_factor", d.decay_factor)?,
        decay_interval: raw.u64_or("optimizer", "decay_interval", d.decay_interval)?,
        decay_unit,
        lr_min: raw.f64_or("optimizer", "lr_min", d.lr_min)?,
        patience: raw.usize_or("optimizer", "patience", d.patience)?,
    })
}

/// Dataset-generation config: the [dataset] section plus an output dir.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub dataset: DatasetConfig,
    pub output_dir: PathBuf,
}

impl GenConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<GenConfig> {
        let d = DatasetConfig::default();
        let shapes = match raw.get("dataset", "shapes") {
            None => d.shapes.clone(),
            Some(v) => v
                .split_whitespace()
                .map(ShapeKind::parse)
                .collect::<Result<Vec<_>>>()?,
        };
        let clutter_style = match raw.get("dataset", "clutter_style") {
            None => d.clutter_style,
            Some(v) => ClutterStyle::parse(v)?,
        };
        let split = match raw.get("dataset", "split") {
            None => d.split,
            Some(v) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Config(
                        "[dataset] split wants three fractions 'train val test'".into(),
                    ));
                }
                let f = |s: &str| -> Result<f64> {
                    s.parse()
                        .map_err(|_| Error::Config(format!("[dataset] split: bad fraction '{s}'")))
                };
                (f(parts[0])?, f(parts[1])?, f(parts[2])?)
            }
        };
        let dataset = DatasetConfig {
            num_samples: raw.usize_or("dataset", "num_samples", d.num_samples)?,
            image_size: raw.usize_or("dataset", "image_size", d.image_size)?,
            num_classes: raw.usize_or("dataset", "num_classes", d.num_classes)?,
            shapes,
            clutter_density: raw.f64_or("dataset", "clutter_density", d.clutter_density)?,
            clutter_style,
            clutter_correlation: raw.f64_or("dataset", "clutter_correlation", d.clutter_correlation)?,
            seed: raw.u64_or("dataset", "seed", d.seed)?,
            split,
        };
        dataset.validate()?;
        let output_dir = PathBuf::from(raw.require("dataset", "output_dir")?);
        Ok(GenConfig {
            dataset,
            output_dir,
        })
    }

    pub fn to_resolved_text(&self) -> String {
        let d = &self.dataset;
        let mut out = String::from("[dataset]\n");
        out.push_str(&format!("num_samples = {}\n", d.num_samples));
        out.push_str(&format!("image_size = {}\n", d.image_size));
        out.push_str(&format!("num_classes = {}\n", d.num_classes));
        let shapes: Vec<&str> = d.shapes.iter().map(|s| s.as_str()).collect();
        out.push_str(&format!("shapes = {}\n", shapes.join(" ")));
        out.push_str(&format!("clutter_density = {}\n", d.clutter_density));
        out.push_str(&format!(
            "clutter_style = {}\n",
            match d.clutter_style {
                ClutterStyle::Lines => "lines",
                ClutterStyle::Speckles => "speckles",
            }
        ));
        out.push_str(&format!("clutter_correlation = {}\n", d.clutter_correlation));
        out.push_str(&format!("seed = {}\n", d.seed));
        out.push_str(&format!("split = {} {} {}\n", d.split.0, d.split.1, d.split.2));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN_CFG: &str = "
# comment
[run]
regime = half-focus
lambda = 1.0
manifest = data/manifest.tsv
output_dir = out/run1
seed = 5
epochs = 4
batch_size = 8

[network]
input = 3 16 16
classes = 3
layer = conv 8 3 1 1
layer = relu
layer = resblock 3
layer = gap
layer = linear 3
layer = sigmoid

[optimizer]
adam_lr = 1e-3
switch_step = 1000
";

    #[test]
    fn run_config_parses() {
        let raw = RawConfig::parse(RUN_CFG).unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.regime, Regime::HalfFocus);
        assert_eq!(cfg.spec.input_shape, (3, 16, 16));
        assert_eq!(cfg.spec.layers.len(), 6);
        assert_eq!(cfg.schedule.adam_lr, 1e-3);
        assert_eq!(cfg.schedule.switch_step, 1000);
        // defaults fall through
        assert_eq!(cfg.schedule.sgd_momentum, 0.9);
        assert_eq!(cfg.mask_corruption, MaskCorruption::None);
    }

    #[test]
    fn resolved_text_reparses_identically() {
        let raw = RawConfig::parse(RUN_CFG).unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        let resolved = cfg.to_resolved_text();
        let raw2 = RawConfig::parse(&resolved).unwrap();
        let cfg2 = RunConfig::from_raw(&raw2).unwrap();
        assert_eq!(cfg2.to_resolved_text(), resolved);
    }

    #[test]
    fn errors_name_line_and_field() {
        let err = RawConfig::parse("[run]\nnonsense line\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");

        let raw = RawConfig::parse("[run]\nregime = regular\n").unwrap();
        let err = RunConfig::from_raw(&raw).unwrap_err().to_string();
        assert!(err.contains("manifest"), "{err}");

        let raw = RawConfig::parse("[dataset]\nsplit = 0.5 0.2 0.2\noutput_dir = x\n").unwrap();
        let err = GenConfig::from_raw(&raw).unwrap_err().to_string();
        assert!(err.contains("split"), "{err}");
    }

    #[test]
    fn repeated_layer_keys_keep_order() {
        let raw = RawConfig::parse("[network]\nlayer = conv 4 3 1 1\nlayer = relu\n").unwrap();
        assert_eq!(raw.get_all("network", "layer"), vec!["conv 4 3 1 1", "relu"]);
    }

    #[test]
    fn bad_regime_named() {
        let err = Regime::parse("focus").unwrap_err().to_string();
        assert!(err.contains("focus"), "{err}");
    }
}

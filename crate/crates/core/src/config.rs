//! Run configuration: a flat `key = value` text format that diffs cleanly
//! and snapshots verbatim into every run directory.

use crate::arch::{mini_vgg_spec, vgg16_spec, vgg19_spec, ArchitectureSpec};
use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum ArchChoice {
    Vgg16,
    Vgg19,
    MiniVgg,
    SpecFile(PathBuf),
}

impl ArchChoice {
    pub fn parse(s: &str) -> Result<ArchChoice> {
        match s {
            "vgg16" => Ok(ArchChoice::Vgg16),
            "vgg19" => Ok(ArchChoice::Vgg19),
            "mini-vgg" => Ok(ArchChoice::MiniVgg),
            other => match other.strip_prefix("spec:") {
                Some(path) => Ok(ArchChoice::SpecFile(PathBuf::from(path))),
                None => Err(Error::Config(format!(
                    "unknown architecture '{other}' (expected vgg16, vgg19, mini-vgg, or spec:<path>)"
                ))),
            },
        }
    }

    pub fn to_key(&self) -> String {
        match self {
            ArchChoice::Vgg16 => "vgg16".into(),
            ArchChoice::Vgg19 => "vgg19".into(),
            ArchChoice::MiniVgg => "mini-vgg".into(),
            ArchChoice::SpecFile(p) => format!("spec:{}", p.display()),
        }
    }

    /// Default input side length when the config does not override it.
    pub fn default_input_side(&self) -> usize {
        match self {
            ArchChoice::MiniVgg => 32,
            _ => crate::augment::RESIZE_SIDE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchChoice,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub folds: usize,
    pub seed: u64,
    pub input_side: usize,
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    pub augment: AugmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchChoice::Vgg16,
            epochs: 200,
            batch_size: 32,
            lr: 0.0001,
            dropout: 0.3,
            folds: 5,
            seed: 0,
            input_side: crate::augment::RESIZE_SIDE,
            data_root: PathBuf::new(),
            out_dir: PathBuf::from("runs"),
            augment: AugmentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut input_side_set = false;
        let mut arch_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} '{value}'", lineno + 1))
            };
            match key {
                "arch" => {
                    cfg.arch = ArchChoice::parse(value)?;
                    arch_set = true;
                }
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("integer"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("number"))?,
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad("number"))?,
                "folds" => cfg.folds = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "input_side" => {
                    cfg.input_side = value.parse().map_err(|_| bad("integer"))?;
                    input_side_set = true;
                }
                "data_root" => cfg.data_root = PathBuf::from(value),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "aug.rotation_deg" => {
                    cfg.augment.rotation_deg = value.parse().map_err(|_| bad("number"))?
                }
                "aug.width_shift_frac" => {
                    cfg.augment.width_shift_frac = value.parse().map_err(|_| bad("number"))?
                }
                "aug.height_shift_frac" => {
                    cfg.augment.height_shift_frac = value.parse().map_err(|_| bad("number"))?
                }
                "aug.shear_deg_ccw" => {
                    cfg.augment.shear_deg_ccw = value.parse().map_err(|_| bad("number"))?
                }
                "aug.zoom_frac" => {
                    cfg.augment.zoom_frac = value.parse().map_err(|_| bad("number"))?
                }
                "aug.channel_shift" => {
                    cfg.augment.channel_shift = value.parse().map_err(|_| bad("number"))?
                }
                "aug.hflip" => cfg.augment.hflip = value.parse().map_err(|_| bad("bool"))?,
                "aug.vflip" => cfg.augment.vflip = value.parse().map_err(|_| bad("bool"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if arch_set && !input_side_set {
            cfg.input_side = cfg.arch.default_input_side();
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        RunConfig::parse(&text)
    }

    /// Every key resolved, suitable as the run-directory snapshot.
    pub fn to_text(&self) -> String {
        let a = &self.augment;
        format!(
            "arch = {}\n\
             epochs = {}\n\
             batch_size = {}\n\
             lr = {}\n\
             dropout = {}\n\
             folds = {}\n\
             seed = {}\n\
             input_side = {}\n\
             data_root = {}\n\
             out_dir = {}\n\
             aug.rotation_deg = {}\n\
             aug.width_shift_frac = {}\n\
             aug.height_shift_frac = {}\n\
             aug.shear_deg_ccw = {}\n\
             aug.zoom_frac = {}\n\
             aug.channel_shift = {}\n\
             aug.hflip = {}\n\
             aug.vflip = {}\n",
            self.arch.to_key(),
            self.epochs,
            self.batch_size,
            self.lr,
            self.dropout,
            self.folds,
            self.seed,
            self.input_side,
            self.data_root.display(),
            self.out_dir.display(),
            a.rotation_deg,
            a.width_shift_frac,
            a.height_shift_frac,
            a.shear_deg_ccw,
            a.zoom_frac,
            a.channel_shift,
            a.hflip,
            a.vflip,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (batch norm needs it in training)".into(),
            ));
        }
        if self.folds < 2 || self.folds > 31 {
            return Err(Error::Config(format!(
                "folds must be in 2..=31, got {}",
                self.folds
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.input_side < 4 {
            return Err(Error::Config(format!(
                "input_side must be at least 4, got {}",
                self.input_side
            )));
        }
        self.augment
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Materializes the configured architecture at the configured input
    /// size and dropout.
    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let input = (self.input_side, self.input_side, 3);
        let spec = match &self.arch {
            ArchChoice::Vgg16 => vgg16_spec(3, self.dropout, input),
            ArchChoice::Vgg19 => vgg19_spec(3, self.dropout, input),
            ArchChoice::MiniVgg => mini_vgg_spec(3, self.dropout, input),
            ArchChoice::SpecFile(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                ArchitectureSpec::parse(&text)?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let mut cfg = RunConfig::default();
        cfg.data_root = PathBuf::from("data");
        let text = cfg.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("learning_rate = 0.1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn arch_choice_sets_default_input_side() {
        let cfg = RunConfig::parse("arch = mini-vgg").unwrap();
        assert_eq!(cfg.input_side, 32);
        let cfg = RunConfig::parse("arch = vgg16").unwrap();
        assert_eq!(cfg.input_side, 182);
        // Explicit input_side wins regardless of order.
        let cfg = RunConfig::parse("input_side = 64\narch = mini-vgg").unwrap();
        assert_eq!(cfg.input_side, 64);
    }

    #[test]
    fn zero_epochs_fails_validation() {
        let cfg = RunConfig::parse("epochs = 0").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn batch_size_of_one_fails_validation() {
        let cfg = RunConfig::parse("batch_size = 1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n\nepochs = 7\n").unwrap();
        assert_eq!(cfg.epochs, 7);
    }
}

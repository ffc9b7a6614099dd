//! Flat `key = value` run configuration: file first, command-line overrides
//! second, unknown keys rejected, effective settings echoed to the output
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sgn_core::lif::LifParams;
use sgn_core::model::{ModelConfig, TrainConfig};
use sgn_core::wavelet::HighPassMode;

use crate::CliError;

/// Every accepted key with its default rendering and a short description.
const SCHEMA: &[(&str, &str, &str)] = &[
    ("profile", "full", "channel profile: full or tiny"),
    ("graph", "ntu25", "skeleton graph: ntu25, nwucla20, or a graph file path"),
    ("joints", "25", "joint count; must match the graph"),
    ("frames", "16", "frames per sequence after resizing"),
    ("classes", "60", "number of action classes"),
    ("relations", "3", "adjacency-power relation slices"),
    ("heads", "4", "attention heads"),
    ("k", "8", "attention neighbors per joint"),
    ("k_topo", "6", "wavelet-branch neighbors per joint"),
    ("wavelet_m", "8", "wavelet coefficient count"),
    ("levels", "3", "decomposition levels, or auto"),
    ("alpha_init", "0.7", "topology/similarity blend initial value"),
    ("lambda_init", "0.1", "low-band fusion strength initial value"),
    ("beta_init", "1.0", "branch blend initial value"),
    ("dropout", "0.3", "dropout rate before the classifier"),
    ("scale_similarity", "true", "scale Q.K dot products by 1/d"),
    ("high_pass", "scaled", "wavelet high pass: scaled or ortho"),
    ("rebinarize", "false", "clamp block outputs back to {0,1}"),
    ("tau", "2.0", "membrane time constant"),
    ("v_rest", "0.0", "resting potential"),
    ("resistance", "1.0", "membrane resistance"),
    ("v_th", "1.0", "firing threshold"),
    ("surrogate_width", "1.0", "rectangular surrogate window width"),
    ("seed", "1", "model initialization seed"),
    ("lr", "0.1", "learning rate"),
    ("momentum", "0.9", "SGD momentum"),
    ("weight_decay", "0.0001", "weight decay on non-excluded parameters"),
    ("batch", "64", "mini-batch size"),
    ("epochs", "150", "training epochs"),
    ("lr_decay_epoch", "110", "epoch at which the learning rate steps down"),
    ("lr_decay", "0.1", "learning-rate step factor"),
    ("train_seed", "1", "shuffling and dropout seed"),
    ("target_accuracy", "none", "early-stop test accuracy, or none"),
    ("aux_loss_weight", "0.03", "auxiliary loss weight (accepted, unused)"),
    ("sample_cap", "64", "samples used for firing-rate measurement"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: SCHEMA
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    /// Parse a config file of `key = value` lines (empty lines and `#`
    /// comments ignored) over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("reading config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!(
                    "{}:{}: expected key = value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Set one key, rejecting anything outside the schema.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !SCHEMA.iter().any(|(k, _, _)| *k == key) {
            return Err(CliError::config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CliError::config(format!("override must be key=value, got {item:?}"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| CliError::config(format!("bad value for {key}: {:?}", self.raw(key))))
    }

    fn parse_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::config(format!("bad boolean for {key}: {other:?}"))),
        }
    }

    pub fn graph_spec(&self) -> &str {
        self.raw("graph")
    }

    pub fn sample_cap(&self) -> Result<usize, CliError> {
        self.parse("sample_cap")
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let tiny = match self.raw("profile") {
            "full" => false,
            "tiny" => true,
            other => return Err(CliError::config(format!("unknown profile {other:?}"))),
        };
        let base = if tiny { ModelConfig::tiny() } else { ModelConfig::default() };
        let levels = match self.raw("levels") {
            "auto" => None,
            _ => Some(self.parse::<usize>("levels")?),
        };
        let high_pass = match self.raw("high_pass") {
            "scaled" => HighPassMode::ScaledLowPass,
            "ortho" => HighPassMode::OrthoComplement,
            other => return Err(CliError::config(format!("unknown high_pass {other:?}"))),
        };
        let lif = LifParams {
            tau: self.parse("tau")?,
            v_rest: self.parse("v_rest")?,
            r: self.parse("resistance")?,
            v_th: self.parse("v_th")?,
            surrogate_width: self.parse("surrogate_width")?,
        };
        Ok(ModelConfig {
            joints: self.parse("joints")?,
            frames: self.parse("frames")?,
            num_classes: self.parse("classes")?,
            relations: self.parse("relations")?,
            heads: self.parse("heads")?,
            k: self.parse("k")?,
            k_topo: self.parse("k_topo")?,
            wavelet_m: self.parse("wavelet_m")?,
            levels,
            lif,
            alpha_init: self.parse("alpha_init")?,
            lambda_init: self.parse("lambda_init")?,
            beta_init: self.parse("beta_init")?,
            dropout: self.parse("dropout")?,
            scale_similarity: self.parse_bool("scale_similarity")?,
            high_pass,
            rebinarize: self.parse_bool("rebinarize")?,
            seed: self.parse("seed")?,
            ..base
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let target = match self.raw("target_accuracy") {
            "none" => None,
            _ => Some(self.parse::<f64>("target_accuracy")?),
        };
        Ok(TrainConfig {
            lr: self.parse("lr")?,
            momentum: self.parse("momentum")?,
            weight_decay: self.parse("weight_decay")?,
            batch_size: self.parse("batch")?,
            epochs: self.parse("epochs")?,
            lr_decay_epoch: self.parse("lr_decay_epoch")?,
            lr_decay: self.parse("lr_decay")?,
            seed: self.parse("train_seed")?,
            target_accuracy: target,
            aux_loss_weight: self.parse("aux_loss_weight")?,
        })
    }

    /// Render the effective configuration, one sorted key per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Write the effective configuration into the output directory.
    pub fn echo_to(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("creating {}: {e}", dir.display())))?;
        let path = dir.join("effective_config.txt");
        std::fs::write(&path, self.render())
            .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
    }

    /// Serialize for embedding into checkpoints.
    pub fn to_text(&self) -> String {
        self.render()
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("bad embedded config line {line:?}")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

/// One-line help text for every accepted key.
pub fn schema_help() -> String {
    let mut out = String::from("configuration keys (key = value):\n");
    for (key, default, desc) in SCHEMA {
        let _ = writeln!(out, "  {key:<18} default {default:<8} {desc}");
    }
    out
}

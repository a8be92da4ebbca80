//! Flat `key = value` configuration covering the model, training and
//! decoding.
//!
//! ```text
//! # comments run to the end of the line
//! preset = desk          # or full; applied before any other key
//! model = binary_checklist
//! input_rep = lattice
//! lambda_rl = 1.0
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use crate::checklist::RecencyAnchor;
use crate::decode::DecodeMode;
use crate::encode::Representation;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeMode,
    pub beam_width: usize,
}

impl Config {
    pub fn desk() -> Self {
        Config {
            model: ModelConfig::desk(),
            train: TrainConfig {
                lr: 1e-3,
                epochs: 30,
                ..TrainConfig::default()
            },
            decode: DecodeMode::Beam,
            beam_width: 10,
        }
    }

    pub fn full() -> Self {
        Config {
            model: ModelConfig::full(),
            train: TrainConfig::default(),
            decode: DecodeMode::Beam,
            beam_width: 10,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses config text on top of the desk preset (or the preset the text
    /// names). Unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            entries.push((n + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let mut seen = BTreeSet::new();
        for (n, key, _) in &entries {
            let canonical = if key == "checklist" { "model" } else { key.as_str() };
            if !seen.insert(canonical.to_string()) {
                return Err(Error::Config(format!("line {n}: `{key}` given twice")));
            }
        }
        let mut config = match entries.iter().find(|(_, k, _)| k == "preset") {
            Some((n, _, v)) => Self::preset(v).ok_or_else(|| Error::Config(format!("line {n}: unknown preset `{v}`")))?,
            None => Self::desk(),
        };
        for (n, key, value) in &entries {
            if key != "preset" {
                config
                    .set(key, value)
                    .map_err(|e| Error::Config(format!("line {n}: {e}")))?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key; also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("bad value `{value}` for {key}"))
        }
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "model" | "checklist" => {
                m.kind = ModelKind::parse(value).ok_or_else(|| format!("unknown model `{value}`"))?
            }
            "input_rep" => {
                m.input_rep =
                    Representation::parse(value).ok_or_else(|| format!("unknown input_rep `{value}`"))?
            }
            "hidden" => m.hidden = num(key, value)?,
            "layers" => m.layers = num(key, value)?,
            "mlp_hidden" => m.mlp_hidden = num(key, value)?,
            "mlp_layers" => m.mlp_layers = num(key, value)?,
            "dropout" => m.dropout = num(key, value)?,
            "d" => m.d = num(key, value)?,
            "d_check" => m.d_check = num(key, value)?,
            "recency_ms" => m.recency.window = num::<f64>(key, value)? / 1000.0,
            "recency_anchor" => {
                m.recency.anchor =
                    RecencyAnchor::parse(value).ok_or_else(|| format!("unknown recency_anchor `{value}`"))?
            }
            "lr" => t.lr = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "lambda_rl" => t.lambda_rl = num(key, value)?,
            "chunk_len" => t.chunk_len = num(key, value)?,
            "baseline_window" => t.baseline_window = num(key, value)?,
            "warmup_epochs" => t.warmup_epochs = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "eval_every" => t.eval_every = num(key, value)?,
            "reward_disjoint" => t.reward_disjoint = num(key, value)?,
            "beam_width" => self.beam_width = num(key, value)?,
            "decode" => self.decode = DecodeMode::parse(value).ok_or_else(|| format!("unknown decode `{value}`"))?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Every key with its value, one per line, in a fixed order. Parsing
    /// the result gives back an equal config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let lines = [
            ("model", m.kind.name().to_string()),
            ("input_rep", m.input_rep.name().to_string()),
            ("hidden", m.hidden.to_string()),
            ("layers", m.layers.to_string()),
            ("mlp_hidden", m.mlp_hidden.to_string()),
            ("mlp_layers", m.mlp_layers.to_string()),
            ("dropout", m.dropout.to_string()),
            ("d", m.d.to_string()),
            ("d_check", m.d_check.to_string()),
            ("recency_ms", (m.recency.window * 1000.0).to_string()),
            ("recency_anchor", m.recency.anchor.name().to_string()),
            ("lr", t.lr.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lambda_rl", t.lambda_rl.to_string()),
            ("chunk_len", t.chunk_len.to_string()),
            ("baseline_window", t.baseline_window.to_string()),
            ("warmup_epochs", t.warmup_epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("reward_disjoint", t.reward_disjoint.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("decode", self.decode.name().to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The echo minus keys that may change when a run is extended.
    pub fn resume_key(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("epochs ="))
            .map(|l| format!("{l}\n"))
            .collect()
    }
}

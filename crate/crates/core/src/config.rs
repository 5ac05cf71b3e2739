//! Run configuration as flat `section.key = value` text.
//!
//! Every key corresponds to a field of [`RunConfig`]; unknown keys and
//! values of the wrong type are rejected with their line number. Omitted
//! keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fit::OptimConfig;
use crate::nn::TrainConfig;
use crate::synth::DatasetConfig;

/// What `generate` keeps from each sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputVariant {
    Raw,
    SimOptim,
    AdvOptim,
}

impl std::str::FromStr for OutputVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(OutputVariant::Raw),
            "simoptim" => Ok(OutputVariant::SimOptim),
            "advoptim" => Ok(OutputVariant::AdvOptim),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant `{s}` (raw, simoptim, advoptim)"
            ))),
        }
    }
}

impl OutputVariant {
    pub fn name(self) -> &'static str {
        match self {
            OutputVariant::Raw => "raw",
            OutputVariant::SimOptim => "simoptim",
            OutputVariant::AdvOptim => "advoptim",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub count: usize,
    /// Sample `i` uses seed `seed + i`.
    pub seed: u64,
    pub variant: OutputVariant,
    /// `synth:SEED`, a mesh path, or empty for the first test scene of the
    /// dataset section.
    pub scene: String,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 50,
            seed: 0,
            variant: OutputVariant::AdvOptim,
            scene: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub clusters: usize,
    pub seed: u64,
    pub include_translation: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            clusters: 20,
            seed: 0,
            include_translation: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub optim: OptimConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

fn slot<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(part)?,
            _ => return None,
        };
    }
    (!cur.is_object()).then_some(cur)
}

fn parse_value(old: &Value, text: &str) -> std::result::Result<Value, String> {
    let unquoted = text
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(text);
    match old {
        Value::String(_) => Ok(Value::String(unquoted.to_string())),
        Value::Bool(_) => match text {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{text}`")),
        },
        Value::Number(_) | Value::Array(_) | Value::Null => {
            serde_json::from_str::<Value>(text).map_err(|e| format!("bad value `{text}`: {e}"))
        }
        Value::Object(_) => Err("not a leaf key".into()),
    }
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut root = serde_json::to_value(RunConfig::default()).expect("config serializes");
        let err = |line: usize, msg: String| Error::Format {
            path: source.to_string(),
            line,
            msg,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let target =
                slot(&mut root, key).ok_or_else(|| err(i + 1, format!("unknown key `{key}`")))?;
            *target = parse_value(target, value).map_err(|m| err(i + 1, format!("{key}: {m}")))?;
            // catch type errors at the offending line
            serde_json::from_value::<RunConfig>(root.clone())
                .map_err(|e| err(i + 1, format!("{key}: {e}")))?;
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| err(0, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.optim.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 || !(self.train.learning_rate > 0.0)
        {
            return Err(Error::Config(
                "train.epochs, train.batch_size and train.learning_rate must be positive".into(),
            ));
        }
        if self.eval.clusters == 0 {
            return Err(Error::Config("eval.clusters must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, sorted.
    pub fn to_text(&self) -> String {
        let mut flat = Vec::new();
        flatten(
            "",
            &serde_json::to_value(self).expect("config serializes"),
            &mut flat,
        );
        flat.sort_by(|a, b| a.0.cmp(&b.0));
        let mut s = String::new();
        for (k, v) in flat {
            let text = match v {
                Value::String(x) => x,
                other => other.to_string(),
            };
            s.push_str(&format!("{k} = {text}\n"));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::Variant;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_text(), "mem").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# desk run\ndataset.placements = 12\ntrain.widths = [64, 32]\noptim.variant = simoptim  # trailing\n\ngenerate.scene = synth:5\neval.include_translation = true\ndataset.scene.extent = [4.0, 5.0]\n";
        let cfg = RunConfig::parse(text, "mem").unwrap();
        assert_eq!(cfg.dataset.placements, 12);
        assert_eq!(cfg.train.widths, [64, 32]);
        assert_eq!(cfg.optim.variant, Variant::SimOptim);
        assert_eq!(cfg.generate.scene, "synth:5");
        assert!(cfg.eval.include_translation);
        assert_eq!(cfg.dataset.scene.extent, [4.0, 5.0]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for (text, line) in [
            ("dataset.placement = 3", 1),
            ("\ntrain.epochs = many", 2),
            ("optim.variant = fast", 1),
            ("dataset = 3", 1),
            ("train.epochs", 1),
        ] {
            match RunConfig::parse(text, "c.conf") {
                Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            RunConfig::parse("train.epochs = 0", "c"),
            Err(Error::Config(_))
        ));
    }
}

// Checkpoint file: one JSON object.
//
//   format         "dcmrta-policy/1"
//   embed_dim      E
//   normalization  {"scheme": "layout_diagonal", "nominal_speed": f64}
//   reward_mode    "measured" | "estimate"
//   train_config   TrainConfig as written by training (may be null)
//   tensors        [{"name", "shape", "data"}] in tensor_specs order, data
//                  row-major f64 printed with round-trip precision

use super::features::NormalizationSpec;
use super::network::{tensor_specs, Policy};
use super::train::{RewardMode, TrainConfig};
use super::RlError;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "dcmrta-policy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    embed_dim: usize,
    normalization: NormalizationSpec,
    reward_mode: RewardMode,
    train_config: Option<TrainConfig>,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy,
    pub normalization: NormalizationSpec,
    pub reward_mode: RewardMode,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn new(policy: Policy, config: &TrainConfig) -> Self {
        Checkpoint {
            policy,
            normalization: config.normalization(),
            reward_mode: config.reward_mode,
            train_config: Some(config.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        let tensors = tensor_specs(self.policy.embed_dim())
            .into_iter()
            .enumerate()
            .map(|(i, (name, shape))| TensorRecord {
                name: name.to_string(),
                shape,
                data: self.policy.tensor(i).to_vec(),
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            embed_dim: self.policy.embed_dim(),
            normalization: self.normalization,
            reward_mode: self.reward_mode,
            train_config: self.train_config.clone(),
            tensors,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RlError> {
        let bad = |m: String| RlError::Checkpoint(m);
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unsupported format {:?}", file.format)));
        }
        let specs = tensor_specs(file.embed_dim);
        if file.tensors.len() != specs.len() {
            return Err(bad(format!("expected {} tensors, found {}", specs.len(), file.tensors.len())));
        }
        let mut params = Vec::new();
        for ((name, shape), t) in specs.iter().zip(&file.tensors) {
            if t.name != *name || t.shape != *shape {
                return Err(bad(format!("tensor {} {:?} does not match expected {name} {shape:?}", t.name, t.shape)));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(bad(format!("tensor {name} has {} values", t.data.len())));
            }
            params.extend_from_slice(&t.data);
        }
        let policy = Policy::from_params(file.embed_dim, params).ok_or_else(|| bad("parameter count".into()))?;
        if !policy.is_finite() {
            return Err(bad("non-finite weights".into()));
        }
        if !(file.normalization.nominal_speed > 0.0) {
            return Err(bad("nominal speed must be positive".into()));
        }
        Ok(Checkpoint {
            policy,
            normalization: file.normalization,
            reward_mode: file.reward_mode,
            train_config: file.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RlError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RlError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let policy = Policy::new(8, &mut ChaCha8Rng::seed_from_u64(4));
        Checkpoint::new(policy, &TrainConfig { embed_dim: 8, nominal_speed: 1.0, ..TrainConfig::default() })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        let bits = |p: &Policy| p.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.policy), bits(&c.policy));
    }

    #[test]
    fn rejects_wrong_shapes_and_formats() {
        let text = sample().to_json();
        let other = text.replacen(CHECKPOINT_FORMAT, "something-else/9", 1);
        assert!(matches!(Checkpoint::from_json(&other), Err(RlError::Checkpoint(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"][0]["data"].as_array_mut().unwrap().pop();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }
}

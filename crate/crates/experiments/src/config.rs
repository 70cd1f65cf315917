use anyhow::{ensure, Result};
use dbprop::{Checkpoint, LayerConfig, NetworkConfig};
use serde::{Deserialize, Serialize};

/// Regression target for the toy problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Sin,
    Identity,
}

impl Target {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Target::Sin => x.sin(),
            Target::Identity => x,
        }
    }
}

/// Everything that determines a sine-toy run. Every field has a default, so
/// `{}` is a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Dataset size `N`.
    pub n: usize,
    /// Mini-batch size `M`.
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub target: Target,
    pub mse_target: f64,
    pub network: NetworkConfig,
    /// Input the single-sample sweeps are pinned near.
    pub sample_point: f64,
    pub sweep_points: usize,
    /// Default parameter sweeps cover `value ± sweep_half_width`.
    pub sweep_half_width: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n: 1500,
            batch: 256,
            epochs: 2000,
            learning_rate: 0.05,
            momentum: 0.9,
            target: Target::Sin,
            mse_target: 0.01,
            network: sine_network(0),
            sample_point: 1.022,
            sweep_points: 2001,
            sweep_half_width: 2.0,
        }
    }
}

/// `1 → 8 → 5 → 1` with ReLU hidden layers and a linear output.
pub fn sine_network(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input: vec![1],
        seed,
        layers: vec![
            LayerConfig::dense(8, "relu"),
            LayerConfig::dense(5, "relu"),
            LayerConfig::dense(1, "identity"),
        ],
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n >= 1, "dataset size must be at least 1");
        ensure!(self.batch >= 1, "batch size must be at least 1");
        ensure!(self.sweep_points >= 2, "sweep resolution must be at least 2");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive"
        );
        ensure!((0.0..1.0).contains(&self.momentum), "momentum must lie in [0, 1)");
        ensure!(self.sweep_half_width > 0.0, "sweep half-width must be positive");
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A trained sine model together with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub experiment: ExperimentConfig,
    pub checkpoint: Checkpoint,
    pub train_mse: f64,
    pub epochs_run: usize,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
        let cfg = ExperimentConfig::from_json(r#"{"seed":4,"target":"identity"}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.target, Target::Identity);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [r#"{"n":0}"#, r#"{"batch":0}"#, r#"{"sweep_points":1}"#, r#"{"momentum":1.0}"#, r#"{"nope":1}"#] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }
}

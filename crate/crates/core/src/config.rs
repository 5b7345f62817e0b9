//! The resolved experiment configuration: every knob a run depends on,
//! in one serializable struct. Run directories echo it back as TOML so a
//! finished experiment can be reproduced from its own artifact.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{Model, TrainConfig};
use crate::regularizer::WeightScheme;
use crate::temporal_graph::{Delimiter, Slicing, TrainAggregation, ValueTransform};

/// Which experiment shape to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One model, one parameter set.
    #[default]
    Run,
    /// One run per theta in `theta_grid`.
    Sweep,
    /// One run per model in `models`, on the identical split.
    Compare,
}

/// All parameters of an experiment, fully resolved (no hidden defaults:
/// what this struct says is what runs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Path to an edge list or canonical network file, or a
    /// `synthetic:` generator spec.
    pub input: String,
    pub delimiter: Delimiter,
    pub has_header: bool,
    /// Bin timestamps into this many equal-width slices. Leave unset for
    /// inputs that carry their own slicing (explicit column, canonical
    /// files, synthetic specs).
    pub num_slices: Option<usize>,
    /// Take 1-based slice indices from the input's fifth column.
    pub explicit_slices: bool,
    pub transform: ValueTransform,
    pub aggregation: TrainAggregation,
    pub model: Model,
    pub k: usize,
    pub alpha: f64,
    pub theta: f64,
    /// Sweep mode only: the theta values to run.
    pub theta_grid: Option<Vec<f64>>,
    /// Compare mode only: the models to run (at least two).
    pub models: Option<Vec<Model>>,
    pub weight_scheme: WeightScheme,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub lambda_scaling: bool,
    /// Zero all wall-time fields in emitted CSVs and force sequential
    /// execution, making artifacts byte-reproducible.
    pub deterministic: bool,
    /// Directory the run artifact is written into.
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Run,
            input: String::new(),
            delimiter: Delimiter::Comma,
            has_header: false,
            num_slices: None,
            explicit_slices: false,
            transform: ValueTransform::Log1p,
            aggregation: TrainAggregation::DecayedSum,
            model: Model::Grnlfa,
            k: 20,
            alpha: 0.01,
            theta: 0.5,
            theta_grid: None,
            models: None,
            weight_scheme: WeightScheme::CoSenderProduct,
            max_epochs: 1000,
            tolerance: 1e-5,
            epsilon: 1e-8,
            seed: 42,
            lambda_scaling: true,
            deterministic: true,
            output: PathBuf::from("grnlfa-out"),
        }
    }
}

impl ExperimentConfig {
    /// Check every field against the ranges the pipeline assumes,
    /// reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input.is_empty() {
            problems.push("input: a file path or 'synthetic:' spec is required".into());
        }
        if self.k < 1 {
            problems.push(format!("k must be >= 1, got {}", self.k));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            problems.push(format!("theta must be in (0, 1], got {}", self.theta));
        }
        if self.max_epochs < 1 {
            problems.push(format!("max-epochs must be >= 1, got {}", self.max_epochs));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            problems.push(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            problems.push(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            ));
        }
        if let Some(t) = self.num_slices {
            if t < 3 {
                problems.push(format!("num-slices must be >= 3, got {t}"));
            }
            if self.explicit_slices {
                problems.push("num-slices and explicit-slices are mutually exclusive".into());
            }
        }
        if self.input.starts_with("synthetic:")
            && (self.num_slices.is_some() || self.explicit_slices)
        {
            problems.push(
                "synthetic inputs carry their own slice count; drop the slicing flags".into(),
            );
        }
        match (self.mode, &self.theta_grid) {
            (Mode::Sweep, None) => {
                problems.push("sweep mode needs a theta-grid".into());
            }
            (Mode::Sweep, Some(grid)) => {
                if grid.is_empty() {
                    problems.push("theta-grid must not be empty".into());
                }
                for &v in grid {
                    if !(v > 0.0 && v <= 1.0) {
                        problems.push(format!("theta-grid value {v} outside (0, 1]"));
                    }
                }
            }
            (_, Some(_)) => {
                problems.push("theta-grid only applies to sweep mode".into());
            }
            (_, None) => {}
        }
        match (self.mode, &self.models) {
            (Mode::Compare, None) => {
                problems.push("compare mode needs a models list".into());
            }
            (Mode::Compare, Some(models)) => {
                if models.len() < 2 {
                    problems.push(format!(
                        "compare mode needs at least 2 models, got {}",
                        models.len()
                    ));
                }
            }
            (_, Some(_)) => {
                problems.push("models only applies to compare mode".into());
            }
            (_, None) => {}
        }
        if self.output.as_os_str().is_empty() {
            problems.push("output directory must not be empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The slicing policy, when one is configured.
    pub fn slicing(&self) -> Option<Slicing> {
        if self.explicit_slices {
            Some(Slicing::ExplicitColumn)
        } else {
            self.num_slices.map(Slicing::NumSlices)
        }
    }

    /// The trainer-facing subset of this configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model,
            k: self.k,
            alpha: self.alpha,
            theta: self.theta,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
            seed: self.seed,
            epsilon: self.epsilon,
            lambda_scaling: self.lambda_scaling,
        }
    }

    /// Render as TOML, the config-echo format.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config serialization: {e}")))
    }

    /// Parse a config echo (or hand-written config file).
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![format!("config file: {e}")]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn valid_run() -> ExperimentConfig {
        ExperimentConfig {
            input: "synthetic:".into(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_form_a_valid_run_config_once_input_is_set() {
        assert!(ExperimentConfig::default().validate().is_err());
        assert!(valid_run().validate().is_ok());
    }

    #[test]
    fn violations_are_reported_in_aggregate() {
        let config = ExperimentConfig {
            input: String::new(),
            k: 0,
            theta: 2.0,
            max_epochs: 0,
            ..ExperimentConfig::default()
        };
        match config.validate() {
            Err(Error::Config(problems)) => assert_eq!(problems.len(), 4),
            other => panic!("expected aggregated errors, got {other:?}"),
        }
    }

    #[test]
    fn sweep_requires_grid_and_rejects_bad_values() {
        let mut config = valid_run();
        config.mode = Mode::Sweep;
        assert!(config.validate().is_err());
        config.theta_grid = Some(vec![0.5, 0.25]);
        assert!(config.validate().is_ok());
        config.theta_grid = Some(vec![0.5, 1.5]);
        assert!(config.validate().is_err());
        // A grid outside sweep mode is also rejected.
        let mut run = valid_run();
        run.theta_grid = Some(vec![0.5]);
        assert!(run.validate().is_err());
    }

    #[test]
    fn compare_requires_two_models() {
        let mut config = valid_run();
        config.mode = Mode::Compare;
        assert!(config.validate().is_err());
        config.models = Some(vec![Model::Nlfa]);
        assert!(config.validate().is_err());
        config.models = Some(vec![Model::Nlfa, Model::Grnlfa]);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn slicing_flags_are_mutually_exclusive() {
        let mut config = valid_run();
        config.input = "edges.csv".into();
        config.num_slices = Some(6);
        config.explicit_slices = true;
        assert!(config.validate().is_err());
        config.explicit_slices = false;
        assert!(config.validate().is_ok());
        assert_eq!(config.slicing(), Some(Slicing::NumSlices(6)));
    }

    #[test]
    fn synthetic_input_rejects_slicing_flags() {
        let mut config = valid_run();
        config.num_slices = Some(6);
        assert!(config.validate().is_err());
    }

    #[test]
    fn toml_round_trip_preserves_every_field() {
        let mut config = valid_run();
        config.mode = Mode::Sweep;
        config.theta_grid = Some(vec![0.5, 0.25, 0.125]);
        config.k = 7;
        config.alpha = 0.125;
        config.deterministic = false;
        config.output = PathBuf::from("elsewhere/run1");
        let text = config.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config = ExperimentConfig::from_toml(
            "input = \"edges.csv\"\nnum-slices = 6\nk = 4\n",
        )
        .unwrap();
        assert_eq!(config.k, 4);
        assert_eq!(config.theta, 0.5);
        assert_eq!(config.max_epochs, 1000);
        assert!(config.lambda_scaling);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn unknown_toml_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("inptu = \"x\"\n").is_err());
    }

    proptest! {
        /// Any mixture of flag settings round-trips through TOML exactly.
        #[test]
        fn toml_round_trip_property(
            k in 1usize..50,
            alpha in 0.0f64..2.0,
            theta in 0.01f64..1.0,
            seed in any::<u64>(),
            lambda in any::<bool>(),
            det in any::<bool>(),
            header in any::<bool>(),
        ) {
            let config = ExperimentConfig {
                input: "data.tsv".into(),
                delimiter: Delimiter::Tab,
                has_header: header,
                num_slices: Some(8),
                k,
                alpha,
                theta,
                seed,
                lambda_scaling: lambda,
                deterministic: det,
                ..ExperimentConfig::default()
            };
            let back = ExperimentConfig::from_toml(&config.to_toml().unwrap()).unwrap();
            prop_assert_eq!(back, config);
        }
    }
}

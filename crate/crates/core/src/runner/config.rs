use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deepnets::{CnnVariant, LstmSpec};
use crate::error::{Error, Result};
use crate::features::{Case, FeatureConfig};
use crate::kernel_models::SvmConfig;
use crate::linmod::{Direction, StepwiseConfig};
use crate::mars::MarsConfig;
use crate::market_data::SynthParams;
use crate::shallow_nn::MlpSpec;
use crate::slotter::SlotConfig;
use crate::trees::{AdaBoostConfig, BagConfig, CartControls, ForestConfig, GradBoostConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Logit,
    Knn,
    Cart,
    Bag,
    Adaboost,
    Gradboost,
    Rf,
    Ann,
    Svm,
    Svr,
    OlsStepwise,
    Mars,
    Lstm,
    CnnM1,
    CnnM2,
    CnnM3,
    CnnM4,
}

impl ModelName {
    pub const ALL: [ModelName; 17] = [
        ModelName::Logit,
        ModelName::Knn,
        ModelName::Cart,
        ModelName::Bag,
        ModelName::Adaboost,
        ModelName::Gradboost,
        ModelName::Rf,
        ModelName::Ann,
        ModelName::Svm,
        ModelName::Svr,
        ModelName::OlsStepwise,
        ModelName::Mars,
        ModelName::Lstm,
        ModelName::CnnM1,
        ModelName::CnnM2,
        ModelName::CnnM3,
        ModelName::CnnM4,
    ];

    /// The twelve classical models; together they give eight classifiers
    /// and eight regressors.
    pub const CLASSICAL: [ModelName; 12] = [
        ModelName::Logit,
        ModelName::Knn,
        ModelName::Cart,
        ModelName::Bag,
        ModelName::Adaboost,
        ModelName::Gradboost,
        ModelName::Rf,
        ModelName::Ann,
        ModelName::Svm,
        ModelName::Svr,
        ModelName::OlsStepwise,
        ModelName::Mars,
    ];

    /// Column order of the classification summary.
    pub const CLASSIFIERS: [ModelName; 8] = [
        ModelName::Logit,
        ModelName::Knn,
        ModelName::Cart,
        ModelName::Bag,
        ModelName::Adaboost,
        ModelName::Rf,
        ModelName::Ann,
        ModelName::Svm,
    ];

    /// Column order of the regression summary.
    pub const REGRESSORS: [ModelName; 8] = [
        ModelName::OlsStepwise,
        ModelName::Mars,
        ModelName::Cart,
        ModelName::Bag,
        ModelName::Gradboost,
        ModelName::Rf,
        ModelName::Ann,
        ModelName::Svr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Logit => "logit",
            ModelName::Knn => "knn",
            ModelName::Cart => "cart",
            ModelName::Bag => "bag",
            ModelName::Adaboost => "adaboost",
            ModelName::Gradboost => "gradboost",
            ModelName::Rf => "rf",
            ModelName::Ann => "ann",
            ModelName::Svm => "svm",
            ModelName::Svr => "svr",
            ModelName::OlsStepwise => "ols_stepwise",
            ModelName::Mars => "mars",
            ModelName::Lstm => "lstm",
            ModelName::CnnM1 => "cnn_m1",
            ModelName::CnnM2 => "cnn_m2",
            ModelName::CnnM3 => "cnn_m3",
            ModelName::CnnM4 => "cnn_m4",
        }
    }

    pub fn classifies(self) -> bool {
        Self::CLASSIFIERS.contains(&self)
    }

    pub fn regresses(self) -> bool {
        Self::REGRESSORS.contains(&self)
    }

    pub fn cnn_variant(self) -> Option<CnnVariant> {
        match self {
            ModelName::CnnM1 => Some(CnnVariant::M1),
            ModelName::CnnM2 => Some(CnnVariant::M2),
            ModelName::CnnM3 => Some(CnnVariant::M3),
            ModelName::CnnM4 => Some(CnnVariant::M4),
            _ => None,
        }
    }

    /// Stable per-model seed index.
    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub case: Case,
    pub seed: u64,
    pub models: Vec<ModelName>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            case: Case::III,
            seed: 0,
            models: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSource {
    pub seed: u64,
    pub days: usize,
    pub params: SynthParams,
}

impl Default for SynthSource {
    fn default() -> Self {
        Self {
            seed: 7,
            days: 520,
            params: SynthParams::default(),
        }
    }
}

/// Tick CSV files or a synthetic generator; exactly one must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub symbol: String,
    pub ticks: Vec<PathBuf>,
    pub synth: Option<SynthSource>,
    pub slots: SlotConfig,
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitSettings {
    pub threshold: f64,
}

impl Default for LogitSettings {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSettings {
    pub k: usize,
}

impl Default for KnnSettings {
    fn default() -> Self {
        Self { k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnSettings {
    pub hidden_layers: Vec<usize>,
    pub max_steps: usize,
    pub lr: f64,
    pub grad_tol: f64,
    pub init_range: f64,
}

impl Default for AnnSettings {
    fn default() -> Self {
        let spec = MlpSpec::default();
        Self {
            hidden_layers: spec.hidden_layers,
            max_steps: 20_000,
            lr: spec.lr,
            grad_tol: spec.grad_tol,
            init_range: spec.init_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrSettings {
    pub gamma: f64,
    pub epsilon: f64,
    pub svm: SvmConfig,
}

impl Default for SvrSettings {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            epsilon: 0.1,
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsSettings {
    pub vif_threshold: f64,
    pub direction: Direction,
    pub stepwise: StepwiseConfig,
}

impl Default for OlsSettings {
    fn default() -> Self {
        Self {
            vif_threshold: 10.0,
            direction: Direction::Backward,
            stepwise: StepwiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSettings {
    pub rounds: usize,
    /// Leading weeks used for training; `None` takes the first half.
    pub train_weeks: Option<usize>,
    pub lr: f64,
    /// Overrides of the per-variant epoch and batch settings.
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self {
            rounds: 20,
            train_weeks: None,
            lr: 0.001,
            epochs: None,
            batch: None,
        }
    }
}

/// Per-model settings; every field falls back to its default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub logit: LogitSettings,
    pub knn: KnnSettings,
    pub cart: CartControls,
    pub bag: BagConfig,
    pub adaboost: AdaBoostConfig,
    pub gradboost: GradBoostConfig,
    pub rf: ForestConfig,
    pub ann: AnnSettings,
    pub svm: SvmConfig,
    pub svr: SvrSettings,
    pub ols_stepwise: OlsSettings,
    pub mars: MarsConfig,
    pub lstm: LstmSpec,
    pub cnn: CnnSettings,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub model: ModelSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative tick paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut config.data.ticks {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut seen = self.experiment.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.experiment.models.len() {
            return Err(Error::Config("models are listed more than once".into()));
        }
        match (self.data.ticks.is_empty(), self.data.synth.is_some()) {
            (true, false) => Err(Error::Config("data needs tick files or a synth section".into())),
            (false, true) => Err(Error::Config("give either tick files or a synth section, not both".into())),
            _ => Ok(()),
        }
    }

    /// Every classical model plus nothing else, on synthetic data.
    pub fn synthetic(seed: u64, days: usize) -> Self {
        Self {
            experiment: ExperimentSection {
                models: ModelName::CLASSICAL.to_vec(),
                seed,
                ..ExperimentSection::default()
            },
            data: DataSection {
                symbol: "SYNTH".into(),
                synth: Some(SynthSource {
                    seed,
                    days,
                    ..SynthSource::default()
                }),
                ..DataSection::default()
            },
            model: ModelSettings::default(),
        }
    }
}

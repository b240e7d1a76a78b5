//! The three probe families: ridge and MLP regressors for energy scores,
//! multinomial logistic regression for tiers.

pub mod logistic;
pub mod mlp;
pub mod ridge;

use serde::{Deserialize, Serialize};

pub use logistic::{fit_logistic, predict_tier, LogisticConfig, LogisticFit, LogisticModel, TierPrediction};
pub use mlp::{fit_mlp, predict_mlp, Activation, MlpConfig, MlpFit, MlpModel};
pub use ridge::{fit_ridge, predict_ridge, RidgeConfig, RidgeModel, RidgeSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionProbe {
    Ridge,
    Mlp,
}

impl RegressionProbe {
    pub fn name(self) -> &'static str {
        match self {
            RegressionProbe::Ridge => "ridge",
            RegressionProbe::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for RegressionProbe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" => Ok(RegressionProbe::Ridge),
            "mlp" => Ok(RegressionProbe::Mlp),
            other => Err(format!("unknown regression probe `{other}` (expected ridge or mlp)")),
        }
    }
}

/// Hyperparameters for every probe, echoed verbatim into reports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub ridge: RidgeConfig,
    pub logistic: LogisticConfig,
    pub mlp: MlpConfig,
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};
use crate::mtlopt::CagradConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Local,
    FedAvg,
    FedProx,
    FedAmp,
    FedRep,
    MatFl,
    FedMtl,
    PcGrad,
    CaGrad,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Local,
        Strategy::FedAvg,
        Strategy::FedProx,
        Strategy::FedAmp,
        Strategy::FedRep,
        Strategy::MatFl,
        Strategy::FedMtl,
        Strategy::PcGrad,
        Strategy::CaGrad,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Strategy::Local => "local",
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::FedAmp => "fedamp",
            Strategy::FedRep => "fedrep",
            Strategy::MatFl => "matfl",
            Strategy::FedMtl => "fedmtl",
            Strategy::PcGrad => "pcgrad",
            Strategy::CaGrad => "cagrad",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::Local => "Local",
            Strategy::FedAvg => "FedAvg",
            Strategy::FedProx => "FedProx",
            Strategy::FedAmp => "FedAMP",
            Strategy::FedRep => "FedRep",
            Strategy::MatFl => "MaT-FL",
            Strategy::FedMtl => "FedMTL",
            Strategy::PcGrad => "PCGrad",
            Strategy::CaGrad => "CAGrad",
        }
    }

    /// Strategies that only ever share the encoder.
    pub fn always_decoupled(self) -> bool {
        matches!(self, Strategy::FedRep | Strategy::MatFl)
    }
}

impl FromStr for Strategy {
    type Err = FmtlError;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.key() == norm)
            .ok_or_else(|| FmtlError::Config(format!("unknown strategy `{s}`")))
    }
}

/// A strategy plus the encoder-only ("-E") flag, normalised so that `local`
/// is never decoupled and FedRep / MaT-FL always are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyId {
    pub strategy: Strategy,
    pub decoupled: bool,
}

impl StrategyId {
    pub fn new(strategy: Strategy, decoupled: bool) -> Self {
        let decoupled = match strategy {
            Strategy::Local => false,
            s if s.always_decoupled() => true,
            _ => decoupled,
        };
        StrategyId {
            strategy,
            decoupled,
        }
    }

    /// Whether aggregation needs every client to share one full layout.
    pub fn needs_full_layout(self) -> bool {
        self.strategy != Strategy::Local && !self.decoupled
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.strategy.display_name())?;
        if self.decoupled && !self.strategy.always_decoupled() {
            f.write_str("-E")?;
        }
        Ok(())
    }
}

impl FromStr for StrategyId {
    type Err = FmtlError;

    /// Accepts `fedavg`, `FedAvg-E`, `fedprox_e` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        let lower = trimmed.to_ascii_lowercase();
        for suffix in ["-e", "_e"] {
            if let Some(base) = lower.strip_suffix(suffix) {
                return Ok(StrategyId::new(base.parse()?, true));
            }
        }
        Ok(StrategyId::new(trimmed.parse()?, false))
    }
}

/// Strategy hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// FedProx proximal weight μ.
    pub prox_mu: f64,
    /// FedAMP attention weight α, similarity bandwidth σ and pull λ.
    pub amp_alpha: f64,
    pub amp_sigma: f64,
    pub amp_lambda: f64,
    /// MaT-FL softmax temperature τ and distance bandwidth σ.
    pub matfl_tau: f64,
    pub matfl_sigma: f64,
    /// FedMTL centering regulariser weight.
    pub fedmtl_lambda: f64,
    pub cagrad: CagradConfig,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            prox_mu: 0.01,
            amp_alpha: 0.1,
            amp_sigma: 1.0,
            amp_lambda: 1.0,
            matfl_tau: 1.0,
            matfl_sigma: 1.0,
            fedmtl_lambda: 0.1,
            cagrad: CagradConfig::default(),
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("prox_mu", self.prox_mu),
            ("amp_alpha", self.amp_alpha),
            ("amp_lambda", self.amp_lambda),
            ("fedmtl_lambda", self.fedmtl_lambda),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FmtlError::Config(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        for (name, v) in [
            ("amp_sigma", self.amp_sigma),
            ("matfl_tau", self.matfl_tau),
            ("matfl_sigma", self.matfl_sigma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FmtlError::Config(format!("{name} must be positive")));
            }
        }
        self.cagrad.validate()
    }
}

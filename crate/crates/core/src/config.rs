//! Run configuration: every experiment the CLI can run is one of these, and the
//! CLI flags are only a shorthand for building one.

use crate::error::{Error, Result};
use crate::hedging::ModelVol;
use crate::levy::LocalLevyModel;
use crate::pricing::{BSModelSpec, PayoffSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Qv,
    Greeks,
    Hedge,
    PriceExpansion,
    PriceMc,
    ReproduceTable,
    ErrorCurves,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Qv => "qv",
            ExperimentKind::Greeks => "greeks",
            ExperimentKind::Hedge => "hedge",
            ExperimentKind::PriceExpansion => "price-expansion",
            ExperimentKind::PriceMc => "price-mc",
            ExperimentKind::ReproduceTable => "reproduce-table",
            ExperimentKind::ErrorCurves => "error-curves",
        }
    }

    pub fn stochastic(&self) -> bool {
        !matches!(self, ExperimentKind::PriceExpansion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableChoice {
    Merton,
    Vg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelBlock {
    /// Black-Scholes pricing model used by the functionals and the hedger.
    BlackScholes { spec: BSModelSpec },
    LocalLevy { spec: LocalLevyModel },
    ReferenceMerton,
    ReferenceVg,
}

impl ModelBlock {
    pub fn black_scholes(&self) -> Result<&BSModelSpec> {
        match self {
            ModelBlock::BlackScholes { spec } => Ok(spec),
            _ => Err(Error::Config("this experiment needs a black-scholes model block".into())),
        }
    }

    pub fn levy(&self) -> Result<LocalLevyModel> {
        match self {
            ModelBlock::LocalLevy { spec } => Ok(spec.clone()),
            ModelBlock::ReferenceMerton => Ok(LocalLevyModel::reference_merton()),
            ModelBlock::ReferenceVg => Ok(LocalLevyModel::reference_vg()),
            ModelBlock::BlackScholes { .. } => {
                Err(Error::Config("this experiment needs a local-levy model block".into()))
            }
        }
    }
}

/// Where sample paths come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum PathBlock {
    /// `time,value[,jump]` file on a uniform dyadic grid of 2^level cells.
    Csv {
        file: PathBuf,
        level: u32,
        #[serde(default = "yes")]
        price: bool,
    },
    /// Exact geometric Brownian paths, one ChaCha stream per path.
    Gbm {
        sigma: f64,
        #[serde(default = "one")]
        count: usize,
        level: u32,
        #[serde(default = "one_f")]
        horizon: f64,
    },
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_qv_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionBlock {
    pub level: u32,
    #[serde(default = "default_qv_tol")]
    pub qv_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBlock {
    pub n_paths: usize,
    #[serde(default = "default_spy")]
    pub steps_per_year: usize,
    #[serde(default = "yes")]
    pub antithetic: bool,
    #[serde(default)]
    pub max_work: Option<u128>,
}

fn default_spy() -> usize {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingBlock {
    #[serde(default = "one_f")]
    pub spot: f64,
    #[serde(default)]
    pub strikes: Vec<f64>,
    #[serde(default)]
    pub maturities: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_order() -> usize {
    4
}
fn default_gamma() -> f64 {
    crate::levy::DEFAULT_GAMMA
}

impl Default for PricingBlock {
    fn default() -> Self {
        PricingBlock { spot: 1.0, strikes: vec![], maturities: vec![], order: 4, gamma: default_gamma() }
    }
}

/// Declared tolerances; a violated check makes the run fail with the numeric exit code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    /// reproduce-table: max |price - reference| (default 2e-4 below T=10, 1e-3 at T=10)
    #[serde(default)]
    pub price_abs: Option<f64>,
    /// hedge: minimum fraction of paths with direct error >= -robust_floor
    #[serde(default)]
    pub robust_frequency: Option<f64>,
    #[serde(default)]
    pub robust_floor: Option<f64>,
    /// error-curves: require monotone improvement above the noise floor
    #[serde(default)]
    pub monotone: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<PathBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<PricingBlock>,
    /// hedger's volatility; defaults to the model block's
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_model: Option<ModelVol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableChoice>,
    /// stop times for `greeks`
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            experiment,
            seed: None,
            model: None,
            payoff: None,
            paths: None,
            partition: None,
            mc: None,
            pricing: None,
            sigma_model: None,
            table: None,
            times: vec![],
            checks: Checks::default(),
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Schema-level checks: version, mandatory blocks, seeds, referenced files.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.experiment.as_str())));
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let simulated_paths = matches!(self.paths, Some(PathBlock::Gbm { .. }));
        let needs_seed = match self.experiment {
            ExperimentKind::Qv | ExperimentKind::Greeks | ExperimentKind::Hedge => simulated_paths,
            k => k.stochastic(),
        };
        if needs_seed && self.seed.is_none() {
            return bad("a seed is mandatory for stochastic experiments");
        }
        if let Some(PathBlock::Csv { file, .. }) = &self.paths {
            if !file.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("path file {} does not exist", file.display()),
                )));
            }
        }
        if let Some(PathBlock::Gbm { count, .. }) = &self.paths {
            if *count == 0 {
                return bad("paths.count must be at least 1");
            }
        }
        if let Some(p) = &self.payoff {
            p.validate()?;
        }
        match self.experiment {
            ExperimentKind::Qv => {
                if self.paths.is_none() || self.partition.is_none() {
                    return bad("needs paths and partition blocks");
                }
            }
            ExperimentKind::Greeks | ExperimentKind::Hedge => {
                if self.paths.is_none() || self.payoff.is_none() || self.model.is_none() {
                    return bad("needs model, payoff and paths blocks");
                }
                self.model.as_ref().expect("checked").black_scholes()?;
                if self.experiment == ExperimentKind::Hedge && self.partition.is_none() {
                    return bad("needs a partition block");
                }
            }
            ExperimentKind::PriceExpansion | ExperimentKind::PriceMc | ExperimentKind::ErrorCurves => {
                let model = self.model.as_ref().ok_or_else(|| Error::Config("needs a model block".into()))?;
                model.levy()?;
                let p = self.pricing.as_ref().ok_or_else(|| Error::Config("needs a pricing block".into()))?;
                if p.strikes.is_empty() || p.maturities.is_empty() {
                    return bad("pricing block needs strikes and maturities");
                }
                if p.order > crate::levy::MAX_ORDER {
                    return bad("expansion order above 4");
                }
                if self.experiment != ExperimentKind::PriceExpansion && self.mc.is_none() {
                    return bad("needs an mc block");
                }
            }
            ExperimentKind::ReproduceTable => {
                if self.table.is_none() {
                    return bad("needs `table`: merton or vg");
                }
                if self.mc.is_none() {
                    return bad("needs an mc block");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_version() {
        let mut c = RunConfig::new(ExperimentKind::ReproduceTable);
        c.seed = Some(1);
        c.table = Some(TableChoice::Merton);
        c.mc = Some(McBlock { n_paths: 10, steps_per_year: 250, antithetic: true, max_work: None });
        let text = c.to_json().unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        let wrong = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(RunConfig::from_json(&wrong), Err(Error::Config(_))));
    }

    #[test]
    fn seed_is_mandatory() {
        let text = r#"{"version":1,"experiment":"price-mc","model":{"family":"reference-merton"},
            "pricing":{"strikes":[1.0],"maturities":[0.25]},"mc":{"n_paths":10}}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))));
        let with_seed = text.replacen('{', "{\"seed\":3,", 1);
        RunConfig::from_json(&with_seed).unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"version":1,"experiment":"qv","colour":"red"}"#;
        assert!(RunConfig::from_json(text).is_err());
    }
}

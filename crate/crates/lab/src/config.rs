//! Experiment configuration, recorded verbatim in `summary.json`.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use polab::actor::UpdateRule;
use polab::critic::OracleKind;
use polab::NormPair;
use serde::{Deserialize, Serialize};

/// Step size: the regret-tuned formula or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EtaRepr", into = "EtaRepr")]
pub enum Eta {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EtaRepr {
    Num(f64),
    Text(String),
}

impl From<Eta> for EtaRepr {
    fn from(e: Eta) -> Self {
        match e {
            Eta::Auto => EtaRepr::Text("auto".into()),
            Eta::Fixed(x) => EtaRepr::Num(x),
        }
    }
}

impl TryFrom<EtaRepr> for Eta {
    type Error = anyhow::Error;
    fn try_from(r: EtaRepr) -> Result<Self> {
        match r {
            EtaRepr::Num(x) => Eta::fixed(x),
            EtaRepr::Text(s) => s.parse(),
        }
    }
}

impl Eta {
    fn fixed(x: f64) -> Result<Self> {
        if x.is_finite() && x > 0.0 {
            Ok(Eta::Fixed(x))
        } else {
            bail!("step size {x} must be positive and finite")
        }
    }
}

impl FromStr for Eta {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Eta::Auto);
        }
        let x: f64 = s.parse().map_err(|_| anyhow!("`{s}` is neither `auto` nor a number"))?;
        Eta::fixed(x)
    }
}

impl std::fmt::Display for Eta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eta::Auto => f.write_str("auto"),
            Eta::Fixed(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    /// Iterations, or instance count for the non-iterative experiments.
    pub k: usize,
    /// Sample size; `None` means exhaustive weighting by the data distribution.
    pub n: Option<usize>,
    pub eta: Eta,
    pub update: Option<UpdateRule>,
    pub norm: NormPair,
    pub oracle: OracleKind,
    /// Density-ratio budget of the `W_inf` class.
    pub c: f64,
    /// Chi-square budget.
    pub c2: f64,
    pub mdp: Option<PathBuf>,
    pub wallclock: bool,
}

impl ExperimentConfig {
    pub fn defaults_for(experiment: &str) -> Result<Self> {
        let spec = crate::experiments::find(experiment)?;
        let mut cfg = Self {
            experiment: spec.id.to_string(),
            seed: 0,
            k: 1,
            n: None,
            eta: Eta::Auto,
            update: None,
            norm: NormPair::L2,
            oracle: OracleKind::Exact,
            c: 1.0,
            c2: 2.0,
            mdp: None,
            wallclock: false,
        };
        (spec.defaults)(&mut cfg);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.n == Some(0) {
            bail!("n must be at least 1");
        }
        if !(self.c >= 1.0 && self.c.is_finite()) {
            bail!("density-ratio budget c = {} must be a finite value >= 1", self.c);
        }
        if !(self.c2 >= 1.0 && self.c2.is_finite()) {
            bail!("chi-square budget c2 = {} must be a finite value >= 1", self.c2);
        }
        Ok(())
    }

    pub fn fixed_eta(&self) -> Option<f64> {
        match self.eta {
            Eta::Fixed(x) => Some(x),
            Eta::Auto => None,
        }
    }

    /// Fails unless the exact oracle is selected.
    pub fn require_exact(&self) -> Result<()> {
        if self.oracle != OracleKind::Exact {
            bail!("{} only supports the exact oracle", self.experiment);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_parses_and_serializes() {
        assert_eq!("auto".parse::<Eta>().unwrap(), Eta::Auto);
        assert_eq!("0.5".parse::<Eta>().unwrap(), Eta::Fixed(0.5));
        assert!("-1".parse::<Eta>().is_err());
        assert!("fast".parse::<Eta>().is_err());
        assert_eq!(serde_json::to_string(&Eta::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::from_str::<Eta>("0.25").unwrap(), Eta::Fixed(0.25));
        assert!(serde_json::from_str::<Eta>("0").is_err());
    }

    #[test]
    fn every_experiment_has_valid_defaults() {
        for e in crate::experiments::registry() {
            let cfg = ExperimentConfig::defaults_for(e.id).unwrap();
            cfg.validate().unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
        }
        assert!(ExperimentConfig::defaults_for("exp_nothing").is_err());
    }
}

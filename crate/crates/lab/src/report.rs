//! Verdicts and the `summary.json` document.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Verdict {
    pub fn new(metric: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => value <= threshold,
            Relation::AtLeast => value >= threshold,
        };
        Self {
            metric: metric.into(),
            value,
            threshold,
            relation,
            pass,
        }
    }

    pub fn at_most(metric: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(metric, value, Relation::AtMost, threshold)
    }

    pub fn at_least(metric: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(metric, value, Relation::AtLeast, threshold)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {:e} {} {:e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.metric,
            self.value,
            self.relation.symbol(),
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    /// `null` when the metric could not be computed.
    pub value: Option<f64>,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub metrics: BTreeMap<String, MetricEntry>,
    pub pass: bool,
    pub failed: Vec<String>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, rows: usize, verdicts: &[Verdict]) -> Self {
        let metrics = verdicts
            .iter()
            .map(|v| {
                let entry = MetricEntry {
                    value: v.value.is_finite().then_some(v.value),
                    threshold: v.threshold,
                    relation: v.relation,
                    pass: v.pass,
                };
                (v.metric.clone(), entry)
            })
            .collect();
        let failed: Vec<String> = verdicts.iter().filter(|v| !v.pass).map(|v| v.metric.clone()).collect();
        Self {
            experiment: config.experiment.clone(),
            config: config.clone(),
            rows,
            metrics,
            pass: failed.is_empty(),
            failed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_relations() {
        assert!(Verdict::at_most("a", 1.0, 1.0).pass);
        assert!(!Verdict::at_most("a", 1.0 + 1e-16 * 4.0, 1.0).pass);
        assert!(Verdict::at_least("b", 2.0, 1.0).pass);
        assert!(!Verdict::at_least("b", f64::NAN, 1.0).pass);
        assert!(!Verdict::at_most("b", f64::NAN, 1.0).pass);
    }

    #[test]
    fn summary_round_trips() {
        let cfg = ExperimentConfig::defaults_for("exp_duality").unwrap();
        let v = [Verdict::at_most("gap", 1.0e-12, 1e-8), Verdict::at_least("x", f64::NAN, 0.0)];
        let s = Summary::new(&cfg, 3, &v);
        assert!(!s.pass);
        assert_eq!(s.failed, vec!["x".to_string()]);
        let back: Summary = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.metrics["x"].value, None);
    }
}

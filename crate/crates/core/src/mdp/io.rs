//! TOML definition files for MDPs, feature maps and pessimism tables.
//!
//! ```toml
//! n_states = 2
//! n_actions = 2
//! gamma = 0.9
//! init_dist = [0.5, 0.5]
//! reward = [[0.0, 1.0], [1.0, 0.0]]
//! transition = [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.0, 1.0]]]
//! # optional
//! r_max = 1.0
//! features = [[[1.0], [0.0]], [[0.0], [1.0]]]
//! pessimism = [[0.0, 0.1], [0.0, 0.0]]
//! ```

use std::path::Path;

use serde::Deserialize;

use super::TabularMdp;
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::policy::FeatureMap;
use crate::scalar::Scalar;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    init_dist: Vec<f64>,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
    r_max: Option<f64>,
    features: Option<Vec<Vec<Vec<f64>>>>,
    pessimism: Option<Vec<Vec<f64>>>,
}

/// Parsed definition file.
#[derive(Debug, Clone)]
pub struct MdpFile<T> {
    pub mdp: TabularMdp<T>,
    pub features: Option<FeatureMap<T>>,
    pub pessimism: Option<Matrix<T>>,
}

fn table<T: Scalar>(rows: &[Vec<f64>], n_states: usize, n_actions: usize, ctx: &'static str) -> Result<Matrix<T>> {
    check_dim(ctx, n_states, rows.len())?;
    let m = Matrix::from_rows(
        &rows
            .iter()
            .map(|r| r.iter().map(|&x| T::lit(x)).collect())
            .collect::<Vec<Vec<T>>>(),
    )?;
    check_dim(ctx, n_actions, m.cols())?;
    Ok(m)
}

pub fn parse_mdp_file<T: Scalar>(text: &str) -> Result<MdpFile<T>> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let (ns, na) = (raw.n_states, raw.n_actions);
    check_dim("transition states", ns, raw.transition.len())?;
    let transition = raw
        .transition
        .iter()
        .map(|row| {
            check_dim("transition actions", na, row.len())?;
            Ok(row
                .iter()
                .map(|d| d.iter().map(|&x| T::lit(x)).collect())
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<T>>>>>()?;
    let reward = table(&raw.reward, ns, na, "reward")?;
    let mdp = TabularMdp::new(
        transition,
        reward,
        T::lit(raw.gamma),
        raw.init_dist.iter().map(|&x| T::lit(x)).collect(),
        raw.r_max.map(T::lit),
    )?;
    let features = match raw.features {
        None => None,
        Some(phi) => {
            check_dim("feature states", ns, phi.len())?;
            let dim = phi.first().and_then(|r| r.first()).map_or(0, Vec::len);
            Some(FeatureMap::from_fn(ns, na, dim, |s, a| {
                phi[s].get(a).map_or_else(Vec::new, |v| v.iter().map(|&x| T::lit(x)).collect())
            })?)
        }
    };
    let pessimism = raw
        .pessimism
        .map(|p| table(&p, ns, na, "pessimism"))
        .transpose()?;
    Ok(MdpFile {
        mdp,
        features,
        pessimism,
    })
}

pub fn load_mdp_file<T: Scalar>(path: &Path) -> Result<MdpFile<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_mdp_file(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
n_states = 2
n_actions = 2
gamma = 0.5
init_dist = [1.0, 0.0]
reward = [[0.0, 1.0], [1.0, 0.5]]
transition = [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.0, 1.0]]]
features = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [0.0, 0.0]]]
pessimism = [[0.0, 0.1], [0.0, 0.0]]
"#;

    #[test]
    fn parses_full_file() {
        let f = parse_mdp_file::<f64>(SAMPLE).unwrap();
        assert_eq!(f.mdp.n_states(), 2);
        assert_eq!(f.mdp.next_dist(1, 0), &[0.5, 0.5]);
        assert_eq!(f.features.unwrap().phi(1, 0), &[1.0, 1.0]);
        assert_eq!(f.pessimism.unwrap()[(0, 1)], 0.1);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = SAMPLE.replace("[0.5, 0.5]", "[0.5, 0.6]");
        assert!(parse_mdp_file::<f64>(&bad).is_err());
        let short = SAMPLE.replace("reward = [[0.0, 1.0], [1.0, 0.5]]", "reward = [[0.0, 1.0]]");
        assert!(matches!(parse_mdp_file::<f64>(&short), Err(Error::Dimension { .. })));
        assert!(matches!(parse_mdp_file::<f64>("n_states = "), Err(Error::Parse(_))));
    }
}

//! Scenario documents: a configuration, an initial-state recipe, parameter aliases and
//! provenance notes. Built-in presets are embedded from `presets/*.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{self, EquilibriumError, EquilibriumPoint};
use crate::model::{ModelConfig, ModelError, StateVector};
use crate::params::{ParamError, ParamPath};

pub const PRESETS: [(&str, &str); 5] = [
    ("desantis-case1", include_str!("../presets/desantis-case1.json")),
    ("desantis-case2", include_str!("../presets/desantis-case2.json")),
    ("desantis-case3", include_str!("../presets/desantis-case3.json")),
    ("bulut-mixed", include_str!("../presets/bulut-mixed.json")),
    ("cavani-nigeria-libya", include_str!("../presets/cavani-nigeria-libya.json")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown preset `{name}`; available: {}", available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// How the default initial state is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Fundamental equilibrium at the given cash split (share totals follow the calibration condition).
    Fundamental { cash: Vec<f64> },
    /// Equilibrium-manifold point at the given cash split.
    Manifold { cash: Vec<f64> },
    /// Explicit state; omitted sentiments start at zero.
    Explicit {
        p: Vec<f64>,
        m: Vec<f64>,
        n: Vec<Vec<f64>>,
        #[serde(default)]
        z1: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        z2: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub parameter: String,
    pub value: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub config: ModelConfig,
    pub initial: InitialSpec,
    #[serde(default)]
    pub default_parameter: Option<String>,
    #[serde(default)]
    pub aliases: Vec<ParamPath>,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
}

pub fn preset_names() -> Vec<String> {
    PRESETS.iter().map(|(n, _)| n.to_string()).collect()
}

/// Parses a scenario document, reporting syntax errors by line/column and schema errors by path.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let mut sc: Scenario = serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    for w in sc.config.validate()? {
        log::warn!("{}: {w}", sc.name);
    }
    if let InitialSpec::Fundamental { cash } = &sc.initial {
        let cash = cash.clone();
        sc.config.calibrate_share_totals(&cash)?;
    }
    Ok(sc)
}

/// Loads a built-in preset by name, or a scenario file when `name_or_path` points to one.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == name_or_path) {
        return parse_scenario(text);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: name_or_path.to_string(), source })?;
        return parse_scenario(&text);
    }
    Err(ScenarioError::UnknownPreset { name: name_or_path.to_string(), available: preset_names() })
}

impl Scenario {
    pub fn param(&self, name: &str) -> Result<ParamPath, ScenarioError> {
        Ok(ParamPath::parse(&self.config, name, &self.aliases)?)
    }

    /// Copy with one parameter changed; share totals are re-derived for fundamental starts.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Scenario, ScenarioError> {
        let path = self.param(name)?;
        let mut sc = self.clone();
        path.apply(&mut sc.config, value)?;
        sc.config.validate()?;
        if let InitialSpec::Fundamental { cash } = &sc.initial {
            let cash = cash.clone();
            sc.config.calibrate_share_totals(&cash)?;
        }
        Ok(sc)
    }

    pub fn cash_split(&self) -> Option<&[f64]> {
        match &self.initial {
            InitialSpec::Fundamental { cash } | InitialSpec::Manifold { cash } => Some(cash),
            InitialSpec::Explicit { .. } => None,
        }
    }

    /// Equilibrium the scenario starts from (errors for explicit initial states).
    pub fn base_equilibrium(&self) -> Result<EquilibriumPoint, ScenarioError> {
        match &self.initial {
            InitialSpec::Fundamental { cash } => Ok(equilibrium::fundamental_equilibrium(&self.config, cash)?),
            InitialSpec::Manifold { cash } => Ok(equilibrium::solve_manifold_point(&self.config, cash, None)?),
            InitialSpec::Explicit { .. } => Err(ScenarioError::Schema {
                path: "initial".into(),
                msg: "explicit initial state is not an equilibrium recipe".into(),
            }),
        }
    }

    pub fn initial_state(&self) -> Result<StateVector, ScenarioError> {
        match &self.initial {
            InitialSpec::Explicit { p, m, n, z1, z2 } => {
                let cfg = &self.config;
                let lay = cfg.layout();
                let bad = |path: &str| ScenarioError::Schema { path: path.into(), msg: "dimension mismatch".into() };
                if p.len() != cfg.m {
                    return Err(bad("initial.p"));
                }
                if m.len() != cfg.n {
                    return Err(bad("initial.m"));
                }
                let mut x = StateVector::zeros(lay);
                for i in 0..cfg.m {
                    x.set_price(i, p[i]);
                }
                for j in 0..cfg.n {
                    x.set_cash(j, m[j]);
                }
                let grid = |g: &Vec<Vec<f64>>, name: &str| -> Result<(), ScenarioError> {
                    if g.len() != cfg.n || g.iter().any(|r| r.len() != cfg.m) {
                        return Err(bad(name));
                    }
                    Ok(())
                };
                grid(n, "initial.n")?;
                for j in 0..cfg.n {
                    for i in 0..cfg.m {
                        x.set_shares(j, i, n[j][i]);
                    }
                }
                if let Some(z) = z1 {
                    grid(z, "initial.z1")?;
                    for j in 0..cfg.n {
                        for i in 0..cfg.m {
                            x.set_z1(j, i, z[j][i]);
                        }
                    }
                }
                if let Some(z) = z2 {
                    grid(z, "initial.z2")?;
                    for j in 0..cfg.n {
                        for i in 0..cfg.m {
                            x.set_z2(j, i, z[j][i]);
                        }
                    }
                }
                Ok(x)
            }
            _ => Ok(self.base_equilibrium()?.state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_load() {
        for name in preset_names() {
            let sc = load_scenario(&name).unwrap();
            assert_eq!(sc.name, name);
            sc.initial_state().unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_available() {
        let e = load_scenario("no-such-preset").unwrap_err().to_string();
        assert!(e.contains("bulut-mixed"), "{e}");
    }

    #[test]
    fn malformed_json_has_location() {
        match parse_scenario("{\n  \"name\": \"x\",\n  oops\n}") {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_has_path() {
        let mut v: serde_json::Value = serde_json::from_str(PRESETS[0].1).unwrap();
        v["config"]["bogus"] = serde_json::json!(1);
        match parse_scenario(&v.to_string()) {
            Err(ScenarioError::Schema { path, msg }) => {
                assert_eq!(path, "config.bogus");
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }
}

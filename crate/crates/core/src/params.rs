//! Named parameter paths used by scans, `--set` overrides and calibration.
//!
//! Generic syntax (indices are 1-based): `field` sets every entry, `field_i` sets asset `i`
//! for all groups, `field_j_i` sets group `j`, asset `i`; coupling tensors also accept
//! `alpha_j_i_l`. Scenario presets add aliases such as `q1_china`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, SellRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("index out of range in `{0}`")]
    Index(String),
    #[error("parameter `{name}` does not apply to the {rule} sell rule")]
    WrongRule { name: String, rule: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Tau,
    Pa,
    C1,
    C2,
    Q1,
    Q2,
    A,
    B,
    Alpha,
    Beta,
    /// `ã` (tanh rule) or `c̃` (linear rule).
    SellBase,
    /// `b̃` (tanh rule) or `d̃` (linear rule).
    SellGain,
    Gamma,
    Delta,
    M0,
}

impl Field {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tau" => Field::Tau,
            "pa" => Field::Pa,
            "c1" => Field::C1,
            "c2" => Field::C2,
            "q1" => Field::Q1,
            "q2" => Field::Q2,
            "a" | "k0" => Field::A,
            "b" => Field::B,
            "alpha" => Field::Alpha,
            "beta" => Field::Beta,
            "ctilde" | "atilde" => Field::SellBase,
            "dtilde" | "btilde" => Field::SellGain,
            "gamma" => Field::Gamma,
            "delta" => Field::Delta,
            "m0" => Field::M0,
            _ => return None,
        })
    }
    fn is_tensor(self) -> bool {
        matches!(self, Field::Alpha | Field::Beta)
    }
    fn per_asset(self) -> bool {
        matches!(self, Field::Tau | Field::Pa)
    }
}

/// One scalar entry of the configuration; `scale` multiplies the path value when applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub field: Field,
    #[serde(default)]
    pub j: usize,
    #[serde(default)]
    pub i: usize,
    #[serde(default)]
    pub l: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPath {
    pub name: String,
    pub targets: Vec<Target>,
}

fn slot<'a>(cfg: &'a mut ModelConfig, t: &Target, name: &str) -> Result<&'a mut f64, ParamError> {
    let idx_err = || ParamError::Index(name.to_string());
    let (m, n) = (cfg.m, cfg.n);
    if t.i >= m || t.j >= n || t.l >= m {
        return Err(idx_err());
    }
    let rule_name = match cfg.sell_rule {
        SellRule::Tanh { .. } => "tanh",
        SellRule::LinearValue { .. } => "linear_value",
        SellRule::ZeroSum => "zero_sum",
    };
    let wrong = || ParamError::WrongRule { name: name.to_string(), rule: rule_name };
    Ok(match t.field {
        Field::Tau => &mut cfg.tau[t.i],
        Field::Pa => &mut cfg.pa[t.i],
        Field::C1 => &mut cfg.c1[t.j][t.i],
        Field::C2 => &mut cfg.c2[t.j][t.i],
        Field::Q1 => &mut cfg.q1[t.j][t.i],
        Field::Q2 => &mut cfg.q2[t.j][t.i],
        Field::A => &mut cfg.a[t.j][t.i],
        Field::B => &mut cfg.b[t.j][t.i],
        Field::Alpha => &mut cfg.alpha[t.j][t.i][t.l],
        Field::Beta => &mut cfg.beta[t.j][t.i][t.l],
        Field::M0 => &mut cfg.m0,
        Field::SellBase => match &mut cfg.sell_rule {
            SellRule::Tanh { atilde, .. } => &mut atilde[t.j][t.i],
            SellRule::LinearValue { ctilde, .. } => &mut ctilde[t.j][t.i],
            SellRule::ZeroSum => return Err(wrong()),
        },
        Field::SellGain => match &mut cfg.sell_rule {
            SellRule::Tanh { btilde, .. } => &mut btilde[t.j][t.i],
            SellRule::LinearValue { dtilde, .. } => &mut dtilde[t.j][t.i],
            SellRule::ZeroSum => return Err(wrong()),
        },
        Field::Gamma => match &mut cfg.sell_rule {
            SellRule::Tanh { gamma, .. } => &mut gamma[t.j][t.i],
            _ => return Err(wrong()),
        },
        Field::Delta => match &mut cfg.sell_rule {
            SellRule::Tanh { delta, .. } => &mut delta[t.j][t.i],
            _ => return Err(wrong()),
        },
    })
}

impl ParamPath {
    /// Resolves `name` against `aliases` first, then the generic syntax.
    pub fn parse(cfg: &ModelConfig, name: &str, aliases: &[ParamPath]) -> Result<Self, ParamError> {
        let key = name.trim().to_ascii_lowercase();
        if let Some(p) = aliases.iter().find(|p| p.name.eq_ignore_ascii_case(&key)) {
            return Ok(p.clone());
        }
        let mut parts = key.split('_');
        let head = parts.next().unwrap_or_default();
        let field = Field::parse(head).ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        let idx: Vec<usize> = parts
            .map(|p| p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        let (m, n) = (cfg.m, cfg.n);
        let mut targets = Vec::new();
        let t = |j, i, l| Target { field, j, i, l, scale: 1.0 };
        match (field, idx.as_slice()) {
            (Field::M0, []) => targets.push(t(0, 0, 0)),
            (f, []) if f.per_asset() => targets.extend((0..m).map(|i| t(0, i, 0))),
            (f, [i]) if f.per_asset() => targets.push(t(0, *i, 0)),
            (f, []) if f.is_tensor() => {
                for j in 0..n {
                    for i in 0..m {
                        for l in 0..m {
                            targets.push(t(j, i, l));
                        }
                    }
                }
            }
            (f, [j, i, l]) if f.is_tensor() => targets.push(t(*j, *i, *l)),
            (f, []) if !f.per_asset() && !f.is_tensor() => {
                for j in 0..n {
                    for i in 0..m {
                        targets.push(t(j, i, 0));
                    }
                }
            }
            (f, [i]) if !f.per_asset() && !f.is_tensor() => targets.extend((0..n).map(|j| t(j, *i, 0))),
            (f, [j, i]) if !f.per_asset() && !f.is_tensor() => targets.push(t(*j, *i, 0)),
            _ => return Err(ParamError::Unknown(name.to_string())),
        }
        let path = ParamPath { name: key, targets };
        path.get(cfg)?;
        Ok(path)
    }

    /// Current value (first target divided by its scale).
    pub fn get(&self, cfg: &ModelConfig) -> Result<f64, ParamError> {
        let mut c = cfg.clone();
        let t = self.targets.first().ok_or_else(|| ParamError::Unknown(self.name.clone()))?;
        for t in &self.targets {
            slot(&mut c, t, &self.name)?;
        }
        Ok(*slot(&mut c, t, &self.name)? / t.scale)
    }

    pub fn apply(&self, cfg: &mut ModelConfig, value: f64) -> Result<(), ParamError> {
        for t in &self.targets {
            *slot(cfg, t, &self.name)? = value * t.scale;
        }
        Ok(())
    }

    pub fn with_value(&self, cfg: &ModelConfig, value: f64) -> Result<ModelConfig, ParamError> {
        let mut c = cfg.clone();
        self.apply(&mut c, value)?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExecMode;

    fn cfg() -> ModelConfig {
        ModelConfig {
            m: 2,
            n: 2,
            tau: vec![1.0; 2],
            pa: vec![1.0; 2],
            c1: vec![vec![1.0; 2]; 2],
            c2: vec![vec![1.0; 2]; 2],
            q1: vec![vec![0.0; 2]; 2],
            q2: vec![vec![0.0; 2]; 2],
            a: vec![vec![0.2; 2]; 2],
            b: vec![vec![0.1; 2]; 2],
            alpha: vec![vec![vec![0.0; 2]; 2]; 2],
            beta: vec![vec![vec![0.0; 2]; 2]; 2],
            sell_rule: SellRule::LinearValue { ctilde: vec![vec![0.2; 2]; 2], dtilde: vec![vec![0.0; 2]; 2] },
            m0: 1.0,
            n0: vec![1.0; 2],
            exec_mode: ExecMode::RationedClearing,
            rescale_buy_rates: false,
        }
    }

    #[test]
    fn generic_paths() {
        let mut c = cfg();
        ParamPath::parse(&c, "q1_2", &[]).unwrap().apply(&mut c, 1.005).unwrap();
        assert_eq!(c.q1, vec![vec![0.0, 1.005], vec![0.0, 1.005]]);
        ParamPath::parse(&c, "alpha_2_1_2", &[]).unwrap().apply(&mut c, 3.0).unwrap();
        assert_eq!(c.alpha[1][0][1], 3.0);
        let p = ParamPath::parse(&c, "dtilde_1_2", &[]).unwrap();
        p.apply(&mut c, 0.01).unwrap();
        assert_eq!(p.get(&c).unwrap(), 0.01);
        assert!(ParamPath::parse(&c, "q1_3", &[]).is_err());
        assert!(ParamPath::parse(&c, "gamma", &[]).is_err());
        assert!(ParamPath::parse(&c, "nonsense", &[]).is_err());
    }

    #[test]
    fn scaled_alias() {
        let mut c = cfg();
        let alias = ParamPath {
            name: "alpha".into(),
            targets: vec![
                Target { field: Field::Alpha, j: 1, i: 0, l: 1, scale: 1.0 },
                Target { field: Field::Alpha, j: 1, i: 1, l: 0, scale: 0.5 },
            ],
        };
        let p = ParamPath::parse(&c, "ALPHA", &[alias]).unwrap();
        p.apply(&mut c, 3.0).unwrap();
        assert_eq!(c.alpha[1][1][0], 1.5);
        assert_eq!(p.get(&c).unwrap(), 3.0);
    }
}

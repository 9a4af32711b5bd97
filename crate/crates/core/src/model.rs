//! Model configuration, state layout, transition rates and the ODE right-hand side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Supply level below which the price equation is considered singular.
pub const EPS_SUPPLY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("singular supply for asset {asset} (T = {supply:e})")]
    SingularSupply { asset: usize, supply: f64 },
    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Selling-rate rule shared by all groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SellRule {
    /// `ã + b̃·tanh(γ·ζ1 + δ·ζ2)` on the same asset's sentiments.
    Tanh {
        atilde: Vec<Vec<f64>>,
        btilde: Vec<Vec<f64>>,
        gamma: Vec<Vec<f64>>,
        delta: Vec<Vec<f64>>,
    },
    /// `c̃ + d̃·(P/Pa − 1)`.
    LinearValue {
        ctilde: Vec<Vec<f64>>,
        dtilde: Vec<Vec<f64>>,
    },
    /// `k̃ = 1 − k` for each group and asset.
    ZeroSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Cash and share flows exactly as the unrationed transition rates dictate.
    AsWritten,
    /// Buys and sells scaled to the matched volume `min(S, T)`.
    #[default]
    RationedClearing,
}

/// All parameters of the m-asset, n-group system. Per-group arrays are indexed `[j][i]`,
/// coupling tensors `[j][i][l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: usize,
    pub n: usize,
    pub tau: Vec<f64>,
    pub pa: Vec<f64>,
    pub c1: Vec<Vec<f64>>,
    pub c2: Vec<Vec<f64>>,
    pub q1: Vec<Vec<f64>>,
    pub q2: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub sell_rule: SellRule,
    pub m0: f64,
    pub n0: Vec<f64>,
    #[serde(default)]
    pub exec_mode: ExecMode,
    /// Rescale a group's buy rates proportionally when their sum exceeds one.
    #[serde(default)]
    pub rescale_buy_rates: bool,
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> ModelError {
    ModelError::Config { path: path.into(), msg: msg.into() }
}

fn check_vec(name: &str, v: &[f64], len: usize, pred: fn(f64) -> bool, req: &str) -> Result<()> {
    if v.len() != len {
        return Err(cfg_err(name, format!("expected length {len}, got {}", v.len())));
    }
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || !pred(x) {
            return Err(cfg_err(format!("{name}[{i}]"), format!("value {x} must be {req}")));
        }
    }
    Ok(())
}

fn check_mat(name: &str, v: &[Vec<f64>], n: usize, m: usize, pred: fn(f64) -> bool, req: &str) -> Result<()> {
    if v.len() != n {
        return Err(cfg_err(name, format!("expected {n} rows, got {}", v.len())));
    }
    for (j, row) in v.iter().enumerate() {
        check_vec(&format!("{name}[{j}]"), row, m, pred, req)?;
    }
    Ok(())
}

fn check_tensor(name: &str, v: &[Vec<Vec<f64>>], n: usize, m: usize) -> Result<()> {
    if v.len() != n {
        return Err(cfg_err(name, format!("expected {n} group blocks, got {}", v.len())));
    }
    for (j, block) in v.iter().enumerate() {
        check_mat(&format!("{name}[{j}]"), block, m, m, |x| x >= 0.0, "nonnegative")?;
    }
    Ok(())
}

fn positive(x: f64) -> bool {
    x > 0.0
}
fn nonneg(x: f64) -> bool {
    x >= 0.0
}
fn any(_: f64) -> bool {
    true
}

impl ModelConfig {
    pub fn layout(&self) -> Layout {
        Layout { m: self.m, n: self.n }
    }

    /// Checks dimensions and sign constraints. Returns warnings for soft violations
    /// (buy-rate offset/gain combinations that rely on clamping).
    pub fn validate(&self) -> Result<Vec<String>> {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            return Err(cfg_err("m", "need at least one asset"));
        }
        if n == 0 {
            return Err(cfg_err("n", "need at least one group"));
        }
        check_vec("tau", &self.tau, m, positive, "positive")?;
        check_vec("pa", &self.pa, m, positive, "positive")?;
        check_mat("c1", &self.c1, n, m, positive, "positive")?;
        check_mat("c2", &self.c2, n, m, positive, "positive")?;
        check_mat("q1", &self.q1, n, m, nonneg, "nonnegative")?;
        check_mat("q2", &self.q2, n, m, nonneg, "nonnegative")?;
        check_mat("a", &self.a, n, m, any, "finite")?;
        check_mat("b", &self.b, n, m, any, "finite")?;
        check_tensor("alpha", &self.alpha, n, m)?;
        check_tensor("beta", &self.beta, n, m)?;
        match &self.sell_rule {
            SellRule::Tanh { atilde, btilde, gamma, delta } => {
                check_mat("sell_rule.tanh.atilde", atilde, n, m, any, "finite")?;
                check_mat("sell_rule.tanh.btilde", btilde, n, m, any, "finite")?;
                check_mat("sell_rule.tanh.gamma", gamma, n, m, any, "finite")?;
                check_mat("sell_rule.tanh.delta", delta, n, m, any, "finite")?;
            }
            SellRule::LinearValue { ctilde, dtilde } => {
                check_mat("sell_rule.linear_value.ctilde", ctilde, n, m, any, "finite")?;
                check_mat("sell_rule.linear_value.dtilde", dtilde, n, m, any, "finite")?;
            }
            SellRule::ZeroSum => {}
        }
        if !(self.m0.is_finite() && self.m0 > 0.0) {
            return Err(cfg_err("m0", format!("value {} must be positive", self.m0)));
        }
        check_vec("n0", &self.n0, m, positive, "positive")?;

        let mut warnings = Vec::new();
        for j in 0..n {
            for i in 0..m {
                let (a, b) = (self.a[j][i], self.b[j][i]);
                if a - b.abs() < 0.0 || a + b.abs() > 1.0 {
                    warnings.push(format!(
                        "a[{j}][{i}] = {a}, b[{j}][{i}] = {b}: a ± |b| leaves [0, 1]; buy rate relies on clamping"
                    ));
                }
            }
        }
        Ok(warnings)
    }

    /// Replaces `n0` with the share totals implied by the fundamental calibration at cash split `m_eq`.
    pub fn calibrate_share_totals(&mut self, m_eq: &[f64]) -> Result<()> {
        let z = vec![0.0; self.m * self.n];
        let (k, ktilde) = rates_at(self, &self.pa, &z, &z);
        for i in 0..self.m {
            let mut total = 0.0;
            for j in 0..self.n {
                let kt = ktilde[j * self.m + i];
                if kt <= 0.0 {
                    return Err(ModelError::InvalidState(format!(
                        "zero sell rate at zero sentiment for group {j}, asset {i}"
                    )));
                }
                total += k[j * self.m + i] * m_eq[j] / (kt * self.pa[i]);
            }
            self.n0[i] = total;
        }
        Ok(())
    }
}

/// Index map of the flattened state `(P, M, N, Z1, Z2)`; per-group blocks are group-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub m: usize,
    pub n: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.m + self.n + 3 * self.m * self.n
    }
    pub fn price(&self, i: usize) -> usize {
        i
    }
    pub fn cash(&self, j: usize) -> usize {
        self.m + j
    }
    pub fn shares(&self, j: usize, i: usize) -> usize {
        self.m + self.n + j * self.m + i
    }
    pub fn z1(&self, j: usize, i: usize) -> usize {
        self.m + self.n + self.m * self.n + j * self.m + i
    }
    pub fn z2(&self, j: usize, i: usize) -> usize {
        self.m + self.n + 2 * self.m * self.n + j * self.m + i
    }
    /// Indices of the (P, Z1, Z2) sub-system.
    pub fn reduced_indices(&self) -> Vec<usize> {
        let mn = self.m * self.n;
        (0..self.m).chain(self.m + self.n + mn..self.dim()).collect()
    }
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend((1..=self.m).map(|i| format!("P_{i}")));
        out.extend((1..=self.n).map(|j| format!("M_{j}")));
        for tag in ["N", "Z1", "Z2"] {
            for j in 1..=self.n {
                for i in 1..=self.m {
                    out.push(format!("{tag}_({j},{i})"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl StateVector {
    pub fn zeros(layout: Layout) -> Self {
        Self { layout, data: vec![0.0; layout.dim()] }
    }
    pub fn from_vec(layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(ModelError::InvalidState(format!(
                "state length {} does not match dimension {}",
                data.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, data })
    }
    pub fn price(&self, i: usize) -> f64 {
        self.data[i]
    }
    pub fn cash(&self, j: usize) -> f64 {
        self.data[self.layout.cash(j)]
    }
    pub fn shares(&self, j: usize, i: usize) -> f64 {
        self.data[self.layout.shares(j, i)]
    }
    pub fn z1(&self, j: usize, i: usize) -> f64 {
        self.data[self.layout.z1(j, i)]
    }
    pub fn z2(&self, j: usize, i: usize) -> f64 {
        self.data[self.layout.z2(j, i)]
    }
    pub fn set_price(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }
    pub fn set_cash(&mut self, j: usize, v: f64) {
        let k = self.layout.cash(j);
        self.data[k] = v;
    }
    pub fn set_shares(&mut self, j: usize, i: usize, v: f64) {
        let k = self.layout.shares(j, i);
        self.data[k] = v;
    }
    pub fn set_z1(&mut self, j: usize, i: usize, v: f64) {
        let k = self.layout.z1(j, i);
        self.data[k] = v;
    }
    pub fn set_z2(&mut self, j: usize, i: usize, v: f64) {
        let k = self.layout.z2(j, i);
        self.data[k] = v;
    }
    pub fn prices(&self) -> &[f64] {
        &self.data[..self.layout.m]
    }
    pub fn cash_slice(&self) -> &[f64] {
        let l = self.layout;
        &self.data[l.m..l.m + l.n]
    }
    pub fn shares_slice(&self) -> &[f64] {
        let l = self.layout;
        &self.data[l.shares(0, 0)..l.shares(0, 0) + l.m * l.n]
    }
    pub fn z1_slice(&self) -> &[f64] {
        let l = self.layout;
        &self.data[l.z1(0, 0)..l.z1(0, 0) + l.m * l.n]
    }
    pub fn z2_slice(&self) -> &[f64] {
        let l = self.layout;
        &self.data[l.z2(0, 0)..l.z2(0, 0) + l.m * l.n]
    }
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// Transition rates and aggregate demand/supply at one state. Rates are flattened `[j*m + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSnapshot {
    pub k: Vec<f64>,
    pub ktilde: Vec<f64>,
    pub demand: Vec<f64>,
    pub supply: Vec<f64>,
    /// Largest per-group excess of Σ_i k over one (zero when the budget holds).
    pub budget_excess: f64,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn raw_buy(cfg: &ModelConfig, j: usize, i: usize, z1: &[f64], z2: &[f64]) -> f64 {
    let m = cfg.m;
    let mut arg = 0.0;
    for l in 0..m {
        arg += cfg.alpha[j][i][l] * z1[j * m + l] + cfg.beta[j][i][l] * z2[j * m + l];
    }
    clamp01(cfg.a[j][i] + cfg.b[j][i] * arg.tanh())
}

/// Buying rate of group `j` for asset `i`. Sentiment slices are flattened group-major.
pub fn buy_rate(cfg: &ModelConfig, j: usize, i: usize, z1: &[f64], z2: &[f64]) -> Result<f64> {
    let m = cfg.m;
    for l in 0..m {
        if !z1[j * m + l].is_finite() || !z2[j * m + l].is_finite() {
            return Err(ModelError::InvalidState(format!("non-finite sentiment for group {j}, asset {l}")));
        }
    }
    Ok(raw_buy(cfg, j, i, z1, z2))
}

fn sell_given_buy(cfg: &ModelConfig, j: usize, i: usize, k: f64, z1: &[f64], z2: &[f64], p: &[f64]) -> f64 {
    let idx = j * cfg.m + i;
    match &cfg.sell_rule {
        SellRule::Tanh { atilde, btilde, gamma, delta } => {
            clamp01(atilde[j][i] + btilde[j][i] * (gamma[j][i] * z1[idx] + delta[j][i] * z2[idx]).tanh())
        }
        SellRule::LinearValue { ctilde, dtilde } => clamp01(ctilde[j][i] + dtilde[j][i] * (p[i] / cfg.pa[i] - 1.0)),
        SellRule::ZeroSum => clamp01(1.0 - k),
    }
}

/// Selling rate of group `j` for asset `i`.
pub fn sell_rate(cfg: &ModelConfig, j: usize, i: usize, z1: &[f64], z2: &[f64], p: &[f64]) -> Result<f64> {
    let idx = j * cfg.m + i;
    if !z1[idx].is_finite() || !z2[idx].is_finite() || !p[i].is_finite() {
        return Err(ModelError::InvalidState(format!("non-finite input for group {j}, asset {i}")));
    }
    if p[i] <= 0.0 {
        return Err(ModelError::InvalidState(format!("non-positive price for asset {i}")));
    }
    let k = match cfg.sell_rule {
        SellRule::ZeroSum => buy_rate(cfg, j, i, z1, z2)?,
        _ => 0.0,
    };
    Ok(sell_given_buy(cfg, j, i, k, z1, z2, p))
}

fn rate_snapshot_parts(cfg: &ModelConfig, p: &[f64], cash: &[f64], shares: &[f64], z1: &[f64], z2: &[f64]) -> RateSnapshot {
    let (m, n) = (cfg.m, cfg.n);
    let mut k = vec![0.0; m * n];
    let mut kt = vec![0.0; m * n];
    let mut excess: f64 = 0.0;
    for j in 0..n {
        let mut sum = 0.0;
        for i in 0..m {
            k[j * m + i] = raw_buy(cfg, j, i, z1, z2);
            sum += k[j * m + i];
        }
        excess = excess.max(sum - 1.0);
        if cfg.rescale_buy_rates && sum > 1.0 {
            for i in 0..m {
                k[j * m + i] /= sum;
            }
        }
        for i in 0..m {
            kt[j * m + i] = sell_given_buy(cfg, j, i, k[j * m + i], z1, z2, p);
        }
    }
    let mut demand = vec![0.0; m];
    let mut supply = vec![0.0; m];
    for i in 0..m {
        for j in 0..n {
            demand[i] += k[j * m + i] * cash[j];
            supply[i] += kt[j * m + i] * shares[j * m + i] * p[i];
        }
    }
    RateSnapshot { k, ktilde: kt, demand, supply, budget_excess: excess.max(0.0) }
}

/// Buy and sell rates (flattened `[j*m + i]`) at prices `p` and sentiments `z1`, `z2`.
pub fn rates_at(cfg: &ModelConfig, p: &[f64], z1: &[f64], z2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let zeros = vec![0.0; cfg.m * cfg.n];
    let snap = rate_snapshot_parts(cfg, p, &vec![0.0; cfg.n], &zeros, z1, z2);
    (snap.k, snap.ktilde)
}

fn check_state(cfg: &ModelConfig, x: &[f64]) -> Result<()> {
    let lay = cfg.layout();
    if x.len() != lay.dim() {
        return Err(ModelError::InvalidState(format!("state length {} != {}", x.len(), lay.dim())));
    }
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::InvalidState(format!("non-finite component {k}")));
    }
    if let Some(i) = x[..lay.m].iter().position(|&p| p <= 0.0) {
        return Err(ModelError::InvalidState(format!("non-positive price for asset {i}")));
    }
    Ok(())
}

pub fn rates(cfg: &ModelConfig, x: &StateVector) -> Result<RateSnapshot> {
    check_state(cfg, &x.data)?;
    Ok(rate_snapshot_parts(cfg, x.prices(), x.cash_slice(), x.shares_slice(), x.z1_slice(), x.z2_slice()))
}

/// Writes the time derivative of the flattened state `x` into `dx`.
pub fn rhs_into(cfg: &ModelConfig, x: &[f64], dx: &mut [f64]) -> Result<()> {
    check_state(cfg, x)?;
    let lay = cfg.layout();
    let (m, n) = (lay.m, lay.n);
    let mn = m * n;
    let p = &x[..m];
    let cash = &x[m..m + n];
    let shares = &x[m + n..m + n + mn];
    let z1 = &x[m + n + mn..m + n + 2 * mn];
    let z2 = &x[m + n + 2 * mn..];
    let snap = rate_snapshot_parts(cfg, p, cash, shares, z1, z2);

    for i in 0..m {
        if snap.supply[i] <= EPS_SUPPLY {
            return Err(ModelError::SingularSupply { asset: i, supply: snap.supply[i] });
        }
        dx[i] = p[i] / cfg.tau[i] * (snap.demand[i] / snap.supply[i] - 1.0);
    }
    let mut fill_buy = vec![1.0; m];
    let mut fill_sell = vec![1.0; m];
    if cfg.exec_mode == ExecMode::RationedClearing {
        for i in 0..m {
            let v = snap.demand[i].min(snap.supply[i]);
            if snap.demand[i] > 0.0 {
                fill_buy[i] = v / snap.demand[i];
            }
            fill_sell[i] = v / snap.supply[i];
        }
    }
    for j in 0..n {
        let mut dm = 0.0;
        for i in 0..m {
            let idx = j * m + i;
            let bought = snap.k[idx] * cash[j] * fill_buy[i];
            let sold = snap.ktilde[idx] * shares[idx] * p[i] * fill_sell[i];
            dm += sold - bought;
            dx[m + n + idx] = (bought - sold) / p[i];
        }
        dx[m + j] = dm;
    }
    for j in 0..n {
        for i in 0..m {
            let idx = j * m + i;
            let (c1, c2) = (cfg.c1[j][i], cfg.c2[j][i]);
            dx[m + n + mn + idx] = c1 * cfg.q1[j][i] * dx[i] / p[i] - c1 * z1[idx];
            dx[m + n + 2 * mn + idx] = c2 * cfg.q2[j][i] * (1.0 - p[i] / cfg.pa[i]) - c2 * z2[idx];
        }
    }
    Ok(())
}

pub fn rhs(cfg: &ModelConfig, x: &StateVector) -> Result<StateVector> {
    let mut out = StateVector::zeros(x.layout);
    rhs_into(cfg, &x.data, &mut out.data)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wealth {
    pub per_group: Vec<f64>,
    pub total: f64,
}

pub fn wealth(x: &StateVector) -> Wealth {
    let lay = x.layout;
    let per_group: Vec<f64> = (0..lay.n)
        .map(|j| x.cash(j) + (0..lay.m).map(|i| x.shares(j, i) * x.price(i)).sum::<f64>())
        .collect();
    let total = per_group.iter().sum();
    Wealth { per_group, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_by_one(k: f64) -> ModelConfig {
        ModelConfig {
            m: 1,
            n: 1,
            tau: vec![1.0],
            pa: vec![1.0],
            c1: vec![vec![1.0]],
            c2: vec![vec![1.0]],
            q1: vec![vec![0.0]],
            q2: vec![vec![0.0]],
            a: vec![vec![k]],
            b: vec![vec![0.0]],
            alpha: vec![vec![vec![0.0]]],
            beta: vec![vec![vec![0.0]]],
            sell_rule: SellRule::LinearValue { ctilde: vec![vec![k]], dtilde: vec![vec![0.0]] },
            m0: 1.0,
            n0: vec![1.0],
            exec_mode: ExecMode::AsWritten,
            rescale_buy_rates: false,
        }
    }

    #[test]
    fn hand_evaluated_price_derivative() {
        let cfg = one_by_one(0.5);
        let x = StateVector::from_vec(cfg.layout(), vec![2.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let d = rhs(&cfg, &x).unwrap();
        assert!((d.price(0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn buy_rate_examples() {
        let mut cfg = one_by_one(0.2);
        cfg.b[0][0] = 0.5;
        assert_eq!(buy_rate(&cfg, 0, 0, &[0.0], &[0.0]).unwrap(), 0.2);
        cfg.b[0][0] = 2.5;
        cfg.alpha[0][0][0] = 3.0;
        assert_eq!(buy_rate(&cfg, 0, 0, &[0.5], &[0.0]).unwrap(), 1.0);
        assert!(buy_rate(&cfg, 0, 0, &[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn linear_sell_examples() {
        let mut cfg = one_by_one(0.2);
        cfg.pa = vec![80.0];
        cfg.sell_rule = SellRule::LinearValue { ctilde: vec![vec![0.2]], dtilde: vec![vec![0.01]] };
        assert!((sell_rate(&cfg, 0, 0, &[0.0], &[0.0], &[80.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!((sell_rate(&cfg, 0, 0, &[0.0], &[0.0], &[120.0]).unwrap() - 0.205).abs() < 1e-15);
        cfg.sell_rule = SellRule::Tanh {
            atilde: vec![vec![0.5]],
            btilde: vec![vec![0.4]],
            gamma: vec![vec![1.0]],
            delta: vec![vec![1.0]],
        };
        assert_eq!(sell_rate(&cfg, 0, 0, &[0.0], &[0.0], &[80.0]).unwrap(), 0.5);
    }

    #[test]
    fn singular_supply_is_reported() {
        let cfg = one_by_one(0.5);
        let x = StateVector::from_vec(cfg.layout(), vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(rhs(&cfg, &x), Err(ModelError::SingularSupply { asset: 0, .. })));
    }

    #[test]
    fn layout_is_group_major() {
        let l = Layout { m: 2, n: 3 };
        assert_eq!(l.dim(), 2 + 3 + 18);
        assert_eq!(l.shares(0, 1), 6);
        assert_eq!(l.shares(1, 0), 7);
        assert_eq!(l.z1(0, 0), 11);
        assert_eq!(l.z2(2, 1), 22);
        assert_eq!(l.reduced_indices().len(), 2 + 12);
    }

    #[test]
    fn budget_rescaling() {
        let mut cfg = one_by_one(0.5);
        cfg.m = 2;
        cfg.tau = vec![1.0; 2];
        cfg.pa = vec![1.0; 2];
        cfg.c1 = vec![vec![1.0; 2]];
        cfg.c2 = vec![vec![1.0; 2]];
        cfg.q1 = vec![vec![0.0; 2]];
        cfg.q2 = vec![vec![0.0; 2]];
        cfg.a = vec![vec![0.8, 0.7]];
        cfg.b = vec![vec![0.0; 2]];
        cfg.alpha = vec![vec![vec![0.0; 2]; 2]];
        cfg.beta = vec![vec![vec![0.0; 2]; 2]];
        cfg.sell_rule = SellRule::ZeroSum;
        cfg.n0 = vec![1.0; 2];
        let x = StateVector::from_vec(cfg.layout(), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let s = rates(&cfg, &x).unwrap();
        assert!((s.budget_excess - 0.5).abs() < 1e-12);
        assert!((s.k[0] - 0.8).abs() < 1e-15);
        cfg.rescale_buy_rates = true;
        let s = rates(&cfg, &x).unwrap();
        assert!((s.k[0] + s.k[1] - 1.0).abs() < 1e-12);
    }
}

//! Off-policy value targets and upgoing returns over one segment.
//!
//! All inputs are per step in time order. `discounts[t]` is `gamma` unless the
//! episode ended at `t`, in which case it is 0 and the trace is cut there.

use serde::{Deserialize, Serialize};

use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VTraceMode {
    /// `min(rho, rho_high)` and `min(c, c_high)`; the lower bounds must be 0.
    Canonical,
    /// `clip(x, low, high)` on both factors.
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VTraceConfig {
    pub gamma: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub rho_low: f64,
    pub rho_high: f64,
    pub mode: VTraceMode,
}

impl Default for VTraceConfig {
    fn default() -> Self {
        VTraceConfig {
            gamma: 1.0,
            c_low: 0.001,
            c_high: 1.007,
            rho_low: 0.001,
            rho_high: 1.007,
            mode: VTraceMode::Clipped,
        }
    }
}

impl VTraceConfig {
    pub fn canonical(rho_bar: f64, c_bar: f64) -> Self {
        VTraceConfig {
            gamma: 1.0,
            c_low: 0.0,
            c_high: c_bar,
            rho_low: 0.0,
            rho_high: rho_bar,
            mode: VTraceMode::Canonical,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = self.gamma.is_finite()
            && (0.0..=1.0).contains(&self.gamma)
            && 0.0 <= self.c_low
            && self.c_low <= self.c_high
            && 0.0 <= self.rho_low
            && self.rho_low <= self.rho_high
            && self.c_high <= self.rho_high;
        if !ok {
            return Err(LearnerError::Config(format!("invalid trace bounds {self:?}")));
        }
        if self.mode == VTraceMode::Canonical && (self.c_low != 0.0 || self.rho_low != 0.0) {
            return Err(LearnerError::Config("canonical mode takes no lower clip".into()));
        }
        Ok(())
    }

    pub fn clip_rho(&self, rho: f64) -> f64 {
        match self.mode {
            VTraceMode::Canonical => rho.min(self.rho_high),
            VTraceMode::Clipped => rho.max(self.rho_low).min(self.rho_high),
        }
    }

    pub fn clip_c(&self, rho: f64) -> f64 {
        match self.mode {
            VTraceMode::Canonical => rho.min(self.c_high),
            VTraceMode::Clipped => rho.max(self.c_low).min(self.c_high),
        }
    }
}

/// Per-step inputs for one segment.
#[derive(Debug, Clone, Copy)]
pub struct TraceInput<'a> {
    pub rewards: &'a [f64],
    pub values: &'a [f64],
    pub bootstrap: f64,
    pub discounts: &'a [f64],
    pub rhos: &'a [f64],
}

impl TraceInput<'_> {
    fn len(&self) -> usize {
        self.rewards.len()
    }

    fn check(&self) -> Result<(), LearnerError> {
        let k = self.len();
        if self.values.len() != k || self.discounts.len() != k || self.rhos.len() != k {
            return Err(LearnerError::Shape("trace inputs differ in length".into()));
        }
        if self.rhos.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(LearnerError::ZeroBehavior);
        }
        Ok(())
    }

    fn next_value(&self, t: usize) -> f64 {
        if t + 1 < self.len() {
            self.values[t + 1]
        } else {
            self.bootstrap
        }
    }

    fn delta(&self, t: usize) -> f64 {
        self.rewards[t] + self.discounts[t] * self.next_value(t) - self.values[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VTraceTargets {
    pub vs: Vec<f64>,
    /// `r_t + gamma * v_{t+1} - V_t`, with `v_k` the bootstrap value.
    pub advantages: Vec<f64>,
    pub clipped_rhos: Vec<f64>,
}

/// Backward recursion `v_t = V_t + rho_t d_t + gamma c_t (v_{t+1} - V_{t+1})`.
pub fn vtrace_targets(input: TraceInput<'_>, cfg: &VTraceConfig) -> Result<VTraceTargets, LearnerError> {
    cfg.validate()?;
    input.check()?;
    let k = input.len();
    let mut vs = vec![0.0; k];
    let mut acc = 0.0; // v_{t+1} - V_{t+1}
    for t in (0..k).rev() {
        let rho = cfg.clip_rho(input.rhos[t]);
        let c = cfg.clip_c(input.rhos[t]);
        let corr = rho * input.delta(t) + input.discounts[t] * c * acc;
        vs[t] = input.values[t] + corr;
        acc = corr;
    }
    let advantages = (0..k)
        .map(|t| {
            let next = if t + 1 < k { vs[t + 1] } else { input.bootstrap };
            input.rewards[t] + input.discounts[t] * next - input.values[t]
        })
        .collect();
    let clipped_rhos = input.rhos.iter().map(|&r| cfg.clip_rho(r)).collect();
    Ok(VTraceTargets { vs, advantages, clipped_rhos })
}

/// The same targets by explicit summation over products of trace weights.
pub fn vtrace_direct(input: TraceInput<'_>, cfg: &VTraceConfig) -> Result<Vec<f64>, LearnerError> {
    cfg.validate()?;
    input.check()?;
    let k = input.len();
    Ok((0..k)
        .map(|t| {
            let mut sum = 0.0;
            for i in 0..k - t {
                let mut w = 1.0;
                for j in 0..i {
                    w *= input.discounts[t + j] * cfg.clip_c(input.rhos[t + j]);
                }
                sum += w * cfg.clip_rho(input.rhos[t + i]) * input.delta(t + i);
            }
            input.values[t] + sum
        })
        .collect())
}

/// Upgoing returns: follow the realized continuation while it beats the value
/// estimate, otherwise bootstrap from the value.
pub fn upgo_returns(rewards: &[f64], values: &[f64], bootstrap: f64, discounts: &[f64]) -> Vec<f64> {
    let k = rewards.len();
    let next_value = |t: usize| if t + 1 < k { values[t + 1] } else { bootstrap };
    let mut g = vec![0.0; k];
    for t in (0..k).rev() {
        let tail = if t + 1 == k {
            next_value(t)
        } else {
            let q = rewards[t + 1] + discounts[t + 1] * next_value(t + 1);
            if q >= values[t + 1] {
                g[t + 1]
            } else {
                values[t + 1]
            }
        };
        g[t] = rewards[t] + discounts[t] * tail;
    }
    g
}

//! Trajectory segments, value targets, losses and the optimizer step.

mod vtrace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionId, Hero};
use crate::obsact::ObservationBundle;
use crate::policy::{PolicyError, PolicyOutput, PolicyParams, Scalar};

pub use vtrace::{upgo_returns, vtrace_direct, vtrace_targets, TraceInput, VTraceConfig, VTraceMode, VTraceTargets};

/// Default unroll length before a segment is cut and bootstrapped.
pub const SEGMENT_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("behavior probability must be positive")]
    ZeroBehavior,
    #[error("invalid segment: {0}")]
    Segment(String),
    #[error("non-finite {0}; update skipped")]
    NonFinite(&'static str),
    #[error("batch already used {uses} times (limit {limit})")]
    ReuseExceeded { uses: u32, limit: u32 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One decision by the learner-side seat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: ObservationBundle,
    pub action: ActionId,
    /// Behavior probability of `action`.
    pub behavior_prob: f32,
    pub reward: f32,
    /// Behavior-time value prediction.
    pub value: f32,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub hero: Hero,
    pub steps: Vec<Step>,
    /// Value at the cut; ignored when the last step is terminal.
    pub bootstrap_value: f32,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::Segment(m));
        if self.steps.is_empty() {
            return bad("empty segment".into());
        }
        for (t, s) in self.steps.iter().enumerate() {
            if !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0) {
                return bad(format!("step {t}: behavior prob {}", s.behavior_prob));
            }
            if ![-1.0, 0.0, 1.0].contains(&s.reward) {
                return bad(format!("step {t}: reward {}", s.reward));
            }
            if s.done && t + 1 != self.steps.len() {
                return bad(format!("step {t}: done before the end"));
            }
            if !s.value.is_finite() {
                return bad(format!("step {t}: non-finite value"));
            }
            if !s.obs.mask.get(s.action.index()).copied().unwrap_or(false) {
                return bad(format!("step {t}: action {} not legal", s.action));
            }
        }
        if !self.bootstrap_value.is_finite() {
            return bad("non-finite bootstrap".into());
        }
        Ok(())
    }

    pub fn terminal(&self) -> bool {
        self.steps.last().is_some_and(|s| s.done)
    }

    /// Trace inputs given current-policy probabilities of the taken actions.
    pub fn trace_parts(&self, gamma: f64, pi: &[f64]) -> TraceParts {
        let rewards = self.steps.iter().map(|s| s.reward as f64).collect();
        let values = self.steps.iter().map(|s| s.value as f64).collect();
        let discounts = self.steps.iter().map(|s| if s.done { 0.0 } else { gamma }).collect();
        let rhos = self.steps.iter().zip(pi).map(|(s, p)| p / s.behavior_prob as f64).collect();
        let bootstrap = if self.terminal() { 0.0 } else { self.bootstrap_value as f64 };
        TraceParts { rewards, values, discounts, rhos, bootstrap }
    }
}

/// Owned per-segment trace inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceParts {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub discounts: Vec<f64>,
    pub rhos: Vec<f64>,
    pub bootstrap: f64,
}

impl TraceParts {
    pub fn input(&self) -> TraceInput<'_> {
        TraceInput {
            rewards: &self.rewards,
            values: &self.values,
            bootstrap: self.bootstrap,
            discounts: &self.discounts,
            rhos: &self.rhos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyGradient {
    /// Clipped surrogate over trace advantages (default).
    Ppo,
    /// Importance-weighted advantage times score function.
    VTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub clip_eps: f64,
    pub w_pg: f64,
    pub w_upgo: f64,
    pub w_value: f64,
    pub w_entropy: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_grad_norm: Option<f64>,
    /// Steps per minibatch.
    pub batch_size: usize,
    pub sample_reuse: u32,
    pub policy_gradient: PolicyGradient,
    pub vtrace: VTraceConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            clip_eps: 0.2,
            w_pg: 1.0,
            w_upgo: 1.0,
            w_value: 1.0,
            w_entropy: 0.01,
            learning_rate: 7e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_grad_norm: None,
            batch_size: 512,
            sample_reuse: 2,
            policy_gradient: PolicyGradient::Ppo,
            vtrace: VTraceConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        self.vtrace.validate()?;
        let w = [self.w_pg, self.w_upgo, self.w_value, self.w_entropy];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(LearnerError::Config("loss weights must be non-negative".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(LearnerError::Config("clip epsilon must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.sample_reuse == 0 {
            return Err(LearnerError::Config("learning rate, batch size and reuse must be positive".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        let (ppo, vtrace_pg) = match self.policy_gradient {
            PolicyGradient::Ppo => (self.w_pg, 0.0),
            PolicyGradient::VTrace => (0.0, self.w_pg),
        };
        LossWeights { ppo, vtrace_pg, upgo: self.w_upgo, value: self.w_value, entropy: self.w_entropy }
    }
}

/// Weights of each loss component; zero disables a term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossWeights {
    pub ppo: f64,
    pub vtrace_pg: f64,
    pub upgo: f64,
    pub value: f64,
    pub entropy: f64,
}

impl LossWeights {
    pub fn only(term: LossTerm) -> Self {
        let mut w = LossWeights::default();
        match term {
            LossTerm::Ppo => w.ppo = 1.0,
            LossTerm::VTracePg => w.vtrace_pg = 1.0,
            LossTerm::Upgo => w.upgo = 1.0,
            LossTerm::Value => w.value = 1.0,
            LossTerm::Entropy => w.entropy = 1.0,
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossTerm {
    Ppo,
    VTracePg,
    Upgo,
    Value,
    Entropy,
}

impl LossTerm {
    pub const ALL: [LossTerm; 5] =
        [LossTerm::Ppo, LossTerm::VTracePg, LossTerm::Upgo, LossTerm::Value, LossTerm::Entropy];
}

/// Quantities held fixed while differentiating with respect to the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStep {
    pub action: usize,
    pub behavior_prob: f64,
    /// `r_t + gamma v_{t+1} - V_t`.
    pub advantage: f64,
    /// Clipped importance weight times advantage.
    pub vtrace_coef: f64,
    /// `min(rho, 1) (G_t - V_t)`.
    pub upgo_coef: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBatch {
    pub steps: Vec<LossStep>,
}

impl LossBatch {
    /// Targets for every step of `segments`, flattened in order.
    /// `pi` holds current-policy probabilities of each taken action.
    pub fn build(segments: &[&TrajectorySegment], pi: &[f64], cfg: &VTraceConfig) -> Result<Self, LearnerError> {
        let total: usize = segments.iter().map(|s| s.len()).sum();
        if pi.len() != total {
            return Err(LearnerError::Shape(format!("{} probabilities for {total} steps", pi.len())));
        }
        let mut steps = Vec::with_capacity(total);
        let mut at = 0;
        for seg in segments {
            let k = seg.len();
            let parts = seg.trace_parts(cfg.gamma, &pi[at..at + k]);
            if parts.rhos.iter().any(|r| !r.is_finite()) {
                return Err(LearnerError::ZeroBehavior);
            }
            let targets = vtrace_targets(parts.input(), cfg)?;
            let g = upgo_returns(&parts.rewards, &parts.values, parts.bootstrap, &parts.discounts);
            for (t, s) in seg.steps.iter().enumerate() {
                steps.push(LossStep {
                    action: s.action.index(),
                    behavior_prob: s.behavior_prob as f64,
                    advantage: targets.advantages[t],
                    vtrace_coef: targets.clipped_rhos[t] * targets.advantages[t],
                    upgo_coef: parts.rhos[t].min(1.0) * (g[t] - parts.values[t]),
                    value_target: targets.vs[t],
                });
            }
            at += k;
        }
        Ok(LossBatch { steps })
    }
}

/// Value of each loss component plus ratio statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub ppo: f64,
    pub vtrace_pg: f64,
    pub upgo: f64,
    pub value: f64,
    /// Mean entropy of the masked policy (the loss term is its negative).
    pub entropy: f64,
    pub total: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub clip_fraction: f64,
}

/// Per-step PPO term `min(A r, A clip(r, 1-eps, 1+eps))`.
pub fn ppo_term(advantage: f64, ratio: f64, eps: f64) -> f64 {
    (advantage * ratio).min(advantage * ratio.clamp(1.0 - eps, 1.0 + eps))
}

/// Loss components and their partials with respect to logits and values.
fn evaluate<S: Scalar>(
    outputs: &[PolicyOutput<S>],
    masks: &[&[bool]],
    batch: &LossBatch,
    w: &LossWeights,
    eps: f64,
) -> Result<(LossReport, Vec<S>, Vec<S>), LearnerError> {
    let n = batch.steps.len();
    if outputs.len() != n || masks.len() != n {
        return Err(LearnerError::Shape("outputs do not match loss batch".into()));
    }
    if n == 0 {
        return Err(LearnerError::Shape("empty batch".into()));
    }
    let a = outputs[0].probs.len();
    let inv = 1.0 / n as f64;
    let mut rep = LossReport::default();
    let mut dlogits = vec![S::zero(); n * a];
    let mut dvalue = vec![S::zero(); n];
    let mut clipped = 0usize;
    let mut probs = vec![0.0; a];
    let mut row = vec![0.0; a];
    for (i, (st, out)) in batch.steps.iter().zip(outputs).enumerate() {
        for (p, q) in probs.iter_mut().zip(&out.probs) {
            *p = q.as_f64();
        }
        let pa = probs[st.action];
        if !(pa > 0.0) {
            return Err(LearnerError::NonFinite("log-probability of taken action"));
        }
        let logp = pa.ln();
        let ratio = pa / st.behavior_prob;
        rep.mean_ratio += ratio * inv;
        rep.max_ratio = rep.max_ratio.max(ratio);

        // coefficient on d log pi(a) / d z
        let mut score = 0.0;
        let unclipped = st.advantage * ratio;
        let term = ppo_term(st.advantage, ratio, eps);
        if unclipped > term {
            clipped += 1;
        } else {
            score += w.ppo * st.advantage * ratio;
        }
        rep.ppo -= term * inv;
        rep.vtrace_pg -= st.vtrace_coef * logp * inv;
        score += w.vtrace_pg * st.vtrace_coef;
        rep.upgo -= st.upgo_coef * logp * inv;
        score += w.upgo * st.upgo_coef;

        let mut h = 0.0;
        for (&p, &m) in probs.iter().zip(masks[i]) {
            if m && p > 0.0 {
                h -= p * p.ln();
            }
        }
        rep.entropy += h * inv;

        for (j, r) in row.iter_mut().enumerate() {
            let p = probs[j];
            let ind = if j == st.action { 1.0 } else { 0.0 };
            let mut g = -score * inv * (ind - p);
            if w.entropy != 0.0 && masks[i][j] && p > 0.0 {
                g += w.entropy * inv * p * (p.ln() + h);
            }
            *r = g;
        }
        for (dst, g) in dlogits[i * a..(i + 1) * a].iter_mut().zip(&row) {
            *dst = S::from_f64(*g);
        }

        let v = out.value.as_f64();
        let diff = v - st.value_target;
        rep.value += diff * diff * inv;
        dvalue[i] = S::from_f64(w.value * 2.0 * diff * inv);
    }
    rep.clip_fraction = clipped as f64 * inv;
    rep.total = w.ppo * rep.ppo + w.vtrace_pg * rep.vtrace_pg + w.upgo * rep.upgo + w.value * rep.value
        - w.entropy * rep.entropy;
    if !rep.total.is_finite() {
        return Err(LearnerError::NonFinite("loss"));
    }
    Ok((rep, dlogits, dvalue))
}

fn masks_of<'a>(obs: &[&'a ObservationBundle]) -> Vec<&'a [bool]> {
    obs.iter().map(|o| o.mask.as_slice()).collect()
}

/// Loss components at `params` with the batch's targets held fixed.
pub fn loss_value<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &[&ObservationBundle],
    batch: &LossBatch,
    w: &LossWeights,
    eps: f64,
) -> Result<LossReport, LearnerError> {
    let out = params.forward_batch(obs, &vec![false; obs.len()])?;
    Ok(evaluate(&out.outputs, &masks_of(obs), batch, w, eps)?.0)
}

/// Loss components and the exact gradient of the weighted total.
pub fn loss_and_grad<S: Scalar>(
    params: &PolicyParams<S>,
    obs: &[&ObservationBundle],
    batch: &LossBatch,
    w: &LossWeights,
    eps: f64,
) -> Result<(LossReport, Vec<S>), LearnerError> {
    let out = params.forward_batch(obs, &vec![false; obs.len()])?;
    let (rep, dl, dv) = evaluate(&out.outputs, &masks_of(obs), batch, w, eps)?;
    let grad = params.backward(&out.cache, &dl, &dv);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(LearnerError::NonFinite("gradient"));
    }
    Ok((rep, grad))
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step<S: Scalar>(&mut self, params: &mut [S], grad: &[S]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i].as_f64();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] = S::from_f64(params[i].as_f64() - self.lr * mh / (vh.sqrt() + self.eps));
        }
    }
}

/// Segments handed to the learner together with a use counter.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub segments: Vec<TrajectorySegment>,
    uses: u32,
}

impl TrainBatch {
    pub fn new(segments: Vec<TrajectorySegment>) -> Self {
        TrainBatch { segments, uses: 0 }
    }

    pub fn uses(&self) -> u32 {
        self.uses
    }

    pub fn steps(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }
}

/// Structured record of one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: u64,
    pub steps: usize,
    pub loss: LossReport,
    pub grad_norm: f64,
    pub c_ratio: Option<f64>,
}

impl UpdateMetrics {
    pub fn log_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Owns one parameter set and its optimizer state.
pub struct Learner {
    pub params: PolicyParams<f32>,
    pub cfg: LearnerConfig,
    adam: Adam,
}

impl Learner {
    pub fn new(params: PolicyParams<f32>, cfg: LearnerConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let adam = Adam::new(params.data.len(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Ok(Learner { params, cfg, adam })
    }

    pub fn updates(&self) -> u64 {
        self.adam.t
    }

    /// One optimizer step. On error the parameters are left untouched.
    pub fn update(&mut self, batch: &mut TrainBatch) -> Result<UpdateMetrics, LearnerError> {
        if batch.uses >= self.cfg.sample_reuse {
            return Err(LearnerError::ReuseExceeded { uses: batch.uses, limit: self.cfg.sample_reuse });
        }
        for s in &batch.segments {
            s.validate()?;
        }
        let obs: Vec<&ObservationBundle> =
            batch.segments.iter().flat_map(|s| s.steps.iter().map(|st| &st.obs)).collect();
        let out = self.params.forward_batch(&obs, &vec![false; obs.len()])?;
        let actions = batch.segments.iter().flat_map(|s| s.steps.iter().map(|st| st.action.index()));
        let pi: Vec<f64> = out.outputs.iter().zip(actions).map(|(o, a)| o.probs[a].as_f64()).collect();
        let segs: Vec<&TrajectorySegment> = batch.segments.iter().collect();
        let lb = LossBatch::build(&segs, &pi, &self.cfg.vtrace)?;
        let (rep, dl, dv) = evaluate(&out.outputs, &masks_of(&obs), &lb, &self.cfg.weights(), self.cfg.clip_eps)?;
        let mut grad = self.params.backward(&out.cache, &dl, &dv);
        let norm = grad.iter().map(|g| (*g as f64) * (*g as f64)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(LearnerError::NonFinite("gradient"));
        }
        if let Some(max) = self.cfg.max_grad_norm {
            if norm > max {
                let s = (max / norm) as f32;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.adam.step(&mut self.params.data, &grad);
        batch.uses += 1;
        self.params.meta.step += 1;
        Ok(UpdateMetrics { update: self.adam.t, steps: obs.len(), loss: rep, grad_norm: norm, c_ratio: None })
    }
}

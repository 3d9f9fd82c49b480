//! Policy/value network over the shared action table.
//!
//! Two branches (deck building and battle) share the card and hero embedding
//! tables. The CB branch produces logits for the pick region only and the BT
//! branch for the battle region only; the stage indicator picks which one is
//! live. The value head reads the concatenated hidden features of both.
//!
//! Parameters live in one flat buffer so optimizers and checkpoints can treat
//! them uniformly. Everything is generic over [`Scalar`] so gradient checks can
//! run in `f64` while training runs in `f32`.

mod checkpoint;
mod scalar;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionId, Hero, PoolChecksum};
use crate::obsact::{FeatureSchema, ObservationBundle, CARD_SLOTS};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use scalar::Scalar;

/// Added to masked logits before normalization.
pub const MASK_PENALTY: f64 = 1e9;
/// Gain applied to the output heads at init so the starting policy is close to uniform.
pub const HEAD_GAIN: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("checkpoint pool checksum {found} does not match {expected}")]
    PoolMismatch { expected: PoolChecksum, found: PoolChecksum },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("output is not from the deck-building stage")]
    NotCb,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of the network; derived from the feature schema plus two sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetDims {
    pub pool_size: usize,
    pub action_size: usize,
    pub features: usize,
    pub common_end: usize,
    pub cb_end: usize,
    pub card_vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl NetDims {
    pub fn new(schema: &FeatureSchema, embed: usize, hidden: usize) -> Self {
        NetDims {
            pool_size: schema.pool_size,
            action_size: schema.action_size,
            features: schema.total,
            common_end: schema.common_end,
            cb_end: schema.cb_end,
            card_vocab: schema.card_vocab,
            embed,
            hidden,
        }
    }

    /// d = 32, two hidden layers of 256 per branch.
    pub fn standard(schema: &FeatureSchema) -> Self {
        Self::new(schema, 32, 256)
    }

    pub fn bt_actions(&self) -> usize {
        self.action_size - self.pool_size
    }

    pub fn cb_input(&self) -> usize {
        self.cb_end + 3 * self.embed
    }

    pub fn bt_input(&self) -> usize {
        self.common_end + (self.features - self.cb_end) + (2 + CARD_SLOTS) * self.embed
    }
}

/// A named tensor inside the flat parameter buffer (row-major `rows x cols`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Branch {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    wo: Tensor,
    bo: Tensor,
}

/// Where each tensor sits in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub dims: NetDims,
    pub card_emb: Tensor,
    pub hero_emb: Tensor,
    cb: Branch,
    bt: Branch,
    pub value_w: Tensor,
    pub value_b: Tensor,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(dims: NetDims) -> Self {
        let mut at = 0;
        let mut t = |name: &'static str, rows: usize, cols: usize| {
            let out = Tensor { name, offset: at, rows, cols };
            at += rows * cols;
            out
        };
        let (d, h) = (dims.embed, dims.hidden);
        let card_emb = t("card_emb", dims.card_vocab, d);
        let hero_emb = t("hero_emb", 3, d);
        let cb = Branch {
            w1: t("cb.w1", dims.cb_input(), h),
            b1: t("cb.b1", 1, h),
            w2: t("cb.w2", h, h),
            b2: t("cb.b2", 1, h),
            wo: t("cb.wo", h, dims.pool_size),
            bo: t("cb.bo", 1, dims.pool_size),
        };
        let bt = Branch {
            w1: t("bt.w1", dims.bt_input(), h),
            b1: t("bt.b1", 1, h),
            w2: t("bt.w2", h, h),
            b2: t("bt.b2", 1, h),
            wo: t("bt.wo", h, dims.bt_actions()),
            bo: t("bt.bo", 1, dims.bt_actions()),
        };
        let value_w = t("value.w", 2 * h, 1);
        let value_b = t("value.b", 1, 1);
        ParamLayout { dims, card_emb, hero_emb, cb, bt, value_w, value_b, total: at }
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let mut v = vec![self.card_emb, self.hero_emb];
        for b in [&self.cb, &self.bt] {
            v.extend([b.w1, b.b1, b.w2, b.b2, b.wo, b.bo]);
        }
        v.extend([self.value_w, self.value_b]);
        v
    }

    /// Parameters that belong to the CB branch only.
    pub fn cb_tensors(&self) -> Vec<Tensor> {
        let b = &self.cb;
        vec![b.w1, b.b1, b.w2, b.b2, b.wo, b.bo]
    }

    /// Parameters that belong to the BT branch only.
    pub fn bt_tensors(&self) -> Vec<Tensor> {
        let b = &self.bt;
        vec![b.w1, b.b1, b.w2, b.b2, b.wo, b.bo]
    }
}

/// Checkpoint metadata carried alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub pool_checksum: PoolChecksum,
    pub version: u32,
    pub step: u64,
    /// Set when the parameters belong to one hero's isolated learner.
    pub hero_tag: Option<Hero>,
}

#[derive(Clone, PartialEq)]
pub struct PolicyParams<S: Scalar> {
    pub meta: ParamMeta,
    pub dims: NetDims,
    pub data: Vec<S>,
}

impl<S: Scalar> fmt::Debug for PolicyParams<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyParams")
            .field("meta", &self.meta)
            .field("dims", &self.dims)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<S: Scalar> PolicyParams<S> {
    /// Deterministic per-seed init: uniform in +-1/sqrt(fan_in), small heads, zero biases.
    pub fn init(dims: NetDims, pool_checksum: PoolChecksum, seed: u64) -> Result<Self, PolicyError> {
        if dims.embed == 0 || dims.hidden == 0 || dims.action_size <= dims.pool_size || dims.cb_end > dims.features {
            return Err(PolicyError::Dimension(format!("{dims:?}")));
        }
        let layout = ParamLayout::new(dims);
        let mut data = vec![S::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: Tensor, bound: f64| {
            for x in &mut data[t.range()] {
                *x = S::from_f64(rng.random_range(-bound..bound));
            }
        };
        let emb_bound = 1.0 / (dims.embed as f64).sqrt();
        fill(layout.card_emb, emb_bound);
        fill(layout.hero_emb, emb_bound);
        for b in [&layout.cb, &layout.bt] {
            fill(b.w1, 1.0 / (b.w1.rows as f64).sqrt());
            fill(b.w2, 1.0 / (b.w2.rows as f64).sqrt());
            fill(b.wo, HEAD_GAIN / (b.wo.rows as f64).sqrt());
        }
        fill(layout.value_w, HEAD_GAIN / (layout.value_w.rows as f64).sqrt());
        let meta = ParamMeta { pool_checksum, version: CHECKPOINT_VERSION, step: 0, hero_tag: None };
        Ok(PolicyParams { meta, dims, data })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.dims)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> PolicyParams<T> {
        PolicyParams {
            meta: self.meta,
            dims: self.dims,
            data: self.data.iter().map(|x| T::from_f64(x.as_f64())).collect(),
        }
    }
}

/// Per-observation output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<S: Scalar> {
    /// Logits over the full table; entries outside the live stage region are 0.
    pub logits: Vec<S>,
    /// Masked probabilities over the full table.
    pub probs: Vec<S>,
    pub value: S,
    pub is_cb: bool,
}

impl<S: Scalar> PolicyOutput<S> {
    pub fn argmax(&self) -> ActionId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        ActionId(best as u16)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in self.probs.iter().enumerate() {
            let p = p.as_f64();
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return ActionId(i as u16);
                }
            }
        }
        ActionId(last as u16)
    }
}

/// Uniform-over-legal replacement for a CB output: zero logits, then mask.
/// `pool_size` is the width of the CB region at the front of the table.
pub fn random_cb_override<S: Scalar>(
    output: &PolicyOutput<S>,
    mask: &[bool],
    pool_size: usize,
    active: bool,
) -> Result<PolicyOutput<S>, PolicyError> {
    if !output.is_cb {
        return Err(PolicyError::NotCb);
    }
    if !active {
        return Ok(output.clone());
    }
    let mut out = output.clone();
    out.logits[..pool_size].iter_mut().for_each(|z| *z = S::zero());
    masked_softmax(&out.logits[..pool_size], &mask[..pool_size], &mut out.probs[..pool_size]);
    Ok(out)
}

/// Softmax over `logits` restricted to `mask`; masked entries get exactly 0.
pub fn masked_softmax<S: Scalar>(logits: &[S], mask: &[bool], out: &mut [S]) {
    let penalty = S::from_f64(MASK_PENALTY);
    let mut max = S::neg_infinity();
    for (z, &m) in logits.iter().zip(mask) {
        let z = if m { *z } else { *z - penalty };
        if z > max {
            max = z;
        }
    }
    if !mask.iter().any(|&m| m) {
        out.iter_mut().for_each(|p| *p = S::zero());
        return;
    }
    let mut sum = S::zero();
    for ((z, &m), p) in logits.iter().zip(mask).zip(out.iter_mut()) {
        let z = if m { *z } else { *z - penalty };
        *p = (z - max).exp();
        sum = sum + *p;
    }
    for p in out.iter_mut() {
        *p = *p / sum;
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<S: Scalar> {
    batch: usize,
    x_cb: Vec<S>,
    h1_cb: Vec<S>,
    h2_cb: Vec<S>,
    x_bt: Vec<S>,
    h1_bt: Vec<S>,
    h2_bt: Vec<S>,
    gathers: Vec<Gather>,
    is_cb: Vec<bool>,
    logit_scale: Vec<S>,
}

/// Embedding rows that feed one observation's inputs.
#[derive(Debug, Clone, Default)]
struct Gather {
    hero: usize,
    oppo_hero: Option<usize>,
    my_picks: Vec<(usize, f64)>,
    cheat_picks: Vec<(usize, f64)>,
    slots: Vec<u16>,
}

/// Batched forward result.
pub struct BatchOutput<S: Scalar> {
    pub outputs: Vec<PolicyOutput<S>>,
    pub cache: ForwardCache<S>,
}

impl<S: Scalar> PolicyParams<S> {
    /// Forward a batch. `random_cb[i]` zeroes the CB logits of sample `i`.
    pub fn forward_batch(&self, obs: &[&ObservationBundle], random_cb: &[bool]) -> Result<BatchOutput<S>, PolicyError> {
        let dims = self.dims;
        let layout = self.layout();
        let n = obs.len();
        if random_cb.len() != n {
            return Err(PolicyError::Dimension("random_cb length".into()));
        }
        for o in obs {
            if o.features.len() != dims.features || o.mask.len() != dims.action_size || o.card_slots.len() != CARD_SLOTS
            {
                return Err(PolicyError::Dimension("observation does not match network".into()));
            }
            if o.features.iter().any(|x| !x.is_finite()) {
                return Err(PolicyError::NonFinite("input"));
            }
        }
        let (d, h) = (dims.embed, dims.hidden);
        let p = &self.data;
        let emb = |t: Tensor, row: usize| &p[t.offset + row * d..t.offset + (row + 1) * d];

        let (in_cb, in_bt) = (dims.cb_input(), dims.bt_input());
        let mut x_cb = vec![S::zero(); n * in_cb];
        let mut x_bt = vec![S::zero(); n * in_bt];
        let mut gathers = Vec::with_capacity(n);
        let sel = dims.common_end;
        // cheat_cards and cheat_n close the common block
        let cheat = dims.common_end - dims.pool_size - 1;
        for (i, o) in obs.iter().enumerate() {
            let f = &o.features;
            let g = Gather {
                hero: o.my_hero.index(),
                oppo_hero: o.oppo_hero.map(|h| h.index()),
                my_picks: weights(&f[sel..sel + dims.pool_size]),
                cheat_picks: weights(&f[cheat..cheat + dims.pool_size]),
                slots: o.card_slots.clone(),
            };
            let row = &mut x_cb[i * in_cb..(i + 1) * in_cb];
            for (dst, src) in row[..dims.cb_end].iter_mut().zip(&f[..dims.cb_end]) {
                *dst = S::from_f32(*src);
            }
            let mut at = dims.cb_end;
            row[at..at + d].copy_from_slice(emb(layout.hero_emb, g.hero));
            at += d;
            for picks in [&g.my_picks, &g.cheat_picks] {
                for &(card, w) in picks.iter() {
                    let w = S::from_f64(w);
                    for (dst, e) in row[at..at + d].iter_mut().zip(emb(layout.card_emb, card)) {
                        *dst = *dst + w * *e;
                    }
                }
                at += d;
            }

            let row = &mut x_bt[i * in_bt..(i + 1) * in_bt];
            let mut at = 0;
            for src in f[..dims.common_end].iter().chain(&f[dims.cb_end..]) {
                row[at] = S::from_f32(*src);
                at += 1;
            }
            row[at..at + d].copy_from_slice(emb(layout.hero_emb, g.hero));
            at += d;
            if let Some(oh) = g.oppo_hero {
                row[at..at + d].copy_from_slice(emb(layout.hero_emb, oh));
            }
            at += d;
            for &slot in &g.slots {
                row[at..at + d].copy_from_slice(emb(layout.card_emb, slot as usize));
                at += d;
            }
            gathers.push(g);
        }

        let (h1_cb, h2_cb, z_cb) = branch_forward(p, &layout.cb, &x_cb, n, in_cb, h);
        let (h1_bt, h2_bt, z_bt) = branch_forward(p, &layout.bt, &x_bt, n, in_bt, h);

        let vw = &p[layout.value_w.range()];
        let vb = p[layout.value_b.offset];
        let pool = dims.pool_size;
        let bt_n = dims.bt_actions();
        let mut outputs = Vec::with_capacity(n);
        let mut is_cb = Vec::with_capacity(n);
        let mut logit_scale = Vec::with_capacity(n);
        for (i, o) in obs.iter().enumerate() {
            let cb = o.is_cb();
            let scale = if cb && random_cb[i] { S::zero() } else { S::one() };
            let mut logits = vec![S::zero(); dims.action_size];
            let mut probs = vec![S::zero(); dims.action_size];
            let region = if cb { 0..pool } else { pool..dims.action_size };
            let src = if cb { &z_cb[i * pool..(i + 1) * pool] } else { &z_bt[i * bt_n..(i + 1) * bt_n] };
            for (dst, z) in logits[region.clone()].iter_mut().zip(src) {
                *dst = *z * scale;
            }
            masked_softmax(&logits[region.clone()], &o.mask[region.clone()], &mut probs[region]);
            let mut value = vb;
            for (w, x) in vw[..h].iter().zip(&h2_cb[i * h..(i + 1) * h]) {
                value = value + *w * *x;
            }
            for (w, x) in vw[h..].iter().zip(&h2_bt[i * h..(i + 1) * h]) {
                value = value + *w * *x;
            }
            if !value.is_finite() {
                return Err(PolicyError::NonFinite("value"));
            }
            outputs.push(PolicyOutput { logits, probs, value, is_cb: cb });
            is_cb.push(cb);
            logit_scale.push(scale);
        }
        let cache = ForwardCache { batch: n, x_cb, h1_cb, h2_cb, x_bt, h1_bt, h2_bt, gathers, is_cb, logit_scale };
        Ok(BatchOutput { outputs, cache })
    }

    pub fn forward(&self, obs: &ObservationBundle, random_cb: bool) -> Result<PolicyOutput<S>, PolicyError> {
        let mut out = self.forward_batch(&[obs], &[random_cb])?;
        Ok(out.outputs.pop().expect("one output"))
    }

    /// Gradient of a scalar loss given its partials w.r.t. each sample's logits
    /// (full table, `batch x action_size`) and values.
    pub fn backward(&self, cache: &ForwardCache<S>, dlogits: &[S], dvalue: &[S]) -> Vec<S> {
        let dims = self.dims;
        let layout = self.layout();
        let n = cache.batch;
        let (d, h) = (dims.embed, dims.hidden);
        let pool = dims.pool_size;
        let bt_n = dims.bt_actions();
        assert_eq!(dlogits.len(), n * dims.action_size);
        assert_eq!(dvalue.len(), n);
        let p = &self.data;
        let mut grad = vec![S::zero(); layout.total];

        let mut dz_cb = vec![S::zero(); n * pool];
        let mut dz_bt = vec![S::zero(); n * bt_n];
        for i in 0..n {
            let row = &dlogits[i * dims.action_size..(i + 1) * dims.action_size];
            let s = cache.logit_scale[i];
            if cache.is_cb[i] {
                for (dst, g) in dz_cb[i * pool..(i + 1) * pool].iter_mut().zip(&row[..pool]) {
                    *dst = *g * s;
                }
            } else {
                dz_bt[i * bt_n..(i + 1) * bt_n].copy_from_slice(&row[pool..]);
            }
        }

        // value head
        let vw = &p[layout.value_w.range()];
        let mut dh2_cb = vec![S::zero(); n * h];
        let mut dh2_bt = vec![S::zero(); n * h];
        let mut dvb = S::zero();
        {
            let gvw = &mut grad[layout.value_w.range()];
            for i in 0..n {
                let dv = dvalue[i];
                if dv == S::zero() {
                    continue;
                }
                dvb = dvb + dv;
                for j in 0..h {
                    gvw[j] = gvw[j] + dv * cache.h2_cb[i * h + j];
                    gvw[h + j] = gvw[h + j] + dv * cache.h2_bt[i * h + j];
                    dh2_cb[i * h + j] = dv * vw[j];
                    dh2_bt[i * h + j] = dv * vw[h + j];
                }
            }
        }
        grad[layout.value_b.offset] = dvb;

        let dx_cb = branch_backward(
            p,
            &mut grad,
            &layout.cb,
            BranchActs { x: &cache.x_cb, h1: &cache.h1_cb, h2: &cache.h2_cb },
            &dz_cb,
            dh2_cb,
            n,
        );
        let dx_bt = branch_backward(
            p,
            &mut grad,
            &layout.bt,
            BranchActs { x: &cache.x_bt, h1: &cache.h1_bt, h2: &cache.h2_bt },
            &dz_bt,
            dh2_bt,
            n,
        );

        // scatter into embeddings
        let (in_cb, in_bt) = (dims.cb_input(), dims.bt_input());
        let ce = layout.card_emb.offset;
        let he = layout.hero_emb.offset;
        let add = |grad: &mut [S], base: usize, src: &[S], w: S| {
            for (g, x) in grad[base..base + d].iter_mut().zip(src) {
                *g = *g + w * *x;
            }
        };
        for (i, g) in cache.gathers.iter().enumerate() {
            let row = &dx_cb[i * in_cb..(i + 1) * in_cb];
            let mut at = dims.cb_end;
            add(&mut grad, he + g.hero * d, &row[at..at + d], S::one());
            at += d;
            for picks in [&g.my_picks, &g.cheat_picks] {
                for &(card, w) in picks.iter() {
                    add(&mut grad, ce + card * d, &row[at..at + d], S::from_f64(w));
                }
                at += d;
            }

            let row = &dx_bt[i * in_bt..(i + 1) * in_bt];
            let mut at = dims.common_end + (dims.features - dims.cb_end);
            add(&mut grad, he + g.hero * d, &row[at..at + d], S::one());
            at += d;
            if let Some(oh) = g.oppo_hero {
                add(&mut grad, he + oh * d, &row[at..at + d], S::one());
            }
            at += d;
            for &slot in &g.slots {
                add(&mut grad, ce + slot as usize * d, &row[at..at + d], S::one());
                at += d;
            }
        }
        grad
    }
}

/// Normalized embedding weights from a count vector (pool card `i` is embedding row `i + 1`).
fn weights(counts: &[f32]) -> Vec<(usize, f64)> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    counts.iter().enumerate().filter(|(_, &c)| c > 0.0).map(|(i, &c)| (i + 1, c as f64 / total)).collect()
}

/// Returns (h1, h2, logits) for one branch.
fn branch_forward<S: Scalar>(
    p: &[S],
    b: &Branch,
    x: &[S],
    n: usize,
    input: usize,
    h: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let out = b.wo.cols;
    let mut h1 = broadcast_rows(&p[b.b1.range()], n);
    S::gemm(n, input, h, x, input, 1, &p[b.w1.range()], h, 1, S::one(), &mut h1, h, 1);
    h1.iter_mut().for_each(|v| *v = v.tanh());
    let mut h2 = broadcast_rows(&p[b.b2.range()], n);
    S::gemm(n, h, h, &h1, h, 1, &p[b.w2.range()], h, 1, S::one(), &mut h2, h, 1);
    h2.iter_mut().for_each(|v| *v = v.tanh());
    let mut z = broadcast_rows(&p[b.bo.range()], n);
    S::gemm(n, h, out, &h2, h, 1, &p[b.wo.range()], out, 1, S::one(), &mut z, out, 1);
    (h1, h2, z)
}

struct BranchActs<'a, S> {
    x: &'a [S],
    h1: &'a [S],
    h2: &'a [S],
}

/// Accumulates weight gradients into `grad` and returns d(loss)/d(input).
fn branch_backward<S: Scalar>(
    p: &[S],
    grad: &mut [S],
    b: &Branch,
    acts: BranchActs<'_, S>,
    dz: &[S],
    mut dh2: Vec<S>,
    n: usize,
) -> Vec<S> {
    let input = b.w1.rows;
    let h = b.w1.cols;
    let out = b.wo.cols;
    // output layer
    S::gemm(h, n, out, acts.h2, 1, h, dz, out, 1, S::one(), &mut grad[b.wo.range()], out, 1);
    col_sums(dz, n, out, &mut grad[b.bo.range()]);
    S::gemm(n, out, h, dz, out, 1, &p[b.wo.range()], 1, out, S::one(), &mut dh2, h, 1);
    // layer 2
    for (g, a) in dh2.iter_mut().zip(acts.h2) {
        *g = *g * (S::one() - *a * *a);
    }
    S::gemm(h, n, h, acts.h1, 1, h, &dh2, h, 1, S::one(), &mut grad[b.w2.range()], h, 1);
    col_sums(&dh2, n, h, &mut grad[b.b2.range()]);
    let mut dh1 = vec![S::zero(); n * h];
    S::gemm(n, h, h, &dh2, h, 1, &p[b.w2.range()], 1, h, S::zero(), &mut dh1, h, 1);
    // layer 1
    for (g, a) in dh1.iter_mut().zip(acts.h1) {
        *g = *g * (S::one() - *a * *a);
    }
    S::gemm(input, n, h, acts.x, 1, input, &dh1, h, 1, S::one(), &mut grad[b.w1.range()], h, 1);
    col_sums(&dh1, n, h, &mut grad[b.b1.range()]);
    let mut dx = vec![S::zero(); n * input];
    S::gemm(n, h, input, &dh1, h, 1, &p[b.w1.range()], 1, h, S::zero(), &mut dx, input, 1);
    dx
}

fn broadcast_rows<S: Scalar>(bias: &[S], n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(n * bias.len());
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    out
}

fn col_sums<S: Scalar>(m: &[S], rows: usize, cols: usize, out: &mut [S]) {
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *o = *o + *v;
        }
    }
}

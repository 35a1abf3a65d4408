//! Recurrent Gaussian actor-critic.
//!
//! Actor and critic are separate stacks of LSTM layers, each followed by a
//! linear head. The actor head gives the mean joint setpoints; the policy is
//! a diagonal Gaussian around it with a trainable, state-independent
//! `log_std`. All parameters live in one flat vector:
//!
//! ```text
//! actor:  for each layer: W (4H x (in + H), row-major), b (4H)
//!         head W (A x H), head b (A)
//! critic: same layout with a single output
//! log_std (A)
//! ```
//!
//! Gate rows are ordered input, forget, cell, output.

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Network dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub width: usize,
    pub layers: usize,
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.act_dim == 0 || self.width == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Analytic length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        let h = self.width;
        let stack = |out: usize| {
            let mut n = 0;
            let mut input = self.obs_dim;
            for _ in 0..self.layers {
                n += 4 * h * (input + h) + 4 * h;
                input = h;
            }
            n + out * h + out
        };
        stack(self.act_dim) + stack(1) + self.act_dim
    }

    fn diff(&self, other: &NetShape) -> String {
        let mut parts = Vec::new();
        let mut cmp = |name: &str, a: usize, b: usize| {
            if a != b {
                parts.push(format!("{name} {a} vs {b}"));
            }
        };
        cmp("obs_dim", self.obs_dim, other.obs_dim);
        cmp("act_dim", self.act_dim, other.act_dim);
        cmp("width", self.width, other.width);
        cmp("layers", self.layers, other.layers);
        parts.join(", ")
    }
}

#[derive(Clone, Debug)]
struct LstmSlots {
    w: usize,
    b: usize,
    input: usize,
}

#[derive(Clone, Debug)]
struct StackSlots {
    layers: Vec<LstmSlots>,
    head_w: usize,
    head_b: usize,
    out: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    actor: StackSlots,
    critic: StackSlots,
    log_std: usize,
}

impl Layout {
    fn new(shape: &NetShape) -> Self {
        let h = shape.width;
        let mut at = 0;
        let mut stack = |out: usize| {
            let mut layers = Vec::new();
            let mut input = shape.obs_dim;
            for _ in 0..shape.layers {
                let w = at;
                at += 4 * h * (input + h);
                let b = at;
                at += 4 * h;
                layers.push(LstmSlots { w, b, input });
                input = h;
            }
            let head_w = at;
            at += out * h;
            let head_b = at;
            at += out;
            StackSlots { layers, head_w, head_b, out }
        };
        let actor = stack(shape.act_dim);
        let critic = stack(1);
        Self { actor, critic, log_std: at }
    }
}

/// Recurrent activations and cell memory of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Per-layer recurrent state for actor and critic.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<T> {
    pub actor: Vec<LayerState<T>>,
    pub critic: Vec<LayerState<T>>,
}

impl<T: Real> HiddenState<T> {
    pub fn zeros(shape: &NetShape) -> Self {
        let layer = || LayerState { h: vec![T::zero(); shape.width], c: vec![T::zero(); shape.width] };
        Self { actor: (0..shape.layers).map(|_| layer()).collect(), critic: (0..shape.layers).map(|_| layer()).collect() }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Per-layer activations kept for the backward pass.
#[derive(Clone, Debug)]
struct LayerCache<T> {
    xh: Vec<T>,
    gates: Vec<T>,
    c_prev: Vec<T>,
    tanh_c: Vec<T>,
}

#[derive(Clone, Debug)]
struct StepCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// Forward pass over a whole episode, kept for [`RecurrentActorCritic::backward`].
#[derive(Clone, Debug)]
pub struct SequenceTrace<T> {
    pub means: Vec<Vec<T>>,
    pub values: Vec<T>,
    actor: Vec<StepCache<T>>,
    critic: Vec<StepCache<T>>,
}

/// One step of an episode for [`RecurrentActorCritic::bptt_gradients`]:
/// contributes `logp_weight * log π(action | obs) + value_weight * ½ (V - value_target)²`.
#[derive(Clone, Debug)]
pub struct BpttStep<T> {
    pub obs: Vec<T>,
    pub action: Vec<T>,
    pub logp_weight: T,
    pub value_weight: T,
    pub value_target: T,
}

#[derive(Clone, Debug)]
pub struct RecurrentActorCritic<T> {
    shape: NetShape,
    layout: Layout,
    params: Vec<T>,
}

impl<T: Real> RecurrentActorCritic<T> {
    /// All parameters zero.
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self { shape, layout: Layout::new(&shape), params: vec![T::zero(); shape.param_count()] })
    }

    /// Random initialisation: Gaussian input weights scaled by `1/sqrt(in)`,
    /// orthogonal recurrent blocks, forget bias 1, small uniform heads, actor
    /// head bias at `action_bias`, `log_std = ln(init_std)`.
    pub fn new(shape: NetShape, action_bias: &[T], init_std: T, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut net = Self::zeros(shape)?;
        if action_bias.len() != shape.act_dim {
            return Err(Error::Dimension { expected: shape.act_dim, got: action_bias.len() });
        }
        let h = shape.width;
        for stack in [net.layout.actor.clone(), net.layout.critic.clone()] {
            for l in &stack.layers {
                let cols = l.input + h;
                let scale = 1.0 / (l.input as f64).sqrt();
                for gate in 0..4 {
                    for r in 0..h {
                        for c in 0..l.input {
                            let z: f64 = StandardNormal.sample(rng);
                            net.params[l.w + (gate * h + r) * cols + c] = T::of(scale * z);
                        }
                    }
                    let orth = orthogonal(h, rng);
                    for r in 0..h {
                        for c in 0..h {
                            net.params[l.w + (gate * h + r) * cols + l.input + c] = T::of(orth[r * h + c]);
                        }
                    }
                }
                for r in 0..h {
                    net.params[l.b + h + r] = T::one();
                }
            }
            let bound = 0.01;
            for k in 0..stack.out * h {
                net.params[stack.head_w + k] = T::of(rng.random_range(-bound..bound));
            }
        }
        let a = &net.layout.actor;
        net.params[a.head_b..a.head_b + shape.act_dim].copy_from_slice(action_bias);
        let ls = net.layout.log_std;
        net.params[ls..ls + shape.act_dim].iter_mut().for_each(|v| *v = init_std.ln());
        Ok(net)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn log_std(&self) -> &[T] {
        &self.params[self.layout.log_std..self.layout.log_std + self.shape.act_dim]
    }

    pub fn initial_state(&self) -> HiddenState<T> {
        HiddenState::zeros(&self.shape)
    }

    fn check_obs(&self, obs: &[T]) -> Result<()> {
        if obs.len() != self.shape.obs_dim {
            return Err(Error::Dimension { expected: self.shape.obs_dim, got: obs.len() });
        }
        Ok(())
    }

    fn check_state(&self, state: &[LayerState<T>]) -> Result<()> {
        if state.len() != self.shape.layers {
            return Err(Error::Dimension { expected: self.shape.layers, got: state.len() });
        }
        for l in state {
            if l.h.len() != self.shape.width || l.c.len() != self.shape.width {
                return Err(Error::Dimension { expected: self.shape.width, got: l.h.len().max(l.c.len()) });
            }
        }
        Ok(())
    }

    fn stack_step(&self, stack: &StackSlots, x: &[T], state: &mut [LayerState<T>], mut cache: Option<&mut StepCache<T>>) -> Vec<T> {
        let h = self.shape.width;
        let p = &self.params;
        let mut input = x.to_vec();
        for (li, (l, st)) in stack.layers.iter().zip(state.iter_mut()).enumerate() {
            let cols = l.input + h;
            let mut xh = input;
            xh.extend_from_slice(&st.h);
            let mut gates = vec![T::zero(); 4 * h];
            for (r, g) in gates.iter_mut().enumerate() {
                let row = &p[l.w + r * cols..l.w + (r + 1) * cols];
                let mut z = p[l.b + r];
                for (&w, &v) in row.iter().zip(&xh) {
                    z += w * v;
                }
                *g = if (2 * h..3 * h).contains(&r) { z.tanh() } else { sigmoid(z) };
            }
            let c_prev = std::mem::take(&mut st.c);
            let mut c = vec![T::zero(); h];
            let mut tanh_c = vec![T::zero(); h];
            for k in 0..h {
                c[k] = gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k];
                tanh_c[k] = c[k].tanh();
                st.h[k] = gates[3 * h + k] * tanh_c[k];
            }
            st.c = c;
            input = st.h.clone();
            if let Some(cache) = cache.as_deref_mut() {
                cache.layers[li] = LayerCache { xh, gates, c_prev, tanh_c };
            }
        }
        let mut out = vec![T::zero(); stack.out];
        for (o, v) in out.iter_mut().enumerate() {
            let row = &p[stack.head_w + o * h..stack.head_w + (o + 1) * h];
            *v = p[stack.head_b + o] + row.iter().zip(&input).map(|(&w, &x)| w * x).sum::<T>();
        }
        out
    }

    /// Mean joint setpoints and the advanced actor state.
    pub fn actor_forward(&self, obs: &[T], hidden: &[LayerState<T>]) -> Result<(Vec<T>, Vec<LayerState<T>>)> {
        self.check_obs(obs)?;
        self.check_state(hidden)?;
        let mut next = hidden.to_vec();
        let mean = self.stack_step(&self.layout.actor, obs, &mut next, None);
        Ok((mean, next))
    }

    /// Value estimate and the advanced critic state.
    pub fn critic_forward(&self, obs: &[T], hidden: &[LayerState<T>]) -> Result<(T, Vec<LayerState<T>>)> {
        self.check_obs(obs)?;
        self.check_state(hidden)?;
        let mut next = hidden.to_vec();
        let v = self.stack_step(&self.layout.critic, obs, &mut next, None);
        Ok((v[0], next))
    }

    /// Actor and critic together, advancing `hidden` in place.
    pub fn step(&self, obs: &[T], hidden: &mut HiddenState<T>) -> Result<(Vec<T>, T)> {
        self.check_obs(obs)?;
        self.check_state(&hidden.actor)?;
        self.check_state(&hidden.critic)?;
        let mean = self.stack_step(&self.layout.actor, obs, &mut hidden.actor, None);
        let v = self.stack_step(&self.layout.critic, obs, &mut hidden.critic, None);
        Ok((mean, v[0]))
    }

    /// Runs both networks over an episode from zero state, keeping activations.
    pub fn forward_sequence(&self, obs: &[Vec<T>]) -> Result<SequenceTrace<T>> {
        let mut hidden = self.initial_state();
        let empty = || StepCache { layers: vec![LayerCache { xh: Vec::new(), gates: Vec::new(), c_prev: Vec::new(), tanh_c: Vec::new() }; self.shape.layers] };
        let mut trace = SequenceTrace { means: Vec::with_capacity(obs.len()), values: Vec::with_capacity(obs.len()), actor: Vec::with_capacity(obs.len()), critic: Vec::with_capacity(obs.len()) };
        for o in obs {
            self.check_obs(o)?;
            let mut ca = empty();
            let mut cc = empty();
            trace.means.push(self.stack_step(&self.layout.actor, o, &mut hidden.actor, Some(&mut ca)));
            trace.values.push(self.stack_step(&self.layout.critic, o, &mut hidden.critic, Some(&mut cc))[0]);
            trace.actor.push(ca);
            trace.critic.push(cc);
        }
        Ok(trace)
    }

    fn stack_backward(&self, stack: &StackSlots, caches: &[StepCache<T>], d_out: &[Vec<T>], grad: &mut [T]) {
        let h = self.shape.width;
        let p = &self.params;
        let n_layers = stack.layers.len();
        let mut dh_next = vec![vec![T::zero(); h]; n_layers];
        let mut dc_next = vec![vec![T::zero(); h]; n_layers];
        let mut dz = vec![T::zero(); 4 * h];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let top = &cache.layers[n_layers - 1];
            let mut dh_above = vec![T::zero(); h];
            for (o, &d) in d_out[t].iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                grad[stack.head_b + o] += d;
                for k in 0..h {
                    let h_top = top.gates[3 * h + k] * top.tanh_c[k];
                    grad[stack.head_w + o * h + k] += d * h_top;
                    dh_above[k] += d * p[stack.head_w + o * h + k];
                }
            }
            for li in (0..n_layers).rev() {
                let l = &stack.layers[li];
                let lc = &cache.layers[li];
                let cols = l.input + h;
                let g = &lc.gates;
                for k in 0..h {
                    let dh = dh_above[k] + dh_next[li][k];
                    let (i, f, c, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = lc.tanh_c[k];
                    let dcell = dc_next[li][k] + dh * o * (T::one() - tc * tc);
                    dz[k] = dcell * c * i * (T::one() - i);
                    dz[h + k] = dcell * lc.c_prev[k] * f * (T::one() - f);
                    dz[2 * h + k] = dcell * i * (T::one() - c * c);
                    dz[3 * h + k] = dh * tc * o * (T::one() - o);
                    dc_next[li][k] = dcell * f;
                }
                let mut dxh = vec![T::zero(); cols];
                for (r, &d) in dz.iter().enumerate() {
                    grad[l.b + r] += d;
                    let row = l.w + r * cols;
                    for c in 0..cols {
                        grad[row + c] += d * lc.xh[c];
                        dxh[c] += d * p[row + c];
                    }
                }
                dh_next[li].copy_from_slice(&dxh[l.input..]);
                dh_above = dxh[..l.input].to_vec();
            }
        }
    }

    /// Accumulates into `grad` the gradient of
    /// `Σ_t d_mean[t] · mean_t + d_value[t] · V_t` (chain-rule seeds per step).
    pub fn backward(&self, trace: &SequenceTrace<T>, d_mean: &[Vec<T>], d_value: &[T], grad: &mut [T]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: grad.len() });
        }
        if d_mean.len() != trace.actor.len() || d_value.len() != trace.critic.len() {
            return Err(Error::Dimension { expected: trace.actor.len(), got: d_mean.len().min(d_value.len()) });
        }
        self.stack_backward(&self.layout.actor, &trace.actor, d_mean, grad);
        let dv: Vec<Vec<T>> = d_value.iter().map(|&d| vec![d]).collect();
        self.stack_backward(&self.layout.critic, &trace.critic, &dv, grad);
        Ok(())
    }

    /// `d log π(a) / d mean` and the accumulated `d log π(a) / d log_std`, scaled by `w`.
    pub fn logp_seeds(&self, mean: &[T], action: &[T], w: T, d_mean: &mut [T], grad: &mut [T]) {
        let ls = self.layout.log_std;
        for k in 0..self.shape.act_dim {
            let sigma = self.params[ls + k].exp();
            let z = (action[k] - mean[k]) / sigma;
            d_mean[k] = w * z / sigma;
            grad[ls + k] += w * (z * z - T::one());
        }
    }

    /// Adds `w * d(Σ log_std)/dθ` (the entropy gradient up to a constant).
    pub fn add_log_std_grad(&self, w: T, grad: &mut [T]) {
        let ls = self.layout.log_std;
        for g in &mut grad[ls..ls + self.shape.act_dim] {
            *g += w;
        }
    }

    pub fn log_prob(&self, mean: &[T], action: &[T]) -> T {
        gaussian_log_prob(mean, self.log_std(), action)
    }

    /// Exact gradient of `Σ_t logp_weight·log π(a_t) + value_weight·½(V_t − target)²`
    /// with hidden state carried from zero through the whole episode.
    pub fn bptt_gradients(&self, episode: &[BpttStep<T>]) -> Result<Vec<T>> {
        if episode.is_empty() {
            return Err(Error::InvalidConfig("bptt_gradients needs a nonempty episode".into()));
        }
        let obs: Vec<Vec<T>> = episode.iter().map(|s| s.obs.clone()).collect();
        let trace = self.forward_sequence(&obs)?;
        let mut grad = vec![T::zero(); self.params.len()];
        let mut d_mean = vec![vec![T::zero(); self.shape.act_dim]; episode.len()];
        let mut d_value = vec![T::zero(); episode.len()];
        for (t, s) in episode.iter().enumerate() {
            if s.action.len() != self.shape.act_dim {
                return Err(Error::Dimension { expected: self.shape.act_dim, got: s.action.len() });
            }
            self.logp_seeds(&trace.means[t], &s.action, s.logp_weight, &mut d_mean[t], &mut grad);
            d_value[t] = s.value_weight * (trace.values[t] - s.value_target);
        }
        self.backward(&trace, &d_mean, &d_value, &mut grad)?;
        Ok(grad)
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> RecurrentActorCritic<U> {
        RecurrentActorCritic { shape: self.shape, layout: self.layout.clone(), params: self.params.iter().map(|v| U::of(v.to_f64_lossy())).collect() }
    }

    /// Checkpoint bytes:
    ///
    /// ```text
    /// offset  size  field
    /// 0       4     magic "LGCK"
    /// 4       4     format version (u32 LE, currently 1)
    /// 8       16    obs_dim, act_dim, width, layers (u32 LE each)
    /// 24      8     rng seed (u64 LE)
    /// 32      8     parameter count n (u64 LE)
    /// 40      8n    parameters (f64 LE)
    /// ```
    pub fn to_bytes(&self, seed: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for d in [self.shape.obs_dim, self.shape.act_dim, self.shape.width, self.shape.layers] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&seed.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
        }
        out
    }

    /// Parses checkpoint bytes; returns the network and its stored seed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 40 {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let shape = NetShape { obs_dim: u32_at(8) as usize, act_dim: u32_at(12) as usize, width: u32_at(16) as usize, layers: u32_at(20) as usize };
        shape.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let seed = u64_at(24);
        let n = u64_at(32) as usize;
        if n != shape.param_count() {
            return Err(Error::Checkpoint(format!("parameter count {n} does not match shape ({})", shape.param_count())));
        }
        if bytes.len() != 40 + 8 * n {
            return Err(bad("parameter block length mismatch"));
        }
        let params = bytes[40..].chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap()))).collect();
        let mut net = Self::zeros(shape)?;
        net.params = params;
        Ok((net, seed))
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes(seed)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint that must match `expected`.
    pub fn load_compatible(path: &Path, expected: &NetShape) -> Result<Self> {
        let (net, _) = Self::load(path)?;
        if net.shape != *expected {
            return Err(Error::ShapeMismatch(format!("checkpoint vs configured: {}", net.shape.diff(expected))));
        }
        Ok(net)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Diagonal Gaussian log density.
pub fn gaussian_log_prob<T: Real>(mean: &[T], log_std: &[T], x: &[T]) -> T {
    let half_ln_tau = T::of(0.5 * (std::f64::consts::TAU).ln());
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((&m, &ls), &v)| {
            let z = (v - m) / ls.exp();
            -T::of(0.5) * z * z - ls - half_ln_tau
        })
        .sum()
}

/// Draws `mean + exp(log_std) * ε` and returns it with its exact log density.
pub fn sample_action<T: Real>(mean: &[T], log_std: &[T], rng: &mut impl rand::Rng) -> (Vec<T>, T) {
    let action: Vec<T> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let e: f64 = StandardNormal.sample(rng);
            m + ls.exp() * T::of(e)
        })
        .collect();
    let logp = gaussian_log_prob(mean, log_std, &action);
    (action, logp)
}

/// Random orthogonal `n x n` matrix (Gram-Schmidt on a Gaussian matrix), row-major.
fn orthogonal(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..n {
        for j in 0..i {
            let d: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
            for k in 0..n {
                m[i * n + k] -= d * m[j * n + k];
            }
        }
        let norm = (0..n).map(|k| m[i * n + k] * m[i * n + k]).sum::<f64>().sqrt().max(1e-12);
        for k in 0..n {
            m[i * n + k] /= norm;
        }
    }
    m
}

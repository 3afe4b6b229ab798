//! Beam-selection policies over per-agent vehicle positions: the
//! equivariant message-passing network and its baselines.
//!
//! A batch holds `B` global states; row `b·A + a` belongs to agent `a` of
//! state `b`. Every variant returns per-row beam logits and values.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::env::{Env, EnvState};
use crate::equivariant::{EquivariantBasis, EquivariantLayer};
use crate::error::{Error, Result};
use crate::io::Array;
use crate::group::Representation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Equivariant,
    NonEquivariant,
    NoComm,
    Centralized,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Equivariant, PolicyKind::NonEquivariant, PolicyKind::NoComm, PolicyKind::Centralized];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Equivariant => "equivariant",
            PolicyKind::NonEquivariant => "non_equivariant",
            PolicyKind::NoComm => "no_comm",
            PolicyKind::Centralized => "centralized",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy kind '{s}'")))
    }
}

/// Widths count copies of the regular representation (4 neurons each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub k_max: usize,
    pub enc_hidden: usize,
    pub x_channels: usize,
    pub msg_channels: usize,
    pub value_hidden: usize,
    pub rounds: usize,
    /// Positions and edges are divided by this many metres.
    pub pos_scale: f64,
    pub residual: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { k_max: 4, enc_hidden: 16, x_channels: 8, msg_channels: 16, value_hidden: 16, rounds: 2, pos_scale: 20.0, residual: false }
    }
}

#[derive(Debug, Clone)]
pub enum LayerKind {
    Equivariant(Arc<EquivariantBasis>),
    Dense { inp: usize, out: usize },
}

/// One affine layer acting on `[x; 1]`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    pub params: Vec<f64>,
}

impl Layer {
    pub fn equivariant<R: Rng>(in_rep: &Representation, out_rep: &Representation, rng: &mut R) -> Self {
        let l = EquivariantLayer::new(in_rep, out_rep, rng);
        Layer { kind: LayerKind::Equivariant(l.basis), params: l.coeffs }
    }

    pub fn dense<R: Rng>(inp: usize, out: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / (inp + 1) as f64).sqrt()).unwrap();
        let mut p = vec![0.0; out * (inp + 1)];
        for o in 0..out {
            for i in 0..inp {
                p[o * (inp + 1) + i] = normal.sample(rng);
            }
        }
        Layer { kind: LayerKind::Dense { inp, out }, params: p }
    }

    pub fn in_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Equivariant(b) => b.in_dim() - 1,
            LayerKind::Dense { inp, .. } => *inp,
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Equivariant(b) => b.out_dim(),
            LayerKind::Dense { out, .. } => *out,
        }
    }

    pub fn param_shape(&self) -> (usize, usize) {
        match &self.kind {
            LayerKind::Equivariant(b) => (1, b.rank()),
            LayerKind::Dense { inp, out } => (*out, inp + 1),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Var {
        let (r, c) = self.param_shape();
        tape.param(Tensor::new(r, c, self.params.clone()))
    }

    pub fn apply(&self, tape: &mut Tape, p: Var, x: Var) -> Var {
        let w = match &self.kind {
            LayerKind::Equivariant(b) => tape.equiv_weight(p, b.clone()),
            LayerKind::Dense { .. } => p,
        };
        tape.linear(x, w)
    }

    /// Weight including the bias column, `out × (in + 1)`.
    pub fn weight(&self) -> DMatrix<f64> {
        match &self.kind {
            LayerKind::Equivariant(b) => DMatrix::from_row_slice(b.out_dim(), b.in_dim(), &b.compose(&self.params)),
            LayerKind::Dense { inp, out } => DMatrix::from_row_slice(*out, inp + 1, &self.params),
        }
    }
}

/// Rows of slot features, `K_max` slots of (x, y, present) per agent.
#[derive(Debug, Clone)]
pub struct PolicyBatch {
    pub states: usize,
    pub n_agents: usize,
    pub slots: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyOutput {
    /// `(B·A) × M` beam logits.
    pub logits: Var,
    /// `(B·A) × 1`
    pub values: Var,
}

#[derive(Debug, Clone)]
enum Arch {
    Gnn { enc: Vec<usize>, msg: usize, upd: usize, pi: usize, v1: usize, v2: usize },
    Central { trunk: Vec<usize>, heads: Vec<usize>, v: usize },
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub cfg: PolicyConfig,
    pub n_agents: usize,
    pub n_beams: usize,
    pub codebook: Representation,
    /// Incoming edges per receiver: (sender, scaled e_{sender,receiver}).
    pub edges: Vec<Vec<(usize, [f64; 2])>>,
    pub layers: Vec<Layer>,
    arch: Arch,
}

pub const SLOT_DIM: usize = 3;
pub const POLICY_HEAD_INIT_SCALE: f64 = 0.01;

/// Slot features of one agent: positions sorted by radius, then angle,
/// truncated or zero-padded to `k_max`.
pub fn slot_features(local: &[[f64; 2]], k_max: usize, scale: f64) -> Vec<f64> {
    let mut pts: Vec<[f64; 2]> = local.to_vec();
    pts.sort_by(|a, b| {
        let (ra, rb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
        ra.total_cmp(&rb).then(a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])))
    });
    let mut out = vec![0.0; k_max * SLOT_DIM];
    for (k, p) in pts.iter().take(k_max).enumerate() {
        out[k * SLOT_DIM] = p[0] / scale;
        out[k * SLOT_DIM + 1] = p[1] / scale;
        out[k * SLOT_DIM + 2] = 1.0;
    }
    out
}

impl Policy {
    fn slot_rep() -> Representation {
        Representation::direct_sum(&[&Representation::rotation(4), &Representation::trivial(4)])
    }

    fn reg(c: usize) -> Representation {
        Representation::repeat(&Representation::regular(4), c)
    }

    pub fn new<R: Rng>(kind: PolicyKind, cfg: &PolicyConfig, env: &Env, rng: &mut R) -> Result<Self> {
        Self::with_codebook(kind, cfg, env, env.codebook_rep().clone(), rng)
    }

    pub fn with_codebook<R: Rng>(kind: PolicyKind, cfg: &PolicyConfig, env: &Env, codebook: Representation, rng: &mut R) -> Result<Self> {
        if cfg.k_max == 0 || cfg.x_channels == 0 || cfg.enc_hidden == 0 || cfg.msg_channels == 0 || cfg.value_hidden == 0 {
            return Err(Error::Config("policy widths and k_max must be positive".into()));
        }
        if cfg.pos_scale <= 0.0 {
            return Err(Error::Config("pos_scale must be positive".into()));
        }
        let n_agents = crate::env::N_AGENTS;
        let edges = (0..n_agents)
            .map(|a| env.edges_to(a).into_iter().map(|(s, e)| (s, [e[0] / cfg.pos_scale, e[1] / cfg.pos_scale])).collect())
            .collect();
        let mut p = Policy {
            kind,
            cfg: cfg.clone(),
            n_agents,
            n_beams: codebook.dim(),
            codebook,
            edges,
            layers: Vec::new(),
            arch: Arch::Central { trunk: vec![], heads: vec![], v: 0 },
        };
        match kind {
            PolicyKind::Equivariant | PolicyKind::NoComm => {
                let mut c = cfg.clone();
                if kind == PolicyKind::NoComm {
                    c.rounds = 0;
                    p.cfg.rounds = 0;
                }
                p.build_equivariant(&c, rng);
            }
            PolicyKind::NonEquivariant => {
                let target = Policy::with_codebook(PolicyKind::Equivariant, cfg, env, p.codebook.clone(), rng)?.n_params();
                let w = p.matched_width(target, |p, w| p.dense_gnn_params(cfg, w));
                p.build_dense(cfg, w, rng);
            }
            PolicyKind::Centralized => {
                let target = Policy::with_codebook(PolicyKind::Equivariant, cfg, env, p.codebook.clone(), rng)?.n_params();
                let w = p.matched_width(target, |p, w| p.central_params(cfg, w));
                p.build_central(cfg, w, rng);
            }
        }
        // near-uniform initial actions
        for l in p.policy_heads() {
            p.layers[l].params.iter_mut().for_each(|w| *w *= POLICY_HEAD_INIT_SCALE);
        }
        Ok(p)
    }

    fn policy_heads(&self) -> Vec<usize> {
        match &self.arch {
            Arch::Gnn { pi, .. } => vec![*pi],
            Arch::Central { heads, .. } => heads.clone(),
        }
    }

    fn build_equivariant<R: Rng>(&mut self, c: &PolicyConfig, rng: &mut R) {
        let input = Representation::repeat(&Self::slot_rep(), c.k_max);
        let h = Self::reg(c.enc_hidden);
        let x = Self::reg(c.x_channels);
        let m = Self::reg(c.msg_channels);
        let rot = Representation::rotation(4);
        let mut layers = vec![Layer::equivariant(&input, &h, rng), Layer::equivariant(&h, &x, rng)];
        layers.push(Layer::equivariant(&Representation::direct_sum(&[&x, &rot]), &m, rng));
        layers.push(Layer::equivariant(&Representation::direct_sum(&[&x, &m]), &x, rng));
        layers.push(Layer::equivariant(&x, &self.codebook, rng));
        layers.push(Layer::equivariant(&x, &Self::reg(c.value_hidden), rng));
        layers.push(Layer::equivariant(&Self::reg(c.value_hidden), &Representation::trivial(4), rng));
        self.layers = layers;
        self.arch = Arch::Gnn { enc: vec![0, 1], msg: 2, upd: 3, pi: 4, v1: 5, v2: 6 };
    }

    fn dense_dims(c: &PolicyConfig, w: f64) -> [usize; 4] {
        let s = |ch: usize| ((4 * ch) as f64 * w).round().max(1.0) as usize;
        [s(c.enc_hidden), s(c.x_channels), s(c.msg_channels), s(c.value_hidden)]
    }

    fn dense_gnn_params(&self, c: &PolicyConfig, w: f64) -> usize {
        let [h, x, m, v] = Self::dense_dims(c, w);
        let i = c.k_max * SLOT_DIM;
        let l = |a: usize, b: usize| b * (a + 1);
        l(i, h) + l(h, x) + l(x + 2, m) + l(x + m, x) + l(x, self.n_beams) + l(x, v) + l(v, 1)
    }

    fn build_dense<R: Rng>(&mut self, c: &PolicyConfig, w: f64, rng: &mut R) {
        let [h, x, m, v] = Self::dense_dims(c, w);
        let i = c.k_max * SLOT_DIM;
        self.layers = vec![
            Layer::dense(i, h, rng),
            Layer::dense(h, x, rng),
            Layer::dense(x + 2, m, rng),
            Layer::dense(x + m, x, rng),
            Layer::dense(x, self.n_beams, rng),
            Layer::dense(x, v, rng),
            Layer::dense(v, 1, rng),
        ];
        self.arch = Arch::Gnn { enc: vec![0, 1], msg: 2, upd: 3, pi: 4, v1: 5, v2: 6 };
    }

    fn central_dims(c: &PolicyConfig, w: f64) -> [usize; 2] {
        let s = |ch: usize| ((4 * ch) as f64 * w).round().max(1.0) as usize;
        [s(c.enc_hidden), s(c.x_channels)]
    }

    fn central_params(&self, c: &PolicyConfig, w: f64) -> usize {
        let [h, x] = Self::central_dims(c, w);
        let i = self.n_agents * c.k_max * SLOT_DIM;
        let l = |a: usize, b: usize| b * (a + 1);
        l(i, h) + l(h, x) + self.n_agents * l(x, self.n_beams) + l(x, 1)
    }

    fn build_central<R: Rng>(&mut self, c: &PolicyConfig, w: f64, rng: &mut R) {
        let [h, x] = Self::central_dims(c, w);
        let i = self.n_agents * c.k_max * SLOT_DIM;
        let mut layers = vec![Layer::dense(i, h, rng), Layer::dense(h, x, rng)];
        let heads: Vec<usize> = (0..self.n_agents).map(|k| 2 + k).collect();
        for _ in 0..self.n_agents {
            layers.push(Layer::dense(x, self.n_beams, rng));
        }
        layers.push(Layer::dense(x, 1, rng));
        self.layers = layers;
        self.arch = Arch::Central { trunk: vec![0, 1], v: 2 + self.n_agents, heads };
    }

    /// Width multiplier whose parameter count is closest to `target`.
    fn matched_width(&self, target: usize, count: impl Fn(&Self, f64) -> usize) -> f64 {
        let mut best = (f64::INFINITY, 1.0);
        for k in 1..=400 {
            let w = k as f64 / 100.0;
            let d = (count(self, w) as f64 - target as f64).abs();
            if d < best.0 {
                best = (d, w);
            }
        }
        best.1
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.params.len()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().map(|l| &mut l.params).collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.params.len();
            l.params.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }

    pub fn param_arrays(&self) -> Vec<Array> {
        self.layers.iter().map(|l| Array::vector(l.params.clone())).collect()
    }

    pub fn load_param_arrays(&mut self, arrays: &[Array]) -> Result<()> {
        if arrays.len() != self.layers.len() {
            return Err(Error::Format(format!("checkpoint has {} layers, policy has {}", arrays.len(), self.layers.len())));
        }
        for (i, (l, a)) in self.layers.iter_mut().zip(arrays).enumerate() {
            if l.params.len() != a.data.len() {
                return Err(Error::Format(format!("layer {i}: checkpoint has {} values, policy needs {}", a.data.len(), l.params.len())));
            }
            l.params.copy_from_slice(&a.data);
        }
        Ok(())
    }

    pub fn is_equivariant(&self) -> bool {
        matches!(self.kind, PolicyKind::Equivariant | PolicyKind::NoComm)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.layers.iter().map(|l| l.bind(tape)).collect()
    }

    pub fn bind_constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.layers
            .iter()
            .map(|l| {
                let (r, c) = l.param_shape();
                tape.constant(Tensor::new(r, c, l.params.clone()))
            })
            .collect()
    }

    /// Slot features for a batch of per-agent local position lists.
    pub fn batch(&self, local: &[Vec<Vec<[f64; 2]>>]) -> Result<PolicyBatch> {
        let a = self.n_agents;
        let w = self.cfg.k_max * SLOT_DIM;
        let mut data = Vec::with_capacity(local.len() * a * w);
        for s in local {
            if s.len() != a {
                return Err(Error::Invalid(format!("state has {} agents, policy expects {a}", s.len())));
            }
            for agent in s {
                data.extend(slot_features(agent, self.cfg.k_max, self.cfg.pos_scale));
            }
        }
        Ok(PolicyBatch { states: local.len(), n_agents: a, slots: Tensor::new(local.len() * a, w, data) })
    }

    /// Batch built from ground-truth vehicle positions.
    pub fn batch_from_env(&self, env: &Env, states: &[EnvState]) -> Result<PolicyBatch> {
        let local: Vec<_> = states.iter().map(|s| env.local_states(s)).collect();
        self.batch(&local)
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], batch: &PolicyBatch) -> PolicyOutput {
        assert_eq!(batch.n_agents, self.n_agents);
        match &self.arch {
            Arch::Gnn { enc, msg, upd, pi, v1, v2 } => {
                let mut x = tape.constant(batch.slots.clone());
                for &l in enc {
                    let y = self.layers[l].apply(tape, params[l], x);
                    x = tape.relu(y);
                }
                let rounds = if self.kind == PolicyKind::NoComm { 0 } else { self.cfg.rounds };
                if rounds > 0 {
                    let a = self.n_agents;
                    let (mut send, mut recv, mut e) = (Vec::new(), Vec::new(), Vec::new());
                    for b in 0..batch.states {
                        for r in 0..a {
                            for &(s, ed) in &self.edges[r] {
                                send.push(b * a + s);
                                recv.push(b * a + r);
                                e.extend(ed);
                            }
                        }
                    }
                    let ev = tape.constant(Tensor::new(send.len(), 2, e));
                    for _ in 0..rounds {
                        let xs = tape.gather_rows(x, send.clone());
                        let inp = tape.concat_cols(&[xs, ev]);
                        let m = self.layers[*msg].apply(tape, params[*msg], inp);
                        let m = tape.relu(m);
                        let agg = tape.scatter_add_rows(m, recv.clone(), batch.states * a);
                        let cat = tape.concat_cols(&[x, agg]);
                        let u = self.layers[*upd].apply(tape, params[*upd], cat);
                        let u = tape.relu(u);
                        x = if self.cfg.residual { tape.add(x, u) } else { u };
                    }
                }
                let logits = self.layers[*pi].apply(tape, params[*pi], x);
                let h = self.layers[*v1].apply(tape, params[*v1], x);
                let h = tape.relu(h);
                let values = self.layers[*v2].apply(tape, params[*v2], h);
                PolicyOutput { logits, values }
            }
            Arch::Central { trunk, heads, v } => {
                let a = self.n_agents;
                let w = self.cfg.k_max * SLOT_DIM;
                // one row per global state: agents' slots side by side
                let joint = Tensor::new(batch.states, a * w, batch.slots.data.clone());
                let mut x = tape.constant(joint);
                for &l in trunk {
                    let y = self.layers[l].apply(tape, params[l], x);
                    x = tape.relu(y);
                }
                let mut logits: Option<Var> = None;
                for (k, &l) in heads.iter().enumerate() {
                    let hk = self.layers[l].apply(tape, params[l], x);
                    let placed = tape.scatter_add_rows(hk, (0..batch.states).map(|b| b * a + k).collect(), batch.states * a);
                    logits = Some(match logits {
                        None => placed,
                        Some(acc) => tape.add(acc, placed),
                    });
                }
                let v1 = self.layers[*v].apply(tape, params[*v], x);
                let values = tape.gather_rows(v1, (0..batch.states * a).map(|r| r / a).collect());
                PolicyOutput { logits: logits.unwrap(), values }
            }
        }
    }

    /// Action probabilities and values without gradients.
    pub fn evaluate(&self, batch: &PolicyBatch) -> (Tensor, Vec<f64>) {
        let mut tape = Tape::new();
        let params = self.bind_constants(&mut tape);
        let out = self.forward(&mut tape, &params, batch);
        let probs = tape.softmax_rows(out.logits);
        (tape.value(probs).clone(), tape.value(out.values).data.clone())
    }
}

/// Largest policy and value residuals of the global-rotation property:
/// agent `a+g` at `L_g s` acts like agent `a` at `s` with beams relabelled
/// by `K_g`, and has the same value.
pub fn rotation_residual(policy: &Policy, env: &Env, states: &[EnvState]) -> Result<(f64, f64)> {
    let base = policy.batch_from_env(env, states)?;
    let (p0, v0) = policy.evaluate(&base);
    let a = policy.n_agents;
    let (mut pr, mut vr): (f64, f64) = (0.0, 0.0);
    for g in 1..4 {
        let rotated: Vec<EnvState> = states.iter().map(|s| crate::env::apply_global_rotation(s, g)).collect();
        let (p1, v1) = policy.evaluate(&policy.batch_from_env(env, &rotated)?);
        for b in 0..states.len() {
            for ag in 0..a {
                let src = b * a + ag;
                let dst = b * a + (ag + g) % a;
                let moved = policy.codebook.apply(g, p0.row_slice(src));
                for (x, y) in moved.iter().zip(p1.row_slice(dst)) {
                    pr = pr.max((x - y).abs());
                }
                vr = vr.max((v0[src] - v1[dst]).abs());
            }
        }
    }
    Ok((pr, vr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Env {
        Env::new(EnvConfig { n_h: 4, oversample_h: 1, users_per_region: 2, subcarriers: 8, ..EnvConfig::default() }).unwrap()
    }

    fn small() -> PolicyConfig {
        PolicyConfig { enc_hidden: 4, x_channels: 3, msg_channels: 4, value_hidden: 3, ..PolicyConfig::default() }
    }

    #[test]
    fn equivariant_policy_commutes_with_rotations() {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states: Vec<EnvState> = (0..10).map(|_| env.reset(&mut rng)).collect();
        for rounds in [0, 1, 3] {
            let cfg = PolicyConfig { rounds, ..small() };
            let p = Policy::new(PolicyKind::Equivariant, &cfg, &env, &mut rng).unwrap();
            let (pr, vr) = rotation_residual(&p, &env, &states).unwrap();
            assert!(pr <= 1e-9 && vr <= 1e-9, "rounds {rounds}: {pr} {vr}");
        }
        let p = Policy::new(PolicyKind::NonEquivariant, &small(), &env, &mut rng).unwrap();
        assert!(rotation_residual(&p, &env, &states).unwrap().0 > 1e-6);
    }

    #[test]
    fn baselines_have_matched_parameter_counts() {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eq = Policy::new(PolicyKind::Equivariant, &small(), &env, &mut rng).unwrap();
        for kind in [PolicyKind::NonEquivariant, PolicyKind::Centralized] {
            let p = Policy::new(kind, &small(), &env, &mut rng).unwrap();
            let ratio = p.n_params() as f64 / eq.n_params() as f64;
            assert!((ratio - 1.0).abs() <= 0.1, "{kind:?}: {} vs {}", p.n_params(), eq.n_params());
        }
        let nc = Policy::new(PolicyKind::NoComm, &small(), &env, &mut rng).unwrap();
        assert_eq!(nc.cfg.rounds, 0);
    }

    #[test]
    fn zero_weights_give_uniform_actions_and_local_dependence_without_messages() {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = Policy::new(PolicyKind::Equivariant, &small(), &env, &mut rng).unwrap();
        let s = env.reset(&mut rng);
        let zero = vec![0.0; p.n_params()];
        p.set_flat_params(&zero);
        let (probs, _) = p.evaluate(&p.batch_from_env(&env, &[s.clone()]).unwrap());
        for v in &probs.data {
            assert!((v - 1.0 / 16.0).abs() < 1e-15);
        }
        let nc = Policy::new(PolicyKind::NoComm, &small(), &env, &mut rng).unwrap();
        let mut s2 = s.clone();
        s2.regions[1][0].along += 5.0;
        let (a, _) = nc.evaluate(&nc.batch_from_env(&env, &[s.clone()]).unwrap());
        let (b, _) = nc.evaluate(&nc.batch_from_env(&env, &[s2.clone()]).unwrap());
        assert_eq!(a.row_slice(0), b.row_slice(0));
        assert_ne!(a.row_slice(1), b.row_slice(1));
        let gnn = Policy::new(PolicyKind::Equivariant, &small(), &env, &mut rng).unwrap();
        let (a, _) = gnn.evaluate(&gnn.batch_from_env(&env, &[s]).unwrap());
        let (b, _) = gnn.evaluate(&gnn.batch_from_env(&env, &[s2]).unwrap());
        assert_ne!(a.row_slice(0), b.row_slice(0));
    }

    #[test]
    fn outputs_are_distributions_and_slots_are_canonical() {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in PolicyKind::ALL {
            let p = Policy::new(kind, &small(), &env, &mut rng).unwrap();
            let states: Vec<EnvState> = (0..3).map(|_| env.reset(&mut rng)).collect();
            let (probs, values) = p.evaluate(&p.batch_from_env(&env, &states).unwrap());
            assert_eq!(values.len(), 12);
            for r in 0..probs.rows {
                let row = probs.row_slice(r);
                assert!(row.iter().all(|v| *v >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let a = slot_features(&[[1.0, 2.0], [5.0, 0.0]], 3, 1.0);
        let b = slot_features(&[[5.0, 0.0], [1.0, 2.0]], 3, 1.0);
        assert_eq!(a, b);
        assert_eq!(&a[6..], &[0.0, 0.0, 0.0]);
    }
}

//! Browser bindings: a four-arm intersection with a randomly initialized
//! beam-selection policy, plus a symmetrizer playground.

use eqv2i::env::{apply_global_rotation, Env, EnvConfig, EnvState, N_AGENTS};
use eqv2i::equivariant::{constraint_rank, equivariance_residual, symmetrize};
use eqv2i::group::Representation;
use eqv2i::policy::{rotation_residual, Policy, PolicyConfig, PolicyKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn demo_env() -> Env {
    Env::new(EnvConfig { n_h: 4, oversample_h: 1, users_per_region: 2, subcarriers: 8, ..EnvConfig::default() }).expect("demo config is valid")
}

fn demo_policy(kind: PolicyKind, env: &Env, seed: u64) -> Policy {
    let cfg = PolicyConfig { enc_hidden: 4, x_channels: 2, msg_channels: 4, value_hidden: 4, ..PolicyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Policy::new(kind, &cfg, env, &mut rng).expect("demo policy builds");
    // untrained heads are nearly uniform; spread them so greedy beams differ
    let w: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    p.set_flat_params(&w);
    p
}

#[wasm_bindgen]
pub struct Scene {
    env: Env,
    state: EnvState,
    policy: Policy,
    seed: u64,
    turns: u32,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Scene {
        let env = demo_env();
        let state = env.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        let policy = demo_policy(PolicyKind::Equivariant, &env, seed);
        Scene { env, state, policy, seed, turns: 0 }
    }

    /// Draw fresh vehicles.
    pub fn resample(&mut self, seed: u64) {
        self.seed = seed;
        self.state = self.env.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        self.turns = 0;
    }

    /// Rotate every vehicle a quarter turn about the intersection centre.
    pub fn rotate(&mut self) {
        self.state = apply_global_rotation(&self.state, 1);
        self.turns = (self.turns + 1) % 4;
    }

    pub fn turns(&self) -> u32 {
        self.turns
    }

    /// Switch between the equivariant and the plain message-passing policy.
    pub fn set_equivariant(&mut self, on: bool) {
        let kind = if on { PolicyKind::Equivariant } else { PolicyKind::NonEquivariant };
        self.policy = demo_policy(kind, &self.env, self.seed);
    }

    pub fn is_equivariant(&self) -> bool {
        self.policy.is_equivariant()
    }

    /// Vehicle positions as x0, y0, x1, y1, ...
    pub fn vehicles(&self) -> Vec<f64> {
        self.env.positions(&self.state).into_iter().flatten().flatten().collect()
    }

    /// Arm served by each vehicle in `vehicles`.
    pub fn vehicle_arms(&self) -> Vec<u32> {
        self.state.regions.iter().enumerate().flat_map(|(a, r)| std::iter::repeat_n(a as u32, r.len())).collect()
    }

    pub fn rsus(&self) -> Vec<f64> {
        self.env.scene.rsus.iter().flatten().copied().collect()
    }

    pub fn arm_length(&self) -> f64 {
        self.env.arm_length()
    }

    pub fn n_beams(&self) -> u32 {
        self.env.n_beams() as u32
    }

    /// Most likely beam of every agent.
    pub fn greedy_beams(&self) -> Vec<u32> {
        greedy(&self.policy, &self.env, &self.state).into_iter().map(|b| b as u32).collect()
    }

    /// Sum rate of the greedy beams.
    pub fn greedy_reward(&self) -> f64 {
        self.env.reward(&self.state, &greedy(&self.policy, &self.env, &self.state)).map(|r| r.0).unwrap_or(f64::NAN)
    }

    /// Largest change of any action probability when the scene is rotated
    /// and the beams relabelled accordingly.
    pub fn rotation_residual(&self) -> f64 {
        rotation_residual(&self.policy, &self.env, std::slice::from_ref(&self.state)).map(|r| r.0).unwrap_or(f64::NAN)
    }
}

fn greedy(policy: &Policy, env: &Env, state: &EnvState) -> Vec<usize> {
    let batch = policy.batch_from_env(env, std::slice::from_ref(state)).expect("state fits the policy");
    let (probs, _) = policy.evaluate(&batch);
    (0..N_AGENTS)
        .map(|a| {
            let row = probs.row_slice(a);
            (0..row.len()).fold(0, |best, b| if row[b] > row[best] { b } else { best })
        })
        .collect()
}

/// Random layer from the planar rotation plus a bias input to `copies`
/// copies of the regular representation, before and after projection onto
/// the equivariant maps. Returns [residual before, residual after, rank of
/// the equivariant space, free parameters of the dense layer].
#[wasm_bindgen]
pub fn symmetrize_random(seed: u64, copies: u32) -> Vec<f64> {
    let inp = Representation::direct_sum(&[&Representation::rotation(4), &Representation::trivial(4)]);
    let out = Representation::repeat(&Representation::regular(4), copies.clamp(1, 8) as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(out.dim(), inp.dim(), |_, _| rng.random_range(-1.0..1.0));
    let s = symmetrize(&w, &inp, &out);
    vec![
        equivariance_residual(&w, &inp, &out),
        equivariance_residual(&s, &inp, &out),
        constraint_rank(&inp, &out) as f64,
        (out.dim() * inp.dim()) as f64,
    ]
}

/// Beam relabelling of a quarter turn in the demo codebook.
#[wasm_bindgen]
pub fn rotated_beam(beam: u32) -> u32 {
    let env = demo_env();
    let m = env.n_beams();
    let mut e = vec![0.0; m];
    e[beam as usize % m] = 1.0;
    env.codebook_rep().apply(1, &e).iter().position(|&v| v == 1.0).unwrap_or(0) as u32
}

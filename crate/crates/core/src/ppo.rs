//! Multi-agent PPO with GAE over the shared-weight policies, plus the
//! group-augmentation training baseline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape, Tensor};
use crate::env::{apply_global_rotation, rotate_joint_action, Env, EnvState};
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyBatch};

/// Entropy bonus source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySource {
    /// Entropy of the policy being optimized.
    Current,
    /// Entropy of the behaviour policy; contributes no gradient.
    Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    /// GAE weighting χ.
    pub gae_lambda: f64,
    /// Ratio clip κ.
    pub clip: f64,
    /// Entropy weight α.
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub entropy: EntropySource,
    pub normalize_advantages: bool,
    /// Rollout-update cycles.
    pub epochs: usize,
    pub update_epochs: usize,
    /// Global states per minibatch (each holds one row per agent).
    pub minibatch_states: usize,
    pub horizon: usize,
    pub n_envs: usize,
    /// 0 disables clipping.
    pub max_grad_norm: f64,
    /// Train on the C4-augmented rollout.
    pub augment: bool,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            gamma: 0.9,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            entropy: EntropySource::Current,
            normalize_advantages: true,
            epochs: 100,
            update_epochs: 4,
            minibatch_states: 64,
            horizon: 128,
            n_envs: 8,
            max_grad_norm: 0.5,
            augment: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::Config(format!("gamma and gae_lambda must lie in (0,1), got {} and {}", self.gamma, self.gae_lambda)));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip)));
        }
        if self.lr < 0.0 || self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err(Error::Config("lr, coefficients and max_grad_norm must be non-negative".into()));
        }
        if self.horizon == 0 || self.n_envs == 0 || self.minibatch_states == 0 || self.update_epochs == 0 {
            return Err(Error::Config("horizon, n_envs, minibatch_states and update_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Â_t = Σ_l (γχ)^l δ_{t+l}, δ_t = r_t + γ V_{t+1} − V_t.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, chi: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * chi * acc;
        adv[t] = acc;
    }
    adv
}

/// Discounted reward-to-go with a bootstrap value after the last step.
pub fn discounted_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// A multi-agent task the trainer can roll out.
pub trait MarlTask: Sync {
    type State: Clone + Send + Sync;
    fn reset(&self, rng: &mut ChaCha8Rng) -> Self::State;
    /// Next state and shared team reward.
    fn step(&self, state: &Self::State, actions: &[usize]) -> Result<(Self::State, f64)>;
    /// Per-agent positions relative to each agent's own RSU.
    fn local_states(&self, state: &Self::State) -> Vec<Vec<[f64; 2]>>;
    fn rotate(&self, state: &Self::State, g: usize) -> Self::State;
}

impl MarlTask for Env {
    type State = EnvState;

    fn reset(&self, rng: &mut ChaCha8Rng) -> EnvState {
        Env::reset(self, rng)
    }

    fn step(&self, state: &EnvState, actions: &[usize]) -> Result<(EnvState, f64)> {
        let r = Env::step(self, state, actions)?;
        Ok((r.next_state, r.reward))
    }

    fn local_states(&self, state: &EnvState) -> Vec<Vec<[f64; 2]>> {
        Env::local_states(self, state)
    }

    fn rotate(&self, state: &EnvState, g: usize) -> EnvState {
        apply_global_rotation(state, g)
    }
}

/// One fixed state; each agent earns 1 for picking its own best beam.
#[derive(Debug, Clone)]
pub struct BanditTask {
    pub local: Vec<Vec<[f64; 2]>>,
    pub best: Vec<usize>,
}

impl MarlTask for BanditTask {
    type State = ();

    fn reset(&self, _rng: &mut ChaCha8Rng) {}

    fn step(&self, _state: &(), actions: &[usize]) -> Result<((), f64)> {
        Ok(((), actions.iter().zip(&self.best).filter(|(a, b)| a == b).count() as f64))
    }

    fn local_states(&self, _state: &()) -> Vec<Vec<[f64; 2]>> {
        self.local.clone()
    }

    fn rotate(&self, _state: &(), _g: usize) {}
}

/// Collected experience; sample `i` is a global state, row `i·A + a` its
/// agent `a`.
#[derive(Debug, Clone)]
pub struct Rollout<S> {
    pub n_agents: usize,
    pub states: Vec<S>,
    pub local: Vec<Vec<Vec<[f64; 2]>>>,
    pub actions: Vec<usize>,
    pub logp_old: Vec<f64>,
    pub entropy_old: Vec<f64>,
    pub values: Vec<f64>,
    /// Team reward per sample.
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<S: Clone> Rollout<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Rollout<S> {
        let a = self.n_agents;
        let rows = |v: &Vec<f64>| idx.iter().flat_map(|&i| v[i * a..(i + 1) * a].iter().copied()).collect();
        Rollout {
            n_agents: a,
            states: idx.iter().map(|&i| self.states[i].clone()).collect(),
            local: idx.iter().map(|&i| self.local[i].clone()).collect(),
            actions: idx.iter().flat_map(|&i| self.actions[i * a..(i + 1) * a].iter().copied()).collect(),
            logp_old: rows(&self.logp_old),
            entropy_old: rows(&self.entropy_old),
            values: rows(&self.values),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            advantages: rows(&self.advantages),
            returns: rows(&self.returns),
        }
    }
}

fn row_logp_entropy(probs: &[f64], action: usize) -> (f64, f64) {
    let h = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    (probs[action].ln(), h)
}

/// Replicate every sample under each listed rotation: rotated state, agents
/// relabelled a → a+g, beams mapped by K_g, reward and advantages carried
/// along; behaviour log-probabilities are recomputed by `behavior` at the
/// rotated state.
pub fn augment_batch<T: MarlTask>(task: &T, behavior: &Policy, batch: &Rollout<T::State>, elements: &[usize]) -> Result<Rollout<T::State>> {
    let a = batch.n_agents;
    let mut out = Rollout {
        n_agents: a,
        states: Vec::new(),
        local: Vec::new(),
        actions: Vec::new(),
        logp_old: Vec::new(),
        entropy_old: Vec::new(),
        values: Vec::new(),
        rewards: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    for &g in elements {
        let states: Vec<T::State> = batch.states.iter().map(|s| task.rotate(s, g)).collect();
        let local: Vec<_> = states.iter().map(|s| task.local_states(s)).collect();
        let (probs, _) = behavior.evaluate(&behavior.batch(&local)?);
        for i in 0..batch.len() {
            let acts = rotate_joint_action(&batch.actions[i * a..(i + 1) * a], g, &behavior.codebook);
            let perm = |v: &[f64]| {
                let mut r = vec![0.0; a];
                for (k, x) in v.iter().enumerate() {
                    r[(k + g) % a] = *x;
                }
                r
            };
            for (k, &b) in acts.iter().enumerate() {
                let (lp, h) = row_logp_entropy(probs.row_slice(i * a + k), b);
                out.logp_old.push(lp);
                out.entropy_old.push(h);
            }
            out.actions.extend(acts);
            out.values.extend(perm(&batch.values[i * a..(i + 1) * a]));
            out.advantages.extend(perm(&batch.advantages[i * a..(i + 1) * a]));
            out.returns.extend(perm(&batch.returns[i * a..(i + 1) * a]));
            out.rewards.push(batch.rewards[i]);
        }
        out.states.extend(states);
        out.local.extend(local);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// Negative clipped surrogate, without the entropy bonus.
    pub surrogate: f64,
    pub entropy: f64,
    pub critic: f64,
    pub total: f64,
}

/// Weights of the loss terms optimized together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub actor: f64,
    pub critic: f64,
}

/// actor_w·(−surrogate − α·H) + critic_w·mean ½(V − R̂)², with gradients for
/// every policy layer. Advantages are used as given.
pub fn ppo_loss<S: Clone>(policy: &Policy, batch: &Rollout<S>, inputs: &PolicyBatch, cfg: &TrainConfig, w: LossWeights) -> Result<(LossParts, Vec<Vec<f64>>)> {
    let rows = batch.actions.len();
    if rows == 0 {
        return Err(Error::Invalid("empty PPO batch".into()));
    }
    let m = policy.n_beams;
    let mut tape = Tape::new();
    let params = policy.bind(&mut tape);
    let out = policy.forward(&mut tape, &params, inputs);
    let logp_all = tape.log_softmax_rows(out.logits);
    let mut onehot = vec![0.0; rows * m];
    for (r, &b) in batch.actions.iter().enumerate() {
        onehot[r * m + b] = 1.0;
    }
    let onehot = tape.constant(Tensor::new(rows, m, onehot));
    let picked = tape.mul(logp_all, onehot);
    let logp = tape.sum_axis1(picked);
    let old = tape.constant(Tensor::col(batch.logp_old.clone()));
    let diff = tape.sub(logp, old);
    let ratio = tape.exp(diff);
    if let Some(bad) = tape.value(ratio).data.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite { iteration: bad, detail: format!("probability ratio of row {bad} is {}", tape.value(ratio).data[bad]) });
    }
    let adv = tape.constant(Tensor::col(batch.advantages.clone()));
    let s1 = tape.mul(ratio, adv);
    let clipped = tape.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let s2 = tape.mul(clipped, adv);
    let sur = tape.min(s1, s2);
    let sur = tape.mean(sur);
    let surrogate = tape.scale(sur, -1.0);

    let entropy_var = match cfg.entropy {
        EntropySource::Current => {
            let p = tape.softmax_rows(out.logits);
            let plogp = tape.mul(p, logp_all);
            let s = tape.sum_axis1(plogp);
            let mean = tape.mean(s);
            tape.scale(mean, -1.0)
        }
        EntropySource::Behavior => {
            let h = batch.entropy_old.iter().sum::<f64>() / rows as f64;
            tape.constant(Tensor::scalar(h))
        }
    };
    let bonus = tape.scale(entropy_var, -cfg.entropy_coef);
    let actor = tape.add(surrogate, bonus);

    let ret = tape.constant(Tensor::col(batch.returns.clone()));
    let err = tape.sub(out.values, ret);
    let sq = tape.square(err);
    let mse = tape.mean(sq);
    let critic = tape.scale(mse, 0.5);

    let a_term = tape.scale(actor, w.actor);
    let c_term = tape.scale(critic, w.critic);
    let total = tape.add(a_term, c_term);
    let parts = LossParts {
        surrogate: tape.value(surrogate).item(),
        entropy: tape.value(entropy_var).item(),
        critic: tape.value(critic).item(),
        total: tape.value(total).item(),
    };
    if !parts.total.is_finite() {
        return Err(Error::NonFinite { iteration: 0, detail: format!("PPO loss {parts:?}") });
    }
    let grads = tape.backward(total)?;
    let g = params
        .iter()
        .zip(&policy.layers)
        .map(|(v, l)| grads.wrt(*v, l.param_shape()).data)
        .collect();
    Ok((parts, g))
}

/// Actor loss −mean min(ρÂ, clip(ρ)Â) − α·H and its gradient.
pub fn actor_loss<S: Clone>(policy: &Policy, batch: &Rollout<S>, cfg: &TrainConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    let inputs = policy.batch(&batch.local)?;
    let (p, g) = ppo_loss(policy, batch, &inputs, cfg, LossWeights { actor: 1.0, critic: 0.0 })?;
    Ok((p.total, g))
}

/// Critic loss mean ½(V − R̂)² and its gradient.
pub fn critic_loss<S: Clone>(policy: &Policy, batch: &Rollout<S>, cfg: &TrainConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    let inputs = policy.batch(&batch.local)?;
    let (p, g) = ppo_loss(policy, batch, &inputs, cfg, LossWeights { actor: 0.0, critic: 1.0 })?;
    Ok((p.total, g))
}

fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean team reward per step over the epoch's rollout.
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// Roll out `policy` for `horizon` steps in every environment, continuing
/// from `envs`.
pub fn collect<T: MarlTask>(task: &T, policy: &Policy, envs: &mut [T::State], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Rollout<T::State>> {
    let a = policy.n_agents;
    let n = envs.len();
    let mut ro = Rollout {
        n_agents: a,
        states: Vec::new(),
        local: Vec::new(),
        actions: Vec::new(),
        logp_old: Vec::new(),
        entropy_old: Vec::new(),
        values: Vec::new(),
        rewards: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    for _ in 0..cfg.horizon {
        let local: Vec<_> = envs.iter().map(|s| task.local_states(s)).collect();
        let (probs, values) = policy.evaluate(&policy.batch(&local)?);
        let mut joint = Vec::with_capacity(n);
        for e in 0..n {
            let mut acts = Vec::with_capacity(a);
            for k in 0..a {
                let row = probs.row_slice(e * a + k);
                let b = sample_categorical(row, rng);
                let (lp, h) = row_logp_entropy(row, b);
                ro.logp_old.push(lp);
                ro.entropy_old.push(h);
                acts.push(b);
            }
            ro.actions.extend(&acts);
            joint.push(acts);
        }
        let pairs: Vec<(&T::State, &Vec<usize>)> = envs.iter().zip(&joint).collect();
        let stepped = crate::par::map(&pairs, |(s, acts)| task.step(s, acts));
        ro.values.extend(values);
        ro.local.extend(local);
        for (e, r) in stepped.into_iter().enumerate() {
            let (next, reward) = r?;
            ro.states.push(std::mem::replace(&mut envs[e], next));
            ro.rewards.push(reward);
        }
    }
    // bootstrap from the states after the last step
    let local: Vec<_> = envs.iter().map(|s| task.local_states(s)).collect();
    let (_, boot) = policy.evaluate(&policy.batch(&local)?);
    let t_len = cfg.horizon;
    ro.advantages = vec![0.0; ro.values.len()];
    ro.returns = vec![0.0; ro.values.len()];
    for e in 0..n {
        let rewards: Vec<f64> = (0..t_len).map(|t| ro.rewards[t * n + e]).collect();
        for k in 0..a {
            let vals: Vec<f64> = (0..t_len).map(|t| ro.values[(t * n + e) * a + k]).collect();
            let adv = gae(&rewards, &vals, boot[e * a + k], cfg.gamma, cfg.gae_lambda);
            let ret = discounted_returns(&rewards, boot[e * a + k], cfg.gamma);
            for t in 0..t_len {
                ro.advantages[(t * n + e) * a + k] = adv[t];
                ro.returns[(t * n + e) * a + k] = ret[t];
            }
        }
    }
    Ok(ro)
}

fn clip_grads(grads: &mut [Vec<f64>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

/// Alternate rollouts and clipped-surrogate updates. `hook` sees every
/// epoch's statistics and the updated policy.
pub fn train<T: MarlTask>(
    task: &T,
    policy: &mut Policy,
    cfg: &TrainConfig,
    seed: u64,
    mut hook: impl FnMut(&EpochStats, &Policy),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut envs: Vec<T::State> = (0..cfg.n_envs).map(|_| task.reset(&mut rng)).collect();
    let mut adam = Adam::new(cfg.lr, &policy.param_sizes());
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut ro = collect(task, policy, &mut envs, cfg, &mut rng)?;
        let mean_reward = ro.rewards.iter().sum::<f64>() / ro.rewards.len() as f64;
        if cfg.augment {
            ro = augment_batch(task, policy, &ro, &[0, 1, 2, 3])?;
        }
        if cfg.normalize_advantages {
            normalize(&mut ro.advantages);
        }
        let mut order: Vec<usize> = (0..ro.len()).collect();
        let (mut sa, mut sc, mut se, mut count) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..cfg.update_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_states) {
                let mb = ro.select(chunk);
                let inputs = policy.batch(&mb.local)?;
                let (parts, mut grads) = ppo_loss(policy, &mb, &inputs, cfg, LossWeights { actor: 1.0, critic: cfg.value_coef })
                    .map_err(|e| Error::NonFinite { iteration: epoch, detail: format!("PPO update diverged: {e}") })?;
                clip_grads(&mut grads, cfg.max_grad_norm);
                adam.step(&mut policy.params_mut(), &grads);
                sa += parts.surrogate - cfg.entropy_coef * parts.entropy;
                sc += parts.critic;
                se += parts.entropy;
                count += 1.0;
            }
        }
        let stats = EpochStats { epoch, mean_reward, actor_loss: sa / count, critic_loss: sc / count, entropy: se / count };
        hook(&stats, policy);
        curve.push(stats);
    }
    Ok(curve)
}

/// Mean team reward of a policy over fresh rollouts.
pub fn evaluate_policy<T: MarlTask>(task: &T, policy: &Policy, n_envs: usize, horizon: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut envs: Vec<T::State> = (0..n_envs).map(|_| task.reset(&mut rng)).collect();
    let cfg = TrainConfig { horizon, n_envs, ..TrainConfig::default() };
    let ro = collect(task, policy, &mut envs, &cfg, &mut rng)?;
    Ok(ro.rewards.iter().sum::<f64>() / ro.rewards.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (boot, g, chi) = (0.3, 0.9, 0.95);
        let adv = gae(&r, &v, boot, g, chi);
        let next = |t: usize| if t + 1 < 5 { v[t + 1] } else { boot };
        for t in 0..5 {
            let mut want = 0.0;
            for l in 0..5 - t {
                want += (g * chi).powi(l as i32) * (r[t + l] + g * next(t + l) - v[t + l]);
            }
            assert!((adv[t] - want).abs() <= 1e-12);
        }
        assert_eq!(gae(&[1.0], &[0.5], 2.0, 0.9, 0.95), vec![1.0 + 0.9 * 2.0 - 0.5]);
        let td = gae(&r, &v, boot, g, 0.0);
        for t in 0..5 {
            assert!((td[t] - (r[t] + g * next(t) - v[t])).abs() <= 1e-15);
        }
    }

    #[test]
    fn returns_with_zero_discount_are_rewards() {
        assert_eq!(discounted_returns(&[1.0, 2.0], 5.0, 0.0), vec![1.0, 2.0]);
        assert_eq!(discounted_returns(&[1.0], 2.0, 0.5), vec![2.0]);
    }
}

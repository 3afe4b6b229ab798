//! Tabular MDPs with a C4 action on states and actions, controlled symmetry
//! violations, exact value iteration and the Q-asymmetry bound.
//!
//! States are `(q, l)` with quadrant `q ∈ 0..4` and local index `l`; the
//! group rotates the quadrant. Actions are relabelled by `b ↦ b + g mod 4`.
//! Rewards live in `[0, 1 − γ]`, so values live in `[0, 1]` and the total
//! variation distance bounds the expectation gap of any value function.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const N_QUADRANTS: usize = 4;

#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// `reward[s * A + b]`
    pub reward: Vec<f64>,
    /// `trans[(s * A + b) * S + s']`
    pub trans: Vec<f64>,
    /// `state_map[g][s] = L_g s`
    pub state_map: Vec<Vec<usize>>,
    /// `action_map[g][s][b] = K_g^s b`
    pub action_map: Vec<Vec<Vec<usize>>>,
}

impl TabularMdp {
    pub fn r(&self, s: usize, b: usize) -> f64 {
        self.reward[s * self.n_actions + b]
    }

    pub fn row(&self, s: usize, b: usize) -> &[f64] {
        let k = (s * self.n_actions + b) * self.n_states;
        &self.trans[k..k + self.n_states]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Invalid(format!("gamma {} outside (0,1)", self.gamma)));
        }
        for s in 0..self.n_states {
            for b in 0..self.n_actions {
                let row = self.row(s, b);
                let tot: f64 = row.iter().sum();
                if (tot - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::Invalid(format!("transition row ({s},{b}) sums to {tot}")));
                }
            }
        }
        Ok(())
    }

    fn group_order(&self) -> usize {
        self.state_map.len()
    }

    /// Measured reward and transition asymmetry (max TV distance of paired
    /// rows, the second pulled back through L_g).
    pub fn measured_asymmetry(&self) -> (f64, f64) {
        let mut er: f64 = 0.0;
        let mut et: f64 = 0.0;
        for g in 0..self.group_order() {
            let l = &self.state_map[g];
            for s in 0..self.n_states {
                for b in 0..self.n_actions {
                    let (gs, gb) = (l[s], self.action_map[g][s][b]);
                    er = er.max((self.r(s, b) - self.r(gs, gb)).abs());
                    let r1 = self.row(s, b);
                    let r2 = self.row(gs, gb);
                    let tv: f64 = 0.5 * (0..self.n_states).map(|sp| (r1[sp] - r2[l[sp]]).abs()).sum::<f64>();
                    et = et.max(tv);
                }
            }
        }
        (er, et)
    }
}

fn quadrant_maps(n_local: usize, n_actions: usize) -> (Vec<Vec<usize>>, Vec<Vec<Vec<usize>>>) {
    let n = N_QUADRANTS * n_local;
    let state_map = (0..N_QUADRANTS)
        .map(|g| (0..n).map(|s| ((s / n_local + g) % N_QUADRANTS) * n_local + s % n_local).collect())
        .collect();
    let action_map = (0..N_QUADRANTS)
        .map(|g| (0..n).map(|_| (0..n_actions).map(|b| (b + g) % n_actions).collect()).collect())
        .collect();
    (state_map, action_map)
}

/// Gridlet with `n_local` local states per quadrant and 4 actions, built
/// exactly symmetric, then perturbed to the requested asymmetries.
pub fn build_perturbed_mdp(
    n_local: usize,
    eps_r: f64,
    eps_t: f64,
    gamma: f64,
    seed: u64,
) -> Result<TabularMdp> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma {gamma} outside (0,1)")));
    }
    if eps_r < 0.0 || eps_t < 0.0 {
        return Err(Error::Config("asymmetry targets must be nonnegative".into()));
    }
    let r_max = 1.0 - gamma;
    if eps_r > r_max + 1e-12 {
        return Err(Error::Config(format!("eps_r {eps_r} exceeds the reward range {r_max}")));
    }
    if eps_t > 1.0 {
        return Err(Error::Config(format!("eps_t {eps_t} exceeds the maximal total variation 1")));
    }
    if n_local < 2 {
        return Err(Error::Config("need at least two local states".into()));
    }
    let a = N_QUADRANTS;
    let n = N_QUADRANTS * n_local;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (state_map, action_map) = quadrant_maps(n_local, a);

    // canonical data indexed by (local state, action relative to quadrant)
    let base_r: Vec<f64> = (0..n_local * a).map(|_| rng.random_range(0.0..=(r_max - eps_r).max(0.0))).collect();
    // canonical next-state rows over (relative quadrant, local); B gets at least eps_t
    let mut base_t = Vec::with_capacity(n_local * a);
    let mut moves = Vec::with_capacity(n_local * a);
    for _ in 0..n_local * a {
        let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let bsrc = rng.random_range(0..n);
        let mut adst = rng.random_range(0..n - 1);
        if adst >= bsrc {
            adst += 1;
        }
        w[bsrc] += 1e-3;
        let tot: f64 = w.iter().sum();
        let row: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(k, &x)| (1.0 - eps_t) * x / tot + if k == bsrc { eps_t } else { 0.0 })
            .collect();
        base_t.push(row);
        moves.push((bsrc, adst));
    }

    // per pair-orbit offsets in [0, eps]; orbit 0 pins the extremes exactly
    let n_orbits = n_local * a;
    let mut r_off = vec![vec![0.0; N_QUADRANTS]; n_orbits];
    let mut t_off = vec![vec![0.0; N_QUADRANTS]; n_orbits];
    for o in 0..n_orbits {
        for q in 0..N_QUADRANTS {
            r_off[o][q] = rng.random_range(0.0..=1.0) * eps_r;
            t_off[o][q] = rng.random_range(0.0..=1.0) * eps_t;
        }
    }
    r_off[0][0] = 0.0;
    r_off[0][1] = eps_r;
    t_off[0][0] = 0.0;
    t_off[0][1] = eps_t;

    let mut reward = vec![0.0; n * a];
    let mut trans = vec![0.0; n * a * n];
    for q in 0..N_QUADRANTS {
        for l in 0..n_local {
            let s = q * n_local + l;
            for b in 0..a {
                let rel = (b + a - q) % a;
                let o = l * a + rel;
                reward[s * a + b] = base_r[o] + r_off[o][q];
                let (bsrc, adst) = moves[o];
                let mut row = base_t[o].clone();
                row[bsrc] -= t_off[o][q];
                row[adst] += t_off[o][q];
                // canonical coordinates are relative to quadrant q: rotate by q
                for (rel_sp, p) in row.iter().enumerate() {
                    let sp = state_map[q][rel_sp];
                    trans[(s * a + b) * n + sp] = *p;
                }
            }
        }
    }
    // exact normalization against rounding
    for k in 0..n * a {
        let row = &mut trans[k * n..(k + 1) * n];
        for p in row.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let tot: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= tot);
    }
    let mdp = TabularMdp { n_states: n, n_actions: a, gamma, reward, trans, state_map, action_map };
    mdp.validate()?;
    Ok(mdp)
}

/// An absorbing orbit whose reward is asymmetric in one quadrant only.
/// Q* asymmetry equals `eps_r / (1 − γ)`, i.e. the whole bound.
pub fn build_worst_case(eps_r: f64, gamma: f64) -> Result<TabularMdp> {
    if eps_r < 0.0 || eps_r > 1.0 - gamma + 1e-12 {
        return Err(Error::Config(format!("eps_r {eps_r} outside [0, 1 − γ]")));
    }
    let (n_local, a) = (2, 4);
    let n = N_QUADRANTS * n_local;
    let (state_map, action_map) = quadrant_maps(n_local, a);
    let mut reward = vec![0.0; n * a];
    let mut trans = vec![0.0; n * a * n];
    for s in 0..n {
        for b in 0..a {
            trans[(s * a + b) * n + s] = 1.0;
        }
    }
    for b in 0..a {
        reward[b] = eps_r;
    }
    let mdp = TabularMdp { n_states: n, n_actions: a, gamma, reward, trans, state_map, action_map };
    mdp.validate()?;
    Ok(mdp)
}

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub q: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change per iteration.
    pub deltas: Vec<f64>,
}

/// Q_m = R + γ T V_{m−1}, V_m = max_b Q_m, from Q_{−1} = 0.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> ValueIterationResult {
    assert!(tol > 0.0, "tolerance must be positive");
    let (n, a) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; n * a];
    let mut v = vec![0.0; n];
    let mut deltas = Vec::new();
    loop {
        let mut next = vec![0.0; n * a];
        for s in 0..n {
            for b in 0..a {
                let ev: f64 = mdp.row(s, b).iter().zip(&v).map(|(p, x)| p * x).sum();
                next[s * a + b] = mdp.r(s, b) + mdp.gamma * ev;
            }
        }
        let delta = next.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        q = next;
        for s in 0..n {
            v[s] = q[s * a..(s + 1) * a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        deltas.push(delta);
        if delta < tol || deltas.len() > 1_000_000 {
            break;
        }
    }
    ValueIterationResult { q, iterations: deltas.len(), deltas }
}

/// Q of the greedy policy of `q` by a direct linear solve.
pub fn policy_evaluation_q(mdp: &TabularMdp, q: &[f64]) -> Vec<f64> {
    let (n, a) = (mdp.n_states, mdp.n_actions);
    let pi: Vec<usize> = (0..n)
        .map(|s| {
            let row = &q[s * a..(s + 1) * a];
            (0..a).fold(0, |best, b| if row[b] > row[best] { b } else { best })
        })
        .collect();
    let mut m = DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for s in 0..n {
        rhs[s] = mdp.r(s, pi[s]);
        for (sp, p) in mdp.row(s, pi[s]).iter().enumerate() {
            m[(s, sp)] -= mdp.gamma * p;
        }
    }
    let v = m.lu().solve(&rhs).expect("I − γP is nonsingular for γ < 1");
    let mut out = vec![0.0; n * a];
    for s in 0..n {
        for b in 0..a {
            out[s * a + b] = mdp.r(s, b) + mdp.gamma * mdp.row(s, b).iter().zip(v.iter()).map(|(p, x)| p * x).sum::<f64>();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

pub const BOUND_SLACK: f64 = 1e-8;

pub fn q_asymmetry(q: &[f64], mdp: &TabularMdp) -> f64 {
    let a = mdp.n_actions;
    let mut worst: f64 = 0.0;
    for g in 0..mdp.group_order() {
        for s in 0..mdp.n_states {
            for b in 0..a {
                let (gs, gb) = (mdp.state_map[g][s], mdp.action_map[g][s][b]);
                worst = worst.max((q[s * a + b] - q[gs * a + gb]).abs());
            }
        }
    }
    worst
}

pub fn check_bound(q: &[f64], mdp: &TabularMdp, eps_r: f64, eps_t: f64) -> BoundCheck {
    let measured = q_asymmetry(q, mdp);
    let bound = (eps_r + mdp.gamma * eps_t) / (1.0 - mdp.gamma);
    BoundCheck { measured, bound, holds: measured <= bound + BOUND_SLACK }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub seed: u64,
    pub eps_r: f64,
    pub eps_t: f64,
    pub gamma: f64,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Run the bound check over `seeds` instances for each setting.
pub fn sweep(settings: &[(f64, f64, f64)], seeds: u64, n_local: usize, base_seed: u64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &(eps_r, eps_t, gamma) in settings {
        for k in 0..seeds {
            let seed = base_seed.wrapping_add(k);
            let mdp = build_perturbed_mdp(n_local, eps_r, eps_t, gamma, seed)?;
            let vi = value_iteration(&mdp, 1e-12);
            let (mr, mt) = mdp.measured_asymmetry();
            let c = check_bound(&vi.q, &mdp, mr, mt);
            rows.push(SweepRow { seed, eps_r: mr, eps_t: mt, gamma, measured: c.measured, bound: c.bound, holds: c.holds });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_hit_exactly() {
        for (er, et) in [(0.0, 0.0), (0.05, 0.0), (0.0, 0.2), (0.03, 0.15)] {
            let mdp = build_perturbed_mdp(3, er, et, 0.8, 11).unwrap();
            let (mr, mt) = mdp.measured_asymmetry();
            assert!((mr - er).abs() <= 1e-9, "{mr} vs {er}");
            assert!((mt - et).abs() <= 1e-9, "{mt} vs {et}");
        }
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        assert!(build_perturbed_mdp(3, 0.2, 0.0, 0.9, 1).is_err());
        assert!(build_perturbed_mdp(3, 0.0, 1.5, 0.9, 1).is_err());
        assert!(build_perturbed_mdp(3, -0.1, 0.0, 0.9, 1).is_err());
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp {
            n_states: 1,
            n_actions: 1,
            gamma: 0.9,
            reward: vec![0.5],
            trans: vec![1.0],
            state_map: vec![vec![0]],
            action_map: vec![vec![vec![0]]],
        };
        let vi = value_iteration(&mdp, 1e-13);
        assert!((vi.q[0] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn tiny_gamma_returns_reward() {
        let mdp = build_perturbed_mdp(2, 0.0, 0.0, 1e-300, 3).unwrap();
        let vi = value_iteration(&mdp, 1e-12);
        for (q, r) in vi.q.iter().zip(&mdp.reward) {
            assert!((q - r).abs() < 1e-12);
        }
    }

    #[test]
    fn value_iteration_matches_linear_solve_and_contracts() {
        let mdp = build_perturbed_mdp(2, 0.02, 0.1, 0.85, 5).unwrap();
        assert_eq!(mdp.n_states, 8);
        let vi = value_iteration(&mdp, 1e-13);
        let pe = policy_evaluation_q(&mdp, &vi.q);
        let err = vi.q.iter().zip(&pe).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
        for w in vi.deltas.windows(2).skip(1) {
            if w[0] > 1e-14 {
                assert!(w[1] <= mdp.gamma * w[0] * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn exact_symmetry_gives_symmetric_q() {
        let mdp = build_perturbed_mdp(3, 0.0, 0.0, 0.9, 8).unwrap();
        let vi = value_iteration(&mdp, 1e-12);
        assert!(q_asymmetry(&vi.q, &mdp) <= 1e-8);
    }

    #[test]
    fn bound_examples() {
        for (er, et, g, b) in [(0.1, 0.0, 0.9, 1.0), (0.0, 0.2, 0.5, 0.2)] {
            for seed in 0..50 {
                let mdp = build_perturbed_mdp(3, er, et, g, seed).unwrap();
                let vi = value_iteration(&mdp, 1e-12);
                let c = check_bound(&vi.q, &mdp, er, et);
                assert!((c.bound - b).abs() < 1e-12);
                assert!(c.holds, "{c:?}");
            }
        }
    }

    #[test]
    fn worst_case_attains_the_bound() {
        let mdp = build_worst_case(0.05, 0.9).unwrap();
        let vi = value_iteration(&mdp, 1e-13);
        let (er, et) = mdp.measured_asymmetry();
        assert_eq!(et, 0.0);
        let c = check_bound(&vi.q, &mdp, er, et);
        assert!(c.holds);
        assert!(c.measured >= 0.5 * c.bound);
        assert!((c.measured - c.bound).abs() < 1e-9);
    }
}

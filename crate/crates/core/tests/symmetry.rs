use eqv2i::env::{apply_global_rotation, rotate_joint_action, Env, EnvConfig, N_AGENTS};
use eqv2i::io::{read_array, write_array, Array};
use eqv2i::policy::{rotation_residual, Policy, PolicyConfig, PolicyKind};
use eqv2i::theory::{build_perturbed_mdp, check_bound, value_iteration};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> Env {
    Env::new(EnvConfig { n_h: 4, oversample_h: 1, users_per_region: 2, subcarriers: 8, ..EnvConfig::default() }).unwrap()
}

fn small() -> PolicyConfig {
    PolicyConfig { enc_hidden: 2, x_channels: 2, msg_channels: 2, value_hidden: 2, ..PolicyConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reward_and_dynamics_respect_every_rotation(seed in any::<u64>(), g in 0usize..4) {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = env.reset(&mut rng);
        let b: Vec<usize> = (0..N_AGENTS).map(|_| rng.random_range(0..env.n_beams())).collect();
        let r0 = env.reward(&s, &b).unwrap().0;
        let r1 = env.reward(&apply_global_rotation(&s, g), &rotate_joint_action(&b, g, env.codebook_rep())).unwrap().0;
        prop_assert!((r0 - r1).abs() <= 1e-9);
        prop_assert_eq!(env.advance(&apply_global_rotation(&s, g)), apply_global_rotation(&env.advance(&s), g));
    }

    #[test]
    fn every_vehicle_is_observed_somehow(seed in any::<u64>(), p_csi in 0.0f64..1.0, p_im in 0.0f64..1.0) {
        let env = Env::new(EnvConfig { p_csi, p_im, ..toy().cfg }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = env.reset(&mut rng);
        let k = env.cfg.users_per_region;
        for o in env.observe(&s, &mut rng).unwrap() {
            let mut seen = vec![false; N_AGENTS * k];
            o.detections.iter().for_each(|d| seen[d.truth_for_evaluation()] = true);
            o.channels.iter().for_each(|c| seen[c.truth_for_evaluation()] = true);
            prop_assert!((0..k).all(|i| seen[o.agent * k + i]));
        }
    }

    #[test]
    fn trajectories_replay_bit_for_bit(seed in any::<u64>(), actions in prop::collection::vec(0usize..16, 4 * 5)) {
        let env = toy();
        let run = || {
            let mut s = env.reset(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut out = Vec::new();
            for step in actions.chunks(N_AGENTS) {
                let r = env.step(&s, step).unwrap();
                out.push(r.reward.to_bits());
                s = r.next_state;
            }
            (out, s)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn equivariant_policies_commute_with_rotations(seed in any::<u64>(), rounds in 0usize..=3, scale in 0.1f64..1.5) {
        let env = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = Policy::new(PolicyKind::Equivariant, &PolicyConfig { rounds, ..small() }, &env, &mut rng).unwrap();
        // arbitrary weights: the property is architectural
        let p: Vec<f64> = (0..policy.n_params()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        policy.set_flat_params(&p);
        let states: Vec<_> = (0..8).map(|_| env.reset(&mut rng)).collect();
        let (pi, v) = rotation_residual(&policy, &env, &states).unwrap();
        prop_assert!(pi <= 1e-6 && v <= 1e-6, "{} {}", pi, v);
        let (probs, _) = policy.evaluate(&policy.batch_from_env(&env, &states).unwrap());
        for r in 0..probs.rows {
            let row = probs.row_slice(r);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn q_star_asymmetry_stays_under_the_bound(seed in any::<u64>(), frac in 0.0f64..=1.0, et in 0.0f64..0.3, gamma in 0.3f64..0.95) {
        // rewards live in [0, 1 − γ]
        let mdp = build_perturbed_mdp(3, frac * (1.0 - gamma), et, gamma, seed).unwrap();
        let vi = value_iteration(&mdp, 1e-12);
        let (mr, mt) = mdp.measured_asymmetry();
        prop_assert!(check_bound(&vi.q, &mdp, mr, mt).holds);
    }

    #[test]
    fn matrix_files_round_trip(dims in prop::collection::vec(0usize..4, 0..4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let a = Array::new(dims.clone(), (0..n).map(|_| rng.random_range(-1e6..1e6)).collect()).unwrap();
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        prop_assert_eq!(buf.len(), 8 + 8 * dims.len() + 8 * n);
        prop_assert_eq!(read_array(&mut &buf[..]).unwrap(), Some(a));
    }
}

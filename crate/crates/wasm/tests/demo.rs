use eqv2i_wasm::{rotated_beam, symmetrize_random, Scene};

#[test]
fn equivariant_policy_follows_the_rotation() {
    let mut s = Scene::new(4);
    let r0 = s.greedy_reward();
    let b0 = s.greedy_beams();
    s.rotate();
    assert_eq!(s.turns(), 1);
    let b1 = s.greedy_beams();
    // agent a+1 now sees what agent a saw
    for a in 0..4 {
        assert_eq!(b1[(a + 1) % 4], rotated_beam(b0[a]));
    }
    assert!((s.greedy_reward() - r0).abs() <= 1e-9);
    assert!(s.rotation_residual() <= 1e-9);
}

#[test]
fn plain_policy_breaks_the_symmetry() {
    let mut s = Scene::new(4);
    s.set_equivariant(false);
    assert!(!s.is_equivariant());
    assert!(s.rotation_residual() > 1e-3);
}

#[test]
fn four_turns_restore_the_scene() {
    let mut s = Scene::new(9);
    let v = s.vehicles();
    assert_eq!(v.len(), 2 * s.vehicle_arms().len());
    for _ in 0..4 {
        s.rotate();
    }
    assert_eq!(s.turns(), 0);
    assert_eq!(s.vehicles(), v);
    let n = s.n_beams();
    assert!((0..n).all(|b| (0..4).fold(b, |x, _| rotated_beam(x)) == b));
}

#[test]
fn projection_removes_the_residual() {
    let r = symmetrize_random(1, 2);
    assert!(r[0] > 1e-2);
    assert!(r[1] <= 1e-12);
    assert!(r[2] > 0.0 && r[2] < r[3]);
}

mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{capstan, oracle_max_load, random_hand, relative_error, Regime};
use perchsim::tendon_hand::{
    belt_gain, max_load_double, max_load_single, moment_arms, HandParams, DOUBLE_CONTACT_ALPHA,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn oracle_capstan_matches_exponential() {
    assert_relative_eq!(
        capstan(1.0, 0.3, 2.0 * PI),
        (0.6 * PI).exp(),
        max_relative = 1e-12
    );
    assert_eq!(capstan(5.0, 0.0, 7.0), 5.0);
}

#[test]
fn oracle_reproduces_default_capacity() {
    let p = HandParams::default();
    assert_relative_eq!(
        oracle_max_load(&p, 0.0, Regime::Single),
        22.82631057406938,
        max_relative = 1e-9
    );
    assert_relative_eq!(
        oracle_max_load(&p, DOUBLE_CONTACT_ALPHA, Regime::Double),
        10.862752467043212,
        max_relative = 1e-9
    );
}

#[test]
fn closed_forms_agree_with_oracle_on_random_hands() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = random_hand(&mut rng);
        let alpha = rng.random_range(0.0..=DOUBLE_CONTACT_ALPHA);
        let single = max_load_single(&p, alpha).unwrap();
        let double = max_load_double(&p, alpha).unwrap();
        assert!(relative_error(single, oracle_max_load(&p, alpha, Regime::Single)) <= 1e-6);
        assert!(relative_error(double, oracle_max_load(&p, alpha, Regime::Double)) <= 1e-6);
    }
}

#[test]
fn frictionless_capacity_has_no_belt_gain() {
    let p = HandParams {
        friction_mu: 0.0,
        ..HandParams::default()
    };
    let scale = p.stall_torque * p.joint_pulley_radius * p.gear_ratio
        / (p.gravity * p.link_length * p.gear_pulley_radius);
    assert_relative_eq!(
        max_load_single(&p, 0.0).unwrap(),
        scale,
        max_relative = 1e-14
    );
    assert_relative_eq!(belt_gain(2.0, 0.0, 9.0).unwrap(), 2.0);
}

#[test]
fn leading_term_of_first_moment_arm_is_close_at_small_angles() {
    // The closed form keeps only l/(2cos2α) of l1; the dropped terms are
    // bounded and vanish at α = 0.
    let p = HandParams::default();
    let (l1, l2) = moment_arms(&p, 0.0).unwrap();
    assert_relative_eq!(l1, p.link_length / 2.0, epsilon = 1e-15);
    assert_relative_eq!(l2, l1, epsilon = 1e-15);
    let (l1, _) = moment_arms(&p, DOUBLE_CONTACT_ALPHA).unwrap();
    assert_relative_eq!(l1, 0.08546914943989278, max_relative = 1e-12);
    let lead = p.link_length / (2.0 * (2.0 * DOUBLE_CONTACT_ALPHA).cos());
    assert!((l1 - lead).abs() / l1 < 0.5);
}

#[test]
fn out_of_range_angles_are_rejected() {
    let p = HandParams::default();
    assert!(max_load_single(&p, DOUBLE_CONTACT_ALPHA + 1e-3).is_err());
    assert!(max_load_single(&p, -1e-3).is_err());
    assert!(max_load_double(&p, PI / 4.0).is_err());
}

use std::f64::consts::PI;

use nalgebra::{SMatrix, Vector3, Vector6};
use perchsim::flight_controller::detachment_target;
use perchsim::rotor_allocation::{RotorGeometry, WrenchAllocator, WrenchVector};
use perchsim::tendon_hand::{
    belt_gain, build_coupling_jacobians, closure_path, contact_force_double, contact_force_single,
    coupling_residual, max_load_single, HandParams, DOUBLE_CONTACT_ALPHA,
};
use proptest::prelude::*;

fn wrench() -> impl Strategy<Value = WrenchVector> {
    proptest::array::uniform6(-40.0..40.0f64)
        .prop_map(|w| WrenchVector::from_vector(&Vector6::from_column_slice(&w)))
}

fn hand_direction(theta: f64, yaw: f64) -> Vector3<f64> {
    Vector3::new(
        theta.cos() * yaw.cos(),
        theta.cos() * yaw.sin(),
        -theta.sin(),
    )
}

proptest! {
    #[test]
    fn coupling_vanishes_exactly_on_equal_joints(t in -2.0..2.0f64, d in proptest::array::uniform3(-1.0..1.0f64)) {
        let routing = build_coupling_jacobians(&HandParams::default(), 3, 0.01).unwrap();
        prop_assert!(coupling_residual(&routing, &[t, t, t]) <= 1e-12);
        let theta = [t + d[0], t + d[1], t + d[2]];
        let spread = theta.iter().cloned().fold(f64::MIN, f64::max) - theta.iter().cloned().fold(f64::MAX, f64::min);
        if spread > 1e-6 {
            prop_assert!(coupling_residual(&routing, &theta) > 1e-9);
        }
    }

    #[test]
    fn belt_gain_composes(t in 0.0..100.0f64, mu in 0.0..1.0f64, a in 0.0..7.0f64, b in 0.0..7.0f64) {
        let two_step = belt_gain(belt_gain(t, mu, a).unwrap(), mu, b).unwrap();
        let one_step = belt_gain(t, mu, a + b).unwrap();
        prop_assert!((two_step - one_step).abs() <= 1e-12 * one_step.max(1.0));
        prop_assert!(one_step >= t);
    }

    #[test]
    fn double_contact_halves_the_force(m in 0.0..50.0f64, alpha in 0.0..0.78f64) {
        let f1 = contact_force_single(m, alpha, 9.81).unwrap();
        let f2 = contact_force_double(m, alpha, 9.81).unwrap();
        prop_assert!((f2 - f1 / 2.0).abs() <= 1e-14 * f1.max(1.0));
    }

    #[test]
    fn single_contact_capacity_falls_with_opening(mu in 0.0..0.9f64, a in 0.0..DOUBLE_CONTACT_ALPHA, b in 0.0..DOUBLE_CONTACT_ALPHA) {
        let p = HandParams { friction_mu: mu, ..HandParams::default() };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(max_load_single(&p, lo).unwrap() >= max_load_single(&p, hi).unwrap());
    }

    #[test]
    fn allocation_round_trips(w in wrench()) {
        let alloc = WrenchAllocator::new(RotorGeometry::default()).unwrap();
        let lambda = alloc.min_norm_thrusts(&w);
        let back = alloc.thrust_map() * lambda;
        prop_assert!((back - w.to_vector()).norm() <= 1e-9 * (1.0 + w.to_vector().norm()));
    }

    #[test]
    fn allocation_is_linear(a in wrench(), b in wrench(), k in -3.0..3.0f64) {
        let alloc = WrenchAllocator::new(RotorGeometry::default()).unwrap();
        let sum = WrenchVector::from_vector(&(a.to_vector() * k + b.to_vector()));
        let lhs = alloc.min_norm_thrusts(&sum);
        let rhs = alloc.min_norm_thrusts(&a) * k + alloc.min_norm_thrusts(&b);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn allocation_is_minimum_norm(w in wrench(), z in proptest::array::uniform8(-5.0..5.0f64)) {
        let alloc = WrenchAllocator::new(RotorGeometry::default()).unwrap();
        let lambda = alloc.min_norm_thrusts(&w);
        // project z onto the null space of the thrust map
        let z = SMatrix::<f64, 8, 1>::from_column_slice(&z);
        let m = alloc.thrust_map();
        let pinv = m.pseudo_inverse(1e-12).unwrap();
        let null = z - pinv * (m * z);
        prop_assert!((m * null).norm() <= 1e-9 * (1.0 + null.norm()));
        prop_assert!((lambda + null).norm() >= lambda.norm() - 1e-9);
    }

    #[test]
    fn detachment_target_keeps_the_hand_point(
        r in proptest::array::uniform3(-10.0..10.0f64),
        theta in -PI..PI,
        theta_des in -PI..PI,
        yaw in -PI..PI,
        l in 0.05..1.0f64,
    ) {
        let r_b = Vector3::from(r);
        let r_des = detachment_target(&r_b, theta, theta_des, yaw, l);
        let before = r_b + hand_direction(theta, yaw) * l;
        let after = r_des + hand_direction(theta_des, yaw) * l;
        prop_assert!((before - after).amax() <= 1e-12 * (1.0 + r_b.amax()));
    }

    #[test]
    fn closure_conserves_travel_and_freezes_fingers(
        angles in proptest::array::uniform3(0.0..1.7f64),
        free in proptest::array::uniform3(proptest::bool::weighted(0.2)),
        travel_frac in 0.0..1.2f64,
    ) {
        let p = HandParams { tilt_limit: 0.05, ..HandParams::default() };
        let profile: [Option<f64>; 3] = std::array::from_fn(|i| if free[i] { None } else { Some(angles[i]) });
        let full = 3.0 * p.joint_pulley_radius * p.joint_limit;
        let path = closure_path(&p, profile, travel_frac * full).unwrap();
        for (plate, _) in &path {
            let sum: f64 = plate.vertex_displacements.iter().sum();
            prop_assert!((sum - 3.0 * plate.actuator_displacement).abs() <= 1e-12);
        }
        for pair in path.windows(2) {
            let (a, frozen_a) = pair[0];
            let (b, _) = pair[1];
            for ((&da, &db), frozen) in a.vertex_displacements.iter().zip(&b.vertex_displacements).zip(frozen_a) {
                if frozen {
                    prop_assert_eq!(da, db);
                }
                prop_assert!(db >= da);
            }
        }
    }
}

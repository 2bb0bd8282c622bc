//! Torque-balance reference for the grip-capacity formulas.
//!
//! Built from first principles and kept apart from the closed forms: the
//! capstan gain is integrated numerically, contact forces come from a vertical
//! force balance with explicit direction vectors, and the hanging mass is
//! found by bisection on the joint-1 torque balance of one finger.

#![allow(dead_code)]

use perchsim::tendon_hand::HandParams;

/// Tension out of a wrapped tendon, integrating `dT/dφ = μ·T` with RK4.
pub fn capstan(t_in: f64, mu: f64, wrap: f64) -> f64 {
    let n = 4000;
    let h = wrap / n as f64;
    let f = |t: f64| mu * t;
    let mut t = t_in;
    for _ in 0..n {
        let k1 = f(t);
        let k2 = f(t + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h * k2);
        let k4 = f(t + h * k3);
        t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t
}

/// Contact force per contact when `contacts` equal forces, each tilted `2α`
/// from vertical, carry weight `w`.
fn contact_force(w: f64, alpha: f64, contacts: usize) -> f64 {
    let normal = [(2.0 * alpha).sin(), (2.0 * alpha).cos()];
    let vertical = [0.0, 1.0];
    let lift_per_unit = normal[0] * vertical[0] + normal[1] * vertical[1];
    w / (contacts as f64 * lift_per_unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Single,
    Double,
}

/// Tendon tension one finger must hold for hanging mass `m` (N).
fn required_tension(p: &HandParams, m: f64, alpha: f64, regime: Regime) -> f64 {
    let l = p.link_length;
    let c2 = (2.0 * alpha).cos();
    let w = m * p.gravity;
    let moment = match regime {
        Regime::Single => {
            // one contact per finger, on the middle of the leading link
            let f = contact_force(w, alpha, 3);
            let arm1 = l / (2.0 * c2);
            let arm2 = arm1 + l * alpha.sin();
            f * arm1 + f * arm2
        }
        Regime::Double => {
            // two contacts per finger
            let f = contact_force(w, alpha, 6);
            let arm1 = l / (2.0 * c2) + l * alpha.sin();
            let arm2 = l * alpha.sin() + 2.5 * l;
            f * arm1 + f * arm2
        }
    };
    moment / p.joint_pulley_radius
}

/// Tendon tension one finger receives from the stalled actuator (N).
fn available_tension(p: &HandParams, wrap: f64) -> f64 {
    let at_plate = p.gear_ratio * p.stall_torque / p.gear_pulley_radius;
    capstan(at_plate / 3.0, p.friction_mu, wrap)
}

/// Largest hanging mass whose torque balance the available tension meets.
pub fn oracle_max_load(p: &HandParams, alpha: f64, regime: Regime) -> f64 {
    let wrap = match regime {
        Regime::Single => p.wrap_base + alpha,
        Regime::Double => p.wrap_base + std::f64::consts::PI / 10.0,
    };
    let available = available_tension(p, wrap);
    let excess = |m: f64| required_tension(p, m, alpha, regime) - available;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while excess(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A random but physically sensible hand.
pub fn random_hand<R: rand::Rng>(rng: &mut R) -> HandParams {
    HandParams {
        joint_pulley_radius: rng.random_range(0.003..0.012),
        link_length: rng.random_range(0.05..0.2),
        friction_mu: rng.random_range(0.0..0.8),
        wrap_base: rng.random_range(0.0..(3.0 * std::f64::consts::PI)),
        stall_torque: rng.random_range(0.5..8.0),
        gear_ratio: rng.random_range(1.0..4.0),
        gear_pulley_radius: rng.random_range(0.006..0.02),
        beam_radius: rng.random_range(0.005..0.03),
        finger_offset: rng.random_range(0.0..0.015),
        hand_mass: rng.random_range(0.1..1.0),
        gravity: 9.81,
        ..HandParams::default()
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

//! Rigid-body dynamics of the robot: 6-DoF free flight and the 1-DoF pendulum
//! about the beam while the hand holds on.

mod episode;
mod events;

pub use episode::{perch_plan, run_episode, EpisodeError, PerchPlan, DIVERGENCE_BOUND};
pub use events::{detect_events, EventDetector, SimEvent};

pub use crate::log::{EpisodeLog, LogRow};

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::rotor_allocation::WrenchVector;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite state at t = {time} s")]
    NonFinite { time: f64 },
    #[error("invalid inertial parameters: {0}")]
    Inertial(String),
    #[error("invalid beam constraint: {0}")]
    Constraint(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    /// CoG position in the world frame (m, z up).
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body to world.
    pub orientation: UnitQuaternion<f64>,
    /// Angular velocity in the body frame (rad/s).
    pub angular_velocity: Vector3<f64>,
    pub time: f64,
}

impl BodyState {
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            orientation,
            angular_velocity: Vector3::zeros(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .chain(self.angular_velocity.iter())
            .chain(self.orientation.coords.iter())
            .all(|v| v.is_finite())
    }

    /// World position of a point fixed in the body frame.
    pub fn body_point(&self, offset: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams {
    /// Total mass including the hand (kg).
    pub mass: f64,
    /// Inertia about the CoG in the body frame (kg·m²).
    pub inertia: Matrix3<f64>,
}

impl Default for InertialParams {
    fn default() -> Self {
        Self {
            mass: 2.5,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.08, 0.08, 0.12)),
        }
    }
}

impl InertialParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(SimError::Inertial(format!(
                "mass {} must be positive",
                self.mass
            )));
        }
        if (self.inertia - self.inertia.transpose()).amax() > 1e-12 {
            return Err(SimError::Inertial("inertia is not symmetric".into()));
        }
        if self.inertia.cholesky().is_none() {
            return Err(SimError::Inertial(
                "inertia is not positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Pin joint between the hand and a horizontal beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConstraint {
    /// Beam direction, horizontal.
    pub axis: Unit<Vector3<f64>>,
    /// Any point on the beam centre line.
    pub point: Vector3<f64>,
    pub radius: f64,
    /// Grip point to CoG distance (m).
    pub hang_distance: f64,
    pub attached: bool,
    /// Viscous damping of the pin (N·m·s/rad).
    pub damping: f64,
    /// Grip point the body swings about; set when the hand closes.
    pub pivot: Vector3<f64>,
}

impl BeamConstraint {
    pub fn new(
        axis: Vector3<f64>,
        point: Vector3<f64>,
        radius: f64,
        hang_distance: f64,
        damping: f64,
    ) -> Result<Self, SimError> {
        let norm = axis.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(SimError::Constraint("beam axis must be non-zero".into()));
        }
        let axis = Unit::new_normalize(axis);
        if axis.z.abs() > 1e-9 {
            return Err(SimError::Constraint(format!(
                "beam axis must be horizontal, z component {}",
                axis.z
            )));
        }
        if !(hang_distance > 0.0) {
            return Err(SimError::Constraint(format!(
                "hang distance {hang_distance} must be positive"
            )));
        }
        if !(damping >= 0.0) {
            return Err(SimError::Constraint(format!(
                "damping {damping} must be non-negative"
            )));
        }
        Ok(Self {
            axis,
            point,
            radius,
            hang_distance,
            attached: false,
            damping,
            pivot: point,
        })
    }

    pub fn attach(&mut self, grip_point: Vector3<f64>) {
        self.pivot = grip_point;
        self.attached = true;
    }

    pub fn detach(&mut self) {
        self.attached = false;
    }

    /// Distance from `p` to the beam centre line.
    pub fn distance_to_line(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.point;
        (d - self.axis.into_inner() * d.dot(&self.axis)).norm()
    }
}

fn free_derivative(
    inertial: &InertialParams,
    inertia_inv: &Matrix3<f64>,
    wrench: &WrenchVector,
    v: &Vector3<f64>,
    q: &Quaternion<f64>,
    w: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>, Quaternion<f64>, Vector3<f64>) {
    let rot = UnitQuaternion::from_quaternion(*q);
    let acc = rot * wrench.force / inertial.mass - Vector3::z() * GRAVITY;
    let q_dot = q * Quaternion::from_imag(*w) * 0.5;
    let w_dot = inertia_inv * (wrench.torque - w.cross(&(inertial.inertia * w)));
    (*v, acc, q_dot, w_dot)
}

/// One RK4 step of Newton–Euler free flight under a body-frame wrench.
pub fn step_free(
    state: &BodyState,
    inertial: &InertialParams,
    wrench: &WrenchVector,
    dt: f64,
) -> Result<BodyState, SimError> {
    let inertia_inv = inertial
        .inertia
        .try_inverse()
        .ok_or_else(|| SimError::Inertial("singular inertia".into()))?;
    let p0 = state.position;
    let v0 = state.velocity;
    let q0 = *state.orientation.quaternion();
    let w0 = state.angular_velocity;
    let f = |v: &Vector3<f64>, q: &Quaternion<f64>, w: &Vector3<f64>| {
        free_derivative(inertial, &inertia_inv, wrench, v, q, w)
    };

    let k1 = f(&v0, &q0, &w0);
    let k2 = f(
        &(v0 + k1.1 * (dt / 2.0)),
        &(q0 + k1.2 * (dt / 2.0)),
        &(w0 + k1.3 * (dt / 2.0)),
    );
    let k3 = f(
        &(v0 + k2.1 * (dt / 2.0)),
        &(q0 + k2.2 * (dt / 2.0)),
        &(w0 + k2.3 * (dt / 2.0)),
    );
    let k4 = f(&(v0 + k3.1 * dt), &(q0 + k3.2 * dt), &(w0 + k3.3 * dt));

    let sixth = dt / 6.0;
    let next = BodyState {
        position: p0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * sixth,
        velocity: v0 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * sixth,
        orientation: UnitQuaternion::from_quaternion(
            q0 + (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * sixth,
        ),
        angular_velocity: w0 + (k1.3 + k2.3 * 2.0 + k3.3 * 2.0 + k4.3) * sixth,
        time: state.time + dt,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::NonFinite { time: next.time })
    }
}

/// Pendulum coordinates of an attached body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingState {
    /// Angle from hanging straight down, positive about the beam axis (rad).
    pub angle: f64,
    pub rate: f64,
    /// Distance of the CoG from the pivot axis (m).
    pub lever: f64,
    /// Moment of inertia about the pivot axis (kg·m²).
    pub inertia: f64,
}

pub fn swing_state(
    state: &BodyState,
    inertial: &InertialParams,
    constraint: &BeamConstraint,
) -> SwingState {
    let a = constraint.axis.into_inner();
    let r = state.position - constraint.pivot;
    let r_perp = r - a * r.dot(&a);
    let down = -Vector3::z();
    let side = a.cross(&down);
    let angle = r_perp.dot(&side).atan2(r_perp.dot(&down));
    let rate = (state.orientation * state.angular_velocity).dot(&a);
    let lever = r_perp.norm();
    let rot = state.orientation.to_rotation_matrix();
    let axis_body = rot.inverse() * a;
    let inertia = axis_body.dot(&(inertial.inertia * axis_body)) + inertial.mass * lever * lever;
    SwingState {
        angle,
        rate,
        lever,
        inertia,
    }
}

/// Kinetic plus potential energy of the swing, zero when hanging at rest.
pub fn pendulum_energy(
    state: &BodyState,
    inertial: &InertialParams,
    constraint: &BeamConstraint,
) -> f64 {
    let s = swing_state(state, inertial, constraint);
    0.5 * s.inertia * s.rate * s.rate + inertial.mass * GRAVITY * s.lever * (1.0 - s.angle.cos())
}

/// Generalized torque of a body-frame wrench about the pivot axis.
///
/// A body-fixed wrench rotates with the body about the axis, so this value
/// does not change over a step.
pub fn axis_torque(state: &BodyState, constraint: &BeamConstraint, wrench: &WrenchVector) -> f64 {
    let a = constraint.axis.into_inner();
    let r = state.position - constraint.pivot;
    let force = state.orientation * wrench.force;
    let torque = state.orientation * wrench.torque;
    (r.cross(&force) + torque).dot(&a)
}

/// One RK4 step of the pin-jointed pendulum about the beam.
pub fn step_attached(
    state: &BodyState,
    inertial: &InertialParams,
    constraint: &BeamConstraint,
    wrench: &WrenchVector,
    dt: f64,
) -> Result<BodyState, SimError> {
    if !constraint.attached {
        return Err(SimError::Constraint(
            "step_attached on a detached constraint".into(),
        ));
    }
    let swing = swing_state(state, inertial, constraint);
    let applied = axis_torque(state, constraint, wrench);
    let gravity_moment = inertial.mass * GRAVITY * swing.lever;
    let accel = |angle: f64, rate: f64| {
        (-gravity_moment * angle.sin() - constraint.damping * rate + applied) / swing.inertia
    };

    let (x0, v0) = (swing.angle, swing.rate);
    let k1 = (v0, accel(x0, v0));
    let k2 = (
        v0 + k1.1 * dt / 2.0,
        accel(x0 + k1.0 * dt / 2.0, v0 + k1.1 * dt / 2.0),
    );
    let k3 = (
        v0 + k2.1 * dt / 2.0,
        accel(x0 + k2.0 * dt / 2.0, v0 + k2.1 * dt / 2.0),
    );
    let k4 = (v0 + k3.1 * dt, accel(x0 + k3.0 * dt, v0 + k3.1 * dt));
    let delta = (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * dt / 6.0;
    let rate = v0 + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * dt / 6.0;

    let a = constraint.axis.into_inner();
    let turn = Rotation3::from_axis_angle(&constraint.axis, delta);
    let r = turn * (state.position - constraint.pivot);
    let orientation = UnitQuaternion::from_rotation_matrix(&turn) * state.orientation;
    let orientation = UnitQuaternion::new_normalize(orientation.into_inner());
    let next = BodyState {
        position: constraint.pivot + r,
        velocity: a.cross(&r) * rate,
        orientation,
        angular_velocity: orientation.inverse() * (a * rate),
        time: state.time + dt,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::NonFinite { time: next.time })
    }
}

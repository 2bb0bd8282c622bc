//! PID wrench control and the perching phase machine.
//!
//! Position gains act at acceleration level (the force is `mass·(…)`), attitude
//! gains directly at torque level. The phase machine only moves forward:
//! `FREE_FLIGHT → APPROACH → CONTACT → GRASPED → HANG → TAKEOFF → DETACHED`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude;
use crate::rigid_body_sim::{BodyState, GRAVITY};
use crate::rotor_allocation::WrenchVector;

/// Axis order used by every per-axis array: x, y, z, roll, pitch, yaw.
pub const AXES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];
const Z_AXIS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: [f64; 6],
    pub ki: [f64; 6],
    pub kd: [f64; 6],
    pub integral_clamp: [f64; 6],
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: [8.0, 8.0, 8.0, 20.0, 20.0, 20.0],
            ki: [1.0, 1.0, 1.0, 0.5, 0.5, 0.5],
            kd: [5.0, 5.0, 5.0, 4.0, 4.0, 4.0],
            integral_clamp: [2.0, 2.0, 2.0, 1.0, 1.0, 1.0],
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        for (axis, label) in AXES.iter().enumerate() {
            for (name, v) in [
                ("kp", self.kp[axis]),
                ("ki", self.ki[axis]),
                ("kd", self.kd[axis]),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("gain {name}[{label}] = {v} must be non-negative"));
                }
            }
            let c = self.integral_clamp[axis];
            if !(c.is_finite() && c > 0.0) {
                return Err(format!("integral clamp [{label}] = {c} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerchPhase {
    FreeFlight,
    Approach,
    Contact,
    Grasped,
    Hang,
    Takeoff,
    Detached,
}

impl PerchPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerchPhase::FreeFlight => "FREE_FLIGHT",
            PerchPhase::Approach => "APPROACH",
            PerchPhase::Contact => "CONTACT",
            PerchPhase::Grasped => "GRASPED",
            PerchPhase::Hang => "HANG",
            PerchPhase::Takeoff => "TAKEOFF",
            PerchPhase::Detached => "DETACHED",
        }
    }

    /// Phases in which the hand holds the beam.
    pub fn is_attached(&self) -> bool {
        matches!(
            self,
            PerchPhase::Grasped | PerchPhase::Hang | PerchPhase::Takeoff
        )
    }

    /// The six phases of a perch-and-detach cycle.
    pub const PERCH_CYCLE: [PerchPhase; 6] = [
        PerchPhase::Approach,
        PerchPhase::Contact,
        PerchPhase::Grasped,
        PerchPhase::Hang,
        PerchPhase::Takeoff,
        PerchPhase::Detached,
    ];
}

impl fmt::Display for PerchPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position target with nose-up pitch convention (see [`attitude`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPose {
    pub position: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl TargetPose {
    pub fn new(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            roll,
            pitch,
            yaw,
        }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        attitude::from_rpy(self.roll, self.pitch, self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerThresholds {
    /// Landing trigger speed bound (m/s).
    pub landing_speed: f64,
    /// Landing trigger angular speed bound (rad/s).
    pub landing_angular_speed: f64,
    /// How long both bounds must hold (s).
    pub landing_hold: f64,
    /// Pitch magnitude below which the hand may let go (rad).
    pub detach_pitch: f64,
    /// Duration of the thrust ramp after the takeoff command (s).
    pub takeoff_ramp: f64,
}

impl Default for ControllerThresholds {
    fn default() -> Self {
        Self {
            landing_speed: 0.05,
            landing_angular_speed: 0.1,
            landing_hold: 0.5,
            detach_pitch: 0.05,
            takeoff_ramp: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransition {
    pub time: f64,
    pub from: PerchPhase,
    pub to: PerchPhase,
    pub trigger: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub integral: [f64; 6],
    pub prev_error: Option<[f64; 6]>,
    pub phase: PerchPhase,
    /// CoG at the bottom of the hang, recorded at the takeoff command.
    pub r_bottom: Option<Vector3<f64>>,
    /// Distance from the grip point to the CoG (m).
    pub hang_distance: f64,
    pub transitions: Vec<PhaseTransition>,
}

impl ControllerState {
    pub fn new(phase: PerchPhase, hang_distance: f64) -> Self {
        Self {
            integral: [0.0; 6],
            prev_error: None,
            phase,
            r_bottom: None,
            hang_distance,
            transitions: Vec::new(),
        }
    }

    /// Forget the previous error so a target jump does not kick the D term.
    pub fn reset_derivative(&mut self) {
        self.prev_error = None;
    }

    fn enter(&mut self, to: PerchPhase, time: f64, trigger: &'static str) {
        self.transitions.push(PhaseTransition {
            time,
            from: self.phase,
            to,
            trigger,
        });
        self.phase = to;
    }
}

/// Which integral accumulators run in `phase`.
pub fn integral_policy(phase: PerchPhase) -> [bool; 6] {
    match phase {
        PerchPhase::Takeoff => {
            let mut mask = [false; 6];
            mask[Z_AXIS] = true;
            mask
        }
        _ => [true; 6],
    }
}

/// Position and attitude error: world-frame position, body-frame rotation.
pub fn tracking_error(body: &BodyState, target: &TargetPose) -> [f64; 6] {
    let ep = target.position - body.position;
    let ea = attitude::rotation_error(&body.orientation, &target.orientation());
    [ep.x, ep.y, ep.z, ea.x, ea.y, ea.z]
}

/// Per-axis PID plus gravity feedforward, returned in the CoG frame.
pub fn pid_wrench(
    gains: &PidGains,
    ctrl: &mut ControllerState,
    body: &BodyState,
    target: &TargetPose,
    mass: f64,
    dt: f64,
) -> WrenchVector {
    assert!(dt > 0.0, "controller step must be positive");
    let error = tracking_error(body, target);
    let mask = integral_policy(ctrl.phase);
    let mut out = [0.0; 6];
    for axis in 0..6 {
        if mask[axis] {
            let c = gains.integral_clamp[axis];
            ctrl.integral[axis] = (ctrl.integral[axis] + error[axis] * dt).clamp(-c, c);
        } else {
            ctrl.integral[axis] = 0.0;
        }
        let rate = ctrl
            .prev_error
            .map_or(0.0, |prev| (error[axis] - prev[axis]) / dt);
        out[axis] = gains.kp[axis] * error[axis]
            + gains.ki[axis] * ctrl.integral[axis]
            + gains.kd[axis] * rate;
    }
    ctrl.prev_error = Some(error);

    let world_force = mass * (Vector3::new(out[0], out[1], out[2]) + Vector3::z() * GRAVITY);
    WrenchVector::new(
        body.orientation.inverse() * world_force,
        Vector3::new(out[3], out[4], out[5]),
    )
}

/// One entry of the landing-trigger window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub time: f64,
    pub speed: f64,
    pub angular_speed: f64,
}

impl MotionSample {
    pub fn of(body: &BodyState) -> Self {
        Self {
            time: body.time,
            speed: body.velocity.norm(),
            angular_speed: body.angular_velocity.norm(),
        }
    }
}

/// True once speed and angular speed have both stayed below their bounds for
/// `hold` seconds, ending at the newest sample.
///
/// Callers only consult it while the hand is grasping; a window shorter than
/// `hold` never fires.
pub fn landing_trigger(history: &[MotionSample], v_thresh: f64, w_thresh: f64, hold: f64) -> bool {
    let Some(newest) = history.last() else {
        return false;
    };
    let mut quiet_since = None;
    for s in history.iter().rev() {
        if s.speed < v_thresh && s.angular_speed < w_thresh {
            quiet_since = Some(s.time);
        } else {
            break;
        }
    }
    // A little slack so sample times accumulated in floating point still count.
    quiet_since.is_some_and(|t0| newest.time - t0 >= hold - 1e-9)
}

/// Sliding window feeding [`landing_trigger`].
#[derive(Debug, Clone)]
pub struct MotionWindow {
    samples: VecDeque<MotionSample>,
    span: f64,
}

impl MotionWindow {
    pub fn new(span: f64) -> Self {
        Self {
            samples: VecDeque::new(),
            span,
        }
    }

    pub fn push(&mut self, sample: MotionSample) {
        self.samples.push_back(sample);
        while let Some(front) = self.samples.front() {
            if sample.time - front.time > self.span + 1e-9 {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn fires(&self, v_thresh: f64, w_thresh: f64, hold: f64) -> bool {
        let (a, b) = self.samples.as_slices();
        if b.is_empty() {
            landing_trigger(a, v_thresh, w_thresh, hold)
        } else {
            let joined: Vec<MotionSample> = self.samples.iter().copied().collect();
            landing_trigger(&joined, v_thresh, w_thresh, hold)
        }
    }
}

/// CoG setpoint that keeps the grip point fixed while the pitch moves from
/// `pitch` to `pitch_des` at heading `yaw`.
///
/// Angles follow the body-x convention: the hand lies along
/// `(cosθ cosψ, cosθ sinψ, −sinθ)` from the CoG.
pub fn detachment_target(
    r_bottom: &Vector3<f64>,
    pitch: f64,
    pitch_des: f64,
    yaw: f64,
    hang_distance: f64,
) -> Vector3<f64> {
    let dc = pitch_des.cos() - pitch.cos();
    let ds = pitch_des.sin() - pitch.sin();
    r_bottom
        - Vector3::new(
            hang_distance * dc * yaw.cos(),
            hang_distance * dc * yaw.sin(),
            -hang_distance * ds,
        )
}

/// Inputs that can move the phase machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseEvent {
    ApproachCommand,
    /// Hand origin reached the beam slowly enough to close.
    Capture,
    /// Result of closing the hand on the beam.
    GraspClosed {
        success: bool,
    },
    LandingTrigger,
    TakeoffCommand,
    /// Fingers opened while attached.
    Release,
}

impl PhaseEvent {
    fn name(&self) -> &'static str {
        match self {
            PhaseEvent::ApproachCommand => "approach command",
            PhaseEvent::Capture => "capture",
            PhaseEvent::GraspClosed { .. } => "grasp closed",
            PhaseEvent::LandingTrigger => "landing trigger",
            PhaseEvent::TakeoffCommand => "takeoff command",
            PhaseEvent::Release => "release",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideEffect {
    /// Commanded wrench is forced to zero from now on.
    ThrustCutoff,
    /// New setpoint for the position/attitude loops.
    SetTarget(TargetPose),
    /// Start the takeoff thrust ramp.
    StartThrustRamp,
    /// Fingers open and the beam constraint is dropped.
    OpenFingers,
    /// All integral accumulators restarted from zero.
    IntegralRestart,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("event `{event}` is not accepted in phase {phase}")]
    OutOfOrder {
        phase: PerchPhase,
        event: &'static str,
    },
    #[error("release rejected: |pitch| = {pitch} rad is not below {limit} rad")]
    PitchNotLevel { pitch: f64, limit: f64 },
}

/// Advance the phase machine by a batch of events, in order.
pub fn phase_step(
    ctrl: &mut ControllerState,
    body: &BodyState,
    events: &[PhaseEvent],
    thresholds: &ControllerThresholds,
) -> Result<Vec<SideEffect>, PhaseError> {
    let mut effects = Vec::new();
    for event in events {
        use PerchPhase::*;
        let t = body.time;
        match (ctrl.phase, event) {
            (FreeFlight, PhaseEvent::ApproachCommand) => {
                ctrl.enter(Approach, t, "approach command")
            }
            (Approach, PhaseEvent::Capture) => ctrl.enter(Contact, t, "hand-beam capture"),
            (Contact, PhaseEvent::GraspClosed { success }) => {
                if *success {
                    ctrl.enter(Grasped, t, "closure succeeded");
                }
            }
            (Grasped, PhaseEvent::LandingTrigger) => {
                ctrl.enter(Hang, t, "landing trigger");
                ctrl.reset_derivative();
                effects.push(SideEffect::ThrustCutoff);
            }
            (Hang, PhaseEvent::TakeoffCommand) => {
                ctrl.enter(Takeoff, t, "takeoff command");
                let r_bottom = body.position;
                let (theta, yaw) = attitude::swing_angles(&body.orientation);
                let target = detachment_target(&r_bottom, theta, 0.0, yaw, ctrl.hang_distance);
                ctrl.r_bottom = Some(r_bottom);
                let mask = integral_policy(Takeoff);
                for (i, keep) in ctrl.integral.iter_mut().zip(mask) {
                    if !keep {
                        *i = 0.0;
                    }
                }
                ctrl.reset_derivative();
                effects.push(SideEffect::SetTarget(TargetPose::new(
                    target, 0.0, 0.0, yaw,
                )));
                effects.push(SideEffect::StartThrustRamp);
            }
            (Takeoff, PhaseEvent::Release) => {
                let pitch = attitude::elevation(&body.orientation);
                if pitch.abs() >= thresholds.detach_pitch {
                    return Err(PhaseError::PitchNotLevel {
                        pitch,
                        limit: thresholds.detach_pitch,
                    });
                }
                ctrl.enter(Detached, t, "hand released near level pitch");
                ctrl.integral = [0.0; 6];
                effects.push(SideEffect::OpenFingers);
                effects.push(SideEffect::IntegralRestart);
            }
            (phase, event) => {
                return Err(PhaseError::OutOfOrder {
                    phase,
                    event: event.name(),
                })
            }
        }
    }
    Ok(effects)
}

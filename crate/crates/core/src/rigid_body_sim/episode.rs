//! Closed-loop episode: controller, allocation, dynamics and events at a
//! fixed control rate over a fixed-step physics integrator.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use thiserror::Error;

use super::{
    step_attached, step_free, swing_state, BeamConstraint, BodyState, EventDetector, SimEvent,
    GRAVITY,
};
use crate::attitude;
use crate::flight_controller::{
    detachment_target, phase_step, pid_wrench, ControllerState, MotionSample, MotionWindow,
    PerchPhase, PhaseError, PhaseEvent, SideEffect, TargetPose,
};
use crate::log::{Check, EpisodeLog, EpisodeSummary, LogRow, PhaseStamp};
use crate::rotor_allocation::{AllocationError, ThrustCommand, WrenchAllocator, WrenchVector};
use crate::scenario::{Mission, Pose, ScenarioConfig};
use crate::tendon_hand::{self, HandError, DOUBLE_CONTACT_ALPHA};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e4;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("episode diverged at t = {time} s: {reason}")]
    Diverged {
        time: f64,
        reason: String,
        /// Everything logged up to the divergence.
        log: Box<EpisodeLog>,
    },
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    a - two_pi * ((a + std::f64::consts::PI) / two_pi).floor()
}

fn pose_target(p: &Pose) -> TargetPose {
    TargetPose::new(Vector3::from(p.position), p.roll, p.pitch, p.yaw)
}

/// Where the robot meets the beam on a perch approach from `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerchPlan {
    /// Point on the beam line the hand closes on.
    pub grip: Vector3<f64>,
    pub yaw: f64,
    /// CoG setpoint at the end of the approach.
    pub pose: TargetPose,
}

pub fn perch_plan(beam: &BeamConstraint, start: &Pose, pitch: f64) -> PerchPlan {
    let a = beam.axis.into_inner();
    let p0 = Vector3::from(start.position);
    let grip = beam.point + a * (p0 - beam.point).dot(&a);
    let d = grip - p0;
    let across = d - a * d.dot(&a);
    let yaw = if across.x.hypot(across.y) > 1e-9 {
        across.y.atan2(across.x)
    } else {
        (-a.x).atan2(a.y)
    };
    let hand_dir = Vector3::new(
        pitch.cos() * yaw.cos(),
        pitch.cos() * yaw.sin(),
        pitch.sin(),
    );
    let cog = grip - hand_dir * beam.hang_distance;
    PerchPlan {
        grip,
        yaw,
        pose: TargetPose::new(cog, 0.0, pitch, yaw),
    }
}

/// Setpoint that rotates the body about a held grip point, smoothly in time.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PivotSweep {
    r_ref: Vector3<f64>,
    theta_ref: f64,
    theta_goal: f64,
    yaw: f64,
    t0: f64,
    duration: f64,
    hang_distance: f64,
}

impl PivotSweep {
    fn target_at(&self, t: f64) -> TargetPose {
        let s = if self.duration > 0.0 {
            smoothstep((t - self.t0) / self.duration)
        } else {
            1.0
        };
        let theta = self.theta_ref + s * (self.theta_goal - self.theta_ref);
        let position = detachment_target(
            &self.r_ref,
            self.theta_ref,
            theta,
            self.yaw,
            self.hang_distance,
        );
        TargetPose::new(position, 0.0, -theta, self.yaw)
    }
}

fn diverged(state: &BodyState) -> Option<String> {
    if !state.is_finite() {
        return Some("non-finite state".into());
    }
    let big = state
        .position
        .iter()
        .chain(state.velocity.iter())
        .chain(state.angular_velocity.iter())
        .any(|v| v.abs() > DIVERGENCE_BOUND);
    big.then(|| format!("state magnitude beyond {DIVERGENCE_BOUND}"))
}

/// Hanging orientation and CoG for a body held at `pivot` with swing `angle`.
fn hanging_state(beam: &BeamConstraint, angle: f64) -> BodyState {
    let a = beam.axis.into_inner();
    let yaw = (-a.x).atan2(a.y);
    let q = attitude::from_rpy(0.0, FRAC_PI_2 - angle, yaw);
    let cog = beam.pivot - q * Vector3::new(beam.hang_distance, 0.0, 0.0);
    BodyState::at_rest(cog, q)
}

struct Running {
    log: EpisodeLog,
    max_swing: Option<f64>,
    peak_load: f64,
    hang_pitch: Option<f64>,
    saturated: usize,
    cutoff_clean: bool,
}

pub fn run_episode(config: &ScenarioConfig) -> Result<EpisodeLog, EpisodeError> {
    config
        .validate()
        .map_err(|e| EpisodeError::Config(e.to_string()))?;
    let geometry = config
        .rotors
        .geometry()
        .map_err(|e| EpisodeError::Config(e.to_string()))?;
    let allocator = WrenchAllocator::new(geometry)?;
    if allocator.rank() < 6 {
        // allocate() reports the singular values
        allocator.allocate(&WrenchVector::zero())?;
    }
    let plant = config.inertial_params(config.payload);
    let nominal_mass = config.inertial.mass;
    let gains = config.gains;
    let thresholds = config.thresholds.controller();
    let timing = config.timing;
    let dt = timing.dt;
    let ctrl_dt = timing.control_dt();
    let l_h = config.hang_distance;
    let mut beam = config
        .beam_constraint()
        .map_err(|e| EpisodeError::Config(e.to_string()))?;
    let hand_offset = Vector3::new(l_h, 0.0, 0.0);
    let mut detector = EventDetector::new(
        config.thresholds.capture_radius,
        config.thresholds.capture_speed,
        hand_offset,
    );
    let capacity = tendon_hand::max_load_single(&config.hand, 0.0)?.max(
        tendon_hand::max_load_double(&config.hand, DOUBLE_CONTACT_ALPHA)?,
    );

    let (mut state, mut ctrl, mut target, mut cutoff) = match config.mission {
        Mission::Hover { start, .. } | Mission::Perch { start, .. } => {
            let state = BodyState::at_rest(
                Vector3::from(start.position),
                attitude::from_rpy(start.roll, start.pitch, start.yaw),
            );
            (
                state,
                ControllerState::new(PerchPhase::FreeFlight, l_h),
                pose_target(&start),
                false,
            )
        }
        Mission::HangLoad { initial_swing } => {
            beam.attach(beam.point);
            let state = hanging_state(&beam, initial_swing);
            let (theta, yaw) = attitude::swing_angles(&state.orientation);
            let target = TargetPose::new(state.position, 0.0, -theta, yaw);
            (
                state,
                ControllerState::new(PerchPhase::Hang, l_h),
                target,
                true,
            )
        }
    };
    if let Mission::Hover { target: goal, .. } = config.mission {
        target = pose_target(&goal);
    }

    let mut run = Running {
        log: EpisodeLog::default(),
        max_swing: None,
        peak_load: 0.0,
        hang_pitch: None,
        saturated: 0,
        cutoff_clean: true,
    };
    let mut window = MotionWindow::new(2.0 * thresholds.landing_hold.max(ctrl_dt));
    let mut approach: Option<(f64, TargetPose)> = None;
    let mut sweep: Option<PivotSweep> = None;
    let mut ramp_start: Option<f64> = None;
    let mut final_target: Option<Vector3<f64>> = None;
    let mut hang_since: Option<f64> = None;
    let mut detached_at: Option<f64> = None;
    let mut fingers_open = false;
    // the step that snaps the velocity onto the pin joint is an impulse, not a load
    let mut load_valid = false;

    let n_ticks = (timing.t_end / ctrl_dt).round() as usize;
    for tick in 0..=n_ticks {
        let t = state.time;
        let mut events = Vec::new();

        if let Mission::Perch {
            start,
            approach_start,
            approach_duration: _,
            approach_pitch,
            swing_duration,
            takeoff_delay,
            takeoff_duration,
        } = config.mission
        {
            match ctrl.phase {
                PerchPhase::FreeFlight if t >= approach_start - 1e-9 => {
                    events.push(PhaseEvent::ApproachCommand);
                    let plan = perch_plan(&beam, &start, approach_pitch);
                    approach = Some((t, plan.pose));
                }
                PerchPhase::Approach => {
                    if detector
                        .detect(&state, &beam, false)
                        .contains(&SimEvent::Capture)
                    {
                        beam.attach(state.body_point(&hand_offset));
                        events.push(PhaseEvent::Capture);
                        let contact = config.finger_contact_angle()?;
                        let grasp = tendon_hand::close_on_profile(
                            &config.hand,
                            [Some(contact); 3],
                            tendon_hand::full_closure_travel(&config.hand),
                        )?;
                        events.push(PhaseEvent::GraspClosed {
                            success: grasp.success,
                        });
                        if grasp.success {
                            let (theta, yaw) = attitude::swing_angles(&state.orientation);
                            sweep = Some(PivotSweep {
                                r_ref: state.position,
                                theta_ref: theta,
                                theta_goal: -FRAC_PI_2,
                                yaw,
                                t0: t,
                                duration: swing_duration,
                                hang_distance: l_h,
                            });
                            window.clear();
                        } else {
                            beam.detach();
                        }
                    }
                }
                PerchPhase::Grasped => {
                    window.push(MotionSample::of(&state));
                    if window.fires(
                        thresholds.landing_speed,
                        thresholds.landing_angular_speed,
                        thresholds.landing_hold,
                    ) {
                        events.push(PhaseEvent::LandingTrigger);
                        run.hang_pitch = Some(attitude::elevation(&state.orientation));
                        hang_since = Some(t);
                    }
                }
                PerchPhase::Hang => {
                    if hang_since.is_some_and(|t0| t - t0 >= takeoff_delay - 1e-9) {
                        events.push(PhaseEvent::TakeoffCommand);
                        let (theta, yaw) = attitude::swing_angles(&state.orientation);
                        sweep = Some(PivotSweep {
                            r_ref: state.position,
                            theta_ref: theta,
                            theta_goal: 0.0,
                            yaw,
                            t0: t,
                            duration: takeoff_duration,
                            hang_distance: l_h,
                        });
                    }
                }
                PerchPhase::Takeoff => {
                    let ramp_done =
                        ramp_start.is_some_and(|t0| t - t0 >= thresholds.takeoff_ramp - 1e-9);
                    let sweep_done = sweep.is_some_and(|s| t - s.t0 >= s.duration - 1e-9);
                    let level =
                        attitude::elevation(&state.orientation).abs() < thresholds.detach_pitch;
                    let calm = state.angular_velocity.norm() < thresholds.landing_angular_speed;
                    if ramp_done && sweep_done && level && calm {
                        fingers_open = true;
                    }
                    if detector
                        .detect(&state, &beam, fingers_open)
                        .contains(&SimEvent::Release)
                    {
                        events.push(PhaseEvent::Release);
                    }
                }
                _ => {}
            }
        }

        let effects = phase_step(&mut ctrl, &state, &events, &thresholds)?;
        for effect in effects {
            match effect {
                SideEffect::ThrustCutoff => cutoff = true,
                SideEffect::SetTarget(pose) => {
                    final_target = Some(pose.position);
                    target = pose;
                }
                SideEffect::StartThrustRamp => {
                    cutoff = false;
                    ramp_start = Some(t);
                }
                SideEffect::OpenFingers => {
                    beam.detach();
                    sweep = None;
                    detached_at = Some(t);
                }
                SideEffect::IntegralRestart => ctrl.reset_derivative(),
            }
        }

        // live setpoint
        if ctrl.phase == PerchPhase::Approach {
            if let (
                Some((t0, goal)),
                Mission::Perch {
                    start,
                    approach_duration,
                    ..
                },
            ) = (approach, config.mission)
            {
                let s = smoothstep((t - t0) / approach_duration);
                let p0 = Vector3::from(start.position);
                target = TargetPose::new(
                    p0 + (goal.position - p0) * s,
                    start.roll * (1.0 - s),
                    start.pitch + (goal.pitch - start.pitch) * s,
                    start.yaw + wrap_angle(goal.yaw - start.yaw) * s,
                );
            }
        } else if matches!(ctrl.phase, PerchPhase::Grasped | PerchPhase::Takeoff) {
            if let Some(s) = sweep {
                target = s.target_at(t);
            }
        }

        let commanded = if cutoff {
            WrenchVector::zero()
        } else {
            let w = pid_wrench(&gains, &mut ctrl, &state, &target, nominal_mass, ctrl_dt);
            match (ctrl.phase, ramp_start) {
                (PerchPhase::Takeoff, Some(t0)) if thresholds.takeoff_ramp > 0.0 => {
                    w.scaled(((t - t0) / thresholds.takeoff_ramp).clamp(0.0, 1.0))
                }
                _ => w,
            }
        };
        let (thrust, saturated) = if cutoff {
            (ThrustCommand::zero(), false)
        } else {
            let a = allocator.allocate(&commanded)?;
            (a.command, a.saturated)
        };
        let applied = if cutoff {
            WrenchVector::zero()
        } else {
            allocator.reconstruct(&thrust)
        };
        if saturated {
            run.saturated += 1;
        }
        if ctrl.phase == PerchPhase::Hang
            && (commanded != WrenchVector::zero() || applied != WrenchVector::zero())
        {
            run.cutoff_clean = false;
        }

        let (roll, pitch, yaw) = attitude::to_rpy(&state.orientation);
        run.log.rows.push(LogRow {
            t,
            position: state.position,
            roll,
            pitch,
            yaw,
            phase: ctrl.phase,
            thrust,
            target_position: target.position,
            target_pitch: target.pitch,
            commanded,
            attached: beam.attached,
            saturated,
        });

        let done =
            tick == n_ticks || detached_at.is_some_and(|t0| t - t0 >= timing.settle_time - 1e-9);
        if done {
            break;
        }

        for _ in 0..timing.control_period_steps {
            let next = if beam.attached {
                step_attached(&state, &plant, &beam, &applied, dt)
            } else {
                step_free(&state, &plant, &applied, dt)
            };
            let next = match next {
                Ok(s) => s,
                Err(e) => {
                    return Err(divergence(
                        run,
                        &ctrl,
                        config,
                        state.time + dt,
                        e.to_string(),
                    ))
                }
            };
            if let Some(reason) = diverged(&next) {
                return Err(divergence(run, &ctrl, config, next.time, reason));
            }
            if beam.attached && !load_valid {
                load_valid = true;
            } else if beam.attached {
                // force the hand carries: m·a = F_hand + R·f + m·g
                let accel = (next.velocity - state.velocity) / dt;
                let thrust_world = next.orientation * applied.force;
                let hand_force = plant.mass * (accel + Vector3::z() * GRAVITY) - thrust_world;
                run.peak_load = run.peak_load.max(hand_force.norm() / GRAVITY);
                if ctrl.phase == PerchPhase::Hang {
                    let swing = swing_state(&next, &plant, &beam).angle.abs();
                    run.max_swing = Some(run.max_swing.unwrap_or(0.0).max(swing));
                }
            }
            state = next;
        }
        if !beam.attached {
            load_valid = false;
        }
    }

    let mut log = run.log;
    log.transitions = ctrl.transitions.clone();
    log.summary = summarize(
        config,
        &log,
        &state,
        &ctrl,
        Summaries {
            hang_pitch: run.hang_pitch,
            max_swing: run.max_swing,
            peak_load: run.peak_load,
            capacity,
            saturated: run.saturated,
            cutoff_clean: run.cutoff_clean,
            final_target: final_target.unwrap_or(target.position),
            target,
        },
    );
    Ok(log)
}

fn divergence(
    run: Running,
    ctrl: &ControllerState,
    config: &ScenarioConfig,
    time: f64,
    reason: String,
) -> EpisodeError {
    let mut log = run.log;
    log.transitions = ctrl.transitions.clone();
    log.summary.scenario = config.name.clone();
    log.summary.mission = config.mission.kind().to_string();
    log.summary.end_time = time;
    log.summary.final_phase = Some(ctrl.phase);
    log.summary.phases = ctrl.transitions.iter().map(PhaseStamp::from).collect();
    log.summary.checks = vec![Check::flag("finite_state", false)];
    EpisodeError::Diverged {
        time,
        reason,
        log: Box::new(log),
    }
}

struct Summaries {
    hang_pitch: Option<f64>,
    max_swing: Option<f64>,
    peak_load: f64,
    capacity: f64,
    saturated: usize,
    cutoff_clean: bool,
    final_target: Vector3<f64>,
    target: TargetPose,
}

fn summarize(
    config: &ScenarioConfig,
    log: &EpisodeLog,
    state: &BodyState,
    ctrl: &ControllerState,
    s: Summaries,
) -> EpisodeSummary {
    let tol = &config.tolerances;
    let final_pitch = attitude::elevation(&state.orientation);
    let final_error = (state.position - s.final_target).norm();
    let mut checks = Vec::new();
    match config.mission {
        Mission::Hover { .. } => {
            let worst = log
                .rows
                .iter()
                .filter(|r| r.t >= tol.hover_settle_time - 1e-9)
                .map(|r| (r.position - s.target.position).norm())
                .fold(0.0, f64::max);
            checks.push(Check::at_most(
                "hover_position_error_m",
                worst,
                tol.hover_position,
            ));
        }
        Mission::Perch { .. } => {
            let visited: Vec<PerchPhase> = ctrl.transitions.iter().map(|t| t.to).collect();
            checks.push(Check::flag(
                "all_six_phases",
                visited == PerchPhase::PERCH_CYCLE.to_vec(),
            ));
            let hang_err = s
                .hang_pitch
                .map_or(f64::INFINITY, |p| (p.to_degrees() - 90.0).abs());
            checks.push(Check::at_most(
                "hang_pitch_error_deg",
                hang_err,
                tol.hang_pitch_deg,
            ));
            let by_trigger = ctrl
                .transitions
                .iter()
                .any(|t| t.to == PerchPhase::Hang && t.trigger == "landing trigger");
            checks.push(Check::flag(
                "thrust_cutoff_by_landing_trigger",
                by_trigger && s.cutoff_clean,
            ));
            let detached = ctrl.phase == PerchPhase::Detached;
            let pitch_err = if detached {
                final_pitch.to_degrees().abs()
            } else {
                f64::INFINITY
            };
            checks.push(Check::at_most(
                "final_pitch_deg",
                pitch_err,
                tol.final_pitch_deg,
            ));
            let pos_err = if detached { final_error } else { f64::INFINITY };
            checks.push(Check::at_most(
                "final_position_error_m",
                pos_err,
                tol.final_position,
            ));
        }
        Mission::HangLoad { .. } => {
            checks.push(Check::at_most("peak_grip_load_kg", s.peak_load, s.capacity));
        }
    }
    let passed = checks.iter().all(|c| c.pass);
    EpisodeSummary {
        scenario: config.name.clone(),
        mission: config.mission.kind().to_string(),
        payload_kg: config.payload,
        end_time: state.time,
        final_phase: Some(ctrl.phase),
        phases: ctrl.transitions.iter().map(PhaseStamp::from).collect(),
        hang_pitch_deg: s.hang_pitch.map(f64::to_degrees),
        max_swing_amplitude_deg: s.max_swing.map(f64::to_degrees),
        detachment_target: ctrl
            .r_bottom
            .map(|_| [s.final_target.x, s.final_target.y, s.final_target.z]),
        final_target: [s.final_target.x, s.final_target.y, s.final_target.z],
        final_position: [state.position.x, state.position.y, state.position.z],
        final_position_error_m: final_error,
        final_pitch_deg: final_pitch.to_degrees(),
        peak_grip_load_kg: s.peak_load,
        grip_capacity_kg: s.capacity,
        saturated_samples: s.saturated,
        checks,
        passed,
    }
}

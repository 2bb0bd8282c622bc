//! Single-actuator, three-fingered tendon-driven hand.
//!
//! Covers the tendon kinematics of one finger (active flexor/extensor plus the
//! X-shaped passive tendons that lock the three joints together), capstan
//! amplification over the joint pulleys, the dead-hang load capacity in both
//! contact regimes, and a quasi-static model of the triangular differential
//! plates that distribute one actuator's travel over three fingers.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opening angle at which each finger starts bearing the load at two points.
pub const DOUBLE_CONTACT_ALPHA: f64 = PI / 10.0;

/// Slack allowed when an opening angle sits on a regime boundary.
const ALPHA_EPS: f64 = 1e-12;

/// Angle equality tolerance used by the closure model.
pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandError {
    #[error("invalid hand parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("opening angle {alpha} rad outside the valid range [{min}, {max}) for {model}")]
    Domain {
        model: &'static str,
        alpha: f64,
        min: f64,
        max: f64,
    },
    #[error(
        "differential plate saturated: vertex spread {required} m exceeds tilt limit {limit} m"
    )]
    PlateSaturation { required: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, HandError>;

/// Geometry and actuation constants of the hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandParams {
    /// Built-in joint pulley radius (m); all joints share it.
    pub joint_pulley_radius: f64,
    /// Finger link length (m).
    pub link_length: f64,
    /// Static friction between tendon and pulley.
    pub friction_mu: f64,
    /// Base tendon wrap angle over the joint pulleys (rad).
    pub wrap_base: f64,
    /// Actuator stall torque (N·m).
    pub stall_torque: f64,
    /// Gear reduction between servo and tendon pulley.
    pub gear_ratio: f64,
    /// Radius of the tendon pulley on the output gear (m).
    pub gear_pulley_radius: f64,
    /// Radius of the grasped cylinder (m).
    pub beam_radius: f64,
    /// Finger-to-beam-surface offset (m).
    pub finger_offset: f64,
    /// Self-mass of the hand unit (kg).
    pub hand_mass: f64,
    pub gravity: f64,
    /// Per-joint angle limit (rad).
    pub joint_limit: f64,
    /// Largest vertex travel spread the differential plate can take (m).
    pub tilt_limit: f64,
    /// Largest cylinder diameter the fully closed hand still wraps (m).
    pub closed_grip_diameter: f64,
}

impl Default for HandParams {
    fn default() -> Self {
        Self {
            joint_pulley_radius: 0.006,
            link_length: 0.1,
            friction_mu: 0.3,
            wrap_base: 2.0 * PI,
            stall_torque: 3.4,
            gear_ratio: 2.0,
            gear_pulley_radius: 0.012,
            beam_radius: 0.012,
            finger_offset: 0.008,
            hand_mass: 0.390,
            gravity: 9.81,
            joint_limit: 100f64.to_radians(),
            tilt_limit: 0.04,
            closed_grip_diameter: 0.024,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(HandError::InvalidParameter { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(HandError::InvalidParameter { name, value })
    }
}

impl HandParams {
    pub fn validate(&self) -> Result<()> {
        positive("joint_pulley_radius", self.joint_pulley_radius)?;
        positive("link_length", self.link_length)?;
        non_negative("friction_mu", self.friction_mu)?;
        non_negative("wrap_base", self.wrap_base)?;
        positive("stall_torque", self.stall_torque)?;
        positive("gear_ratio", self.gear_ratio)?;
        positive("gear_pulley_radius", self.gear_pulley_radius)?;
        positive("beam_radius", self.beam_radius)?;
        non_negative("finger_offset", self.finger_offset)?;
        non_negative("hand_mass", self.hand_mass)?;
        positive("gravity", self.gravity)?;
        positive("joint_limit", self.joint_limit)?;
        positive("tilt_limit", self.tilt_limit)?;
        positive("closed_grip_diameter", self.closed_grip_diameter)?;
        Ok(())
    }

    /// Tendon force delivered by the stalled actuator through the gear train (N).
    pub fn actuator_tension(&self) -> f64 {
        self.gear_ratio * self.stall_torque / self.gear_pulley_radius
    }

    /// Common prefactor `τ_st·R1·c / (g·l·R_gp)` of both capacity formulas (kg).
    fn capacity_scale(&self) -> f64 {
        self.stall_torque * self.joint_pulley_radius * self.gear_ratio
            / (self.gravity * self.link_length * self.gear_pulley_radius)
    }
}

/// Constant tendon Jacobians of one finger.
///
/// Tendon rows are ordered flexor, extensor, then the passive tendons, two per
/// adjacent joint pair (the X arrangement). The single actuator column drives
/// the active rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonRouting {
    pub jacobian: DMatrix<f64>,
    pub actuator_map: DMatrix<f64>,
    n_active: usize,
}

impl TendonRouting {
    pub fn n_joints(&self) -> usize {
        self.jacobian.ncols()
    }

    pub fn n_tendons(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn active_jacobian(&self) -> DMatrix<f64> {
        self.jacobian.rows(0, self.n_active).into_owned()
    }

    pub fn passive_jacobian(&self) -> DMatrix<f64> {
        let n_passive = self.jacobian.nrows() - self.n_active;
        self.jacobian.rows(self.n_active, n_passive).into_owned()
    }

    pub fn passive_actuator_map(&self) -> DMatrix<f64> {
        let n_passive = self.actuator_map.nrows() - self.n_active;
        self.actuator_map
            .rows(self.n_active, n_passive)
            .into_owned()
    }
}

pub fn build_coupling_jacobians(
    params: &HandParams,
    n_joints: usize,
    actuator_pulley_radius: f64,
) -> Result<TendonRouting> {
    positive("joint_pulley_radius", params.joint_pulley_radius)?;
    positive("actuator_pulley_radius", actuator_pulley_radius)?;
    if n_joints < 2 {
        return Err(HandError::DimensionMismatch {
            what: "joint count",
            expected: 2,
            got: n_joints,
        });
    }
    let r = params.joint_pulley_radius;
    let n_active = 2;
    let n_passive = 2 * (n_joints - 1);
    let mut jacobian = DMatrix::zeros(n_active + n_passive, n_joints);
    // Flexor shortens as every joint curls, the extensor lengthens.
    for j in 0..n_joints {
        jacobian[(0, j)] = -r;
        jacobian[(1, j)] = r;
    }
    for k in 0..n_joints - 1 {
        let row = n_active + 2 * k;
        jacobian[(row, k)] = r;
        jacobian[(row, k + 1)] = -r;
        jacobian[(row + 1, k)] = -r;
        jacobian[(row + 1, k + 1)] = r;
    }
    let mut actuator_map = DMatrix::zeros(n_active + n_passive, 1);
    actuator_map[(0, 0)] = actuator_pulley_radius;
    actuator_map[(1, 0)] = -actuator_pulley_radius;
    Ok(TendonRouting {
        jacobian,
        actuator_map,
        n_active,
    })
}

/// Tendon elongation rates `J·θ̇ + Bm·φ̇`.
pub fn tendon_rate(
    routing: &TendonRouting,
    joint_rates: &[f64],
    actuator_rates: &[f64],
) -> Result<DVector<f64>> {
    if joint_rates.len() != routing.jacobian.ncols() {
        return Err(HandError::DimensionMismatch {
            what: "joint rates",
            expected: routing.jacobian.ncols(),
            got: joint_rates.len(),
        });
    }
    if actuator_rates.len() != routing.actuator_map.ncols() {
        return Err(HandError::DimensionMismatch {
            what: "actuator rates",
            expected: routing.actuator_map.ncols(),
            got: actuator_rates.len(),
        });
    }
    let theta_dot = DVector::from_column_slice(joint_rates);
    let phi_dot = DVector::from_column_slice(actuator_rates);
    Ok(&routing.jacobian * theta_dot + &routing.actuator_map * phi_dot)
}

/// `‖J_p·θ‖∞`, zero exactly when the passive tendons are unstretched.
///
/// Panics if `theta` does not have one entry per joint.
pub fn coupling_residual(routing: &TendonRouting, theta: &[f64]) -> f64 {
    assert_eq!(theta.len(), routing.n_joints(), "joint vector length");
    let residual = routing.passive_jacobian() * DVector::from_column_slice(theta);
    residual.amax()
}

/// Capstan amplification `T_in·e^{μδ}`.
pub fn belt_gain(t_in: f64, mu: f64, wrap: f64) -> Result<f64> {
    non_negative("tension", t_in)?;
    non_negative("friction_mu", mu)?;
    non_negative("wrap_angle", wrap)?;
    Ok(t_in * (mu * wrap).exp())
}

fn check_open_angle(model: &'static str, alpha: f64, max: f64, inclusive: bool) -> Result<()> {
    let inside = if inclusive {
        alpha <= max + ALPHA_EPS
    } else {
        alpha < max
    };
    if alpha.is_finite() && alpha >= 0.0 && inside {
        Ok(())
    } else {
        Err(HandError::Domain {
            model,
            alpha,
            min: 0.0,
            max,
        })
    }
}

/// Per-finger contact force with one contact point per finger.
pub fn contact_force_single(mass: f64, alpha: f64, gravity: f64) -> Result<f64> {
    non_negative("mass", mass)?;
    check_open_angle("contact force", alpha, PI / 4.0, false)?;
    Ok(mass * gravity / (3.0 * (2.0 * alpha).cos()))
}

/// Per-contact force when every finger carries the load at two points.
pub fn contact_force_double(mass: f64, alpha: f64, gravity: f64) -> Result<f64> {
    non_negative("mass", mass)?;
    check_open_angle("contact force", alpha, PI / 4.0, false)?;
    Ok(mass * gravity / (6.0 * (2.0 * alpha).cos()))
}

/// Moment arms `(l1, l2)` of the contact force about the first two joints.
pub fn moment_arms(params: &HandParams, alpha: f64) -> Result<(f64, f64)> {
    check_open_angle("moment arms", alpha, PI / 4.0, false)?;
    let l = params.link_length;
    let c2 = (2.0 * alpha).cos();
    let l1 = l / (2.0 * c2) + l * alpha.sin() / c2
        - (params.beam_radius + params.finger_offset) * (2.0 * alpha).tan();
    Ok((l1, l1 + l * alpha.sin()))
}

/// Maximum hanging mass in the single-contact regime, `α ∈ [0, π/10]`.
///
/// Keeps only the leading term of `l1` and ignores the third joint, so it is
/// slightly optimistic away from `α = 0`.
pub fn max_load_single(params: &HandParams, alpha: f64) -> Result<f64> {
    check_open_angle("single-contact capacity", alpha, DOUBLE_CONTACT_ALPHA, true)?;
    let c2 = (2.0 * alpha).cos();
    let gain = (params.friction_mu * (params.wrap_base + alpha)).exp();
    Ok(params.capacity_scale() * gain * c2 * c2 / (alpha.sin() * c2 + 1.0))
}

/// Maximum hanging mass in the two-contact regime.
///
/// The wrap angle is pinned at the regime boundary (`wrap_base + π/10`); `alpha`
/// only enters the geometric factor so the curve can be plotted around it.
pub fn max_load_double(params: &HandParams, alpha: f64) -> Result<f64> {
    check_open_angle("double-contact capacity", alpha, PI / 4.0, false)?;
    let c2 = (2.0 * alpha).cos();
    let gain = (params.friction_mu * (params.wrap_base + DOUBLE_CONTACT_ALPHA)).exp();
    Ok(params.capacity_scale() * gain * 4.0 * c2 * c2 / (4.0 * alpha.sin() * c2 + 5.0 * c2 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactRegime {
    SingleContact,
    DoubleContact,
}

impl fmt::Display for ContactRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContactRegime::SingleContact => "single-contact",
            ContactRegime::DoubleContact => "double-contact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityRow {
    pub alpha: f64,
    pub regime: ContactRegime,
    pub max_mass: f64,
}

/// Single-contact capacity over `alpha_grid`, followed by the two-contact
/// value at `π/10` when the grid reaches the regime boundary.
pub fn capacity_curve(params: &HandParams, alpha_grid: &[f64]) -> Result<Vec<CapacityRow>> {
    let mut rows = Vec::with_capacity(alpha_grid.len() + 1);
    for &alpha in alpha_grid {
        rows.push(CapacityRow {
            alpha,
            regime: ContactRegime::SingleContact,
            max_mass: max_load_single(params, alpha)?,
        });
    }
    let reaches_boundary = alpha_grid
        .iter()
        .any(|&a| (a - DOUBLE_CONTACT_ALPHA).abs() <= ALPHA_EPS);
    if reaches_boundary {
        rows.push(CapacityRow {
            alpha: DOUBLE_CONTACT_ALPHA,
            regime: ContactRegime::DoubleContact,
            max_mass: max_load_double(params, DOUBLE_CONTACT_ALPHA)?,
        });
    }
    Ok(rows)
}

/// `n` evenly spaced opening angles covering `[0, π/10]`.
pub fn default_alpha_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| DOUBLE_CONTACT_ALPHA * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Joint angles of one finger plus per-link contact flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerState {
    pub joints: [f64; 3],
    pub contact: [bool; 3],
}

impl FingerState {
    /// All three joints at `theta`, as the passive tendons enforce.
    pub fn synchronized(theta: f64, contacted: bool) -> Self {
        Self {
            joints: [theta; 3],
            contact: [contacted; 3],
        }
    }

    pub fn is_synchronized(&self) -> bool {
        let [a, b, c] = self.joints;
        (a - b).abs() <= ANGLE_TOL && (b - c).abs() <= ANGLE_TOL
    }
}

/// Differential-plate configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateState {
    /// Tendon travel at each plate vertex (m).
    pub vertex_displacements: [f64; 3],
    /// Travel of the actuator tendon at the plate centroid (m).
    pub actuator_displacement: f64,
    pub tensions: [f64; 3],
}

impl PlateState {
    pub fn spread(&self) -> f64 {
        let s = &self.vertex_displacements;
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspResult {
    pub finger_angles: [f64; 3],
    pub contacted: [bool; 3],
    pub actuator_travel_used: f64,
    pub success: bool,
    pub plate: PlateState,
}

impl GraspResult {
    pub fn fingers(&self) -> [FingerState; 3] {
        std::array::from_fn(|i| FingerState::synchronized(self.finger_angles[i], self.contacted[i]))
    }
}

/// Vertex travel that bends one finger's three synchronized joints by `theta`.
pub fn vertex_travel(params: &HandParams, theta: f64) -> f64 {
    3.0 * params.joint_pulley_radius * theta
}

/// Quasi-static closure path: one plate snapshot at the start and after every
/// finger freeze, ending at the travel limit or when all fingers are stopped.
pub fn closure_path(
    params: &HandParams,
    profile: [Option<f64>; 3],
    actuator_travel: f64,
) -> Result<Vec<(PlateState, [bool; 3])>> {
    params.validate()?;
    non_negative("actuator_travel", actuator_travel)?;
    for theta in profile.iter().flatten() {
        if !(theta.is_finite() && *theta >= 0.0 && *theta <= params.joint_limit + ANGLE_TOL) {
            return Err(HandError::InvalidParameter {
                name: "contact_angle",
                value: *theta,
            });
        }
    }
    let target: [f64; 3] =
        std::array::from_fn(|i| vertex_travel(params, profile[i].unwrap_or(params.joint_limit)));

    let mut s = [0.0_f64; 3];
    let mut frozen = [false; 3];
    let mut used = 0.0_f64;
    let mut remaining = actuator_travel;
    let snapshot = |s: [f64; 3], frozen: [bool; 3], used: f64| {
        let stalled = frozen.iter().all(|&f| f) && used > 0.0;
        let t = if stalled {
            params.actuator_tension() / 3.0
        } else {
            0.0
        };
        (
            PlateState {
                vertex_displacements: s,
                actuator_displacement: used,
                tensions: [t; 3],
            },
            frozen,
        )
    };

    // Zero-angle targets are already in contact.
    for i in 0..3 {
        if target[i] <= 0.0 {
            frozen[i] = true;
        }
    }
    let mut path = vec![snapshot(s, frozen, used)];

    loop {
        let free: Vec<usize> = (0..3).filter(|&i| !frozen[i]).collect();
        if free.is_empty() || remaining <= 0.0 {
            break;
        }
        // Unfrozen fingers share equal tension, so they advance together.
        let s_free = s[free[0]];
        let next = free
            .iter()
            .map(|&i| target[i])
            .fold(f64::INFINITY, f64::min);
        let n_free = free.len() as f64;
        let needed = (next - s_free) * n_free / 3.0;
        let step = needed.min(remaining);
        let s_end = s_free + 3.0 * step / n_free;

        let floor = (0..3)
            .filter(|i| frozen[*i])
            .map(|i| s[i])
            .fold(s_end, f64::min);
        let spread = s_end - floor;
        if spread > params.tilt_limit + ANGLE_TOL * params.joint_pulley_radius {
            return Err(HandError::PlateSaturation {
                required: spread,
                limit: params.tilt_limit,
            });
        }

        for &i in &free {
            s[i] = s_end;
        }
        used += step;
        remaining -= step;
        if step >= needed {
            for &i in &free {
                if (target[i] - next).abs() <= ANGLE_TOL * params.joint_pulley_radius {
                    s[i] = target[i];
                    frozen[i] = true;
                }
            }
            remaining = actuator_travel - used;
        }
        path.push(snapshot(s, frozen, used));
    }
    Ok(path)
}

/// Close the hand against per-finger contact angles.
///
/// `None` means nothing is in the finger's way; it curls to the joint limit.
pub fn close_on_profile(
    params: &HandParams,
    profile: [Option<f64>; 3],
    actuator_travel: f64,
) -> Result<GraspResult> {
    let path = closure_path(params, profile, actuator_travel)?;
    let (plate, frozen) = *path.last().expect("closure path is never empty");
    let finger_angles: [f64; 3] =
        std::array::from_fn(|i| plate.vertex_displacements[i] / (3.0 * params.joint_pulley_radius));
    let contacted: [bool; 3] = std::array::from_fn(|i| frozen[i] && profile[i].is_some());
    let success =
        (0..3).all(|i| contacted[i] || (finger_angles[i] - params.joint_limit).abs() <= ANGLE_TOL);
    Ok(GraspResult {
        finger_angles,
        contacted,
        actuator_travel_used: plate.actuator_displacement,
        success,
        plate,
    })
}

/// Actuator travel that closes every finger fully to the joint limit.
pub fn full_closure_travel(params: &HandParams) -> f64 {
    vertex_travel(params, params.joint_limit)
}

/// Diameter of the circle circumscribing a square column of the given side.
pub fn square_column_opening(side: f64) -> f64 {
    side * std::f64::consts::SQRT_2
}

/// Finger joint angle at which the curled finger touches a cylinder.
///
/// A finger with equal joint angles traces part of a regular polygon whose
/// inscribed radius shrinks as `1/tan(θ/2)`; the curve is normalized so the
/// fully closed hand (`joint_limit`) wraps `closed_grip_diameter`.
pub fn contact_angle_for_diameter(params: &HandParams, diameter: f64) -> Result<f64> {
    positive("diameter", diameter)?;
    let half = (params.joint_limit / 2.0).tan() * params.closed_grip_diameter / diameter;
    Ok((2.0 * half.atan()).min(params.joint_limit))
}

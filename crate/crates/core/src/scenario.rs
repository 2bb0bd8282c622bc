//! Scenario documents: JSON configs, validation and the bundled references.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight_controller::{ControllerThresholds, PidGains};
use crate::rigid_body_sim::{BeamConstraint, InertialParams};
use crate::rotor_allocation::{RotorGeometry, N_ROTORS};
use crate::tendon_hand::{self, HandParams};

pub use crate::log::{EpisodeLog, EpisodeSummary, LogRow};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 4] = [
    ("hover", include_str!("../scenarios/hover.json")),
    (
        "perch_cylinder",
        include_str!("../scenarios/perch_cylinder.json"),
    ),
    (
        "perch_square",
        include_str!("../scenarios/perch_square.json"),
    ),
    (
        "hang_load_sweep",
        include_str!("../scenarios/hang_load_sweep.json"),
    ),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    SchemaVersion(u32),
    #[error("no scenario file or bundled scenario named `{0}`")]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorConfig {
    pub positions: [[f64; 3]; N_ROTORS],
    /// Rotor-module frames as roll, pitch, yaw (rad) about the CoG axes.
    pub frames_rpy: [[f64; 3]; N_ROTORS],
    pub spin_dirs: [f64; N_ROTORS],
    pub counter_torque_coeff: f64,
    pub max_thrust: f64,
}

impl RotorConfig {
    pub fn from_geometry(g: &RotorGeometry) -> Self {
        Self {
            positions: g.positions.map(|p| [p.x, p.y, p.z]),
            frames_rpy: g.frames.map(|f| {
                let (r, p, y) = f.euler_angles();
                [r, p, y]
            }),
            spin_dirs: g.spin_dirs,
            counter_torque_coeff: g.counter_torque_coeff,
            max_thrust: g.max_thrust,
        }
    }

    pub fn geometry(&self) -> Result<RotorGeometry, ScenarioError> {
        RotorGeometry::new(
            self.positions.map(Vector3::from),
            self.frames_rpy
                .map(|[r, p, y]| Rotation3::from_euler_angles(r, p, y)),
            self.spin_dirs,
            self.counter_torque_coeff,
            self.max_thrust,
        )
        .map_err(invalid)
    }
}

impl Default for RotorConfig {
    fn default() -> Self {
        Self::from_geometry(&RotorGeometry::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertialConfig {
    pub mass: f64,
    /// Row-major inertia about the CoG (kg·m²).
    pub inertia: [[f64; 3]; 3],
}

impl InertialConfig {
    pub fn params(&self) -> InertialParams {
        let i = &self.inertia;
        InertialParams {
            mass: self.mass,
            inertia: Matrix3::new(
                i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2],
            ),
        }
    }
}

impl Default for InertialConfig {
    fn default() -> Self {
        let p = InertialParams::default();
        let m = p.inertia;
        Self {
            mass: p.mass,
            inertia: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub landing_speed: f64,
    pub landing_angular_speed: f64,
    pub landing_hold: f64,
    pub detach_pitch: f64,
    pub takeoff_ramp: f64,
    /// Hand-to-beam-line distance that counts as capture (m).
    pub capture_radius: f64,
    /// Hand speed below which capture is allowed (m/s).
    pub capture_speed: f64,
}

impl Thresholds {
    pub fn controller(&self) -> ControllerThresholds {
        ControllerThresholds {
            landing_speed: self.landing_speed,
            landing_angular_speed: self.landing_angular_speed,
            landing_hold: self.landing_hold,
            detach_pitch: self.detach_pitch,
            takeoff_ramp: self.takeoff_ramp,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        let c = ControllerThresholds::default();
        Self {
            landing_speed: c.landing_speed,
            landing_angular_speed: c.landing_angular_speed,
            landing_hold: c.landing_hold,
            detach_pitch: c.detach_pitch,
            takeoff_ramp: c.takeoff_ramp,
            capture_radius: 0.05,
            capture_speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BeamShape {
    Cylinder {
        diameter: f64,
    },
    /// Square column; the hand opens for its circumscribed circle.
    Square {
        side: f64,
    },
}

impl BeamShape {
    /// Diameter the fingers are set for.
    pub fn opening(&self) -> f64 {
        match *self {
            BeamShape::Cylinder { diameter } => diameter,
            BeamShape::Square { side } => tendon_hand::square_column_opening(side),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub axis: [f64; 3],
    pub point: [f64; 3],
    pub shape: BeamShape,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_damping() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub dt: f64,
    pub control_period_steps: u32,
    pub t_end: f64,
    /// Time kept running after DETACHED before the episode ends (s).
    pub settle_time: f64,
}

impl Timing {
    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_period_steps as f64
    }
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            control_period_steps: 10,
            t_end: 30.0,
            settle_time: 4.0,
        }
    }
}

/// Position and roll / nose-up pitch / yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mission {
    /// Fly from `start` to `target` and hold.
    Hover { start: Pose, target: Pose },
    /// Approach the beam, perch, hang, then take off again.
    Perch {
        start: Pose,
        /// Time of the approach command (s).
        approach_start: f64,
        approach_duration: f64,
        /// Nose-up pitch at which the hand meets the beam (rad).
        approach_pitch: f64,
        /// Time to swing the setpoint from the capture pitch down to the hang (s).
        swing_duration: f64,
        /// Hang time before the takeoff command (s).
        takeoff_delay: f64,
        /// Time to swing the setpoint from the hang back to level (s).
        takeoff_duration: f64,
    },
    /// Start hanging from the beam with thrust off and the given swing angle.
    HangLoad { initial_swing: f64 },
}

impl Mission {
    pub fn kind(&self) -> &'static str {
        match self {
            Mission::Hover { .. } => "hover",
            Mission::Perch { .. } => "perch",
            Mission::HangLoad { .. } => "hang_load",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Hover: position error allowed after `hover_settle_time` (m).
    pub hover_position: f64,
    pub hover_settle_time: f64,
    /// Perch: distance of the hang pitch from 90° (deg).
    pub hang_pitch_deg: f64,
    /// Perch: final |pitch| (deg).
    pub final_pitch_deg: f64,
    /// Perch: final distance from the detachment target (m).
    pub final_position: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hover_position: 0.01,
            hover_settle_time: 3.0,
            hang_pitch_deg: 2.0,
            final_pitch_deg: 1.0,
            final_position: 0.02,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_hang_distance() -> f64 {
    0.35
}

fn default_payload_increment() -> f64 {
    2.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    /// Episodes are always deterministic; kept in the document for clarity.
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default)]
    pub hand: HandParams,
    #[serde(default)]
    pub rotors: RotorConfig,
    #[serde(default)]
    pub inertial: InertialConfig,
    #[serde(default)]
    pub gains: PidGains,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub beam: BeamConfig,
    /// Grip point to CoG distance (m).
    #[serde(default = "default_hang_distance")]
    pub hang_distance: f64,
    #[serde(default)]
    pub timing: Timing,
    pub mission: Mission,
    /// Extra mass rigidly attached at the CoG (kg).
    #[serde(default)]
    pub payload: f64,
    /// Payload step between sweep episodes (kg).
    #[serde(default = "default_payload_increment")]
    pub payload_increment: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let src = bundled_source(name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
        Self::from_json(src)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Resolve `name_or_path` as a file path, then as `<name>.json` in `config_dir`,
    /// then as a bundled scenario name.
    pub fn resolve(name_or_path: &str, config_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let direct = Path::new(name_or_path);
        if direct.is_file() {
            return Self::from_file(direct);
        }
        if let Some(dir) = config_dir {
            for candidate in [
                dir.join(name_or_path),
                dir.join(format!("{name_or_path}.json")),
            ] {
                if candidate.is_file() {
                    return Self::from_file(&candidate);
                }
            }
        }
        Self::bundled(name_or_path)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(self.schema_version));
        }
        if !self.deterministic {
            return Err(invalid("`deterministic` must be true"));
        }
        self.hand.validate().map_err(invalid)?;
        self.rotors.geometry()?;
        self.inertial_params(0.0).validate().map_err(invalid)?;
        self.gains.validate().map_err(invalid)?;
        let th = &self.thresholds;
        for (name, v) in [
            ("landing_speed", th.landing_speed),
            ("landing_angular_speed", th.landing_angular_speed),
            ("detach_pitch", th.detach_pitch),
            ("capture_radius", th.capture_radius),
            ("capture_speed", th.capture_speed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("threshold {name} = {v} must be positive")));
            }
        }
        for (name, v) in [
            ("landing_hold", th.landing_hold),
            ("takeoff_ramp", th.takeoff_ramp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!(
                    "threshold {name} = {v} must be non-negative"
                )));
            }
        }
        let opening = self.beam.shape.opening();
        if !(opening.is_finite() && opening > 0.0) {
            return Err(invalid(format!("beam opening {opening} must be positive")));
        }
        self.beam_constraint().map_err(invalid)?;
        let t = &self.timing;
        if !(t.dt.is_finite() && t.dt > 0.0) || t.control_period_steps == 0 {
            return Err(invalid("dt and control_period_steps must be positive"));
        }
        if !(t.t_end.is_finite() && t.t_end > 0.0 && t.settle_time >= 0.0) {
            return Err(invalid(
                "t_end must be positive and settle_time non-negative",
            ));
        }
        if !(self.payload.is_finite() && self.payload >= 0.0) {
            return Err(invalid(format!(
                "payload {} must be non-negative",
                self.payload
            )));
        }
        if !(self.payload_increment.is_finite() && self.payload_increment >= 0.0) {
            return Err(invalid("payload_increment must be non-negative"));
        }
        if let Mission::Perch {
            approach_start,
            approach_duration,
            approach_pitch,
            swing_duration,
            takeoff_delay,
            takeoff_duration,
            ..
        } = self.mission
        {
            if !(approach_start >= 0.0
                && approach_duration > 0.0
                && swing_duration >= 0.0
                && takeoff_delay >= 0.0
                && takeoff_duration >= 0.0)
            {
                return Err(invalid(
                    "perch timings must be non-negative with a positive approach",
                ));
            }
            if !(approach_pitch.abs() < std::f64::consts::FRAC_PI_2) {
                return Err(invalid("approach pitch must lie strictly inside ±90°"));
            }
        }
        Ok(())
    }

    /// Plant inertial parameters with extra `payload` at the CoG.
    pub fn inertial_params(&self, payload: f64) -> InertialParams {
        let mut p = self.inertial.params();
        p.mass += payload;
        p
    }

    pub fn beam_constraint(&self) -> Result<BeamConstraint, crate::rigid_body_sim::SimError> {
        BeamConstraint::new(
            Vector3::from(self.beam.axis),
            Vector3::from(self.beam.point),
            self.beam.shape.opening() / 2.0,
            self.hang_distance,
            self.beam.damping,
        )
    }

    /// Finger contact angle set for the beam opening.
    pub fn finger_contact_angle(&self) -> Result<f64, tendon_hand::HandError> {
        tendon_hand::contact_angle_for_diameter(&self.hand, self.beam.shape.opening())
    }

    /// Copy with the payload of sweep episode `k`.
    pub fn with_sweep_payload(&self, k: usize) -> Self {
        let mut c = self.clone();
        c.payload = self.payload + k as f64 * self.payload_increment;
        c.name = format!("{}#{k}", self.name);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bundled_scenarios_parse_and_round_trip() {
        for name in bundled_names() {
            let c = ScenarioConfig::bundled(name).unwrap();
            assert_eq!(c.name, name);
            let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn square_uses_circumscribed_circle() {
        let c = ScenarioConfig::bundled("perch_square").unwrap();
        assert_relative_eq!(
            c.beam.shape.opening(),
            0.028284271247461905,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rotor_config_round_trips_geometry() {
        let g = RotorGeometry::default();
        let back = RotorConfig::from_geometry(&g).geometry().unwrap();
        for i in 0..N_ROTORS {
            assert!((back.frames[i].matrix() - g.frames[i].matrix()).amax() < 1e-15);
            assert_eq!(back.positions[i], g.positions[i]);
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let good = ScenarioConfig::bundled("hover").unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&good.to_json()).unwrap();
        v["schema_version"] = 2.into();
        assert!(matches!(
            ScenarioConfig::from_json(&v.to_string()),
            Err(ScenarioError::SchemaVersion(2))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&good.to_json()).unwrap();
        v["beam"]["shape"] = serde_json::json!({"kind": "hexagon", "side": 0.02});
        assert!(matches!(
            ScenarioConfig::from_json(&v.to_string()),
            Err(ScenarioError::Parse(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&good.to_json()).unwrap();
        v["inertial"]["mass"] = (-1.0).into();
        assert!(matches!(
            ScenarioConfig::from_json(&v.to_string()),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(ScenarioConfig::from_json("{ not json").is_err());
    }

    #[test]
    fn unknown_name_is_reported() {
        assert!(matches!(
            ScenarioConfig::resolve("no_such_scenario", None),
            Err(ScenarioError::Unknown(_))
        ));
    }
}

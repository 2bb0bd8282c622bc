//! Episode records and the CSV / summary formats written by the CLI.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::flight_controller::{PerchPhase, PhaseTransition};
use crate::rotor_allocation::{ThrustCommand, WrenchVector};
use crate::tendon_hand::{CapacityRow, GraspResult};

pub const EPISODE_HEADER: [&str; 20] = [
    "t",
    "x",
    "y",
    "z",
    "roll",
    "pitch",
    "yaw",
    "phase",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "beta1",
    "beta2",
    "beta3",
    "beta4",
    "target_x",
    "target_y",
    "target_z",
    "target_pitch",
];

pub const CAPACITY_HEADER: [&str; 3] = ["alpha_rad", "regime", "m_max_kg"];
pub const HAND_CLOSE_HEADER: [&str; 3] = ["finger", "theta_rad", "contacted"];
pub const ALLOCATION_HEADER: [&str; 3] = ["rotor", "lambda_N", "beta_rad"];

/// Format with 9 significant digits, `%g` style.
pub fn fmt_sig(value: f64) -> String {
    const DIGITS: i32 = 9;
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if (-5..DIGITS).contains(&exponent) {
        let decimals = (DIGITS - 1 - exponent).max(0) as usize;
        let s = format!("{value:.decimals$}");
        // rounding may have carried into a new digit; that is still ≤ 9 digits
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        let s = format!("{value:.8e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    }
}

/// One control-rate sample of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub phase: PerchPhase,
    pub thrust: ThrustCommand,
    pub target_position: Vector3<f64>,
    pub target_pitch: f64,
    /// Wrench asked of the allocator at this sample.
    pub commanded: WrenchVector,
    /// Whether the following physics steps ran the pinned pendulum model.
    pub attached: bool,
    pub saturated: bool,
}

impl LogRow {
    fn record(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(EPISODE_HEADER.len());
        for v in [
            self.t,
            self.position.x,
            self.position.y,
            self.position.z,
            self.roll,
            self.pitch,
            self.yaw,
        ] {
            out.push(fmt_sig(v));
        }
        out.push(self.phase.as_str().to_string());
        out.extend(self.thrust.rotors.iter().map(|r| fmt_sig(r.magnitude)));
        out.extend(self.thrust.rotors.iter().map(|r| fmt_sig(r.gimbal)));
        for v in [
            self.target_position.x,
            self.target_position.y,
            self.target_position.z,
            self.target_pitch,
        ] {
            out.push(fmt_sig(v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseStamp {
    pub phase: PerchPhase,
    pub time: f64,
    pub trigger: String,
}

impl From<&PhaseTransition> for PhaseStamp {
    fn from(t: &PhaseTransition) -> Self {
        Self {
            phase: t.to,
            time: t.time,
            trigger: t.trigger.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.to_string(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub mission: String,
    pub payload_kg: f64,
    pub end_time: f64,
    pub final_phase: Option<PerchPhase>,
    pub phases: Vec<PhaseStamp>,
    /// Nose-up pitch when the landing trigger cut the thrust (deg).
    pub hang_pitch_deg: Option<f64>,
    /// Largest swing angle seen while hanging with thrust cut (deg).
    pub max_swing_amplitude_deg: Option<f64>,
    pub detachment_target: Option<[f64; 3]>,
    pub final_target: [f64; 3],
    pub final_position: [f64; 3],
    pub final_position_error_m: f64,
    pub final_pitch_deg: f64,
    /// Largest force carried by the hand while attached, in kg-equivalent.
    pub peak_grip_load_kg: f64,
    pub grip_capacity_kg: f64,
    pub saturated_samples: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    pub transitions: Vec<PhaseTransition>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn visited_phases(&self) -> Vec<PerchPhase> {
        self.transitions.iter().map(|t| t.to).collect()
    }

    pub fn transition_time(&self, phase: PerchPhase) -> Option<f64> {
        self.transitions
            .iter()
            .find(|t| t.to == phase)
            .map(|t| t.time)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(EPISODE_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is serializable")
    }
}

pub fn write_capacity_csv<W: Write>(rows: &[CapacityRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CAPACITY_HEADER)?;
    for row in rows {
        w.write_record([
            fmt_sig(row.alpha),
            row.regime.to_string(),
            fmt_sig(row.max_mass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hand_close_csv<W: Write>(result: &GraspResult, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HAND_CLOSE_HEADER)?;
    for i in 0..3 {
        w.write_record([
            (i + 1).to_string(),
            fmt_sig(result.finger_angles[i]),
            result.contacted[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_allocation_csv<W: Write>(command: &ThrustCommand, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ALLOCATION_HEADER)?;
    for (i, r) in command.rotors.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_sig(r.magnitude), fmt_sig(r.gimbal)])?;
    }
    w.flush()?;
    Ok(())
}

//! Attitude conventions shared by the controller, simulator and logs.
//!
//! World frame is z-up. Orientation is `Rz(yaw)·Ry(θ)·Rx(roll)` with `θ` the
//! right-handed rotation about body y, which tips the nose *down*. Logs and
//! targets use the nose-up elevation `pitch = −θ`, so a robot hanging under
//! the beam with the hand on its nose reads +90°. The hand sits on the body
//! x axis, whose world direction is `(cosθ cosψ, cosθ sinψ, −sinθ)`.

use nalgebra::{UnitQuaternion, Vector3};

/// Orientation from roll, nose-up pitch and yaw (rad).
pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(roll, -pitch, yaw)
}

/// `(roll, pitch, yaw)` with nose-up pitch.
pub fn to_rpy(q: &UnitQuaternion<f64>) -> (f64, f64, f64) {
    let (roll, theta, yaw) = q.euler_angles();
    (roll, -theta, yaw)
}

/// Nose-up pitch from the elevation of the body x axis; stays well defined
/// near ±90° where the Euler extraction degenerates.
pub fn elevation(q: &UnitQuaternion<f64>) -> f64 {
    let x = q * Vector3::x();
    x.z.clamp(-1.0, 1.0).asin()
}

/// Heading `ψ` of the body and its right-handed pitch `θ`, read from the body
/// axes so that the hand direction is `(cosθ cosψ, cosθ sinψ, −sinθ)` even
/// when the body x axis is vertical.
pub fn swing_angles(q: &UnitQuaternion<f64>) -> (f64, f64) {
    let x = q * Vector3::x();
    let y = q * Vector3::y();
    let yaw = (-y.x).atan2(y.y);
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let theta = (-x.z).atan2(x.dot(&heading));
    (theta, yaw)
}

/// Small-angle rotation taking `current` onto `desired`, in the body frame.
pub fn rotation_error(
    current: &UnitQuaternion<f64>,
    desired: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    (current.inverse() * desired).scaled_axis()
}

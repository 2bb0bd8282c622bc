use nalgebra::Vector3;

use super::{BeamConstraint, BodyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    /// Hand origin reached the beam line slowly enough to close on it.
    Capture,
    /// Fingers were commanded open while attached.
    Release,
}

/// Geometric triggers for attaching to and letting go of the beam.
///
/// Capture latches: it fires at most once per detector.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDetector {
    pub capture_radius: f64,
    pub capture_speed: f64,
    /// Hand origin in the body frame.
    pub hand_offset: Vector3<f64>,
    captured: bool,
}

impl EventDetector {
    pub fn new(capture_radius: f64, capture_speed: f64, hand_offset: Vector3<f64>) -> Self {
        Self {
            capture_radius,
            capture_speed,
            hand_offset,
            captured: false,
        }
    }

    pub fn has_captured(&self) -> bool {
        self.captured
    }

    pub fn detect(
        &mut self,
        state: &BodyState,
        constraint: &BeamConstraint,
        fingers_open_commanded: bool,
    ) -> Vec<SimEvent> {
        let events = detect_events(
            state,
            constraint,
            &self.hand_offset,
            self.capture_radius,
            self.capture_speed,
            fingers_open_commanded,
        );
        events
            .into_iter()
            .filter(|e| match e {
                SimEvent::Capture if self.captured => false,
                SimEvent::Capture => {
                    self.captured = true;
                    true
                }
                SimEvent::Release => true,
            })
            .collect()
    }
}

/// Stateless event check; see [`EventDetector`] for the latched version.
pub fn detect_events(
    state: &BodyState,
    constraint: &BeamConstraint,
    hand_offset: &Vector3<f64>,
    capture_radius: f64,
    capture_speed: f64,
    fingers_open_commanded: bool,
) -> Vec<SimEvent> {
    let mut events = Vec::new();
    if constraint.attached {
        if fingers_open_commanded {
            events.push(SimEvent::Release);
        }
    } else {
        let hand = state.body_point(hand_offset);
        let hand_velocity =
            state.velocity + state.orientation * state.angular_velocity.cross(hand_offset);
        if constraint.distance_to_line(&hand) <= capture_radius
            && hand_velocity.norm() < capture_speed
        {
            events.push(SimEvent::Capture);
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn beam() -> BeamConstraint {
        BeamConstraint::new(Vector3::y(), Vector3::new(0.0, 0.0, 2.0), 0.012, 0.35, 0.05).unwrap()
    }

    fn hand() -> Vector3<f64> {
        Vector3::new(0.35, 0.0, 0.0)
    }

    #[test]
    fn far_from_beam_is_quiet() {
        let s = BodyState::at_rest(Vector3::new(-1.35, 0.0, 2.0), UnitQuaternion::identity());
        assert!(detect_events(&s, &beam(), &hand(), 0.05, 1.0, false).is_empty());
    }

    #[test]
    fn slow_hand_on_beam_captures() {
        let mut s = BodyState::at_rest(Vector3::new(-0.35, 3.0, 2.0), UnitQuaternion::identity());
        s.velocity = Vector3::new(0.2, 0.0, 0.0);
        assert_eq!(
            detect_events(&s, &beam(), &hand(), 0.05, 1.0, false),
            vec![SimEvent::Capture]
        );
        s.velocity = Vector3::new(2.0, 0.0, 0.0);
        assert!(detect_events(&s, &beam(), &hand(), 0.05, 1.0, false).is_empty());
    }

    #[test]
    fn capture_latches() {
        let s = BodyState::at_rest(Vector3::new(-0.35, 0.0, 2.0), UnitQuaternion::identity());
        let mut det = EventDetector::new(0.05, 1.0, hand());
        let b = beam();
        assert_eq!(det.detect(&s, &b, false), vec![SimEvent::Capture]);
        for _ in 0..10 {
            assert!(det.detect(&s, &b, false).is_empty());
        }
    }

    #[test]
    fn release_only_while_attached() {
        let s = BodyState::at_rest(Vector3::new(-0.35, 0.0, 2.0), UnitQuaternion::identity());
        let mut b = beam();
        b.attach(s.body_point(&hand()));
        assert_eq!(
            detect_events(&s, &b, &hand(), 0.05, 1.0, true),
            vec![SimEvent::Release]
        );
        assert!(detect_events(&s, &b, &hand(), 0.05, 1.0, false).is_empty());
    }
}

use approx::assert_relative_eq;
use perchsim::flight_controller::PerchPhase;
use perchsim::rigid_body_sim::{run_episode, EpisodeError};
use perchsim::scenario::{bundled_names, Mission, ScenarioConfig};
use perchsim::tendon_hand;

fn bundled(name: &str) -> ScenarioConfig {
    ScenarioConfig::bundled(name).unwrap()
}

#[test]
fn hover_settles_within_a_centimetre() {
    let log = run_episode(&bundled("hover")).unwrap();
    let target = log.rows.last().unwrap().target_position;
    for row in log.rows.iter().filter(|r| r.t >= 3.0) {
        assert!((row.position - target).norm() < 0.01, "t = {}", row.t);
    }
    assert!(log.summary.passed);
}

#[test]
fn logs_are_well_formed() {
    for name in bundled_names() {
        let log = run_episode(&bundled(name)).unwrap();
        assert!(
            log.rows.windows(2).all(|w| w[1].t > w[0].t),
            "{name}: time not increasing"
        );
        for row in &log.rows {
            // pinned dynamics exactly while the hand holds on
            assert_eq!(
                row.attached,
                row.phase.is_attached(),
                "{name} at t = {}",
                row.t
            );
        }
        // the phase column follows the transition list
        let mut phase = log.rows[0].phase;
        let mut next = log
            .transitions
            .iter()
            .filter(|t| t.time > log.rows[0].t)
            .peekable();
        for row in &log.rows {
            while next.peek().is_some_and(|t| t.time <= row.t) {
                phase = next.next().unwrap().to;
            }
            assert_eq!(row.phase, phase, "{name} at t = {}", row.t);
        }
        let csv = String::from_utf8(log.to_csv_bytes()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x,y,z,roll,pitch,yaw,phase,lambda1,lambda2,lambda3,lambda4,beta1,beta2,beta3,beta4,target_x,target_y,target_z,target_pitch"
        );
        assert_eq!(lines.count(), log.rows.len());
    }
}

#[test]
fn perch_visits_each_phase_once_with_single_capture() {
    let log = run_episode(&bundled("perch_cylinder")).unwrap();
    assert_eq!(log.visited_phases(), PerchPhase::PERCH_CYCLE.to_vec());
    let captures = log
        .transitions
        .iter()
        .filter(|t| t.to == PerchPhase::Contact)
        .count();
    assert_eq!(captures, 1);
    // thrust is exactly zero for every hanging sample
    for row in log.rows.iter().filter(|r| r.phase == PerchPhase::Hang) {
        assert!(row.thrust.rotors.iter().all(|r| r.magnitude == 0.0));
        assert_eq!(row.commanded.to_vector().amax(), 0.0);
    }
    assert!(log.summary.passed, "{:#?}", log.summary.checks);
}

#[test]
fn square_column_opens_for_the_diagonal() {
    let config = bundled("perch_square");
    assert_relative_eq!(
        config.beam.shape.opening(),
        0.020 * 2f64.sqrt(),
        epsilon = 1e-15
    );
    let expected =
        tendon_hand::contact_angle_for_diameter(&config.hand, 0.028284271247461905).unwrap();
    assert_relative_eq!(
        config.finger_contact_angle().unwrap(),
        expected,
        epsilon = 1e-15
    );
    let log = run_episode(&config).unwrap();
    assert_eq!(log.visited_phases(), PerchPhase::PERCH_CYCLE.to_vec());
    assert!(log.summary.passed, "{:#?}", log.summary.checks);
}

#[test]
fn hanging_load_is_the_total_weight() {
    let base = bundled("hang_load_sweep");
    for k in [0, 3] {
        let config = base.with_sweep_payload(k);
        let log = run_episode(&config).unwrap();
        let mass = config.inertial.mass + config.payload;
        // a 0.2 rad swing adds a few percent of centripetal load
        assert!(log.summary.peak_grip_load_kg >= mass);
        assert!(log.summary.peak_grip_load_kg <= mass * 1.06);
        assert!(log.summary.max_swing_amplitude_deg.unwrap() <= 0.2f64.to_degrees() + 1e-6);
    }
}

#[test]
fn sweep_payload_beyond_capacity_fails_the_hold_check() {
    let base = bundled("hang_load_sweep");
    let heavy = base.with_sweep_payload(10);
    let log = run_episode(&heavy).unwrap();
    assert!(log.summary.peak_grip_load_kg > log.summary.grip_capacity_kg);
    assert!(!log.summary.passed);
}

#[test]
fn divergence_keeps_the_partial_log() {
    // a setpoint far outside the state bound with unbounded rotors
    let mut config = bundled("hover");
    config.rotors.max_thrust = 1e12;
    if let Mission::Hover { ref mut target, .. } = config.mission {
        target.position = [0.0, 0.0, 1e7];
    }
    match run_episode(&config) {
        Err(EpisodeError::Diverged { time, log, .. }) => {
            assert!(!log.rows.is_empty());
            assert!(log.rows.last().unwrap().t <= time);
            assert!(!log.summary.passed);
        }
        other => panic!("expected divergence, got {:?}", other.map(|l| l.summary)),
    }
}

//! Wrench allocation for the tilt-rotor quadrotor.
//!
//! Each rotor module can point its thrust anywhere in the xz-plane of its own
//! frame, so four rotors give eight thrust components. The map from those
//! components to the 6-D body wrench is inverted with a truncated
//! pseudo-inverse, which yields the minimum-norm thrust set.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{DMatrix, Matrix3, Matrix3x2, Rotation3, SMatrix, Vector2, Vector3, Vector6};
use thiserror::Error;

pub const N_ROTORS: usize = 4;

/// Relative singular-value cutoff used for the rank decision.
pub const RANK_CUTOFF: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("rotor index {0} out of range")]
    RotorIndex(usize),
    #[error("invalid rotor geometry: {0}")]
    Geometry(String),
    #[error("wrench map is rank deficient: rank {rank} < 6 (singular values {singular_values:?})")]
    RankDeficient {
        rank: usize,
        singular_values: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, AllocationError>;

/// Columns `e_x`, `e_z`: the thrust plane of a rotor module.
pub fn projection_b() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

/// Skew-symmetric matrix with `skew(p) * v == p × v`.
pub fn skew(p: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotorGeometry {
    /// Rotor positions in the CoG frame (m).
    pub positions: [Vector3<f64>; N_ROTORS],
    /// Rotor-module frames expressed in the CoG frame.
    pub frames: [Rotation3<f64>; N_ROTORS],
    /// Spin directions, each ±1.
    pub spin_dirs: [f64; N_ROTORS],
    /// Counter torque per unit thrust (m).
    pub counter_torque_coeff: f64,
    /// Per-rotor thrust saturation (N).
    pub max_thrust: f64,
}

impl RotorGeometry {
    pub fn new(
        positions: [Vector3<f64>; N_ROTORS],
        frames: [Rotation3<f64>; N_ROTORS],
        spin_dirs: [f64; N_ROTORS],
        counter_torque_coeff: f64,
        max_thrust: f64,
    ) -> Result<Self> {
        let geometry = Self {
            positions,
            frames,
            spin_dirs,
            counter_torque_coeff,
            max_thrust,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// X layout with each rotor's thrust plane spanned by the tangential
    /// direction and the body z axis.
    pub fn x_layout(arm_length: f64, counter_torque_coeff: f64, max_thrust: f64) -> Self {
        let positions = std::array::from_fn(|i| {
            let angle = FRAC_PI_4 + FRAC_PI_2 * i as f64;
            Vector3::new(arm_length * angle.cos(), arm_length * angle.sin(), 0.0)
        });
        let frames = std::array::from_fn(|i| {
            let angle = FRAC_PI_4 + FRAC_PI_2 * i as f64;
            Rotation3::from_axis_angle(&Vector3::z_axis(), angle + FRAC_PI_2)
        });
        Self {
            positions,
            frames,
            spin_dirs: [1.0, -1.0, 1.0, -1.0],
            counter_torque_coeff,
            max_thrust,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, frame) in self.frames.iter().enumerate() {
            let m = frame.matrix();
            let orth = (m.transpose() * m - Matrix3::identity()).amax();
            if orth > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
                return Err(AllocationError::Geometry(format!(
                    "rotor {i} frame is not a proper rotation"
                )));
            }
        }
        for (i, s) in self.spin_dirs.iter().enumerate() {
            if *s != 1.0 && *s != -1.0 {
                return Err(AllocationError::Geometry(format!(
                    "rotor {i} spin direction {s} is not ±1"
                )));
            }
        }
        if self
            .positions
            .iter()
            .any(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(AllocationError::Geometry(
                "non-finite rotor position".into(),
            ));
        }
        if !self.counter_torque_coeff.is_finite() {
            return Err(AllocationError::Geometry(
                "non-finite counter torque coefficient".into(),
            ));
        }
        if !(self.max_thrust > 0.0) {
            return Err(AllocationError::Geometry(format!(
                "max thrust {} must be positive",
                self.max_thrust
            )));
        }
        Ok(())
    }
}

impl Default for RotorGeometry {
    fn default() -> Self {
        Self::x_layout(0.3, 0.02, 8.0)
    }
}

/// Force and torque at the CoG, both in the CoG frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WrenchVector {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl WrenchVector {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            force: v.fixed_rows::<3>(0).into_owned(),
            torque: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            force: self.force * k,
            torque: self.torque * k,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.torque.iter())
            .all(|v| v.is_finite())
    }
}

/// Planar thrust of one rotor and its scalar/gimbal form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorThrust {
    /// `(λ_x, λ_z)` in the rotor frame (N).
    pub lambda: Vector2<f64>,
    pub magnitude: f64,
    /// Gimbal angle `atan2(λ_z, λ_x)` in (−π, π].
    pub gimbal: f64,
}

impl RotorThrust {
    pub fn from_lambda(lambda: Vector2<f64>) -> Self {
        Self {
            lambda,
            magnitude: lambda.norm(),
            gimbal: lambda.y.atan2(lambda.x),
        }
    }

    /// Planar thrust rebuilt from magnitude and gimbal angle.
    pub fn polar_lambda(&self) -> Vector2<f64> {
        Vector2::new(self.gimbal.cos(), self.gimbal.sin()) * self.magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustCommand {
    pub rotors: [RotorThrust; N_ROTORS],
}

impl ThrustCommand {
    pub fn zero() -> Self {
        Self::from_stacked(&SMatrix::<f64, 8, 1>::zeros())
    }

    pub fn from_stacked(lambda: &SMatrix<f64, 8, 1>) -> Self {
        Self {
            rotors: std::array::from_fn(|i| {
                RotorThrust::from_lambda(Vector2::new(lambda[2 * i], lambda[2 * i + 1]))
            }),
        }
    }

    pub fn stacked(&self) -> SMatrix<f64, 8, 1> {
        let mut out = SMatrix::<f64, 8, 1>::zeros();
        for (i, r) in self.rotors.iter().enumerate() {
            out[2 * i] = r.lambda.x;
            out[2 * i + 1] = r.lambda.y;
        }
        out
    }

    /// Scale down any rotor above `max_thrust`, keeping its gimbal angle.
    pub fn clamped(&self, max_thrust: f64) -> Self {
        Self {
            rotors: self.rotors.map(|r| {
                if r.magnitude > max_thrust {
                    RotorThrust {
                        lambda: r.lambda * (max_thrust / r.magnitude),
                        magnitude: max_thrust,
                        gimbal: r.gimbal,
                    }
                } else {
                    r
                }
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Command after saturation; equals the unconstrained solution when
    /// `saturated` is false.
    pub command: ThrustCommand,
    /// Minimum-norm solution before saturation.
    pub unconstrained: ThrustCommand,
    pub saturated: bool,
}

/// `U_i · B`: the two CoG-frame directions rotor `i` can thrust along.
pub fn effective_direction(geometry: &RotorGeometry, i: usize) -> Result<Matrix3x2<f64>> {
    let frame = geometry
        .frames
        .get(i)
        .ok_or(AllocationError::RotorIndex(i))?;
    Ok(frame.matrix() * projection_b())
}

/// The 6×12 map `Q` from stacked CoG-frame thrust vectors to the wrench.
pub fn build_wrench_map(geometry: &RotorGeometry) -> SMatrix<f64, 6, 12> {
    let mut q = SMatrix::<f64, 6, 12>::zeros();
    for i in 0..N_ROTORS {
        q.fixed_view_mut::<3, 3>(0, 3 * i)
            .copy_from(&Matrix3::identity());
        let moment = skew(&geometry.positions[i])
            - Matrix3::identity() * (geometry.counter_torque_coeff * geometry.spin_dirs[i]);
        q.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&moment);
    }
    q
}

/// `Q · diag(U'_1 … U'_4)`, the 6×8 map from planar thrusts to the wrench.
pub fn thrust_map(geometry: &RotorGeometry) -> SMatrix<f64, 6, 8> {
    let mut block = SMatrix::<f64, 12, 8>::zeros();
    for i in 0..N_ROTORS {
        let u = geometry.frames[i].matrix() * projection_b();
        block.fixed_view_mut::<3, 2>(3 * i, 2 * i).copy_from(&u);
    }
    build_wrench_map(geometry) * block
}

/// Geometry with its thrust map factored once.
#[derive(Debug, Clone)]
pub struct WrenchAllocator {
    geometry: RotorGeometry,
    map: SMatrix<f64, 6, 8>,
    pinv: SMatrix<f64, 8, 6>,
    singular_values: Vec<f64>,
    rank: usize,
}

impl WrenchAllocator {
    pub fn new(geometry: RotorGeometry) -> Result<Self> {
        geometry.validate()?;
        let map = thrust_map(&geometry);
        let dynamic = DMatrix::from_iterator(6, 8, map.iter().cloned());
        let svd = dynamic.svd(true, true);
        let sigma_max = svd.singular_values.max();
        let cutoff = RANK_CUTOFF * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let mut singular_values: Vec<f64> = svd.singular_values.iter().cloned().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let pinv_dyn = if sigma_max > 0.0 {
            svd.pseudo_inverse(cutoff)
                .map_err(|e| AllocationError::Geometry(e.to_string()))?
        } else {
            DMatrix::zeros(8, 6)
        };
        let pinv = SMatrix::<f64, 8, 6>::from_iterator(pinv_dyn.iter().cloned());
        Ok(Self {
            geometry,
            map,
            pinv,
            singular_values,
            rank,
        })
    }

    pub fn geometry(&self) -> &RotorGeometry {
        &self.geometry
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn thrust_map(&self) -> &SMatrix<f64, 6, 8> {
        &self.map
    }

    /// Minimum-norm least-squares thrusts, without the rank check.
    pub fn min_norm_thrusts(&self, wrench: &WrenchVector) -> SMatrix<f64, 8, 1> {
        self.pinv * wrench.to_vector()
    }

    pub fn allocate(&self, wrench: &WrenchVector) -> Result<Allocation> {
        if self.rank < 6 {
            return Err(AllocationError::RankDeficient {
                rank: self.rank,
                singular_values: self.singular_values.clone(),
            });
        }
        let unconstrained = ThrustCommand::from_stacked(&self.min_norm_thrusts(wrench));
        let saturated = unconstrained
            .rotors
            .iter()
            .any(|r| r.magnitude > self.geometry.max_thrust);
        Ok(Allocation {
            command: unconstrained.clamped(self.geometry.max_thrust),
            unconstrained,
            saturated,
        })
    }

    pub fn reconstruct(&self, command: &ThrustCommand) -> WrenchVector {
        WrenchVector::from_vector(&(self.map * command.stacked()))
    }
}

/// One-shot allocation; prefer [`WrenchAllocator`] inside loops.
pub fn allocate(geometry: &RotorGeometry, wrench: &WrenchVector) -> Result<Allocation> {
    WrenchAllocator::new(geometry.clone())?.allocate(wrench)
}

/// Wrench produced at the CoG by a thrust command.
pub fn reconstruct(geometry: &RotorGeometry, command: &ThrustCommand) -> WrenchVector {
    WrenchVector::from_vector(&(thrust_map(geometry) * command.stacked()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn identity_x_quad(a: f64, kappa: f64) -> RotorGeometry {
        RotorGeometry {
            positions: [
                Vector3::new(a, a, 0.0),
                Vector3::new(-a, a, 0.0),
                Vector3::new(-a, -a, 0.0),
                Vector3::new(a, -a, 0.0),
            ],
            frames: [Rotation3::identity(); 4],
            spin_dirs: [1.0, -1.0, 1.0, -1.0],
            counter_torque_coeff: kappa,
            max_thrust: 100.0,
        }
    }

    #[test]
    fn effective_direction_examples() {
        let mut g = identity_x_quad(0.2, 0.02);
        let u = effective_direction(&g, 0).unwrap();
        assert_eq!(u, Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0));
        g.frames[1] = Rotation3::from_axis_angle(&Vector3::z_axis(), PI);
        let u = effective_direction(&g, 1).unwrap();
        let expected = Matrix3x2::new(-1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((u - expected).amax() < 1e-15);
        assert_eq!(
            effective_direction(&g, 4),
            Err(AllocationError::RotorIndex(4))
        );

        g.frames[2] = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let u = effective_direction(&g, 2).unwrap();
        assert_relative_eq!(
            (u.transpose() * u - nalgebra::Matrix2::identity()).amax(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn wrench_map_examples() {
        let mut g = identity_x_quad(0.0, 0.0);
        g.positions = [Vector3::zeros(); 4];
        let q = build_wrench_map(&g);
        assert!(q.fixed_view::<3, 12>(3, 0).iter().all(|&v| v == 0.0));
        for i in 0..4 {
            assert_eq!(
                q.fixed_view::<3, 3>(0, 3 * i).into_owned(),
                Matrix3::identity()
            );
        }

        g.positions[0] = Vector3::new(1.0, 0.0, 0.0);
        let mut lam = SMatrix::<f64, 12, 1>::zeros();
        lam[2] = 1.0;
        let w = build_wrench_map(&g) * lam;
        assert_eq!(
            w.fixed_rows::<3>(3).into_owned(),
            Vector3::new(0.0, -1.0, 0.0)
        );

        let mut g = identity_x_quad(0.0, 0.02);
        g.positions = [Vector3::zeros(); 4];
        let w = build_wrench_map(&g) * lam;
        assert_relative_eq!(w[5], -0.02, epsilon = 1e-15);
    }

    #[test]
    fn identity_frames_cannot_push_sideways() {
        let alloc = WrenchAllocator::new(identity_x_quad(0.2, 0.02)).unwrap();
        assert_eq!(alloc.rank(), 5);
        let err = alloc.allocate(&WrenchVector::zero()).unwrap_err();
        assert!(matches!(
            err,
            AllocationError::RankDeficient { rank: 5, .. }
        ));
    }

    #[test]
    fn identity_frame_min_norm_examples() {
        let mg = 2.5 * 9.81;
        let alloc = WrenchAllocator::new(identity_x_quad(0.2, 0.02)).unwrap();
        let hover = ThrustCommand::from_stacked(&alloc.min_norm_thrusts(&WrenchVector::new(
            Vector3::new(0.0, 0.0, mg),
            Vector3::zeros(),
        )));
        for r in hover.rotors {
            assert_relative_eq!(r.lambda.x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(r.lambda.y, mg / 4.0, max_relative = 1e-12);
            assert_relative_eq!(r.gimbal, PI / 2.0, epsilon = 1e-12);
        }
        let f = 3.0;
        let push = ThrustCommand::from_stacked(&alloc.min_norm_thrusts(&WrenchVector::new(
            Vector3::new(f, 0.0, 0.0),
            Vector3::zeros(),
        )));
        for r in push.rotors {
            assert_relative_eq!(r.lambda.x, f / 4.0, max_relative = 1e-12);
            assert_relative_eq!(r.lambda.y, 0.0, epsilon = 1e-12);
            assert_relative_eq!(r.gimbal, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_layout_hover() {
        let mg = 2.5 * 9.81;
        let g = RotorGeometry::default();
        let alloc = WrenchAllocator::new(g.clone()).unwrap();
        assert_eq!(alloc.rank(), 6);
        let w = WrenchVector::new(Vector3::new(0.0, 0.0, mg), Vector3::zeros());
        let a = alloc.allocate(&w).unwrap();
        assert!(!a.saturated);
        for r in a.command.rotors {
            assert_relative_eq!(r.magnitude, mg / 4.0, max_relative = 1e-12);
            assert_relative_eq!(r.gimbal, PI / 2.0, epsilon = 1e-12);
        }
        let back = reconstruct(&g, &a.command);
        assert!((back.to_vector() - w.to_vector()).amax() < 1e-12);
    }

    #[test]
    fn zero_wrench_zero_thrust() {
        let a = allocate(&RotorGeometry::default(), &WrenchVector::zero()).unwrap();
        assert!(a.command.rotors.iter().all(|r| r.magnitude == 0.0));
        let w = reconstruct(&RotorGeometry::default(), &ThrustCommand::zero());
        assert_eq!(w, WrenchVector::zero());
    }

    #[test]
    fn saturation_clamps_and_flags() {
        let g = RotorGeometry::default();
        let w = WrenchVector::new(Vector3::new(0.0, 0.0, 100.0), Vector3::zeros());
        let a = allocate(&g, &w).unwrap();
        assert!(a.saturated);
        for r in a.command.rotors {
            assert_relative_eq!(r.magnitude, g.max_thrust, max_relative = 1e-12);
        }
    }

    #[test]
    fn gimbal_polar_form_round_trips() {
        let r = RotorThrust::from_lambda(Vector2::new(-1.5, -0.25));
        assert!((r.polar_lambda() - r.lambda).amax() < 1e-12);
        let r = RotorThrust::from_lambda(Vector2::new(-2.0, 0.0));
        assert_eq!(r.gimbal, PI);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let mut g = RotorGeometry::default();
        g.spin_dirs[0] = 0.5;
        assert!(WrenchAllocator::new(g).is_err());
        let g = RotorGeometry {
            max_thrust: 0.0,
            ..RotorGeometry::default()
        };
        assert!(g.validate().is_err());
    }
}

//! Frames and rotation algebra shared by the simulator, estimators and observers.
//!
//! The inertial frame is North-East-Down, so gravity is `+g` along the inertial
//! z axis. Rotations are stored as 3x3 matrices mapping body coordinates to
//! inertial coordinates (or sensor to body for the anemometer mount).

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// Unit vector along the inertial down axis (k0).
pub fn down() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Gravity vector in the NED inertial frame, m/s².
pub fn gravity_ned() -> Vec3 {
    Vec3::new(0.0, 0.0, GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameTag {
    InertialNed,
    Body,
    Sensor,
}

/// Skew-symmetric matrix such that `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; only the antisymmetric part of `m` is used.
pub fn vex(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Exponential map of so(3) via the Rodrigues formula.
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if theta2 < 1e-12 {
        // Taylor expansions of sin(θ)/θ and (1-cos θ)/θ².
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Logarithm map for a rotation matrix, returned as a rotation vector.
pub fn log_so3(m: &Mat3) -> Vec3 {
    let cos = (m.trace() - 1.0) * 0.5;
    // atan2 keeps full precision for small angles, unlike acos.
    let theta = vex(m).norm().atan2(cos);
    if theta < 1e-6 {
        return vex(m);
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part instead.
        let b = (m + Mat3::identity()) * 0.5;
        let mut axis = Vec3::new(
            b[(0, 0)].max(0.0).sqrt(),
            b[(1, 1)].max(0.0).sqrt(),
            b[(2, 2)].max(0.0).sqrt(),
        );
        if axis.x > 1e-6 {
            axis.y = axis.y.copysign(b[(0, 1)]);
            axis.z = axis.z.copysign(b[(0, 2)]);
        } else if axis.y > 1e-6 {
            axis.z = axis.z.copysign(b[(1, 2)]);
        }
        return axis.normalize() * theta;
    }
    vex(m) * (theta / theta.sin())
}

/// Orthonormal rotation matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix that is already orthonormal. The caller vouches for it;
    /// use [`Rotation::from_matrix_orthonormalized`] for anything else.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    pub fn from_matrix_orthonormalized(m: Mat3) -> Self {
        Rotation(gram_schmidt(&m))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Rotation(exp_so3(&(axis.normalize() * angle)))
    }

    pub fn from_rotation_vector(phi: &Vec3) -> Self {
        Rotation(exp_so3(phi))
    }

    /// ZYX Euler angles (yaw about down, then pitch, then roll).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let rz = exp_so3(&(down() * yaw));
        let ry = exp_so3(&(Vec3::y() * pitch));
        let rx = exp_so3(&(Vec3::x() * roll));
        Rotation(rz * ry * rx)
    }

    /// Build from a `(w, x, y, z)` quaternion; the input need not be normalized.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Rotation(gram_schmidt(uq.to_rotation_matrix().matrix()))
    }

    /// `(w, x, y, z)` with `w >= 0` so the encoding is continuous and unique.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `Rᵀ v`
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    /// One step of `Ṙ = R [ω]×` with body rate `omega` held over `dt`.
    pub fn integrate(&self, omega: &Vec3, dt: f64) -> Rotation {
        integrate_rotation(self, omega, dt)
    }

    /// Geodesic angle to `other`, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        log_so3(&(self.0.transpose() * other.0)).norm()
    }

    /// Frobenius norm of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Yaw angle of the ZYX decomposition, radians.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    /// Roll and pitch of the ZYX decomposition, radians.
    pub fn roll_pitch(&self) -> (f64, f64) {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (roll, pitch)
    }
}

/// Re-orthonormalize the columns of `m` (classical Gram-Schmidt, third column
/// rebuilt as a cross product so the result is right-handed).
pub fn gram_schmidt(m: &Mat3) -> Mat3 {
    let c0 = m.column(0).into_owned().normalize();
    let c1 = m.column(1).into_owned();
    let c1 = (c1 - c0 * c0.dot(&c1)).normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

/// `R' = R · exp([ω dt]×)`, re-orthonormalized when the result drifts by more
/// than 1e-9 in Frobenius norm.
pub fn integrate_rotation(r: &Rotation, omega: &Vec3, dt: f64) -> Rotation {
    debug_assert!(dt > 0.0, "integrate_rotation requires dt > 0");
    let next = r.0 * exp_so3(&(omega * dt));
    let rot = Rotation(next);
    if rot.orthonormality_error() > 1e-9 {
        Rotation(gram_schmidt(&next))
    } else {
        rot
    }
}

/// A vector tagged with the frame its coordinates are expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedVec {
    pub frame: FrameTag,
    pub v: Vec3,
}

/// A rotation declared for one (source, destination) frame pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub from: FrameTag,
    pub to: FrameTag,
    pub rotation: Rotation,
}

impl FrameTransform {
    pub fn new(from: FrameTag, to: FrameTag, rotation: Rotation) -> Self {
        Self { from, to, rotation }
    }

    pub fn inverse(&self) -> Self {
        Self {
            from: self.to,
            to: self.from,
            rotation: self.rotation.transpose(),
        }
    }

    /// Express `v` in the destination frame. Returns `None` when `v` is not in
    /// this transform's source frame.
    pub fn express(&self, v: &FramedVec) -> Option<FramedVec> {
        (v.frame == self.from).then(|| FramedVec {
            frame: self.to,
            v: self.rotation.apply(&v.v),
        })
    }

    /// Chain `self` (a→b) after `first` (c→a), giving c→b.
    pub fn after(&self, first: &FrameTransform) -> Option<FrameTransform> {
        (first.to == self.from).then(|| FrameTransform {
            from: first.from,
            to: self.to,
            rotation: self.rotation.compose(&first.rotation),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vec3> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn skew_basics() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(skew(&Vec3::x()) * Vec3::y(), Vec3::z());
        let v = Vec3::new(0.3, -1.2, 2.0);
        assert_eq!(skew(&v) * v, Vec3::zeros());
    }

    #[test]
    fn zero_rate_keeps_rotation() {
        let r = Rotation::from_euler(0.1, -0.2, 0.3);
        let r2 = integrate_rotation(&r, &Vec3::zeros(), 0.37);
        assert_relative_eq!(r.matrix(), r2.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_about_down() {
        let r = integrate_rotation(&Rotation::identity(), &Vec3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-12);
    }

    /// Closed-form Rodrigues rotation written out independently of `exp_so3`.
    fn rodrigues_oracle(phi: &Vec3) -> Mat3 {
        let theta = phi.norm();
        let n = phi / theta;
        let (s, c) = theta.sin_cos();
        let t = 1.0 - c;
        Mat3::new(
            c + n.x * n.x * t,
            n.x * n.y * t - n.z * s,
            n.x * n.z * t + n.y * s,
            n.y * n.x * t + n.z * s,
            c + n.y * n.y * t,
            n.y * n.z * t - n.x * s,
            n.z * n.x * t - n.y * s,
            n.z * n.y * t + n.x * s,
            c + n.z * n.z * t,
        )
    }

    #[test]
    fn many_small_steps_match_single_exponential() {
        let omega = Vec3::new(1.0, 2.0, 3.0);
        let mut r = Rotation::identity();
        for _ in 0..1000 {
            r = integrate_rotation(&r, &omega, 1e-3);
        }
        let oracle = rodrigues_oracle(&omega);
        assert!((r.matrix() - oracle).norm() < 1e-6);
    }

    #[test]
    fn million_random_steps_stay_orthonormal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut r = Rotation::identity();
        for _ in 0..1_000_000 {
            let w = Vec3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            r = integrate_rotation(&r, &w, 2.5e-3);
        }
        assert!(r.orthonormality_error() < 1e-6);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quaternion_roundtrip_and_sign() {
        let r = Rotation::from_euler(0.4, -0.3, 2.9);
        let q = r.to_quaternion();
        assert!(q[0] >= 0.0);
        let back = Rotation::from_quaternion(q);
        assert!(r.angle_to(&back) < 1e-12);
    }

    #[test]
    fn log_near_pi() {
        let r = Rotation::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), std::f64::consts::PI - 1e-9);
        let phi = log_so3(r.matrix());
        assert_relative_eq!(exp_so3(&phi), *r.matrix(), epsilon = 1e-7);
    }

    #[test]
    fn frame_transforms_check_pairs() {
        let r0 = FrameTransform::new(FrameTag::Sensor, FrameTag::Body, Rotation::from_euler(0.0, 0.0, 0.5));
        let r = FrameTransform::new(FrameTag::Body, FrameTag::InertialNed, Rotation::from_euler(0.1, 0.0, 0.0));
        let v = FramedVec { frame: FrameTag::Sensor, v: Vec3::x() };
        assert!(r.express(&v).is_none());
        let chained = r.after(&r0).unwrap();
        let direct = r.express(&r0.express(&v).unwrap()).unwrap();
        assert_relative_eq!(chained.express(&v).unwrap().v, direct.v, epsilon = 1e-15);
        assert!(r0.after(&r).is_none());
        assert_eq!(r.inverse().from, FrameTag::InertialNed);
    }

    proptest! {
        #[test]
        fn skew_is_cross_product(v in arb_vec(10.0), w in arb_vec(10.0)) {
            let lhs = skew(&v) * w;
            let rhs = v.cross(&w);
            prop_assert!((lhs - rhs).norm() < 1e-12);
            prop_assert_eq!(skew(&v).transpose(), -skew(&v));
        }

        #[test]
        fn skew_is_linear(u in arb_vec(5.0), v in arb_vec(5.0), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let lhs = skew(&(u * a + v * b));
            let rhs = skew(&u) * a + skew(&v) * b;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn exp_log_roundtrip(phi in arb_vec(3.0)) {
            prop_assume!(phi.norm() < 3.1);
            let m = exp_so3(&phi);
            prop_assert!((log_so3(&m) - phi).norm() < 1e-9);
            prop_assert!((m.transpose() * m - Mat3::identity()).norm() < 1e-12);
        }
    }
}

//! Rigid-body pose algebra: vectors, canonical unit quaternions, poses and
//! the world-frame relative-motion delta used by the teleoperation law.
//!
//! Quaternions use the Hamilton convention with components ordered
//! `(w, x, y, z)`. `a * b` is the rotation that applies `b` first, then `a`.
//! Every constructor renormalizes and canonicalizes to the `w >= 0`
//! hemisphere, so two equal rotations always have equal components.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Tolerance accepted when deserializing a quaternion that should already be unit length.
pub const QUAT_INGEST_TOLERANCE: f64 = 1e-6;

/// Norm error below which components are already unit length up to rounding
/// and are kept bit-for-bit instead of being divided by the norm.
const UNIT_SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        if n > f64::EPSILON && n.is_finite() {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Linear interpolation that is exact at both endpoints.
    pub fn lerp(&self, other: &Vec3, s: f64) -> Vec3 {
        *self * (1.0 - s) + *other * s
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// Raw quaternion components as they appear on the wire or in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuatComponents {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl QuatComponents {
    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("quaternion norm {norm} is not within {QUAT_INGEST_TOLERANCE} of 1")]
pub struct NotUnitQuaternion {
    pub norm: f64,
}

/// Rotation stored as a canonical unit quaternion.
///
/// Invariants: `|norm - 1| < 1e-9` and `w >= 0`. When `w == 0` the first
/// non-zero vector component is positive, so the representation is unique.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "QuatComponents", try_from = "QuatComponents")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes arbitrary components. Returns `None` for zero or non-finite input.
    /// Components already unit length up to rounding are kept as they are.
    pub fn from_components(w: f64, x: f64, y: f64, z: f64) -> Option<UnitQuat> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n <= f64::EPSILON {
            return None;
        }
        if (n - 1.0).abs() <= UNIT_SLACK {
            return Some(Self::canonical(w, x, y, z));
        }
        Some(Self::canonical(w / n, x / n, y / n, z / n))
    }

    /// Accepts components already within [`QUAT_INGEST_TOLERANCE`] of unit
    /// length. Components whose norm is 1 up to rounding are kept bit-for-bit;
    /// anything further off is renormalized.
    pub fn from_near_unit(c: QuatComponents) -> Result<UnitQuat, NotUnitQuaternion> {
        let norm = c.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUAT_INGEST_TOLERANCE {
            return Err(NotUnitQuaternion { norm });
        }
        if (norm - 1.0).abs() <= UNIT_SLACK {
            Ok(Self::canonical(c.w, c.x, c.y, c.z))
        } else {
            Ok(Self::canonical(c.w / norm, c.x / norm, c.y / norm, c.z / norm))
        }
    }

    /// Rotation of `angle` radians about `axis` (right-hand rule). A zero axis yields identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> UnitQuat {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                Self::canonical(c, a.x * s, a.y * s, a.z * s)
            }
            None => UnitQuat::IDENTITY,
        }
    }

    /// Rotation about the base z axis.
    pub fn from_yaw(angle: f64) -> UnitQuat {
        Self::from_axis_angle(Vec3::Z, angle)
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> UnitQuat {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        let s = if flip { -1.0 } else { 1.0 };
        // adding 0.0 turns -0.0 into +0.0
        UnitQuat {
            w: s * w + 0.0,
            x: s * x + 0.0,
            y: s * y + 0.0,
            z: s * z + 0.0,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> QuatComponents {
        QuatComponents {
            w: self.w,
            x: self.x,
            y: self.y,
            z: self.z,
        }
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        self.components().norm()
    }

    /// Hamilton product `self ⊗ rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &UnitQuat) -> UnitQuat {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        // product of unit quaternions is never near zero
        Self::from_components(w, x, y, z).unwrap_or(UnitQuat::IDENTITY)
    }

    pub fn inverse(&self) -> UnitQuat {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = self.vector_part();
        let t = u.cross(&v) * 2.0;
        v + t * self.w + u.cross(&t)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector_part().norm().atan2(self.w)
    }

    /// Unit rotation axis, or `None` for the identity.
    pub fn axis(&self) -> Option<Vec3> {
        self.vector_part().normalized()
    }

    /// Geodesic angle between two orientations, in `[0, π]`.
    pub fn angle_to(&self, other: &UnitQuat) -> f64 {
        other.compose(&self.inverse()).angle()
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        self.compose(&rhs)
    }
}

impl From<UnitQuat> for QuatComponents {
    fn from(q: UnitQuat) -> Self {
        q.components()
    }
}

impl TryFrom<QuatComponents> for UnitQuat {
    type Error = NotUnitQuaternion;
    fn try_from(c: QuatComponents) -> Result<Self, Self::Error> {
        UnitQuat::from_near_unit(c)
    }
}

pub fn quat_mul(a: &UnitQuat, b: &UnitQuat) -> UnitQuat {
    a.compose(b)
}

pub fn quat_inverse(q: &UnitQuat) -> UnitQuat {
    q.inverse()
}

pub fn quat_rotate(q: &UnitQuat, v: Vec3) -> Vec3 {
    q.rotate(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vec3::ZERO,
        orientation: UnitQuat::IDENTITY,
    };

    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self::new(position, UnitQuat::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = &self.orientation;
        write!(
            f,
            "p={} q=({:.4}, {:.4}, {:.4}, {:.4})",
            self.position, q.w, q.x, q.y, q.z
        )
    }
}

/// Motion between two controller samples, expressed in the fixed base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseDelta {
    pub translation: Vec3,
    pub rotation: UnitQuat,
}

impl PoseDelta {
    pub const ZERO: PoseDelta = PoseDelta {
        translation: Vec3::ZERO,
        rotation: UnitQuat::IDENTITY,
    };
}

/// World-frame motion from `anchor` to `current`, mapped into the robot base
/// frame by `alignment`.
///
/// The anchor's own orientation never rotates the translation, so equal
/// world displacements give equal deltas wherever the controller started.
pub fn relative_delta(anchor: &Pose, current: &Pose, alignment: &UnitQuat) -> PoseDelta {
    let translation = alignment.rotate(current.position - anchor.position);
    let world_rotation = current.orientation.compose(&anchor.orientation.inverse());
    let rotation = alignment.compose(&world_rotation).compose(&alignment.inverse());
    PoseDelta {
        translation,
        rotation,
    }
}

/// Applies a delta to the end-effector anchor. `gain` scales translation only.
pub fn apply_delta(ee_anchor: &Pose, delta: &PoseDelta, gain: f64) -> Pose {
    Pose {
        position: ee_anchor.position + delta.translation * gain,
        orientation: delta.rotation.compose(&ee_anchor.orientation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() <= tol, "{a} != {b}");
    }

    fn assert_quat_close(a: &UnitQuat, b: &UnitQuat, tol: f64) {
        let d = [a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z];
        assert!(d.iter().all(|v| v.abs() <= tol), "{a:?} != {b:?}");
    }

    #[test]
    fn identity_product() {
        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 0.7);
        assert_quat_close(&quat_mul(&UnitQuat::IDENTITY, &q), &q, 1e-15);
        assert_quat_close(&quat_mul(&q, &UnitQuat::IDENTITY), &q, 1e-15);
    }

    #[test]
    fn quarter_turns_about_z_add_up() {
        let q = UnitQuat::from_yaw(FRAC_PI_2);
        let r = quat_mul(&q, &q);
        assert!(r.w().abs() < 1e-15);
        assert!((r.z() - 1.0).abs() < 1e-15);
        assert_eq!(r.x(), 0.0);
        assert_eq!(r.y(), 0.0);
    }

    #[test]
    fn canonical_form_is_unique() {
        let a = UnitQuat::from_components(-0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(a.w() > 0.0);
        let b = UnitQuat::from_components(0.0, 0.0, -1.0, 0.0).unwrap();
        assert_eq!(b.components(), QuatComponents { w: 0.0, x: 0.0, y: 1.0, z: 0.0 });
        let c = UnitQuat::from_components(-0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(c.w().is_sign_positive());
    }

    #[test]
    fn zero_components_rejected() {
        assert!(UnitQuat::from_components(0.0, 0.0, 0.0, 0.0).is_none());
        assert!(UnitQuat::from_components(f64::NAN, 0.0, 0.0, 1.0).is_none());
    }

    #[test]
    fn inverse_of_single_axis_rotation() {
        assert_eq!(quat_inverse(&UnitQuat::IDENTITY), UnitQuat::IDENTITY);
        let q = UnitQuat::from_axis_angle(Vec3::X, FRAC_PI_2);
        assert_quat_close(
            &quat_inverse(&q),
            &UnitQuat::from_axis_angle(Vec3::X, -FRAC_PI_2),
            1e-15,
        );
    }

    #[test]
    fn rotate_quarter_turn() {
        assert_eq!(
            quat_rotate(&UnitQuat::IDENTITY, Vec3::new(1.0, 2.0, 3.0)),
            Vec3::new(1.0, 2.0, 3.0)
        );
        let r = quat_rotate(&UnitQuat::from_yaw(FRAC_PI_2), Vec3::X);
        assert_vec_close(r, Vec3::Y, 1e-15);
    }

    #[test]
    fn angle_and_axis() {
        let q = UnitQuat::from_axis_angle(Vec3::new(0.0, 0.0, -2.0), 0.3);
        assert!((q.angle() - 0.3).abs() < 1e-15);
        assert_vec_close(q.axis().unwrap(), -Vec3::Z, 1e-15);
        assert!((UnitQuat::from_yaw(PI).angle() - PI).abs() < 1e-15);
        assert!(UnitQuat::IDENTITY.axis().is_none());
    }

    #[test]
    fn near_unit_ingest() {
        let ok = QuatComponents { w: 1.0 + 5e-7, x: 0.0, y: 0.0, z: 0.0 };
        let q = UnitQuat::from_near_unit(ok).unwrap();
        assert!((q.norm() - 1.0).abs() < 1e-15);
        let bad = QuatComponents { w: 0.5, x: 0.0, y: 0.0, z: 0.0 };
        assert!(UnitQuat::from_near_unit(bad).is_err());
        let exact = UnitQuat::from_axis_angle(Vec3::new(0.3, -0.2, 0.9), 2.1);
        assert_eq!(UnitQuat::from_near_unit(exact.components()).unwrap(), exact);
    }

    #[test]
    fn delta_of_identical_poses_is_zero() {
        let p = Pose::new(
            Vec3::new(0.1, -0.2, 0.3),
            UnitQuat::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.4),
        );
        let d = relative_delta(&p, &p, &UnitQuat::IDENTITY);
        assert_eq!(d.translation, Vec3::ZERO);
        assert_quat_close(&d.rotation, &UnitQuat::IDENTITY, 1e-15);
    }

    #[test]
    fn delta_is_plain_subtraction_for_fixed_orientation() {
        let a = Pose::from_position(Vec3::new(1.0, 1.0, 1.0));
        let c = Pose::from_position(Vec3::new(1.2, 1.0, 1.0));
        let d = relative_delta(&a, &c, &UnitQuat::IDENTITY);
        assert_vec_close(d.translation, Vec3::new(0.2, 0.0, 0.0), 1e-15);
        assert_eq!(d.rotation, UnitQuat::IDENTITY);
    }

    #[test]
    fn anchor_orientation_does_not_rotate_translation() {
        // Brute force: a controller yawed by 90° moved 0.1 m along world x.
        let yaw = UnitQuat::from_yaw(FRAC_PI_2);
        let anchor = Pose::new(Vec3::new(0.4, 0.5, 0.6), yaw);
        let current = Pose::new(anchor.position + Vec3::new(0.1, 0.0, 0.0), yaw);
        let d = relative_delta(&anchor, &current, &UnitQuat::IDENTITY);
        assert_vec_close(d.translation, Vec3::new(0.1, 0.0, 0.0), 1e-15);
        assert_quat_close(&d.rotation, &UnitQuat::IDENTITY, 1e-15);
    }

    #[test]
    fn alignment_maps_vr_axes_to_base_axes() {
        let a = Pose::IDENTITY;
        let c = Pose::new(Vec3::X * 0.1, UnitQuat::from_axis_angle(Vec3::X, 0.2));
        let align = UnitQuat::from_yaw(PI);
        let d = relative_delta(&a, &c, &align);
        assert_vec_close(d.translation, Vec3::new(-0.1, 0.0, 0.0), 1e-15);
        // a roll about VR +x becomes a roll about base -x
        assert_quat_close(
            &d.rotation,
            &UnitQuat::from_axis_angle(-Vec3::X, 0.2),
            1e-15,
        );
    }

    #[test]
    fn zero_delta_leaves_anchor() {
        let ee = Pose::new(Vec3::new(0.5, 0.0, 0.4), UnitQuat::from_yaw(0.3));
        assert_eq!(apply_delta(&ee, &PoseDelta::ZERO, 1.0), ee);
    }

    #[test]
    fn double_displacement_doubles_target_offset() {
        let ee = Pose::from_position(Vec3::new(0.5, 0.0, 0.4));
        let d = Vec3::new(0.03, -0.02, 0.01);
        let one = apply_delta(&ee, &PoseDelta { translation: d, rotation: UnitQuat::IDENTITY }, 1.0);
        let two = apply_delta(&ee, &PoseDelta { translation: d * 2.0, rotation: UnitQuat::IDENTITY }, 1.0);
        let off1 = one.position - ee.position;
        let off2 = two.position - ee.position;
        assert_vec_close(off2, off1 * 2.0, 1e-12);
    }

    #[test]
    fn rotation_delta_left_multiplies() {
        let ee = Pose::new(Vec3::ZERO, UnitQuat::from_axis_angle(Vec3::X, FRAC_PI_2));
        let delta = PoseDelta {
            translation: Vec3::ZERO,
            rotation: UnitQuat::from_yaw(FRAC_PI_2),
        };
        let out = apply_delta(&ee, &delta, 1.0);
        // x-roll first, then world yaw: the tool z axis ends up along world +x
        assert_vec_close(out.orientation.rotate(Vec3::Z), Vec3::X, 1e-15);
        assert_vec_close(out.orientation.rotate(Vec3::X), Vec3::Y, 1e-15);
        let expect = UnitQuat::from_components(0.5, 0.5, 0.5, 0.5).unwrap();
        assert_quat_close(&out.orientation, &expect, 1e-15);
    }
}

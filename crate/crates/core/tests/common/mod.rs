//! Shared generators and reference implementations for the property suites.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use telequest_core::{Pose, UnitQuat, Vec3};

pub type Mat3 = [[f64; 3]; 3];

/// Rotation matrix of a unit quaternion (w, x, y, z), written out from the
/// textbook formula and independent of the library's quaternion algebra.
pub fn matrix(q: &UnitQuat) -> Mat3 {
    let (w, x, y, z) = (q.w(), q.x(), q.y(), q.z());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat_apply(a: &Mat3, v: Vec3) -> Vec3 {
    let v = v.to_array();
    let row = |r: &[f64; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    Vec3::new(row(&a[0]), row(&a[1]), row(&a[2]))
}

pub fn mat_max_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Rotation-invariant distance between orientations: max matrix element difference.
pub fn rot_diff(a: &UnitQuat, b: &UnitQuat) -> f64 {
    mat_max_diff(&matrix(a), &matrix(b))
}

pub fn vec_diff(a: Vec3, b: Vec3) -> f64 {
    (a - b).to_array().iter().fold(0.0_f64, |m, d| m.max(d.abs()))
}

pub fn pose_diff(a: &Pose, b: &Pose) -> f64 {
    vec_diff(a.position, b.position).max(rot_diff(&a.orientation, &b.orientation))
}

pub fn random_quat(rng: &mut impl Rng) -> UnitQuat {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return UnitQuat::from_components(c[0] / n, c[1] / n, c[2] / n, c[3] / n)
                .expect("normalized components");
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_pose(rng: &mut impl Rng, scale: f64) -> Pose {
    Pose::new(random_vec(rng, scale), random_quat(rng))
}

pub fn arb_vec3(scale: f64) -> impl Strategy<Value = Vec3> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn arb_quat() -> impl Strategy<Value = UnitQuat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| (w * w + x * x + y * y + z * z) > 0.01)
        .prop_map(|(w, x, y, z)| UnitQuat::from_components(w, x, y, z).expect("non-zero"))
}

pub fn arb_pose(scale: f64) -> impl Strategy<Value = Pose> {
    (arb_vec3(scale), arb_quat()).prop_map(|(p, q)| Pose::new(p, q))
}

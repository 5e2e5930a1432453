//! Kinematic arm plant: a rate-limited follower standing in for a Cartesian
//! impedance controller plus a parallel gripper.
//!
//! Targets are stored verbatim and only take effect in [`ArmPlant::step`],
//! which moves the end effector along a straight line toward the target
//! (clamped to the workspace box) and rotates it about the single geodesic
//! axis, each bounded by the configured speed.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, ValidationError};
use crate::se3::{Pose, UnitQuat, Vec3};
use crate::side::Side;

/// Axis-aligned box in the arm's base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Workspace {
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: Vec3::new(0.0, -0.5, 0.0),
            max: Vec3::new(1.0, 0.5, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantLimits {
    /// Linear speed limit, m/s.
    pub v_max: f64,
    /// Angular speed limit, rad/s.
    pub omega_max: f64,
    /// Finger slew rate, m/s.
    pub finger_speed: f64,
    pub workspace: Workspace,
    pub finger_min: f64,
    pub finger_max: f64,
}

impl Default for PlantLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 1.5,
            finger_speed: 0.1,
            workspace: Workspace::default(),
            finger_min: 0.0,
            finger_max: 0.05,
        }
    }
}

impl PlantLimits {
    /// `prefix` is prepended to field names in errors, e.g. `arms.left.limits`.
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        let field = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        require_positive(&field("v_max"), self.v_max)?;
        require_positive(&field("omega_max"), self.omega_max)?;
        require_positive(&field("finger_speed"), self.finger_speed)?;
        let (lo, hi) = (self.workspace.min, self.workspace.max);
        for (axis, a, b) in [("x", lo.x, hi.x), ("y", lo.y, hi.y), ("z", lo.z, hi.z)] {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(ValidationError::new(
                    field("workspace"),
                    format!("min.{axis} ({a}) must be below max.{axis} ({b})"),
                ));
            }
        }
        if !self.finger_min.is_finite() || self.finger_min < 0.0 {
            return Err(ValidationError::new(field("finger_min"), "must be a finite distance >= 0"));
        }
        if !self.finger_max.is_finite() || self.finger_min >= self.finger_max {
            return Err(ValidationError::new(
                field("finger_max"),
                format!("must exceed finger_min ({})", self.finger_min),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPlant {
    pub arm_id: Side,
    pub pose: Pose,
    pub finger_distance: f64,
    pub target: Option<Pose>,
    pub gripper_target: f64,
}

impl ArmPlant {
    /// Plant at rest at `home` (clamped into the workspace) with the gripper fully open.
    pub fn new(arm_id: Side, home: Pose, limits: &PlantLimits) -> Self {
        let pose = Pose::new(limits.workspace.clamp(home.position), home.orientation);
        Self {
            arm_id,
            pose,
            finger_distance: limits.finger_max,
            target: None,
            gripper_target: limits.finger_max,
        }
    }

    pub fn set_target(&mut self, pose: Pose) {
        self.target = Some(pose);
    }

    /// Stores a finger distance target, clamped to the gripper stroke. Returns the stored value.
    pub fn set_gripper(&mut self, distance: f64, limits: &PlantLimits) -> f64 {
        let clamped = if distance.is_nan() {
            limits.finger_max
        } else {
            distance.clamp(limits.finger_min, limits.finger_max)
        };
        if clamped != distance {
            warn!(
                "arm={} gripper distance {distance} outside [{}, {}], clamped to {clamped}",
                self.arm_id, limits.finger_min, limits.finger_max
            );
        }
        self.gripper_target = clamped;
        clamped
    }

    pub fn step(&mut self, limits: &PlantLimits, dt: f64) {
        if let Some(target) = self.target {
            self.pose.position = step_position(self.pose.position, target.position, limits, dt);
            self.pose.orientation =
                step_orientation(self.pose.orientation, target.orientation, limits.omega_max * dt);
        }
        let max_slew = limits.finger_speed * dt;
        let diff = self.gripper_target - self.finger_distance;
        let next = if diff.abs() <= max_slew {
            self.gripper_target
        } else {
            self.finger_distance + max_slew.copysign(diff)
        };
        self.finger_distance = next.clamp(limits.finger_min, limits.finger_max);
    }
}

fn step_position(current: Vec3, target: Vec3, limits: &PlantLimits, dt: f64) -> Vec3 {
    let goal = limits.workspace.clamp(target);
    let diff = goal - current;
    let dist = diff.norm();
    let max_step = limits.v_max * dt;
    let next = if dist <= max_step {
        goal
    } else {
        current + diff * (max_step / dist)
    };
    limits.workspace.clamp(next)
}

fn step_orientation(current: UnitQuat, target: UnitQuat, max_angle: f64) -> UnitQuat {
    let remaining = target.compose(&current.inverse());
    let angle = remaining.angle();
    if angle <= max_angle {
        return target;
    }
    match remaining.axis() {
        Some(axis) => UnitQuat::from_axis_angle(axis, max_angle).compose(&current),
        None => target,
    }
}

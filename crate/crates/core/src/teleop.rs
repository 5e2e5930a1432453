//! Per-arm teleoperation state machine.
//!
//! An [`ArmController`] turns controller pose samples and button snapshots
//! into end-effector targets and gripper commands. Motion is always relative
//! to the anchor pair captured on the last resume, so the controller's
//! absolute pose never matters and re-engaging cannot make the arm jump.
//!
//! Buttons are edge-triggered:
//! - lower button: pause / resume the pose command stream (re-anchors on resume)
//! - upper button: toggle the gripper between its open and closed distance
//!
//! When both buttons rise in the same snapshot only the lower action runs.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, ValidationError};
use crate::se3::{apply_delta, relative_delta, Pose, UnitQuat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ButtonSnapshot {
    pub upper: bool,
    pub lower: bool,
}

impl ButtonSnapshot {
    pub fn new(upper: bool, lower: bool) -> Self {
        Self { upper, lower }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperState {
    pub open: bool,
    pub commanded_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeleopConfig {
    /// Translation gain from controller motion to end-effector motion.
    pub gain: f64,
    /// Maps VR-world axes onto robot-base axes.
    pub alignment: UnitQuat,
    pub finger_min: f64,
    pub finger_max: f64,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            gain: 1.0,
            alignment: UnitQuat::IDENTITY,
            finger_min: 0.0,
            finger_max: 0.05,
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        require_positive("gain", self.gain)?;
        if !self.finger_min.is_finite() || self.finger_min < 0.0 {
            return Err(ValidationError::new("finger_min", "must be a finite distance >= 0"));
        }
        if !self.finger_max.is_finite() || self.finger_min >= self.finger_max {
            return Err(ValidationError::new(
                "finger_max",
                format!("must exceed finger_min ({})", self.finger_min),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmEvent {
    TargetPose(Pose),
    GripperCommand(f64),
    Paused,
    /// Carries the end-effector pose the marker was realigned to.
    Resumed(Pose),
}

/// Why a resume request did not engage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResumeRefused {
    NoControllerPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmController {
    streaming: bool,
    controller_anchor: Option<Pose>,
    ee_anchor: Option<Pose>,
    gripper: GripperState,
    last_buttons: ButtonSnapshot,
    gain: f64,
    alignment: UnitQuat,
    finger_min: f64,
    finger_max: f64,
    last_target: Option<Pose>,
    refused: Option<ResumeRefused>,
}

impl ArmController {
    /// Starts paused, with the gripper open at its maximum distance.
    pub fn new(config: &TeleopConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        Ok(Self {
            streaming: false,
            controller_anchor: None,
            ee_anchor: None,
            gripper: GripperState {
                open: true,
                commanded_distance: config.finger_max,
            },
            last_buttons: ButtonSnapshot::default(),
            gain: config.gain,
            alignment: config.alignment,
            finger_min: config.finger_min,
            finger_max: config.finger_max,
            last_target: None,
            refused: None,
        })
    }

    pub fn is_streaming(&self) -> bool {
        self.streaming
    }

    pub fn gripper(&self) -> GripperState {
        self.gripper
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn alignment(&self) -> UnitQuat {
        self.alignment
    }

    pub fn anchors(&self) -> Option<(Pose, Pose)> {
        self.controller_anchor.zip(self.ee_anchor)
    }

    pub fn last_target(&self) -> Option<Pose> {
        self.last_target
    }

    pub fn last_buttons(&self) -> ButtonSnapshot {
        self.last_buttons
    }

    /// Set when the most recent lower-button edge could not resume.
    pub fn last_refusal(&self) -> Option<ResumeRefused> {
        self.refused
    }

    /// Emits a target while streaming; silent while paused.
    pub fn handle_pose(&mut self, controller_pose: &Pose, _robot_actual: &Pose) -> Option<ArmEvent> {
        if !self.streaming {
            return None;
        }
        let (controller_anchor, ee_anchor) = self.anchors()?;
        let delta = relative_delta(&controller_anchor, controller_pose, &self.alignment);
        let target = apply_delta(&ee_anchor, &delta, self.gain);
        self.last_target = Some(target);
        Some(ArmEvent::TargetPose(target))
    }

    /// Processes a button snapshot. `controller_pose` is the latest pose sample
    /// from the same controller; a resume without one is refused.
    pub fn handle_buttons(
        &mut self,
        buttons: ButtonSnapshot,
        robot_actual: &Pose,
        controller_pose: Option<&Pose>,
    ) -> Vec<ArmEvent> {
        let lower_rose = buttons.lower && !self.last_buttons.lower;
        let upper_rose = buttons.upper && !self.last_buttons.upper;
        self.last_buttons = buttons;

        let mut events = Vec::new();
        if lower_rose {
            if self.streaming {
                events.extend(self.pause());
            } else {
                match controller_pose {
                    Some(c) => events.push(self.resume(c, robot_actual)),
                    None => self.refused = Some(ResumeRefused::NoControllerPose),
                }
            }
        } else if upper_rose {
            events.push(self.toggle_gripper());
        }
        events
    }

    /// Pauses regardless of button state, e.g. when the controller drops out.
    pub fn force_pause(&mut self) -> Option<ArmEvent> {
        self.pause()
    }

    /// The pose a visualization marker should show: the commanded target while
    /// streaming, the robot's actual pose while paused.
    pub fn marker(&self, robot_actual: &Pose) -> Pose {
        if self.streaming {
            self.last_target.or(self.ee_anchor).unwrap_or(*robot_actual)
        } else {
            *robot_actual
        }
    }

    fn pause(&mut self) -> Option<ArmEvent> {
        if !self.streaming {
            return None;
        }
        self.streaming = false;
        self.controller_anchor = None;
        self.ee_anchor = None;
        Some(ArmEvent::Paused)
    }

    fn resume(&mut self, controller_pose: &Pose, robot_actual: &Pose) -> ArmEvent {
        self.streaming = true;
        self.controller_anchor = Some(*controller_pose);
        self.ee_anchor = Some(*robot_actual);
        self.last_target = None;
        self.refused = None;
        ArmEvent::Resumed(*robot_actual)
    }

    fn toggle_gripper(&mut self) -> ArmEvent {
        self.gripper.open = !self.gripper.open;
        self.gripper.commanded_distance = if self.gripper.open {
            self.finger_max
        } else {
            self.finger_min
        };
        ArmEvent::GripperCommand(self.gripper.commanded_distance)
    }
}

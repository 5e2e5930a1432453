//! Bi-manual VR teleoperation relay core.
//!
//! Controller pose streams drive two simulated arms through a relative-motion
//! control law: the end effector reproduces the controller's motion since the
//! last engagement, never its absolute pose. The modules here are pure and
//! clock-agnostic; networking lives in the `telequest` crate.

pub mod config;
pub mod error;
pub mod plant;
pub mod protocol;
pub mod router;
pub mod script;
pub mod se3;
pub mod side;
pub mod teleop;

pub use config::{load_config, ConfigOverrides, RoutingMode, SessionConfig};
pub use error::ValidationError;
pub use plant::{ArmPlant, PlantLimits, Workspace};
pub use protocol::{decode, encode, Body, DecodeError, StreamDecoder, WireMessage};
pub use router::{route, Session};
pub use se3::{apply_delta, relative_delta, Pose, PoseDelta, UnitQuat, Vec3};
pub use side::Side;
pub use teleop::{ArmController, ArmEvent, ButtonSnapshot, TeleopConfig};

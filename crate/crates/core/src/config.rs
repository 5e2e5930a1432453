//! Session configuration: routing mode, control-law parameters, per-arm plant
//! limits, ports and loop rates.
//!
//! Values are layered as defaults, then an optional JSON file, then command
//! line overrides. Validation errors name the offending field.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::error::{require_positive, ValidationError};
use crate::plant::PlantLimits;
use crate::protocol::{DEFAULT_TCP_PORT, DEFAULT_WATCHDOG_TIMEOUT, DEFAULT_WS_PORT};
use crate::se3::{Pose, UnitQuat, Vec3};
use crate::side::Side;
use crate::teleop::TeleopConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingMode {
    /// Operator faces the same way as the robot; left drives left.
    #[default]
    SideBySide,
    /// Operator faces the robot; left controller drives the right arm.
    Mirror,
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::SideBySide => "side-by-side",
            RoutingMode::Mirror => "mirror",
        })
    }
}

/// Mode names accepted on the command line and in config files.
/// `mirror-facing` is mirror routing plus a 180° yaw alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePreset {
    SideBySide,
    Mirror,
    MirrorFacing,
}

impl FromStr for ModePreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "side-by-side" => Ok(ModePreset::SideBySide),
            "mirror" => Ok(ModePreset::Mirror),
            "mirror-facing" => Ok(ModePreset::MirrorFacing),
            other => Err(format!(
                "unknown mode {other:?} (expected side-by-side, mirror or mirror-facing)"
            )),
        }
    }
}

impl ModePreset {
    pub fn routing(&self) -> RoutingMode {
        match self {
            ModePreset::SideBySide => RoutingMode::SideBySide,
            ModePreset::Mirror | ModePreset::MirrorFacing => RoutingMode::Mirror,
        }
    }

    pub fn alignment(&self) -> Option<UnitQuat> {
        match self {
            ModePreset::MirrorFacing => Some(UnitQuat::from_yaw(std::f64::consts::PI)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    pub limits: PlantLimits,
    /// Initial end-effector pose in the arm's base frame.
    pub home: Pose,
    /// Arm base placement in the shared display frame. Only used for rendering;
    /// all poses on the wire are in each arm's own base frame.
    pub base_offset: Vec3,
}

impl ArmConfig {
    pub fn default_for(side: Side) -> Self {
        let lateral = match side {
            Side::Left => 0.3,
            Side::Right => -0.3,
        };
        Self {
            limits: PlantLimits::default(),
            home: Pose::new(
                Vec3::new(0.5, 0.0, 0.4),
                // tool pointing down: half turn about x
                UnitQuat::from_components(0.0, 1.0, 0.0, 0.0).expect("unit quaternion"),
            ),
            base_offset: Vec3::new(0.0, lateral, 0.0),
        }
    }
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::default_for(Side::Left)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmPair {
    #[serde(default = "left_arm")]
    pub left: ArmConfig,
    #[serde(default = "right_arm")]
    pub right: ArmConfig,
}

fn left_arm() -> ArmConfig {
    ArmConfig::default_for(Side::Left)
}

fn right_arm() -> ArmConfig {
    ArmConfig::default_for(Side::Right)
}

impl Default for ArmPair {
    fn default() -> Self {
        Self {
            left: left_arm(),
            right: right_arm(),
        }
    }
}

impl ArmPair {
    pub fn get(&self, side: Side) -> &ArmConfig {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub mode: RoutingMode,
    pub gain: f64,
    pub alignment: UnitQuat,
    pub arms: ArmPair,
    pub tcp_port: u16,
    pub ws_port: u16,
    /// Seconds of silence after which a controller counts as disconnected.
    pub watchdog_timeout: f64,
    /// Control loop (plant step and watchdog) rate, Hz.
    pub loop_rate: f64,
    /// State publication rate, Hz. At most `loop_rate`.
    pub publish_rate: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: RoutingMode::SideBySide,
            gain: 1.0,
            alignment: UnitQuat::IDENTITY,
            arms: ArmPair::default(),
            tcp_port: DEFAULT_TCP_PORT,
            ws_port: DEFAULT_WS_PORT,
            watchdog_timeout: DEFAULT_WATCHDOG_TIMEOUT,
            loop_rate: 50.0,
            publish_rate: 25.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        require_positive("gain", self.gain)?;
        require_positive("watchdog_timeout", self.watchdog_timeout)?;
        require_positive("loop_rate", self.loop_rate)?;
        require_positive("publish_rate", self.publish_rate)?;
        if self.publish_rate > self.loop_rate {
            return Err(ValidationError::new(
                "publish_rate",
                format!("must not exceed loop_rate ({})", self.loop_rate),
            ));
        }
        // port 0 asks the OS for a free port, so two zeros do not collide
        if self.tcp_port == self.ws_port && self.tcp_port != 0 {
            return Err(ValidationError::new(
                "ws_port",
                format!("must differ from tcp_port ({})", self.tcp_port),
            ));
        }
        for side in Side::BOTH {
            let arm = self.arms.get(side);
            let prefix = format!("arms.{side}");
            arm.limits.validate(&format!("{prefix}.limits"))?;
            if !arm.home.is_finite() || !arm.limits.workspace.contains(arm.home.position) {
                return Err(ValidationError::new(
                    format!("{prefix}.home"),
                    "home position must lie inside the workspace box",
                ));
            }
            if !arm.base_offset.is_finite() {
                return Err(ValidationError::new(format!("{prefix}.base_offset"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn teleop_config(&self, arm: Side) -> TeleopConfig {
        let limits = &self.arms.get(arm).limits;
        TeleopConfig {
            gain: self.gain,
            alignment: self.alignment,
            finger_min: limits.finger_min,
            finger_max: limits.finger_max,
        }
    }

    /// Control loop period in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.loop_rate
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub mode: Option<ModePreset>,
    pub gain: Option<f64>,
    pub tcp_port: Option<u16>,
    pub ws_port: Option<u16>,
    pub loop_rate: Option<f64>,
    pub watchdog_timeout: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl ConfigError {
    /// The field the error refers to, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { path, .. } => Some(path),
            ConfigError::Invalid(e) => Some(&e.field),
        }
    }
}

/// Parses a JSON config document on top of the defaults.
pub fn parse_config(text: &str) -> Result<SessionConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    let mut preset_alignment = None;
    if let Some(obj) = value.as_object_mut() {
        if let Some(Value::String(mode)) = obj.get("mode") {
            let preset: ModePreset = mode.parse().map_err(|message| ConfigError::Parse {
                path: "mode".into(),
                message,
            })?;
            obj.insert("mode".into(), Value::String(preset.routing().to_string()));
            if !obj.contains_key("alignment") {
                preset_alignment = preset.alignment();
            }
        }
    }
    let mut config: SessionConfig =
        serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if let Some(alignment) = preset_alignment {
        config.alignment = alignment;
    }
    Ok(config)
}

/// Defaults, then `path` (if any), then `overrides`; the result is validated.
pub fn load_config(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<SessionConfig, ConfigError> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_config(&text)?
        }
        None => SessionConfig::default(),
    };
    if let Some(preset) = overrides.mode {
        config.mode = preset.routing();
        if let Some(alignment) = preset.alignment() {
            config.alignment = alignment;
        }
    }
    if let Some(gain) = overrides.gain {
        config.gain = gain;
    }
    if let Some(port) = overrides.tcp_port {
        config.tcp_port = port;
    }
    if let Some(port) = overrides.ws_port {
        config.ws_port = port;
    }
    if let Some(rate) = overrides.loop_rate {
        config.loop_rate = rate;
        config.publish_rate = config.publish_rate.min(rate);
    }
    if let Some(timeout) = overrides.watchdog_timeout {
        config.watchdog_timeout = timeout;
    }
    config.validate()?;
    Ok(config)
}

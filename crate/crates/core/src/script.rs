//! Scripted controller input: noise-free pose and button streams expanded
//! from a JSON script into timed wire messages.
//!
//! A script mixes explicit events (poses, button snapshots, silence gaps)
//! with parametric generators (line, circle, rotation). Between samples a
//! controller keeps streaming its last pose at the script rate, the way a
//! tracked controller does, except inside silence windows where nothing is
//! sent for that controller.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{encode, Body, ControllerButtonsMsg, ControllerPoseMsg, SeqCounter, WireMessage};
use crate::se3::{Pose, UnitQuat, Vec3};
use crate::teleop::ButtonSnapshot;

/// Two sample times closer than this are the same instant.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Pose(Pose),
    Buttons(ButtonSnapshot),
    /// Tracking dropout: nothing is sent for this many seconds.
    Silence(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t: f64,
    pub controller_id: String,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Yz,
    Zx,
}

impl Plane {
    fn axes(&self) -> (Vec3, Vec3) {
        match self {
            Plane::Xy => (Vec3::X, Vec3::Y),
            Plane::Yz => (Vec3::Y, Vec3::Z),
            Plane::Zx => (Vec3::Z, Vec3::X),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Straight line at constant speed and fixed orientation.
    Line {
        from: Vec3,
        to: Vec3,
        duration: f64,
        #[serde(default)]
        orientation: UnitQuat,
    },
    /// Circle starting at angle `phase` (radians) from the first plane axis.
    Circle {
        center: Vec3,
        radius: f64,
        plane: Plane,
        duration: f64,
        #[serde(default = "one")]
        turns: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        orientation: UnitQuat,
    },
    /// Constant-rate rotation about a world axis, applied on top of `from`.
    Rotation {
        #[serde(default)]
        position: Vec3,
        #[serde(default)]
        from: UnitQuat,
        axis: Vec3,
        angle: f64,
        duration: f64,
    },
}

impl Shape {
    pub fn duration(&self) -> f64 {
        match self {
            Shape::Line { duration, .. }
            | Shape::Circle { duration, .. }
            | Shape::Rotation { duration, .. } => *duration,
        }
    }

    /// Pose at normalized time `s` in `[0, 1]`.
    pub fn sample(&self, s: f64) -> Pose {
        match self {
            Shape::Line { from, to, orientation, .. } => Pose::new(from.lerp(to, s), *orientation),
            Shape::Circle { center, radius, plane, turns, phase, orientation, .. } => {
                let (u, v) = plane.axes();
                let phi = phase + TAU * turns * s;
                let p = *center + (u * phi.cos() + v * phi.sin()) * *radius;
                Pose::new(p, *orientation)
            }
            Shape::Rotation { position, from, axis, angle, .. } => {
                Pose::new(*position, UnitQuat::from_axis_angle(*axis, angle * s).compose(from))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub controller_id: String,
    pub start: f64,
    #[serde(flatten)]
    pub shape: Shape,
}

impl Generator {
    pub fn end(&self) -> f64 {
        self.start + self.shape.duration()
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub name: String,
    /// Pose sample rate, Hz.
    pub rate: f64,
    /// Optional explicit end time; otherwise the last event or generator end.
    #[serde(default)]
    pub duration: Option<f64>,
    /// Keep streaming the last pose between samples.
    #[serde(default = "default_true")]
    pub hold: bool,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default)]
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("script parse error: {0}")]
    Parse(String),
    #[error("invalid script: {0}")]
    Invalid(String),
    #[error("overlapping generators for controller {controller_id:?}: [{a_start}, {a_end}] and [{b_start}, {b_end}]")]
    Overlap {
        controller_id: String,
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },
}

/// A message and its send time relative to script start.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMessage {
    pub t: f64,
    pub message: WireMessage,
}

pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))
}

fn invalid(msg: impl Into<String>) -> ScriptError {
    ScriptError::Invalid(msg.into())
}

fn check_time(what: &str, t: f64) -> Result<(), ScriptError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be a finite time >= 0, got {t}")))
    }
}

impl Script {
    pub fn validate(&self) -> Result<(), ScriptError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(invalid(format!("rate must be positive, got {}", self.rate)));
        }
        if let Some(d) = self.duration {
            check_time("duration", d)?;
        }
        let mut prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            check_time(&format!("events[{i}].t"), e.t)?;
            if e.t < prev {
                return Err(invalid(format!("events must be sorted by t: events[{i}].t = {} < {prev}", e.t)));
            }
            prev = e.t;
            match &e.payload {
                Payload::Silence(d) if !(d.is_finite() && *d > 0.0) => {
                    return Err(invalid(format!("events[{i}].silence must be positive")));
                }
                Payload::Pose(p) if !p.is_finite() => {
                    return Err(invalid(format!("events[{i}].pose must be finite")));
                }
                _ => {}
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            check_time(&format!("generators[{i}].start"), g.start)?;
            let d = g.shape.duration();
            if !(d.is_finite() && d > 0.0) {
                return Err(invalid(format!("generators[{i}].duration must be positive")));
            }
            if let Shape::Circle { radius, turns, .. } = &g.shape {
                if !(radius.is_finite() && *radius > 0.0 && turns.is_finite()) {
                    return Err(invalid(format!("generators[{i}] circle needs a positive radius")));
                }
            }
        }
        let mut sorted: Vec<&Generator> = self.generators.iter().collect();
        sorted.sort_by(|a, b| {
            a.controller_id
                .cmp(&b.controller_id)
                .then(a.start.total_cmp(&b.start))
        });
        for pair in sorted.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.controller_id == b.controller_id && b.start < a.end() - TIME_EPS {
                return Err(ScriptError::Overlap {
                    controller_id: a.controller_id.clone(),
                    a_start: a.start,
                    a_end: a.end(),
                    b_start: b.start,
                    b_end: b.end(),
                });
            }
        }
        Ok(())
    }

    /// Time of the last scheduled activity.
    pub fn end_time(&self) -> f64 {
        let events = self.events.iter().map(|e| match e.payload {
            Payload::Silence(d) => e.t + d,
            _ => e.t,
        });
        let gens = self.generators.iter().map(Generator::end);
        events
            .chain(gens)
            .chain(self.duration)
            .fold(0.0, f64::max)
    }

    fn controllers(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .events
            .iter()
            .map(|e| e.controller_id.clone())
            .chain(self.generators.iter().map(|g| g.controller_id.clone()))
            .collect();
        ids.sort_by(|a, b| controller_rank(a).cmp(&controller_rank(b)).then(a.cmp(b)));
        ids.dedup();
        ids
    }

    fn pose_samples(&self, controller: &str) -> Vec<(f64, Pose)> {
        let mut samples: Vec<(f64, Pose)> = Vec::new();
        for g in self.generators.iter().filter(|g| g.controller_id == controller) {
            let steps = (g.shape.duration() * self.rate).round().max(1.0) as u64;
            for k in 0..=steps {
                let t = g.start + k as f64 / self.rate;
                let s = k as f64 / steps as f64;
                samples.push((t, g.shape.sample(s)));
            }
        }
        for e in self.events.iter().filter(|e| e.controller_id == controller) {
            if let Payload::Pose(p) = &e.payload {
                samples.push((e.t, *p));
            }
        }
        // stable: for equal times the later source (explicit events) wins below
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut deduped: Vec<(f64, Pose)> = Vec::with_capacity(samples.len());
        for s in samples {
            match deduped.last_mut() {
                Some(last) if (s.0 - last.0).abs() <= TIME_EPS => *last = s,
                _ => deduped.push(s),
            }
        }
        deduped
    }

    fn hold_fill(&self, samples: Vec<(f64, Pose)>, end: f64) -> Vec<(f64, Pose)> {
        let period = 1.0 / self.rate;
        let mut out = Vec::with_capacity(samples.len());
        for (i, &(t, pose)) in samples.iter().enumerate() {
            out.push((t, pose));
            let next = samples.get(i + 1).map_or(end + period, |s| s.0);
            let mut j = 1u64;
            loop {
                let fill = t + j as f64 / self.rate;
                if fill >= next - 0.5 * period || fill > end + TIME_EPS {
                    break;
                }
                out.push((fill, pose));
                j += 1;
            }
        }
        out
    }
}

fn controller_rank(id: &str) -> u8 {
    match id {
        "left" => 0,
        "right" => 1,
        _ => 2,
    }
}

/// Deterministically expands a script into timed messages, ordered by time,
/// then controller (left, right, others), then poses before buttons.
pub fn expand(script: &Script) -> Result<Vec<TimedMessage>, ScriptError> {
    script.validate()?;
    let end = script.end_time();

    // (t, controller rank, controller id, kind rank, body)
    let mut items: Vec<(f64, u8, String, u8, Body)> = Vec::new();
    for controller in script.controllers() {
        let rank = controller_rank(&controller);
        let silences: Vec<(f64, f64)> = script
            .events
            .iter()
            .filter(|e| e.controller_id == controller)
            .filter_map(|e| match e.payload {
                Payload::Silence(d) => Some((e.t, e.t + d)),
                _ => None,
            })
            .collect();
        let silent = |t: f64| silences.iter().any(|&(a, b)| t >= a - TIME_EPS && t < b - TIME_EPS);

        let mut samples = script.pose_samples(&controller);
        if script.hold {
            samples = script.hold_fill(samples, end);
        }
        for (t, pose) in samples.into_iter().filter(|(t, _)| !silent(*t)) {
            items.push((
                t,
                rank,
                controller.clone(),
                0,
                Body::Pose(ControllerPoseMsg {
                    controller_id: controller.clone(),
                    pose,
                }),
            ));
        }
        for e in script.events.iter().filter(|e| e.controller_id == controller) {
            if let Payload::Buttons(b) = e.payload {
                if silent(e.t) {
                    continue;
                }
                items.push((
                    e.t,
                    rank,
                    controller.clone(),
                    1,
                    Body::Buttons(ControllerButtonsMsg {
                        controller_id: controller.clone(),
                        upper: b.upper,
                        lower: b.lower,
                    }),
                ));
            }
        }
    }

    items.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(Ordering::Equal)
    });

    let mut seq = SeqCounter::new();
    Ok(items
        .into_iter()
        .map(|(t, _, _, _, body)| TimedMessage {
            t,
            message: seq.stamp(t, body),
        })
        .collect())
}

/// The expanded stream as NDJSON text.
pub fn expand_to_ndjson(script: &Script) -> Result<String, ScriptError> {
    Ok(expand(script)?
        .iter()
        .map(|m| encode(&m.message))
        .collect())
}

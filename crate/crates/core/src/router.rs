//! Session state for the daemon: routes controller streams to arm
//! controllers, steps the plants, runs the watchdog and produces the
//! published state messages.
//!
//! [`Session`] is single-threaded and clock-agnostic. The caller passes the
//! current time to [`Session::ingest`] and [`Session::tick`], so the same code
//! runs against the wall clock or against message stamps during replay.

use log::{debug, info, warn};

use crate::config::{RoutingMode, SessionConfig};
use crate::error::ValidationError;
use crate::plant::ArmPlant;
use crate::protocol::{
    ArmPoseMsg, Body, ConnectionStatus, GripperMsg, LinkState, SeqCounter, WireMessage,
};
use crate::se3::Pose;
use crate::side::{Side, UnknownSide};
use crate::teleop::{ArmController, ArmEvent, ButtonSnapshot};

/// Arm driven by `controller_id` under `mode`.
pub fn route(mode: RoutingMode, controller_id: &str) -> Result<Side, UnknownSide> {
    Ok(route_side(mode, controller_id.parse()?))
}

/// An arm event together with the arm it was applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    pub controller: Side,
    pub arm: Side,
    pub event: ArmEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub published: Vec<WireMessage>,
    /// Arms force-paused by the watchdog during this tick.
    pub watchdog_paused: Vec<Side>,
}

pub struct Session {
    config: SessionConfig,
    /// Indexed by arm.
    arms: [ArmController; 2],
    plants: [ArmPlant; 2],
    /// Indexed by controller.
    links: [ConnectionStatus; 2],
    controller_poses: [Option<Pose>; 2],
    seq: SeqCounter,
    ticks: u64,
    pending: Vec<Body>,
    /// Latest stamp seen by [`Session::ingest_stamped`].
    virtual_now: f64,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        let arm = |side: Side| ArmController::new(&config.teleop_config(side));
        let plant = |side: Side| {
            let c = config.arms.get(side);
            ArmPlant::new(side, c.home, &c.limits)
        };
        Ok(Self {
            arms: [arm(Side::Left)?, arm(Side::Right)?],
            plants: [plant(Side::Left), plant(Side::Right)],
            links: [ConnectionStatus::new("left"), ConnectionStatus::new("right")],
            controller_poses: [None, None],
            seq: SeqCounter::new(),
            ticks: 0,
            pending: Vec::new(),
            virtual_now: 0.0,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mode(&self) -> RoutingMode {
        self.config.mode
    }

    pub fn arm(&self, side: Side) -> &ArmController {
        &self.arms[side.index()]
    }

    pub fn plant(&self, side: Side) -> &ArmPlant {
        &self.plants[side.index()]
    }

    pub fn link(&self, controller: Side) -> &ConnectionStatus {
        &self.links[controller.index()]
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Time of tick number `k` on the fixed loop grid.
    pub fn tick_time(&self, k: u64) -> f64 {
        k as f64 / self.config.loop_rate
    }

    /// Marker pose for an arm: commanded target while streaming, plant pose while paused.
    pub fn marker(&self, arm: Side) -> Pose {
        self.arms[arm.index()].marker(&self.plants[arm.index()].pose)
    }

    /// Applies one inbound message received at `now`. Returns the arm events it caused.
    pub fn ingest(&mut self, msg: &WireMessage, now: f64) -> Vec<Applied> {
        let Some(controller_id) = msg.body.controller_id() else {
            debug!("ignoring inbound {} message", msg.message_type());
            return Vec::new();
        };
        let controller: Side = match controller_id.parse() {
            Ok(c) => c,
            Err(e) => {
                warn!("dropping {} message: {e}", msg.message_type());
                return Vec::new();
            }
        };
        let arm = route_side(self.config.mode, controller);

        let link = &mut self.links[controller.index()];
        if link.refresh(now).is_some() {
            info!("event=connection controller={controller} state=CONNECTED t={now:.3}");
            self.pending.push(Body::Status(link.clone()));
        }

        let (ai, ci) = (arm.index(), controller.index());
        let events = match &msg.body {
            Body::Pose(m) => {
                self.controller_poses[ci] = Some(m.pose);
                let actual = self.plants[ai].pose;
                self.arms[ai].handle_pose(&m.pose, &actual).into_iter().collect()
            }
            Body::Buttons(m) => {
                let actual = self.plants[ai].pose;
                let buttons = ButtonSnapshot::new(m.upper, m.lower);
                let lower_rose = buttons.lower && !self.arms[ai].last_buttons().lower;
                let events = self.arms[ai].handle_buttons(
                    buttons,
                    &actual,
                    self.controller_poses[ci].as_ref(),
                );
                if lower_rose && events.is_empty() {
                    warn!("event=resume_refused arm={arm} controller={controller} reason=no_pose_yet");
                }
                events
            }
            _ => Vec::new(),
        };

        let mut applied = Vec::with_capacity(events.len());
        for event in events {
            self.apply(arm, &event);
            if !matches!(event, ArmEvent::TargetPose(_)) {
                log_event(arm, controller, &event, "button");
            }
            applied.push(Applied {
                controller,
                arm,
                event,
            });
        }
        applied
    }

    fn apply(&mut self, arm: Side, event: &ArmEvent) {
        let i = arm.index();
        match *event {
            ArmEvent::TargetPose(p) | ArmEvent::Resumed(p) => self.plants[i].set_target(p),
            ArmEvent::GripperCommand(d) => {
                let limits = self.config.arms.get(arm).limits;
                self.plants[i].set_gripper(d, &limits);
            }
            ArmEvent::Paused => {}
        }
    }

    /// One control-loop period ending at `now`: step plants, run the
    /// watchdog, publish if due.
    pub fn tick(&mut self, now: f64) -> TickReport {
        self.ticks += 1;
        let dt = self.config.dt();
        for side in Side::BOTH {
            let limits = self.config.arms.get(side).limits;
            self.plants[side.index()].step(&limits, dt);
        }

        let mut report = TickReport::default();
        let mut bodies = std::mem::take(&mut self.pending);
        for controller in Side::BOTH {
            let link = &mut self.links[controller.index()];
            if link.watchdog_tick(now, self.config.watchdog_timeout) == Some(LinkState::Disconnected)
            {
                info!("event=connection controller={controller} state=DISCONNECTED t={now:.3}");
                bodies.push(Body::Status(link.clone()));
                let arm = route_side(self.config.mode, controller);
                if let Some(event) = self.arms[arm.index()].force_pause() {
                    log_event(arm, controller, &event, "watchdog");
                    report.watchdog_paused.push(arm);
                }
            }
        }

        if self.publish_due() {
            bodies.extend(self.frame());
        }
        report.published = bodies
            .into_iter()
            .map(|body| self.seq.stamp(now, body))
            .collect();
        report
    }

    /// Runs every grid tick with time `<= t` that has not run yet.
    pub fn advance_to(&mut self, t: f64) -> Vec<WireMessage> {
        // slack for stamps computed as start + k/rate
        const GRID_SLACK: f64 = 1e-9;
        let mut out = Vec::new();
        loop {
            let next = self.tick_time(self.ticks + 1);
            if next > t + GRID_SLACK {
                break;
            }
            out.extend(self.tick(next).published);
        }
        out
    }

    /// Virtual-clock ingest: time moves forward to the message stamp (never
    /// back), every grid tick up to it runs, then the message is applied at
    /// that time. Returns what the ticks published.
    pub fn ingest_stamped(&mut self, msg: &WireMessage) -> Vec<WireMessage> {
        self.virtual_now = self.virtual_now.max(msg.stamp);
        let published = self.advance_to(self.virtual_now);
        self.ingest(msg, self.virtual_now);
        published
    }

    /// Replays a message stream on the virtual clock and runs on until `end`.
    pub fn replay<'a>(
        &mut self,
        messages: impl IntoIterator<Item = &'a WireMessage>,
        end: f64,
    ) -> Vec<WireMessage> {
        let mut out = Vec::new();
        for msg in messages {
            out.extend(self.ingest_stamped(msg));
        }
        out.extend(self.advance_to(end));
        out
    }

    fn publish_due(&self) -> bool {
        let ratio = self.config.publish_rate / self.config.loop_rate;
        let k = self.ticks as f64;
        (k * ratio + 1e-9).floor() > ((k - 1.0) * ratio + 1e-9).floor()
    }

    /// Full state frame: per controller (left first), its arm's ee_state,
    /// marker and gripper, then both controller statuses.
    pub fn frame(&self) -> Vec<Body> {
        let mut bodies = Vec::with_capacity(8);
        for controller in Side::BOTH {
            let arm = route_side(self.config.mode, controller);
            let plant = &self.plants[arm.index()];
            bodies.push(Body::EeState(ArmPoseMsg {
                arm_id: arm,
                pose: plant.pose,
            }));
            bodies.push(Body::Marker(ArmPoseMsg {
                arm_id: arm,
                pose: self.marker(arm),
            }));
            bodies.push(Body::Gripper(GripperMsg {
                arm_id: arm,
                distance: plant.finger_distance,
            }));
        }
        for link in &self.links {
            bodies.push(Body::Status(link.clone()));
        }
        bodies
    }
}

fn route_side(mode: RoutingMode, controller: Side) -> Side {
    match mode {
        RoutingMode::SideBySide => controller,
        RoutingMode::Mirror => controller.other(),
    }
}

fn log_event(arm: Side, controller: Side, event: &ArmEvent, source: &str) {
    match event {
        ArmEvent::Paused => info!("event=pause arm={arm} controller={controller} source={source}"),
        ArmEvent::Resumed(p) => {
            info!("event=resume arm={arm} controller={controller} source={source} anchor=\"{p}\"")
        }
        ArmEvent::GripperCommand(d) => {
            info!("event=gripper arm={arm} controller={controller} source={source} distance={d}")
        }
        ArmEvent::TargetPose(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ControllerButtonsMsg, ControllerPoseMsg, HeartbeatMsg};
    use crate::se3::{UnitQuat, Vec3};

    fn pose(id: &str, seq: u64, p: Pose) -> WireMessage {
        WireMessage::new(seq, 0.0, Body::Pose(ControllerPoseMsg { controller_id: id.into(), pose: p }))
    }

    fn buttons(id: &str, seq: u64, upper: bool, lower: bool) -> WireMessage {
        WireMessage::new(
            seq,
            0.0,
            Body::Buttons(ControllerButtonsMsg { controller_id: id.into(), upper, lower }),
        )
    }

    fn session(mode: RoutingMode) -> Session {
        Session::new(SessionConfig { mode, ..Default::default() }).unwrap()
    }

    #[test]
    fn routing_table() {
        assert_eq!(route(RoutingMode::SideBySide, "left"), Ok(Side::Left));
        assert_eq!(route(RoutingMode::SideBySide, "right"), Ok(Side::Right));
        assert_eq!(route(RoutingMode::Mirror, "left"), Ok(Side::Right));
        assert_eq!(route(RoutingMode::Mirror, "right"), Ok(Side::Left));
        assert!(route(RoutingMode::Mirror, "middle").is_err());
    }

    #[test]
    fn unknown_controller_dropped() {
        let mut s = session(RoutingMode::SideBySide);
        assert!(s.ingest(&pose("third", 0, Pose::IDENTITY), 0.0).is_empty());
        assert!(!s.link(Side::Left).is_connected());
    }

    #[test]
    fn idle_daemon_publishes_disconnected_and_holds() {
        let mut s = session(RoutingMode::SideBySide);
        let home = s.plant(Side::Left).pose;
        let mut statuses = 0;
        for k in 1..=10 {
            let t = s.tick_time(k);
            for m in s.tick(t).published {
                if let Body::Status(st) = &m.body {
                    assert_eq!(st.state, LinkState::Disconnected);
                    statuses += 1;
                }
            }
        }
        assert_eq!(statuses, 10);
        assert_eq!(s.plant(Side::Left).pose, home);
    }

    #[test]
    fn one_tick_advances_plant_by_v_dt() {
        let mut s = session(RoutingMode::SideBySide);
        let c = Pose::IDENTITY;
        s.ingest(&pose("left", 0, c), 0.0);
        s.ingest(&buttons("left", 0, false, true), 0.0);
        let start = s.plant(Side::Left).pose.position;
        s.ingest(&pose("left", 1, Pose::from_position(Vec3::new(0.2, 0.0, 0.0))), 0.0);
        let target = s.marker(Side::Left);
        s.tick(0.02);
        let moved = s.plant(Side::Left).pose.position - start;
        // 0.5 m/s * 0.02 s
        assert!((moved - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(s.marker(Side::Left), target);
        assert!((target.position - start - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn watchdog_pauses_mapped_arm_in_mirror() {
        let mut s = session(RoutingMode::Mirror);
        s.ingest(&pose("left", 0, Pose::IDENTITY), 0.0);
        let ev = s.ingest(&buttons("left", 0, false, true), 0.0);
        assert_eq!(ev[0].arm, Side::Right);
        assert!(s.arm(Side::Right).is_streaming());
        let mut paused = Vec::new();
        for k in 1..=30 {
            let t = s.tick_time(k);
            paused.extend(s.tick(t).watchdog_paused);
        }
        assert_eq!(paused, vec![Side::Right]);
        assert!(!s.arm(Side::Right).is_streaming());
        assert_eq!(s.marker(Side::Right), s.plant(Side::Right).pose);
    }

    #[test]
    fn heartbeat_keeps_link_alive() {
        let mut s = session(RoutingMode::SideBySide);
        let hb = |seq| {
            WireMessage::new(seq, 0.0, Body::Heartbeat(HeartbeatMsg { controller_id: "right".into() }))
        };
        for k in 1..=100u64 {
            let t = s.tick_time(k);
            if k % 10 == 0 {
                s.ingest(&hb(k), t);
            }
            s.tick(t);
        }
        assert!(s.link(Side::Right).is_connected());
        assert!(!s.link(Side::Left).is_connected());
    }

    #[test]
    fn publishes_at_publish_rate() {
        let mut s = session(RoutingMode::SideBySide);
        let frames: Vec<usize> = (1..=10)
            .map(|k| {
                let t = s.tick_time(k);
                s.tick(t).published.len()
            })
            .collect();
        // 25 Hz of 50 Hz: every second tick, 3 arm messages x 2 + 2 statuses
        assert_eq!(frames, vec![0, 8, 0, 8, 0, 8, 0, 8, 0, 8]);
    }

    #[test]
    fn advance_to_runs_grid_ticks() {
        let mut s = session(RoutingMode::SideBySide);
        s.advance_to(0.1);
        assert_eq!(s.ticks(), 5);
        s.advance_to(0.1);
        assert_eq!(s.ticks(), 5);
        s.advance_to(0.13);
        assert_eq!(s.ticks(), 6);
    }

    #[test]
    fn alignment_applies_through_session() {
        let cfg = SessionConfig {
            alignment: UnitQuat::from_yaw(std::f64::consts::PI),
            ..Default::default()
        };
        let mut s = Session::new(cfg).unwrap();
        s.ingest(&pose("right", 0, Pose::IDENTITY), 0.0);
        s.ingest(&buttons("right", 0, false, true), 0.0);
        let anchor = s.plant(Side::Right).pose.position;
        let ev = s.ingest(&pose("right", 1, Pose::from_position(Vec3::new(0.1, 0.0, 0.0))), 0.0);
        let ArmEvent::TargetPose(t) = ev[0].event else { panic!() };
        assert!((t.position - anchor - Vec3::new(-0.1, 0.0, 0.0)).norm() < 1e-15);
    }
}

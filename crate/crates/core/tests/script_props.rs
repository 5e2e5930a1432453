mod common;

use common::*;
use proptest::prelude::*;
use telequest_core::script::{expand, expand_to_ndjson, Generator, Payload, Script, ScriptEvent, Shape};
use telequest_core::{Body, ButtonSnapshot, StreamDecoder};

fn arb_script() -> impl Strategy<Value = Script> {
    let generator = (0usize..2, 0.0..3.0f64, arb_vec3(0.5), arb_vec3(0.5), 0.1..1.5f64, arb_quat())
        .prop_map(|(c, start, from, to, duration, orientation)| Generator {
            controller_id: ["left", "right"][c].into(),
            start,
            shape: Shape::Line { from, to, duration, orientation },
        });
    let event = (0usize..2, 0.0..4.0f64, 0u8..3, arb_pose(0.5), any::<(bool, bool)>(), 0.0..0.5f64)
        .prop_map(|(c, t, kind, pose, (upper, lower), d)| ScriptEvent {
            t,
            controller_id: ["left", "right"][c].into(),
            payload: match kind {
                0 => Payload::Pose(pose),
                1 => Payload::Buttons(ButtonSnapshot::new(upper, lower)),
                _ => Payload::Silence(d),
            },
        });
    (
        prop::sample::select(vec![30.0, 60.0, 90.0]),
        prop::collection::vec(generator, 0..4),
        prop::collection::vec(event, 0..20),
        any::<bool>(),
    )
        .prop_map(|(rate, mut generators, mut events, hold)| {
            // disjoint windows so the script is valid
            for (i, g) in generators.iter_mut().enumerate() {
                g.start = i as f64 * 1.6 + g.start / 30.0;
            }
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
            Script { name: "random".into(), rate, duration: None, hold, events, generators }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_is_ordered_and_well_sequenced(script in arb_script()) {
        let out = expand(&script).unwrap();
        prop_assert!(out.windows(2).all(|w| w[0].t <= w[1].t));
        let mut dec = StreamDecoder::new();
        for m in &out {
            prop_assert_eq!(m.message.stamp, m.t);
            let line = telequest_core::encode(&m.message);
            prop_assert_eq!(dec.decode_line(&line).unwrap(), m.message.clone());
        }
        prop_assert_eq!(expand_to_ndjson(&script).unwrap(), expand_to_ndjson(&script).unwrap());
    }

    #[test]
    fn silence_windows_are_empty(script in arb_script()) {
        let out = expand(&script).unwrap();
        for e in &script.events {
            if let Payload::Silence(d) = e.payload {
                let leaked = out.iter().any(|m| {
                    m.message.body.controller_id() == Some(e.controller_id.as_str())
                        && m.t >= e.t + 1e-9
                        && m.t < e.t + d - 1e-9
                });
                prop_assert!(!leaked);
            }
        }
    }

    #[test]
    fn line_samples_are_rate_spaced(
        from in arb_vec3(1.0), to in arb_vec3(1.0), duration in 0.1..2.0f64, start in 0.0..1.0f64,
    ) {
        let script = Script {
            name: "line".into(),
            rate: 50.0,
            duration: None,
            hold: false,
            events: vec![],
            generators: vec![Generator {
                controller_id: "left".into(),
                start,
                shape: Shape::Line { from, to, duration, orientation: Default::default() },
            }],
        };
        let out = expand(&script).unwrap();
        let n = (duration * 50.0).round() as usize;
        prop_assert_eq!(out.len(), n + 1);
        for (k, m) in out.iter().enumerate() {
            prop_assert!((m.t - (start + k as f64 / 50.0)).abs() < 1e-9);
            let Body::Pose(p) = &m.message.body else { panic!("pose expected") };
            prop_assert!(vec_diff(p.pose.position, from.lerp(&to, k as f64 / n as f64)) < 1e-9);
        }
    }
}

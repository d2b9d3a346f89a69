//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavecrush::codec::{
    checksum, decode_capture, Command, CommandKind, CommandTable, Frame, FrameControl, HeaderType, HomeId,
    NodeId, RouteHeader,
};
use wavecrush::detection::{heartbeat_monitor, scan_frames, Rule, ScanParams};
use wavecrush::node::{
    Action, DeviceState, DropReason, GatewayState, NodeProfile, NonceSource, TimingParams,
};
use wavecrush::scenario::{Scenario, ScheduledApp};
use wavecrush::sim::{self, RunOutput, Transmitter};

const SHIPPED: [&str; 6] = [
    "benign",
    "routed_noncense_s0",
    "routed_noncense_s2",
    "power_of_nope_legacy",
    "power_of_nope_modern",
    "patched_gateway",
];
const ATTACKS: [&str; 4] = [
    "routed_noncense_s0",
    "routed_noncense_s2",
    "power_of_nope_legacy",
    "power_of_nope_modern",
];

type Verdict = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.cfg"))
}

fn shipped(name: &str) -> Scenario {
    let path = scenario_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(scenario: &Scenario) -> RunOutput {
    sim::run(scenario).expect("scenario runs")
}

fn check(ok: bool, message: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message.into())
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    let home_id = HomeId(rng.gen());
    let src = NodeId(rng.gen());
    let dst = NodeId(rng.gen());
    let seq = rng.gen_range(0..16);
    let command = match rng.gen_range(0..9) {
        0 => Command::NonceGet,
        1 => Command::NonceReport { nonce: rng.gen() },
        2 => Command::S2NonceGet { seq: rng.gen() },
        3 => Command::S2NonceReport {
            seq: rng.gen(),
            nonce: rng.gen(),
        },
        4 => {
            let len = rng.gen_range(1..=32);
            Command::FindNodesInRange {
                mask: (0..len).map(|_| rng.gen()).collect(),
            }
        }
        5 => Command::CommandComplete,
        6 => Command::NopPower,
        7 => Command::Ack,
        _ => {
            // Classes outside the modeled set, so decoding cannot reinterpret them.
            let class = loop {
                let c: u8 = rng.gen();
                if ![0x01, 0x98, 0x9F].contains(&c) {
                    break c;
                }
            };
            let len = rng.gen_range(0..=20);
            Command::AppCommand {
                class,
                cmd: rng.gen(),
                params: (0..len).map(|_| rng.gen()).collect(),
            }
        }
    };
    let header_type = if command == Command::Ack {
        HeaderType::Ack
    } else if rng.gen_bool(0.2) {
        HeaderType::Multicast
    } else {
        HeaderType::Singlecast
    };
    let route = rng.gen_bool(0.3).then(|| {
        let count = rng.gen_range(1..=4);
        RouteHeader {
            hop: rng.gen_range(0..=count as u8),
            repeaters: (0..count).map(|_| NodeId(rng.gen())).collect(),
        }
    });
    Frame {
        home_id,
        src,
        ctrl: FrameControl {
            header_type,
            ack_requested: rng.gen(),
            routed: route.is_some(),
            seq,
        },
        dst,
        route,
        command,
    }
}

fn codec_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut flips = 0u64;
    for i in 0..10_000 {
        let frame = random_frame(&mut rng);
        let bytes = frame.encode().map_err(|e| format!("frame {i} failed to encode: {e} ({frame:?})"))?;
        let back = Frame::decode(&bytes).map_err(|e| format!("frame {i} failed to decode: {e}"))?;
        check(back == frame, format!("frame {i} changed in round trip"))?;
        for bit in 0..bytes.len() * 8 {
            let mut corrupt = bytes.clone();
            corrupt[bit / 8] ^= 1 << (bit % 8);
            check(Frame::decode(&corrupt).is_err(), format!("frame {i}: flip of bit {bit} accepted"))?;
            flips += 1;
        }
    }
    Ok(format!("10000 frames round-trip, {flips} single-bit corruptions rejected"))
}

/// Written separately from the codec: index loop, explicit seed.
fn xor_oracle(bytes: &[u8]) -> u8 {
    let mut acc: u8 = 0b1111_1111;
    let mut i = 0;
    while i < bytes.len() {
        acc ^= bytes[i];
        i += 1;
    }
    acc
}

fn checksum_oracle() -> Verdict {
    // Frozen vector: S0 Nonce Get, home 00000001, 1 -> 1.
    let golden = [0x00, 0x00, 0x00, 0x01, 0x01, 0x41, 0x00, 0x0C, 0x01, 0x98, 0x40];
    check(checksum(&golden) == 0x6B, "golden vector checksum is not 0x6B")?;
    check(checksum(&[]) == 0xFF, "empty input must give the seed 0xFF")?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1_000 {
        let len = rng.gen_range(0..=64);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        check(checksum(&bytes) == xor_oracle(&bytes), format!("string {i} disagrees"))?;
    }
    Ok("1000 random strings + golden vector match".into())
}

fn power_of_nope() -> Verdict {
    let mut scenario = shipped("power_of_nope_modern");
    let plan = scenario.attack.as_mut().expect("attack present");
    plan.count = Some(1);
    plan.start_ms = 12_000;
    scenario.duration_ms = 200_000;
    // All submitted while the sweep (12.001 s .. 123.361 s) has more than
    // one app timeout left, so each one expires inside it.
    scenario.app_schedule = [20_000, 50_000, 100_000, 118_000]
        .into_iter()
        .map(|at_ms| ScheduledApp {
            at_ms,
            ..scenario.app_schedule[0].clone()
        })
        .collect();
    let started = Instant::now();
    let out = run(&scenario);
    let wall = started.elapsed();
    let m = &out.metrics;
    check(m.attack_frames_sent == 1, format!("{} attack frames sent", m.attack_frames_sent))?;
    check(
        m.gateway_busy_us() == 111_360_000,
        format!("gateway_busy_ms = {}, want 111360", m.gateway_busy_ms()),
    )?;
    check(m.gateway_busy_us() < 120_000_000, "sweep is not under two minutes")?;
    check(m.app_processed == 0, format!("app_processed = {}", m.app_processed))?;
    check(
        m.app_blocked == m.app_submitted && m.app_submitted == 4,
        format!("app_blocked = {} of {}", m.app_blocked, m.app_submitted),
    )?;
    check(wall < Duration::from_secs(2), format!("wall time {wall:?}"))?;
    Ok(format!(
        "gateway_busy_ms = {}, app_processed = 0, app_blocked = {}/{} ({wall:.2?})",
        m.gateway_busy_ms(),
        m.app_blocked,
        m.app_submitted
    ))
}

fn routed_noncense() -> Verdict {
    let scenario = shipped("routed_noncense_s0");
    let started = Instant::now();
    let out = run(&scenario);
    let wall = started.elapsed();
    let m = &out.metrics;
    let busy_ms = m.gateway_busy_ms();
    check(m.attack_frames_sent == 256, format!("{} attack frames sent", m.attack_frames_sent))?;
    check(
        m.frames_on_air.get(&CommandKind::NonceGet) == Some(&256),
        "expected exactly 256 Nonce Get frames on air",
    )?;
    check(busy_ms >= 1_200_000.0, format!("gateway_busy_ms = {busy_ms} < 1200000"))?;
    check(busy_ms <= 1_260_000.0, format!("gateway_busy_ms = {busy_ms} beyond +5%"))?;
    check(wall < Duration::from_secs(5), format!("wall time {wall:?}"))?;
    Ok(format!("256 frames -> gateway_busy_ms = {busy_ms} ({wall:.2?})"))
}

fn legacy_timing() -> Verdict {
    let window_us = 600_000_000;
    let idle = |name: &str| -> Result<f64, String> {
        let scenario = shipped(name);
        let out = run(&scenario);
        let start = out.metrics.first_attack_us.ok_or(format!("{name}: no attack frame sent"))?;
        check(
            start + window_us <= out.metrics.duration_us,
            format!("{name}: run shorter than the 10 minute window"),
        )?;
        Ok(out.metrics.idle_fraction(start, start + window_us))
    };
    let legacy = idle("power_of_nope_legacy")?;
    let modern = idle("power_of_nope_modern")?;
    check(legacy < 0.01, format!("legacy idle fraction {legacy:.6} >= 1%"))?;
    check(modern > legacy, format!("modern idle {modern:.6} not above legacy {legacy:.6}"))?;
    Ok(format!("idle over 10 min: legacy {:.4}%, modern {:.2}%", legacy * 100.0, modern * 100.0))
}

fn patched_regression() -> Verdict {
    let mut summary = Vec::new();
    let mut scenarios: Vec<(String, Scenario)> = ATTACKS
        .iter()
        .map(|name| {
            let mut scenario = shipped(name);
            let gw = scenario.topology.gateway().expect("gateway").node_id;
            let profile = scenario.topology.nodes.get_mut(&gw).expect("gateway profile");
            profile.patched = true;
            profile.routes_to_unknown = false;
            (format!("{name}+patch"), scenario)
        })
        .collect();
    scenarios.push(("patched_gateway".into(), shipped("patched_gateway")));
    for (name, scenario) in &scenarios {
        let m = run(scenario).metrics;
        check(m.attack_frames_sent > 0, format!("{name}: attacker never fired"))?;
        check(m.gateway_busy_us() == 0, format!("{name}: gateway_busy_ms = {}", m.gateway_busy_ms()))?;
        check(m.app_blocked == 0, format!("{name}: app_blocked = {}", m.app_blocked))?;
        summary.push(name.as_str().to_owned());
    }
    Ok(format!("busy 0 ms, app_blocked 0 for {}", summary.join(", ")))
}

fn detection() -> Verdict {
    let table = CommandTable::default();
    let mut notes = Vec::new();
    for name in [
        "routed_noncense_s0",
        "routed_noncense_s2",
        "power_of_nope_modern",
        "power_of_nope_legacy",
        "benign",
    ] {
        let scenario = shipped(name);
        let out = run(&scenario);
        // Detection runs on the capture file, as the CLI would see it.
        let text = out.capture_text(&table).map_err(|e| e.to_string())?;
        let capture: Vec<_> = decode_capture(&text, &table)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{name}: {e}"))?;
        let gateway = scenario.topology.gateway().expect("gateway");
        let interval = gateway.heartbeat_interval_ms.expect("heartbeats on");
        let threshold = scenario.heartbeat_miss_threshold;
        let params = ScanParams {
            gateway: gateway.node_id,
            ..ScanParams::default()
        };
        let mut events = scan_frames(&capture, Some(&scenario.topology.node_ids()), &params);
        let lost = heartbeat_monitor(&capture, gateway.node_id, interval, threshold).map_err(|e| e.to_string())?;
        events.extend(lost.iter().cloned());

        if name == "benign" {
            check(events.is_empty(), format!("benign: {} anomalies", events.len()))?;
            notes.push("benign 0 anomalies".to_string());
            continue;
        }
        let flagged: HashSet<(u64, Frame)> = events
            .iter()
            .filter(|e| e.rule == Rule::SelfAddressed)
            .filter_map(|e| e.frame.clone().map(|f| (e.at, f)))
            .collect();
        let attack: Vec<_> = out.records.iter().filter(|r| r.from == Transmitter::Attacker).collect();
        let hits = attack
            .iter()
            .filter(|r| flagged.contains(&(r.t_us, r.frame.clone())))
            .count();
        check(
            !attack.is_empty() && hits == attack.len(),
            format!("{name}: SelfAddressed recall {hits}/{}", attack.len()),
        )?;
        let onset = out.metrics.first_block_us().ok_or(format!("{name}: gateway never blocked"))?;
        let first_lost = lost
            .iter()
            .map(|e| e.at)
            .find(|&at| at >= onset)
            .ok_or(format!("{name}: no HeartbeatLost after onset"))?;
        let latency = first_lost - onset;
        let bound = (threshold as u64 + 1) * interval * 1_000;
        check(latency <= bound, format!("{name}: HeartbeatLost {latency} us after onset > {bound}"))?;
        notes.push(format!("{name} recall {hits}/{} lost+{:.1}s", attack.len(), latency as f64 / 1e6));
    }
    Ok(notes.join("; "))
}

fn determinism() -> Verdict {
    let table = CommandTable::default();
    for name in SHIPPED {
        let scenario = shipped(name);
        let a = run(&scenario);
        let b = std::thread::scope(|s| s.spawn(|| run(&scenario)).join().expect("run thread"));
        let capture_a = a.capture_text(&table).map_err(|e| e.to_string())?;
        let capture_b = b.capture_text(&table).map_err(|e| e.to_string())?;
        check(capture_a == capture_b, format!("{name}: captures differ"))?;
        check(a.metrics.report() == b.metrics.report(), format!("{name}: metrics differ"))?;
    }
    Ok(format!("{} scenarios byte-identical across two runs", SHIPPED.len()))
}

fn sent(actions: &[Action]) -> impl Iterator<Item = &Frame> {
    actions.iter().filter_map(|a| match a {
        Action::Transmit { frame, .. } => Some(frame),
        _ => None,
    })
}

fn protocol_rules() -> Verdict {
    const HOME: HomeId = HomeId(0x00C0_FFEE);
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    let timing = TimingParams::default();

    // Multicast nonce requests never yield a report, at devices or the gateway.
    runner
        .run(
            &(2u8..=232, 1u8..=232, 0u8..16, any::<u8>(), any::<bool>(), any::<bool>()),
            |(dev_id, src, seq, s2_seq, s2, at_gateway)| {
                let command = if s2 { Command::S2NonceGet { seq: s2_seq } } else { Command::NonceGet };
                let mut frame = Frame::singlecast(HOME, NodeId(src), NodeId(dev_id), command);
                frame.ctrl.header_type = HeaderType::Multicast;
                frame.ctrl.seq = seq;
                let mut nonces = NonceSource::new(seq as u64);
                let actions = if at_gateway {
                    frame.dst = NodeId(1);
                    let mut gw = GatewayState::new(NodeId(1), HOME, Default::default(), vec![NodeId(2)]);
                    gw.handle_frame(&NodeProfile::gateway(NodeId(1)), &frame, 0, &timing, &mut nonces)
                } else {
                    let mut dev = DeviceState::new(NodeId(dev_id), HOME);
                    dev.handle_frame(&NodeProfile::device(NodeId(dev_id)), &frame, 0, &timing, &mut nonces)
                }
                .expect("same network");
                let reported = sent(&actions)
                    .any(|f| matches!(f.command, Command::NonceReport { .. } | Command::S2NonceReport { .. }));
                prop_assert!(!reported, "nonce report answered a multicast request");
                prop_assert!(nonces.issued().is_empty());
                Ok(())
            },
        )
        .map_err(|e| format!("multicast rule: {e}"))?;

    // Devices outside inclusion refuse Find Nodes In Range.
    runner
        .run(
            &(2u8..=232, 1u8..=232, proptest::collection::vec(any::<u8>(), 1..=32)),
            |(dev_id, src, mask)| {
                let frame = Frame::singlecast(HOME, NodeId(src), NodeId(dev_id), Command::FindNodesInRange { mask });
                let profile = NodeProfile::device(NodeId(dev_id));
                let actions = DeviceState::new(NodeId(dev_id), HOME)
                    .handle_frame(&profile, &frame, 0, &timing, &mut NonceSource::new(0))
                    .expect("same network");
                let refused = actions.contains(&Action::DropFrame {
                    reason: DropReason::NotInInclusion,
                });
                prop_assert!(refused, "sweep request not refused");
                let swept = sent(&actions).any(|f| matches!(f.command, Command::NopPower | Command::CommandComplete));
                prop_assert!(!swept, "device swept outside inclusion");
                Ok(())
            },
        )
        .map_err(|e| format!("inclusion rule: {e}"))?;

    // Nonces are unique across whole runs, whatever the seed.
    let mut issued_total = 0;
    let mut seeds = TestRunner::new(Config {
        cases: 8,
        failure_persistence: None,
        ..Config::default()
    });
    for name in ["routed_noncense_s0", "routed_noncense_s2"] {
        let base = shipped(name);
        seeds
            .run(&any::<u64>(), |seed| {
                let mut scenario = base.clone();
                scenario.seed = seed;
                scenario.duration_ms = 60_000;
                let out = run(&scenario);
                let unique: HashSet<&[u8]> = out.nonces.iter().map(|n| n.value.as_slice()).collect();
                prop_assert!(!out.nonces.is_empty());
                prop_assert_eq!(unique.len(), out.nonces.len());
                for record in &out.records {
                    if let Command::NonceReport { nonce } = &record.frame.command {
                        prop_assert!(unique.contains(&nonce[..]));
                    }
                }
                Ok(())
            })
            .map_err(|e| format!("nonce uniqueness ({name}): {e}"))?;
        let full = run(&base);
        let unique: HashSet<&[u8]> = full.nonces.iter().map(|n| n.value.as_slice()).collect();
        check(unique.len() == full.nonces.len(), format!("{name}: nonce reissued in full run"))?;
        issued_total += full.nonces.len();
    }
    Ok(format!(
        "multicast/inclusion rules hold over 512 cases each; {issued_total} nonces unique in full runs"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("Codec round-trip", codec_round_trip),
        ("Checksum oracle", checksum_oracle),
        ("Power of NOPe", power_of_nope),
        ("Routed Noncense", routed_noncense),
        ("Legacy timing trick", legacy_timing),
        ("Patched regression", patched_regression),
        ("Detection", detection),
        ("Determinism", determinism),
        ("Protocol rules", protocol_rules),
    ];
    let mut failures = 0;
    for (idx, (name, criterion)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = criterion();
        let elapsed = started.elapsed();
        match verdict {
            Ok(detail) => println!("PASS [{}] {name}: {detail} [{elapsed:.2?}]", idx + 1),
            Err(reason) => {
                failures += 1;
                println!("FAIL [{}] {name}: {reason} [{elapsed:.2?}]", idx + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

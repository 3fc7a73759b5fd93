mod common;

use std::time::Duration;

use common::*;
use serde_json::Value;
use tangible_bridge::config::Config;
use tangible_bridge::protocol::{encode_frame, SensorFrame, SensorKind};
use tangible_bridge::scene::SceneState;
use tangible_bridge::seasons::Season;
use tangible_bridge::server::{start, FrameSource};
use tangible_bridge::simulate::{generate, ScenarioSpec};

fn hold(sensor: SensorKind, value: f64, duration_s: f64) -> Vec<SensorFrame> {
    generate(&ScenarioSpec::Hold { sensor, value, duration_s, rate_hz: 5.0, noise: 0.0 }, 0).unwrap()
}

fn assert_consecutive(states: &[Received]) {
    for pair in states.windows(2) {
        assert_eq!(pair[1].tick(), pair[0].tick() + 1, "ticks must be strictly increasing without gaps");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn hold_20_streams_at_tick_rate() {
    let bridge =
        start(test_config(), FrameSource::Scheduled(hold(SensorKind::Temperature, 20.0, 60.0)), 1.0).await.unwrap();
    let mut ws = connect(bridge.local_addr()).await;
    let states = collect_states(&mut ws, Duration::from_secs(3)).await;
    let rate = (states.len() - 1) as f64 / (states.last().unwrap().at - states[0].at).as_secs_f64();
    assert!((9.0..=11.0).contains(&rate), "rate {rate}");
    assert_consecutive(&states);
    let first = states[0].json["season"].as_str().unwrap().to_owned();
    assert!(first == "spring" || first == "autumn");
    assert!(states.iter().all(|s| s.json["season"] == first.as_str()));
    for s in &states {
        let scene: SceneState = serde_json::from_value(s.json.clone()).unwrap();
        scene.validate().unwrap();
        assert_eq!(scene.temperature_c, 20.0);
    }
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn silent_bridge_keeps_streaming() {
    let config = Config { window_ms: 300, ..test_config() };
    let bridge = start(config, FrameSource::None, 1.0).await.unwrap();
    let mut ws = connect(bridge.local_addr()).await;
    let states = collect_states(&mut ws, Duration::from_millis(1500)).await;
    assert!(states.len() >= 8, "only {} states", states.len());
    assert_eq!(states[0].tick(), 0);
    assert_consecutive(&states);
    assert!(states.iter().all(|s| s.json["temperature_c"] == 20.0 && s.json["humidity_pct"] == 50.0));
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn two_clients_see_identical_messages() {
    let bridge =
        start(test_config(), FrameSource::Scheduled(hold(SensorKind::Temperature, 18.0, 60.0)), 1.0).await.unwrap();
    let (mut a, mut b) = (connect(bridge.local_addr()).await, connect(bridge.local_addr()).await);
    let (sa, sb) =
        tokio::join!(collect_states(&mut a, Duration::from_secs(2)), collect_states(&mut b, Duration::from_secs(2)));
    let lo = sa[0].tick().max(sb[0].tick());
    let hi = sa.last().unwrap().tick().min(sb.last().unwrap().tick());
    let window =
        |s: &[Received]| s.iter().filter(|m| (lo..=hi).contains(&m.tick())).map(|m| m.raw.clone()).collect::<Vec<_>>();
    let (wa, wb) = (window(&sa), window(&sb));
    assert!(wa.len() >= 15);
    assert_eq!(wa, wb);
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn inject_plumbing() {
    let bridge =
        start(test_config(), FrameSource::Scheduled(hold(SensorKind::Temperature, 12.0, 60.0)), 1.0).await.unwrap();
    let mut ws = connect(bridge.local_addr()).await;
    let first = wait_state(&mut ws, Duration::from_secs(2), |_| true).await.unwrap();
    assert_eq!(first.json["flame"], false);

    send(&mut ws, r#"{"type":"inject","kind":"flame","value":1}"#).await;
    let lit = wait_state(&mut ws, Duration::from_secs(2), |s| s["flame"] == true).await.unwrap();
    assert!(lit.tick() <= first.tick() + 20);

    send(&mut ws, r#"{"type":"inject","kind":"humidity","value":200}"#).await;
    wait_state(&mut ws, Duration::from_secs(2), |s| s["humidity_pct"] == 100.0).await.expect("humidity clamped to 100");

    send(&mut ws, r#"{"type":"inject","kind":"pressure","value":3}"#).await;
    send(&mut ws, r#"{"type":"wave"}"#).await;
    send(&mut ws, r#"{"type":"hello","v":2}"#).await;
    send(&mut ws, "garbage").await;
    // the connection survives all of the above
    wait_state(&mut ws, Duration::from_secs(2), |_| true).await.expect("still streaming");

    let d = bridge.snapshot().diagnostics;
    assert_eq!(d.injected, 2);
    assert_eq!(d.clamped, 1);
    assert_eq!(d.unknown_kind, 1);
    assert_eq!(d.unknown_messages, 2);
    assert_eq!(d.version_mismatch, 1);
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn injected_heat_reaches_summer_within_window() {
    let config = test_config();
    let window_ms = config.window_ms;
    let period_ms = config.tick_period_ms();
    let speed = 4.0;
    let bridge = start(config, FrameSource::None, speed).await.unwrap();
    let clock = bridge.clock();
    bridge.inject(SensorKind::Temperature, 10.0);
    let mut ws = connect(bridge.local_addr()).await;
    wait_state(&mut ws, Duration::from_secs(2), |s| s["season"] == "winter").await.expect("starts in winter");

    let first_hot = clock.now_ms();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    while bridge.transitions().iter().all(|e| e.to != Season::Summer) && tokio::time::Instant::now() < deadline {
        bridge.inject(SensorKind::Temperature, 28.0);
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let summer = bridge.transitions().into_iter().find(|e| e.to == Season::Summer).expect("summer reached");
    let injection_gap_ms = (5.0 * speed) as u64 + 1;
    assert!(
        summer.at_ms <= first_hot + window_ms + 2 * period_ms + injection_gap_ms,
        "summer at {} ms, first 28 at {first_hot} ms",
        summer.at_ms
    );
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn status_matches_last_broadcast() {
    let bridge =
        start(test_config(), FrameSource::Scheduled(hold(SensorKind::Humidity, 70.0, 60.0)), 1.0).await.unwrap();
    let mut ws = connect(bridge.local_addr()).await;
    let first = wait_state(&mut ws, Duration::from_secs(5), |_| true).await.unwrap();
    let mut seen_by_tick = std::collections::HashMap::from([(first.tick(), first.raw)]);

    let mut previous = bridge.snapshot().diagnostics;
    for _ in 0..3 {
        let (code, body) = http_get(bridge.local_addr(), "/status").await;
        assert_eq!(code, 200);
        let status: Value = serde_json::from_str(&body).unwrap();
        let tick = status["state"]["tick"].as_u64().unwrap();
        while !seen_by_tick.contains_key(&tick) {
            let s = wait_state(&mut ws, Duration::from_secs(2), |_| true).await.unwrap();
            seen_by_tick.insert(s.tick(), s.raw);
        }
        // the body embeds the broadcast bytes verbatim
        let seen = &seen_by_tick[&tick];
        let embedded = body.strip_prefix(r#"{"state":"#).unwrap();
        assert_eq!(&embedded[..seen.len()], seen.as_str());
        assert!(embedded[seen.len()..].starts_with(r#","diagnostics":{"#));

        let now = bridge.snapshot().diagnostics;
        assert!(now.injected >= previous.injected && now.clamped >= previous.clamped);
        previous = now;
    }

    let (code, body) = http_get(bridge.local_addr(), "/config").await;
    assert_eq!(code, 200);
    assert_eq!(Config::from_json(&body).unwrap(), *bridge.config());
    assert_eq!(http_get(bridge.local_addr(), "/nowhere").await.0, 404);
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stalled_client_is_dropped() {
    let config = Config { client_queue: 32, ..test_config() };
    let bridge =
        start(config, FrameSource::Scheduled(hold(SensorKind::Temperature, 20.0, 1200.0)), 50.0).await.unwrap();
    let _stalled = connect_stalled(bridge.local_addr()).await;
    let mut healthy = connect(bridge.local_addr()).await;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(20);
    let mut last_tick = None;
    while bridge.snapshot().diagnostics.slow_clients_dropped == 0 {
        assert!(tokio::time::Instant::now() < deadline, "stalled client never dropped");
        let s = wait_state(&mut healthy, Duration::from_secs(1), |_| true).await.expect("healthy client starved");
        if let Some(t) = last_tick {
            assert_eq!(s.tick(), t + 1);
        }
        last_tick = Some(s.tick());
    }
    assert_eq!(bridge.snapshot().diagnostics.slow_clients_dropped, 1);
    wait_state(&mut healthy, Duration::from_secs(1), |_| true).await.expect("healthy client keeps streaming");
    bridge.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn line_source_decodes_and_counts_errors() {
    let mut input = String::new();
    for seq in 0..5u16 {
        input.push_str(&encode_frame(&SensorFrame::new(seq, SensorKind::Temperature, 30.0)).unwrap());
    }
    input.push_str("$TW,5,T,30.0*00\n");
    input.push_str("hello\n");
    input.push_str("$TW,6,Q,1.0*");
    input.push_str(&format!("{:02X}\n", tangible_bridge::protocol::checksum(b"TW,6,Q,1.0")));
    input.push_str("$TW,7,H,");
    input.push_str(&format!("140.0*{:02X}\n", tangible_bridge::protocol::checksum(b"TW,7,H,140.0")));

    let source = FrameSource::Lines(Box::new(std::io::Cursor::new(input.into_bytes())));
    let bridge = start(test_config(), source, 1.0).await.unwrap();
    tokio::time::timeout(Duration::from_secs(5), bridge.wait_settled()).await.expect("settles");
    let d = bridge.snapshot().diagnostics;
    assert_eq!((d.bad_checksum, d.bad_syntax, d.unknown_kind, d.clamped), (1, 1, 1, 1));
    let state: Value = serde_json::from_str(&bridge.snapshot().state.unwrap()).unwrap();
    assert_eq!(state["season"], "summer");
    assert_eq!(state["humidity_pct"], 100.0);
    bridge.shutdown().await;
}

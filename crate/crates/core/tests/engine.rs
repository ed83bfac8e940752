mod common;

use common::scenario_path;
use rugsim::harness::trace::EventBody;
use rugsim::harness::{load_scenario_file, verify_trace, Engine, Trace, TraceEvent};

fn engine(name: &str) -> Engine {
    Engine::new(load_scenario_file(&scenario_path(name)).unwrap()).unwrap()
}

fn events(t: &Trace) -> Vec<TraceEvent> {
    t.events.iter().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn one_block_gives_one_row_per_chain() {
    let t = engine("reference.json").run(Some(1));
    assert_eq!(t.telemetry.len(), 3);
    assert!(t.telemetry.iter().all(|r| r.height == 1));
    let mut chains: Vec<u32> = t.telemetry.iter().map(|r| r.chain).collect();
    chains.dedup();
    assert_eq!(chains.len(), 3);
}

#[test]
fn stepping_matches_a_full_run() {
    let mut e = engine("scam_e2e.json");
    while !e.is_finished() {
        e.step();
    }
    assert_eq!(e.finish().trace_hash, engine("scam_e2e.json").run(None).trace_hash);
}

#[test]
fn rewards_cross_the_bridge_after_the_delay() {
    let scenario = load_scenario_file(&scenario_path("reference.json")).unwrap();
    let delay = scenario.bridge_delay_blocks;
    let t = Engine::new(scenario).unwrap().run(Some(300));
    let rugsafe = t.state["rugsafe_chain"].as_u64().unwrap() as u32;
    let mut crossed = 0;
    for ev in events(&t) {
        if let EventBody::RewardDelivered { source_chain, source_height, .. } = ev.event {
            assert_eq!(ev.chain, rugsafe);
            let want = if source_chain == rugsafe { source_height } else { source_height + delay };
            assert_eq!(ev.height, want, "reward from chain {source_chain} at {source_height}");
            crossed += (source_chain != rugsafe) as u32;
        }
    }
    assert!(crossed > 0);
}

#[test]
fn front_run_legs_execute_before_the_drain() {
    let t = engine("scam_e2e.json").run(None);
    let evs = events(&t);
    let drain = evs.iter().find(|e| matches!(e.event, EventBody::DrainExecuted { .. })).expect("drain executes");
    let leg = evs
        .iter()
        .find(|e| matches!(&e.event, EventBody::LegExecuted { agent, .. } if agent == "protected_user"))
        .expect("protected user is front-run");
    assert_eq!(leg.height, drain.height);
    assert!(leg.seq < drain.seq);
    let intent = evs
        .iter()
        .find(|e| matches!(&e.event, EventBody::IntentExecuted { agent, .. } if agent == "intent_user"))
        .expect("intent fires");
    assert!(intent.height <= drain.height);
}

#[test]
fn written_reference_trace_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let t = engine("reference.json").run(None);
    assert_eq!(t.failed_events, 0);
    t.write(dir.path()).unwrap();
    let r = verify_trace(dir.path()).unwrap();
    assert_eq!(r.trace_hash, t.trace_hash);
    assert_eq!(r.events, t.events.len() as u64);
}

#[test]
fn protocol_supply_matches_ledger() {
    let e = engine("scam_e2e.json");
    let t = e.run(None);
    let last = t.telemetry.last().unwrap();
    let balances = t.state["balances"].as_array().unwrap();
    let token = &t.state["protocol_token"];
    let total: rugsim::fixed::FixedAmount = balances
        .iter()
        .filter(|b| &b["token"] == token)
        .map(|b| b["amount"].as_str().unwrap().parse::<rugsim::fixed::FixedAmount>().unwrap())
        .sum();
    assert_eq!(total, last.current_supply);
}

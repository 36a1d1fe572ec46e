//! End-to-end world runs over the bundled scenario.

use simpleics_core::scenario::ScenarioDoc;
use simpleics_core::telemetry::Category;
use simpleics_core::world::{RunOptions, World};
use simpleics_core::{SegmentId, MICROS_PER_SEC};

fn benign_options() -> RunOptions {
    RunOptions { seed: Some(7), campaign_enabled: Some(false), stress: false }
}

#[test]
fn benign_minute_generates_industrial_traffic() {
    let doc = ScenarioDoc::default_scenario();
    let mut world = World::materialize(doc, &benign_options()).unwrap();
    world.run_until(60 * MICROS_PER_SEC).unwrap();

    let records = world.pipeline.records();
    assert!(!records.is_empty());
    let payloads = world.pipeline.count(Category::PacketPayload);
    // two PLCs at 50 ms scans alone exceed 10k frames a minute
    assert!(payloads > 10_000, "only {payloads} payload records");
    let flows = world.pipeline.count(Category::NetworkFlow);
    assert!(flows > 10_000);
    let operational = world.pipeline.count(Category::Operational);
    assert!(operational > 50, "historian samples expected, got {operational}");

    // zero attack labels without a campaign
    assert_eq!(world.pipeline.labelled_techniques().len(), 0);

    // conservation
    let c = world.fabric.counters;
    assert_eq!(c.sent, c.delivered + c.dropped);
}

#[test]
fn sorter_routes_match_classifier_through_the_network() {
    let doc = ScenarioDoc::default_scenario();
    let mut world = World::materialize(doc, &benign_options()).unwrap();
    world.run_until(180 * MICROS_PER_SEC).unwrap();

    let twin = world.twins.get("twin-iiot").unwrap();
    let simpleics_core::world::SceneKind::Sorter(scene) = &twin.scene else {
        panic!("expected sorter scene");
    };
    assert!(scene.sorted.len() >= 50, "only {} boxes sorted", scene.sorted.len());
    for item in &scene.sorted {
        let volts = simpleics_core::twins::counts_to_volts(item.weight_counts);
        let expected = simpleics_core::twins::classify_weight(volts).unwrap();
        assert_eq!(item.exit, expected, "box {} counts missorted", item.weight_counts);
    }
}

#[test]
fn production_line_produces_and_merges() {
    let doc = ScenarioDoc::default_scenario();
    let mut world = World::materialize(doc, &benign_options()).unwrap();
    world.run_until(180 * MICROS_PER_SEC).unwrap();

    let twin = world.twins.get("twin-ot").unwrap();
    let simpleics_core::world::SceneKind::Production(scene) = &twin.scene else {
        panic!("expected production scene");
    };
    let [line1, line2] = scene.station_counts();
    assert!(line1 > 10, "line1 produced {line1}");
    assert!(line2 > 10, "line2 produced {line2}");
    assert!(scene.exit_count() > 0);
}

#[test]
fn campaign_completes_all_phases() {
    let doc = ScenarioDoc::default_scenario();
    let options = RunOptions { seed: Some(11), campaign_enabled: Some(true), stress: false };
    let mut world = World::materialize(doc, &options).unwrap();
    world.run_until(1800 * MICROS_PER_SEC).unwrap();

    let runner = world.campaign.as_ref().unwrap();
    assert!(!runner.aborted, "campaign aborted: {:?}", runner.trace);
    assert!(runner.done, "campaign incomplete: {:?}", runner.trace);
    assert_eq!(runner.phases_completed(), 7);
    assert_eq!(runner.executed_techniques().len(), 19);

    let labelled = world.pipeline.labelled_techniques();
    assert!(labelled.contains("T1566.001"), "labelled: {labelled:?}");
    assert!(labelled.contains("T0836"), "labelled: {labelled:?}");
}

#[test]
fn segmentation_holds_under_attack() {
    let doc = ScenarioDoc::default_scenario();
    let options = RunOptions { seed: Some(3), campaign_enabled: Some(true), stress: false };
    let mut world = World::materialize(doc, &options).unwrap();
    world.run_until(1200 * MICROS_PER_SEC).unwrap();

    for record in world.pipeline.records() {
        if let simpleics_core::telemetry::Body::Flow(flow) = &record.body {
            if matches!(flow.verdict, simpleics_core::telemetry::Verdict::Delivered)
                && flow.src_segment == SegmentId::ItLan
            {
                assert!(
                    !matches!(flow.dst_segment, SegmentId::Ot | SegmentId::Iiot),
                    "IT_LAN packet delivered into {:?}",
                    flow.dst_segment
                );
            }
        }
    }
}

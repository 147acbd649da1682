use std::collections::BTreeSet;

use dfcv_core::config::SimConfig;
use dfcv_core::fog::{
    associate, create_initial_fogs, orchestrate, region_vehicle_count, should_merge, FogEvent, FogEventKind,
    FogTopology, OrchestrationParams, ResourceLedger, Snapshot,
};
use dfcv_core::model::{Direction, FogId, Infrastructure, Vehicle, VehicleId};
use proptest::prelude::*;

fn infrastructure() -> Infrastructure {
    Infrastructure::along_road(1000.0, 250.0, 500.0, 300.0).unwrap()
}

fn vehicles(layout: &[(f64, u32)]) -> Vec<Vehicle> {
    let road = SimConfig::default().road_bounds();
    layout
        .iter()
        .enumerate()
        .map(|(i, &(x, lane))| {
            let dir = if lane < 2 { Direction::Forward } else { Direction::Backward };
            Vehicle::new(VehicleId(i as u32), x, lane, dir, 20.0, &road).unwrap()
        })
        .collect()
}

fn check_pass(
    topology: &FogTopology,
    ledger: &ResourceLedger,
    snap: &Snapshot,
    infra: &Infrastructure,
    params: &OrchestrationParams,
) -> Result<(), TestCaseError> {
    topology.check_consistency(ledger).map_err(TestCaseError::fail)?;
    let held: u64 = topology.fogs().map(|f| f.allocated_units).sum();
    prop_assert_eq!(held + ledger.remaining(), ledger.total_pool());
    for (v, view) in snap.iter() {
        let fog = topology.fog_of(v);
        prop_assert_eq!(fog.is_some(), view.association.is_some(), "{} membership", v);
        if let (Some(f), Some(a)) = (fog, view.association) {
            prop_assert_eq!(topology.fog(f).unwrap().base_station_id, a.base_station);
        }
    }
    prop_assert!(topology.fogs().all(|f| !f.member_vehicle_ids.is_empty()));
    let fogs: Vec<_> = topology.fogs().collect();
    for (i, a) in fogs.iter().enumerate() {
        for b in &fogs[i + 1..] {
            if a.base_station_id != b.base_station_id {
                continue;
            }
            let pa: Vec<_> = a.member_vehicle_ids.iter().map(|&v| snap.position(v)).collect();
            let pb: Vec<_> = b.member_vehicle_ids.iter().map(|&v| snap.position(v)).collect();
            let region = region_vehicle_count(infra, a.base_station_id, snap.positions());
            prop_assert!(
                !should_merge(&pa, &pb, params.d_min, params.th_cap, region).unwrap(),
                "{} and {} left mergeable",
                a.id,
                b.id
            );
        }
    }
    Ok(())
}

fn split_children(events: &[FogEvent]) -> Vec<FogId> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            FogEventKind::Split { into: (a, b), .. } => Some([a, b]),
            _ => None,
        })
        .flatten()
        .collect()
}

fn arb_layout() -> impl Strategy<Value = Vec<(f64, u32)>> {
    prop::collection::vec((0.0..1000.0f64, 0u32..4), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn orchestration_keeps_topology_consistent(
        steps in prop::collection::vec(arb_layout(), 1..4),
        pool in 0u64..60,
        d_min in 100.0..400.0f64,
        th_cap in 0.2..=1.0f64,
    ) {
        let infra = infrastructure();
        let params = OrchestrationParams { d_min, th_cap, split_merge: true, units_per_member: 1 };
        let mut topology = FogTopology::new();
        let mut ledger = ResourceLedger::new(pool);
        let mut events = Vec::new();
        let n = steps[0].len();

        let first = vehicles(&steps[0]);
        let snap = Snapshot::new(&first, &associate(&first, &infra));
        create_initial_fogs(&mut topology, &mut ledger, &snap, 1, 0.0, &mut events);
        let mut seen: BTreeSet<FogId> = topology.fog_ids().into_iter().collect();

        for (t, layout) in steps.iter().enumerate() {
            // Every step keeps the same vehicle set; extra entries are ignored
            // and missing ones reuse the first layout.
            let layout: Vec<_> = (0..n).map(|i| *layout.get(i).unwrap_or(&steps[0][i])).collect();
            let vs = vehicles(&layout);
            let snap = Snapshot::new(&vs, &associate(&vs, &infra));
            let before = events.len();
            orchestrate(&mut topology, &mut ledger, &snap, &infra, &params, t as f64, &mut events).unwrap();
            for child in split_children(&events[before..]) {
                prop_assert!(seen.insert(child), "fog id {} reused", child);
            }
            seen.extend(topology.fog_ids());
            check_pass(&topology, &ledger, &snap, &infra, &params)?;
        }
    }

    #[test]
    fn disabled_split_merge_never_splits_or_merges(layout in arb_layout(), moved in arb_layout()) {
        let infra = infrastructure();
        let params = OrchestrationParams { d_min: 100.0, th_cap: 0.1, split_merge: false, units_per_member: 1 };
        let mut topology = FogTopology::new();
        let mut ledger = ResourceLedger::new(100);
        let mut events = Vec::new();
        let vs = vehicles(&layout);
        let snap = Snapshot::new(&vs, &associate(&vs, &infra));
        create_initial_fogs(&mut topology, &mut ledger, &snap, 1, 0.0, &mut events);
        let layout: Vec<_> = (0..layout.len()).map(|i| *moved.get(i).unwrap_or(&layout[i])).collect();
        let vs = vehicles(&layout);
        let snap = Snapshot::new(&vs, &associate(&vs, &infra));
        orchestrate(&mut topology, &mut ledger, &snap, &infra, &params, 1.0, &mut events).unwrap();
        let reshaped = events.iter().any(|e| {
            matches!(e.kind, FogEventKind::Split { .. } | FogEventKind::Merge { .. } | FogEventKind::SplitRefused { .. })
        });
        prop_assert!(!reshaped);
        topology.check_consistency(&ledger).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn pool_exhaustion_leaves_new_fogs_unfunded() {
    let infra = infrastructure();
    let vs = vehicles(&[(100.0, 0), (120.0, 1), (800.0, 2)]);
    let snap = Snapshot::new(&vs, &associate(&vs, &infra));
    let mut topology = FogTopology::new();
    let mut ledger = ResourceLedger::new(2);
    let mut events = Vec::new();
    create_initial_fogs(&mut topology, &mut ledger, &snap, 1, 0.0, &mut events);
    assert_eq!(topology.len(), 2);
    assert_eq!(ledger.remaining(), 0);
    let held: u64 = topology.fogs().map(|f| f.allocated_units).sum();
    assert_eq!(held, 2);
    topology.check_consistency(&ledger).unwrap();
}

use proptest::prelude::*;

use rtp_core::env::checkerboard::make_checkerboard;
use rtp_core::env::four_rooms::{Barrier, FourRoomsClass, FourRoomsConfig, FourRoomsPlp};
use rtp_core::env::terrain::make_terrain;
use rtp_core::plp::{checksums, load_policies, run_plp, save_policies, PlpConfig, PlpDomain, PolicySet};
use rtp_core::*;

fn assert_closes<W: WorldModel>(world: &W, start: &W::State, plan: &Plan<W::State>) {
    match replay(plan, world, start) {
        Replay::Valid { final_state, reward } => {
            assert!(world.is_goal(&final_state));
            assert!((reward - plan.cumulative_reward).abs() < 1e-9);
        }
        Replay::Invalid { step } => panic!("plan diverges at step {step}"),
    }
}

#[test]
fn flat_plans_replay_to_the_goal() {
    let policy = uniform_policy(4).unwrap();
    for seed in 0..5 {
        for regime in [RewardRegime::AllNegative, RewardRegime::Mixed] {
            let world = make_checkerboard(seed, 5, regime);
            let result = tp_plan(&world, &world.start, &policy, &PlannerConfig::optimal()).unwrap();
            for plan in &result.plans {
                assert_closes(&world, &world.start, plan);
            }
        }
        let terrain = make_terrain(seed);
        let result = tp_plan(&terrain, &terrain.start, &policy, &PlannerConfig::optimal()).unwrap();
        assert_closes(&terrain, &terrain.start, result.best_plan().unwrap());
    }
}

#[test]
fn hierarchical_plans_replay_to_the_goal() {
    let domain = FourRoomsPlp { class: FourRoomsClass::feasible(Barrier::Original), config: FourRoomsConfig::default() };
    for index in 0..10 {
        let p = domain.example(index);
        let h = domain.hierarchy(&p.world, &PolicySet::new(), false);
        let sol = rtp_solve(&p.world, &h, &p.start).unwrap();
        assert_closes(&p.world, &p.start, &sol.flat);
        assert_eq!(sol.flat.len(), sol.plan.flatten().len());
    }
}

#[test]
fn shortest_flat_plans_match_grid_distance() {
    let class = FourRoomsClass::shortest(Barrier::Alt1);
    let policy = uniform_policy(4).unwrap();
    for index in 0..5 {
        let p = class.example(index);
        let result = tp_plan(&p.world, &p.start, &policy, &PlannerConfig::optimal().with_budget(200_000)).unwrap();
        let best = result.best_plan().unwrap();
        assert_closes(&p.world, &p.start, best);
        assert_eq!(Some(best.len()), p.world.distance(p.start, p.world.goal));
    }
}

#[test]
fn saved_policies_load_back_unchanged() {
    let domain = FourRoomsPlp { class: FourRoomsClass::feasible(Barrier::Original), config: FourRoomsConfig { random_order: Some(3), ..Default::default() } };
    let cfg = PlpConfig { train: 0..4, eval: 100..102, ..PlpConfig::default() };
    let (_, policies) = run_plp(&domain, &cfg, None).unwrap();
    assert!(!policies.is_empty());
    let dir = tempfile::tempdir().unwrap();
    save_policies(dir.path(), &policies, "all").unwrap();
    let families: Vec<String> = policies.keys().cloned().collect();
    let loaded = load_policies(dir.path(), &families).unwrap();
    assert_eq!(checksums(&loaded), checksums(&policies));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planning_is_deterministic(seed in 0u64..1000, size in 2i32..7, mixed in any::<bool>()) {
        let regime = if mixed { RewardRegime::Mixed } else { RewardRegime::AllNegative };
        let world = make_checkerboard(seed, size, regime);
        let policy = uniform_policy(4).unwrap();
        let a = tp_plan(&world, &world.start, &policy, &PlannerConfig::optimal()).unwrap();
        let b = tp_plan(&world, &world.start, &policy, &PlannerConfig::optimal()).unwrap();
        prop_assert_eq!(&a.stats, &b.stats);
        prop_assert_eq!(&a.plans, &b.plans);
        prop_assert_eq!(a.stats.tree_size, (size * size) as u64);
    }

    #[test]
    fn random_order_is_seed_stable(index in 0u64..200, seed in 0u64..50) {
        let domain = FourRoomsPlp { class: FourRoomsClass::feasible(Barrier::Alt2), config: FourRoomsConfig { random_order: Some(seed), ..Default::default() } };
        let p = domain.example(index);
        let h = domain.hierarchy(&p.world, &PolicySet::new(), false);
        let a = rtp_solve(&p.world, &h, &p.start).unwrap();
        let b = rtp_solve(&p.world, &h, &p.start).unwrap();
        prop_assert_eq!(&a.flat, &b.flat);
        prop_assert_eq!(&a.stats, &b.stats);
    }
}

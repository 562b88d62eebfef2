use bilane::algorithms::targets::boltzmann;
use bilane::baselines::{ReachabilityPolicy, ThresholdPolicy};
use bilane::dynamics::{Behavior, VehicleState};
use bilane::env::{compute_reward, Env, EnvConfig, RewardEvent};
use bilane::geometry::{Rect, Vec2};
use bilane::scenario::{generate_scenario, Stage};
use bilane::sensors::{scan, Obstacle, SensorConfig, SensorWorld};
use proptest::prelude::*;

fn stage() -> impl Strategy<Value = Stage> {
    prop_oneof![Just(Stage::A), Just(Stage::B), Just(Stage::C)]
}

fn parked_box(x: f64, y: f64, h: f64) -> Obstacle {
    Obstacle { rect: Rect::new(Vec2::new(x, y), h, 4.5, 1.8), velocity: Vec2::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenarios_are_reproducible_and_disjoint(st in stage(), seed in any::<u64>()) {
        let a = generate_scenario(st, seed).unwrap();
        let b = generate_scenario(st, seed).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        if st == Stage::A {
            prop_assert_eq!(a.parked.len(), 12);
        }
        for (i, p) in a.parked.iter().enumerate() {
            for q in &a.parked[i + 1..] {
                prop_assert!(!p.rect(&a.road).overlaps(&q.rect(&a.road)));
            }
        }
    }

    #[test]
    fn extra_obstacle_never_lengthens_a_reading(
        ego_y in 2.0f64..5.0, heading in -0.3f64..0.3, v in 0.0f64..8.0,
        boxes in proptest::collection::vec((-12.0f64..40.0, -1.0f64..10.0, -0.5f64..0.5), 0..6),
        extra in (-8.0f64..30.0, -1.0f64..10.0, -0.5f64..0.5),
    ) {
        let ego = VehicleState::new(0.0, ego_y, heading, v);
        let fp = ego.footprint();
        let obstacles: Vec<Obstacle> = boxes.into_iter().map(|(x, y, h)| parked_box(x, y, h)).filter(|o| !o.rect.overlaps(&fp)).collect();
        let extra = parked_box(extra.0, extra.1, extra.2);
        prop_assume!(!extra.rect.overlaps(&fp));
        let cfg = SensorConfig::default();
        let mut world = SensorWorld { obstacles, curbs: Some((0.0, 9.0)) };
        let before = scan(&world, &ego, None, &cfg);
        world.obstacles.push(extra);
        let after = scan(&world, &ego, None, &cfg);
        for (a, b) in before.ultrasonic_distances.iter().zip(&after.ultrasonic_distances) {
            prop_assert!(b <= a && *b > 0.0 && b.is_finite());
        }
        for (a, b) in before.radar_returns.iter().zip(&after.radar_returns) {
            prop_assert!(b.distance <= a.distance && b.distance > 0.0 && b.distance.is_finite());
        }
    }

    #[test]
    fn interaction_reward_is_affine_in_coop(ve in 0.0f64..8.0, vo in 0.0f64..8.0, d in 0.0f64..79.9) {
        let r = |c| compute_reward(c, ve, vo, d, RewardEvent::None);
        let slope = (vo - ve) / 10.0;
        prop_assert!((r(0.25) - r(0.0) - 0.25 * slope).abs() < 1e-12);
        prop_assert!((r(0.5) - r(0.0) - 0.5 * slope).abs() < 1e-12);
    }

    #[test]
    fn boltzmann_ignores_constant_shift(q in proptest::collection::vec(-1600i32..1600, 3), k in -1600i32..1600) {
        // sixteenths keep every sum exact
        let q: Vec<f64> = q.into_iter().map(|v| v as f64 / 16.0).collect();
        let shifted: Vec<f64> = q.iter().map(|v| v + k as f64 / 16.0).collect();
        prop_assert_eq!(boltzmann(&q, 0.1), boltzmann(&shifted, 0.1));
    }

    #[test]
    fn baselines_are_pure_and_threshold_never_halts(
        seed in 0u64..500, ex in 0.0f64..190.0, ey in 1.8f64..5.0, ev in 0.0f64..8.0,
        ox in 0.0f64..190.0, oy in 1.8f64..5.0, ov in 0.0f64..8.0, ob in 0usize..3,
    ) {
        let env = Env::new(EnvConfig::default(), generate_scenario(Stage::C, seed).unwrap(), [0.0, 0.0], seed);
        let mut view = env.world_view(0);
        view.ego = VehicleState::new(ex, ey, 0.0, ev);
        view.opponent = Some((VehicleState::new(ox, oy, 0.0, ov), Behavior::ALL[ob]));
        let t = ThresholdPolicy::default();
        let b = t.decide(&view);
        prop_assert_ne!(b, Behavior::HaltShared);
        prop_assert_eq!(b, t.decide(&view));
        let r = ReachabilityPolicy::default();
        prop_assert_eq!(r.decide(&view), r.decide(&view));
    }
}

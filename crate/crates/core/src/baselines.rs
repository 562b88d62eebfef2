//! Rule-based agents working on privileged geometry: a distance-threshold
//! yielding rule and a rollout-based reachability planner.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{behavior_setpoints, track_setpoint, Behavior, VehicleState, MAX_ACCEL, VEHICLE_LENGTH, VEHICLE_WIDTH, Y_EGO, Y_SHARED};
use crate::env::{next_parked_distance, to_other_frame, Env, WorldView};
use crate::policy::Policy;
use crate::scenario::stoppable_gap_length;

/// Lateral boundary between the ego lane and the shared lane.
const LANE_SPLIT: f64 = 0.5 * (Y_EGO + Y_SHARED);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub d_threshold: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self { d_threshold: 90.0 }
    }
}

/// Whether the ego can occupy the space to its right: its footprint lies
/// inside a free gap and, while still merging, so does its braking distance.
pub fn right_space_free(view: &WorldView) -> bool {
    let rear = view.ego.x - 0.5 * VEHICLE_LENGTH;
    let front = view.ego.x + 0.5 * VEHICLE_LENGTH;
    let v = view.ego.speed;
    let run_out = if view.ego.y < LANE_SPLIT { 0.0 } else { VEHICLE_LENGTH.max(v * v / (2.0 * MAX_ACCEL) + 1.0) };
    view.right_gaps.iter().any(|&(a, b)| a <= rear && b >= front + run_out)
}

impl ThresholdPolicy {
    pub fn decide(&self, view: &WorldView) -> Behavior {
        let Some((opp, _)) = view.opponent else {
            return Behavior::FollowShared;
        };
        // re-enter once the opponent is behind
        if opp.x <= view.ego.x {
            return Behavior::FollowShared;
        }
        let dist = (opp.position() - view.ego.position()).norm();
        // the opponent's shared lane is at W - 4.5 in this frame
        let opp_in_shared = opp.y < view.road_width - LANE_SPLIT;
        if dist < self.d_threshold && opp_in_shared && right_space_free(view) {
            Behavior::PullOver
        } else {
            Behavior::FollowShared
        }
    }
}

impl Policy for ThresholdPolicy {
    fn name(&self) -> String {
        format!("threshold{}", self.d_threshold)
    }

    fn act(&self, env: &Env, agent: usize, _rng: &mut ChaCha8Rng) -> Behavior {
        self.decide(&env.world_view(agent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityPolicy {
    pub horizon_ticks: usize,
}

impl Default for ReachabilityPolicy {
    fn default() -> Self {
        Self { horizon_ticks: 200 }
    }
}

/// Forward simulation of one candidate plan.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Behavior applied right now.
    pub behavior: Behavior,
    /// Follow the shared lane until the ego's rear passes this x, then pull over.
    pub pull_at: Option<f64>,
    /// Ego states after each tick.
    pub ego: Vec<VehicleState>,
    /// Opponent states after each tick, in the ego frame.
    pub opponent: Vec<VehicleState>,
    /// First tick (index into the paths) with an overlap.
    pub first_collision: Option<usize>,
    /// Ends stopped inside the opponent's lane while the opponent is still ahead.
    pub blocking: bool,
    pub progress: f64,
}

fn step_behavior(s: &VehicleState, b: Behavior, right_parked: &[(f64, f64)]) -> VehicleState {
    let d = next_parked_distance(right_parked, s.front_x());
    track_setpoint(s, behavior_setpoints(b, d))
}

/// Rolls out the ego under `behavior` and the opponent under its current
/// behavior for `ticks` steps, checking overlaps at every tick.
pub fn rollout(view: &WorldView, behavior: Behavior, ticks: usize) -> Rollout {
    rollout_plan(view, behavior, None, ticks)
}

/// Like [`rollout`], but a follow switches to a pull-over once the ego's
/// rear reaches `pull_at`.
pub fn rollout_plan(view: &WorldView, behavior: Behavior, pull_at: Option<f64>, ticks: usize) -> Rollout {
    let (l, w) = (view.road_length, view.road_width);
    let mut ego = view.ego;
    let mut opp = view.opponent.map(|(s, b)| (to_other_frame(&s, l, w), b));
    let mut r = Rollout {
        behavior,
        pull_at,
        ego: Vec::with_capacity(ticks),
        opponent: Vec::new(),
        first_collision: None,
        blocking: false,
        progress: 0.0,
    };
    let mut current = behavior;
    for t in 0..ticks {
        if pull_at.is_some_and(|x| ego.x - 0.5 * VEHICLE_LENGTH >= x) {
            current = Behavior::PullOver;
        }
        ego = step_behavior(&ego, current, &view.right_parked);
        r.ego.push(ego);
        let fp = ego.footprint();
        let mut hit = false;
        if let Some((s, b)) = opp.as_mut() {
            *s = step_behavior(s, *b, &view.opponent_right_parked);
            let in_my_frame = to_other_frame(s, l, w);
            r.opponent.push(in_my_frame);
            hit |= fp.overlaps(&in_my_frame.footprint());
        }
        if r.first_collision.is_none() {
            let (lo, hi) = fp.y_extent();
            hit |= lo < 0.0 || hi > w || view.parked.iter().any(|p| p.overlaps(&fp));
            if hit {
                r.first_collision = Some(t);
            }
        }
    }
    if current == Behavior::PullOver {
        let opp_ahead = r.opponent.last().is_some_and(|o| o.x > ego.x);
        let clear = ego.footprint().y_extent().1 < w - Y_SHARED - 0.5 * VEHICLE_WIDTH;
        r.blocking = opp_ahead && ego.speed < 0.5 && !clear;
    }
    r.progress = ego.x - view.ego.x;
    r
}

impl ReachabilityPolicy {
    /// Candidate plans in tie-break order: follow through, follow and pull
    /// into each gap ahead, pull over now, halt.
    pub fn candidates(&self, view: &WorldView) -> Vec<Rollout> {
        let h = self.horizon_ticks;
        let rear = view.ego.x - 0.5 * VEHICLE_LENGTH;
        let mut out = vec![rollout(view, Behavior::FollowShared, h)];
        if view.opponent.is_some() {
            for &(a, b) in &view.right_gaps {
                if a > rear && b - a >= stoppable_gap_length() {
                    out.push(rollout_plan(view, Behavior::FollowShared, Some(a), h));
                }
            }
        }
        out.push(rollout(view, Behavior::PullOver, h));
        out.push(rollout(view, Behavior::HaltShared, h));
        out
    }

    pub fn decide(&self, view: &WorldView) -> Behavior {
        let mut best: Option<&Rollout> = None;
        let cands = self.candidates(view);
        // only strictly larger progress wins, so earlier candidates take ties
        for c in cands.iter().filter(|c| c.first_collision.is_none() && !c.blocking) {
            if best.is_none_or(|b| c.progress > b.progress + 1e-9) {
                best = Some(c);
            }
        }
        best.map_or(Behavior::HaltShared, |b| b.behavior)
    }
}

impl Policy for ReachabilityPolicy {
    fn name(&self) -> String {
        "reachability".into()
    }

    fn act(&self, env: &Env, agent: usize, _rng: &mut ChaCha8Rng) -> Behavior {
        self.decide(&env.world_view(agent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::V_CRUISE;
    use crate::env::EnvConfig;
    use crate::scenario::{generate_scenario, ParkedVehicle, Side, Stage};

    fn scene(parked: Vec<ParkedVehicle>, opp_x: f64) -> Env {
        let mut s = generate_scenario(Stage::A, 0).unwrap();
        s.parked = parked;
        s.agent_starts[1].x = opp_x;
        Env::new(EnvConfig::default(), s, [0.0, 0.0], 0)
    }

    fn car(side: Side, x: f64) -> ParkedVehicle {
        ParkedVehicle { side, center_x: x, length: 4.5, width: 1.8 }
    }

    #[test]
    fn threshold_distance_rule() {
        let p = ThresholdPolicy::default();
        let far = scene(vec![], 130.0);
        assert_eq!(p.decide(&far.world_view(0)), Behavior::FollowShared);
        let near = scene(vec![], 70.0);
        assert_eq!(p.decide(&near.world_view(0)), Behavior::PullOver);
        // ego alongside a parked car: no space to the right
        let blocked = scene(vec![car(Side::Right, 11.0)], 70.0);
        assert_eq!(p.decide(&blocked.world_view(0)), Behavior::FollowShared);
    }

    #[test]
    fn reachability_empty_road_follows() {
        let env = scene(vec![], 190.0);
        let mut view = env.world_view(0);
        view.opponent = None;
        assert_eq!(ReachabilityPolicy::default().decide(&view), Behavior::FollowShared);
    }

    #[test]
    fn reachability_halts_when_opponent_is_pulling_in_ahead() {
        // ego lane fully blocked beside and ahead of the ego; the opponent is
        // already merging into a gap on its own side
        let parked: Vec<ParkedVehicle> = (0..12).map(|k| car(Side::Right, 4.0 + 4.5 * k as f64)).collect();
        let mut s = generate_scenario(Stage::A, 0).unwrap();
        s.parked = parked;
        s.agent_starts[0] = VehicleState::new(10.0, Y_SHARED, 0.0, V_CRUISE);
        s.agent_starts[1] = VehicleState::new(40.0, 9.0 - Y_SHARED, std::f64::consts::PI, 2.0);
        let mut env = Env::new(EnvConfig::default(), s, [0.0, 0.0], 0);
        env.decide(1, Behavior::PullOver);
        let view = env.world_view(0);
        let c = ReachabilityPolicy::default().candidates(&view);
        let n = c.len();
        assert!(c[0].first_collision.is_some(), "follow should hit the opponent");
        assert!(c[1..n - 1].iter().all(|r| r.first_collision.is_some() || r.blocking));
        assert!(c[n - 1].first_collision.is_none());
        assert_eq!(ReachabilityPolicy::default().decide(&view), Behavior::HaltShared);
    }

    #[test]
    fn baselines_are_pure() {
        for seed in 0..20 {
            let s = generate_scenario(Stage::B, seed).unwrap();
            let env = Env::new(EnvConfig::default(), s, [0.2, 0.2], seed);
            let v = env.world_view(1);
            let r = ReachabilityPolicy::default();
            assert_eq!(r.decide(&v), r.decide(&v.clone()));
            let t = ThresholdPolicy::default();
            assert_ne!(t.decide(&v), Behavior::HaltShared);
        }
    }
}

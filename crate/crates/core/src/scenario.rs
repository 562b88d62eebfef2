//! Reproducible road layouts per curriculum stage.
//!
//! World frame: `x` runs along the road from agent 0's start end, `y` is
//! measured from agent 0's right curb. Agent 1 drives towards `-x`; its
//! right curb is the one at `y = road.width`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{VehicleState, VEHICLE_LENGTH, VEHICLE_WIDTH, V_CRUISE, Y_EGO, Y_SHARED};
use crate::geometry::{Rect, Vec2};

pub const MAX_LAYOUT_REJECTIONS: usize = 1000;
/// Margin by which parked footprints are inflated when computing gaps.
pub const GAP_CLEARANCE: f64 = 0.25;
/// Distance between an agent's start position and its road end.
pub const START_OFFSET: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("no feasible {side:?} layout for stage {stage:?} after {attempts} attempts")]
    Infeasible { stage: Stage, side: Side, attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
    C,
}

impl Stage {
    /// Probability of 6, 7 and 8 parked vehicles per side.
    pub fn count_probabilities(self) -> [f64; 3] {
        match self {
            Stage::A => [1.0, 0.0, 0.0],
            Stage::B => [0.8, 0.1, 0.1],
            Stage::C => [0.5, 0.3, 0.2],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Stage::A),
            "B" => Ok(Stage::B),
            "C" => Ok(Stage::C),
            other => Err(format!("unknown stage '{other}'")),
        }
    }
}

/// Curb side in the world frame. `Right` is agent 0's right curb (`y = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Right => Side::Left,
            Side::Left => Side::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub length: f64,
    pub width: f64,
    pub lane_y_ego: f64,
    pub lane_y_shared: f64,
    /// Lateral offset of a parked car's center from its curb.
    pub parked_offset: f64,
    /// Longitudinal interval in which cars are parked.
    pub parking_zone: (f64, f64),
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            length: 200.0,
            width: 9.0,
            lane_y_ego: Y_EGO,
            lane_y_shared: Y_SHARED,
            parked_offset: 1.0,
            parking_zone: (50.0, 150.0),
        }
    }
}

impl RoadSpec {
    pub fn curbs(&self) -> (f64, f64) {
        (0.0, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParkedVehicle {
    pub side: Side,
    pub center_x: f64,
    pub length: f64,
    pub width: f64,
}

impl ParkedVehicle {
    pub fn rect(&self, road: &RoadSpec) -> Rect {
        let y = match self.side {
            Side::Right => road.parked_offset,
            Side::Left => road.width - road.parked_offset,
        };
        Rect::new(Vec2::new(self.center_x, y), 0.0, self.length, self.width)
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.center_x - self.length / 2.0, self.center_x + self.length / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInit {
    pub road: RoadSpec,
    pub parked: Vec<ParkedVehicle>,
    /// World-frame start states of agent 0 and agent 1.
    pub agent_starts: [VehicleState; 2],
    pub stage: Stage,
    pub seed: u64,
}

impl ScenarioInit {
    pub fn parked_on(&self, side: Side) -> impl Iterator<Item = &ParkedVehicle> {
        self.parked.iter().filter(move |p| p.side == side)
    }

    /// The same physical scene seen with the agent roles swapped: rotate the
    /// world by pi about the road center.
    pub fn rotated(&self) -> ScenarioInit {
        let l = self.road.length;
        let parked = self
            .parked
            .iter()
            .map(|p| ParkedVehicle { side: p.side.opposite(), center_x: l - p.center_x, ..*p })
            .collect();
        let w = self.road.width;
        let flip = |s: &VehicleState| VehicleState {
            x: l - s.x,
            y: w - s.y,
            heading: crate::geometry::wrap_angle(s.heading + std::f64::consts::PI),
            ..*s
        };
        ScenarioInit {
            road: self.road,
            parked,
            agent_starts: [flip(&self.agent_starts[1]), flip(&self.agent_starts[0])],
            stage: self.stage,
            seed: self.seed,
        }
    }
}

pub fn sample_vehicle_count<R: Rng + ?Sized>(stage: Stage, rng: &mut R) -> usize {
    let p = stage.count_probabilities();
    let u: f64 = rng.gen();
    if u < p[0] {
        6
    } else if u < p[0] + p[1] {
        7
    } else {
        8
    }
}

/// Seeds a generator from `(stage, seed)` so the stages draw independent layouts.
fn scenario_rng(stage: Stage, seed: u64) -> ChaCha8Rng {
    let salt: u64 = match stage {
        Stage::A => 0x5eed_a,
        Stage::B => 0x5eed_b,
        Stage::C => 0x5eed_c,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

pub fn default_agent_starts(road: &RoadSpec) -> [VehicleState; 2] {
    [
        VehicleState::new(START_OFFSET, road.lane_y_shared, 0.0, V_CRUISE),
        VehicleState::new(road.length - START_OFFSET, road.width - road.lane_y_shared, std::f64::consts::PI, V_CRUISE),
    ]
}

pub fn generate_scenario(stage: Stage, seed: u64) -> Result<ScenarioInit, ScenarioError> {
    generate_scenario_on(RoadSpec::default(), stage, seed)
}

pub fn generate_scenario_on(road: RoadSpec, stage: Stage, seed: u64) -> Result<ScenarioInit, ScenarioError> {
    let mut rng = scenario_rng(stage, seed);
    let mut parked = Vec::new();
    for side in [Side::Right, Side::Left] {
        let count = sample_vehicle_count(stage, &mut rng);
        parked.extend(sample_side(&road, side, count, stage, &mut rng)?);
    }
    Ok(ScenarioInit { road, parked, agent_starts: default_agent_starts(&road), stage, seed })
}

fn sample_side<R: Rng>(
    road: &RoadSpec,
    side: Side,
    count: usize,
    stage: Stage,
    rng: &mut R,
) -> Result<Vec<ParkedVehicle>, ScenarioError> {
    let (z0, z1) = road.parking_zone;
    let lo = z0 + VEHICLE_LENGTH / 2.0;
    let hi = z1 - VEHICLE_LENGTH / 2.0;
    for _ in 0..MAX_LAYOUT_REJECTIONS {
        let mut centers: Vec<f64> = (0..count).map(|_| rng.gen_range(lo..=hi)).collect();
        centers.sort_by(f64::total_cmp);
        if centers.windows(2).any(|w| w[1] - w[0] < VEHICLE_LENGTH) {
            continue;
        }
        let cars: Vec<ParkedVehicle> = centers
            .into_iter()
            .map(|center_x| ParkedVehicle { side, center_x, length: VEHICLE_LENGTH, width: VEHICLE_WIDTH })
            .collect();
        if has_stoppable_gap(road, &cars) {
            return Ok(cars);
        }
    }
    Err(ScenarioError::Infeasible { stage, side, attempts: MAX_LAYOUT_REJECTIONS })
}

/// Minimum gap length in which a moving vehicle can come to a full stop.
pub fn stoppable_gap_length() -> f64 {
    VEHICLE_LENGTH + 2.0
}

/// True if a gap inside the parking zone is long enough to stop in.
fn has_stoppable_gap(road: &RoadSpec, cars: &[ParkedVehicle]) -> bool {
    let (z0, z1) = road.parking_zone;
    gaps_of(road, cars.iter())
        .into_iter()
        .any(|(a, b)| b.min(z1) - a.max(z0) >= stoppable_gap_length())
}

fn gaps_of<'a>(road: &RoadSpec, cars: impl Iterator<Item = &'a ParkedVehicle>) -> Vec<(f64, f64)> {
    let mut blocked: Vec<(f64, f64)> = cars
        .map(|p| {
            let (a, b) = p.x_range();
            ((a - GAP_CLEARANCE).max(0.0), (b + GAP_CLEARANCE).min(road.length))
        })
        .collect();
    blocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut cursor = 0.0;
    for (a, b) in blocked {
        if a > cursor {
            gaps.push((cursor, a));
        }
        cursor = f64::max(cursor, b);
    }
    if road.length > cursor {
        gaps.push((cursor, road.length));
    }
    gaps
}

/// Maximal free intervals along one curb, in world `x`, sorted.
pub fn enumerate_gaps(scenario: &ScenarioInit, side: Side) -> Vec<(f64, f64)> {
    gaps_of(&scenario.road, scenario.parked_on(side))
}

/// A set of persisted scenarios shared by every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub stage: Stage,
    pub base_seed: u64,
    pub scenarios: Vec<ScenarioInit>,
}

impl TestSet {
    pub fn generate(stage: Stage, count: usize, base_seed: u64) -> Result<Self, ScenarioError> {
        let scenarios = (0..count as u64)
            .map(|i| generate_scenario(stage, base_seed.wrapping_mul(1_000_003).wrapping_add(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { stage, base_seed, scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

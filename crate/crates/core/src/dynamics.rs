//! Kinematic single-track vehicle model and the low-level controllers that
//! turn behavior set-points into steering and acceleration commands.

use serde::{Deserialize, Serialize};

use crate::geometry::{Rect, Vec2};

/// Simulation step, 20 Hz.
pub const DT: f64 = 0.05;
pub const WHEELBASE: f64 = 2.7;
pub const MAX_STEER: f64 = 0.5;
pub const MAX_ACCEL: f64 = 3.0;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;

/// Lateral gain on position error [rad/m].
pub const K_LATERAL: f64 = 1.0;
/// Heading damping gain [rad/rad]. Gives a damping ratio of about 1.0
/// for the linearised closed loop, independent of speed.
pub const K_HEADING: f64 = 3.3;
/// Speed tracking gain [1/s].
pub const K_SPEED: f64 = 1.5;

pub const Y_EGO: f64 = 2.1;
pub const Y_SHARED: f64 = 4.5;
pub const V_CRUISE: f64 = 8.0;
pub const V_CREEP: f64 = 2.0;
/// Below this distance to the next parked car a pull-over comes to a stop.
pub const PULL_OVER_STOP_DISTANCE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steering: f64,
    pub acceleration: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self { x, y, heading, speed, steering: 0.0, acceleration: 0.0 }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading).scale(self.speed)
    }

    pub fn footprint(&self) -> Rect {
        Rect::new(self.position(), self.heading, VEHICLE_LENGTH, VEHICLE_WIDTH)
    }

    pub fn front_x(&self) -> f64 {
        self.x + 0.5 * VEHICLE_LENGTH
    }
}

/// The three behavior decisions available to an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Behavior {
    FollowShared,
    PullOver,
    HaltShared,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::FollowShared, Behavior::PullOver, Behavior::HaltShared];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Behavior::FollowShared => 0,
            Behavior::PullOver => 1,
            Behavior::HaltShared => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSetpoint {
    pub y_goal: f64,
    pub v_goal: f64,
}

/// Maps a behavior to lateral/speed targets. `next_parked_distance` is the
/// free distance ahead to the next parked car in the ego lane, `None` if
/// there is none.
pub fn behavior_setpoints(behavior: Behavior, next_parked_distance: Option<f64>) -> BehaviorSetpoint {
    match behavior {
        Behavior::FollowShared => BehaviorSetpoint { y_goal: Y_SHARED, v_goal: V_CRUISE },
        Behavior::HaltShared => BehaviorSetpoint { y_goal: Y_SHARED, v_goal: 0.0 },
        Behavior::PullOver => {
            let close = next_parked_distance.is_some_and(|d| d < PULL_OVER_STOP_DISTANCE);
            BehaviorSetpoint { y_goal: Y_EGO, v_goal: if close { 0.0 } else { V_CREEP } }
        }
    }
}

/// Forward-Euler step of the kinematic single-track model. Commands
/// saturate at the actuator limits; speed never goes negative.
pub fn step_single_track(state: &VehicleState, steering_cmd: f64, accel_cmd: f64, dt: f64) -> VehicleState {
    let steering = steering_cmd.clamp(-MAX_STEER, MAX_STEER);
    let acceleration = accel_cmd.clamp(-MAX_ACCEL, MAX_ACCEL);
    let v = state.speed;
    let (s, c) = state.heading.sin_cos();
    VehicleState {
        x: state.x + v * c * dt,
        y: state.y + v * s * dt,
        heading: state.heading + v * steering.tan() / WHEELBASE * dt,
        speed: (v + acceleration * dt).max(0.0),
        steering,
        acceleration,
    }
}

/// Proportional lateral law with heading damping, for a road aligned with +x.
pub fn lateral_control(state: &VehicleState, y_goal: f64) -> f64 {
    (K_LATERAL * (y_goal - state.y) - K_HEADING * state.heading).clamp(-MAX_STEER, MAX_STEER)
}

pub fn longitudinal_control(state: &VehicleState, v_goal: f64) -> f64 {
    (K_SPEED * (v_goal - state.speed)).clamp(-MAX_ACCEL, MAX_ACCEL)
}

/// One 20 Hz control-and-integrate cycle towards a set-point.
pub fn track_setpoint(state: &VehicleState, sp: BehaviorSetpoint) -> VehicleState {
    let steer = lateral_control(state, sp.y_goal);
    let accel = longitudinal_control(state, sp.v_goal);
    step_single_track(state, steer, accel, DT)
}

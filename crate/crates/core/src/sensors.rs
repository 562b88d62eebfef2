//! Ultrasonic and radar models computed by exact ray/cone casting against
//! oriented rectangles.
//!
//! All geometry here is expressed in the observing agent's egocentric frame:
//! `x` forward along its driving direction, `y` measured from its right curb.

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleState, VEHICLE_LENGTH, VEHICLE_WIDTH};
use crate::geometry::{Rect, Segment, Vec2};

/// Sensor pose on the vehicle body, relative to the vehicle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Mount {
    fn world(&self, ego: &VehicleState) -> (Vec2, f64) {
        let p = ego.position() + Vec2::new(self.x, self.y).rotate(ego.heading);
        (p, ego.heading + self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltrasonicSensor {
    pub mount: Mount,
    pub fov: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarSensor {
    pub mount: Mount,
    pub n_rays: usize,
    pub fov: f64,
    pub max_range: f64,
}

impl RadarSensor {
    /// Ray angle offsets, symmetric about the boresight.
    pub fn ray_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.fov / (self.n_rays - 1) as f64;
        let mid = (self.n_rays - 1) as f64 / 2.0;
        (0..self.n_rays).map(move |i| (i as f64 - mid) * step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub ultrasonic: Vec<UltrasonicSensor>,
    pub radar: RadarSensor,
}

impl Default for SensorConfig {
    /// Four corner sensors and two per side at 40 deg / 5 m, plus one forward
    /// radar with 32 rays over 60 deg out to 80 m. Sensors come in
    /// left/right pairs `(2k, 2k + 1)`.
    fn default() -> Self {
        let fov = 40f64.to_radians();
        let hl = VEHICLE_LENGTH / 2.0;
        let hw = VEHICLE_WIDTH / 2.0;
        let q = std::f64::consts::FRAC_PI_4;
        let h = std::f64::consts::FRAC_PI_2;
        let mounts = [
            Mount { x: hl, y: hw, yaw: q },
            Mount { x: hl, y: -hw, yaw: -q },
            Mount { x: 1.1, y: hw, yaw: h },
            Mount { x: 1.1, y: -hw, yaw: -h },
            Mount { x: -1.1, y: hw, yaw: h },
            Mount { x: -1.1, y: -hw, yaw: -h },
            Mount { x: -hl, y: hw, yaw: 3.0 * q },
            Mount { x: -hl, y: -hw, yaw: -3.0 * q },
        ];
        Self {
            ultrasonic: mounts.into_iter().map(|mount| UltrasonicSensor { mount, fov, max_range: 5.0 }).collect(),
            radar: RadarSensor {
                mount: Mount { x: hl, y: 0.0, yaw: 0.0 },
                n_rays: 32,
                fov: 60f64.to_radians(),
                max_range: 80.0,
            },
        }
    }
}

impl SensorConfig {
    pub fn frame_len(&self) -> usize {
        self.ultrasonic.len() + 2 * self.radar.n_rays
    }

    /// Layout reflected across the vehicle's longitudinal axis.
    pub fn mirrored(&self) -> SensorConfig {
        let m = |mount: Mount| Mount { x: mount.x, y: -mount.y, yaw: -mount.yaw };
        SensorConfig {
            ultrasonic: self.ultrasonic.iter().map(|u| UltrasonicSensor { mount: m(u.mount), ..*u }).collect(),
            radar: RadarSensor { mount: m(self.radar.mount), ..self.radar },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub rect: Rect,
    pub velocity: Vec2,
}

/// Everything the sensors can see. Curbs are walls at `y = curbs.0` and
/// `y = curbs.1`, visible to ultrasonics only.
#[derive(Debug, Clone, Default)]
pub struct SensorWorld {
    pub obstacles: Vec<Obstacle>,
    pub curbs: Option<(f64, f64)>,
}

impl SensorWorld {
    fn curb_segments(&self) -> Vec<Segment> {
        const REACH: f64 = 1e4;
        match self.curbs {
            Some((lo, hi)) => vec![
                Segment::new(Vec2::new(-REACH, lo), Vec2::new(REACH, lo)),
                Segment::new(Vec2::new(-REACH, hi), Vec2::new(REACH, hi)),
            ],
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarReturn {
    pub distance: f64,
    pub relative_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub ultrasonic_distances: Vec<f64>,
    pub radar_returns: Vec<RadarReturn>,
}

const MIN_READING: f64 = 1e-6;

/// Closest distance from `p` to the part of `seg` inside the cone with
/// boundary directions `lo` (clockwise edge) and `hi`.
fn cone_segment_distance(p: Vec2, lo: Vec2, hi: Vec2, seg: &Segment) -> Option<f64> {
    let e = seg.b - seg.a;
    let w = seg.a - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    // each constraint: c0 + t * c1 >= 0
    for (c0, c1) in [(lo.cross(w), lo.cross(e)), (w.cross(hi), e.cross(hi))] {
        if c1.abs() < 1e-15 {
            if c0 < 0.0 {
                return None;
            }
        } else {
            let t = -c0 / c1;
            if c1 > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let ee = e.dot(e);
    let t = if ee > 0.0 { (-w.dot(e) / ee).clamp(t0, t1) } else { t0 };
    Some((w + e.scale(t)).norm())
}

/// Orientation-independent version, so that reflected scenes (which reverse
/// every rectangle edge) give bit-identical readings.
fn cone_distance_either_way(p: Vec2, lo: Vec2, hi: Vec2, seg: &Segment) -> f64 {
    let fwd = cone_segment_distance(p, lo, hi, seg);
    let rev = cone_segment_distance(p, lo, hi, &Segment::new(seg.b, seg.a));
    match (fwd, rev) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => f64::INFINITY,
    }
}

pub fn ultrasonic_scan(world: &SensorWorld, ego: &VehicleState, config: &SensorConfig) -> Vec<f64> {
    let curbs = world.curb_segments();
    config
        .ultrasonic
        .iter()
        .map(|sensor| {
            let (p, dir) = sensor.mount.world(ego);
            let half = sensor.fov / 2.0;
            let lo = Vec2::from_angle(dir - half);
            let hi = Vec2::from_angle(dir + half);
            let mut best = sensor.max_range;
            for ob in &world.obstacles {
                // skip obstacles that cannot be within range
                let reach = sensor.max_range + ob.rect.bounding_radius();
                let d = ob.rect.center - p;
                if d.dot(d) > reach * reach {
                    continue;
                }
                for edge in ob.rect.edges() {
                    best = best.min(cone_distance_either_way(p, lo, hi, &edge));
                }
            }
            for c in &curbs {
                best = best.min(cone_distance_either_way(p, lo, hi, c));
            }
            best.max(MIN_READING)
        })
        .collect()
}

/// Radar returns per ray. `world` must not contain the ego vehicle; the
/// opponent is passed as an extra moving obstacle.
pub fn radar_scan(
    world: &SensorWorld,
    ego: &VehicleState,
    opponent: Option<&Obstacle>,
    config: &SensorConfig,
) -> Vec<RadarReturn> {
    let radar = &config.radar;
    let (p, boresight) = radar.mount.world(ego);
    let ego_v = ego.velocity();
    radar
        .ray_offsets()
        .map(|off| {
            let d = Vec2::from_angle(boresight + off);
            let mut best: Option<(f64, Vec2)> = None;
            for ob in world.obstacles.iter().chain(opponent) {
                if let Some(t) = ob.rect.ray_hit(p, d) {
                    if t <= radar.max_range && best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, ob.velocity));
                    }
                }
            }
            match best {
                Some((t, v)) => RadarReturn { distance: t.max(MIN_READING), relative_velocity: (v - ego_v).dot(d) },
                None => RadarReturn { distance: radar.max_range, relative_velocity: 0.0 },
            }
        })
        .collect()
}

pub fn scan(world: &SensorWorld, ego: &VehicleState, opponent: Option<&Obstacle>, config: &SensorConfig) -> SensorFrame {
    let mut us_world_opp;
    let us_world = match opponent {
        Some(o) => {
            us_world_opp = world.clone();
            us_world_opp.obstacles.push(*o);
            &us_world_opp
        }
        None => world,
    };
    SensorFrame {
        ultrasonic_distances: ultrasonic_scan(us_world, ego, config),
        radar_returns: radar_scan(world, ego, opponent, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_box(x: f64, y: f64, heading: f64) -> Obstacle {
        Obstacle { rect: Rect::new(Vec2::new(x, y), heading, 4.5, 1.8), velocity: Vec2::default() }
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> (SensorWorld, VehicleState) {
        let ego = VehicleState::new(0.0, rng.gen_range(2.0..5.0), rng.gen_range(-0.3..0.3), rng.gen_range(0.0..8.0));
        let mut obstacles = Vec::new();
        for _ in 0..rng.gen_range(0..8) {
            loop {
                let o = static_box(rng.gen_range(-12.0..40.0), rng.gen_range(-1.0..10.0), rng.gen_range(-0.5..0.5));
                if !o.rect.overlaps(&ego.footprint()) {
                    obstacles.push(o);
                    break;
                }
            }
        }
        (SensorWorld { obstacles, curbs: Some((0.0, 9.0)) }, ego)
    }

    /// Independent oracle: nearest segment intersection over the four edges.
    fn edge_hit(rect: &Rect, origin: Vec2, dir: Vec2) -> Option<f64> {
        rect.edges().iter().filter_map(|e| e.ray_hit(origin, dir)).min_by(f64::total_cmp)
    }

    #[test]
    fn empty_world_reads_max_range() {
        let cfg = SensorConfig::default();
        let ego = VehicleState::new(0.0, 4.5, 0.0, 0.0);
        let f = scan(&SensorWorld::default(), &ego, None, &cfg);
        assert!(f.ultrasonic_distances.iter().all(|&d| d == 5.0));
        assert!(f.radar_returns.iter().all(|r| r.distance == 80.0 && r.relative_velocity == 0.0));
        assert_eq!(f.radar_returns.len(), 32);
    }

    #[test]
    fn orthogonal_face_one_meter_ahead() {
        let cfg = SensorConfig {
            ultrasonic: vec![UltrasonicSensor { mount: Mount { x: 0.0, y: 0.0, yaw: 0.0 }, fov: 0.6, max_range: 5.0 }],
            ..SensorConfig::default()
        };
        let ego = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let world = SensorWorld { obstacles: vec![Obstacle { rect: Rect::new(Vec2::new(2.0, 0.0), 0.0, 2.0, 4.0), velocity: Vec2::default() }], curbs: None };
        let d = ultrasonic_scan(&world, &ego, &cfg);
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_world_stationary_ego_zero_doppler() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (world, mut ego) = random_scene(&mut rng);
        ego.speed = 0.0;
        let r = radar_scan(&world, &ego, None, &SensorConfig::default());
        assert!(r.iter().all(|x| x.relative_velocity == 0.0));
    }

    #[test]
    fn head_on_closing_speed() {
        let ego = VehicleState::new(0.0, 4.5, 0.0, 8.0);
        let opp = Obstacle { rect: Rect::new(Vec2::new(40.0, 4.5), std::f64::consts::PI, 4.5, 1.8), velocity: Vec2::new(-8.0, 0.0) };
        let cfg = SensorConfig::default();
        let r = radar_scan(&SensorWorld::default(), &ego, Some(&opp), &cfg);
        // the two central rays straddle the axis; both must see -16 * cos(off)
        let central = &r[15];
        let off = cfg.radar.ray_offsets().nth(15).unwrap();
        assert!((central.relative_velocity + 16.0 * off.cos()).abs() < 1e-9);
        assert!((central.distance - (40.0 - 2.25 - 2.25) / off.cos()).abs() < 1e-6);
    }

    #[test]
    fn ultrasonic_matches_dense_sweep() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..300 {
            let (world, ego) = random_scene(&mut rng);
            let exact = ultrasonic_scan(&world, &ego, &cfg);
            let mut segs: Vec<Segment> = world.obstacles.iter().flat_map(|o| o.rect.edges()).collect();
            // curbs clipped to the neighbourhood of the ego
            for y in [0.0, 9.0] {
                segs.push(Segment::new(Vec2::new(-10.0, y), Vec2::new(10.0, y)));
            }
            for (k, s) in cfg.ultrasonic.iter().enumerate() {
                let (p, dir) = s.mount.world(&ego);
                let (lo, hi) = (dir - s.fov / 2.0, dir + s.fov / 2.0);
                // boundary rays catch segments entering through a cone edge
                let mut sweep = [lo, hi]
                    .iter()
                    .map(|&a| segs.iter().filter_map(|g| g.ray_hit(p, Vec2::from_angle(a))).fold(s.max_range, f64::min))
                    .fold(s.max_range, f64::min);
                // dense points along every segment, kept if inside the cone
                for g in &segs {
                    let e = g.b - g.a;
                    let n = (e.norm() / 0.002).ceil() as usize;
                    for i in 0..=n {
                        let q = g.a + e.scale(i as f64 / n as f64);
                        let v = q - p;
                        let r = v.norm();
                        if r >= sweep {
                            continue;
                        }
                        let ang = crate::geometry::wrap_angle(v.y.atan2(v.x) - dir);
                        if ang.abs() <= s.fov / 2.0 {
                            sweep = r;
                        }
                    }
                }
                // the exact reading can only be closer than any sampled ray
                assert!(exact[k] <= sweep + 1e-9);
                worst = worst.max(sweep - exact[k]);
            }
        }
        assert!(worst < 0.01, "max deviation {worst}");
    }

    #[test]
    fn radar_matches_segment_oracle() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let (world, ego) = random_scene(&mut rng);
            let r = radar_scan(&world, &ego, None, &cfg);
            let (p, bs) = cfg.radar.mount.world(&ego);
            for (ret, off) in r.iter().zip(cfg.radar.ray_offsets()) {
                let d = Vec2::from_angle(bs + off);
                let o = world.obstacles.iter().filter_map(|o| edge_hit(&o.rect, p, d)).fold(80.0, f64::min);
                assert!((ret.distance - o).abs() < 1e-6, "{} vs {}", ret.distance, o);
            }
        }
    }

    #[test]
    fn mirrored_scene_gives_mirrored_readings() {
        let cfg = SensorConfig::default();
        let mcfg = cfg.mirrored();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let (world, ego) = random_scene(&mut rng);
            let mirror_rect = |r: &Rect| Rect::new(Vec2::new(r.center.x, -r.center.y), -r.heading, r.length, r.width);
            let mworld = SensorWorld {
                obstacles: world.obstacles.iter().map(|o| Obstacle { rect: mirror_rect(&o.rect), velocity: Vec2::new(o.velocity.x, -o.velocity.y) }).collect(),
                curbs: Some((-9.0, 0.0)),
            };
            let mego = VehicleState { y: -ego.y, heading: -ego.heading, ..ego };
            let a = scan(&world, &ego, None, &cfg);
            let b = scan(&mworld, &mego, None, &mcfg);
            assert_eq!(a.ultrasonic_distances, b.ultrasonic_distances);
            let n = a.radar_returns.len();
            for i in 0..n {
                assert_eq!(a.radar_returns[i], b.radar_returns[n - 1 - i]);
            }
        }
    }

    #[test]
    fn adding_obstacle_never_increases_readings() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let (mut world, ego) = random_scene(&mut rng);
            let before = scan(&world, &ego, None, &cfg);
            let extra = static_box(rng.gen_range(-8.0..30.0), rng.gen_range(-1.0..10.0), rng.gen_range(-0.5..0.5));
            if extra.rect.overlaps(&ego.footprint()) {
                continue;
            }
            world.obstacles.push(extra);
            let after = scan(&world, &ego, None, &cfg);
            for (a, b) in before.ultrasonic_distances.iter().zip(&after.ultrasonic_distances) {
                assert!(b <= a);
            }
            for (a, b) in before.radar_returns.iter().zip(&after.radar_returns) {
                assert!(b.distance <= a.distance);
                assert!(b.distance > 0.0 && b.distance.is_finite());
            }
        }
    }
}

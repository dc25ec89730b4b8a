use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Result, SimError, V_MAX_KMH, V_MIN_KMH};
use crate::rng;

/// Kinematic state of the ego vehicle at one timestep.
///
/// `heading` is measured from the road axis (+y) towards +x. `v_f` and
/// `heading` describe the step that arrived at this state, so for `t >= 1`
/// `|p_t - p_{t-1}| / dt == v_f / 3.6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Forward velocity, km/h.
    pub v_f: f64,
    /// Angular velocity, rad/s.
    pub v_delta: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Number of states in the episode.
    pub steps: usize,
    /// Seconds per step.
    pub dt: f64,
    pub lanes: usize,
    /// Lane width, m.
    pub lane_width: f64,
    pub lane_changes: usize,
    /// Duration of one lane-change manoeuvre, s.
    pub lane_change_duration: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Maximum amplitude of the sinusoidal speed variation, km/h.
    pub speed_variation: f64,
    /// Prediction horizon the episode must support (`steps >= 2 * horizon + 1`).
    pub horizon: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            dt: 0.1,
            lanes: 3,
            lane_width: 3.5,
            lane_changes: 1,
            lane_change_duration: 1.5,
            v_min: V_MIN_KMH,
            v_max: V_MAX_KMH,
            speed_variation: 15.0,
            horizon: 5,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(SimError::Config(m.to_string()));
        if self.lanes < 2 {
            return err("at least 2 lanes are required");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return err("dt must be positive");
        }
        if !(self.lane_width > 0.0) {
            return err("lane width must be positive");
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return err("velocity band must satisfy 0 < v_min < v_max");
        }
        if self.horizon == 0 {
            return err("horizon must be at least 1");
        }
        if self.steps < 2 * self.horizon + 1 {
            return Err(SimError::Config(format!(
                "episode of {} steps is shorter than 2*tau+1 = {}",
                self.steps,
                2 * self.horizon + 1
            )));
        }
        if self.lane_changes > 0 {
            let manoeuvre = (self.lane_change_duration / self.dt).ceil() as usize;
            if !(self.lane_change_duration > 0.0) {
                return err("lane change duration must be positive");
            }
            if self.steps / self.lane_changes < manoeuvre + 2 {
                return Err(SimError::Config(format!(
                    "{} lane changes of {} steps do not fit into {} steps",
                    self.lane_changes, manoeuvre, self.steps
                )));
            }
        }
        Ok(())
    }
}

/// A time-ordered run of ego states on a straight multi-lane road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u32,
    pub states: Vec<EgoState>,
    pub dt: f64,
    pub lanes: usize,
    pub lane_width: f64,
    pub seed: u64,
}

impl Episode {
    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn position(&self, t: usize) -> [f64; 2] {
        [self.states[t].x, self.states[t].y]
    }
}

/// Quintic smootherstep: 0 below 0, 1 above 1, C2-continuous in between.
pub(crate) fn smootherstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct LaneChange {
    start: f64,
    direction: f64,
}

struct Profile {
    x0: f64,
    lane_width: f64,
    duration: f64,
    changes: Vec<LaneChange>,
    base: f64,
    amplitude: f64,
    period: f64,
    phase: f64,
    v_min: f64,
    v_max: f64,
}

impl Profile {
    fn lateral(&self, time: f64) -> f64 {
        self.changes.iter().fold(self.x0, |x, lc| {
            x + lc.direction * self.lane_width * smootherstep((time - lc.start) / self.duration)
        })
    }

    fn speed(&self, time: f64) -> f64 {
        let raw = self.base + self.amplitude * (std::f64::consts::TAU * time / self.period + self.phase).sin();
        raw.clamp(self.v_min, self.v_max)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Generates one episode: straight driving with a sinusoidal speed profile
/// clamped to `[v_min, v_max]` and `lane_changes` smootherstep lane changes,
/// each placed inside its own equal slice of the episode.
pub fn simulate_episode(config: &EpisodeConfig, seed: u64) -> Result<Episode> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let dt = config.dt;

    let mut lane = rng.gen_range(0..config.lanes) as i64;
    let x0 = (lane as f64 + 0.5) * config.lane_width;

    let manoeuvre_steps = (config.lane_change_duration / dt).ceil() as usize;
    let mut changes = Vec::with_capacity(config.lane_changes);
    if config.lane_changes > 0 {
        let slot = config.steps / config.lane_changes;
        for k in 0..config.lane_changes {
            // The manoeuvre has to finish strictly inside the slot.
            let latest = slot - manoeuvre_steps - 1;
            let offset = rng.gen_range(0..=latest);
            let start = (k * slot + offset) as f64 * dt;
            let direction = if lane == 0 {
                1
            } else if lane == config.lanes as i64 - 1 {
                -1
            } else if rng.gen_bool(0.5) {
                1
            } else {
                -1
            };
            lane += direction;
            changes.push(LaneChange {
                start,
                direction: direction as f64,
            });
        }
    }

    let margin = 10.0_f64.min((config.v_max - config.v_min) / 2.0);
    let profile = Profile {
        x0,
        lane_width: config.lane_width,
        duration: config.lane_change_duration,
        changes,
        base: rng.gen_range(config.v_min + margin..=config.v_max - margin),
        amplitude: rng.gen_range(0.0..=config.speed_variation.max(0.0)),
        period: rng.gen_range(4.0..10.0),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
        v_min: config.v_min,
        v_max: config.v_max,
    };

    let step_heading = |t: i64, v_kmh: f64| -> Result<f64> {
        let dx = profile.lateral(t as f64 * dt) - profile.lateral((t - 1) as f64 * dt);
        let step = v_kmh / 3.6 * dt;
        if dx.abs() >= step {
            return Err(SimError::Config(format!(
                "lateral step {dx:.3} m exceeds travelled distance {step:.3} m; lengthen the lane change"
            )));
        }
        Ok(dx.atan2((step * step - dx * dx).sqrt()))
    };

    let mut states = Vec::with_capacity(config.steps);
    let v0 = profile.speed(0.0);
    let mut prev_heading = step_heading(0, v0)?;
    states.push(EgoState {
        x: x0,
        y: 0.0,
        heading: prev_heading,
        v_f: v0,
        v_delta: 0.0,
        t: 0,
    });
    for t in 1..config.steps {
        let prev = states[t - 1];
        let v = profile.speed(t as f64 * dt);
        let x = profile.lateral(t as f64 * dt);
        let dx = x - prev.x;
        let step = v / 3.6 * dt;
        let heading = step_heading(t as i64, v)?;
        let dy = (step * step - dx * dx).sqrt();
        states.push(EgoState {
            x,
            y: prev.y + dy,
            heading,
            v_f: v,
            v_delta: wrap_angle(heading - prev_heading) / dt,
            t,
        });
        prev_heading = heading;
    }

    Ok(Episode {
        id: 0,
        states,
        dt,
        lanes: config.lanes,
        lane_width: config.lane_width,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lane_changes: usize) -> EpisodeConfig {
        EpisodeConfig {
            steps: 60,
            lane_changes,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn no_lane_change_means_constant_x() {
        for seed in 0..10 {
            let ep = simulate_episode(&cfg(0), seed).unwrap();
            let x0 = ep.states[0].x;
            assert!(ep.states.iter().all(|s| (s.x - x0).abs() <= 1e-9));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_episode(&cfg(2), 42).unwrap();
        let b = simulate_episode(&cfg(2), 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_episode(&cfg(2), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_lane_change_moves_one_lane_width() {
        // The smootherstep profile integrates to exactly one lane width once
        // the manoeuvre has completed.
        let config = EpisodeConfig {
            lane_width: 3.5,
            ..cfg(1)
        };
        for seed in 0..20 {
            let ep = simulate_episode(&config, seed).unwrap();
            let dx = ep.states.last().unwrap().x - ep.states[0].x;
            assert!((dx.abs() - 3.5).abs() <= 0.05, "seed {seed}: {dx}");
        }
    }

    #[test]
    fn positions_consistent_with_velocity() {
        for seed in 0..10 {
            let ep = simulate_episode(&cfg(2), seed).unwrap();
            for w in ep.states.windows(2) {
                let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
                let speed = w[1].v_f / 3.6;
                assert!(((d / ep.dt) - speed).abs() <= 1e-6 * speed);
                assert_eq!(w[1].t, w[0].t + 1);
            }
        }
    }

    #[test]
    fn velocity_clamped_and_heading_in_range() {
        let config = EpisodeConfig {
            speed_variation: 60.0,
            ..cfg(2)
        };
        for seed in 0..20 {
            let ep = simulate_episode(&config, seed).unwrap();
            for s in &ep.states {
                assert!(s.v_f >= V_MIN_KMH && s.v_f <= V_MAX_KMH);
                assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
            }
        }
    }

    #[test]
    fn lane_changes_produce_angular_velocity() {
        let ep = simulate_episode(&cfg(1), 3).unwrap();
        assert!(ep.states.iter().any(|s| s.v_delta.abs() > 1e-3));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            EpisodeConfig { lanes: 0, ..cfg(0) },
            EpisodeConfig { lanes: 1, ..cfg(0) },
            EpisodeConfig { dt: 0.0, ..cfg(0) },
            EpisodeConfig { dt: -0.1, ..cfg(0) },
            EpisodeConfig { steps: 10, ..cfg(0) },
            EpisodeConfig {
                lane_changes: 30,
                ..cfg(0)
            },
        ];
        for c in bad {
            assert!(matches!(simulate_episode(&c, 1), Err(SimError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn stays_on_road() {
        let config = EpisodeConfig {
            steps: 200,
            lane_changes: 6,
            ..EpisodeConfig::default()
        };
        for seed in 0..20 {
            let ep = simulate_episode(&config, seed).unwrap();
            let road = config.lanes as f64 * config.lane_width;
            assert!(ep.states.iter().all(|s| s.x > 0.0 && s.x < road));
        }
    }
}

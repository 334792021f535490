//! Browser bindings: a small farm stepped by a greedy heuristic, and two
//! model curves (flight power against speed, packet loss against distance).

use std::sync::Arc;

use agriswarm::comms::{ber, plr, received_power, thermal_noise, LinkParams};
use agriswarm::energy::{flight_power, PhysicalConstants};
use agriswarm::world::generate_scenario;
use agriswarm::{Env, EnvParams, Role, RunConfig};
use wasm_bindgen::prelude::*;

fn demo_config(n_per_role: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.env.x_max = 100.0;
    cfg.env.y_max = 100.0;
    cfg.env.n_ws = 50;
    cfg.env.n_px = 5;
    cfg.env.n_py = 5;
    cfg.fleet.n_c = n_per_role;
    cfg.fleet.n_m = n_per_role;
    cfg.fleet.n_d = n_per_role;
    cfg.train.steps = 200;
    cfg
}

fn toward(from: [f64; 3], to: [f64; 2], vmax: [f64; 2]) -> [f64; 2] {
    [
        (to[0] - from[0]).clamp(-vmax[0], vmax[0]),
        (to[1] - from[1]).clamp(-vmax[1], vmax[1]),
    ]
}

fn dist2(a: [f64; 3], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Picks, for each UAV in turn, the stalest target not yet taken (nearest on ties).
fn pick(pos: [f64; 3], targets: &[([f64; 2], u32)], taken: &mut Vec<usize>) -> Option<[f64; 2]> {
    let best = targets
        .iter()
        .enumerate()
        .filter(|(k, _)| !taken.contains(k))
        .max_by(|(_, a), (_, b)| a.1.cmp(&b.1).then(dist2(pos, b.0).total_cmp(&dist2(pos, a.0))))?;
    taken.push(best.0);
    Some(best.1 .0)
}

/// Collection UAVs chase the stalest sensors, monitoring UAVs the stalest
/// plots, and relays hover over the centroid of everyone else.
pub fn heuristic_actions(env: &Env) -> Vec<[f64; 2]> {
    let s = env.scenario();
    let fresh = env.freshness();
    let vmax = [s.v_x_max, s.v_y_max];
    let sensors: Vec<([f64; 2], u32)> = s.sensors.iter().zip(&fresh.aoi).map(|(w, &a)| (w.position, a)).collect();
    let plots: Vec<([f64; 2], u32)> = (0..s.n_plots()).map(|p| (s.plot_center(p), fresh.vdf[p])).collect();
    let clients: Vec<[f64; 3]> = env.uavs().iter().filter(|u| u.role != Role::Communication).map(|u| u.position).collect();
    let mut hub = [0.0, 0.0];
    for c in &clients {
        hub[0] += c[0] / clients.len() as f64;
        hub[1] += c[1] / clients.len() as f64;
    }
    let (mut taken_ws, mut taken_plot) = (Vec::new(), Vec::new());
    env.uavs()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let target = match u.role {
                Role::Collection => pick(u.position, &sensors, &mut taken_ws),
                Role::Monitoring => pick(u.position, &plots, &mut taken_plot),
                // fan relays out around the hub so they keep their distance
                Role::Communication if !clients.is_empty() => {
                    let a = i as f64 * 2.399;
                    Some([hub[0] + 15.0 * a.cos(), hub[1] + 15.0 * a.sin()])
                }
                Role::Communication => None,
            };
            target.map_or([0.0, 0.0], |t| toward(u.position, t, vmax))
        })
        .collect()
}

#[wasm_bindgen]
pub struct FarmDemo {
    env: Env,
    episode: u64,
    seed: u32,
}

#[wasm_bindgen]
impl FarmDemo {
    /// A 100 m x 100 m farm with `per_role` UAVs of each role.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, per_role: usize) -> Result<FarmDemo, JsError> {
        let cfg = demo_config(per_role.clamp(1, 4));
        let scenario = generate_scenario(&cfg.env, u64::from(seed)).map_err(|e| JsError::new(&e.to_string()))?;
        let env = Env::new(EnvParams::from_config(&cfg), Arc::new(scenario), u64::from(seed))
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(FarmDemo { env, episode: 0, seed })
    }

    /// Advances one step; restarts with fresh UAV positions once the episode ends.
    pub fn step(&mut self) -> Result<(), JsError> {
        if self.env.is_done() {
            self.episode += 1;
            self.env.reset(None, u64::from(self.seed) + self.episode);
        }
        let actions = heuristic_actions(&self.env);
        self.env.step(&actions).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.env.scenario().width()
    }

    pub fn height(&self) -> f64 {
        self.env.scenario().height()
    }

    pub fn plots_x(&self) -> usize {
        self.env.scenario().n_px
    }

    pub fn plots_y(&self) -> usize {
        self.env.scenario().n_py
    }

    pub fn time(&self) -> f64 {
        self.env.time()
    }

    /// `[x, y, role]` per UAV, role 0 relay, 1 monitoring, 2 collection.
    pub fn uavs(&self) -> Vec<f64> {
        self.env.uavs().iter().flat_map(|u| [u.position[0], u.position[1], u.role.index() as f64]).collect()
    }

    /// `[x, y, aoi]` per sensor.
    pub fn sensors(&self) -> Vec<f64> {
        let s = self.env.scenario();
        s.sensors
            .iter()
            .zip(&self.env.freshness().aoi)
            .flat_map(|(w, &a)| [w.position[0], w.position[1], f64::from(a)])
            .collect()
    }

    /// Plot VDF counters in row-major plot order.
    pub fn plot_vdf(&self) -> Vec<u32> {
        self.env.freshness().vdf.clone()
    }

    pub fn mean_aoi(&self) -> f64 {
        self.env.freshness().mean_aoi()
    }

    pub fn mean_vdf(&self) -> f64 {
        self.env.freshness().mean_vdf()
    }
}

/// Flight power in W at `n` evenly spaced speeds from 0 to `max_speed` m/s.
#[wasm_bindgen]
pub fn flight_power_curve(max_speed: f64, n: usize) -> Vec<f64> {
    let k = PhysicalConstants::default();
    (0..n)
        .map(|i| {
            let v = max_speed * i as f64 / (n.max(2) - 1) as f64;
            flight_power([v, 0.0], &k)
        })
        .collect()
}

/// Interference-free packet loss rate of one sensor against a UAV at
/// `altitude`, at `n` horizontal offsets from 0 to `max_offset` m.
#[wasm_bindgen]
pub fn packet_loss_curve(altitude: f64, max_offset: f64, n: usize) -> Vec<f64> {
    let p = LinkParams::default();
    let noise = thermal_noise(&p);
    (0..n)
        .map(|i| {
            let d = max_offset * i as f64 / (n.max(2) - 1) as f64;
            let snr = received_power([d, 0.0, altitude], [0.0, 0.0], &p) / noise;
            plr(ber(snr), p.packet_bytes)
        })
        .collect()
}

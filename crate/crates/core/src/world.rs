//! Farmland geometry, the sensor network, UAV kinematics and the two freshness
//! counters (sensor AoI and per-plot visual data freshness).

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Attempts per sensor before placement is declared infeasible.
const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Communication,
    Monitoring,
    Collection,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Communication, Role::Monitoring, Role::Collection];

    pub fn tag(self) -> &'static str {
        match self {
            Role::Communication => "c",
            Role::Monitoring => "m",
            Role::Collection => "d",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Role::Communication => 0,
            Role::Monitoring => 1,
            Role::Collection => 2,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Communication => "communication",
            Role::Monitoring => "monitoring",
            Role::Collection => "collection",
        })
    }
}

/// A ground sensor. `kind` is a zero-based type index into `Scenario::cycles`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub position: [f64; 2],
    pub kind: usize,
}

/// Immutable description of one farm: bounds, altitudes, sensors and the
/// plot/grid decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub h_c: f64,
    pub h_m: f64,
    pub h_d: f64,
    pub v_x_max: f64,
    pub v_y_max: f64,
    pub sensors: Vec<Sensor>,
    /// AoI update cycle per sensor type, seconds.
    pub cycles: Vec<f64>,
    pub n_px: usize,
    pub n_py: usize,
    pub n_gx: usize,
    pub n_gy: usize,
    pub aoi_max: u32,
    pub vdf_max: u32,
    pub t_step: f64,
    pub t_v: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return bad(format!("unsupported scenario schema version {}", self.schema_version));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return bad("scenario bounds are empty".into());
        }
        for s in &self.sensors {
            if !self.contains(s.position) {
                return bad(format!("sensor at {:?} lies outside the bounds", s.position));
            }
            if s.kind >= self.cycles.len() {
                return bad(format!("sensor type {} has no cycle", s.kind));
            }
        }
        if self.cycles.is_empty() || self.cycles.iter().any(|c| !(*c > 0.0)) {
            return bad("every sensor type needs a positive cycle".into());
        }
        if self.n_px == 0 || self.n_py == 0 || self.n_gx == 0 || self.n_gy == 0 {
            return bad("plot and grid counts must be at least 1".into());
        }
        if self.aoi_max < 1 || self.vdf_max < 1 {
            return bad("freshness caps must be at least 1".into());
        }
        if !(self.t_step > 0.0) || !is_multiple(self.t_v, self.t_step) {
            return bad("t_step must be positive and divide t_v".into());
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn altitude(&self, role: Role) -> f64 {
        match role {
            Role::Communication => self.h_c,
            Role::Monitoring => self.h_m,
            Role::Collection => self.h_d,
        }
    }

    pub fn n_plots(&self) -> usize {
        self.n_px * self.n_py
    }

    pub fn plot_size(&self) -> [f64; 2] {
        [self.width() / self.n_px as f64, self.height() / self.n_py as f64]
    }

    /// Row-major plot index: `py * n_px + px`.
    pub fn plot_index(&self, px: usize, py: usize) -> usize {
        py * self.n_px + px
    }

    pub fn plot_coords(&self, plot: usize) -> (usize, usize) {
        (plot % self.n_px, plot / self.n_px)
    }

    /// Plot containing a ground point (points on the far edge belong to the last plot).
    pub fn plot_at(&self, p: [f64; 2]) -> (usize, usize) {
        let [w, h] = self.plot_size();
        let px = (((p[0] - self.x_min) / w).floor().max(0.0) as usize).min(self.n_px - 1);
        let py = (((p[1] - self.y_min) / h).floor().max(0.0) as usize).min(self.n_py - 1);
        (px, py)
    }

    pub fn plot_center(&self, plot: usize) -> [f64; 2] {
        let (px, py) = self.plot_coords(plot);
        let [w, h] = self.plot_size();
        [
            self.x_min + (px as f64 + 0.5) * w,
            self.y_min + (py as f64 + 0.5) * h,
        ]
    }

    /// Lower-left and upper-right corners of a plot.
    pub fn plot_rect(&self, plot: usize) -> ([f64; 2], [f64; 2]) {
        let (px, py) = self.plot_coords(plot);
        let [w, h] = self.plot_size();
        let lo = [self.x_min + px as f64 * w, self.y_min + py as f64 * h];
        (lo, [lo[0] + w, lo[1] + h])
    }

    pub fn grid_centers(&self, plot: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        let (lo, _) = self.plot_rect(plot);
        let [w, h] = self.plot_size();
        let (gw, gh) = (w / self.n_gx as f64, h / self.n_gy as f64);
        (0..self.n_gy).flat_map(move |gy| {
            (0..self.n_gx).map(move |gx| {
                [lo[0] + (gx as f64 + 0.5) * gw, lo[1] + (gy as f64 + 0.5) * gh]
            })
        })
    }

    pub fn cycle_of(&self, sensor: usize) -> f64 {
        self.cycles[self.sensors[sensor].kind]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Places `n_ws` sensors by rejection sampling with a minimum pairwise spacing
/// and assigns types round-robin.
pub fn generate_scenario(env: &EnvConfig, seed: u64) -> Result<Scenario> {
    env.validate()?;
    let mut rng = crate::seed::rng(seed, crate::seed::stream::SCENARIO, 0);
    let positions = place_sensors(env, &mut rng)?;
    let n_types = env.ws_cycles.len();
    let sensors = positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| Sensor { position, kind: i % n_types })
        .collect();
    let scenario = Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        x_min: env.x_min,
        x_max: env.x_max,
        y_min: env.y_min,
        y_max: env.y_max,
        h_c: env.h_c,
        h_m: env.h_m,
        h_d: env.h_d,
        v_x_max: env.v_x_max,
        v_y_max: env.v_y_max,
        sensors,
        cycles: env.ws_cycles.clone(),
        n_px: env.n_px,
        n_py: env.n_py,
        n_gx: env.n_gx,
        n_gy: env.n_gy,
        aoi_max: env.aoi_max,
        vdf_max: env.vdf_max,
        t_step: env.t_step,
        t_v: env.t_v,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn place_sensors(env: &EnvConfig, rng: &mut Rng) -> Result<Vec<[f64; 2]>> {
    let spacing_sq = env.ws_spacing * env.ws_spacing;
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(env.n_ws);
    for _ in 0..env.n_ws {
        let mut ok = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = [
                rng.random_range(env.x_min..=env.x_max),
                rng.random_range(env.y_min..=env.y_max),
            ];
            if placed.iter().all(|q| dist2_sq(p, *q) >= spacing_sq) {
                placed.push(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Placement {
                placed: placed.len(),
                requested: env.n_ws,
                spacing: env.ws_spacing,
            });
        }
    }
    Ok(placed)
}

fn dist2_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

pub fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Whether `t` is an integer multiple of `period`.
pub fn is_multiple(t: f64, period: f64) -> bool {
    let r = t / period;
    (r - r.round()).abs() < 1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub role: Role,
    pub position: [f64; 3],
    pub velocity: [f64; 2],
    pub cumulative_energy: f64,
    /// Whether the last kinematic step had to be clamped back into the map.
    pub out_of_bounds: bool,
}

impl UavState {
    pub fn new(role: Role, position: [f64; 3]) -> Self {
        Self {
            role,
            position,
            velocity: [0.0, 0.0],
            cumulative_energy: 0.0,
            out_of_bounds: false,
        }
    }

    pub fn with_velocity(mut self, velocity: [f64; 2]) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}

/// Clips the commanded velocity per axis, integrates one step and clamps the
/// result to the map, flagging the clamp.
pub fn step_kinematics(state: &UavState, action: [f64; 2], scenario: &Scenario, dt: f64) -> Result<UavState> {
    if !(action[0].is_finite() && action[1].is_finite()) {
        return Err(Error::NonFinite(format!("action {action:?}")));
    }
    let velocity = [
        action[0].clamp(-scenario.v_x_max, scenario.v_x_max),
        action[1].clamp(-scenario.v_y_max, scenario.v_y_max),
    ];
    let raw = [
        state.position[0] + velocity[0] * dt,
        state.position[1] + velocity[1] * dt,
    ];
    let out_of_bounds = !scenario.contains(raw);
    let position = [
        raw[0].clamp(scenario.x_min, scenario.x_max),
        raw[1].clamp(scenario.y_min, scenario.y_max),
        state.position[2],
    ];
    Ok(UavState {
        role: state.role,
        position,
        velocity,
        cumulative_energy: state.cumulative_energy,
        out_of_bounds,
    })
}

/// Sensor AoI and plot VDF counters plus the success sets of the last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshnessState {
    pub aoi: Vec<u32>,
    pub vdf: Vec<u32>,
    /// `(uav, sensor)` pairs collected in the last step.
    pub last_collections: Vec<(usize, usize)>,
    /// `(uav, plot)` pairs captured in the last step.
    pub last_captures: Vec<(usize, usize)>,
}

impl FreshnessState {
    /// Every counter starts at its cap: nothing has been collected or imaged yet.
    pub fn stale(scenario: &Scenario) -> Self {
        Self {
            aoi: vec![scenario.aoi_max; scenario.sensors.len()],
            vdf: vec![scenario.vdf_max; scenario.n_plots()],
            last_collections: Vec::new(),
            last_captures: Vec::new(),
        }
    }

    pub fn mean_aoi(&self) -> f64 {
        mean_u32(&self.aoi)
    }

    pub fn mean_vdf(&self) -> f64 {
        mean_u32(&self.vdf)
    }
}

fn mean_u32(v: &[u32]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64
    }
}

/// Advances sensor AoI to time `t`. `collected[j]` marks a successful pickup
/// of sensor `j` in this step.
pub fn update_aoi(fresh: &mut FreshnessState, scenario: &Scenario, collected: &[bool], t: f64) {
    for (j, aoi) in fresh.aoi.iter_mut().enumerate() {
        if collected.get(j).copied().unwrap_or(false) {
            *aoi = 0;
        } else if is_multiple(t, scenario.cycle_of(j)) {
            *aoi = (*aoi + 1).min(scenario.aoi_max);
        }
    }
}

/// Advances plot VDF to time `t`. `captured[p]` marks a successful capture of plot `p`.
pub fn update_vdf(fresh: &mut FreshnessState, scenario: &Scenario, captured: &[bool], t: f64) {
    let tick = is_multiple(t, scenario.t_v);
    for (p, vdf) in fresh.vdf.iter_mut().enumerate() {
        if captured.get(p).copied().unwrap_or(false) {
            *vdf = 0;
        } else if tick {
            *vdf = (*vdf + 1).min(scenario.vdf_max);
        }
    }
}

/// Binary image quality of one grid cell: 1 when the nearest monitoring UAV is
/// strictly closer than `d_th`.
pub fn grid_quality(grid_center: [f64; 2], monitors: &[[f64; 3]], d_th: f64) -> Result<u8> {
    let ground = [grid_center[0], grid_center[1], 0.0];
    let nearest = monitors
        .iter()
        .map(|m| dist3(ground, *m))
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Degenerate("no monitoring UAV".into()))?;
    Ok(u8::from(nearest < d_th))
}

/// Fraction of a plot's grid cells with acceptable image quality. Zero when
/// there is no monitoring UAV.
pub fn plot_quality(plot: usize, monitors: &[[f64; 3]], scenario: &Scenario, d_th: f64) -> f64 {
    if monitors.is_empty() {
        return 0.0;
    }
    let cells = (scenario.n_gx * scenario.n_gy) as f64;
    let good: u32 = scenario
        .grid_centers(plot)
        .map(|c| u32::from(grid_quality(c, monitors, d_th).unwrap_or(0)))
        .sum();
    f64::from(good) / cells
}

pub fn monitoring_success(plot_quality: f64, q_th: f64) -> bool {
    plot_quality >= q_th
}

/// 3D distance from a UAV to the closest ground point of a plot.
pub fn distance_to_plot(uav: [f64; 3], scenario: &Scenario, plot: usize) -> f64 {
    let (lo, hi) = scenario.plot_rect(plot);
    let cx = uav[0].clamp(lo[0], hi[0]);
    let cy = uav[1].clamp(lo[1], hi[1]);
    dist3(uav, [cx, cy, 0.0])
}

/// Plots captured this step: every plot within `d_th` of some monitoring UAV
/// whose quality reaches `q_th`. Each capture is credited to the monitoring UAV
/// nearest to the plot centre (lowest index on ties); the returned pairs are
/// `(index into monitors, plot)` sorted by plot.
pub fn evaluate_captures(scenario: &Scenario, monitors: &[[f64; 3]], d_th: f64, q_th: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if monitors.is_empty() {
        return out;
    }
    for plot in 0..scenario.n_plots() {
        let reachable = monitors.iter().any(|m| distance_to_plot(*m, scenario, plot) < d_th);
        if !reachable || !monitoring_success(plot_quality(plot, monitors, scenario, d_th), q_th) {
            continue;
        }
        let c = scenario.plot_center(plot);
        let ground = [c[0], c[1], 0.0];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, m) in monitors.iter().enumerate() {
            let d = dist3(ground, *m);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        out.push((best, plot));
    }
    out
}

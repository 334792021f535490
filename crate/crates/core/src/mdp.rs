//! The multi-agent environment: observations, joint-action stepping and the
//! per-role reward terms.

use rand::Rng as _;
use std::sync::Arc;

use crate::comms::{self, collection_round, distance_costs, hungarian_assign, Assignment, CollectionOutcome};
use crate::config::{EnvConfig, FleetConfig, RewardWeights, RunConfig, ServiceSign};
use crate::comms::LinkParams;
use crate::energy::{step_energy, PhysicalConstants};
use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::world::{self, dist3, FreshnessState, Role, Scenario, UavState};

/// Quadrant order used for one-hot encodings and tie-breaking.
pub const QUADRANTS: [&str; 4] = ["NE", "NW", "SW", "SE"];
const DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Unit direction of each quadrant.
pub const QUADRANT_DIRS: [[f64; 2]; 4] = [[DIAG, DIAG], [-DIAG, DIAG], [-DIAG, -DIAG], [DIAG, -DIAG]];

pub fn quadrant_of(from: [f64; 2], to: [f64; 2]) -> usize {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    match (dx >= 0.0, dy >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

fn argmax_quadrant(sums: [f64; 4]) -> usize {
    let mut best = 0;
    for q in 1..4 {
        if sums[q] > sums[best] {
            best = q;
        }
    }
    best
}

/// Quadrant (relative to `from`) carrying the most weight.
pub fn heaviest_quadrant(from: [f64; 2], weighted: impl IntoIterator<Item = ([f64; 2], f64)>) -> usize {
    let mut sums = [0.0; 4];
    for (p, w) in weighted {
        sums[quadrant_of(from, p)] += w;
    }
    argmax_quadrant(sums)
}

/// Whether a velocity points into a quadrant (angle strictly below 90 degrees).
pub fn moves_toward(velocity: [f64; 2], quadrant: usize) -> bool {
    let d = QUADRANT_DIRS[quadrant];
    velocity[0] * d[0] + velocity[1] * d[1] > 0.0
}

/// Everything the environment needs besides the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub env: EnvConfig,
    pub energy: PhysicalConstants,
    pub link: LinkParams,
    pub reward: RewardWeights,
    pub fleet: FleetConfig,
    pub steps: usize,
}

impl EnvParams {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            env: cfg.env.clone(),
            energy: cfg.energy.clone(),
            link: cfg.link.clone(),
            reward: cfg.reward.clone(),
            fleet: cfg.fleet.clone(),
            steps: cfg.train.steps,
        }
    }

    /// Agent roles in index order: communication, then monitoring, then collection.
    pub fn roles(&self) -> Vec<Role> {
        let f = &self.fleet;
        std::iter::repeat_n(Role::Communication, f.n_c)
            .chain(std::iter::repeat_n(Role::Monitoring, f.n_m))
            .chain(std::iter::repeat_n(Role::Collection, f.n_d))
            .collect()
    }

    pub fn obs_dim(&self, role: Role) -> usize {
        match role {
            Role::Communication => 17,
            Role::Monitoring => 18,
            Role::Collection => self.env.obs_sensors + 9,
        }
    }
}

/// Per-agent quantities the rewards are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentSnapshot {
    pub position: [f64; 3],
    pub velocity: [f64; 2],
    pub step_energy: f64,
    pub out_of_bounds: bool,
    /// Distance to the nearest other UAV, infinite when alone.
    pub nearest_distance: f64,
    /// Service metric (communication UAVs only).
    pub service: f64,
    /// Heaviest VDF (monitoring) or AoI (collection) quadrant.
    pub quadrant: usize,
    /// Pre-reset VDF or AoI harvested by this agent in the step.
    pub harvested: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub d_c_delta: f64,
    pub energy_delta: f64,
    /// Distance closed inside the danger zone (non-negative).
    pub sr: f64,
    pub act: f64,
    pub vmuf: f64,
    pub p_m: f64,
    pub m_v: f64,
    pub dcuf: f64,
    pub p_c: f64,
    pub m_d: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Weighted total of the parts, in the fixed evaluation order used when
    /// the reward is produced.
    pub fn recompose(&self, role: Role, w: &RewardWeights, t_step: f64) -> f64 {
        let common = -w.energy * self.energy_delta - w.collision * self.sr - w.boundary * self.act;
        let inner = match role {
            Role::Communication => {
                let service = match w.service_sign {
                    ServiceSign::Reduction => -w.service * self.d_c_delta,
                    ServiceSign::Verbatim => w.service * self.d_c_delta,
                };
                service + common
            }
            Role::Monitoring => common + w.vmuf * self.vmuf - w.vdf_penalty * self.p_m + w.vdf_motivation * self.m_v,
            Role::Collection => common + w.dcuf * self.dcuf - w.aoi_penalty * self.p_c + w.aoi_motivation * self.m_d,
        };
        inner * t_step
    }
}

/// Closing speed inside the danger zone: `max(0, d_prev - d_now)` when `d_now < d_safety`.
pub fn safety_risk(prev: &AgentSnapshot, now: &AgentSnapshot, d_safety: f64) -> f64 {
    if now.nearest_distance < d_safety {
        (prev.nearest_distance - now.nearest_distance).max(0.0)
    } else {
        0.0
    }
}

pub fn boundary_penalty(now: &AgentSnapshot) -> f64 {
    if now.out_of_bounds {
        1.0
    } else {
        0.0
    }
}

fn common_parts(prev: &AgentSnapshot, now: &AgentSnapshot, d_safety: f64) -> RewardBreakdown {
    RewardBreakdown {
        energy_delta: now.step_energy,
        sr: safety_risk(prev, now, d_safety),
        act: boundary_penalty(now),
        ..RewardBreakdown::default()
    }
}

pub fn reward_comm(prev: &AgentSnapshot, now: &AgentSnapshot, w: &RewardWeights, d_safety: f64, t_step: f64) -> RewardBreakdown {
    let mut r = common_parts(prev, now, d_safety);
    r.d_c_delta = now.service - prev.service;
    r.total = r.recompose(Role::Communication, w, t_step);
    r
}

pub fn reward_monitor(prev: &AgentSnapshot, now: &AgentSnapshot, w: &RewardWeights, d_safety: f64, t_step: f64) -> RewardBreakdown {
    let mut r = common_parts(prev, now, d_safety);
    r.vmuf = now.harvested;
    r.p_m = if now.harvested == 0.0 { 1.0 } else { 0.0 };
    r.m_v = if moves_toward(now.velocity, prev.quadrant) { 1.0 } else { 0.0 };
    r.total = r.recompose(Role::Monitoring, w, t_step);
    r
}

pub fn reward_collect(prev: &AgentSnapshot, now: &AgentSnapshot, w: &RewardWeights, d_safety: f64, t_step: f64) -> RewardBreakdown {
    let mut r = common_parts(prev, now, d_safety);
    r.dcuf = now.harvested;
    r.p_c = if now.harvested == 0.0 { 1.0 } else { 0.0 };
    r.m_d = if moves_toward(now.velocity, prev.quadrant) { 1.0 } else { 0.0 };
    r.total = r.recompose(Role::Collection, w, t_step);
    r
}

/// Fleet-level diagnostics of one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub step: usize,
    pub mean_aoi: f64,
    pub mean_vdf: f64,
    /// Mean reward of each role (communication, monitoring, collection).
    pub per_role_reward: [f64; 3],
    /// Energy consumed by the whole fleet during the step, J.
    pub energy_j: f64,
    /// Agents inside the danger zone.
    pub collisions_risk_steps: usize,
    /// Agents that had to be clamped back into the map.
    pub boundary_violations: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub breakdowns: Vec<RewardBreakdown>,
    pub done: bool,
    pub info: StepInfo,
}

pub struct Env {
    params: EnvParams,
    roles: Vec<Role>,
    scenario: Arc<Scenario>,
    uavs: Vec<UavState>,
    fresh: FreshnessState,
    assignment: Assignment,
    snapshot: Vec<AgentSnapshot>,
    step: usize,
    rng: Rng,
    done: bool,
}

impl Env {
    /// Builds an environment and resets it on `scenario` with `seed`.
    pub fn new(params: EnvParams, scenario: Arc<Scenario>, seed: u64) -> Result<Self> {
        let roles = params.roles();
        if roles.is_empty() {
            return Err(Error::Config("fleet is empty".into()));
        }
        let mut env = Self {
            fresh: FreshnessState::stale(&scenario),
            params,
            roles,
            scenario,
            uavs: Vec::new(),
            assignment: Assignment::empty(),
            snapshot: Vec::new(),
            step: 0,
            rng: crate::seed::rng(seed, crate::seed::stream::EPISODE, 0),
            done: false,
        };
        env.reset(None, seed);
        Ok(env)
    }

    /// Starts a new episode, optionally on a different scenario. UAVs start
    /// at uniformly drawn positions and every freshness counter at its cap.
    pub fn reset(&mut self, scenario: Option<Arc<Scenario>>, seed: u64) -> Vec<Vec<f64>> {
        if let Some(s) = scenario {
            self.scenario = s;
        }
        self.rng = crate::seed::rng(seed, crate::seed::stream::EPISODE, 0);
        let s = &self.scenario;
        self.uavs = self
            .roles
            .iter()
            .map(|&role| {
                let x = self.rng.random_range(s.x_min..=s.x_max);
                let y = self.rng.random_range(s.y_min..=s.y_max);
                UavState::new(role, [x, y, s.altitude(role)])
            })
            .collect();
        self.fresh = FreshnessState::stale(s);
        self.step = 0;
        self.done = false;
        self.assignment = self.assign();
        let harvested = vec![0.0; self.roles.len()];
        let energy = vec![0.0; self.roles.len()];
        self.snapshot = self.compute_snapshot(&energy, &harvested);
        self.observations()
    }

    /// Places the UAVs explicitly (testing and demos).
    pub fn set_positions(&mut self, xy: &[[f64; 2]]) -> Result<()> {
        if xy.len() != self.uavs.len() {
            return Err(Error::Dimension(format!("{} positions for {} UAVs", xy.len(), self.uavs.len())));
        }
        for (u, p) in self.uavs.iter_mut().zip(xy) {
            u.position[0] = p[0].clamp(self.scenario.x_min, self.scenario.x_max);
            u.position[1] = p[1].clamp(self.scenario.y_min, self.scenario.y_max);
        }
        self.assignment = self.assign();
        let zeros = vec![0.0; self.roles.len()];
        self.snapshot = self.compute_snapshot(&zeros, &zeros);
        Ok(())
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn uavs(&self) -> &[UavState] {
        &self.uavs
    }

    pub fn freshness(&self) -> &FreshnessState {
        &self.fresh
    }

    pub fn freshness_mut(&mut self) -> &mut FreshnessState {
        &mut self.fresh
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn snapshot(&self) -> &[AgentSnapshot] {
        &self.snapshot
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.t_step
    }

    fn indices_of(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] == role).collect()
    }

    fn positions_of(&self, idx: &[usize]) -> Vec<[f64; 3]> {
        idx.iter().map(|&i| self.uavs[i].position).collect()
    }

    /// Server/client split: communication UAVs serve everyone else.
    fn client_indices(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] != Role::Communication).collect()
    }

    fn assign(&self) -> Assignment {
        let servers = self.positions_of(&self.indices_of(Role::Communication));
        let clients = self.positions_of(&self.client_indices());
        if servers.is_empty() || clients.is_empty() {
            return Assignment::empty();
        }
        hungarian_assign(&distance_costs(&servers, &clients)).expect("distance costs are finite")
    }

    fn nearest(&self, i: usize, same_role_only: bool) -> Option<(usize, f64)> {
        let me = self.uavs[i].position;
        let mut best: Option<(usize, f64)> = None;
        for (j, u) in self.uavs.iter().enumerate() {
            if j == i || (same_role_only && self.roles[j] != self.roles[i]) {
                continue;
            }
            let d = dist3(me, u.position);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best
    }

    fn service_of(&self, i: usize) -> f64 {
        let comm = self.indices_of(Role::Communication);
        let Some(k) = comm.iter().position(|&c| c == i) else {
            return 0.0;
        };
        let servers = self.positions_of(&comm);
        let clients = self.positions_of(&self.client_indices());
        let e = &self.params.env;
        comms::service_metric(k, &servers, &clients, &self.assignment, [e.eps1, e.eps2, e.eps3])
    }

    fn quadrant_for(&self, i: usize) -> usize {
        let me = self.uavs[i].xy();
        let s = &self.scenario;
        match self.roles[i] {
            Role::Monitoring => heaviest_quadrant(
                me,
                (0..s.n_plots()).map(|p| (s.plot_center(p), f64::from(self.fresh.vdf[p]))),
            ),
            Role::Collection => heaviest_quadrant(
                me,
                s.sensors.iter().zip(&self.fresh.aoi).map(|(ws, &a)| (ws.position, f64::from(a))),
            ),
            Role::Communication => 0,
        }
    }

    fn compute_snapshot(&self, energy: &[f64], harvested: &[f64]) -> Vec<AgentSnapshot> {
        (0..self.roles.len())
            .map(|i| AgentSnapshot {
                position: self.uavs[i].position,
                velocity: self.uavs[i].velocity,
                step_energy: energy[i],
                out_of_bounds: self.uavs[i].out_of_bounds,
                nearest_distance: self.nearest(i, false).map_or(f64::INFINITY, |(_, d)| d),
                service: self.service_of(i),
                quadrant: self.quadrant_for(i),
                harvested: harvested[i],
            })
            .collect()
    }

    /// Advances every UAV by one step under `actions` (velocity commands, m/s).
    pub fn step(&mut self, actions: &[[f64; 2]]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if actions.len() != self.uavs.len() {
            return Err(Error::Dimension(format!("{} actions for {} UAVs", actions.len(), self.uavs.len())));
        }
        let n = self.uavs.len();
        let dt = self.scenario.t_step;

        // kinematics
        let mut moved = Vec::with_capacity(n);
        for (u, a) in self.uavs.iter().zip(actions) {
            moved.push(world::step_kinematics(u, *a, &self.scenario, dt)?);
        }
        self.uavs = moved;

        // service assignment
        self.assignment = self.assign();

        // collection and capture
        let mut harvested = vec![0.0; n];
        let collectors = self.indices_of(Role::Collection);
        let requesting: Vec<bool> = self.fresh.aoi.iter().map(|&a| a > 0).collect();
        let attempts = collection_round(
            &self.positions_of(&collectors),
            &self.scenario.sensors,
            &requesting,
            &self.params.link,
            &mut self.rng,
        );
        let mut collected = vec![false; self.scenario.sensors.len()];
        let mut collections = Vec::new();
        for a in attempts.iter().filter(|a| a.outcome == CollectionOutcome::Success) {
            let agent = collectors[a.uav];
            collected[a.sensor] = true;
            harvested[agent] += f64::from(self.fresh.aoi[a.sensor]);
            collections.push((agent, a.sensor));
        }
        let monitors = self.indices_of(Role::Monitoring);
        let e = &self.params.env;
        let captures = world::evaluate_captures(&self.scenario, &self.positions_of(&monitors), e.d_th, e.q_th);
        let mut captured = vec![false; self.scenario.n_plots()];
        let mut capture_pairs = Vec::new();
        for &(m, plot) in &captures {
            let agent = monitors[m];
            captured[plot] = true;
            harvested[agent] += f64::from(self.fresh.vdf[plot]);
            capture_pairs.push((agent, plot));
        }

        // freshness
        self.step += 1;
        let t = self.time();
        world::update_aoi(&mut self.fresh, &self.scenario, &collected, t);
        world::update_vdf(&mut self.fresh, &self.scenario, &captured, t);
        self.fresh.last_collections = collections;
        self.fresh.last_captures = capture_pairs;

        // energy
        let mut energy = vec![0.0; n];
        for (u, e) in self.uavs.iter_mut().zip(energy.iter_mut()) {
            *e = step_energy(u, &self.params.energy, dt);
            u.cumulative_energy += *e;
        }

        // rewards
        let now = self.compute_snapshot(&energy, &harvested);
        let d_safety = self.params.env.d_safety();
        let w = &self.params.reward;
        let breakdowns: Vec<RewardBreakdown> = (0..n)
            .map(|i| {
                let f = match self.roles[i] {
                    Role::Communication => reward_comm,
                    Role::Monitoring => reward_monitor,
                    Role::Collection => reward_collect,
                };
                f(&self.snapshot[i], &now[i], w, d_safety, dt)
            })
            .collect();
        self.snapshot = now;
        let rewards: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();

        let mut per_role = [0.0; 3];
        let mut counts = [0usize; 3];
        for (r, role) in rewards.iter().zip(&self.roles) {
            per_role[role.index()] += r;
            counts[role.index()] += 1;
        }
        for k in 0..3 {
            if counts[k] > 0 {
                per_role[k] /= counts[k] as f64;
            }
        }
        let info = StepInfo {
            step: self.step,
            mean_aoi: self.fresh.mean_aoi(),
            mean_vdf: self.fresh.mean_vdf(),
            per_role_reward: per_role,
            energy_j: energy.iter().sum(),
            collisions_risk_steps: self.snapshot.iter().filter(|s| s.nearest_distance < d_safety).count(),
            boundary_violations: self.snapshot.iter().filter(|s| s.out_of_bounds).count(),
        };
        self.done = self.step >= self.params.steps;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            breakdowns,
            done: self.done,
            info,
        })
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.roles.len()).map(|i| self.build_observation(i)).collect()
    }

    fn norm_xy(&self, p: [f64; 3]) -> [f64; 2] {
        let s = &self.scenario;
        [
            ((p[0] - s.x_min) / s.width()).clamp(0.0, 1.0),
            ((p[1] - s.y_min) / s.height()).clamp(0.0, 1.0),
        ]
    }

    fn norm_dist(&self, d: f64) -> f64 {
        (d / self.scenario.diagonal()).clamp(0.0, 1.0)
    }

    /// Pushes `xy, distance` of a target, or the agent's own position with
    /// `missing_distance` when there is none.
    fn push_target(&self, out: &mut Vec<f64>, me: [f64; 3], target: Option<[f64; 3]>, missing_distance: f64) {
        match target {
            Some(t) => {
                out.extend(self.norm_xy(t));
                out.push(self.norm_dist(dist3(me, t)));
            }
            None => {
                out.extend(self.norm_xy(me));
                out.push(missing_distance);
            }
        }
    }

    /// Role-specific observation vector of agent `i`, entries in `[0, 1]`.
    pub fn build_observation(&self, i: usize) -> Vec<f64> {
        let me = self.uavs[i].position;
        let role = self.roles[i];
        let mut o = Vec::with_capacity(self.params.obs_dim(role));
        o.extend(self.norm_xy(me));
        let nearest_any = self.nearest(i, false).map(|(j, _)| self.uavs[j].position);
        match role {
            Role::Communication => {
                let comm = self.indices_of(Role::Communication);
                let k = comm.iter().position(|&c| c == i).expect("agent is a communication UAV");
                let servers = self.positions_of(&comm);
                let clients = self.positions_of(&self.client_indices());
                let g = comms::service_geometry(k, &servers, &clients, &self.assignment);
                let peer = self.nearest(i, true).map(|(j, _)| self.uavs[j].position);
                self.push_target(&mut o, me, peer, 1.0);
                self.push_target(&mut o, me, Some(g.fleet_centroid), 1.0);
                self.push_target(&mut o, me, g.client_centroid, 0.0);
                self.push_target(&mut o, me, g.farthest_client, 0.0);
                self.push_target(&mut o, me, nearest_any, 1.0);
            }
            Role::Monitoring => {
                let s = &self.scenario;
                let (px, py) = s.plot_at([me[0], me[1]]);
                let cap = f64::from(s.vdf_max);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (x, y) = (px as i64 + dx, py as i64 + dy);
                        let v = if x < 0 || y < 0 || x >= s.n_px as i64 || y >= s.n_py as i64 {
                            1.0
                        } else {
                            f64::from(self.fresh.vdf[s.plot_index(x as usize, y as usize)]) / cap
                        };
                        o.push(v);
                    }
                }
                push_one_hot(&mut o, self.snapshot_quadrant(i));
                self.push_target(&mut o, me, nearest_any, 1.0);
            }
            Role::Collection => {
                let s = &self.scenario;
                let k = self.params.env.obs_sensors;
                let mut by_dist: Vec<(f64, usize)> = s
                    .sensors
                    .iter()
                    .enumerate()
                    .map(|(j, ws)| ((ws.position[0] - me[0]).hypot(ws.position[1] - me[1]), j))
                    .collect();
                by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let cap = f64::from(s.aoi_max);
                for slot in 0..k {
                    o.push(by_dist.get(slot).map_or(0.0, |&(_, j)| f64::from(self.fresh.aoi[j]) / cap));
                }
                push_one_hot(&mut o, self.snapshot_quadrant(i));
                let peer = self.nearest(i, true).map(|(j, _)| self.uavs[j].position);
                self.push_target(&mut o, me, peer, 1.0);
            }
        }
        debug_assert_eq!(o.len(), self.params.obs_dim(role));
        o
    }

    fn snapshot_quadrant(&self, i: usize) -> usize {
        self.snapshot.get(i).map_or_else(|| self.quadrant_for(i), |s| s.quadrant)
    }
}

fn push_one_hot(out: &mut Vec<f64>, q: usize) {
    for k in 0..4 {
        out.push(if k == q { 1.0 } else { 0.0 });
    }
}

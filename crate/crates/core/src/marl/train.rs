//! Joint training loop over the scenario pool.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{AgentGroup, ACTION_DIM};
use crate::config::{RunConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::mdp::{Env, EnvParams};
use crate::nn::{Checkpoint, Mlp};
use crate::seed::{self, stream};
use crate::world::{generate_scenario, Role, Scenario};

/// Ablation arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Full,
    EiaOnly,
    SecOnly,
    Plain,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Full, Arm::EiaOnly, Arm::SecOnly, Arm::Plain];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "eia-sec",
            Arm::EiaOnly => "eia",
            Arm::SecOnly => "sec",
            Arm::Plain => "plain",
        }
    }

    pub fn apply(self, t: &mut TrainConfig) {
        t.eia = matches!(self, Arm::Full | Arm::EiaOnly);
        t.sec = matches!(self, Arm::Full | Arm::SecOnly);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// Mean per-agent episode return of each role; 0 for an empty role.
    pub group_reward: [f64; 3],
    /// Mean per-agent episode return over the whole fleet.
    pub reward: f64,
    pub aoi: f64,
    pub vdf: f64,
    pub energy_j: f64,
    pub sr_events: usize,
    pub act_events: usize,
    pub eia_event: bool,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingLog {
    /// Mean of `f` over the last `n` episodes.
    pub fn tail_mean(&self, n: usize, f: impl Fn(&EpisodeRecord) -> f64) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Scenario pool generated by re-seeding the placement.
pub fn scenario_pool(cfg: &RunConfig) -> Result<Vec<Arc<Scenario>>> {
    (0..cfg.run.scenario_pool.max(1))
        .map(|i| {
            let s = seed::derive(cfg.run.master_seed, stream::SCENARIO, i as u64);
            generate_scenario(&cfg.env, s).map(Arc::new)
        })
        .collect()
}

/// Exploration standard deviation as a fraction of the speed limit.
pub fn noise_fraction(t: &TrainConfig, episode: usize) -> f64 {
    let span = t.noise_decay * t.episodes as f64;
    let done = episode.saturating_sub(1) as f64;
    if span <= 0.0 || done >= span {
        t.noise_end
    } else {
        t.noise_start + (t.noise_end - t.noise_start) * done / span
    }
}

fn diverged(episode: usize, step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(detail) => Error::Diverged { episode, step, detail },
        other => other,
    }
}

pub struct Trainer {
    cfg: RunConfig,
    pool: Vec<Arc<Scenario>>,
    pub groups: Vec<AgentGroup>,
    /// Global agent index -> (group, index within group).
    slots: Vec<(usize, usize)>,
    env: Env,
    episode: usize,
    frozen: bool,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let params = EnvParams::from_config(cfg);
        let pool = scenario_pool(cfg)?;
        let v_max = [cfg.env.v_x_max, cfg.env.v_y_max];
        let mut groups = Vec::new();
        let mut slots = Vec::new();
        let counts = [cfg.fleet.n_c, cfg.fleet.n_m, cfg.fleet.n_d];
        let mut first = 0;
        for role in Role::ALL {
            let n = counts[role.index()];
            if n == 0 {
                continue;
            }
            let g = groups.len();
            groups.push(AgentGroup::new(role, n, first, params.obs_dim(role), v_max, &cfg.train, cfg.run.master_seed)?);
            slots.extend((0..n).map(|l| (g, l)));
            first += n;
        }
        let env = Env::new(params, pool[0].clone(), cfg.run.master_seed)?;
        Ok(Self { cfg: cfg.clone(), pool, groups, slots, env, episode: 0, frozen: false })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// With `frozen` set, episodes roll out exactly as in training (same
    /// scenarios, seeds and exploration noise) but nothing is stored or learned.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Trains for the configured number of episodes.
    pub fn run(&mut self, mut on_episode: impl FnMut(&EpisodeRecord)) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        while self.episode < self.cfg.train.episodes {
            let rec = self.train_episode()?;
            on_episode(&rec);
            log.records.push(rec);
        }
        Ok(log)
    }

    /// Runs the next training episode.
    pub fn train_episode(&mut self) -> Result<EpisodeRecord> {
        self.episode += 1;
        let e = self.episode;
        let started = Instant::now();
        let t = self.cfg.train.clone();
        let master = self.cfg.run.master_seed;
        let pick = seed::rng(master, stream::POOL, e as u64).random_range(0..self.pool.len());
        let mut obs = self.env.reset(Some(self.pool[pick].clone()), seed::derive(master, stream::EPISODE, e as u64));
        let mut noise_rng = seed::rng(master, stream::NOISE, e as u64);
        let v_max = [self.cfg.env.v_x_max, self.cfg.env.v_y_max];
        let frac = noise_fraction(&t, e);
        let normal = |v: f64| Normal::new(0.0, frac * v).map_err(|err| Error::Config(format!("exploration noise: {err}")));
        let noise = [normal(v_max[0])?, normal(v_max[1])?];
        let imitating: Vec<bool> = self.groups.iter().map(|g| !self.frozen && t.eia && g.schedule.is_event(e)).collect();

        let n = self.slots.len();
        let mut step_rewards: Vec<Vec<f64>> = vec![Vec::with_capacity(t.steps); n];
        let (mut aoi, mut vdf, mut energy) = (0.0, 0.0, 0.0);
        let (mut sr, mut act) = (0, 0);
        let mut actions = vec![[0.0; 2]; n];
        for step in 1..=t.steps {
            let wrap = diverged(e, step);
            for (j, &(g, l)) in self.slots.iter().enumerate() {
                let a = self.groups[g].agents[l].actor.forward(&obs[j]).map_err(&wrap)?;
                for d in 0..ACTION_DIM {
                    actions[j][d] = (a[d] + noise[d].sample(&mut noise_rng)).clamp(-v_max[d], v_max[d]);
                }
            }
            let res = self.env.step(&actions).map_err(&wrap)?;
            if let Some(j) = res.rewards.iter().position(|r| !r.is_finite()) {
                return Err(Error::Diverged { episode: e, step, detail: format!("reward of agent {j}") });
            }
            for (j, &(g, l)) in self.slots.iter().enumerate() {
                if !self.frozen {
                    self.groups[g].agents[l].buffer.push(&obs[j], &actions[j], res.rewards[j], &res.observations[j])?;
                }
                step_rewards[j].push(res.rewards[j]);
            }
            for &(g, l) in self.slots.iter().filter(|_| !self.frozen) {
                let group = &mut self.groups[g];
                if group.agents[l].buffer.len() < t.batch_size {
                    continue;
                }
                let batch = group.agents[l].buffer.sample(t.batch_size)?;
                group.critic_update(l, &batch, &t).map_err(&wrap)?;
                if !imitating[g] {
                    group.actor_update(l, &batch).map_err(&wrap)?;
                }
            }
            aoi += res.info.mean_aoi;
            vdf += res.info.mean_vdf;
            energy += res.info.energy_j;
            sr += res.info.collisions_risk_steps;
            act += res.info.boundary_violations;
            obs = res.observations;
        }
        for (g, group) in self.groups.iter_mut().enumerate() {
            if imitating[g] {
                let rewards: Vec<Vec<f64>> = self
                    .slots
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.0 == g)
                    .map(|(j, _)| step_rewards[j].clone())
                    .collect();
                group.run_imitation(&rewards, t.elite_mean_weight, t.elite_var_weight)?;
            }
        }

        let returns: Vec<f64> = step_rewards.iter().map(|r| r.iter().sum()).collect();
        let mut group_reward = [0.0; 3];
        for (g, group) in self.groups.iter().enumerate() {
            let members: Vec<f64> = self.slots.iter().zip(&returns).filter(|(s, _)| s.0 == g).map(|(_, r)| *r).collect();
            group_reward[group.role.index()] = members.iter().sum::<f64>() / members.len() as f64;
        }
        let steps = t.steps as f64;
        Ok(EpisodeRecord {
            episode: e,
            group_reward,
            reward: returns.iter().sum::<f64>() / n as f64,
            aoi: aoi / steps,
            vdf: vdf / steps,
            energy_j: energy,
            sr_events: sr,
            act_events: act,
            eia_event: imitating.iter().any(|&b| b),
            wallclock_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Actors in global agent order.
    pub fn policy(&self) -> Policy {
        Policy { actors: self.slots.iter().map(|&(g, l)| self.groups[g].agents[l].actor.clone()).collect() }
    }

    /// All networks and optimizer states.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for group in &self.groups {
            let tag = group.role.tag();
            for (l, a) in group.agents.iter().enumerate() {
                ck.push_net(format!("{tag}{l}/actor"), &a.actor);
                ck.push_optimizer(format!("{tag}{l}/actor_opt"), &a.actor_opt);
                ck.push_net(format!("{tag}{l}/critic"), &a.critic);
                ck.push_optimizer(format!("{tag}{l}/critic_opt"), &a.critic_opt);
                ck.push_net(format!("{tag}{l}/target_critic"), &a.target_critic);
            }
            for (k, (m, o)) in group.ensemble.iter().zip(&group.ensemble_opts).enumerate() {
                ck.push_net(format!("{tag}/ensemble{k}"), m);
                ck.push_optimizer(format!("{tag}/ensemble{k}_opt"), o);
            }
        }
        ck
    }
}

/// Deterministic actors for every agent, in global index order.
#[derive(Debug, Clone)]
pub struct Policy {
    pub actors: Vec<Mlp>,
}

impl Policy {
    /// Loads the actors a fleet needs from a checkpoint, checking shapes.
    pub fn from_checkpoint(ck: &Checkpoint, params: &EnvParams) -> Result<Self> {
        let mut counters = [0usize; 3];
        let mut actors = Vec::new();
        for role in params.roles() {
            let l = counters[role.index()];
            counters[role.index()] += 1;
            let net = ck.net(&format!("{}{l}/actor", role.tag()))?;
            let want = params.obs_dim(role);
            if net.inputs() != want || net.outputs() != ACTION_DIM {
                return Err(Error::Dimension(format!(
                    "checkpoint actor {}{l} maps {} -> {}, environment needs {want} -> {ACTION_DIM}",
                    role.tag(),
                    net.inputs(),
                    net.outputs()
                )));
            }
            actors.push(net.clone());
        }
        Ok(Self { actors })
    }

    pub fn act(&self, observations: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        if observations.len() != self.actors.len() {
            return Err(Error::Dimension(format!("{} observations for {} actors", observations.len(), self.actors.len())));
        }
        self.actors
            .iter()
            .zip(observations)
            .map(|(a, o)| a.forward(o).map(|v| [v[0], v[1]]))
            .collect()
    }
}

pub fn train(cfg: &RunConfig) -> Result<TrainingLog> {
    Trainer::new(cfg)?.run(|_| {})
}

/// Trains one ablation arm: the configuration with the module flags the arm selects.
pub fn train_ablation(cfg: &RunConfig, arm: Arm) -> Result<TrainingLog> {
    let mut c = cfg.clone();
    arm.apply(&mut c.train);
    train(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FleetConfig;

    pub(crate) fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.env.x_max = 60.0;
        c.env.y_max = 60.0;
        c.env.n_ws = 8;
        c.env.n_px = 3;
        c.env.n_py = 3;
        c.fleet = FleetConfig { n_c: 1, n_m: 2, n_d: 2 };
        c.train.episodes = 12;
        c.train.steps = 10;
        c.train.batch_size = 8;
        c.train.hidden = vec![8, 8];
        c.train.mimicry_cycle = 2;
        c.run.scenario_pool = 3;
        c
    }

    #[test]
    fn zero_episodes_is_empty() {
        let mut c = tiny();
        c.train.episodes = 0;
        let mut tr = Trainer::new(&c).unwrap();
        let before = tr.policy();
        let log = tr.run(|_| {}).unwrap();
        assert!(log.records.is_empty());
        for (a, b) in before.actors.iter().zip(&tr.policy().actors) {
            assert_eq!(a.params(), b.params());
        }
    }

    #[test]
    fn noise_decays_linearly_then_holds() {
        let t = TrainConfig { episodes: 100, ..TrainConfig::default() };
        assert_eq!(noise_fraction(&t, 1), 0.3);
        assert!((noise_fraction(&t, 26) - 0.175).abs() < 1e-12);
        assert_eq!(noise_fraction(&t, 51), 0.05);
        assert_eq!(noise_fraction(&t, 100), 0.05);
    }

    #[test]
    fn eia_events_follow_the_schedule() {
        let log = train(&tiny()).unwrap();
        let events: Vec<usize> = log.records.iter().filter(|r| r.eia_event).map(|r| r.episode).collect();
        assert_eq!(events, vec![2, 6]);
        let mut c = tiny();
        Arm::SecOnly.apply(&mut c.train);
        assert!(train(&c).unwrap().records.iter().all(|r| !r.eia_event));
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let strip = |l: TrainingLog| {
            l.records
                .into_iter()
                .map(|r| EpisodeRecord { wallclock_ms: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(train(&tiny()).unwrap()), strip(train(&tiny()).unwrap()));
        let mut other = tiny();
        other.run.master_seed = 2;
        assert_ne!(strip(train(&tiny()).unwrap()), strip(train(&other).unwrap()));
    }

    #[test]
    fn unit_local_weight_matches_plain_learner() {
        let mut with = tiny();
        with.train.eia = false;
        with.train.local_weight = 1.0;
        let mut without = with.clone();
        without.train.sec = false;
        let mut a = Trainer::new(&with).unwrap();
        let mut b = Trainer::new(&without).unwrap();
        a.run(|_| {}).unwrap();
        b.run(|_| {}).unwrap();
        for (x, y) in a.groups.iter().zip(&b.groups) {
            for (p, q) in x.agents.iter().zip(&y.agents) {
                let d = p.actor.params().iter().zip(q.actor.params()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                assert!(d <= 1e-12, "{d}");
                assert_eq!(p.critic.params(), q.critic.params());
            }
        }
    }

    #[test]
    fn policy_round_trips_through_checkpoint() {
        let c = tiny();
        let tr = Trainer::new(&c).unwrap();
        let ck = tr.checkpoint();
        let params = EnvParams::from_config(&c);
        let p = Policy::from_checkpoint(&ck, &params).unwrap();
        assert_eq!(p.actors.len(), 5);
        let mut wrong = params.clone();
        wrong.env.obs_sensors = 3;
        assert!(matches!(Policy::from_checkpoint(&ck, &wrong), Err(Error::Dimension(_))));
    }
}

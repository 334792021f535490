//! Per-role agent groups: elite imitation among actors, a shared critic
//! ensemble mixed into each agent's value estimate, and the actor-critic
//! updates. The joint training loop lives in [`train`].

pub mod train;

pub use train::{train, train_ablation, Arm, EpisodeRecord, Trainer, TrainingLog};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{soft_update, Adam, Batch, Mlp, OutputActivation, ReplayBuffer};
use crate::seed::{self, stream};
use crate::world::Role;

pub const ACTION_DIM: usize = 2;

/// Imitation strength and period, halved and doubled after every event.
#[derive(Debug, Clone, PartialEq)]
pub struct EiaSchedule {
    pub coef: f64,
    pub cycle: usize,
    pub next_event: usize,
}

impl EiaSchedule {
    pub fn new(coef: f64, cycle: usize) -> Self {
        Self { coef, cycle, next_event: cycle }
    }

    /// Whether the 1-based `episode` is an imitation episode.
    pub fn is_event(&self, episode: usize) -> bool {
        episode == self.next_event
    }

    pub fn advance(&mut self) {
        self.coef /= 2.0;
        self.cycle *= 2;
        self.next_event += self.cycle;
    }
}

/// `mean_weight * mean + var_weight * population variance`.
pub fn elite_score(rewards: &[f64], mean_weight: f64, var_weight: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Degenerate("elite score of an empty reward sequence".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(mean_weight * mean + var_weight * var)
}

/// Index of the highest score, lowest index on ties.
pub fn select_elite(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Blends every non-elite actor toward the elite: `theta = (1 - c) theta + c theta_elite`.
pub fn imitate_elite(actors: &mut [&mut Mlp], elite: usize, coef: f64) -> Result<()> {
    if elite >= actors.len() {
        return Err(Error::Dimension(format!("elite {elite} of {} actors", actors.len())));
    }
    let model = actors[elite].clone();
    for (i, a) in actors.iter_mut().enumerate() {
        if i != elite {
            a.blend_toward(&model, coef)?;
        }
    }
    Ok(())
}

/// `local_weight * local + (1 - local_weight) * mean(ensemble)`, elementwise.
pub fn mix_q(local: &[f64], ensemble: &[Vec<f64>], local_weight: f64) -> Vec<f64> {
    if ensemble.is_empty() {
        return local.to_vec();
    }
    let k = ensemble.len() as f64;
    let shared = 1.0 - local_weight;
    (0..local.len())
        .map(|b| {
            let sum: f64 = ensemble.iter().map(|q| q[b]).sum();
            local_weight * local[b] + shared * (sum / k)
        })
        .collect()
}

/// Blends ensemble member `k` (1-based) toward `critic` with coefficient `rate * k / k_s`.
pub fn sec_sync(ensemble: &mut [Mlp], critic: &Mlp, rate: f64) -> Result<()> {
    let ks = ensemble.len() as f64;
    for (k, member) in ensemble.iter_mut().enumerate() {
        let coef = rate * (k + 1) as f64 / ks;
        if !(0.0..=1.0).contains(&coef) {
            return Err(Error::Config(format!("ensemble sync coefficient {coef} outside [0, 1]")));
        }
        member.blend_toward(critic, coef)?;
    }
    Ok(())
}

/// One learning agent: deterministic actor, local critic with its target, replay.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub actor_opt: Adam,
    pub critic: Mlp,
    pub critic_opt: Adam,
    pub target_critic: Mlp,
    pub buffer: ReplayBuffer,
}

/// Agents sharing a role, plus their shared critic ensemble.
#[derive(Debug, Clone)]
pub struct AgentGroup {
    pub role: Role,
    pub obs_dim: usize,
    /// Scale of the actor output and of the critic's action input.
    pub v_max: [f64; 2],
    pub agents: Vec<Agent>,
    pub ensemble: Vec<Mlp>,
    pub ensemble_opts: Vec<Adam>,
    pub schedule: EiaSchedule,
}

fn adam(n: usize, lr: f64, c: &TrainConfig) -> Adam {
    Adam::new(n, lr, c.adam_beta1, c.adam_beta2, c.adam_eps)
}

impl AgentGroup {
    /// Builds a group whose agents have global indices `first..first + n`.
    /// Every network draws its initial weights from its own seeded stream.
    pub fn new(
        role: Role,
        n: usize,
        first: usize,
        obs_dim: usize,
        v_max: [f64; 2],
        cfg: &TrainConfig,
        master_seed: u64,
    ) -> Result<Self> {
        let mut actor_shape = vec![obs_dim];
        actor_shape.extend(&cfg.hidden);
        actor_shape.push(ACTION_DIM);
        let mut critic_shape = vec![obs_dim + ACTION_DIM];
        critic_shape.extend(&cfg.hidden);
        critic_shape.push(1);
        let scale = v_max[0].max(v_max[1]);
        let net_rng = |index: u64| seed::rng(master_seed, stream::INIT, index);

        let mut agents = Vec::with_capacity(n);
        for i in first..first + n {
            let actor = Mlp::random(&actor_shape, OutputActivation::ScaledTanh(scale), &mut net_rng(i as u64 * 16))?;
            let critic = Mlp::random(&critic_shape, OutputActivation::Identity, &mut net_rng(i as u64 * 16 + 1))?;
            agents.push(Agent {
                actor_opt: adam(actor.params().len(), cfg.lr_actor, cfg),
                critic_opt: adam(critic.params().len(), cfg.lr_critic, cfg),
                target_critic: critic.clone(),
                actor,
                critic,
                buffer: ReplayBuffer::new(
                    cfg.buffer_capacity,
                    obs_dim,
                    ACTION_DIM,
                    seed::rng(master_seed, stream::REPLAY, i as u64),
                ),
            });
        }
        let mut ensemble = Vec::new();
        if cfg.sec {
            for k in 0..cfg.ensemble_size {
                let idx = (1u64 << 32) + role.index() as u64 * 64 + k as u64;
                ensemble.push(Mlp::random(&critic_shape, OutputActivation::Identity, &mut net_rng(idx))?);
            }
        }
        let ensemble_opts = ensemble.iter().map(|m| adam(m.params().len(), cfg.lr_critic, cfg)).collect();
        Ok(Self {
            role,
            obs_dim,
            v_max,
            agents,
            ensemble,
            ensemble_opts,
            schedule: EiaSchedule::new(cfg.imitation_coef, cfg.mimicry_cycle),
        })
    }

    /// Row-major `[obs, action / v_max]` critic input.
    fn critic_input(&self, obs: &[f64], act: &[f64], batch: usize) -> Vec<f64> {
        let o = self.obs_dim;
        let mut x = Vec::with_capacity(batch * (o + ACTION_DIM));
        for b in 0..batch {
            x.extend_from_slice(&obs[b * o..(b + 1) * o]);
            for d in 0..ACTION_DIM {
                x.push(act[b * ACTION_DIM + d] / self.v_max[d]);
            }
        }
        x
    }

    /// Mixed value of agent `i` on a batch.
    pub fn predicted_q(&self, i: usize, obs: &[f64], act: &[f64], batch: usize, local_weight: f64) -> Result<Vec<f64>> {
        let x = self.critic_input(obs, act, batch);
        let local = self.agents[i].critic.forward_batch(&x, batch)?.output().to_vec();
        let shared = self
            .ensemble
            .iter()
            .map(|m| m.forward_batch(&x, batch).map(|c| c.output().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(mix_q(&local, &shared, local_weight))
    }

    /// Bootstrapped targets `r + gamma * Q'(o', pi(o'))`.
    pub fn targets(&self, i: usize, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
        let agent = &self.agents[i];
        let next_act = agent.actor.forward_batch(&batch.next_obs, batch.size)?.output().to_vec();
        let x = self.critic_input(&batch.next_obs, &next_act, batch.size);
        let next_q = agent.target_critic.forward_batch(&x, batch.size)?;
        Ok(batch.rew.iter().zip(next_q.output()).map(|(r, q)| r + gamma * q).collect())
    }

    /// Mean squared error of the mixed value against the targets, and its
    /// parameter gradients for the local critic and every ensemble member.
    pub fn critic_loss_and_grads(
        &self,
        i: usize,
        batch: &Batch,
        targets: &[f64],
        local_weight: f64,
    ) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let n = batch.size;
        let x = self.critic_input(&batch.obs, &batch.act, n);
        let local = self.agents[i].critic.forward_batch(&x, n)?;
        let shared = self.ensemble.iter().map(|m| m.forward_batch(&x, n)).collect::<Result<Vec<_>>>()?;
        let shared_out: Vec<Vec<f64>> = shared.iter().map(|c| c.output().to_vec()).collect();
        let (w_local, w_member) = if self.ensemble.is_empty() {
            (1.0, 0.0)
        } else {
            (local_weight, (1.0 - local_weight) / self.ensemble.len() as f64)
        };
        let q = mix_q(local.output(), &shared_out, local_weight);
        let err: Vec<f64> = q.iter().zip(targets).map(|(q, y)| q - y).collect();
        let loss = err.iter().map(|e| e * e).sum::<f64>() / n as f64;
        let dq: Vec<f64> = err.iter().map(|e| 2.0 * e / n as f64).collect();
        let scaled = |w: f64| dq.iter().map(|d| w * d).collect::<Vec<f64>>();
        let g_local = self.agents[i].critic.backward(&local, &scaled(w_local))?.params;
        let g_members = self
            .ensemble
            .iter()
            .zip(&shared)
            .map(|(m, c)| m.backward(c, &scaled(w_member)).map(|g| g.params))
            .collect::<Result<Vec<_>>>()?;
        Ok((loss, g_local, g_members))
    }

    /// Critic step of agent `i`: one optimizer step on the local critic and
    /// every ensemble member, then ensemble sync and target soft update.
    pub fn critic_update(&mut self, i: usize, batch: &Batch, cfg: &TrainConfig) -> Result<f64> {
        let local_weight = if cfg.sec { cfg.local_weight } else { 1.0 };
        let y = self.targets(i, batch, cfg.gamma)?;
        let (loss, g_local, g_members) = self.critic_loss_and_grads(i, batch, &y, local_weight)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("critic loss {loss}")));
        }
        let agent = &mut self.agents[i];
        agent.critic.apply(&mut agent.critic_opt, &g_local)?;
        for ((m, opt), g) in self.ensemble.iter_mut().zip(&mut self.ensemble_opts).zip(&g_members) {
            m.apply(opt, g)?;
        }
        sec_sync(&mut self.ensemble, &self.agents[i].critic, cfg.sec_rate)?;
        let agent = &mut self.agents[i];
        soft_update(agent.target_critic.params_mut(), agent.critic.params(), cfg.xi);
        Ok(loss)
    }

    /// `-mean Q(o, pi(o))` under the local critic and its actor gradient.
    pub fn actor_objective_and_grads(&self, i: usize, obs: &[f64], batch: usize) -> Result<(f64, Vec<f64>)> {
        let agent = &self.agents[i];
        let pi = agent.actor.forward_batch(obs, batch)?;
        let x = self.critic_input(obs, pi.output(), batch);
        let q = agent.critic.forward_batch(&x, batch)?;
        let loss = -q.output().iter().sum::<f64>() / batch as f64;
        let dq = vec![-1.0 / batch as f64; batch];
        let gx = agent.critic.backward(&q, &dq)?.input;
        let width = self.obs_dim + ACTION_DIM;
        let mut da = Vec::with_capacity(batch * ACTION_DIM);
        for b in 0..batch {
            for d in 0..ACTION_DIM {
                da.push(gx[b * width + self.obs_dim + d] / self.v_max[d]);
            }
        }
        Ok((loss, agent.actor.backward(&pi, &da)?.params))
    }

    /// Gradient ascent on the local critic's value of the actor's actions.
    pub fn actor_update(&mut self, i: usize, batch: &Batch) -> Result<f64> {
        let (loss, g) = self.actor_objective_and_grads(i, &batch.obs, batch.size)?;
        let agent = &mut self.agents[i];
        agent.actor.apply(&mut agent.actor_opt, &g)?;
        Ok(-loss)
    }

    /// Runs an imitation event from per-agent reward sequences: scores each
    /// agent, blends the others toward the elite and advances the schedule.
    /// Returns the elite index.
    pub fn run_imitation(&mut self, rewards: &[Vec<f64>], mean_weight: f64, var_weight: f64) -> Result<usize> {
        let scores = rewards
            .iter()
            .map(|r| elite_score(r, mean_weight, var_weight))
            .collect::<Result<Vec<_>>>()?;
        let elite = select_elite(&scores);
        let mut actors: Vec<&mut Mlp> = self.agents.iter_mut().map(|a| &mut a.actor).collect();
        imitate_elite(&mut actors, elite, self.schedule.coef)?;
        self.schedule.advance();
        Ok(elite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::{max_rel_err, numeric_grad};
    use crate::seed::Rng;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: vec![8, 8], batch_size: 4, ..TrainConfig::default() }
    }

    fn group(n: usize, cfg: &TrainConfig, seed: u64) -> AgentGroup {
        AgentGroup::new(Role::Monitoring, n, 0, 5, [10.0, 10.0], cfg, seed).unwrap()
    }

    fn batch(rng: &mut Rng, n: usize, obs_dim: usize) -> Batch {
        let mut f = |k: usize, s: f64| (0..k).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
        Batch {
            size: n,
            indices: (0..n).collect(),
            obs: f(n * obs_dim, 1.0),
            act: f(n * 2, 10.0),
            rew: f(n, 3.0),
            next_obs: f(n * obs_dim, 1.0),
        }
    }

    #[test]
    fn elite_score_examples() {
        assert_eq!(elite_score(&[2.0, 2.0, 2.0], 0.7, -3.0).unwrap(), 1.4);
        let w = elite_score(&[1.0, 2.0, 3.0], 1.0, -0.5).unwrap();
        assert!((w - (2.0 - 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(elite_score(&[], 1.0, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn select_elite_examples() {
        assert_eq!(select_elite(&[5.0]), 0);
        assert_eq!(select_elite(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(select_elite(&[3.0, 1.0, 3.0]), 0);
    }

    #[test]
    fn schedule_events() {
        let mut s = EiaSchedule::new(0.1, 10);
        let mut events = Vec::new();
        for e in 1..=200 {
            if s.is_event(e) {
                events.push((e, s.coef));
                s.advance();
            }
        }
        assert_eq!(events, vec![(10, 0.1), (30, 0.05), (70, 0.025), (150, 0.0125)]);
    }

    #[test]
    fn imitation_examples() {
        let mut a = Mlp::zeros(&[2, 1], OutputActivation::Identity).unwrap();
        let mut e = Mlp::zeros(&[2, 1], OutputActivation::Identity).unwrap();
        e.params_mut().iter_mut().for_each(|p| *p = 1.0);
        imitate_elite(&mut [&mut a, &mut e], 1, 0.1).unwrap();
        assert!(a.params().iter().all(|p| (p - 0.1).abs() < 1e-15));
        assert!(e.params().iter().all(|p| *p == 1.0));

        let cfg = small_cfg();
        let mut g = group(3, &cfg, 2);
        let mut actors: Vec<&mut Mlp> = g.agents.iter_mut().map(|a| &mut a.actor).collect();
        imitate_elite(&mut actors, 2, 1.0).unwrap();
        assert!(g.agents.iter().all(|a| a.actor.params() == g.agents[2].actor.params()));
    }

    #[test]
    fn imitation_event_halves_and_doubles() {
        let cfg = small_cfg();
        let mut g = group(2, &cfg, 3);
        let elite = g.run_imitation(&[vec![1.0, 1.0], vec![2.0, 2.0]], 1.0, -0.5).unwrap();
        assert_eq!(elite, 1);
        assert_eq!(g.schedule, EiaSchedule { coef: 0.05, cycle: 20, next_event: 30 });
    }

    #[test]
    fn mixing_examples() {
        let q = mix_q(&[1.0], &[vec![2.0], vec![4.0]], 0.1);
        assert!((q[0] - 2.8).abs() < 1e-15);
        assert_eq!(mix_q(&[1.25], &[vec![2.0], vec![4.0]], 1.0), vec![1.25]);
        assert_eq!(mix_q(&[0.375; 3], &vec![vec![0.375; 3]; 5], 0.1), vec![0.375; 3]);
    }

    #[test]
    fn sec_sync_examples() {
        let mut critic = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        critic.params_mut().iter_mut().for_each(|p| *p = 1.0);
        let mut ens = vec![Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap(); 2];
        sec_sync(&mut ens, &critic, 0.0).unwrap();
        assert!(ens.iter().all(|m| m.params().iter().all(|p| *p == 0.0)));
        sec_sync(&mut ens, &critic, 0.1).unwrap();
        assert!(ens[0].params().iter().all(|p| (p - 0.05).abs() < 1e-15));
        assert!(ens[1].params().iter().all(|p| (p - 0.1).abs() < 1e-15));
        assert!(matches!(sec_sync(&mut ens, &critic, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn td_target_example() {
        // constant critics: target 2, mixed value 2
        let cfg = TrainConfig { hidden: vec![3], ..TrainConfig::default() };
        let mut g = group(1, &cfg, 1);
        let set_const = |m: &mut Mlp, v: f64| {
            let n = m.params().len();
            let p = m.params_mut();
            p.iter_mut().for_each(|x| *x = 0.0);
            p[n - 1] = v;
        };
        set_const(&mut g.agents[0].target_critic, 2.0);
        set_const(&mut g.agents[0].critic, 2.0);
        for m in &mut g.ensemble {
            set_const(m, 2.0);
        }
        let b = Batch { size: 1, indices: vec![0], obs: vec![0.1; 5], act: vec![1.0, 2.0], rew: vec![1.0], next_obs: vec![0.2; 5] };
        let y = g.targets(0, &b, 0.99).unwrap();
        assert!((y[0] - 2.98).abs() < 1e-12);
        let (loss, _, _) = g.critic_loss_and_grads(0, &b, &y, 0.1).unwrap();
        assert!((loss - 0.9604).abs() < 1e-12);
    }

    #[test]
    fn exact_targets_give_zero_loss_and_gradient() {
        let cfg = small_cfg();
        let g = group(1, &cfg, 4);
        let mut rng = Rng::seed_from_u64(1);
        let mut b = batch(&mut rng, 6, 5);
        b.rew = g.predicted_q(0, &b.obs, &b.act, 6, 0.1).unwrap();
        let y = g.targets(0, &b, 0.0).unwrap();
        let (loss, gl, gm) = g.critic_loss_and_grads(0, &b, &y, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(gl.iter().chain(gm.iter().flatten()).all(|v| *v == 0.0));
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let cfg = small_cfg();
        let mut rng = Rng::seed_from_u64(11);
        let g = group(2, &cfg, 5);
        let b = batch(&mut rng, 4, 5);
        let y = g.targets(1, &b, 0.99).unwrap();
        let (_, gl, gm) = g.critic_loss_and_grads(1, &b, &y, 0.1).unwrap();
        let act = OutputActivation::Identity;
        let shape = g.agents[1].critic.sizes().to_vec();
        let num = numeric_grad(g.agents[1].critic.params(), 1e-5, |p| {
            let mut h = g.clone();
            h.agents[1].critic = Mlp::from_params(&shape, act, p.to_vec()).unwrap();
            h.critic_loss_and_grads(1, &b, &y, 0.1).unwrap().0
        });
        assert!(max_rel_err(&gl, &num) < 1e-4);
        let num = numeric_grad(g.ensemble[1].params(), 1e-5, |p| {
            let mut h = g.clone();
            h.ensemble[1] = Mlp::from_params(&shape, act, p.to_vec()).unwrap();
            h.critic_loss_and_grads(1, &b, &y, 0.1).unwrap().0
        });
        assert!(max_rel_err(&gm[1], &num) < 1e-4);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let mut rng = Rng::seed_from_u64(12);
        let g = group(1, &cfg, 6);
        let b = batch(&mut rng, 4, 5);
        let (_, grad) = g.actor_objective_and_grads(0, &b.obs, 4).unwrap();
        let shape = g.agents[0].actor.sizes().to_vec();
        let out = g.agents[0].actor.output_activation();
        let num = numeric_grad(g.agents[0].actor.params(), 1e-5, |p| {
            let mut h = g.clone();
            h.agents[0].actor = Mlp::from_params(&shape, out, p.to_vec()).unwrap();
            h.actor_objective_and_grads(0, &b.obs, 4).unwrap().0
        });
        assert!(max_rel_err(&grad, &num) < 1e-4);
    }

    #[test]
    fn critic_blind_to_action_gives_zero_actor_gradient() {
        let cfg = small_cfg();
        let mut g = group(1, &cfg, 7);
        let o = g.obs_dim;
        let h = cfg.hidden[0];
        // zero the first-layer weights reading the action inputs
        let p = g.agents[0].critic.params_mut();
        for r in o..o + 2 {
            p[r * h..(r + 1) * h].iter_mut().for_each(|w| *w = 0.0);
        }
        let mut rng = Rng::seed_from_u64(2);
        let b = batch(&mut rng, 4, 5);
        let (_, grad) = g.actor_objective_and_grads(0, &b.obs, 4).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn actor_climbs_linear_critic_to_saturation() {
        let cfg = TrainConfig { hidden: vec![4], lr_actor: 1e-2, ..TrainConfig::default() };
        let mut g = group(1, &cfg, 8);
        // critic = first action component (normalised)
        let o = g.obs_dim;
        let shape = g.agents[0].critic.sizes().to_vec();
        let mut params = vec![0.0; g.agents[0].critic.params().len()];
        // hidden unit 0 reads +a0; relu passes it when positive, unit 1 reads -a0 with negative output weight
        params[o * 4] = 1.0;
        params[o * 4 + 1] = -1.0;
        let hb = (o + 2) * 4;
        params[hb + 4] = 1.0;
        params[hb + 4 + 1] = -1.0;
        g.agents[0].critic = Mlp::from_params(&shape, OutputActivation::Identity, params).unwrap();
        let mut rng = Rng::seed_from_u64(3);
        let b = batch(&mut rng, 8, 5);
        let start = g.agents[0].actor.forward_batch(&b.obs, 8).unwrap().output().to_vec();
        for _ in 0..3000 {
            g.actor_update(0, &b).unwrap();
        }
        let end = g.agents[0].actor.forward_batch(&b.obs, 8).unwrap().output().to_vec();
        for k in 0..8 {
            assert!(end[2 * k] > start[2 * k]);
            assert!(end[2 * k] > 9.5, "{}", end[2 * k]);
        }
    }

    #[test]
    fn networks_use_independent_streams() {
        let on = small_cfg();
        let off = TrainConfig { sec: false, ..small_cfg() };
        let a = group(2, &on, 9);
        let b = group(2, &off, 9);
        assert!(b.ensemble.is_empty());
        for (x, y) in a.agents.iter().zip(&b.agents) {
            assert_eq!(x.actor.params(), y.actor.params());
            assert_eq!(x.critic.params(), y.critic.params());
        }
    }

    proptest! {
        #[test]
        fn elite_invariant_under_common_shift(
            rewards in prop::collection::vec(prop::collection::vec(-50i32..50, 1..6), 1..5),
            shift in -100i32..100,
        ) {
            // integer-valued rewards keep means and variances exact
            let len = rewards[0].len();
            let rows: Vec<Vec<f64>> = rewards.iter().map(|r| (0..len).map(|k| f64::from(r[k % r.len()])).collect()).collect();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + f64::from(shift)).collect()).collect();
            let score = |rs: &[Vec<f64>]| rs.iter().map(|r| elite_score(r, 1.0, -0.5).unwrap()).collect::<Vec<_>>();
            let (a, b) = (score(&rows), score(&shifted));
            prop_assert_eq!(select_elite(&a), select_elite(&b));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y - x - f64::from(shift)).abs() < 1e-9);
            }
        }

        #[test]
        fn imitation_keeps_elite_and_moves_others_toward_it(
            vals in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 2..5),
            elite_pick in 0usize..5,
            coef in 0.01..1.0f64,
        ) {
            let elite = elite_pick % vals.len();
            let mut nets: Vec<Mlp> = vals.iter().map(|v| Mlp::from_params(&[2, 1], OutputActivation::Identity, v.clone()).unwrap()).collect();
            let before = nets.clone();
            let mut refs: Vec<&mut Mlp> = nets.iter_mut().collect();
            imitate_elite(&mut refs, elite, coef).unwrap();
            prop_assert_eq!(nets[elite].params(), before[elite].params());
            let e = before[elite].params();
            for (i, (n, b)) in nets.iter().zip(&before).enumerate() {
                if i == elite { continue; }
                for k in 0..3 {
                    if b.params()[k] != e[k] {
                        prop_assert!((n.params()[k] - e[k]).abs() < (b.params()[k] - e[k]).abs());
                    }
                }
            }
        }
    }
}

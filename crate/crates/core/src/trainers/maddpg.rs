use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::policy::MaddpgPolicy;
use super::{agent_spaces, derive_seed, linear, mean, AgentSpaces, ReplayBuffer, TrainMetrics, Transition};
use crate::env::MultiAgentEnvironment;
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{soft_update, Activation, AdamConfig, AdamState, Gradient, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaddpgConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub hidden: Vec<usize>,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Minibatch updates per agent after each iteration's collection.
    pub updates_per_iteration: usize,
    /// No updates until the buffer holds this many transitions.
    pub warmup_transitions: usize,
    /// Exploration noise standard deviation in normalized action units,
    /// annealed linearly over `noise_anneal_iterations`.
    pub noise_start: f64,
    pub noise_end: f64,
    pub noise_anneal_iterations: usize,
    pub max_grad_norm: Option<f64>,
    /// Multiplies rewards inside the Bellman target.
    pub reward_scale: f64,
    pub checkpoint_every: usize,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        Self {
            iterations: 350,
            episodes_per_iteration: 10,
            hidden: vec![64, 64],
            actor_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
            gamma: 0.99,
            tau: 0.01,
            buffer_capacity: 100_000,
            batch_size: 256,
            updates_per_iteration: 100,
            warmup_transitions: 1_000,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_anneal_iterations: 200,
            max_grad_norm: Some(0.5),
            reward_scale: 1.0,
            checkpoint_every: 50,
        }
    }
}

impl MaddpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("maddpg: {m}")));
        if self.episodes_per_iteration == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("episodes_per_iteration, batch_size and buffer_capacity must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.actor_learning_rate < 0.0 || self.critic_learning_rate < 0.0 {
            return bad("learning rates must be non-negative");
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if matches!(self.max_grad_norm, Some(g) if !(g > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        if !self.reward_scale.is_finite() {
            return bad("reward_scale must be finite");
        }
        Ok(())
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }
}

/// Actor, centralized critic and their target copies for one agent.
#[derive(Clone, Debug)]
pub struct MaddpgAgent {
    pub spaces: AgentSpaces,
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub target_actor: Mlp<f64>,
    pub target_critic: Mlp<f64>,
    actor_opt: AdamState<f64>,
    critic_opt: AdamState<f64>,
}

impl MaddpgAgent {
    pub fn new(
        spaces: AgentSpaces,
        critic_input: usize,
        config: &MaddpgConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let actor = Mlp::new(
            &config.sizes(spaces.observation.len(), spaces.action.len()),
            Activation::Tanh,
            Activation::Tanh,
            rng,
        )?;
        let critic = Mlp::new(
            &config.sizes(critic_input, 1),
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        Ok(Self {
            spaces,
            actor_opt: AdamState::new(actor.param_count(), AdamConfig::with_learning_rate(config.actor_learning_rate)),
            critic_opt: AdamState::new(critic.param_count(), AdamConfig::with_learning_rate(config.critic_learning_rate)),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }

    /// Deterministic action in normalized units.
    pub fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(observation)
    }
}

fn joint(observations: &[Vec<f64>], actions: &[Vec<f64>]) -> Vec<f64> {
    let mut x: Vec<f64> = observations.iter().flatten().copied().collect();
    x.extend(actions.iter().flatten());
    x
}

fn check_batch(agents: &[MaddpgAgent], i: usize, batch: &[&Transition]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    if i >= agents.len() {
        return Err(Error::contract(format!("agent index {i} out of range")));
    }
    for t in batch {
        if t.agents() != agents.len() {
            return Err(Error::contract(format!(
                "transition covers {} agents, trainer has {}",
                t.agents(),
                agents.len()
            )));
        }
        for (a, (o, u)) in agents.iter().zip(t.observations.iter().zip(&t.actions)) {
            if o.len() != a.spaces.observation.len() || u.len() != a.spaces.action.len() {
                return Err(Error::contract(format!("transition shapes do not match agent '{}'", a.spaces.id)));
            }
        }
    }
    Ok(())
}

fn target_actions(agents: &[MaddpgAgent], batch: &[&Transition]) -> Result<Vec<Vec<Vec<f64>>>> {
    batch
        .iter()
        .map(|t| {
            agents
                .iter()
                .zip(&t.next_observations)
                .map(|(a, o)| a.target_actor.forward(o))
                .collect()
        })
        .collect()
}

/// Mean squared Bellman error of agent `i` and its gradient with respect to
/// the online critic. Targets use the target actors of every agent and the
/// target critic of agent `i`, and are held constant.
pub fn critic_loss(
    agents: &[MaddpgAgent],
    i: usize,
    batch: &[&Transition],
    gamma: f64,
    reward_scale: f64,
) -> Result<(f64, Gradient<f64>)> {
    check_batch(agents, i, batch)?;
    let next = target_actions(agents, batch)?;
    critic_loss_with(agents, i, batch, &next, gamma, reward_scale)
}

fn critic_loss_with(
    agents: &[MaddpgAgent],
    i: usize,
    batch: &[&Transition],
    next_actions: &[Vec<Vec<f64>>],
    gamma: f64,
    reward_scale: f64,
) -> Result<(f64, Gradient<f64>)> {
    let agent = &agents[i];
    let inv = 1.0 / batch.len() as f64;
    let mut grad = Gradient::zeros(agent.critic.param_count());
    let mut loss = 0.0;
    for (t, next) in batch.iter().zip(next_actions) {
        let bootstrap = if t.done {
            0.0
        } else {
            gamma * agent.target_critic.forward(&joint(&t.next_observations, next))?[0]
        };
        let y = reward_scale * t.rewards[i] + bootstrap;
        let input = joint(&t.observations, &t.actions);
        let err = agent.critic.forward(&input)?[0] - y;
        loss += err * err * inv;
        agent.critic.accumulate_backward(&input, &[2.0 * err * inv], &mut grad)?;
    }
    Ok((loss, grad))
}

/// Negative mean critic value with agent `i`'s action replaced by its
/// actor's output, and the gradient with respect to that actor only.
pub fn actor_loss(agents: &[MaddpgAgent], i: usize, batch: &[&Transition]) -> Result<(f64, Gradient<f64>)> {
    check_batch(agents, i, batch)?;
    let agent = &agents[i];
    let inv = 1.0 / batch.len() as f64;
    let obs_total: usize = agents.iter().map(|a| a.spaces.observation.len()).sum();
    let offset = obs_total + agents[..i].iter().map(|a| a.spaces.action.len()).sum::<usize>();
    let width = agent.spaces.action.len();
    let mut grad = Gradient::zeros(agent.actor.param_count());
    let mut loss = 0.0;
    for t in batch {
        let mut actions = t.actions.clone();
        actions[i] = agent.actor.forward(&t.observations[i])?;
        let input = joint(&t.observations, &actions);
        loss -= agent.critic.forward(&input)?[0] * inv;
        let (_, input_grad) = agent.critic.backward(&input, &[-inv])?;
        agent
            .actor
            .accumulate_backward(&t.observations[i], &input_grad[offset..offset + width], &mut grad)?;
    }
    Ok((loss, grad))
}

pub(crate) fn noisy(action: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    for a in action.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *a = (*a + sigma * z).clamp(-1.0, 1.0);
    }
}

/// Collects episodes with Gaussian exploration and updates every agent's
/// critic, then actor, then all targets.
pub struct MaddpgTrainer<E> {
    env: E,
    config: MaddpgConfig,
    agents: Vec<MaddpgAgent>,
    buffer: ReplayBuffer,
    noise_rng: ChaCha8Rng,
    seed: u64,
    iteration: usize,
    episodes: u64,
    env_steps: u64,
}

impl<E: MultiAgentEnvironment> MaddpgTrainer<E> {
    pub fn new(env: E, config: MaddpgConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spaces = agent_spaces(&env)?;
        let critic_input: usize = spaces.iter().map(|s| s.observation.len() + s.action.len()).sum();
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
        let agents = spaces
            .into_iter()
            .map(|s| MaddpgAgent::new(s, critic_input, &config, &mut init_rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity, derive_seed(seed, &[4]))?,
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[5])),
            env,
            config,
            agents,
            seed,
            iteration: 0,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &MaddpgConfig {
        &self.config
    }

    pub fn agents(&self) -> &[MaddpgAgent] {
        &self.agents
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn noise_scale(&self) -> f64 {
        let span = self.config.noise_anneal_iterations.max(1) as f64;
        linear(self.config.noise_start, self.config.noise_end, self.iteration as f64 / span)
    }

    pub fn policy(&self) -> MaddpgPolicy {
        MaddpgPolicy::new(self.agents.iter().map(|a| (a.spaces.clone(), a.actor.clone())).collect())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for a in &self.agents {
            let id = &a.spaces.id;
            ck.insert_network(format!("actor/{id}"), &a.actor);
            ck.insert_network(format!("critic/{id}"), &a.critic);
            ck.insert_network(format!("target_actor/{id}"), &a.target_actor);
            ck.insert_network(format!("target_critic/{id}"), &a.target_critic);
        }
        ck
    }

    /// Runs one exploratory episode and stores its transitions. Returns the
    /// per-agent returns and the episode's violation sum.
    fn collect_episode(&mut self, sigma: f64) -> Result<(Vec<f64>, f64)> {
        let env_seed = derive_seed(self.seed, &[1, self.episodes]);
        self.episodes += 1;
        let raw = self.env.reset(env_seed)?;
        let mut obs = self.normalized(&raw)?;
        let mut returns = vec![0.0; self.agents.len()];
        let mut v_vio = 0.0;
        loop {
            let mut actions = Vec::with_capacity(self.agents.len());
            let mut env_actions = BTreeMap::new();
            for (a, o) in self.agents.iter().zip(&obs) {
                let mut u = a.act(o)?;
                noisy(&mut u, sigma, &mut self.noise_rng);
                env_actions.insert(a.spaces.id.clone(), a.spaces.action.denormalize(&u));
                actions.push(u);
            }
            let step = self.env.step(&env_actions)?;
            self.env_steps += 1;
            let done = step.all_done();
            let mut rewards = Vec::with_capacity(self.agents.len());
            for (k, a) in self.agents.iter().enumerate() {
                let r = step.rewards[&a.spaces.id];
                returns[k] += r;
                rewards.push(r);
            }
            v_vio += step_violation(&step.metas);
            let next = self.normalized(&step.observations)?;
            self.buffer.push(Transition {
                observations: std::mem::replace(&mut obs, next.clone()),
                actions,
                rewards,
                next_observations: next,
                done,
            })?;
            if done {
                return Ok((returns, v_vio));
            }
        }
    }

    fn normalized(&self, raw: &BTreeMap<String, Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        self.agents
            .iter()
            .map(|a| {
                raw.get(&a.spaces.id)
                    .map(|o| a.spaces.observation.normalize(o))
                    .ok_or_else(|| Error::contract(format!("no observation for '{}'", a.spaces.id)))
            })
            .collect()
    }

    fn update(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.agents.len();
        let mut critic_losses = vec![0.0; n];
        let mut actor_losses = vec![0.0; n];
        let (gamma, scale, clip, tau) = (
            self.config.gamma,
            self.config.reward_scale,
            self.config.max_grad_norm,
            self.config.tau,
        );
        for _ in 0..self.config.updates_per_iteration {
            let batch = self.buffer.sample(self.config.batch_size)?;
            check_batch(&self.agents, 0, &batch)?;
            let next = target_actions(&self.agents, &batch)?;
            for i in 0..n {
                let (lc, mut gc) = critic_loss_with(&self.agents, i, &batch, &next, gamma, scale)?;
                finite_step("critic", &self.agents[i].spaces.id, lc, &gc)?;
                if let Some(c) = clip {
                    gc.clip_norm(c);
                }
                let a = &mut self.agents[i];
                a.critic_opt.update(a.critic.params_mut(), &gc)?;

                let (la, mut ga) = actor_loss(&self.agents, i, &batch)?;
                finite_step("actor", &self.agents[i].spaces.id, la, &ga)?;
                if let Some(c) = clip {
                    ga.clip_norm(c);
                }
                let a = &mut self.agents[i];
                a.actor_opt.update(a.actor.params_mut(), &ga)?;
                critic_losses[i] += lc;
                actor_losses[i] += la;
            }
            for a in &mut self.agents {
                soft_update(a.target_critic.params_mut(), a.critic.params(), tau)?;
                soft_update(a.target_actor.params_mut(), a.actor.params(), tau)?;
            }
        }
        let u = self.config.updates_per_iteration as f64;
        Ok((
            critic_losses.into_iter().map(|l| l / u).collect(),
            actor_losses.into_iter().map(|l| l / u).collect(),
        ))
    }

    /// Collection plus updates for one iteration.
    pub fn step_iteration(&mut self) -> Result<TrainMetrics> {
        let sigma = self.noise_scale();
        let n = self.agents.len();
        let episodes = self.config.episodes_per_iteration;
        let mut returns = vec![0.0; n];
        let mut v_vio = 0.0;
        for _ in 0..episodes {
            let (r, v) = self.collect_episode(sigma)?;
            for (acc, x) in returns.iter_mut().zip(r) {
                *acc += x / episodes as f64;
            }
            v_vio += v / episodes as f64;
        }
        let ready = self.buffer.len() >= self.config.warmup_transitions.max(self.config.batch_size)
            && self.config.updates_per_iteration > 0;
        let losses = if ready { Some(self.update()?) } else { None };

        let ids: Vec<String> = self.agents.iter().map(|a| a.spaces.id.clone()).collect();
        let metrics = TrainMetrics {
            iteration: self.iteration,
            episode_returns: ids.iter().cloned().zip(returns.iter().copied()).collect(),
            total_return: returns.iter().sum(),
            critic_loss: losses.as_ref().and_then(|(c, _)| mean(c.iter().copied())),
            actor_loss: losses.as_ref().and_then(|(_, a)| mean(a.iter().copied())),
            ppo_loss: None,
            agent_losses: match &losses {
                Some((c, _)) => ids.into_iter().zip(c.iter().copied()).collect(),
                None => BTreeMap::new(),
            },
            v_vio,
            skipped_samples: 0,
            env_steps: self.env_steps,
        };
        metrics.check_finite()?;
        self.iteration += 1;
        Ok(metrics)
    }
}

/// Violation sum reported by the environment for one step. Every agent
/// carries the same value.
pub(crate) fn step_violation(metas: &BTreeMap<String, crate::env::Meta>) -> f64 {
    metas
        .values()
        .next()
        .and_then(|m| m.get("v_vio").copied())
        .unwrap_or(0.0)
}

fn finite_step(what: &str, id: &str, loss: f64, grad: &Gradient<f64>) -> Result<()> {
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::Training(format!("{what} loss of agent '{id}' is not finite ({loss})")));
    }
    Ok(())
}

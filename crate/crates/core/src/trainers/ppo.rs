use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::maddpg::step_violation;
use super::policy::PpoPolicy;
use super::{agent_spaces, derive_seed, gae_advantages, mean, normalize, AgentSpaces, TrainMetrics};
use crate::env::MultiAgentEnvironment;
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{Activation, AdamConfig, AdamState, Gradient, Mlp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub initial_log_std: f64,
    pub max_grad_norm: Option<f64>,
    pub reward_scale: f64,
    /// Per-agent reward multipliers applied before advantage estimation;
    /// agents not listed use 1.
    pub reward_multipliers: BTreeMap<String, f64>,
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iteration: 8,
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            minibatch_size: 256,
            value_coef: 0.5,
            entropy_coef: 0.01,
            initial_log_std: -0.5,
            max_grad_norm: Some(0.5),
            reward_scale: 1.0,
            reward_multipliers: BTreeMap::new(),
            checkpoint_every: 50,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("ppo: {m}")));
        if self.episodes_per_iteration == 0 || self.minibatch_size == 0 {
            return bad("episodes_per_iteration and minibatch_size must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.clip_epsilon) {
            return bad("clip_epsilon must be in [0, 1)");
        }
        if self.learning_rate < 0.0 || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("learning rate and loss coefficients must be non-negative");
        }
        if !self.initial_log_std.is_finite() || !self.reward_scale.is_finite() {
            return bad("initial_log_std and reward_scale must be finite");
        }
        if matches!(self.max_grad_norm, Some(g) if !(g > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        if self.reward_multipliers.values().any(|m| !m.is_finite()) {
            return bad("reward multipliers must be finite");
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

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean.iter().zip(log_std))
        .map(|(a, (m, s))| {
            let z = (a - m) * (-s).exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

/// One on-policy sample in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub observation: Vec<f64>,
    /// Unclipped Gaussian draw.
    pub action: Vec<f64>,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Clone, Debug)]
pub struct PpoGradient {
    pub policy: Gradient<f64>,
    pub log_std: Gradient<f64>,
    pub value: Gradient<f64>,
}

impl PpoGradient {
    pub fn norm(&self) -> f64 {
        let sq = |g: &Gradient<f64>| g.0.iter().map(|x| x * x).sum::<f64>();
        (sq(&self.policy) + sq(&self.log_std) + sq(&self.value)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.log_std.is_finite() && self.value.is_finite()
    }

    /// Joint norm clipping over all three parts.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm {
            let s = max_norm / n;
            self.policy.scale(s);
            self.log_std.scale(s);
            self.value.scale(s);
        }
    }
}

#[derive(Clone, Debug)]
pub struct PpoLoss {
    /// `surrogate + value_coef * value_loss - entropy_coef * entropy`.
    pub loss: f64,
    /// Negative mean clipped surrogate.
    pub surrogate: f64,
    /// Mean squared error to the value targets.
    pub value_loss: f64,
    pub entropy: f64,
    /// Samples dropped for a non-finite probability ratio.
    pub skipped: usize,
    pub grad: PpoGradient,
}

/// Diagonal Gaussian policy with state-independent log-std, plus a value
/// network.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub spaces: AgentSpaces,
    pub policy: Mlp<f64>,
    pub log_std: Vec<f64>,
    pub value: Mlp<f64>,
    /// Snapshot taken at the start of each iteration.
    pub old_policy: Mlp<f64>,
    pub old_log_std: Vec<f64>,
    policy_opt: AdamState<f64>,
    log_std_opt: AdamState<f64>,
    value_opt: AdamState<f64>,
}

impl PpoAgent {
    pub fn new(spaces: AgentSpaces, config: &PpoConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let obs = spaces.observation.len();
        let act = spaces.action.len();
        let policy = Mlp::new(&config.sizes(obs, act), Activation::Tanh, Activation::Identity, rng)?;
        let value = Mlp::new(&config.sizes(obs, 1), Activation::Tanh, Activation::Identity, rng)?;
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let log_std = vec![config.initial_log_std; act];
        Ok(Self {
            spaces,
            policy_opt: AdamState::new(policy.param_count(), adam.clone()),
            log_std_opt: AdamState::new(act, adam.clone()),
            value_opt: AdamState::new(value.param_count(), adam),
            old_policy: policy.clone(),
            old_log_std: log_std.clone(),
            policy,
            log_std,
            value,
        })
    }

    pub fn snapshot(&mut self) {
        self.old_policy = self.policy.clone();
        self.old_log_std = self.log_std.clone();
    }

    pub fn apply(&mut self, grad: &PpoGradient) -> Result<()> {
        self.policy_opt.update(self.policy.params_mut(), &grad.policy)?;
        self.log_std_opt.update(&mut self.log_std, &grad.log_std)?;
        self.value_opt.update(self.value.params_mut(), &grad.value)
    }
}

/// Clipped-surrogate PPO loss with value and entropy terms, minimized.
pub fn ppo_loss(
    agent: &PpoAgent,
    samples: &[PpoSample],
    clip_epsilon: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> Result<PpoLoss> {
    if samples.is_empty() {
        return Err(Error::contract("ppo loss needs at least one sample"));
    }
    let act = agent.spaces.action.len();
    let obs = agent.spaces.observation.len();
    if samples.iter().any(|s| s.action.len() != act || s.observation.len() != obs) {
        return Err(Error::contract(format!("sample shapes do not match agent '{}'", agent.spaces.id)));
    }

    let mut kept = Vec::with_capacity(samples.len());
    for s in samples {
        let mu = agent.policy.forward(&s.observation)?;
        let ratio = (gaussian_log_prob(&s.action, &mu, &agent.log_std) - s.log_prob_old).exp();
        if ratio.is_finite() {
            kept.push((s, mu, ratio));
        }
    }
    let skipped = samples.len() - kept.len();

    let mut grad = PpoGradient {
        policy: Gradient::zeros(agent.policy.param_count()),
        log_std: Gradient::zeros(act),
        value: Gradient::zeros(agent.value.param_count()),
    };
    let entropy: f64 = agent.log_std.iter().map(|s| s + 0.5 * (LN_2PI + 1.0)).sum();
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    if !kept.is_empty() {
        let inv = 1.0 / kept.len() as f64;
        let inv_var: Vec<f64> = agent.log_std.iter().map(|s| (-2.0 * s).exp()).collect();
        for (s, mu, ratio) in &kept {
            let a = s.advantage;
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
            surrogate -= unclipped.min(clipped) * inv;
            // d(-min)/d(log pi) is -ratio * A when the unclipped term is the
            // minimum, zero otherwise.
            if unclipped <= clipped {
                let dlogp = -unclipped * inv;
                let mut upstream = vec![0.0; act];
                for k in 0..act {
                    let diff = s.action[k] - mu[k];
                    upstream[k] = dlogp * diff * inv_var[k];
                    grad.log_std.0[k] += dlogp * (diff * diff * inv_var[k] - 1.0);
                }
                agent.policy.accumulate_backward(&s.observation, &upstream, &mut grad.policy)?;
            }
            let err = agent.value.forward(&s.observation)?[0] - s.value_target;
            value_loss += err * err * inv;
            agent
                .value
                .accumulate_backward(&s.observation, &[value_coef * 2.0 * err * inv], &mut grad.value)?;
        }
    }
    for g in grad.log_std.0.iter_mut() {
        *g -= entropy_coef;
    }
    Ok(PpoLoss {
        loss: surrogate + value_coef * value_loss - entropy_coef * entropy,
        surrogate,
        value_loss,
        entropy,
        skipped,
        grad,
    })
}

/// Independent PPO learners, one per agent, sharing only the environment.
pub struct PpoTrainer<E> {
    env: E,
    config: PpoConfig,
    agents: Vec<PpoAgent>,
    seed: u64,
    iteration: usize,
    episodes: u64,
    env_steps: u64,
}

struct Trajectory {
    samples: Vec<PpoSample>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
}

impl<E: MultiAgentEnvironment> PpoTrainer<E> {
    pub fn new(env: E, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spaces = agent_spaces(&env)?;
        if let Some(k) = config.reward_multipliers.keys().find(|k| !spaces.iter().any(|s| &s.id == *k)) {
            return Err(Error::config(format!("ppo: reward multiplier for unknown agent '{k}'")));
        }
        let agents = spaces
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, k as u64]));
                PpoAgent::new(s, &config, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            env,
            config,
            agents,
            seed,
            iteration: 0,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn agents(&self) -> &[PpoAgent] {
        &self.agents
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn policy(&self) -> PpoPolicy {
        PpoPolicy::new(self.agents.iter().map(|a| (a.spaces.clone(), a.policy.clone())).collect())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for a in &self.agents {
            let id = &a.spaces.id;
            ck.insert_network(format!("policy/{id}"), &a.policy);
            ck.insert_vector(format!("log_std/{id}"), &a.log_std);
            ck.insert_network(format!("value/{id}"), &a.value);
        }
        ck
    }

    fn collect_episode(&mut self, trajectories: &mut [Trajectory]) -> Result<(Vec<f64>, f64)> {
        let n = self.agents.len();
        let episode = self.episodes;
        self.episodes += 1;
        let mut rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|k| ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[2, episode, k as u64])))
            .collect();
        let multipliers: Vec<f64> = self
            .agents
            .iter()
            .map(|a| {
                self.config.reward_scale * self.config.reward_multipliers.get(&a.spaces.id).copied().unwrap_or(1.0)
            })
            .collect();
        let start: Vec<usize> = trajectories.iter().map(|t| t.rewards.len()).collect();

        let mut raw = self.env.reset(derive_seed(self.seed, &[1, episode]))?;
        let mut returns = vec![0.0; n];
        let mut v_vio = 0.0;
        loop {
            let mut env_actions = BTreeMap::new();
            for (k, a) in self.agents.iter().enumerate() {
                let o = a.spaces.observation.normalize(&raw[&a.spaces.id]);
                let mu = a.policy.forward(&o)?;
                let action: Vec<f64> = mu
                    .iter()
                    .zip(&a.log_std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rngs[k]);
                        m + s.exp() * z
                    })
                    .collect();
                let log_prob_old = gaussian_log_prob(&action, &mu, &a.log_std);
                let clipped: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
                env_actions.insert(a.spaces.id.clone(), a.spaces.action.denormalize(&clipped));
                trajectories[k].values.push(a.value.forward(&o)?[0]);
                trajectories[k].samples.push(PpoSample {
                    observation: o,
                    action,
                    log_prob_old,
                    advantage: 0.0,
                    value_target: 0.0,
                });
            }
            let step = self.env.step(&env_actions)?;
            self.env_steps += 1;
            let done = step.all_done();
            for (k, a) in self.agents.iter().enumerate() {
                let r = step.rewards[&a.spaces.id];
                returns[k] += r;
                trajectories[k].rewards.push(r * multipliers[k]);
                trajectories[k].dones.push(done);
            }
            v_vio += step_violation(&step.metas);
            raw = step.observations;
            if done {
                break;
            }
        }

        for (k, t) in trajectories.iter_mut().enumerate() {
            let s = start[k];
            let adv = gae_advantages(
                &t.rewards[s..],
                &t.values[s..],
                &t.dones[s..],
                0.0,
                self.config.gamma,
                self.config.gae_lambda,
            )?;
            for (j, a) in adv.into_iter().enumerate() {
                let sample = &mut t.samples[s + j];
                sample.advantage = a;
                sample.value_target = a + t.values[s + j];
            }
        }
        Ok((returns, v_vio))
    }

    /// Minibatch epochs for agent `k`. Returns the mean loss and the number
    /// of skipped samples.
    fn update_agent(&mut self, k: usize, samples: &[PpoSample]) -> Result<(f64, usize)> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[3, self.iteration as u64, k as u64]));
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut losses = Vec::new();
        let mut skipped = 0;
        let agent = &mut self.agents[k];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let mut batch: Vec<PpoSample> = chunk.iter().map(|&j| samples[j].clone()).collect();
                let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
                normalize(&mut adv);
                for (s, a) in batch.iter_mut().zip(adv) {
                    s.advantage = a;
                }
                let mut out = ppo_loss(agent, &batch, cfg.clip_epsilon, cfg.value_coef, cfg.entropy_coef)?;
                if !out.loss.is_finite() || !out.grad.is_finite() {
                    return Err(Error::Training(format!(
                        "ppo loss of agent '{}' is not finite at iteration {} (surrogate {}, value {}, log_std {:?})",
                        agent.spaces.id, self.iteration, out.surrogate, out.value_loss, agent.log_std
                    )));
                }
                if let Some(c) = cfg.max_grad_norm {
                    out.grad.clip_norm(c);
                }
                agent.apply(&out.grad)?;
                losses.push(out.loss);
                skipped += out.skipped;
            }
        }
        Ok((mean(losses).unwrap_or(0.0), skipped))
    }

    pub fn step_iteration(&mut self) -> Result<TrainMetrics> {
        let n = self.agents.len();
        for a in &mut self.agents {
            a.snapshot();
        }
        let mut trajectories: Vec<Trajectory> = (0..n)
            .map(|_| Trajectory {
                samples: Vec::new(),
                rewards: Vec::new(),
                values: Vec::new(),
                dones: Vec::new(),
            })
            .collect();
        let episodes = self.config.episodes_per_iteration;
        let mut returns = vec![0.0; n];
        let mut v_vio = 0.0;
        for _ in 0..episodes {
            let (r, v) = self.collect_episode(&mut trajectories)?;
            for (acc, x) in returns.iter_mut().zip(r) {
                *acc += x / episodes as f64;
            }
            v_vio += v / episodes as f64;
        }

        let mut agent_losses = BTreeMap::new();
        let mut skipped = 0;
        for (k, t) in trajectories.into_iter().enumerate() {
            let (loss, s) = self.update_agent(k, &t.samples)?;
            agent_losses.insert(self.agents[k].spaces.id.clone(), loss);
            skipped += s;
        }
        let ids = self.agents.iter().map(|a| a.spaces.id.clone());
        let metrics = TrainMetrics {
            iteration: self.iteration,
            episode_returns: ids.zip(returns.iter().copied()).collect(),
            total_return: returns.iter().sum(),
            critic_loss: None,
            actor_loss: None,
            ppo_loss: mean(agent_losses.values().copied()),
            agent_losses,
            v_vio,
            skipped_samples: skipped,
            env_steps: self.env_steps,
        };
        metrics.check_finite()?;
        self.iteration += 1;
        Ok(metrics)
    }
}

use super::env::AllocationEnv;
use super::features::{Features, NormalizationSpec};
use super::network::{log_softmax, softmax, Policy};
use super::{argmax, scaled_reward, select_from_logits, ActionMode, RlError};
use crate::exec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    /// REINFORCE with a learned value baseline and entropy bonus.
    Reinforce,
    /// Clipped-surrogate updates over several epochs of the same batch.
    Ppo { clip: f64, epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Delay measured by simulating the robot to the pickup.
    Measured,
    /// Planned distance at decision time divided by the cruise speed.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Number of parameter-update rounds.
    pub updates: usize,
    /// Episodes collected in parallel per round.
    pub envs: usize,
    /// Transitions per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub embed_dim: usize,
    /// Decisions per training episode.
    pub k_train: usize,
    pub algorithm: Algorithm,
    pub reward_mode: RewardMode,
    /// Speed that converts the layout diagonal into the time scale.
    pub nominal_speed: f64,
    pub seed: u64,
    /// Rounds between greedy validation passes (0 disables them).
    pub eval_every: usize,
    pub validation_episodes: usize,
    /// Validation episodes use seeds from here on, disjoint from training seeds.
    pub validation_seed: u64,
    pub normalize_advantages: bool,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            updates: 200,
            envs: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip: 1.0,
            embed_dim: 64,
            k_train: 50,
            algorithm: Algorithm::Reinforce,
            reward_mode: RewardMode::Measured,
            nominal_speed: 1.0,
            seed: 0,
            eval_every: 10,
            validation_episodes: 10,
            validation_seed: 1 << 40,
            normalize_advantages: true,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.embed_dim < 8 {
            return bad("embed_dim must be at least 8");
        }
        if self.envs == 0 || self.batch_size == 0 || self.k_train == 0 {
            return bad("envs, batch_size and k_train must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) || !(self.nominal_speed > 0.0) {
            return bad("learning_rate, grad_clip and nominal_speed must be positive");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if let Algorithm::Ppo { clip, epochs } = self.algorithm {
            if !(clip > 0.0) || epochs == 0 {
                return bad("PPO needs a positive clip and at least one epoch");
            }
        }
        Ok(())
    }

    pub fn normalization(&self) -> NormalizationSpec {
        NormalizationSpec::new(self.nominal_speed)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub update: usize,
    /// Mean undiscounted (scaled) episode return.
    pub mean_return: f64,
    /// Mean travel delay per decision, seconds.
    pub mean_ttd: f64,
    pub entropy: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Greedy validation delay per decision (NaN when not evaluated).
    pub validation_ttd: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation delay (the final ones if
    /// validation is disabled).
    pub policy: Policy,
    pub final_policy: Policy,
    pub log: Vec<TrainLogRow>,
    pub best_validation_ttd: f64,
}

struct Transition {
    features: Features,
    action: usize,
    log_prob: f64,
    ret: f64,
}

struct Episode {
    transitions: Vec<Transition>,
    total_reward: f64,
    total_ttd: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 29)
}

fn collect_episode(
    env: &dyn AllocationEnv,
    policy: &Policy,
    spec: &NormalizationSpec,
    scenario: usize,
    seed: u64,
    gamma: f64,
) -> Result<Episode, RlError> {
    let norm = env.normalization(scenario, spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps: Vec<(Features, usize, f64)> = Vec::new();
    let mut failure = None;
    let ttds = env.play(scenario, seed, &mut |state| {
        let f = Features::from_state(state, &norm);
        let logits = policy.logits(&f);
        if failure.is_none() && logits.iter().any(|l| !l.is_finite()) {
            failure = Some(RlError::NonFiniteLogits);
        }
        let (a, lp) = select_from_logits(&logits, ActionMode::Sample, &mut rng);
        steps.push((f, a, lp));
        a
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let rewards = ttds.iter().map(|&t| scaled_reward(t, norm.time_scale)).collect::<Result<Vec<_>, _>>()?;
    let mut ret = 0.0;
    let mut returns = vec![0.0; rewards.len()];
    for i in (0..rewards.len()).rev() {
        ret = rewards[i] + gamma * ret;
        returns[i] = ret;
    }
    let transitions = steps
        .into_iter()
        .zip(returns)
        .map(|((features, action, log_prob), ret)| Transition { features, action, log_prob, ret })
        .collect();
    Ok(Episode { transitions, total_reward: rewards.iter().sum(), total_ttd: ttds.iter().sum() })
}

/// Greedy validation: mean delay per decision and the share of the most
/// frequently chosen action index.
fn validate_policy(
    env: &dyn AllocationEnv,
    policy: &Policy,
    config: &TrainConfig,
) -> Result<(f64, f64), RlError> {
    let spec = config.normalization();
    let results = exec::map_range(config.validation_episodes, config.parallel, |i| {
        let scenario = i % env.scenario_count();
        let norm = env.normalization(scenario, &spec);
        let mut counts: Vec<usize> = Vec::new();
        let ttds = env.play(scenario, config.validation_seed + i as u64, &mut |state| {
            let logits = policy.logits(&Features::from_state(state, &norm));
            let a = argmax(&logits);
            if counts.len() <= a {
                counts.resize(a + 1, 0);
            }
            counts[a] += 1;
            a
        })?;
        Ok::<_, RlError>((ttds, counts))
    });
    let mut total = 0.0;
    let mut decisions = 0usize;
    let mut counts: Vec<usize> = Vec::new();
    for r in results {
        let (ttds, c) = r?;
        total += ttds.iter().sum::<f64>();
        decisions += ttds.len();
        if counts.len() < c.len() {
            counts.resize(c.len(), 0);
        }
        for (i, n) in c.into_iter().enumerate() {
            counts[i] += n;
        }
    }
    let chosen: usize = counts.iter().sum();
    let top = counts.iter().copied().max().unwrap_or(0) as f64 / chosen.max(1) as f64;
    Ok((total / decisions.max(1) as f64, top))
}

/// Share of greedy decisions above which a policy counts as collapsed.
const COLLAPSE_SHARE: f64 = 0.95;

/// Trains a policy on `env`.
pub fn train(config: &TrainConfig, env: &dyn AllocationEnv) -> Result<TrainOutcome, RlError> {
    train_with(config, env, |_| {})
}

/// Like [`train`], calling `observer` with each log row as soon as its
/// round finishes, so progress survives a divergence abort.
pub fn train_with(
    config: &TrainConfig,
    env: &dyn AllocationEnv,
    mut observer: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome, RlError> {
    config.validate()?;
    let spec = config.normalization();
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, u64::MAX, 0));
    let mut policy = Policy::new(config.embed_dim, &mut init_rng);
    let mut adam = Adam::new(policy.n_params(), config.learning_rate);
    let mut log = Vec::with_capacity(config.updates);
    let mut best: Option<(f64, Policy)> = None;
    let scenarios = env.scenario_count();

    for update in 0..config.updates {
        let episodes = exec::map_range(config.envs, config.parallel, |e| {
            let scenario = (update * config.envs + e) % scenarios;
            let seed = mix(config.seed, update as u64, e as u64);
            collect_episode(env, &policy, &spec, scenario, seed, config.gamma)
        });
        let mut transitions = Vec::new();
        let mut return_sum = 0.0;
        let mut ttd_sum = 0.0;
        let mut n_episodes = 0;
        for ep in episodes {
            let ep = ep?;
            return_sum += ep.total_reward;
            ttd_sum += ep.total_ttd;
            n_episodes += 1;
            transitions.extend(ep.transitions);
        }
        let n_decisions = transitions.len();
        let stats = optimize(&mut policy, &mut adam, &transitions, config, update)?;
        if !policy.is_finite() {
            return Err(RlError::Diverged { update, reason: "non-finite parameters".into() });
        }

        let mut validation_ttd = f64::NAN;
        let last = update + 1 == config.updates;
        if config.eval_every > 0 && config.validation_episodes > 0 && ((update + 1) % config.eval_every == 0 || last)
        {
            let (ttd, top_share) = validate_policy(env, &policy, config)?;
            if !ttd.is_finite() {
                return Err(RlError::Diverged { update, reason: "non-finite validation delay".into() });
            }
            if top_share > COLLAPSE_SHARE {
                return Err(RlError::Diverged {
                    update,
                    reason: format!("{:.1}% of greedy decisions pick the same task slot", top_share * 100.0),
                });
            }
            validation_ttd = ttd;
            if best.as_ref().is_none_or(|(b, _)| ttd < *b) {
                best = Some((ttd, policy.clone()));
            }
        }
        log.push(TrainLogRow {
            update,
            mean_return: return_sum / n_episodes.max(1) as f64,
            mean_ttd: ttd_sum / n_decisions.max(1) as f64,
            entropy: stats.entropy,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            validation_ttd,
        });
        observer(log.last().expect("just pushed"));
    }
    let (best_validation_ttd, best_policy) = match best {
        Some((ttd, p)) => (ttd, p),
        None => (f64::NAN, policy.clone()),
    };
    Ok(TrainOutcome { policy: best_policy, final_policy: policy, log, best_validation_ttd })
}

#[derive(Default)]
struct Stats {
    entropy: f64,
    policy_loss: f64,
    value_loss: f64,
}

/// Loss gradient for one transition; returns (policy loss, value loss, entropy).
fn transition_gradient(
    policy: &Policy,
    t: &Transition,
    advantage: f64,
    config: &TrainConfig,
    grad: &mut [f64],
) -> (f64, f64, f64) {
    let trace = policy.forward(&t.features);
    let p = softmax(&trace.logits);
    let log_p = log_softmax(&trace.logits);
    let entropy: f64 = -p.iter().zip(&log_p).map(|(p, lp)| p * lp).sum::<f64>();
    let a = t.action;
    let (scale, policy_loss) = match config.algorithm {
        Algorithm::Reinforce => (advantage, -advantage * log_p[a]),
        Algorithm::Ppo { clip, .. } => {
            let ratio = (log_p[a] - t.log_prob).exp();
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
            let loss = -(ratio * advantage).min(clipped * advantage);
            let active = !((advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip));
            (if active { advantage * ratio } else { 0.0 }, loss)
        }
    };
    let dlogits: Vec<f64> = (0..p.len())
        .map(|i| {
            let onehot = if i == a { 1.0 } else { 0.0 };
            -scale * (onehot - p[i]) + config.entropy_coef * p[i] * (log_p[i] + entropy)
        })
        .collect();
    let err = trace.value - t.ret;
    policy.backward(&t.features, &trace, &dlogits, config.value_coef * 2.0 * err, grad);
    (policy_loss, err * err, entropy)
}

fn optimize(
    policy: &mut Policy,
    adam: &mut Adam,
    transitions: &[Transition],
    config: &TrainConfig,
    update: usize,
) -> Result<Stats, RlError> {
    if transitions.is_empty() {
        return Ok(Stats::default());
    }
    let values = exec::map(transitions, config.parallel, |_, t| policy.forward(&t.features).value);
    let mut advantages: Vec<f64> = transitions.iter().zip(&values).map(|(t, v)| t.ret - v).collect();
    if config.normalize_advantages && advantages.len() > 1 {
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let std = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        for a in &mut advantages {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
    let epochs = match config.algorithm {
        Algorithm::Reinforce => 1,
        Algorithm::Ppo { epochs, .. } => epochs,
    };
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, update as u64, u64::MAX));
    let mut stats = Stats::default();
    let mut counted = 0usize;
    let n_params = policy.n_params();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let frozen = &*policy;
            let parts = exec::map(batch, config.parallel, |_, &i| {
                let mut g = vec![0.0; n_params];
                let s = transition_gradient(frozen, &transitions[i], advantages[i], config, &mut g);
                (g, s)
            });
            let mut grad = vec![0.0; n_params];
            for (g, (pl, vl, ent)) in parts {
                for (acc, x) in grad.iter_mut().zip(&g) {
                    *acc += x;
                }
                stats.policy_loss += pl;
                stats.value_loss += vl;
                stats.entropy += ent;
                counted += 1;
            }
            let inv = 1.0 / batch.len() as f64;
            let mut norm_sq = 0.0;
            for g in &mut grad {
                *g *= inv;
                norm_sq += *g * *g;
            }
            let norm = norm_sq.sqrt();
            if !norm.is_finite() {
                return Err(RlError::Diverged { update, reason: "non-finite gradient".into() });
            }
            if norm > config.grad_clip {
                let s = config.grad_clip / norm;
                for g in &mut grad {
                    *g *= s;
                }
            }
            adam.step(policy.params_mut(), &grad);
        }
    }
    let c = counted.max(1) as f64;
    Ok(Stats { entropy: stats.entropy / c, policy_loss: stats.policy_loss / c, value_loss: stats.value_loss / c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::TwoTaskEnv;

    #[test]
    fn gamma_out_of_range_is_rejected() {
        let c = TrainConfig { gamma: 1.5, ..TrainConfig::default() };
        assert!(matches!(c.validate(), Err(RlError::InvalidConfig(_))));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[2.0, -3.0]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6, "{p:?}");
    }

    fn quick_config() -> TrainConfig {
        TrainConfig { updates: 6, envs: 3, embed_dim: 8, eval_every: 3, validation_episodes: 2, ..TrainConfig::default() }
    }

    #[test]
    fn training_is_reproducible() {
        let env = TwoTaskEnv::default();
        let a = train(&quick_config(), &env).unwrap();
        let b = train(&quick_config(), &env).unwrap();
        // Debug text compares NaN validation entries as equal.
        assert_eq!(format!("{:?}", a.log), format!("{:?}", b.log));
        assert_eq!(a.final_policy, b.final_policy);
    }

    #[test]
    fn parallel_collection_matches_sequential() {
        let env = TwoTaskEnv::default();
        let par = train(&quick_config(), &env).unwrap();
        let seq = train(&TrainConfig { parallel: false, ..quick_config() }, &env).unwrap();
        assert_eq!(par.final_policy, seq.final_policy);
    }

    #[test]
    fn ppo_variant_runs() {
        let env = TwoTaskEnv::default();
        let c = TrainConfig { algorithm: Algorithm::Ppo { clip: 0.2, epochs: 3 }, ..quick_config() };
        let out = train(&c, &env).unwrap();
        assert_eq!(out.log.len(), 6);
        assert!(out.policy.is_finite());
    }
}

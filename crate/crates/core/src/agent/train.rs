use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{NetShape, QNetwork, StepCache, N_ACTIONS};
use super::replay::{EpisodeRecord, ReplayBuffer, Segment};
use crate::action::Action;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::state::{scale, ScalingProfile, FEATURE_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam moments with decoupled weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epsilon: f64,
    /// Multiplicative decay applied once per episode.
    pub epsilon_decay: f64,
    pub min_epsilon: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Capacity in episodes.
    pub replay_buffer_size: usize,
    pub target_update_every: usize,

    pub episodes: usize,
    /// Transitions per training segment; 0 unrolls whole episodes.
    pub unroll_length: usize,
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub hidden: usize,
    pub dense: usize,
    pub q_scale: f64,
    pub optimizer: Optimizer,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    /// Restrict exploration and argmax to compounds with sets left.
    pub mask_invalid: bool,
    /// Greedy validation every this many episodes; the best validated
    /// snapshot is returned. 0 returns the final network.
    pub validate_every: usize,
    pub validation_races: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epsilon: 1.0,
            epsilon_decay: 0.999,
            min_epsilon: 0.005,
            gamma: 0.99,
            learning_rate: 0.001,
            weight_decay: 0.001,
            replay_buffer_size: 1000,
            target_update_every: 100,
            episodes: 2000,
            unroll_length: 0,
            batch_size: 16,
            updates_per_episode: 1,
            hidden: 64,
            dense: 64,
            q_scale: 100.0,
            optimizer: Optimizer::adam(),
            grad_clip: 10.0,
            mask_invalid: false,
            validate_every: 50,
            validation_races: 500,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Exploration rate for episode `t` (0-based).
    pub fn epsilon_at(&self, t: usize) -> f64 {
        (self.epsilon * self.epsilon_decay.powf(t as f64)).max(self.min_epsilon)
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            input: FEATURE_LEN,
            hidden: self.hidden,
            dense: self.dense,
            q_scale: self.q_scale,
        }
    }
}

/// Epsilon-greedy choice. Ties go to the lowest action index; with
/// `mask_invalid` only compounds with sets left are eligible.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f64; N_ACTIONS],
    epsilon: f64,
    rng: &mut R,
    availability: [bool; 3],
    mask_invalid: bool,
) -> Action {
    let allowed: Vec<Action> = Action::ALL
        .into_iter()
        .filter(|a| !mask_invalid || a.compound().is_none_or(|c| availability[c.index()]))
        .collect();
    if rng.random::<f64>() < epsilon {
        return *allowed.choose(rng).expect("no-pit is always allowed");
    }
    let mut best = allowed[0];
    for &a in &allowed[1..] {
        if q[a.index()] > q[best.index()] {
            best = a;
        }
    }
    best
}

/// Mean squared TD error over every transition of the batch and its
/// gradient wrt the online parameters. Hidden states start at zero at each
/// segment start, for both networks.
pub fn td_loss_and_grad(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[Segment<'_>],
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let n: usize = batch.iter().map(|s| s.actions.len()).sum();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut grad = vec![0.0; net.params.len()];
    let mut loss = 0.0;
    for seg in batch {
        let len = seg.actions.len();
        let mut h = net.initial_hidden();
        let mut caches: Vec<StepCache> = Vec::with_capacity(len);
        for x in &seg.obs[..len] {
            if x.0.len() != net.shape.input {
                return Err(Error::DimensionMismatch {
                    expected: net.shape.input,
                    got: x.0.len(),
                });
            }
            let c = net.step(&x.0, &h);
            h = c.hidden().to_vec();
            caches.push(c);
        }
        let mut ht = target.initial_hidden();
        let mut next_max = Vec::with_capacity(len);
        for (t, x) in seg.obs.iter().enumerate() {
            let c = target.step(&x.0, &ht);
            ht = c.hidden().to_vec();
            if t > 0 {
                next_max.push(c.q.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
        let mut dq = vec![[0.0; N_ACTIONS]; len];
        for t in 0..len {
            let terminal = seg.terminal && t + 1 == len;
            let y = if terminal {
                seg.rewards[t]
            } else {
                seg.rewards[t] + gamma * next_max[t]
            };
            let a = seg.actions[t].index();
            let e = caches[t].q[a] - y;
            loss += e * e;
            dq[t][a] = 2.0 * e / n as f64;
        }
        net.backward(&caches, &dq, &mut grad);
    }
    Ok((loss / n as f64, grad))
}

/// Optimiser state for one network.
#[derive(Debug, Clone)]
pub struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptState {
    pub fn new(n: usize) -> Self {
        OptState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One parameter update with decoupled weight decay.
pub fn apply_gradient(
    net: &mut QNetwork,
    grad: &mut [f64],
    state: &mut OptState,
    cfg: &TrainingConfig,
) {
    if cfg.grad_clip > 0.0 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.grad_clip {
            let k = cfg.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= k);
        }
    }
    let lr = cfg.learning_rate;
    let decay = 1.0 - lr * cfg.weight_decay;
    state.t += 1;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in net.params.iter_mut().zip(grad.iter()) {
                *p = *p * decay - lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(state.t as i32);
            let c2 = 1.0 - beta2.powi(state.t as i32);
            for (i, &g) in grad.iter().enumerate() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let step = (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
                net.params[i] = net.params[i] * decay - lr * step;
            }
        }
    }
}

/// Computes the loss, takes one optimiser step and returns the pre-step loss.
pub fn td_update(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[Segment<'_>],
    opt: &mut OptState,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let (loss, mut grad) = td_loss_and_grad(net, target, batch, cfg.gamma)?;
    apply_gradient(net, &mut grad, opt, cfg);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub reward: f64,
    pub finish: usize,
    pub epsilon: f64,
    /// Mean loss of this episode's updates; NaN before training starts.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// Last episode played before the check.
    pub episode: usize,
    pub mean_finish: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    /// Episodes after which the target network was refreshed.
    pub target_copies: Vec<usize>,
    pub validations: Vec<Validation>,
    /// Index into `validations` of the returned snapshot.
    pub selected: Option<usize>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "reward", "finish", "epsilon", "loss"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.episode.to_string(),
                r.reward.to_string(),
                r.finish.to_string(),
                r.epsilon.to_string(),
                r.loss.to_string(),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<training log>", e))
    }
}

/// Observer hook; tests use it to inspect internals between episodes.
pub trait TrainObserver {
    fn after_episode(
        &mut self,
        _episode: usize,
        _net: &QNetwork,
        _target: &QNetwork,
        _buffer: &ReplayBuffer,
    ) {
    }
}

impl TrainObserver for () {}

/// Plays one episode with an epsilon-greedy policy.
pub fn play_episode<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &mut E,
    net: &QNetwork,
    profile: &ScalingProfile,
    seed: u64,
    epsilon: f64,
    mask_invalid: bool,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let mut state = env.reset(seed)?;
    let mut h = net.initial_hidden();
    let mut obs = vec![scale(&state, profile)];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    loop {
        let (q, h2) = net.forward(&obs.last().expect("non-empty").0, &h)?;
        h = h2;
        let a = select_action(&q, epsilon, rng, state.availability(), mask_invalid);
        let tr = env.step(a)?;
        actions.push(a);
        rewards.push(tr.reward);
        obs.push(scale(&tr.state, profile));
        state = tr.state;
        if tr.terminal {
            break;
        }
    }
    let finish = env.outcome().map(|o| o.finish).unwrap_or(state.position);
    Ok(EpisodeRecord {
        obs,
        actions,
        rewards,
        finish,
        seed,
    })
}

/// Greedy mean finish over `n` races on seeds reserved for validation.
pub fn validate<E: Environment + ?Sized>(
    env: &mut E,
    net: &QNetwork,
    profile: &ScalingProfile,
    n: usize,
    seed: u64,
    episode: usize,
) -> Result<Validation> {
    let mut rng = stream_rng(seed, &[stream::VALIDATE]);
    let mut finish = 0.0;
    let mut failed = 0;
    for i in 0..n {
        let race_seed = derive_seed(seed, &[stream::VALIDATE, i as u64]);
        let r = play_episode(env, net, profile, race_seed, 0.0, false, &mut rng)?;
        finish += r.finish as f64;
        if env.outcome().is_some_and(|o| o.failed) {
            failed += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok(Validation {
        episode,
        mean_finish: finish / n,
        failure_rate: failed as f64 / n,
    })
}

/// Trains a fresh network. `make_env(episode)` supplies each episode's
/// environment, so a caller can rotate tracks.
pub fn train<E, F>(
    mut make_env: F,
    profile: &ScalingProfile,
    cfg: &TrainingConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(QNetwork, TrainingLog)>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    let mut init_rng = stream_rng(cfg.seed, &[stream::INIT]);
    let net = QNetwork::init(cfg.shape(), &mut init_rng);
    train_from(net, &mut make_env, profile, cfg, observer)
}

pub fn train_from<E, F>(
    mut net: QNetwork,
    make_env: &mut F,
    profile: &ScalingProfile,
    cfg: &TrainingConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(QNetwork, TrainingLog)>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    let mut target = net.clone();
    let mut opt = OptState::new(net.params.len());
    let mut buffer = ReplayBuffer::new(cfg.replay_buffer_size);
    let mut rng = stream_rng(cfg.seed, &[stream::TRAIN]);
    let mut log = TrainingLog::default();
    let warmup = cfg.batch_size.min(cfg.replay_buffer_size).max(1);
    let mut best: Option<QNetwork> = None;
    for ep in 0..cfg.episodes {
        let epsilon = cfg.epsilon_at(ep);
        let race_seed = derive_seed(cfg.seed, &[stream::RACE, ep as u64]);
        let mut env = make_env(ep);
        let record = play_episode(
            &mut env,
            &net,
            profile,
            race_seed,
            epsilon,
            cfg.mask_invalid,
            &mut rng,
        )
        .map_err(|e| Error::Episode {
            episode: ep,
            source: Box::new(e),
        })?;
        let reward = record.total_reward();
        let finish = record.finish;
        buffer.push(record);
        let mut losses = Vec::new();
        if buffer.len() >= warmup {
            for _ in 0..cfg.updates_per_episode {
                let batch = buffer.sample(cfg.batch_size, cfg.unroll_length, &mut rng);
                losses.push(td_update(&mut net, &target, &batch, &mut opt, cfg)?);
            }
        }
        if (ep + 1) % cfg.target_update_every == 0 {
            target = net.clone();
            log.target_copies.push(ep);
        }
        log.rows.push(LogRow {
            episode: ep,
            reward,
            finish,
            epsilon,
            loss: if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            },
        });
        if ep % 250 == 0 {
            log::debug!("episode {ep}: reward {reward:.0}, finish P{finish}, epsilon {epsilon:.3}");
        }
        observer.after_episode(ep, &net, &target, &buffer);
        if cfg.validate_every > 0 && cfg.validation_races > 0 && (ep + 1) % cfg.validate_every == 0
        {
            let v = validate(
                &mut make_env(ep),
                &net,
                profile,
                cfg.validation_races,
                cfg.seed,
                ep,
            )?;
            let better = log
                .selected
                .is_none_or(|b| v.mean_finish < log.validations[b].mean_finish);
            log.validations.push(v);
            if better {
                log.selected = Some(log.validations.len() - 1);
                best = Some(net.clone());
            }
        }
    }
    Ok((best.unwrap_or(net), log))
}

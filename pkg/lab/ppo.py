"""
On-policy training: rollout collection, generalized advantage estimation,
clipped-surrogate actor updates and squared-error critic updates.

The A2C baseline is the degenerate case of the same loop: one epoch, the
plain ``log pi * A`` objective, no probability ratio and no clipping.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from lab.env import DecodedAction, SecureIsacEnv, safe_decode_action
from lab.exceptions import NumericalError
from lab.hbf import decompose
from lab.metrics import effective_digital
from lab.neural import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    AdamState,
    GaussianPolicy,
    MlpParams,
    adam_step,
    clip_grad_norm,
    gaussian_entropy,
    gaussian_sample_logprob,
    init_critic,
    init_policy,
    mlp_backward,
    mlp_forward,
    policy_backward,
    policy_log_prob,
    policy_mean,
    save_checkpoint,
)
from lab.scenario import RLHyperparams, ScenarioConfig, spawn_streams

logger = logging.getLogger(__name__)

ALGORITHMS = ('ppo', 'a2c')
ADVANTAGE_EPS = 1e-8


@dataclass(frozen=True)
class EpisodeRecord:
    total: float
    communication: float
    sensing: float
    qos: float


@dataclass
class RolloutBuffer:
    capacity: int
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    boundaries: np.ndarray
    size: int = 0
    episodes: list[EpisodeRecord] = field(default_factory=list)

    @classmethod
    def allocate(cls, capacity: int, obs_dim: int, action_dim: int) -> 'RolloutBuffer':
        return cls(
            capacity=capacity,
            observations=np.zeros((capacity, obs_dim)),
            actions=np.zeros((capacity, action_dim)),
            log_probs=np.zeros(capacity),
            rewards=np.zeros(capacity),
            values=np.zeros(capacity),
            next_values=np.zeros(capacity),
            boundaries=np.zeros(capacity, dtype=bool),
        )

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    def clear(self):
        for array in (self.observations, self.actions, self.log_probs, self.rewards,
                      self.values, self.next_values):
            array.fill(0.0)
        self.boundaries.fill(False)
        self.size = 0
        self.episodes = []

    def add(self, observation, action, log_prob: float, reward: float, value: float):
        index = self.size
        self.observations[index] = observation
        self.actions[index] = action
        self.log_probs[index] = log_prob
        self.rewards[index] = reward
        self.values[index] = value
        self.size += 1
        return index


@dataclass(frozen=True)
class UpdateStats:
    actor_loss: float
    critic_loss: float
    initial_ratio_deviation: float
    clip_fraction: float
    approx_kl: float
    actor_grad_norm: float
    critic_grad_norm: float


@dataclass
class TrainReport:
    seed: int
    algorithm: str
    episode_returns: list[float] = field(default_factory=list)
    episode_components: list[EpisodeRecord] = field(default_factory=list)
    actor_losses: list[float] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    evaluation: dict | None = None
    wall_clock_seconds: float = 0.0
    best_return: float = float('-inf')
    policy: GaussianPolicy | None = None
    critic: MlpParams | None = None
    final_policy: GaussianPolicy | None = None

    @property
    def episodes(self) -> int:
        return len(self.episode_returns)


@dataclass(frozen=True)
class EvaluationReport:
    episodes: int
    slots: int
    mean_sum_secrecy: float
    per_uav_secrecy: list[float]
    sensing_violation_rate: float
    qos_violation_rate: float
    mean_return: float
    hybrid: bool = False

    def as_dict(self) -> dict:
        return {
            'episodes': self.episodes,
            'slots': self.slots,
            'mean_sum_secrecy': self.mean_sum_secrecy,
            'per_uav_secrecy': list(self.per_uav_secrecy),
            'sensing_violation_rate': self.sensing_violation_rate,
            'qos_violation_rate': self.qos_violation_rate,
            'mean_return': self.mean_return,
            'hybrid': self.hybrid,
        }


@dataclass(frozen=True)
class HybridSettings:
    n_rf_chains: int
    tol: float = 1e-6
    max_iter: int = 50


def critic_values(critic: MlpParams, observations) -> np.ndarray:
    output, _ = mlp_forward(critic, observations)
    return np.atleast_2d(output)[:, 0]


def collect_rollout(env: SecureIsacEnv, policy: GaussianPolicy, critic: MlpParams,
                    batch_size: int, rng: np.random.Generator,
                    buffer: RolloutBuffer | None = None) -> RolloutBuffer:
    """
    Fill ``buffer`` with exactly ``batch_size`` fresh transitions.

    An episode still running from the previous collection is continued. Every
    episode end and the last transition are marked as boundaries and carry
    the bootstrap value of the state that follows; the horizon is a time limit,
    not an absorbing state.
    """
    if buffer is None:
        buffer = RolloutBuffer.allocate(batch_size, env.observation_dim, env.action_dim)
    buffer.clear()

    if env.state is None or env.state.done:
        env.reset()
    observation = env.observe()

    for step in range(batch_size):
        action, log_prob = gaussian_sample_logprob(policy, observation, rng)
        value = float(critic_values(critic, observation)[0])
        _, outcome = env.step_raw(action)
        index = buffer.add(observation, action, log_prob, outcome.reward, value)
        observation = outcome.observation

        if outcome.done or step == batch_size - 1:
            buffer.boundaries[index] = True
            buffer.next_values[index] = critic_values(critic, observation)[0]
        if outcome.done:
            buffer.episodes.append(_episode_record(env))
            env.reset()
            observation = env.observe()

    inner = ~buffer.boundaries[:-1]
    buffer.next_values[:-1][inner] = buffer.values[1:][inner]
    return buffer


def _episode_record(env: SecureIsacEnv) -> EpisodeRecord:
    totals = env.state.episode_totals
    return EpisodeRecord(total=float(totals.sum()), communication=float(totals[0]),
                         sensing=float(totals[1]), qos=float(totals[2]))


def compute_gae(rewards, values, boundaries, gamma: float, lam: float,
                next_values=None) -> tuple[np.ndarray, np.ndarray]:
    """
    Advantages and returns. ``next_values[t]`` is V(s_{t+1}); when omitted it is
    taken from ``values`` inside an episode and treated as 0 at boundaries.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    boundaries = np.asarray(boundaries, dtype=bool)
    if next_values is None:
        next_values = np.append(values[1:], 0.0)
        next_values[boundaries] = 0.0
    next_values = np.asarray(next_values, dtype=float)

    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if boundaries[t]:
            running = 0.0
        delta = rewards[t] + gamma * next_values[t] - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


def clipped_objective(ratio, advantages, clip: float) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


def probability_ratios(policy: GaussianPolicy, observations, actions, old_log_probs) -> np.ndarray:
    log_probs, _, _ = policy_log_prob(policy, observations, actions)
    return np.exp(log_probs - old_log_probs)


def _standardize(advantages: np.ndarray) -> np.ndarray:
    if advantages.size < 2:
        return advantages - advantages.mean()
    return (advantages - advantages.mean()) / (advantages.std() + ADVANTAGE_EPS)


def ppo_update(buffer: RolloutBuffer, policy: GaussianPolicy, critic: MlpParams,
               actor_optimizer: AdamState, critic_optimizer: AdamState,
               hyperparams: RLHyperparams, rng: np.random.Generator,
               algorithm: str = 'ppo') -> UpdateStats:
    if not buffer.full:
        raise ValueError(f'buffer holds {buffer.size} of {buffer.capacity} transitions')
    if algorithm not in ALGORITHMS:
        raise ValueError(f'unknown algorithm {algorithm!r}')

    advantages, returns = compute_gae(buffer.rewards, buffer.values, buffer.boundaries,
                                      hyperparams.gamma, hyperparams.gae_lambda,
                                      buffer.next_values)
    initial = probability_ratios(policy, buffer.observations, buffer.actions, buffer.log_probs)
    initial_deviation = float(np.max(np.abs(initial - 1.0)))

    clipped = algorithm == 'ppo'
    epochs = hyperparams.update_epochs if clipped else 1
    minibatch = hyperparams.minibatch_size
    clip = hyperparams.clip

    actor_losses, critic_losses, clip_hits, kls = [], [], [], []
    actor_norm = critic_norm = 0.0
    for _ in range(epochs):
        order = rng.permutation(buffer.size)
        for start in range(0, buffer.size, minibatch):
            index = order[start:start + minibatch]
            count = len(index)
            observations = buffer.observations[index]
            actions = buffer.actions[index]
            adv = _standardize(advantages[index])

            log_probs, mean, cache = policy_log_prob(policy, observations, actions)
            if clipped:
                ratio = np.exp(log_probs - buffer.log_probs[index])
                objective = clipped_objective(ratio, adv, clip)
                unclipped_active = ratio * adv <= np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
                grad_log_prob = -(unclipped_active * adv * ratio) / count
                clip_hits.append(float(np.mean(np.abs(ratio - 1.0) > clip)))
                kls.append(float(np.mean(buffer.log_probs[index] - log_probs)))
            else:
                objective = log_probs * adv
                grad_log_prob = -adv / count

            entropy = gaussian_entropy(policy.clamped_log_std)
            actor_loss = -float(np.mean(objective)) - hyperparams.entropy_coef * entropy

            values, critic_cache = mlp_forward(critic, observations)
            error = values[:, 0] - returns[index]
            critic_loss = float(np.mean(error ** 2))

            if not (np.isfinite(actor_loss) and np.isfinite(critic_loss)):
                raise NumericalError(
                    f'non-finite loss (actor={actor_loss}, critic={critic_loss}); '
                    f'max |advantage|={np.max(np.abs(adv))}, '
                    f'log_std range=[{policy.log_std.min()}, {policy.log_std.max()}]')

            entropy_grad = None
            if hyperparams.entropy_coef:
                entropy_grad = np.full_like(policy.log_std, -hyperparams.entropy_coef)
            actor_grads = policy_backward(policy, cache, mean, actions, grad_log_prob, entropy_grad)
            actor_norm = clip_grad_norm(actor_grads, hyperparams.max_grad_norm)
            adam_step(policy.arrays(), actor_grads, actor_optimizer)
            np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=policy.log_std)

            critic_grads = mlp_backward(critic, critic_cache, (2.0 / count) * error[:, None])
            critic_norm = clip_grad_norm(critic_grads, hyperparams.max_grad_norm)
            adam_step(critic.arrays(), critic_grads, critic_optimizer)

            actor_losses.append(actor_loss)
            critic_losses.append(critic_loss)

    return UpdateStats(
        actor_loss=float(np.mean(actor_losses)),
        critic_loss=float(np.mean(critic_losses)),
        initial_ratio_deviation=initial_deviation,
        clip_fraction=float(np.mean(clip_hits)) if clip_hits else 0.0,
        approx_kl=float(np.mean(kls)) if kls else 0.0,
        actor_grad_norm=actor_norm,
        critic_grad_norm=critic_norm,
    )


def train(config: ScenarioConfig, algorithm: str = 'ppo',
          checkpoint_path: str | Path | None = None,
          on_batch: Callable[[TrainReport, UpdateStats], None] | None = None) -> TrainReport:
    if algorithm not in ALGORITHMS:
        raise ValueError(f'unknown algorithm {algorithm!r}')

    started = time.perf_counter()
    hp = config.rl_hyperparams
    streams = spawn_streams(config.seed)
    env = SecureIsacEnv(config, streams['channel'])
    policy = init_policy(config.observation_dim, config.action_dim, hp.hidden_sizes,
                         streams['init'], hp.log_std_init)
    critic = init_critic(config.observation_dim, hp.hidden_sizes, streams['init'])
    actor_optimizer = AdamState.for_params(policy.arrays(), hp.actor_lr)
    critic_optimizer = AdamState.for_params(critic.arrays(), hp.critic_lr)
    buffer = RolloutBuffer.allocate(hp.batch_size, config.observation_dim, config.action_dim)

    report = TrainReport(seed=config.seed, algorithm=algorithm,
                         policy=policy.copy(), critic=critic.copy())
    while report.episodes < hp.episodes:
        collect_rollout(env, policy, critic, hp.batch_size, streams['policy'], buffer)
        collecting_policy, collecting_critic = policy.copy(), critic.copy()
        stats = ppo_update(buffer, policy, critic, actor_optimizer, critic_optimizer,
                           hp, streams['policy'], algorithm)

        finished = buffer.episodes[:hp.episodes - report.episodes]
        for record in finished:
            report.episode_returns.append(record.total)
            report.episode_components.append(record)
            report.actor_losses.append(stats.actor_loss)
            report.critic_losses.append(stats.critic_loss)

        if finished:
            # the collecting policy earned these returns; the update already moved on
            batch_return = float(np.mean([record.total for record in finished]))
            if batch_return > report.best_return:
                report.best_return = batch_return
                report.policy, report.critic = collecting_policy, collecting_critic
            logger.info('%s seed=%d episodes=%d/%d return=%.4f actor_loss=%.4g '
                        'critic_loss=%.4g clip_fraction=%.3f',
                        algorithm, config.seed, report.episodes, hp.episodes, batch_return,
                        stats.actor_loss, stats.critic_loss, stats.clip_fraction)
        if on_batch is not None:
            on_batch(report, stats)

    report.final_policy = policy
    report.wall_clock_seconds = time.perf_counter() - started
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, report.policy, report.critic)
    return report


def run_evaluation(act: Callable[[SecureIsacEnv, np.ndarray], DecodedAction],
                   env: SecureIsacEnv, episodes: int, seed: int | None = None,
                   hybrid: HybridSettings | None = None,
                   beam_log: list | None = None) -> EvaluationReport:
    """
    Roll ``act`` through ``episodes`` episodes and aggregate per-slot metrics.

    With ``hybrid`` set, each slot's digital beamformer is decomposed and the
    environment is stepped with the effective hybrid beams instead.
    """
    config = env.config
    seed = config.seed if seed is None else seed
    decompose_rng = spawn_streams(seed)['decompose']
    secrecy, sensing_violations, qos_violations, returns = [], [], [], []

    for episode in range(episodes):
        env.reset(seed=seed if episode == 0 else None)
        observation = env.observe()
        episode_return = 0.0
        done = False
        while not done:
            decoded = act(env, observation)
            if beam_log is not None:
                beam_log.append(decoded.beams)
            if hybrid is not None:
                result = decompose(decoded.beams.precoders, decoded.beams.an_vector,
                                   hybrid.n_rf_chains, config.transmit_power_watts,
                                   hybrid.tol, hybrid.max_iter, decompose_rng)
                decoded = DecodedAction(beams=effective_digital(result.hybrid),
                                        moves=decoded.moves)
            outcome = env.step(decoded)
            secrecy.append(outcome.secrecy.secrecy_rates)
            sensing_violations.append(bool(np.any(outcome.sensing_margins < 0)))
            qos_violations.append(bool(np.any(outcome.secrecy.legit_rates < config.qos_min_rate)))
            episode_return += outcome.reward
            observation, done = outcome.observation, outcome.done
        returns.append(episode_return)

    if not secrecy:
        return EvaluationReport(0, 0, 0.0, [0.0] * config.n_legit, 0.0, 0.0, 0.0, hybrid is not None)

    secrecy = np.asarray(secrecy)
    return EvaluationReport(
        episodes=episodes,
        slots=len(secrecy),
        mean_sum_secrecy=float(secrecy.sum(axis=1).mean()),
        per_uav_secrecy=[float(value) for value in secrecy.mean(axis=0)],
        sensing_violation_rate=float(np.mean(sensing_violations)),
        qos_violation_rate=float(np.mean(qos_violations)),
        mean_return=float(np.mean(returns)),
        hybrid=hybrid is not None,
    )


def policy_controller(policy: GaussianPolicy):
    def act(env: SecureIsacEnv, observation: np.ndarray) -> DecodedAction:
        return safe_decode_action(policy_mean(policy, observation), env.config)
    return act


def evaluate(policy: GaussianPolicy, env: SecureIsacEnv, episodes: int,
             seed: int | None = None, hybrid: HybridSettings | None = None,
             beam_log: list | None = None) -> EvaluationReport:
    """Sampling-free evaluation with the policy mean."""
    return run_evaluation(policy_controller(policy), env, episodes, seed, hybrid, beam_log)


"""
Dense networks with hand-derived gradients, a diagonal Gaussian policy head,
Adam, and a central finite-difference checker.

Everything runs in float64. Weight matrices are stored ``(fan_in, fan_out)``
so a batch ``X`` of shape ``(batch, fan_in)`` maps to ``X @ W + b``.

Initialization: each weight matrix is the semi-orthogonal factor of a QR
decomposition of a standard normal draw, times a gain (1.0 for hidden and
critic output layers, 0.01 for the policy output layer); biases start at 0.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from lab.exceptions import DimensionError, MissingCheckpoint

logger = logging.getLogger(__name__)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
POLICY_OUTPUT_GAIN = 0.01
FINITE_DIFF_STEP = 1e-5
FINITE_DIFF_FLOOR = 1e-4
CHECKPOINT_VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = 'tanh'

    def __post_init__(self):
        for previous, current in zip(self.weights, self.weights[1:]):
            if previous.shape[1] != current.shape[0]:
                raise DimensionError(
                    f'layer of width {previous.shape[1]} feeds a layer expecting {current.shape[0]}')

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def arrays(self) -> list[np.ndarray]:
        """Parameters interleaved as [W0, b0, W1, b1, ...]; shared, not copied."""
        return [array for pair in zip(self.weights, self.biases) for array in pair]

    def copy(self) -> 'MlpParams':
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.hidden_activation)


@dataclass
class MlpCache:
    activations: list[np.ndarray]
    squeeze: bool


@dataclass
class GaussianPolicy:
    mean: MlpParams
    log_std: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [*self.mean.arrays(), self.log_std]

    @property
    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.clamped_log_std)

    def copy(self) -> 'GaussianPolicy':
        return GaussianPolicy(self.mean.copy(), self.log_std.copy())


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, arrays: list[np.ndarray], lr: float, **kwargs) -> 'AdamState':
        return cls(lr=lr, first=[np.zeros_like(a) for a in arrays],
                   second=[np.zeros_like(a) for a in arrays], **kwargs)


def init_mlp(layer_sizes, rng: np.random.Generator, output_gain: float = 1.0) -> MlpParams:
    weights, biases = [], []
    n_layers = len(layer_sizes) - 1
    for index, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        draw = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
        q, r = np.linalg.qr(draw)
        q *= np.sign(np.diag(r))
        if fan_in < fan_out:
            q = q.T
        gain = output_gain if index == n_layers - 1 else 1.0
        weights.append(np.ascontiguousarray(gain * q))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def init_policy(obs_dim: int, action_dim: int, hidden_sizes, rng: np.random.Generator,
                log_std_init: float = 0.0) -> GaussianPolicy:
    mean = init_mlp((obs_dim, *hidden_sizes, action_dim), rng, output_gain=POLICY_OUTPUT_GAIN)
    return GaussianPolicy(mean, np.full(action_dim, float(log_std_init)))


def init_critic(obs_dim: int, hidden_sizes, rng: np.random.Generator) -> MlpParams:
    return init_mlp((obs_dim, *hidden_sizes, 1), rng)


def mlp_forward(params: MlpParams, inputs) -> tuple[np.ndarray, MlpCache]:
    inputs = np.asarray(inputs, dtype=float)
    hidden = np.atleast_2d(inputs)
    if hidden.shape[1] != params.weights[0].shape[0]:
        raise DimensionError(
            f'input of width {hidden.shape[1]} for a network expecting {params.weights[0].shape[0]}')

    activations = [hidden]
    last = len(params.weights) - 1
    for index, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        hidden = hidden @ weight + bias
        if index < last:
            hidden = np.tanh(hidden)
        activations.append(hidden)

    squeeze = inputs.ndim == 1
    output = hidden[0] if squeeze else hidden
    return output, MlpCache(activations, squeeze)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_output) -> list[np.ndarray]:
    """Gradients aligned with ``params.arrays()``."""
    grad = np.atleast_2d(np.asarray(grad_output, dtype=float))
    if grad.shape != cache.activations[-1].shape or len(cache.activations) != len(params.weights) + 1:
        raise DimensionError('gradient does not match the cached forward pass')

    grads: list[np.ndarray] = [None] * (2 * len(params.weights))
    last = len(params.weights) - 1
    for index in range(last, -1, -1):
        if index < last:
            grad = grad * (1.0 - cache.activations[index + 1] ** 2)
        grads[2 * index] = cache.activations[index].T @ grad
        grads[2 * index + 1] = grad.sum(axis=0)
        grad = grad @ params.weights[index].T
    return grads


def gaussian_log_prob(mean, log_std, actions) -> np.ndarray:
    z = (np.asarray(actions) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z ** 2 - log_std - 0.5 * _LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std + 0.5 * (_LOG_2PI + 1.0)))


def policy_mean(policy: GaussianPolicy, observations) -> np.ndarray:
    return mlp_forward(policy.mean, observations)[0]


def gaussian_sample_logprob(policy: GaussianPolicy, observation,
                            rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Sample an unclipped action; clipping to the action box is the environment's job."""
    mean = policy_mean(policy, observation)
    log_std = policy.clamped_log_std
    action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return action, float(gaussian_log_prob(mean, log_std, action))


def policy_log_prob(policy: GaussianPolicy, observations, actions):
    mean, cache = mlp_forward(policy.mean, observations)
    return gaussian_log_prob(mean, policy.clamped_log_std, actions), mean, cache


def policy_backward(policy: GaussianPolicy, cache: MlpCache, mean, actions,
                    grad_log_prob, grad_log_std_extra=None) -> list[np.ndarray]:
    """
    Gradients aligned with ``policy.arrays()`` of a loss whose derivative with
    respect to each sample's log-probability is ``grad_log_prob``.
    """
    log_std = policy.clamped_log_std
    grad_log_prob = np.atleast_1d(grad_log_prob)[:, None]
    deviation = np.atleast_2d(actions) - np.atleast_2d(mean)
    variance = np.exp(2.0 * log_std)

    grad_mean = grad_log_prob * deviation / variance
    grad_log_std = np.sum(grad_log_prob * (deviation ** 2 / variance - 1.0), axis=0)
    if grad_log_std_extra is not None:
        grad_log_std = grad_log_std + grad_log_std_extra
    inside = (policy.log_std >= LOG_STD_MIN) & (policy.log_std <= LOG_STD_MAX)
    grad_log_std = np.where(inside, grad_log_std, 0.0)

    if cache.squeeze:
        grad_mean = grad_mean[0]
    return [*mlp_backward(policy.mean, cache, grad_mean), grad_log_std]


def adam_step(arrays: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place."""
    if len(arrays) != len(grads) or len(arrays) != len(state.first):
        raise DimensionError('parameters, gradients and moments differ in count')
    for array, grad in zip(arrays, grads):
        if array.shape != np.shape(grad):
            raise DimensionError(f'gradient shape {np.shape(grad)} for parameter {array.shape}')

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for array, grad, first, second in zip(arrays, grads, state.first, state.second):
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad ** 2
        array -= state.lr * (first / correction1) / (np.sqrt(second / correction2) + state.eps)
    return arrays, state


def clip_grad_norm(grads: list[np.ndarray], max_norm: float | None) -> float:
    norm = float(np.sqrt(sum(np.sum(g ** 2) for g in grads)))
    if max_norm is not None and norm > max_norm > 0:
        for grad in grads:
            grad *= max_norm / norm
    return norm


def finite_diff_check(loss: Callable[[], float], arrays: list[np.ndarray],
                      grads: list[np.ndarray], samples: int, rng: np.random.Generator,
                      step: float = FINITE_DIFF_STEP) -> float:
    """
    Worst relative discrepancy between ``grads`` and central differences of
    ``loss`` at ``samples`` uniformly drawn coordinates.

    ``loss`` must read the parameters from ``arrays`` (they are perturbed in
    place and restored). The denominator is floored at FINITE_DIFF_FLOOR.
    """
    sizes = np.array([a.size for a in arrays])
    worst = 0.0
    for flat in rng.integers(0, sizes.sum(), size=samples):
        which = int(np.searchsorted(np.cumsum(sizes), flat, side='right'))
        offset = int(flat - (sizes[:which].sum()))
        array = arrays[which]
        index = np.unravel_index(offset, array.shape)
        original = array[index]

        array[index] = original + step
        plus = loss()
        array[index] = original - step
        minus = loss()
        array[index] = original

        numeric = (plus - minus) / (2.0 * step)
        analytic = float(np.asarray(grads[which])[index])
        error = abs(numeric - analytic) / max(abs(numeric), abs(analytic), FINITE_DIFF_FLOOR)
        worst = max(worst, error)
    return worst


def save_checkpoint(path: str | Path, policy: GaussianPolicy, critic: MlpParams | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {'format_version': np.array(CHECKPOINT_VERSION)}
    for prefix, params in (('actor', policy.mean), ('critic', critic)):
        if params is None:
            continue
        payload[f'{prefix}_layer_sizes'] = np.array(params.layer_sizes)
        payload[f'{prefix}_activation'] = np.array(params.hidden_activation)
        for index, (weight, bias) in enumerate(zip(params.weights, params.biases)):
            payload[f'{prefix}_W{index}'] = weight
            payload[f'{prefix}_b{index}'] = bias
    payload['actor_log_std'] = policy.log_std
    with open(path, 'wb') as handle:
        np.savez(handle, **payload)


def _read_mlp(archive, prefix: str) -> MlpParams:
    n_layers = len(archive[f'{prefix}_layer_sizes']) - 1
    return MlpParams(
        weights=[archive[f'{prefix}_W{i}'].astype(float) for i in range(n_layers)],
        biases=[archive[f'{prefix}_b{i}'].astype(float) for i in range(n_layers)],
        hidden_activation=str(archive[f'{prefix}_activation']),
    )


def load_checkpoint(path: str | Path) -> tuple[GaussianPolicy, MlpParams | None]:
    if not Path(path).exists():
        raise MissingCheckpoint(f'checkpoint not found: {path}')
    with np.load(path) as archive:
        version = int(archive['format_version'])
        if version != CHECKPOINT_VERSION:
            raise DimensionError(f'unsupported checkpoint version {version}')
        policy = GaussianPolicy(_read_mlp(archive, 'actor'), archive['actor_log_std'].astype(float))
        critic = _read_mlp(archive, 'critic') if 'critic_layer_sizes' in archive.files else None
    return policy, critic

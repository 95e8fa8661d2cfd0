"""
Scenario configuration: the physical layout, radio parameters and training
hyperparameters of one experiment.

Documents are YAML mappings whose keys mirror the ``ScenarioConfig`` fields,
with ``rl_hyperparams`` as a nested mapping. ``scenarios/default.yaml`` holds the
default scenario in that format.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from lab.exceptions import ScenarioError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 2.998e8

DEFAULT_CARRIER_HZ = 28e9
DEFAULT_V_MAX_MPS = 10.0
DEFAULT_QOS_MIN_RATE = 1.0

# ~ sqrt(N_t) / median ||h|| over the default scenario's links, so that the
# real/imag channel entries fed to the networks are O(1).
DEFAULT_OBSERVATION_CHANNEL_SCALE = 3.0e7
DEFAULT_OBSERVATION_POSITION_SCALE = 0.01

# Seeds are unsigned 64-bit integers.
MAX_SEED = 2 ** 64 - 1

# Order of SeedSequence children; appending keeps older streams stable.
RNG_PURPOSES = ('channel', 'policy', 'init', 'decompose', 'baseline')


@dataclass(frozen=True)
class RLHyperparams:
    actor_lr: float = 1e-4
    critic_lr: float = 3e-4
    gamma: float = 0.9
    clip: float = 0.2
    gae_lambda: float = 0.95
    batch_size: int = 1000
    minibatch_size: int = 200
    episodes: int = 10_000
    hidden_sizes: tuple[int, ...] = (256, 256)
    update_epochs: int = 10
    entropy_coef: float = 0.0
    max_grad_norm: float | None = 0.5
    log_std_init: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    n_antennas_x: int
    n_antennas_y: int
    n_rf_chains: int
    n_legit: int
    n_eves: int
    transmit_power_watts: float
    pathloss_exponent: float
    slot_seconds: float
    n_slots: int
    noise_power_watts: float
    sensing_threshold: tuple[float, ...]
    sensing_penalty_weight: float
    legit_init_positions: tuple[tuple[float, float, float], ...]
    eve_positions: tuple[tuple[float, float, float], ...]
    base_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    carrier_hz: float = DEFAULT_CARRIER_HZ
    qos_min_rate: float = DEFAULT_QOS_MIN_RATE
    v_max_mps: float = DEFAULT_V_MAX_MPS
    rl_hyperparams: RLHyperparams = field(default_factory=RLHyperparams)
    seed: int = 0
    observation_channel_scale: float = DEFAULT_OBSERVATION_CHANNEL_SCALE
    observation_position_scale: float = DEFAULT_OBSERVATION_POSITION_SCALE
    legit_noise_watts: tuple[float, ...] | None = None
    eve_noise_watts: tuple[float, ...] | None = None

    @property
    def n_antennas(self) -> int:
        return self.n_antennas_x * self.n_antennas_y

    @property
    def duration_seconds(self) -> float:
        return self.n_slots * self.slot_seconds

    @property
    def max_displacement(self) -> float:
        return self.v_max_mps * self.slot_seconds

    @property
    def legit_noise(self) -> np.ndarray:
        if self.legit_noise_watts is None:
            return np.full(self.n_legit, self.noise_power_watts)
        return np.asarray(self.legit_noise_watts, dtype=float)

    @property
    def eve_noise(self) -> np.ndarray:
        if self.eve_noise_watts is None:
            return np.full(self.n_eves, self.noise_power_watts)
        return np.asarray(self.eve_noise_watts, dtype=float)

    @property
    def action_dim(self) -> int:
        return 2 * self.n_antennas * self.n_legit + 2 * self.n_antennas + 2 * self.n_legit

    @property
    def observation_dim(self) -> int:
        return (2 * self.n_antennas * (self.n_legit + self.n_eves)
                + 3 * self.n_legit + 3 + 3 * self.n_eves)

    def replace(self, **changes) -> 'ScenarioConfig':
        return dataclasses.replace(self, **changes)

    def with_hyperparams(self, **changes) -> 'ScenarioConfig':
        return self.replace(rl_hyperparams=dataclasses.replace(self.rl_hyperparams, **changes))


def default_paper_scenario() -> ScenarioConfig:
    return ScenarioConfig(
        n_antennas_x=8,
        n_antennas_y=8,
        n_rf_chains=8,
        n_legit=4,
        n_eves=3,
        transmit_power_watts=10.0,
        pathloss_exponent=1.8,
        slot_seconds=0.5,
        n_slots=200,
        noise_power_watts=1e-13,
        sensing_threshold=(0.5e-5, 0.5e-5, 0.5e-5),
        sensing_penalty_weight=0.5,
        legit_init_positions=(
            (20.0, 80.0, 20.0),
            (20.0, 70.0, 15.0),
            (70.0, 30.0, 30.0),
            (80.0, 10.0, 15.0),
        ),
        eve_positions=(
            (20.0, 40.0, 20.0),
            (50.0, 50.0, 30.0),
            (80.0, 70.0, 40.0),
        ),
        rl_hyperparams=RLHyperparams(),
    )


def tiny_scenario() -> ScenarioConfig:
    """2x2 array, one user, one eavesdropper, 20 slots: the smoke-test scale."""
    return ScenarioConfig(
        n_antennas_x=2,
        n_antennas_y=2,
        n_rf_chains=2,
        n_legit=1,
        n_eves=1,
        transmit_power_watts=10.0,
        pathloss_exponent=1.8,
        slot_seconds=0.5,
        n_slots=20,
        noise_power_watts=1e-13,
        sensing_threshold=(0.5e-5,),
        sensing_penalty_weight=0.5,
        legit_init_positions=((20.0, 60.0, 20.0),),
        eve_positions=((60.0, 20.0, 30.0),),
        observation_channel_scale=1.5e7,
        rl_hyperparams=RLHyperparams(
            actor_lr=3e-4,
            critic_lr=1e-3,
            batch_size=200,
            minibatch_size=50,
            episodes=300,
            hidden_sizes=(64, 64),
        ),
    )


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """
    Split one master seed into independent per-purpose generators.

    Child ``k`` of ``SeedSequence(seed)`` feeds purpose ``RNG_PURPOSES[k]``.
    """
    children = np.random.SeedSequence(seed).spawn(len(RNG_PURPOSES))
    return {purpose: np.random.default_rng(child)
            for purpose, child in zip(RNG_PURPOSES, children)}


def scenario_to_dict(config: ScenarioConfig) -> dict:
    data = dataclasses.asdict(config)
    # asdict keeps tuples; YAML and JSON want plain lists
    return _listify(data)


def _listify(value):
    if isinstance(value, dict):
        return {key: _listify(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_listify(item) for item in value]
    return value


def dump_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(config), sort_keys=False)


def parse_document(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        if mark is not None:
            raise ScenarioError(
                f'line {mark.line + 1}, column {mark.column + 1}: '
                f'{getattr(exc, "problem", exc)}') from exc
        raise ScenarioError(str(exc)) from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError('scenario document must be a key/value mapping')
    return data


def load_scenario(text: str) -> ScenarioConfig:
    from lab.serializers import ScenarioSerializer

    serializer = ScenarioSerializer(data=parse_document(text))
    if not serializer.is_valid():
        raise ScenarioError(_flatten_errors(serializer.errors))
    config = serializer.save()
    logger.debug('Loaded scenario N_t=%d L=%d E=%d seed=%d',
                 config.n_antennas, config.n_legit, config.n_eves, config.seed)
    return config


def load_scenario_file(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f'cannot read scenario {path}: {exc}') from exc
    return load_scenario(text)


def _flatten_errors(errors, prefix: str = '') -> str:
    messages = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            label = '' if key == 'non_field_errors' else f'{prefix}{key}'
            messages.append(_flatten_errors(value, f'{label}.' if label else prefix))
    elif isinstance(errors, list):
        for value in errors:
            if isinstance(value, (dict, list)):
                messages.append(_flatten_errors(value, prefix))
            else:
                label = prefix.rstrip('.')
                messages.append(f'{label}: {value}' if label else str(value))
    else:
        messages.append(str(errors))
    return '; '.join(message for message in messages if message)

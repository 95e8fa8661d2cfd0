"""
Episodic environment for joint digital beamforming and trajectory control.

Raw actions live in [-1, 1]^A with ``A = 2*N_t*L + 2*N_t + 2*L``. Consecutive
(real, imaginary) pairs fill the precoder matrix row-major over (antenna,
user), then the AN vector; the last ``2*L`` entries are per-UAV (dx, dy).
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from lab.channel import ChannelSet, realize_channels
from lab.exceptions import ActionError, EpisodeDone
from lab.metrics import (
    DigitalBeamformers,
    SecrecyReport,
    covariance,
    secrecy_report,
    sensing_margins,
)
from lab.scenario import ScenarioConfig, spawn_streams

logger = logging.getLogger(__name__)

# Substituted for an all-zero beam part before normalization.
BEAM_EPSILON = 1e-8


@dataclass
class EnvState:
    slot: int
    legit_positions: np.ndarray
    channels: ChannelSet
    done: bool = False
    # running (communication, sensing, qos) sums of the episode
    episode_totals: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class DecodedAction:
    beams: DigitalBeamformers
    moves: np.ndarray


class RewardComponents(NamedTuple):
    communication: float
    sensing: float
    qos: float

    @property
    def total(self) -> float:
        return self.communication + self.sensing + self.qos


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    components: RewardComponents
    secrecy: SecrecyReport
    sensing_margins: np.ndarray
    observation: np.ndarray
    done: bool
    positions: np.ndarray = field(repr=False)


def decode_action(raw, config: ScenarioConfig) -> DecodedAction:
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (config.action_dim,):
        raise ActionError(f'expected an action of length {config.action_dim}, got {raw.shape}')

    nt, n_legit = config.n_antennas, config.n_legit
    n_precoder = 2 * nt * n_legit
    beam_part = raw[:n_precoder + 2 * nt]
    power = float(np.sum(beam_part ** 2))
    if power == 0.0:
        raise ActionError('beam part of the action is all zero; normalization undefined')

    eta = np.sqrt(config.transmit_power_watts / power)
    pairs = beam_part.reshape(-1, 2)
    values = eta * (pairs[:, 0] + 1j * pairs[:, 1])
    beams = DigitalBeamformers(
        precoders=values[:nt * n_legit].reshape(nt, n_legit),
        an_vector=values[nt * n_legit:],
    )

    limit = config.max_displacement
    moves = raw[n_precoder + 2 * nt:].reshape(n_legit, 2) * limit
    lengths = np.linalg.norm(moves, axis=1)
    over = lengths > limit
    moves[over] *= (limit / lengths[over])[:, None]
    return DecodedAction(beams=beams, moves=moves)


def safe_decode_action(raw, config: ScenarioConfig) -> DecodedAction:
    """Clip to the action box and replace an all-zero beam part by BEAM_EPSILON."""
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0)
    n_beam = 2 * config.n_antennas * (config.n_legit + 1)
    if raw.shape == (config.action_dim,) and not np.any(raw[:n_beam]):
        raw = raw.copy()
        raw[:n_beam] = BEAM_EPSILON
    return decode_action(raw, config)


def slot_metrics(channels: ChannelSet, beams: DigitalBeamformers,
                 config: ScenarioConfig) -> tuple[SecrecyReport, np.ndarray]:
    report = secrecy_report(channels, beams, config.legit_noise, config.eve_noise)
    margins = sensing_margins(covariance(beams), channels.eve_geometries,
                              config.sensing_threshold, config.n_antennas_x,
                              config.n_antennas_y)
    return report, margins


def components_from(report: SecrecyReport, margins: np.ndarray,
                    config: ScenarioConfig) -> RewardComponents:
    # The QoS penalty is charged on secrecy rates, as the reward defines it.
    return RewardComponents(
        communication=report.sum_secrecy,
        sensing=-config.sensing_penalty_weight * float(np.sum(np.maximum(-margins, 0.0))),
        qos=-float(np.sum(np.maximum(config.qos_min_rate - report.secrecy_rates, 0.0))),
    )


def reward_components(channels: ChannelSet, beams: DigitalBeamformers,
                      config: ScenarioConfig) -> RewardComponents:
    return components_from(*slot_metrics(channels, beams, config), config)


class SecureIsacEnv:
    def __init__(self, config: ScenarioConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else spawn_streams(config.seed)['channel']
        self.state: EnvState | None = None
        self.trace: list[dict] = []

    @property
    def observation_dim(self) -> int:
        return self.config.observation_dim

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def reset(self, seed: int | None = None) -> tuple[EnvState, np.ndarray]:
        if seed is not None:
            self.rng = spawn_streams(seed)['channel']

        positions = np.array(self.config.legit_init_positions, dtype=float)
        self.state = EnvState(
            slot=0,
            legit_positions=positions,
            channels=realize_channels(self.config, positions, self.rng),
        )
        self.trace = []
        return self.state, self.observe()

    def observe(self) -> np.ndarray:
        config, state = self.config, self.state
        links = state.channels.all_links * config.observation_channel_scale
        channel_part = np.concatenate([links.real, links.imag], axis=1).ravel()
        scale = config.observation_position_scale
        return np.concatenate([
            channel_part,
            state.legit_positions.ravel() * scale,
            np.asarray(config.base_position, dtype=float) * scale,
            np.asarray(config.eve_positions, dtype=float).ravel() * scale,
        ])

    def step(self, decoded: DecodedAction) -> StepOutcome:
        state = self.state
        if state is None or state.done:
            raise EpisodeDone('step() called on a finished episode; call reset() first')

        report, margins = slot_metrics(state.channels, decoded.beams, self.config)
        components = components_from(report, margins, self.config)
        reward = components.total
        state.episode_totals += components
        slot_positions = state.legit_positions.copy()
        self._record(state.slot, slot_positions, reward, components, report)

        positions = slot_positions.copy()
        positions[:, :2] += decoded.moves
        state.legit_positions = positions
        state.slot += 1
        state.done = state.slot >= self.config.n_slots
        state.channels = realize_channels(self.config, positions, self.rng)

        return StepOutcome(
            reward=reward,
            components=components,
            secrecy=report,
            sensing_margins=margins,
            observation=self.observe(),
            done=state.done,
            positions=slot_positions,
        )

    def step_raw(self, raw) -> tuple[DecodedAction, StepOutcome]:
        decoded = safe_decode_action(raw, self.config)
        return decoded, self.step(decoded)

    def _record(self, slot, positions, reward, components, report):
        for uav, (x, y, z) in enumerate(positions):
            self.trace.append({
                'slot': slot,
                'uav': uav,
                'x': x,
                'y': y,
                'z': z,
                'reward': reward,
                'communication': components.communication,
                'sensing': components.sensing,
                'qos': components.qos,
                'sum_secrecy': report.sum_secrecy,
            })

"""
Reference controllers and the per-UAV secrecy comparison table.

Every scheme is rolled through the same environment seeds, so the channel
small-scale draws line up slot for slot across rows of the table.
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from lab.channel import ChannelSet, complex_normal, steering_matrix
from lab.env import DecodedAction, SecureIsacEnv, safe_decode_action
from lab.exceptions import MissingCheckpoint
from lab.metrics import DigitalBeamformers
from lab.neural import load_checkpoint
from lab.ppo import EvaluationReport, HybridSettings, policy_controller, run_evaluation
from lab.scenario import ScenarioConfig, spawn_streams

logger = logging.getLogger(__name__)

SCHEMES = ('ppo', 'a2c', 'random', 'matched')
# below this norm the projected eavesdropper direction is treated as absent
NULL_PROJECTION_TOL = 1e-9


def complement_projector(basis: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of the column span of ``basis``."""
    n = basis.shape[0]
    if basis.size == 0:
        return np.eye(n, dtype=complex)
    q, r = np.linalg.qr(basis)
    rank = int(np.sum(np.abs(np.diag(r)) > NULL_PROJECTION_TOL * max(1.0, np.abs(r).max())))
    q = q[:, :rank]
    return np.eye(n, dtype=complex) - q @ q.conj().T


def artificial_noise_direction(channels: ChannelSet, config: ScenarioConfig,
                               rng: np.random.Generator) -> np.ndarray | None:
    """
    Unit AN direction orthogonal to every legitimate steering vector.

    The eavesdroppers' summed steering vectors are projected onto the
    complement; when that vanishes a random complement vector is used. Returns
    ``None`` when the legitimate steering vectors span the whole array.
    """
    nx, ny = config.n_antennas_x, config.n_antennas_y
    legit = steering_matrix([g.azimuth_rad for g in channels.legit_geometries],
                            [g.elevation_rad for g in channels.legit_geometries], nx, ny)
    projector = complement_projector(legit.T)

    if channels.eve_geometries:
        eves = steering_matrix([g.azimuth_rad for g in channels.eve_geometries],
                               [g.elevation_rad for g in channels.eve_geometries], nx, ny)
        direction = projector @ eves.sum(axis=0)
        if np.linalg.norm(direction) > NULL_PROJECTION_TOL:
            return direction / np.linalg.norm(direction)

    direction = projector @ complex_normal(rng, config.n_antennas)
    norm = np.linalg.norm(direction)
    if norm <= NULL_PROJECTION_TOL:
        return None
    return direction / norm


def matched_beams(channels: ChannelSet, config: ScenarioConfig,
                  rng: np.random.Generator) -> DigitalBeamformers:
    """Steering-matched precoders plus a complement-space AN, equal power per beam."""
    nx, ny = config.n_antennas_x, config.n_antennas_y
    legit = steering_matrix([g.azimuth_rad for g in channels.legit_geometries],
                            [g.elevation_rad for g in channels.legit_geometries], nx, ny)
    an = artificial_noise_direction(channels, config, rng)

    n_beams = config.n_legit + (an is not None)
    share = np.sqrt(config.transmit_power_watts / n_beams)
    an_vector = np.zeros(config.n_antennas, dtype=complex) if an is None else an * share
    return DigitalBeamformers(precoders=legit.T * share, an_vector=an_vector)


def matched_controller(rng: np.random.Generator):
    def act(env: SecureIsacEnv, observation: np.ndarray) -> DecodedAction:
        beams = matched_beams(env.state.channels, env.config, rng)
        return DecodedAction(beams=beams, moves=np.zeros((env.config.n_legit, 2)))
    return act


def random_controller(rng: np.random.Generator):
    def act(env: SecureIsacEnv, observation: np.ndarray) -> DecodedAction:
        return safe_decode_action(rng.uniform(-1.0, 1.0, env.config.action_dim), env.config)
    return act


def _checkpoint_controller(path: str | Path | None, scheme: str):
    if path is None or not Path(path).exists():
        raise MissingCheckpoint(f'{scheme} checkpoint not found: {path}')
    policy, _ = load_checkpoint(path)
    return policy_controller(policy)


def evaluate_scheme(scheme: str, config: ScenarioConfig, seed: int, episodes: int,
                    checkpoint: str | Path | None = None,
                    hybrid: HybridSettings | None = None) -> EvaluationReport:
    rng = spawn_streams(seed)['baseline']
    if scheme == 'matched':
        act = matched_controller(rng)
    elif scheme == 'random':
        act = random_controller(rng)
    elif scheme in ('ppo', 'a2c'):
        act = _checkpoint_controller(checkpoint, scheme)
    else:
        raise ValueError(f'unknown scheme {scheme!r}')

    env = SecureIsacEnv(config)
    return run_evaluation(act, env, episodes, seed=seed, hybrid=hybrid)


def compare_baselines(config: ScenarioConfig, seeds, ppo_checkpoint: str | Path,
                      a2c_checkpoint: str | Path | None = None, episodes: int = 1,
                      hybrid: HybridSettings | None = None) -> pd.DataFrame:
    """
    Mean per-slot secrecy of each legitimate UAV and their total, per scheme.

    The PPO checkpoint is required. Without an A2C checkpoint its row is left
    out of the table. With ``hybrid`` every scheme is scored through the
    decomposition of its digital beamformers.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError('at least one seed is required')
    if not Path(ppo_checkpoint).exists():
        raise MissingCheckpoint(f'ppo checkpoint not found: {ppo_checkpoint}')

    checkpoints = {'ppo': ppo_checkpoint, 'a2c': a2c_checkpoint}
    rows = []
    for scheme in SCHEMES:
        if scheme == 'a2c' and a2c_checkpoint is None:
            logger.warning('No A2C checkpoint given; skipping the a2c row')
            continue
        per_uav = np.mean([
            evaluate_scheme(scheme, config, seed, episodes, checkpoints.get(scheme),
                            hybrid).per_uav_secrecy
            for seed in seeds
        ], axis=0)
        row = {'scheme': scheme}
        row.update({f'uav_{index + 1}': float(value) for index, value in enumerate(per_uav)})
        row['total'] = float(per_uav.sum())
        rows.append(row)
        logger.info('%s total secrecy %.4f over seeds %s', scheme, row['total'], seeds)

    columns = ['scheme', *[f'uav_{index + 1}' for index in range(config.n_legit)], 'total']
    return pd.DataFrame(rows, columns=columns)

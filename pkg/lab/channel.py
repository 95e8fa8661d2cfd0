"""
Base-station to UAV links: geometry, UPA steering vectors, path loss and
per-slot channel realizations.

Steering vectors enumerate antennas row-major over ``n_x`` then ``n_y``: the
entry for antenna ``(n_x, n_y)`` sits at index ``n_x * ny + n_y``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from lab.exceptions import GeometryError
from lab.scenario import SPEED_OF_LIGHT, ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Geometry:
    azimuth_rad: float
    elevation_rad: float
    distance_m: float


@dataclass(frozen=True)
class ChannelSet:
    legit: np.ndarray
    eves: np.ndarray
    legit_geometries: tuple[Geometry, ...]
    eve_geometries: tuple[Geometry, ...]
    small_scale: np.ndarray

    @property
    def n_antennas(self) -> int:
        return self.legit.shape[1]

    @property
    def all_links(self) -> np.ndarray:
        return np.vstack([self.legit, self.eves])


def angles_from_positions(base, node) -> Geometry:
    delta = np.asarray(node, dtype=float) - np.asarray(base, dtype=float)
    distance = float(np.linalg.norm(delta))
    if distance == 0.0:
        raise GeometryError('node coincides with the base station')

    azimuth = float(np.arctan2(delta[1], delta[0]))
    elevation = float(np.arccos(np.clip(delta[2] / distance, -1.0, 1.0)))
    return Geometry(azimuth_rad=azimuth, elevation_rad=elevation, distance_m=distance)


def steering_matrix(azimuths, elevations, nx: int, ny: int) -> np.ndarray:
    """Rows are steering vectors for each (azimuth, elevation) pair."""
    azimuths = np.atleast_1d(np.asarray(azimuths, dtype=float))
    elevations = np.atleast_1d(np.asarray(elevations, dtype=float))
    sin_theta = np.sin(elevations)[:, None]
    phase_x = sin_theta * np.cos(azimuths)[:, None] * np.arange(nx)[None, :]
    phase_y = sin_theta * np.sin(azimuths)[:, None] * np.arange(ny)[None, :]
    phase = phase_x[:, :, None] + phase_y[:, None, :]
    return np.exp(-1j * np.pi * phase).reshape(len(azimuths), nx * ny) / np.sqrt(nx * ny)


def steering_vector(geom: Geometry, nx: int, ny: int) -> np.ndarray:
    return steering_matrix(geom.azimuth_rad, geom.elevation_rad, nx, ny)[0]


def path_gain(distance: float, fc: float, kappa: float) -> float:
    return SPEED_OF_LIGHT / (4.0 * np.pi * fc) * distance ** (-kappa)


def channel_vector(geom: Geometry, alpha: complex, fc: float, kappa: float,
                   nx: int, ny: int) -> np.ndarray:
    if geom.distance_m <= 0:
        raise GeometryError('distance must be positive')
    return path_gain(geom.distance_m, fc, kappa) * alpha * steering_vector(geom, nx, ny)


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """CN(0, 1): real and imaginary parts independent N(0, 1/2)."""
    draws = rng.standard_normal((*np.atleast_1d(size), 2)) / np.sqrt(2.0)
    return draws[..., 0] + 1j * draws[..., 1]


def realize_channels(config: ScenarioConfig, legit_positions,
                     rng: np.random.Generator) -> ChannelSet:
    legit_positions = np.asarray(legit_positions, dtype=float)
    if np.any(legit_positions[:, 2] <= 0):
        raise GeometryError('legitimate UAV altitude must be positive')

    legit_geometries = tuple(angles_from_positions(config.base_position, position)
                             for position in legit_positions)
    eve_geometries = tuple(angles_from_positions(config.base_position, position)
                           for position in config.eve_positions)
    alphas = complex_normal(rng, config.n_legit + config.n_eves)

    links = [
        channel_vector(geom, alpha, config.carrier_hz, config.pathloss_exponent,
                       config.n_antennas_x, config.n_antennas_y)
        for geom, alpha in zip(legit_geometries + eve_geometries, alphas)
    ]
    links = np.asarray(links).reshape(config.n_legit + config.n_eves, config.n_antennas)

    return ChannelSet(
        legit=links[:config.n_legit],
        eves=links[config.n_legit:],
        legit_geometries=legit_geometries,
        eve_geometries=eve_geometries,
        small_scale=alphas,
    )

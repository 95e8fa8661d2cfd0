"""
Deterministic performance functionals of one time slot.

Every function works on the effective fully-digital representation; hybrid
beamformers are flattened with ``effective_digital`` first. Rates are in
bits/s/Hz.
"""
from dataclasses import dataclass

import numpy as np

from lab.channel import ChannelSet, Geometry, steering_matrix
from lab.exceptions import DimensionError, NumericalError

HERMITIAN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class DigitalBeamformers:
    precoders: np.ndarray
    an_vector: np.ndarray

    def __post_init__(self):
        if self.precoders.ndim != 2 or self.an_vector.shape != (self.precoders.shape[0],):
            raise DimensionError(
                f'precoders {self.precoders.shape} and AN {self.an_vector.shape} disagree')

    @property
    def n_users(self) -> int:
        return self.precoders.shape[1]

    @classmethod
    def zeros(cls, n_antennas: int, n_users: int) -> 'DigitalBeamformers':
        return cls(np.zeros((n_antennas, n_users), dtype=complex),
                   np.zeros(n_antennas, dtype=complex))

    def scaled(self, factor: float) -> 'DigitalBeamformers':
        return DigitalBeamformers(self.precoders * factor, self.an_vector * factor)


@dataclass(frozen=True)
class HybridBeamformers:
    analog: np.ndarray
    digital: np.ndarray
    an_digital: np.ndarray

    def __post_init__(self):
        n_rf = self.analog.shape[1]
        if self.digital.shape[0] != n_rf or self.an_digital.shape != (n_rf,):
            raise DimensionError(
                f'analog {self.analog.shape}, digital {self.digital.shape} and '
                f'AN {self.an_digital.shape} disagree')

    @property
    def n_rf_chains(self) -> int:
        return self.analog.shape[1]


@dataclass(frozen=True)
class SecrecyReport:
    legit_rates: np.ndarray
    eve_rates: np.ndarray
    secrecy_rates: np.ndarray

    @property
    def sum_secrecy(self) -> float:
        return float(self.secrecy_rates.sum())


def effective_digital(hybrid: HybridBeamformers) -> DigitalBeamformers:
    return DigitalBeamformers(hybrid.analog @ hybrid.digital, hybrid.analog @ hybrid.an_digital)


def total_power(beams: DigitalBeamformers) -> float:
    return float(np.sum(np.abs(beams.precoders) ** 2) + np.sum(np.abs(beams.an_vector) ** 2))


def sinr_matrix(links: np.ndarray, beams: DigitalBeamformers, noise) -> np.ndarray:
    """
    SINR of every receiver (rows of ``links``) for every target stream.

    Entry ``[k, l]`` treats stream ``l`` as the signal of interest at receiver
    ``k``; the other streams and the AN are interference.
    """
    links = np.atleast_2d(links)
    if links.shape[1] != beams.precoders.shape[0]:
        raise DimensionError(
            f'channels of length {links.shape[1]} against {beams.precoders.shape[0]} antennas')

    gains = np.abs(links.conj() @ beams.precoders) ** 2
    jamming = np.abs(links.conj() @ beams.an_vector) ** 2
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (links.shape[0],))
    n_users = gains.shape[1]
    interference = gains @ (np.ones((n_users, n_users)) - np.eye(n_users))
    return gains / (interference + (jamming + noise)[:, None])


def sinr(channels: ChannelSet, beams: DigitalBeamformers, user: int, *,
         eve: int | None = None, noise: float) -> float:
    link = channels.legit[user] if eve is None else channels.eves[eve]
    return float(sinr_matrix(link, beams, noise)[0, user])


def secrecy_report(channels: ChannelSet, beams: DigitalBeamformers,
                   legit_noise, eve_noise=None) -> SecrecyReport:
    eve_noise = legit_noise if eve_noise is None else eve_noise
    legit = np.diag(sinr_matrix(channels.legit, beams, legit_noise))
    legit_rates = np.log2(1.0 + legit)

    if channels.eves.shape[0] == 0:
        eve_rates = np.zeros((0, beams.n_users))
        secrecy = legit_rates.copy()
    else:
        eve_rates = np.log2(1.0 + sinr_matrix(channels.eves, beams, eve_noise))
        secrecy = np.maximum(legit_rates - eve_rates.max(axis=0), 0.0)

    return SecrecyReport(legit_rates=legit_rates, eve_rates=eve_rates, secrecy_rates=secrecy)


def covariance(beams: DigitalBeamformers) -> np.ndarray:
    an = beams.an_vector[:, None]
    return beams.precoders @ beams.precoders.conj().T + an @ an.conj().T


def _quadratic_forms(rx: np.ndarray, steering: np.ndarray) -> np.ndarray:
    values = np.einsum('ki,ij,kj->k', steering.conj(), rx, steering)
    tolerance = HERMITIAN_TOLERANCE * max(1.0, abs(np.trace(rx)))
    if np.any(np.abs(values.imag) > tolerance):
        raise NumericalError('beampattern has an imaginary residue; covariance is not Hermitian')
    return np.maximum(values.real, 0.0)


def beampattern(rx: np.ndarray, geom: Geometry, nx: int, ny: int) -> float:
    steering = steering_matrix(geom.azimuth_rad, geom.elevation_rad, nx, ny)
    return float(_quadratic_forms(rx, steering)[0])


def beampattern_grid(rx: np.ndarray, azimuths, elevations, nx: int, ny: int) -> np.ndarray:
    """Power on the azimuth x elevation grid, shape ``(len(azimuths), len(elevations))``."""
    azimuths = np.asarray(azimuths, dtype=float)
    elevations = np.asarray(elevations, dtype=float)
    az, el = np.meshgrid(azimuths, elevations, indexing='ij')
    steering = steering_matrix(az.ravel(), el.ravel(), nx, ny)
    return _quadratic_forms(rx, steering).reshape(az.shape)


def sensing_margin(rx: np.ndarray, geom: Geometry, threshold: float, nx: int, ny: int) -> float:
    return beampattern(rx, geom, nx, ny) * geom.distance_m ** -2 - threshold


def sensing_margins(rx: np.ndarray, geometries, thresholds, nx: int, ny: int) -> np.ndarray:
    if not geometries:
        return np.zeros(0)
    steering = steering_matrix([g.azimuth_rad for g in geometries],
                               [g.elevation_rad for g in geometries], nx, ny)
    distances = np.array([g.distance_m for g in geometries])
    return _quadratic_forms(rx, steering) * distances ** -2 - np.asarray(thresholds, dtype=float)

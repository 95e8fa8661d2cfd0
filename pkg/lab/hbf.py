"""
Alternating-optimization factorization of a fully-digital beamformer into a
constant-modulus analog matrix and low-dimensional digital precoders.

Each iteration solves the digital part in closed form (pseudo-inverse), then
aligns every analog phase with the correlation between the digital target and
the current hybrid approximation. An analog update is kept only if the
objective after the following digital re-solve does not increase, so the
recorded objective trace is non-increasing. Power normalization runs once, on
the returned iterate.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from lab.exceptions import DimensionError, NumericalError
from lab.metrics import HybridBeamformers, effective_digital, total_power

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50
MIN_SINGULAR_VALUE = 1e-6
MAX_INIT_DRAWS = 100


@dataclass(frozen=True)
class DecompositionResult:
    hybrid: HybridBeamformers
    residual_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def residual(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else 0.0


def init_analog(n_antennas: int, n_rf: int, rng: np.random.Generator) -> np.ndarray:
    if n_rf > n_antennas:
        raise DimensionError(f'N_RF={n_rf} exceeds N_t={n_antennas}')

    for _ in range(MAX_INIT_DRAWS):
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_antennas, n_rf))
        analog = np.exp(1j * phases) / np.sqrt(n_antennas)
        if np.linalg.svd(analog, compute_uv=False).min() > MIN_SINGULAR_VALUE:
            return analog
        logger.debug('Rank-deficient analog draw, regenerating')
    raise NumericalError(f'no full-rank {n_antennas}x{n_rf} analog draw in {MAX_INIT_DRAWS} tries')


def _pinv(analog: np.ndarray) -> np.ndarray:
    rcond = max(analog.shape) * np.finfo(float).eps
    return np.linalg.pinv(analog, rcond=rcond)


def update_digital(analog: np.ndarray, f_opt: np.ndarray,
                   w_opt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if analog.shape[0] != f_opt.shape[0] or w_opt.shape != (f_opt.shape[0],):
        raise DimensionError(
            f'analog {analog.shape}, target {f_opt.shape} and AN {w_opt.shape} disagree')
    pseudo_inverse = _pinv(analog)
    return pseudo_inverse @ f_opt, pseudo_inverse @ w_opt


def update_analog(f_opt: np.ndarray, f_bb: np.ndarray, w_opt: np.ndarray, w: np.ndarray,
                  n_antennas: int, previous: np.ndarray | None = None) -> np.ndarray:
    correlation = f_opt @ f_bb.conj().T + np.outer(w_opt, w.conj())
    phases = np.angle(correlation)
    if previous is not None:
        # zero correlation leaves every phase stationary; keep the old one
        held = np.abs(correlation) == 0.0
        phases = np.where(held, np.angle(previous), phases)
    return np.exp(1j * phases) / np.sqrt(n_antennas)


def objective(f_opt: np.ndarray, w_opt: np.ndarray, analog: np.ndarray,
              f_bb: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(np.abs(f_opt - analog @ f_bb) ** 2)
                 + np.sum(np.abs(w_opt - analog @ w) ** 2))


def normalize_power(hybrid: HybridBeamformers, power: float) -> HybridBeamformers:
    current = total_power(effective_digital(hybrid))
    if current <= 0.0:
        raise NumericalError('cannot normalize a hybrid beamformer with zero power')
    eta = np.sqrt(power / current)
    return HybridBeamformers(hybrid.analog, hybrid.digital * eta, hybrid.an_digital * eta)


def decompose(f_opt, w_opt, n_rf: int, power: float, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER,
              rng: np.random.Generator | None = None) -> DecompositionResult:
    f_opt = np.asarray(f_opt, dtype=complex)
    w_opt = np.asarray(w_opt, dtype=complex)
    n_antennas = f_opt.shape[0]
    rng = rng if rng is not None else np.random.default_rng()

    analog = init_analog(n_antennas, n_rf, rng)
    f_bb, w = update_digital(analog, f_opt, w_opt)
    current = objective(f_opt, w_opt, analog, f_bb, w)
    trace = [current]
    scale = max(float(np.sum(np.abs(f_opt) ** 2) + np.sum(np.abs(w_opt) ** 2)),
                np.finfo(float).tiny)
    converged = current <= np.finfo(float).eps * scale
    iterations = 1

    while not converged and iterations < max_iter:
        iterations += 1
        candidate = update_analog(f_opt, f_bb, w_opt, w, n_antennas, previous=analog)
        candidate_bb, candidate_w = update_digital(candidate, f_opt, w_opt)
        candidate_objective = objective(f_opt, w_opt, candidate, candidate_bb, candidate_w)

        previous = current
        if candidate_objective <= current:
            analog, f_bb, w, current = candidate, candidate_bb, candidate_w, candidate_objective
        else:
            # the phase update is deterministic, so a rejected step would repeat
            logger.debug('Analog update rejected at iteration %d (%.6g > %.6g)',
                         iterations, candidate_objective, current)
            trace.append(current)
            converged = True
            break
        trace.append(current)
        logger.debug('AO iteration %d objective %.6g', iterations, current)
        converged = abs(previous - current) <= tol * max(previous, np.finfo(float).tiny)

    hybrid = HybridBeamformers(analog, f_bb, w)
    if total_power(effective_digital(hybrid)) > 0.0:
        hybrid = normalize_power(hybrid, power)
    logger.info('Decomposed N_t=%d N_RF=%d in %d iterations, objective %.6g (converged=%s)',
                n_antennas, n_rf, iterations, current, converged)
    return DecompositionResult(hybrid=hybrid, residual_trace=trace,
                               iterations=iterations, converged=converged)

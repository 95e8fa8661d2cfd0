"""
Readers and writers for every data product of the lab.

Delimited records go through pandas; matrices through ``.npz``. Column orders
are fixed here and nowhere else.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from lab.exceptions import DimensionError, ExportError
from lab.metrics import (
    DigitalBeamformers,
    HybridBeamformers,
    beampattern_grid,
    covariance,
    effective_digital,
)

logger = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = ['episode', 'return', 'communication', 'sensing', 'qos',
                        'actor_loss', 'critic_loss']
TRACE_COLUMNS = ['slot', 'uav', 'x', 'y', 'z', 'reward', 'communication', 'sensing', 'qos',
                 'sum_secrecy']
GRID_COLUMNS = ['scheme', 'slot', 'azimuth_deg', 'elevation_deg', 'power']
CUT_COLUMNS = ['scheme', 'slot', 'uav', 'elevation_deg', 'azimuth_deg', 'power']
CURVE_COLUMNS = ['episode', 'mean', 'min', 'max', 'seeds']
RESIDUAL_COLUMNS = ['slot', 'iteration', 'objective']
TRAJECTORY_COLUMNS = ['role', 'index', 'slot', 'x', 'y', 'z']

AZIMUTH_RANGE_DEG = (-90.0, 90.0)
ELEVATION_RANGE_DEG = (0.0, 90.0)


def _write(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as exc:
        raise ExportError(f'cannot write {path}: {exc}') from exc
    logger.debug('Wrote %d rows to %s', len(frame), path)
    return path


def _read(path: str | Path, columns: list[str]) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise ExportError(f'{path} lacks columns {missing}')
    return frame[columns]


# Training logs and traces

def training_log_frame(report) -> pd.DataFrame:
    return pd.DataFrame({
        'episode': np.arange(1, report.episodes + 1),
        'return': report.episode_returns,
        'communication': [record.communication for record in report.episode_components],
        'sensing': [record.sensing for record in report.episode_components],
        'qos': [record.qos for record in report.episode_components],
        'actor_loss': report.actor_losses,
        'critic_loss': report.critic_losses,
    }, columns=TRAINING_LOG_COLUMNS)


def write_training_log(report, path) -> Path:
    return _write(training_log_frame(report), path)


def read_training_log(path) -> pd.DataFrame:
    return _read(path, TRAINING_LOG_COLUMNS)


def write_trace(rows: list[dict], path) -> Path:
    return _write(pd.DataFrame(rows, columns=TRACE_COLUMNS), path)


def read_trace(path) -> pd.DataFrame:
    return _read(path, TRACE_COLUMNS)


def trajectory_frame(trace_rows: list[dict], config) -> pd.DataFrame:
    """Per-slot legitimate UAV positions followed by the static nodes (slot -1)."""
    rows = [{'role': 'legit', 'index': row['uav'], 'slot': row['slot'],
             'x': row['x'], 'y': row['y'], 'z': row['z']} for row in trace_rows]
    for index, (x, y, z) in enumerate(config.eve_positions):
        rows.append({'role': 'eve', 'index': index, 'slot': -1, 'x': x, 'y': y, 'z': z})
    x, y, z = config.base_position
    rows.append({'role': 'base', 'index': 0, 'slot': -1, 'x': x, 'y': y, 'z': z})
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def write_trajectory(trace_rows: list[dict], config, path) -> Path:
    return _write(trajectory_frame(trace_rows, config), path)


def read_trajectory(path) -> pd.DataFrame:
    return _read(path, TRAJECTORY_COLUMNS)


def learning_curve(logs: list[pd.DataFrame]) -> pd.DataFrame:
    """Mean/min/max of the episode return across seeds, aligned on episode."""
    if not logs:
        raise ExportError('no training logs to merge')
    returns = pd.concat([log.set_index('episode')['return'] for log in logs], axis=1)
    curve = pd.DataFrame({
        'mean': returns.mean(axis=1),
        'min': returns.min(axis=1),
        'max': returns.max(axis=1),
        'seeds': returns.count(axis=1),
    })
    return curve.rename_axis('episode').reset_index()[CURVE_COLUMNS]


def write_learning_curve(logs: list[pd.DataFrame], path) -> Path:
    return _write(learning_curve(logs), path)


def read_learning_curve(path) -> pd.DataFrame:
    return _read(path, CURVE_COLUMNS)


def write_baseline_table(table: pd.DataFrame, path) -> Path:
    return _write(table, path)


def read_baseline_table(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns[:1]) != ['scheme'] or frame.columns[-1] != 'total':
        raise ExportError(f'{path} is not a baseline table')
    return frame


# Beampatterns

@dataclass(frozen=True)
class BeampatternExport:
    grid: pd.DataFrame
    cuts: pd.DataFrame
    correlation: float | None = None


def _digital(beams) -> DigitalBeamformers:
    return effective_digital(beams) if isinstance(beams, HybridBeamformers) else beams


def grid_axes(resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    n_az, n_el = resolution
    if n_az < 2 or n_el < 2:
        raise DimensionError(f'beampattern grid needs at least 2 points per axis, got {resolution}')
    return np.linspace(*AZIMUTH_RANGE_DEG, n_az), np.linspace(*ELEVATION_RANGE_DEG, n_el)


def grid_correlation(first: np.ndarray, second: np.ndarray) -> float:
    return float(np.corrcoef(np.ravel(first), np.ravel(second))[0, 1])


def export_beampattern(schemes: dict, slot: int, legit_geometries, nx: int, ny: int,
                       resolution: tuple[int, int] = (181, 91)) -> BeampatternExport:
    """
    Grids and per-UAV azimuth cuts of P(azimuth, elevation) for each scheme.

    ``schemes`` maps a scheme name to digital or hybrid beamformers of the
    same slot. With exactly two schemes, the Pearson correlation of their
    grids is reported.
    """
    azimuths_deg, elevations_deg = grid_axes(resolution)
    azimuths, elevations = np.deg2rad(azimuths_deg), np.deg2rad(elevations_deg)
    grid_frames, cut_frames, grids = [], [], []

    for scheme, beams in schemes.items():
        rx = covariance(_digital(beams))
        grid = beampattern_grid(rx, azimuths, elevations, nx, ny)
        grids.append(grid)
        az, el = np.meshgrid(azimuths_deg, elevations_deg, indexing='ij')
        grid_frames.append(pd.DataFrame({
            'scheme': scheme,
            'slot': slot,
            'azimuth_deg': az.ravel(),
            'elevation_deg': el.ravel(),
            'power': grid.ravel(),
        }))
        for uav, geom in enumerate(legit_geometries):
            cut = beampattern_grid(rx, azimuths, [geom.elevation_rad], nx, ny)[:, 0]
            cut_frames.append(pd.DataFrame({
                'scheme': scheme,
                'slot': slot,
                'uav': uav,
                'elevation_deg': np.rad2deg(geom.elevation_rad),
                'azimuth_deg': azimuths_deg,
                'power': cut,
            }))

    correlation = grid_correlation(*grids) if len(grids) == 2 else None
    if correlation is not None:
        logger.info('Slot %d beampattern correlation %s: %.4f',
                    slot, ' vs '.join(schemes), correlation)
    return BeampatternExport(
        grid=pd.concat(grid_frames, ignore_index=True)[GRID_COLUMNS],
        cuts=pd.concat(cut_frames, ignore_index=True)[CUT_COLUMNS] if cut_frames
        else pd.DataFrame(columns=CUT_COLUMNS),
        correlation=correlation,
    )


def write_beampattern(export: BeampatternExport, grid_path, cuts_path) -> tuple[Path, Path]:
    return _write(export.grid, grid_path), _write(export.cuts, cuts_path)


def read_beampattern_grid(path) -> pd.DataFrame:
    return _read(path, GRID_COLUMNS)


def read_beampattern_cuts(path) -> pd.DataFrame:
    return _read(path, CUT_COLUMNS)


def grid_matrix(frame: pd.DataFrame, scheme: str) -> np.ndarray:
    """Rebuild the (azimuth, elevation) power matrix of one scheme from a grid file."""
    subset = frame[frame['scheme'] == scheme]
    table = subset.pivot(index='azimuth_deg', columns='elevation_deg', values='power')
    return table.sort_index().sort_index(axis=1).to_numpy()


# Beamformer matrices

def write_beamformers(path, beams: list[DigitalBeamformers]) -> Path:
    path = Path(path)
    if not beams:
        raise ExportError('no beamformers to write')
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path,
             F_opt=np.stack([b.precoders for b in beams]),
             w_opt=np.stack([b.an_vector for b in beams]))
    return path


def read_beamformers(path) -> list[DigitalBeamformers]:
    try:
        with np.load(path) as archive:
            f_opt, w_opt = archive['F_opt'], archive['w_opt']
    except (OSError, KeyError, ValueError) as exc:
        raise ExportError(f'cannot read beamformers from {path}: {exc}') from exc
    if f_opt.ndim == 2:
        f_opt, w_opt = f_opt[None], np.atleast_2d(w_opt)
    if f_opt.ndim != 3 or w_opt.shape != f_opt.shape[:2]:
        raise DimensionError(f'F_opt {f_opt.shape} and w_opt {w_opt.shape} disagree')
    return [DigitalBeamformers(f.astype(complex), w.astype(complex))
            for f, w in zip(f_opt, w_opt)]


def write_hybrids(path, digital: list[DigitalBeamformers], results) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path,
             F_opt=np.stack([b.precoders for b in digital]),
             w_opt=np.stack([b.an_vector for b in digital]),
             analog=np.stack([r.hybrid.analog for r in results]),
             digital=np.stack([r.hybrid.digital for r in results]),
             an_digital=np.stack([r.hybrid.an_digital for r in results]),
             iterations=np.array([r.iterations for r in results]),
             converged=np.array([r.converged for r in results]))
    return path


def read_hybrids(path) -> list[HybridBeamformers]:
    try:
        with np.load(path) as archive:
            analog, digital, an_digital = archive['analog'], archive['digital'], archive['an_digital']
    except (OSError, KeyError, ValueError) as exc:
        raise ExportError(f'cannot read hybrid beamformers from {path}: {exc}') from exc
    return [HybridBeamformers(a, d, an) for a, d, an in zip(analog, digital, an_digital)]


def residual_frame(results) -> pd.DataFrame:
    rows = [{'slot': slot, 'iteration': iteration + 1, 'objective': value}
            for slot, result in enumerate(results)
            for iteration, value in enumerate(result.residual_trace)]
    return pd.DataFrame(rows, columns=RESIDUAL_COLUMNS)


def write_residuals(results, path) -> Path:
    return _write(residual_frame(results), path)


def read_residuals(path) -> pd.DataFrame:
    return _read(path, RESIDUAL_COLUMNS)

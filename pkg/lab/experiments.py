"""
Experiment orchestration shared by the management commands.

Seeds (or slots) fan out to joblib workers that only compute and write their
own files. The calling process then reduces the returned ``SeedResult``
records into ``Run`` rows and the experiment's ``manifest.json``.
"""
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from django.utils import timezone
from joblib import Parallel, delayed
from rest_framework.renderers import JSONRenderer

from lab import exports
from lab.baselines import compare_baselines, matched_controller
from lab.env import SecureIsacEnv
from lab.exceptions import ExportError, LabError, ScenarioError
from lab.hbf import decompose
from lab.metrics import total_power
from lab.models import Experiment, Run
from lab.neural import load_checkpoint
from lab.ppo import HybridSettings, evaluate, policy_controller, train
from lab.scenario import MAX_SEED, ScenarioConfig, scenario_to_dict, spawn_streams
from lab.serializers import ExperimentSerializer

logger = logging.getLogger(__name__)

SEED_RANGE = re.compile(r'^(\d+)\.\.(\d+)$')


@dataclass
class SeedResult:
    seed: int
    algorithm: str
    metrics: dict = field(default_factory=dict)
    checkpoint_path: str = ''
    log_path: str = ''
    wall_clock_seconds: float | None = None
    error: str = ''

    @property
    def ok(self) -> bool:
        return not self.error


def parse_seeds(text: str) -> list[int]:
    """``'0..4'`` (inclusive), ``'0,2,5'`` or a single ``'3'``; seeds are unsigned 64-bit."""
    seeds = []
    for part in str(text).split(','):
        part = part.strip()
        if not part:
            continue
        match = SEED_RANGE.match(part)
        if match:
            first, last = int(match.group(1)), int(match.group(2))
        elif part.isdigit():
            first = last = int(part)
        else:
            raise ScenarioError(f'invalid seed {part!r}')
        if last < first:
            raise ScenarioError(f'empty seed range {part!r}')
        if last > MAX_SEED:
            raise ScenarioError(f'seed {last} exceeds the unsigned 64-bit range')
        seeds.extend(range(first, last + 1))
    if not seeds:
        raise ScenarioError('seeds must not be empty')
    return list(dict.fromkeys(seeds))


def lab_setting(name: str):
    return settings.LAB[name]


def resolve_output_dir(requested: str | None, command: str) -> Path:
    if requested:
        path = Path(requested)
    else:
        stamp = timezone.now().strftime('%Y%m%d-%H%M%S')
        path = Path(lab_setting('OUTPUT_ROOT')) / f'{command}-{stamp}'
    try:
        path.mkdir(parents=True, exist_ok=True)
        marker = path / '.write-check'
        marker.touch()
        marker.unlink()
    except OSError as exc:
        raise ExportError(f'output directory {path} is not writable: {exc}') from exc
    return path


def start_experiment(command: str, config: ScenarioConfig | None, seeds, output_dir: Path,
                     scenario_path: str = '', toggles: dict | None = None,
                     argv: list | None = None) -> Experiment:
    experiment = Experiment.objects.create(
        command=command,
        scenario_path=str(scenario_path or ''),
        scenario=scenario_to_dict(config) if config is not None else {},
        seeds=list(seeds),
        output_dir=str(output_dir),
        exports=toggles or {},
        argv=list(argv or []),
    )
    logger.info('Started %s experiment %s in %s', command, experiment.experiment_id, output_dir)
    return experiment


def run_parallel(function, items, workers: int | None = None) -> list:
    workers = workers or lab_setting('DEFAULT_WORKERS')
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [function(*item) for item in items]
    return Parallel(n_jobs=min(workers, len(items)))(delayed(function)(*item) for item in items)


def record_results(experiment: Experiment, results: list[SeedResult]) -> list[Run]:
    """Single-threaded reducer: one ``Run`` row per returned result."""
    runs = [
        Run(
            experiment=experiment,
            seed=result.seed,
            algorithm=result.algorithm,
            status=Experiment.StatusChoices.COMPLETED if result.ok
            else Experiment.StatusChoices.FAILED,
            metrics=result.metrics if result.ok else {'error': result.error},
            checkpoint_path=result.checkpoint_path,
            log_path=result.log_path,
            wall_clock_seconds=result.wall_clock_seconds,
        )
        for result in results
    ]
    Run.objects.bulk_create(runs)
    return runs


def finish_experiment(experiment: Experiment, error: str = '') -> Path:
    failed = error or experiment.runs.filter(status=Experiment.StatusChoices.FAILED).exists()
    experiment.status = (Experiment.StatusChoices.FAILED if failed
                         else Experiment.StatusChoices.COMPLETED)
    experiment.error = error
    experiment.finished_at = timezone.now()
    experiment.save()
    return write_manifest(experiment)


def write_manifest(experiment: Experiment) -> Path:
    path = Path(experiment.output_dir) / 'manifest.json'
    payload = JSONRenderer().render(ExperimentSerializer(experiment).data,
                                    renderer_context={'indent': 2})
    path.write_bytes(payload)
    return path


def _finite_or_none(value):
    return value if value is not None and np.isfinite(value) else None


def _failed(seed: int, algorithm: str, exc: Exception, started: float) -> SeedResult:
    logger.error('%s seed %d failed: %s', algorithm, seed, exc)
    return SeedResult(seed=seed, algorithm=algorithm, error=str(exc),
                      wall_clock_seconds=time.perf_counter() - started)


# Workers. They never touch the database.

def train_seed(config: ScenarioConfig, seed: int, algorithm: str, output_dir: Path,
               eval_episodes: int = 1) -> SeedResult:
    started = time.perf_counter()
    config = config.replace(seed=seed)
    checkpoint = output_dir / f'{algorithm}_seed{seed}.npz'
    log_path = output_dir / f'{algorithm}_seed{seed}_log.csv'
    try:
        report = train(config, algorithm, checkpoint_path=checkpoint)
        exports.write_training_log(report, log_path)
        evaluation = evaluate(report.policy, SecureIsacEnv(config), eval_episodes, seed=seed)
    except (LabError, ArithmeticError) as exc:
        return _failed(seed, algorithm, exc, started)

    metrics = {
        'episodes': report.episodes,
        'best_return': report.best_return if np.isfinite(report.best_return) else None,
        'final_return': report.episode_returns[-1] if report.episode_returns else None,
        **evaluation.as_dict(),
    }
    return SeedResult(seed=seed, algorithm=algorithm, metrics=metrics,
                      checkpoint_path=str(checkpoint), log_path=str(log_path),
                      wall_clock_seconds=report.wall_clock_seconds)


def eval_seed(config: ScenarioConfig, seed: int, checkpoint: Path, output_dir: Path,
              episodes: int = 1, hybrid: HybridSettings | None = None,
              dump_beams: bool = False, trajectory: bool = False) -> SeedResult:
    started = time.perf_counter()
    config = config.replace(seed=seed)
    algorithm = 'ao' if hybrid is not None else 'ppo'
    trace_path = output_dir / f'trace_seed{seed}.csv'
    try:
        policy, _ = load_checkpoint(checkpoint)
        env = SecureIsacEnv(config)
        beam_log = [] if dump_beams else None
        report = evaluate(policy, env, episodes, seed=seed, hybrid=hybrid, beam_log=beam_log)
        exports.write_trace(env.trace, trace_path)
        if dump_beams:
            exports.write_beamformers(output_dir / f'beams_seed{seed}.npz', beam_log)
        if trajectory:
            exports.write_trajectory(env.trace, config, output_dir / f'trajectory_seed{seed}.csv')
    except (LabError, ArithmeticError, OSError) as exc:
        return _failed(seed, algorithm, exc, started)

    return SeedResult(seed=seed, algorithm=algorithm, metrics=report.as_dict(),
                      checkpoint_path=str(checkpoint), log_path=str(trace_path),
                      wall_clock_seconds=time.perf_counter() - started)


def decompose_file(input_path: Path, output_dir: Path, n_rf: int, power: float | None = None,
                   seed: int = 0, tol: float | None = None, max_iter: int | None = None,
                   workers: int | None = None) -> tuple[Path, Path, list]:
    """
    Factor every slot of a beamformer file; writes the hybrid file and residual trace.

    Without ``power`` each slot is normalized back to its own input power.
    """
    defaults = lab_setting('DECOMPOSITION')
    tol = defaults['tol'] if tol is None else tol
    max_iter = defaults['max_iter'] if max_iter is None else max_iter

    digital = exports.read_beamformers(input_path)
    rngs = spawn_streams(seed)['decompose'].spawn(len(digital))
    results = run_parallel(
        decompose,
        [(beams.precoders, beams.an_vector, n_rf,
          total_power(beams) if power is None else power, tol, max_iter, rng)
         for beams, rng in zip(digital, rngs)],
        workers,
    )
    hybrid_path = exports.write_hybrids(output_dir / 'hybrid.npz', digital, results)
    residual_path = exports.write_residuals(results, output_dir / 'residuals.csv')
    logger.info('Decomposed %d slots from %s into %s', len(results), input_path, hybrid_path)
    return hybrid_path, residual_path, results


def slot_beamformers(config: ScenarioConfig, seed: int, slot: int,
                     checkpoint: Path | None = None):
    """
    Digital beamformers and legitimate geometries of one slot of an evaluation.

    The policy mean drives the episode when a checkpoint is given, the
    matched-beam heuristic otherwise.
    """
    if not 0 <= slot < config.n_slots:
        raise ScenarioError(f'slot {slot} outside 0..{config.n_slots - 1}')
    config = config.replace(seed=seed)
    if checkpoint is not None:
        act = policy_controller(load_checkpoint(checkpoint)[0])
    else:
        act = matched_controller(spawn_streams(seed)['baseline'])

    env = SecureIsacEnv(config)
    _, observation = env.reset(seed=seed)
    while True:
        decoded = act(env, observation)
        if env.state.slot == slot:
            return decoded.beams, env.state.channels.legit_geometries
        observation = env.step(decoded).observation


def beampattern_products(config: ScenarioConfig, seed: int, slot: int, output_dir: Path,
                         checkpoint: Path | None = None, resolution=None,
                         n_rf: int | None = None) -> SeedResult:
    """Digital and decomposed-hybrid beampatterns of one slot, with their correlation."""
    started = time.perf_counter()
    resolution = tuple(resolution or lab_setting('BEAMPATTERN_GRID'))
    defaults = lab_setting('DECOMPOSITION')
    beams, geometries = slot_beamformers(config, seed, slot, checkpoint)
    result = decompose(beams.precoders, beams.an_vector, n_rf or config.n_rf_chains,
                       config.transmit_power_watts, defaults['tol'], defaults['max_iter'],
                       spawn_streams(seed)['decompose'])
    export = exports.export_beampattern(
        {'digital': beams, 'hybrid': result.hybrid}, slot, geometries,
        config.n_antennas_x, config.n_antennas_y, resolution)
    grid_path, cuts_path = exports.write_beampattern(
        export, output_dir / f'beampattern_slot{slot}.csv',
        output_dir / f'beampattern_cuts_slot{slot}.csv')
    return SeedResult(
        seed=seed, algorithm='ao',
        metrics={'slot': slot, 'correlation': _finite_or_none(export.correlation),
                 'iterations': result.iterations, 'converged': result.converged,
                 'residual': result.residual, 'grid': list(resolution),
                 'cuts_path': str(cuts_path)},
        checkpoint_path=str(checkpoint or ''), log_path=str(grid_path),
        wall_clock_seconds=time.perf_counter() - started)


def baseline_products(config: ScenarioConfig, seeds, output_dir: Path, ppo_checkpoint: Path,
                      a2c_checkpoint: Path | None = None, episodes: int = 1,
                      hybrid: HybridSettings | None = None) -> list[SeedResult]:
    table = compare_baselines(config, seeds, ppo_checkpoint, a2c_checkpoint, episodes, hybrid)
    path = exports.write_baseline_table(table, output_dir / 'baselines.csv')
    return [
        SeedResult(seed=min(seeds), algorithm=row['scheme'],
                   metrics={'seeds': list(seeds), 'hybrid': hybrid is not None,
                            **{key: value for key, value in row.items()
                               if key != 'scheme'}},
                   checkpoint_path=str({'ppo': ppo_checkpoint, 'a2c': a2c_checkpoint}.get(
                       row['scheme']) or ''),
                   log_path=str(path))
        for row in table.to_dict('records')
    ]

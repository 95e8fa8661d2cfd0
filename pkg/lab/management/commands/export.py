from pathlib import Path

from django.core.management.base import CommandError

from lab import experiments, exports
from lab.exceptions import MissingCheckpoint, ScenarioError
from lab.experiments import SeedResult
from lab.management.base import RUN_ERRORS, LabCommand

DEFAULT_SLOT = 40


def parse_resolution(text: str) -> tuple[int, int]:
    try:
        n_az, n_el = (int(part) for part in text.lower().split('x'))
    except ValueError as exc:
        raise ScenarioError(f"resolution must look like '181x91', got {text!r}") from exc
    if n_az < 2 or n_el < 2:
        raise ScenarioError('resolution needs at least 2 points per axis')
    return n_az, n_el


class Command(LabCommand):
    help = 'Exports beampattern grids, learning-curve envelopes and UAV trajectories'
    command_name = 'export'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--scenario', help='Scenario YAML document')
        parser.add_argument('--checkpoint', help='Policy checkpoint; the matched-beam heuristic otherwise')
        parser.add_argument('--seed', type=int, help='Override the scenario seed')
        parser.add_argument('--beampattern', action='store_true',
                            help='Digital and hybrid beampattern grids plus azimuth cuts of one slot')
        parser.add_argument('--slot', type=int, help=f'Slot of the beampattern (default {DEFAULT_SLOT})')
        parser.add_argument('--resolution', help="Azimuth x elevation points, e.g. '181x91'")
        parser.add_argument('--nrf', type=int, help='RF chains of the hybrid (default: scenario)')
        parser.add_argument('--curves', nargs='+', metavar='LOG',
                            help='Training logs of several seeds to merge into one envelope')
        parser.add_argument('--trajectory', action='store_true',
                            help='Per-slot UAV positions of an evaluated checkpoint')

    def run(self, **options):
        if not (options['beampattern'] or options['curves'] or options['trajectory']):
            raise CommandError('nothing to export: pass --beampattern, --curves or --trajectory')
        checkpoint = Path(options['checkpoint']) if options['checkpoint'] else None
        if checkpoint is not None and not checkpoint.exists():
            raise MissingCheckpoint(f'checkpoint not found: {checkpoint}')
        if options['trajectory'] and checkpoint is None:
            raise MissingCheckpoint('--trajectory needs --checkpoint')
        resolution = parse_resolution(options['resolution']) if options['resolution'] else None
        config = self.load_config(options, required=bool(options['beampattern'] or options['trajectory']))

        toggles = {
            'beampattern': options['beampattern'],
            'resolution': list(resolution or experiments.lab_setting('BEAMPATTERN_GRID')),
            'curves': bool(options['curves']),
            'trajectory': options['trajectory'],
        }
        seed = self.seed(options, config)
        experiment, output_dir = self.begin(options, config, [seed], toggles)
        try:
            results = self.export(options, config, seed, checkpoint, resolution, output_dir)
        except RUN_ERRORS as exc:
            self.fail(experiment, exc)
        self.complete(experiment, results)

    def export(self, options, config, seed, checkpoint, resolution,
               output_dir) -> list[SeedResult]:
        results = []

        if options['beampattern']:
            slot = options['slot']
            if slot is None:
                slot = min(DEFAULT_SLOT, config.n_slots - 1)
            result = experiments.beampattern_products(
                config, seed, slot, output_dir, checkpoint, resolution, options['nrf'])
            correlation = result.metrics['correlation']
            self.stdout.write(f'slot {slot}: digital/hybrid beampattern correlation '
                              + ('n/a' if correlation is None else f'{correlation:.4f}'))
            results.append(result)

        if options['curves']:
            logs = [exports.read_training_log(path) for path in options['curves']]
            path = exports.write_learning_curve(logs, output_dir / 'learning_curve.csv')
            results.append(SeedResult(seed=seed, algorithm='ppo',
                                      metrics={'logs': list(options['curves'])},
                                      log_path=str(path)))

        if options['trajectory']:
            results.append(experiments.eval_seed(config, seed, checkpoint, output_dir, trajectory=True))
        return results

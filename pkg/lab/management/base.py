import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from lab import experiments
from lab.exceptions import LabError, ScenarioError
from lab.ppo import HybridSettings
from lab.scenario import ScenarioConfig, load_scenario_file

logger = logging.getLogger(__name__)

# Options every Django command carries; they are not part of an experiment.
DJANGO_OPTIONS = {'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color',
                  'force_color', 'skip_checks', 'stdout', 'stderr'}
# Failures of a started experiment that are recorded in its manifest.
RUN_ERRORS = (LabError, OSError, ArithmeticError, ValueError)


class LabCommand(BaseCommand):
    """
    Shared plumbing of the lab subcommands.

    Subclasses implement ``run(**options)``. Library errors become
    ``CommandError`` so the process exits non-zero with the message.
    """
    command_name = ''

    def add_arguments(self, parser):
        parser.add_argument('--output', help='Output directory (default: a new one under LAB_OUTPUT_ROOT)')
        parser.add_argument('--workers', type=int, help='Parallel workers for the seed fan-out')

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except LabError as exc:
            raise CommandError(str(exc)) from exc

    def run(self, **options):
        raise NotImplementedError

    def load_config(self, options, required: bool = True) -> ScenarioConfig | None:
        path = options.get('scenario')
        if not path:
            if required:
                raise ScenarioError('--scenario is required')
            return None
        if not Path(path).exists():
            raise ScenarioError(f'scenario file not found: {path}')
        return load_scenario_file(path)

    def seeds(self, options, config: ScenarioConfig | None) -> list[int]:
        """``--seeds`` when given, else the scenario's own seed (0 without a scenario)."""
        if options.get('seeds'):
            return experiments.parse_seeds(options['seeds'])
        return [config.seed if config is not None else 0]

    def seed(self, options, config: ScenarioConfig | None) -> int:
        if options.get('seed') is not None:
            return experiments.parse_seeds(str(options['seed']))[0]
        return config.seed if config is not None else 0

    def hybrid_settings(self, options, config: ScenarioConfig) -> HybridSettings | None:
        if not options.get('hbf'):
            return None
        n_rf = options.get('nrf') or config.n_rf_chains
        if not 1 <= n_rf <= config.n_antennas:
            raise ScenarioError(f'--nrf must be between 1 and {config.n_antennas}')
        defaults = experiments.lab_setting('DECOMPOSITION')
        return HybridSettings(n_rf, defaults['tol'], defaults['max_iter'])

    def argv(self, options) -> list[str]:
        recorded = [self.command_name]
        for key, value in options.items():
            if key in DJANGO_OPTIONS or value in (None, False):
                continue
            flag = '--' + key.replace('_', '-')
            recorded.append(flag if value is True else f'{flag}={value}')
        return recorded

    def begin(self, options, config: ScenarioConfig | None, seeds, toggles=None):
        output_dir = experiments.resolve_output_dir(options.get('output'), self.command_name)
        experiment = experiments.start_experiment(
            self.command_name, config, seeds, output_dir,
            scenario_path=options.get('scenario') or '',
            toggles=toggles, argv=self.argv(options))
        return experiment, output_dir

    def complete(self, experiment, results) -> None:
        try:
            experiments.record_results(experiment, results)
        except DatabaseError as exc:
            self.fail(experiment, exc)
        failures = [result for result in results if not result.ok]
        manifest = experiments.finish_experiment(
            experiment, error='; '.join(f'seed {r.seed}: {r.error}' for r in failures))
        if failures:
            raise CommandError(f'{len(failures)} of {len(results)} runs failed; see {manifest}')
        self.stdout.write(self.style.SUCCESS(
            f'{self.command_name}: {len(results)} run(s) written to {experiment.output_dir}'))

    def fail(self, experiment, exc: Exception):
        logger.error('%s experiment %s failed: %s', self.command_name, experiment.experiment_id, exc)
        experiments.finish_experiment(experiment, error=str(exc))
        raise CommandError(str(exc)) from exc

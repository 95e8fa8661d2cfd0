from pathlib import Path

from lab import experiments
from lab.exceptions import ScenarioError
from lab.experiments import SeedResult
from lab.management.base import RUN_ERRORS, LabCommand


class Command(LabCommand):
    help = 'Factors per-slot digital beamformers into analog and digital parts'
    command_name = 'decompose'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--input', required=True, help='Beamformer file with F_opt and w_opt (.npz)')
        parser.add_argument('--nrf', type=int, required=True, help='Number of RF chains')
        parser.add_argument('--scenario', help='Take the power budget from this scenario')
        parser.add_argument('--power', type=float, help='Power budget in watts')
        parser.add_argument('--seed', type=int,
                            help='Seed of the analog initialization (default: the scenario seed)')
        parser.add_argument('--tol', type=float)
        parser.add_argument('--max-iter', type=int)

    def run(self, **options):
        source = Path(options['input'])
        if not source.exists():
            raise ScenarioError(f'input file not found: {source}')
        if options['nrf'] < 1:
            raise ScenarioError('--nrf must be at least 1')
        config = self.load_config(options, required=False)
        power = options['power']
        if power is None and config is not None:
            power = config.transmit_power_watts

        seed = self.seed(options, config)
        experiment, output_dir = self.begin(options, config, [seed],
                                            {'nrf': options['nrf'], 'power': power})
        try:
            hybrid_path, residual_path, results = experiments.decompose_file(
                source, output_dir, options['nrf'], power, seed,
                options['tol'], options['max_iter'], options['workers'])
        except RUN_ERRORS as exc:
            self.fail(experiment, exc)

        summary = SeedResult(
            seed=seed, algorithm='ao',
            metrics={
                'slots': len(results),
                'converged': sum(result.converged for result in results),
                'max_iterations': max((result.iterations for result in results), default=0),
                'final_objectives': [result.residual for result in results],
                'hybrid_path': str(hybrid_path),
            },
            log_path=str(residual_path))
        self.complete(experiment, [summary])

from lab import experiments
from lab.management.base import RUN_ERRORS, LabCommand


class Command(LabCommand):
    help = 'Compares PPO, A2C, random beamforming and the matched-beam heuristic per UAV'
    command_name = 'baselines'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--scenario', help='Scenario YAML document')
        parser.add_argument('--checkpoint', required=True, help='Trained PPO checkpoint (.npz)')
        parser.add_argument('--a2c-checkpoint', help='Trained A2C checkpoint (.npz)')
        parser.add_argument('--seeds', help='Seeds (default: the scenario seed)')
        parser.add_argument('--episodes', type=int, default=1)
        parser.add_argument('--hbf', action='store_true',
                            help='Score every scheme through the hybrid decomposition')
        parser.add_argument('--nrf', type=int, help='RF chains for --hbf (default: scenario n_rf_chains)')

    def run(self, **options):
        config = self.load_config(options)
        seeds = self.seeds(options, config)
        hybrid = self.hybrid_settings(options, config)
        experiment, output_dir = self.begin(options, config, seeds, {'hbf': options['hbf']})
        try:
            results = experiments.baseline_products(
                config, seeds, output_dir, options['checkpoint'],
                options['a2c_checkpoint'], options['episodes'], hybrid)
        except RUN_ERRORS as exc:
            self.fail(experiment, exc)

        for result in results:
            self.stdout.write(f'{result.algorithm:>8}: total secrecy {result.metrics["total"]:.4f}')
        self.complete(experiment, results)

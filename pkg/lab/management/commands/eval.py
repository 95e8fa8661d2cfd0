from pathlib import Path

from lab import experiments
from lab.exceptions import MissingCheckpoint
from lab.management.base import LabCommand


class Command(LabCommand):
    help = 'Evaluates a policy checkpoint with its mean action, optionally through the hybrid decomposition'
    command_name = 'eval'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--scenario', help='Scenario YAML document')
        parser.add_argument('--checkpoint', required=True, help='Policy checkpoint (.npz)')
        parser.add_argument('--seeds', help='Seeds (default: the scenario seed)')
        parser.add_argument('--episodes', type=int, default=1)
        parser.add_argument('--hbf', action='store_true',
                            help='Decompose every slot and score the hybrid beamformers')
        parser.add_argument('--nrf', type=int, help='RF chains for --hbf (default: scenario n_rf_chains)')
        parser.add_argument('--dump-beams', action='store_true',
                            help='Write per-slot digital beamformers, the input of decompose')
        parser.add_argument('--trajectory', action='store_true', help='Write UAV trajectories')

    def run(self, **options):
        config = self.load_config(options)
        checkpoint = Path(options['checkpoint'])
        if not checkpoint.exists():
            raise MissingCheckpoint(f'checkpoint not found: {checkpoint}')
        seeds = self.seeds(options, config)

        hybrid = self.hybrid_settings(options, config)
        toggles = {'hbf': options['hbf'], 'dump_beams': options['dump_beams'],
                   'trajectory': options['trajectory']}
        experiment, output_dir = self.begin(options, config, seeds, toggles)

        results = experiments.run_parallel(
            experiments.eval_seed,
            [(config, seed, checkpoint, output_dir, options['episodes'], hybrid,
              options['dump_beams'], options['trajectory']) for seed in seeds],
            options['workers'],
        )
        for result in results:
            if result.ok:
                per_uav = ', '.join(f'{value:.4f}' for value in result.metrics['per_uav_secrecy'])
                self.stdout.write(f'seed {result.seed}: sum secrecy '
                                  f'{result.metrics["mean_sum_secrecy"]:.4f} (per UAV {per_uav})')
        self.complete(experiment, results)

from lab import experiments
from lab.management.base import LabCommand
from lab.ppo import ALGORITHMS


class Command(LabCommand):
    help = 'Trains the beamforming and trajectory policy, one run per seed'
    command_name = 'train'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--scenario', help='Scenario YAML document')
        parser.add_argument('--seeds', help="Seeds: '0..4', '0,2,5' or '3' (default: the scenario seed)")
        parser.add_argument('--algorithm', choices=ALGORITHMS, default='ppo')
        parser.add_argument('--episodes', type=int, help='Override rl_hyperparams.episodes')
        parser.add_argument('--eval-episodes', type=int, default=1)

    def run(self, **options):
        config = self.load_config(options)
        if options['episodes']:
            config = config.with_hyperparams(episodes=options['episodes'])
        seeds = self.seeds(options, config)
        experiment, output_dir = self.begin(options, config, seeds)

        self.stdout.write(f'Training {options["algorithm"]} on seeds {seeds} '
                          f'({config.rl_hyperparams.episodes} episodes each)')
        results = experiments.run_parallel(
            experiments.train_seed,
            [(config, seed, options['algorithm'], output_dir, options['eval_episodes'])
             for seed in seeds],
            options['workers'],
        )
        self.complete(experiment, results)

import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.test import TestCase

from lab import exports
from lab.experiments import parse_seeds, run_parallel
from lab.exceptions import ScenarioError
from lab.models import Experiment, Run
from lab.neural import init_policy, save_checkpoint
from lab.scenario import MAX_SEED, dump_scenario, tiny_scenario
from manage import run_command

TINY = str(Path(settings.BASE_DIR) / 'scenarios' / 'tiny.yaml')


class CommandTestCase(TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.workspace = tempfile.TemporaryDirectory()
        cls.root = Path(cls.workspace.name)
        config = tiny_scenario()
        policy = init_policy(config.observation_dim, config.action_dim, (8,),
                             np.random.default_rng(0))
        cls.checkpoint = cls.root / 'policy.npz'
        save_checkpoint(cls.checkpoint, policy)

    @classmethod
    def tearDownClass(cls):
        cls.workspace.cleanup()
        super().tearDownClass()

    def output(self, name):
        return str(self.root / f'{self._testMethodName}-{name}')

    def call(self, name, **options):
        out = StringIO()
        call_command(name, stdout=out, **options)
        return out.getvalue()

    def manifest(self, output):
        return json.loads((Path(output) / 'manifest.json').read_text())

    def scenario_with_seed(self, seed):
        path = self.root / f'{self._testMethodName}-scenario.yaml'
        path.write_text(dump_scenario(tiny_scenario().replace(seed=seed)))
        return str(path)


class TrainCommandTestCase(CommandTestCase):
    def test_train_two_seeds(self):
        output = self.output('train')
        stdout = self.call('train', scenario=TINY, seeds='0,1', episodes=2, output=output)
        self.assertIn('2 run(s)', stdout)

        for seed in (0, 1):
            self.assertTrue((Path(output) / f'ppo_seed{seed}.npz').exists())
            log = exports.read_training_log(Path(output) / f'ppo_seed{seed}_log.csv')
            self.assertEqual(list(log['episode']), [1, 2])

        experiment = Experiment.objects.get(command='train')
        self.assertEqual(experiment.status, Experiment.StatusChoices.COMPLETED)
        self.assertEqual(experiment.seeds, [0, 1])
        self.assertEqual(experiment.runs.count(), 2)
        self.assertEqual(experiment.argv[0], 'train')
        self.assertNotIn('--stdout', ' '.join(experiment.argv))

        manifest = self.manifest(output)
        self.assertEqual(manifest['experiment_id'], str(experiment.experiment_id))
        self.assertEqual(manifest['scenario']['n_slots'], 20)
        self.assertEqual(manifest['scenario']['rl_hyperparams']['episodes'], 2)
        self.assertEqual(len(manifest['runs']), 2)
        self.assertEqual(manifest['runs'][0]['metrics']['episodes'], 2)

    def test_a2c(self):
        output = self.output('a2c')
        self.call('train', scenario=TINY, algorithm='a2c', episodes=1, output=output)
        self.assertTrue((Path(output) / 'a2c_seed0.npz').exists())
        self.assertEqual(Run.objects.get().algorithm, 'a2c')

    def test_missing_scenario(self):
        with self.assertRaisesMessage(CommandError, 'scenario file not found'):
            self.call('train', scenario=str(self.root / 'absent.yaml'), output=self.output('x'))
        with self.assertRaisesMessage(CommandError, '--scenario is required'):
            self.call('train', output=self.output('y'))
        self.assertFalse(Experiment.objects.exists())

    def test_invalid_seeds(self):
        with self.assertRaises(CommandError):
            self.call('train', scenario=TINY, seeds='a..b', output=self.output('seeds'))

    def test_default_seed_comes_from_the_scenario(self):
        output = self.output('train')
        self.call('train', scenario=self.scenario_with_seed(7), episodes=1, output=output)
        self.assertTrue((Path(output) / 'ppo_seed7.npz').exists())
        self.assertEqual(Experiment.objects.get().seeds, [7])
        self.assertEqual(Run.objects.get().seed, 7)

    def test_seed_above_the_signed_range(self):
        output = self.output('train')
        self.call('train', scenario=TINY, seeds=str(2 ** 63), episodes=1, output=output)
        self.assertEqual(Run.objects.get().seed, 2 ** 63)
        self.assertEqual(Experiment.objects.get().status, Experiment.StatusChoices.COMPLETED)
        self.assertEqual(self.manifest(output)['runs'][0]['seed'], 2 ** 63)

    def test_failed_run_records_mark_the_experiment_failed(self):
        output = self.output('train')
        with mock.patch('lab.experiments.record_results',
                        side_effect=DatabaseError('integer overflow')):
            with self.assertRaisesMessage(CommandError, 'integer overflow'):
                self.call('train', scenario=TINY, episodes=1, output=output)
        self.assertEqual(Experiment.objects.get().status, Experiment.StatusChoices.FAILED)
        self.assertIn('integer overflow', self.manifest(output)['error'])


class EvalCommandTestCase(CommandTestCase):
    def test_eval_with_products(self):
        output = self.output('eval')
        stdout = self.call('eval', scenario=TINY, checkpoint=str(self.checkpoint), seeds='0..1',
                           hbf=True, dump_beams=True, trajectory=True, output=output)
        self.assertIn('seed 1: sum secrecy', stdout)

        trace = exports.read_trace(Path(output) / 'trace_seed0.csv')
        self.assertEqual(len(trace), 20)
        beams = exports.read_beamformers(Path(output) / 'beams_seed0.npz')
        self.assertEqual(len(beams), 20)
        trajectory = exports.read_trajectory(Path(output) / 'trajectory_seed1.csv')
        self.assertEqual(list(trajectory['role']).count('legit'), 20)

        runs = Run.objects.filter(experiment__command='eval')
        self.assertEqual(runs.count(), 2)
        self.assertTrue(all(run.algorithm == 'ao' and run.metrics['hybrid'] for run in runs))
        self.assertEqual(self.manifest(output)['exports'],
                         {'hbf': True, 'dump_beams': True, 'trajectory': True})

    def test_missing_checkpoint(self):
        with self.assertRaisesMessage(CommandError, 'checkpoint not found'):
            self.call('eval', scenario=TINY, checkpoint=str(self.root / 'absent.npz'),
                      output=self.output('eval'))


class DecomposeCommandTestCase(CommandTestCase):
    def beams_file(self):
        output = self.output('beams')
        self.call('eval', scenario=TINY, checkpoint=str(self.checkpoint), dump_beams=True,
                  output=output)
        return Path(output) / 'beams_seed0.npz'

    def test_decompose(self):
        source = self.beams_file()
        output = self.output('decompose')
        self.call('decompose', input=str(source), nrf=2, scenario=TINY, output=output)

        hybrids = exports.read_hybrids(Path(output) / 'hybrid.npz')
        self.assertEqual(len(hybrids), 20)
        self.assertEqual(hybrids[0].analog.shape, (4, 2))
        np.testing.assert_allclose(np.abs(hybrids[0].analog), 0.5)
        residuals = exports.read_residuals(Path(output) / 'residuals.csv')
        self.assertEqual(sorted(set(residuals['slot'])), list(range(20)))

        run = Run.objects.get(experiment__command='decompose')
        self.assertEqual(run.metrics['slots'], 20)
        self.assertEqual(self.manifest(output)['exports'], {'nrf': 2, 'power': 10.0})

    def test_inconsistent_input_marks_the_experiment_failed(self):
        source = self.root / 'bad.npz'
        np.savez(source, F_opt=np.ones((2, 4, 1)), w_opt=np.ones((2, 3)))
        output = self.output('decompose')
        with self.assertRaises(CommandError):
            self.call('decompose', input=str(source), nrf=2, output=output)
        experiment = Experiment.objects.get(command='decompose')
        self.assertEqual(experiment.status, Experiment.StatusChoices.FAILED)
        self.assertIn('disagree', self.manifest(output)['error'])

    def test_invalid_rf_chain_count(self):
        with self.assertRaisesMessage(CommandError, '--nrf must be at least 1'):
            self.call('decompose', input=str(self.checkpoint), nrf=0, output=self.output('x'))


class BaselinesCommandTestCase(CommandTestCase):
    def test_baselines(self):
        output = self.output('baselines')
        stdout = self.call('baselines', scenario=TINY, checkpoint=str(self.checkpoint),
                           seeds='0,1', output=output)
        self.assertIn('matched: total secrecy', stdout)

        table = exports.read_baseline_table(Path(output) / 'baselines.csv')
        self.assertEqual(list(table['scheme']), ['ppo', 'random', 'matched'])
        self.assertEqual(list(table.columns), ['scheme', 'uav_1', 'total'])
        algorithms = set(Run.objects.values_list('algorithm', flat=True))
        self.assertEqual(algorithms, {'ppo', 'random', 'matched'})

    def test_missing_checkpoint_fails_the_experiment(self):
        with self.assertRaises(CommandError):
            self.call('baselines', scenario=TINY, checkpoint=str(self.root / 'absent.npz'),
                      output=self.output('baselines'))
        self.assertEqual(Experiment.objects.get().status, Experiment.StatusChoices.FAILED)

    def test_hybrid_scoring(self):
        output = self.output('baselines')
        self.call('baselines', scenario=TINY, checkpoint=str(self.checkpoint), hbf=True, nrf=1,
                  output=output)
        table = exports.read_baseline_table(Path(output) / 'baselines.csv')
        self.assertTrue((table[['uav_1', 'total']] >= 0.0).all().all())
        self.assertTrue(all(run.metrics['hybrid'] for run in Run.objects.all()))
        self.assertEqual(self.manifest(output)['exports'], {'hbf': True})

    def test_rf_chains_beyond_the_array(self):
        with self.assertRaisesMessage(CommandError, '--nrf must be between 1 and 4'):
            self.call('baselines', scenario=TINY, checkpoint=str(self.checkpoint), hbf=True,
                      nrf=5, output=self.output('x'))


class ExportCommandTestCase(CommandTestCase):
    def test_beampattern(self):
        output = self.output('export')
        stdout = self.call('export', scenario=TINY, beampattern=True, resolution='19x10',
                           output=output)
        self.assertIn('slot 19', stdout)
        grid = exports.read_beampattern_grid(Path(output) / 'beampattern_slot19.csv')
        self.assertEqual(set(grid['scheme']), {'digital', 'hybrid'})
        self.assertEqual(len(grid), 2 * 19 * 10)
        cuts = exports.read_beampattern_cuts(Path(output) / 'beampattern_cuts_slot19.csv')
        self.assertEqual(len(cuts), 2 * 19)

    def test_curves_and_trajectory(self):
        logs = []
        for seed in (0, 1):
            output = self.output(f'train{seed}')
            self.call('train', scenario=TINY, seeds=str(seed), episodes=2, output=output)
            logs.append(str(Path(output) / f'ppo_seed{seed}_log.csv'))

        output = self.output('export')
        self.call('export', scenario=TINY, curves=logs, trajectory=True,
                  checkpoint=str(self.checkpoint), output=output)
        curve = exports.read_learning_curve(Path(output) / 'learning_curve.csv')
        self.assertEqual(list(curve['seeds']), [2, 2])
        self.assertTrue((Path(output) / 'trajectory_seed0.csv').exists())

    def test_nothing_to_export(self):
        with self.assertRaisesMessage(CommandError, 'nothing to export'):
            self.call('export', output=self.output('x'))

    def test_trajectory_needs_a_checkpoint(self):
        with self.assertRaises(CommandError):
            self.call('export', scenario=TINY, trajectory=True, output=self.output('x'))

    def test_slot_out_of_range(self):
        with self.assertRaises(CommandError):
            self.call('export', scenario=TINY, beampattern=True, slot=20, resolution='5x5',
                      output=self.output('x'))

    def test_seed_defaults_to_the_scenario(self):
        scenario = self.scenario_with_seed(7)
        self.call('export', scenario=scenario, beampattern=True, resolution='5x5',
                  output=self.output('default'))
        first = Run.objects.get()
        self.assertEqual(first.seed, 7)

        self.call('export', scenario=scenario, beampattern=True, resolution='5x5', seed=3,
                  output=self.output('override'))
        self.assertEqual(Run.objects.exclude(pk=first.pk).get().seed, 3)


class EntryPointTestCase(CommandTestCase):
    def test_exit_status(self):
        status = run_command(['export', '--curves', str(self.root / 'absent.csv'),
                              '--output', self.output('x')])
        self.assertEqual(status, 1)
        self.assertEqual(run_command(['help', 'train']), 0)

    def test_parse_seeds(self):
        self.assertEqual(parse_seeds('0..4'), [0, 1, 2, 3, 4])
        self.assertEqual(parse_seeds('0,2,5'), [0, 2, 5])
        self.assertEqual(parse_seeds('3'), [3])
        self.assertEqual(parse_seeds('1,1..2'), [1, 2])
        self.assertEqual(parse_seeds(str(MAX_SEED)), [MAX_SEED])
        with self.assertRaisesMessage(ScenarioError, 'unsigned 64-bit'):
            parse_seeds(str(MAX_SEED + 1))
        for text in ('', '4..2', 'x', '-1'):
            with self.subTest(text=text), self.assertRaises(ScenarioError):
                parse_seeds(text)

    def test_run_parallel_serial_path(self):
        self.assertEqual(run_parallel(pow, [(2, 3), (3, 2)], workers=1), [8, 9])

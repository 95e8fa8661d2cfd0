import uuid

from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models
from django.utils.functional import cached_property

from lab.scenario import MAX_SEED


class SeedField(models.BigIntegerField):
    """
    Unsigned 64-bit seed stored shifted into the signed 64-bit column range.

    The shift is monotonic, so ordering and ``lt``/``gt`` lookups still compare seeds.
    """
    OFFSET = 2 ** 63

    @cached_property
    def validators(self):
        return [MinValueValidator(0), MaxValueValidator(MAX_SEED), *self._validators]

    def get_prep_value(self, value):
        value = super().get_prep_value(value)
        return None if value is None else value - self.OFFSET

    def from_db_value(self, value, expression, connection):
        return None if value is None else value + self.OFFSET


class Experiment(models.Model):
    """The manifest of one command invocation: resolved config, seeds and products."""

    class CommandChoices(models.TextChoices):
        TRAIN = ('train', 'Train')
        EVAL = ('eval', 'Evaluate')
        DECOMPOSE = ('decompose', 'Decompose')
        BASELINES = ('baselines', 'Baselines')
        EXPORT = ('export', 'Export')

    class StatusChoices(models.TextChoices):
        RUNNING = ('running', 'Running')
        COMPLETED = ('completed', 'Completed')
        FAILED = ('failed', 'Failed')

    experiment_id = models.UUIDField(primary_key=True, default=uuid.uuid4)
    command = models.CharField(max_length=16, choices=CommandChoices.choices)
    scenario_path = models.CharField(max_length=500, blank=True)
    scenario = models.JSONField(default=dict)
    seeds = models.JSONField(default=list)
    output_dir = models.CharField(max_length=500)
    exports = models.JSONField(default=dict, blank=True)
    argv = models.JSONField(default=list, blank=True)
    status = models.CharField(
        max_length=10, choices=StatusChoices.choices, default=StatusChoices.RUNNING)
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    def __str__(self) -> str:
        return f'{self.command} {self.experiment_id} ({self.status})'


class Run(models.Model):
    class AlgorithmChoices(models.TextChoices):
        PPO = ('ppo', 'PPO')
        A2C = ('a2c', 'A2C')
        RANDOM = ('random', 'Random beamforming')
        MATCHED = ('matched', 'Matched-beam heuristic')
        AO = ('ao', 'Hybrid decomposition')

    experiment = models.ForeignKey(
        Experiment, on_delete=models.CASCADE, related_name='runs')
    seed = SeedField()
    algorithm = models.CharField(max_length=10, choices=AlgorithmChoices.choices)
    status = models.CharField(
        max_length=10, choices=Experiment.StatusChoices.choices,
        default=Experiment.StatusChoices.COMPLETED)
    metrics = models.JSONField(default=dict, blank=True)
    checkpoint_path = models.CharField(max_length=500, blank=True)
    log_path = models.CharField(max_length=500, blank=True)
    wall_clock_seconds = models.FloatField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ('experiment', 'algorithm', 'seed')

    @property
    def mean_sum_secrecy(self) -> float | None:
        return self.metrics.get('mean_sum_secrecy')

    def __str__(self) -> str:
        return f'{self.algorithm} seed {self.seed} in {self.experiment.experiment_id}'

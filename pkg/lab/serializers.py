import math

from rest_framework import serializers

from lab.models import Experiment, Run
from lab.scenario import (
    DEFAULT_CARRIER_HZ,
    DEFAULT_OBSERVATION_CHANNEL_SCALE,
    DEFAULT_OBSERVATION_POSITION_SCALE,
    DEFAULT_QOS_MIN_RATE,
    DEFAULT_V_MAX_MPS,
    MAX_SEED,
    RLHyperparams,
    ScenarioConfig,
)

_RL_DEFAULTS = RLHyperparams()


class PositionField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 3)
        kwargs.setdefault('max_length', 3)
        super().__init__(**kwargs)


class ScalarOrListField(serializers.Field):
    """Accepts one number or a list of numbers; always yields a list."""

    default_error_messages = {
        'invalid': 'Expected a number or a list of numbers.',
    }

    def to_internal_value(self, data):
        values = data if isinstance(data, (list, tuple)) else [data]
        try:
            return [float(value) for value in values]
        except (TypeError, ValueError):
            self.fail('invalid')

    def to_representation(self, value):
        return list(value)


class RLHyperparamsSerializer(serializers.Serializer):
    actor_lr = serializers.FloatField(min_value=0.0, default=_RL_DEFAULTS.actor_lr)
    critic_lr = serializers.FloatField(min_value=0.0, default=_RL_DEFAULTS.critic_lr)
    gamma = serializers.FloatField(min_value=0.0, max_value=1.0, default=_RL_DEFAULTS.gamma)
    clip = serializers.FloatField(min_value=0.0, default=_RL_DEFAULTS.clip)
    gae_lambda = serializers.FloatField(
        min_value=0.0, max_value=1.0, default=_RL_DEFAULTS.gae_lambda)
    batch_size = serializers.IntegerField(min_value=1, default=_RL_DEFAULTS.batch_size)
    minibatch_size = serializers.IntegerField(min_value=1, default=_RL_DEFAULTS.minibatch_size)
    episodes = serializers.IntegerField(min_value=0, default=_RL_DEFAULTS.episodes)
    hidden_sizes = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=list(_RL_DEFAULTS.hidden_sizes))
    update_epochs = serializers.IntegerField(min_value=1, default=_RL_DEFAULTS.update_epochs)
    entropy_coef = serializers.FloatField(min_value=0.0, default=_RL_DEFAULTS.entropy_coef)
    max_grad_norm = serializers.FloatField(
        min_value=0.0, allow_null=True, default=_RL_DEFAULTS.max_grad_norm)
    log_std_init = serializers.FloatField(
        min_value=-20.0, max_value=2.0, default=_RL_DEFAULTS.log_std_init)

    def validate(self, data):
        if data['minibatch_size'] > data['batch_size']:
            raise serializers.ValidationError('minibatch_size must not exceed batch_size')
        return data

    def create(self, validated_data) -> RLHyperparams:
        validated_data['hidden_sizes'] = tuple(validated_data['hidden_sizes'])
        return RLHyperparams(**validated_data)


class ScenarioSerializer(serializers.Serializer):
    n_antennas_x = serializers.IntegerField(min_value=1)
    n_antennas_y = serializers.IntegerField(min_value=1)
    n_rf_chains = serializers.IntegerField(min_value=1)
    n_legit = serializers.IntegerField(min_value=1)
    n_eves = serializers.IntegerField(min_value=1)
    transmit_power_watts = serializers.FloatField()
    pathloss_exponent = serializers.FloatField()
    carrier_hz = serializers.FloatField(default=DEFAULT_CARRIER_HZ)
    slot_seconds = serializers.FloatField()
    n_slots = serializers.IntegerField(min_value=1)
    duration_seconds = serializers.FloatField(required=False, write_only=True)
    noise_power_watts = serializers.FloatField()
    sensing_threshold = ScalarOrListField()
    sensing_penalty_weight = serializers.FloatField(min_value=0.0)
    qos_min_rate = serializers.FloatField(min_value=0.0, default=DEFAULT_QOS_MIN_RATE)
    v_max_mps = serializers.FloatField(default=DEFAULT_V_MAX_MPS)
    legit_init_positions = serializers.ListField(child=PositionField(), min_length=1)
    eve_positions = serializers.ListField(child=PositionField(), min_length=1)
    base_position = PositionField(default=[0.0, 0.0, 0.0])
    rl_hyperparams = RLHyperparamsSerializer(required=False)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)
    observation_channel_scale = serializers.FloatField(
        default=DEFAULT_OBSERVATION_CHANNEL_SCALE)
    observation_position_scale = serializers.FloatField(
        default=DEFAULT_OBSERVATION_POSITION_SCALE)
    legit_noise_watts = serializers.ListField(
        child=serializers.FloatField(), required=False, allow_null=True, default=None)
    eve_noise_watts = serializers.ListField(
        child=serializers.FloatField(), required=False, allow_null=True, default=None)

    def _validate_positive(self, value: float, name: str) -> float:
        if not value > 0 or not math.isfinite(value):
            raise serializers.ValidationError(f'{name} must be a positive finite number')
        return value

    def validate_transmit_power_watts(self, value: float) -> float:
        return self._validate_positive(value, 'Transmit power')

    def validate_pathloss_exponent(self, value: float) -> float:
        return self._validate_positive(value, 'Path-loss exponent')

    def validate_carrier_hz(self, value: float) -> float:
        return self._validate_positive(value, 'Carrier frequency')

    def validate_slot_seconds(self, value: float) -> float:
        return self._validate_positive(value, 'Slot duration')

    def validate_noise_power_watts(self, value: float) -> float:
        return self._validate_positive(value, 'Noise power')

    def validate_v_max_mps(self, value: float) -> float:
        return self._validate_positive(value, 'Maximum velocity')

    def validate_observation_channel_scale(self, value: float) -> float:
        return self._validate_positive(value, 'Observation channel scale')

    def validate_observation_position_scale(self, value: float) -> float:
        return self._validate_positive(value, 'Observation position scale')

    def validate_sensing_threshold(self, value: list[float]) -> list[float]:
        if any(not threshold > 0 for threshold in value):
            raise serializers.ValidationError('Sensing thresholds must be positive')
        return value

    def validate(self, data):
        n_legit, n_rf = data['n_legit'], data['n_rf_chains']
        n_antennas = data['n_antennas_x'] * data['n_antennas_y']

        if n_legit > n_rf:
            raise serializers.ValidationError('L ≤ N_RF violated')
        if n_rf > n_antennas:
            raise serializers.ValidationError('N_RF ≤ N_t violated')

        if len(data['legit_init_positions']) != n_legit:
            raise serializers.ValidationError('len(legit_init_positions) = L violated')
        if len(data['eve_positions']) != data['n_eves']:
            raise serializers.ValidationError('len(eve_positions) = E violated')
        for position in (*data['legit_init_positions'], *data['eve_positions']):
            if position[2] <= 0:
                raise serializers.ValidationError('UAV altitudes must be > 0')

        thresholds = data['sensing_threshold']
        if len(thresholds) == 1:
            thresholds = thresholds * data['n_eves']
        if len(thresholds) != data['n_eves']:
            raise serializers.ValidationError('one sensing threshold per eavesdropper required')
        data['sensing_threshold'] = thresholds

        duration = data.pop('duration_seconds', None)
        if duration is not None:
            expected = data['n_slots'] * data['slot_seconds']
            if not math.isclose(duration, expected, rel_tol=1e-9):
                raise serializers.ValidationError('n_slots · slot_seconds = T violated')

        for key, count in (('legit_noise_watts', n_legit), ('eve_noise_watts', data['n_eves'])):
            overrides = data.get(key)
            if overrides is not None and (
                    len(overrides) != count or any(not value > 0 for value in overrides)):
                raise serializers.ValidationError(
                    f'{key} needs {count} positive entries')

        return data

    def create(self, validated_data) -> ScenarioConfig:
        rl_data = validated_data.pop('rl_hyperparams', None)
        rl_serializer = RLHyperparamsSerializer(data=rl_data or {})
        rl_serializer.is_valid(raise_exception=True)

        def as_tuple(value):
            return None if value is None else tuple(value)

        return ScenarioConfig(
            **{key: value for key, value in validated_data.items()
               if key not in {'legit_init_positions', 'eve_positions', 'base_position',
                              'sensing_threshold', 'legit_noise_watts', 'eve_noise_watts'}},
            legit_init_positions=tuple(tuple(p) for p in validated_data['legit_init_positions']),
            eve_positions=tuple(tuple(p) for p in validated_data['eve_positions']),
            base_position=tuple(validated_data['base_position']),
            sensing_threshold=tuple(validated_data['sensing_threshold']),
            legit_noise_watts=as_tuple(validated_data.get('legit_noise_watts')),
            eve_noise_watts=as_tuple(validated_data.get('eve_noise_watts')),
            rl_hyperparams=rl_serializer.save(),
        )


class RunSerializer(serializers.ModelSerializer):
    experiment_id = serializers.UUIDField(source='experiment.experiment_id', read_only=True)

    class Meta:
        model = Run
        fields = ('id', 'experiment_id', 'seed', 'algorithm', 'status', 'metrics',
                  'mean_sum_secrecy', 'checkpoint_path', 'log_path',
                  'wall_clock_seconds', 'created_at')


class ExperimentSerializer(serializers.ModelSerializer):
    experiment_id = serializers.UUIDField(read_only=True)
    runs = RunSerializer(many=True, read_only=True)
    run_count = serializers.SerializerMethodField(method_name='get_run_count')

    def get_run_count(self, experiment) -> int:
        return experiment.runs.count()

    class Meta:
        model = Experiment
        fields = ('experiment_id', 'command', 'scenario_path', 'scenario', 'seeds',
                  'output_dir', 'exports', 'argv', 'status', 'error', 'created_at',
                  'finished_at', 'run_count', 'runs')


class ExperimentSummarySerializer(serializers.Serializer):
    experiment = ExperimentSerializer()
    best_run = RunSerializer(allow_null=True)
    completed_runs = serializers.IntegerField()
    max_sum_secrecy = serializers.FloatField(allow_null=True)
    min_sum_secrecy = serializers.FloatField(allow_null=True)

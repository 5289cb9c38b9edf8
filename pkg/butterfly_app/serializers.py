from django.conf import settings
from rest_framework import serializers

from butterfly_app.exceptions import ConfigurationError
from butterfly_app.experiments import ExperimentConfig
from butterfly_app.idbf import SAMPLING_STRATEGIES
from butterfly_app.kernels import SCENARIO_MODES, SPHERE_SOURCES
from butterfly_app.models import BenchmarkRun

EXPERIMENT_KERNELS = ('fio2d', 'nufft', 'helmholtz')


# ----------------------------
# Experiment configuration input
# ----------------------------
class ExperimentConfigSerializer(serializers.Serializer):
    """
    Validates an experiment configuration before any numerical work starts.
    """
    kernel = serializers.ChoiceField(choices=EXPERIMENT_KERNELS)
    n = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None,
                                 help_text="Points per dimension (fio2d: n² grid, nufft: n³ jittered grid points).")
    mesh_level = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None,
                                          help_text="Icosahedron refinement level (helmholtz).")
    rank_phase = serializers.IntegerField(min_value=1, default=20)
    rank_bf = serializers.IntegerField(min_value=1, default=30)
    tau = serializers.FloatField(required=False, allow_null=True, default=None)
    oversample_q = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    oversample_t = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    leaf_size = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    eps = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    seed = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    scenario = serializers.ChoiceField(choices=sorted(SCENARIO_MODES), default=2)
    escalate_tau = serializers.BooleanField(default=True)
    sampling = serializers.ChoiceField(choices=SAMPLING_STRATEGIES, default='chebyshev')
    sphere_source = serializers.ChoiceField(choices=SPHERE_SOURCES, default='faces')

    def validate(self, data):
        """Cross-field rules: geometry parameter per kernel, τ range, rank against leaf and problem size."""
        kernel = data['kernel']
        if kernel == 'helmholtz':
            if data.get('mesh_level') is None:
                raise serializers.ValidationError({'mesh_level': "The helmholtz kernel needs a mesh level."})
        elif data.get('n') is None:
            raise serializers.ValidationError({'n': f"The {kernel} kernel needs a grid size n."})

        tau = data.get('tau')
        if tau is not None and not 0 < tau <= 0.5:
            raise serializers.ValidationError({'tau': "tau must lie in (0, 1/2]."})
        if data.get('eps') == 0:
            raise serializers.ValidationError({'eps': "eps must be positive."})

        dim = 2 if kernel == 'fio2d' else 3
        leaf_size = data.get('leaf_size') or 8 ** dim
        if leaf_size < data['rank_bf']:
            raise serializers.ValidationError({'leaf_size': f"Leaf size {leaf_size} is smaller than rank_bf."})

        size = self._problem_size(data)
        q = data.get('oversample_q') or settings.PHASE_OVERSAMPLE_Q
        if data['rank_bf'] > size:
            raise serializers.ValidationError({'rank_bf': f"rank_bf exceeds the problem size {size}."})
        if data['scenario'] != 1 and data['rank_phase'] * q > size:
            raise serializers.ValidationError(
                {'rank_phase': f"rank_phase × oversample_q exceeds the problem size {size}."}
            )
        return data

    @staticmethod
    def _problem_size(data) -> int:
        kernel = data['kernel']
        if kernel == 'fio2d':
            return data['n'] ** 2
        if kernel == 'nufft':
            return data['n'] ** 3
        return 10 * 4 ** data['mesh_level']

    def to_config(self) -> ExperimentConfig:
        return ExperimentConfig(**self.validated_data)


def parse_config(data: dict) -> ExperimentConfig:
    """Validates `data` and returns the config, raising ConfigurationError on any violation."""
    serializer = ExperimentConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigurationError(f"Invalid experiment configuration: {dict(serializer.errors)}")
    return serializer.to_config()


# ----------------------------
# Report output
# ----------------------------
class MetricsReportSerializer(serializers.Serializer):
    """
    Stable, versioned report layout for JSON and CSV output.
    """
    schema_version = serializers.CharField()
    kernel = serializers.CharField()
    scenario = serializers.IntegerField()
    n = serializers.IntegerField(allow_null=True)
    mesh_level = serializers.IntegerField(allow_null=True)
    rows = serializers.IntegerField()
    cols = serializers.IntegerField()
    rank_phase = serializers.IntegerField()
    rank_bf = serializers.IntegerField()
    seed = serializers.IntegerField()
    eps_b = serializers.FloatField()
    eps_K = serializers.FloatField(allow_null=True)
    t_path = serializers.FloatField()
    t_rec = serializers.FloatField()
    t_fac = serializers.FloatField()
    t_app = serializers.FloatField()
    t_d = serializers.FloatField()
    t_d_sample = serializers.FloatField()
    td_ratio = serializers.FloatField()
    nnz = serializers.IntegerField()
    nnz_per_factor = serializers.ListField(child=serializers.IntegerField())
    factor_count = serializers.IntegerField()
    depth = serializers.IntegerField()
    middle_level = serializers.IntegerField()
    max_rank = serializers.IntegerField()
    max_coefficient = serializers.FloatField()
    tau = serializers.FloatField(allow_null=True)
    row_discontinuities = serializers.IntegerField()
    col_discontinuities = serializers.IntegerField()
    ill_conditioned = serializers.BooleanField()


class BenchmarkRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = BenchmarkRun
        fields = (
            'id',
            'kernel',
            'scenario',
            'size',
            'eps_b',
            'eps_k',
            't_path',
            't_rec',
            't_fac',
            't_app',
            'nnz',
            'config',
            'created_at',
        )
        read_only_fields = fields

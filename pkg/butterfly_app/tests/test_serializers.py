from django.conf import settings
from django.test import SimpleTestCase

from butterfly_app.exceptions import ConfigurationError
from butterfly_app.experiments import MetricsReport
from butterfly_app.serializers import ExperimentConfigSerializer, MetricsReportSerializer, parse_config

# --- Test Constants ---
VALID_FIO = {'kernel': 'fio2d', 'n': 16, 'scenario': 1, 'rank_bf': 16}


class ExperimentConfigSerializerTest(SimpleTestCase):

    def assert_rejected(self, data, field):
        serializer = ExperimentConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn(field, serializer.errors)

    def test_valid_configuration(self):
        """A complete FIO configuration becomes an experiment config with defaults kept unset."""
        serializer = ExperimentConfigSerializer(data=VALID_FIO)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        config = serializer.to_config()
        self.assertEqual((config.kernel, config.n, config.scenario), ('fio2d', 16, 1))
        self.assertEqual(config.rank_phase, 20)
        self.assertIsNone(config.tau)
        self.assertTrue(config.escalate_tau)

    def test_geometry_parameter_required(self):
        """Helmholtz needs a mesh level; grid kernels need n."""
        self.assert_rejected({'kernel': 'helmholtz'}, 'mesh_level')
        self.assert_rejected({'kernel': 'nufft'}, 'n')

    def test_unknown_kernel(self):
        """Only the built-in experiment kernels are accepted."""
        self.assert_rejected({'kernel': 'custom-lowrank', 'n': 4}, 'kernel')

    def test_tau_range(self):
        """tau must lie in (0, 1/2]."""
        self.assert_rejected({**VALID_FIO, 'tau': 0.7}, 'tau')
        self.assert_rejected({**VALID_FIO, 'tau': 0.0}, 'tau')

    def test_eps_positive(self):
        """A zero tolerance is rejected."""
        self.assert_rejected({**VALID_FIO, 'eps': 0.0}, 'eps')

    def test_leaf_smaller_than_rank(self):
        """The leaf size must hold at least rank_bf points."""
        self.assert_rejected({**VALID_FIO, 'leaf_size': 10}, 'leaf_size')

    def test_ranks_against_problem_size(self):
        """rank_bf and rank_phase * q are bounded by the number of points."""
        self.assert_rejected({'kernel': 'nufft', 'n': 2, 'rank_bf': 30}, 'rank_bf')
        self.assert_rejected({'kernel': 'nufft', 'n': 4, 'rank_bf': 8, 'rank_phase': 40}, 'rank_phase')
        serializer = ExperimentConfigSerializer(data={'kernel': 'nufft', 'n': 4, 'rank_bf': 8, 'rank_phase': 40, 'scenario': 1})
        self.assertTrue(serializer.is_valid(), serializer.errors)

    def test_validation_needs_no_api_settings(self):
        """Validation runs on the serializers alone, with no API settings configured."""
        self.assertFalse(hasattr(settings, 'REST_FRAMEWORK'))
        self.assertTrue(ExperimentConfigSerializer(data=VALID_FIO).is_valid())

    def test_parse_config_raises_configuration_error(self):
        """Invalid input surfaces as a configuration error naming the field."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config({'kernel': 'fio2d', 'n': 16, 'scenario': 4})
        self.assertIn('scenario', str(ctx.exception))


class MetricsReportSerializerTest(SimpleTestCase):

    def test_report_layout(self):
        """The report keeps every metric and the schema version."""
        report = MetricsReport(kernel='nufft', scenario=2, n=4, mesh_level=None, rows=64, cols=64,
                               rank_phase=4, rank_bf=30, seed=0, eps_b=1e-7, eps_K=2e-12, nnz_per_factor=[10, 20, 10])
        data = MetricsReportSerializer(report).data
        self.assertEqual(data['schema_version'], report.schema_version)
        self.assertEqual(data['eps_K'], 2e-12)
        self.assertEqual(data['nnz_per_factor'], [10, 20, 10])
        self.assertIsNone(data['mesh_level'])
        self.assertEqual(set(data), set(report.to_dict()))

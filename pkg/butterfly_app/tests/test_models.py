from django.test import TestCase

from butterfly_app.experiments import ExperimentConfig, MetricsReport
from butterfly_app.models import BenchmarkRun
from butterfly_app.serializers import BenchmarkRunSerializer

# --- Test Constants ---
CONFIG = ExperimentConfig(kernel='fio2d', n=8, scenario=1, rank_bf=16, leaf_size=64)


def make_report(kernel='fio2d', eps_b=2.5e-8, eps_K=None):
    return MetricsReport(kernel=kernel, scenario=1, n=8, mesh_level=None, rows=64, cols=64,
                         rank_phase=20, rank_bf=16, seed=0, eps_b=eps_b, eps_K=eps_K,
                         t_fac=0.12, t_app=0.004, nnz=4096)


class BenchmarkRunLedgerTest(TestCase):

    def test_record_stores_metrics_and_config(self):
        """A recorded run keeps its metrics, timings, configuration and full report."""
        run = BenchmarkRun.objects.record(CONFIG, make_report())
        stored = BenchmarkRun.objects.get(pk=run.pk)
        self.assertEqual((stored.kernel, stored.scenario, stored.size), ('fio2d', 1, 64))
        self.assertAlmostEqual(stored.eps_b, 2.5e-8)
        self.assertIsNone(stored.eps_k)
        self.assertEqual(stored.nnz, 4096)
        self.assertEqual(stored.config['leaf_size'], 64)
        self.assertEqual(stored.report['schema_version'], make_report().schema_version)

    def test_latest_for_kernel(self):
        """The most recent run of a kernel is returned; unknown kernels give None."""
        BenchmarkRun.objects.record(CONFIG, make_report(eps_b=1e-3))
        newest = BenchmarkRun.objects.record(CONFIG, make_report(eps_b=1e-9))
        BenchmarkRun.objects.record(ExperimentConfig(kernel='nufft', n=4), make_report(kernel='nufft'))
        self.assertEqual(BenchmarkRun.objects.latest_for('fio2d').pk, newest.pk)
        self.assertIsNone(BenchmarkRun.objects.latest_for('helmholtz'))

    def test_str(self):
        """The string form names kernel, size and both errors."""
        run = BenchmarkRun.objects.record(CONFIG, make_report(eps_K=1.5e-9))
        self.assertEqual(str(run), "fio2d N=64 (scenario 1): eps_b=2.50e-08, eps_K=1.50e-09")
        run.eps_k = None
        self.assertIn("eps_K=n/a", str(run))

    def test_serializer_output(self):
        """The ledger serializer exposes the stored columns."""
        run = BenchmarkRun.objects.record(CONFIG, make_report())
        data = BenchmarkRunSerializer(run).data
        self.assertEqual(data['kernel'], 'fio2d')
        self.assertEqual(data['size'], 64)
        self.assertEqual(str(run.id), data['id'])

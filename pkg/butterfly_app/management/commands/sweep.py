import logging
from dataclasses import replace

from butterfly_app.exceptions import ConfigurationError
from butterfly_app.experiments import scaling_sweep
from butterfly_app.management.base import ExperimentCommand
from butterfly_app.models import BenchmarkRun
from butterfly_app.serializers import MetricsReportSerializer, parse_config

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = "Runs an experiment over several sizes and fits log-log slopes of every stage time and of nnz."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--sizes', type=int, nargs='+', required=True,
                            help="Values of n (or mesh levels for helmholtz) to sweep.")
        parser.add_argument('--record', action='store_true', help="Store every run in the benchmark ledger.")

    def run(self, **options):
        if len(options['sizes']) < 2:
            raise ConfigurationError("A sweep needs at least two sizes.")
        base = self.experiment_config(options, **self._size_override(options, options['sizes'][0]))
        configs = [
            parse_config({**base.to_dict(), **self._size_override(options, size)})
            for size in options['sizes']
        ]

        def on_report(report):
            logger.info(f"sweep: N={report.rows} done (eps_b={report.eps_b:.3e})")
            if options['record']:
                BenchmarkRun.objects.record(replace(base, n=report.n, mesh_level=report.mesh_level), report)

        result = scaling_sweep(configs, on_report=on_report)
        rows = [dict(MetricsReportSerializer(r).data) for r in result.reports]
        self.emit(rows, options['format'], options['out'], extra={'slopes': result.slopes})

    @staticmethod
    def _size_override(options, size):
        return {'mesh_level': size} if options['kernel'] == 'helmholtz' else {'n': size}

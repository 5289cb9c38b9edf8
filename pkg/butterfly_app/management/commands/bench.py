import logging

from butterfly_app.experiments import run_experiment
from butterfly_app.management.base import ExperimentCommand
from butterfly_app.models import BenchmarkRun
from butterfly_app.serializers import BenchmarkRunSerializer, MetricsReportSerializer

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = "Runs one experiment end to end (paths, recovery, IDBF, apply) and reports errors and timings."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--fail-above', type=float, help="Exit with code 3 when eps_b or eps_K exceeds this.")
        parser.add_argument(
            '--record', action='store_true',
            help="Store the run in the benchmark ledger; JSON output adds it and the previous run for the kernel.",
        )

    def run(self, **options):
        config = self.experiment_config(options)
        logger.info(f"bench: starting {config.kernel} experiment")
        report = run_experiment(config)
        extra = None
        if options['record']:
            previous = BenchmarkRun.objects.latest_for(config.kernel)
            run = BenchmarkRun.objects.record(config, report)
            extra = {
                'recorded': BenchmarkRunSerializer(run).data,
                'previous': BenchmarkRunSerializer(previous).data if previous else None,
            }
            if previous:
                logger.info(f"bench: eps_b {previous.eps_b:.2e} -> {run.eps_b:.2e} since run {previous.id}")
        self.emit([dict(MetricsReportSerializer(report).data)], options['format'], options['out'], extra)
        report.check(options.get('fail_above'))

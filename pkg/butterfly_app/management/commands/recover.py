import logging

from butterfly_app.exceptions import ConfigurationError
from butterfly_app.experiments import ExperimentRunner, discontinuity_counts
from butterfly_app.factorization_io import write_matrix
from butterfly_app.management.base import ExperimentCommand
from butterfly_app.metrics import metric_eps_K

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = "Recovers the low-rank phase U Vᵀ of a kernel, or tabulates detected discontinuities against tau."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--factors-out', help="Prefix for the recovered factors: <prefix>_u.bin and <prefix>_v.bin.")
        parser.add_argument('--tau-table', type=float, nargs='+',
                            help="Only count discontinuities for these thresholds.")
        parser.add_argument('--trials', type=int, default=1, help="Trials averaged per threshold in --tau-table.")

    def run(self, **options):
        config = self.experiment_config(options)
        if options['tau_table']:
            rows = discontinuity_counts(config, options['tau_table'], trials=options['trials'])
            self.emit(rows, options['format'], options['out'])
            return
        if config.scenario == 1:
            raise ConfigurationError("Scenario 1 exposes kernel entries; use scenario 2 or 3 to recover a phase.")

        runner = ExperimentRunner(config)
        low_rank = runner.recover()
        diagnostics = low_rank.diagnostics
        m, n = low_rank.shape
        row = {
            'kernel': config.kernel,
            'scenario': config.scenario,
            'rows': m,
            'cols': n,
            'rank_phase': low_rank.rank,
            'tau': diagnostics.tau,
            'row_discontinuities': int(diagnostics.row_discontinuities),
            'col_discontinuities': int(diagnostics.col_discontinuities),
            'ill_conditioned': bool(diagnostics.ill_conditioned),
            'eps_K': metric_eps_K(low_rank, runner.accessor.reference_entries, seed=runner.rng),
            't_path': runner.timer.get('t_path'),
            't_rec': runner.timer.get('t_rec'),
        }
        if options['factors_out']:
            prefix = options['factors_out']
            write_matrix(f"{prefix}_u.bin", low_rank.u)
            write_matrix(f"{prefix}_v.bin", low_rank.v)
            logger.info(f"recover: wrote phase factors with prefix {prefix}")
        self.emit([row], options['format'], options['out'])

import logging

from butterfly_app.experiments import ExperimentRunner
from butterfly_app.factorization_io import save_factorization
from butterfly_app.management.base import ExperimentCommand

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = "Builds the IDBF of a kernel and saves it as a factorization container."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--save', required=True, help="Path of the factorization container to write.")

    def run(self, **options):
        config = self.experiment_config(options)
        runner = ExperimentRunner(config)
        factorization = runner.factorize()
        save_factorization(options['save'], factorization)
        m, n = factorization.shape
        row = {
            'kernel': config.kernel,
            'rows': m,
            'cols': n,
            'depth': factorization.depth,
            'middle_level': factorization.middle_level,
            'factor_count': len(factorization.factors),
            'nnz': factorization.nnz,
            'nnz_per_factor': factorization.nnz_per_factor,
            'max_rank': factorization.max_rank,
            't_path': runner.timer.get('t_path'),
            't_rec': runner.timer.get('t_rec'),
            't_fac': runner.timer.get('t_fac'),
            'path': options['save'],
        }
        self.emit([row], options['format'], options['out'])

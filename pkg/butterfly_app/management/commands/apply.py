import logging
import time

from butterfly_app.factorization_io import load_factorization, read_matrix, read_vector, write_matrix
from butterfly_app.management.base import ButterflyCommand

logger = logging.getLogger(__name__)


class Command(ButterflyCommand):
    help = "Applies a saved factorization (or its transpose) to a vector or a block of vectors."

    def add_arguments(self, parser):
        parser.add_argument('--factorization', required=True, help="Container written by `factorize`.")
        parser.add_argument('--input', required=True, help="Input vector/matrix (.csv or binary).")
        parser.add_argument('--output', required=True, help="Where to write the result (.csv or binary).")
        parser.add_argument('--transpose', action='store_true', help="Apply Kᵀ instead of K.")
        self.add_output_arguments(parser)

    def run(self, **options):
        factorization = load_factorization(options['factorization'])
        path = options['input']
        data = read_vector(path) if path.lower().endswith('.csv') else read_matrix(path)
        if data.ndim == 2 and data.shape[1] == 1:
            data = data[:, 0]

        start = time.perf_counter()
        result = factorization.apply_transpose(data) if options['transpose'] else factorization.apply(data)
        elapsed = time.perf_counter() - start
        write_matrix(options['output'], result)
        logger.info(f"apply: {'Kᵀ' if options['transpose'] else 'K'} applied in {elapsed:.4f}s -> {options['output']}")

        row = {
            'rows': factorization.shape[0],
            'cols': factorization.shape[1],
            'transpose': options['transpose'],
            'vectors': 1 if result.ndim == 1 else result.shape[1],
            't_app': elapsed,
            'output': options['output'],
        }
        self.emit([row], options['format'], options['out'])

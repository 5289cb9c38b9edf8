import csv
import io
import json
import logging
from pathlib import Path
from typing import List, Optional

from django.core.management.base import BaseCommand, CommandError

from butterfly_app.exceptions import (
    ButterflyError,
    ConfigurationError,
    DimensionError,
    InputError,
    NumericalFailure,
)
from butterfly_app.experiments import ExperimentConfig
from butterfly_app.serializers import parse_config

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
CONFIG_OPTIONS = (
    'kernel', 'n', 'mesh_level', 'rank_phase', 'rank_bf', 'tau', 'oversample_q', 'oversample_t',
    'leaf_size', 'eps', 'seed', 'scenario', 'sampling', 'sphere_source',
)


class ButterflyCommand(BaseCommand):
    """
    Shared plumbing for the benchmark commands: output format handling and the
    mapping of domain errors onto exit codes (2 configuration, 3 numerical failure).
    """
    def add_output_arguments(self, parser):
        parser.add_argument('--out', help="Write the output here instead of stdout.")
        parser.add_argument('--format', choices=('json', 'csv'), default='json')

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except (ConfigurationError, DimensionError, InputError) as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]}: {e}")
            raise CommandError(str(e), returncode=EXIT_CONFIG) from e
        except NumericalFailure as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]}: {e}")
            raise CommandError(str(e), returncode=EXIT_NUMERICAL) from e
        except ButterflyError as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]}: unexpected failure: {e}")
            raise CommandError(str(e)) from e

    def run(self, **options):
        raise NotImplementedError

    def emit(self, rows: List[dict], fmt: str, out: Optional[str], extra: Optional[dict] = None) -> None:
        """JSON: a single object (or {'runs': [...], **extra}); CSV: one line per row."""
        if fmt == 'csv':
            buffer = io.StringIO()
            fields = list(rows[0].keys()) if rows else []
            writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _csv_value(v) for k, v in row.items()})
            text = buffer.getvalue()
        else:
            payload = rows[0] if len(rows) == 1 and not extra else {'runs': rows, **(extra or {})}
            text = json.dumps(payload, indent=2) + '\n'

        if out:
            Path(out).write_text(text)
            logger.info(f"Wrote {len(rows)} record(s) to {out}")
        else:
            self.stdout.write(text, ending='')


class ExperimentCommand(ButterflyCommand):
    """Adds the experiment configuration flags."""

    def add_arguments(self, parser):
        parser.add_argument('--kernel', required=True, choices=('fio2d', 'nufft', 'helmholtz'))
        parser.add_argument('--n', type=int, help="Points per dimension (fio2d, nufft).")
        parser.add_argument('--mesh-level', type=int, help="Sphere refinement level (helmholtz).")
        parser.add_argument('--rank-phase', type=int, default=20, help="Phase rank r.")
        parser.add_argument('--rank-bf', type=int, default=30, help="Butterfly rank k.")
        parser.add_argument('--tau', type=float, help="Discontinuity threshold.")
        parser.add_argument('--oversample-q', type=int, help="rSVD oversampling q.")
        parser.add_argument('--oversample-t', type=int, help="ID oversampling t.")
        parser.add_argument('--leaf-size', type=int, help="Leaf capacity n0 (default 8^d).")
        parser.add_argument('--eps', type=float, help="Adaptive ID tolerance.")
        parser.add_argument('--seed', type=int)
        parser.add_argument('--scenario', type=int, default=2, choices=(1, 2, 3))
        parser.add_argument('--sampling', choices=('chebyshev', 'random'), default='chebyshev')
        parser.add_argument('--sphere-source', choices=('faces', 'vertices'), default='faces')
        parser.add_argument('--no-escalate', action='store_true', help="Keep tau fixed.")
        self.add_output_arguments(parser)

    def experiment_config(self, options: dict, **overrides) -> ExperimentConfig:
        data = {name: options.get(name) for name in CONFIG_OPTIONS}
        data['escalate_tau'] = not options.get('no_escalate', False)
        data.update(overrides)
        return parse_config({k: v for k, v in data.items() if v is not None})


def _csv_value(value):
    if isinstance(value, (list, tuple)):
        return ';'.join(str(v) for v in value)
    return '' if value is None else value

import logging
import uuid

from django.db import models
from django.utils import timezone

logger = logging.getLogger(__name__)


# --- CUSTOM MANAGER FOR THE RUN LEDGER ---
class BenchmarkRunManager(models.Manager):
    """
    Records finished experiments and looks up the most recent run per kernel.
    """
    def record(self, config, report) -> 'BenchmarkRun':
        run = self.create(
            kernel=report.kernel,
            scenario=report.scenario,
            size=report.rows,
            config=config.to_dict(),
            eps_b=report.eps_b,
            eps_k=report.eps_K,
            t_path=report.t_path,
            t_rec=report.t_rec,
            t_fac=report.t_fac,
            t_app=report.t_app,
            nnz=report.nnz,
            report=report.to_dict(),
        )
        logger.info(f"Recorded benchmark run {run.id} ({run.kernel}, N={run.size})")
        return run

    def latest_for(self, kernel: str):
        return self.filter(kernel=kernel).order_by('-created_at').first()


# --- IMMUTABLE BENCHMARK RUN ---
class BenchmarkRun(models.Model):
    """
    One finished experiment: configuration, error metrics, stage timings and storage.
    """
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)

    kernel = models.CharField(max_length=20, db_index=True)
    scenario = models.PositiveSmallIntegerField()
    # Number of rows of K (|X|)
    size = models.PositiveIntegerField(db_index=True)
    config = models.JSONField()

    eps_b = models.FloatField()
    eps_k = models.FloatField(null=True, blank=True)
    t_path = models.FloatField(default=0.0)
    t_rec = models.FloatField(default=0.0)
    t_fac = models.FloatField(default=0.0)
    t_app = models.FloatField(default=0.0)
    nnz = models.BigIntegerField(default=0)
    report = models.JSONField(default=dict)

    created_at = models.DateTimeField(default=timezone.now, db_index=True)

    objects = BenchmarkRunManager()

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Benchmark Run"
        verbose_name_plural = "Benchmark Runs"

    def __str__(self):
        eps_k = f"{self.eps_k:.2e}" if self.eps_k is not None else "n/a"
        return f"{self.kernel} N={self.size} (scenario {self.scenario}): eps_b={self.eps_b:.2e}, eps_K={eps_k}"

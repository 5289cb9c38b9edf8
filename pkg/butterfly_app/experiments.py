import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from django.conf import settings

from butterfly_app.exceptions import ConfigurationError, NumericalFailure
from butterfly_app.geometry import RecoveryPath, recovery_path
from butterfly_app.idbf import ButterflyFactorization, IDBFConfig, idbf_factorize
from butterfly_app.kernels import KERNEL_KINDS, SCENARIO_MODES, KernelAccessor, make_accessor
from butterfly_app.linalg import make_rng
from butterfly_app.metrics import StageTimer, fit_slope, metric_eps_b, metric_eps_K, sample_indices
from butterfly_app.phase_md import LowRankPhase, PhaseAccessor, count_discontinuities, low_rank_phase_factorization
from butterfly_app.tree import complementary_trees

logger = logging.getLogger(__name__)

STAGES = ('t_path', 't_rec', 't_fac', 't_app')


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str
    n: Optional[int] = None
    mesh_level: Optional[int] = None
    rank_phase: int = 20
    rank_bf: int = 30
    tau: Optional[float] = None
    oversample_q: Optional[int] = None
    oversample_t: Optional[int] = None
    leaf_size: Optional[int] = None
    eps: Optional[float] = None
    seed: Optional[int] = None
    scenario: int = 2
    escalate_tau: bool = True
    sampling: str = 'chebyshev'
    sphere_source: str = 'faces'

    @property
    def dim(self) -> int:
        return 2 if self.kernel == 'fio2d' else 3

    def resolved(self) -> 'ExperimentConfig':
        """Fills every unset tunable from settings."""
        return replace(
            self,
            tau=self.tau if self.tau is not None else settings.PHASE_TAU,
            oversample_q=self.oversample_q if self.oversample_q is not None else settings.PHASE_OVERSAMPLE_Q,
            oversample_t=self.oversample_t if self.oversample_t is not None else settings.ID_OVERSAMPLE_T,
            leaf_size=self.leaf_size if self.leaf_size is not None else 8 ** self.dim,
            eps=self.eps if self.eps is not None else settings.ADAPTIVE_EPS,
            seed=self.seed if self.seed is not None else settings.DEFAULT_SEED,
        )

    def check(self) -> None:
        """Rejects configurations that cannot run; sizes are checked again once points exist."""
        if self.kernel not in KERNEL_KINDS or self.kernel == 'custom-lowrank':
            raise ConfigurationError(f"Unknown experiment kernel '{self.kernel}'.")
        if self.scenario not in SCENARIO_MODES:
            raise ConfigurationError(f"Scenario must be one of {sorted(SCENARIO_MODES)}, got {self.scenario}.")
        if self.kernel == 'helmholtz' and self.mesh_level is None:
            raise ConfigurationError("The helmholtz kernel needs a mesh level.")
        if self.kernel != 'helmholtz' and not self.n:
            raise ConfigurationError(f"The {self.kernel} kernel needs a grid size n.")
        for name in ('n', 'rank_phase', 'rank_bf', 'oversample_q', 'oversample_t', 'leaf_size'):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigurationError(f"{name} must be positive, got {value}.")
        if self.tau is not None and not 0 < self.tau <= 0.5:
            raise ConfigurationError(f"tau must lie in (0, 1/2], got {self.tau}.")
        if self.eps is not None and self.eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}.")
        if self.leaf_size is not None and self.leaf_size < self.rank_bf:
            raise ConfigurationError(f"Leaf size {self.leaf_size} is smaller than the butterfly rank {self.rank_bf}.")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsReport:
    kernel: str
    scenario: int
    n: Optional[int]
    mesh_level: Optional[int]
    rows: int
    cols: int
    rank_phase: int
    rank_bf: int
    seed: int
    eps_b: float = 0.0
    eps_K: Optional[float] = None
    t_path: float = 0.0
    t_rec: float = 0.0
    t_fac: float = 0.0
    t_app: float = 0.0
    t_d: float = 0.0
    t_d_sample: float = 0.0
    td_ratio: float = 0.0
    nnz: int = 0
    nnz_per_factor: List[int] = field(default_factory=list)
    factor_count: int = 0
    depth: int = 0
    middle_level: int = 0
    max_rank: int = 0
    max_coefficient: float = 0.0
    tau: Optional[float] = None
    row_discontinuities: int = 0
    col_discontinuities: int = 0
    ill_conditioned: bool = False
    schema_version: str = field(default_factory=lambda: settings.REPORT_SCHEMA_VERSION)

    @property
    def size(self) -> int:
        return self.rows

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self, fail_above: Optional[float]) -> None:
        """Raises NumericalFailure when ε^b or ε^K exceeds `fail_above`."""
        if fail_above is None:
            return
        worst = max(self.eps_b, self.eps_K or 0.0)
        if worst > fail_above:
            raise NumericalFailure(f"Error {worst:.3e} exceeds the threshold {fail_above:.3e}.")


class ExperimentRunner:
    """
    Runs one experiment stage by stage: recovery paths, phase recovery with the
    randomized SVD, trees and IDBF, then the fast apply and the error metrics.
    Every stage is timed; building the hidden oracle behind the accessor is not.
    """

    def __init__(self, config: ExperimentConfig, accessor: Optional[KernelAccessor] = None):
        config.check()
        self.config = config.resolved()
        self.rng = make_rng(self.config.seed)
        self.timer = StageTimer()
        self.accessor = accessor if accessor is not None else make_accessor(
            self.config.kernel,
            scenario=self.config.scenario,
            n=self.config.n,
            mesh_level=self.config.mesh_level,
            seed=self.rng,
            sphere_source=self.config.sphere_source,
        )
        m, n = self.accessor.shape
        if self.config.scenario != 1 and self.config.rank_phase * self.config.oversample_q > min(m, n):
            raise ConfigurationError(
                f"Phase rank {self.config.rank_phase} with oversampling {self.config.oversample_q} "
                f"needs more than the {min(m, n)} available rows/columns."
            )
        self.paths: Optional[Tuple[RecoveryPath, RecoveryPath]] = None
        self.low_rank: Optional[LowRankPhase] = None
        self.factorization: Optional[ButterflyFactorization] = None

    @property
    def idbf_config(self) -> IDBFConfig:
        return IDBFConfig(
            rank=self.config.rank_bf,
            oversample=self.config.oversample_t,
            leaf_size=self.config.leaf_size,
            eps=self.config.eps,
            sampling=self.config.sampling,
            seed=self.config.seed,
        )

    def entry_eval(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        if self.config.scenario == 1:
            return self.accessor.entries
        if self.low_rank is None:
            self.recover()
        return self.low_rank.kernel_entries

    def build_paths(self) -> Tuple[RecoveryPath, RecoveryPath]:
        with self.timer.stage('t_path'):
            self.paths = (recovery_path(self.accessor.x_points), recovery_path(self.accessor.xi_points))
        logger.info(f"Recovery paths built in {self.timer.get('t_path'):.3f}s")
        return self.paths

    def recover(self) -> LowRankPhase:
        if self.config.scenario == 1:
            raise ConfigurationError("Scenario 1 factorizes kernel entries directly; there is no phase to recover.")
        if self.config.scenario == 2 and self.paths is None:
            self.build_paths()
        with self.timer.stage('t_rec'):
            self.low_rank = low_rank_phase_factorization(
                self.accessor,
                self.accessor.x_points,
                self.accessor.xi_points,
                self.config.rank_phase,
                oversample=self.config.oversample_q,
                tau=self.config.tau,
                rng=self.rng,
                paths=self.paths,
                escalate=self.config.escalate_tau,
            )
        logger.info(f"Phase recovered (rank {self.low_rank.rank}) in {self.timer.get('t_rec'):.3f}s")
        return self.low_rank

    def factorize(self) -> ButterflyFactorization:
        entry_eval = self.entry_eval()
        with self.timer.stage('t_fac'):
            tree_x, tree_xi = complementary_trees(
                self.accessor.x_points, self.accessor.xi_points, self.config.leaf_size
            )
            self.factorization = idbf_factorize(entry_eval, tree_x, tree_xi, self.idbf_config)
        logger.info(f"IDBF built in {self.timer.get('t_fac'):.3f}s, nnz {self.factorization.nnz}")
        return self.factorization

    def run(self) -> MetricsReport:
        if self.factorization is None:
            self.factorize()
        m, n = self.accessor.shape
        f = self.rng.standard_normal(n) + 1j * self.rng.standard_normal(n)
        with self.timer.stage('t_app'):
            g = self.factorization.apply(f)
        F = self.factorization

        rows = sample_indices(m, rng=self.rng)
        timings = {}

        def dense_rows(sampled, vector):
            start = time.perf_counter()
            product = self.accessor.reference_matvec(vector, sampled)
            timings['t_d_sample'] = time.perf_counter() - start
            return product

        eps_b = metric_eps_b(F, dense_rows, f, rows=rows, g_fast=g)
        t_d_sample = timings['t_d_sample']
        t_d = t_d_sample * m / rows.size

        eps_k = None
        diagnostics = None
        if self.low_rank is not None:
            eps_k = metric_eps_K(self.low_rank, self.accessor.reference_entries, seed=self.rng)
            diagnostics = self.low_rank.diagnostics

        t_app = self.timer.get('t_app')
        report = MetricsReport(
            kernel=self.config.kernel,
            scenario=self.config.scenario,
            n=self.config.n,
            mesh_level=self.config.mesh_level,
            rows=m,
            cols=n,
            rank_phase=self.config.rank_phase,
            rank_bf=self.config.rank_bf,
            seed=self.config.seed,
            eps_b=eps_b,
            eps_K=eps_k,
            t_path=self.timer.get('t_path'),
            t_rec=self.timer.get('t_rec'),
            t_fac=self.timer.get('t_fac'),
            t_app=t_app,
            t_d=t_d,
            t_d_sample=t_d_sample,
            td_ratio=t_d / t_app if t_app > 0 else 0.0,
            nnz=F.nnz,
            nnz_per_factor=F.nnz_per_factor,
            factor_count=len(F.factors),
            depth=F.depth,
            middle_level=F.middle_level,
            max_rank=F.max_rank,
            max_coefficient=F.max_coefficient,
            tau=diagnostics.tau if diagnostics else None,
            row_discontinuities=diagnostics.row_discontinuities if diagnostics else 0,
            col_discontinuities=diagnostics.col_discontinuities if diagnostics else 0,
            ill_conditioned=bool(diagnostics.ill_conditioned) if diagnostics else False,
        )
        logger.info(f"Experiment {self.config.kernel} N={m}: eps_b={eps_b:.3e}, eps_K={eps_k}, T_app={t_app:.4f}s")
        return report


def run_experiment(config: ExperimentConfig, accessor: Optional[KernelAccessor] = None) -> MetricsReport:
    return ExperimentRunner(config, accessor).run()


@dataclass
class SweepResult:
    reports: List[MetricsReport]
    slopes: Dict[str, float]


def scaling_sweep(configs: Iterable[ExperimentConfig],
                  on_report: Optional[Callable[[MetricsReport], None]] = None) -> SweepResult:
    """Runs each configuration and fits log T against log N for every stage and for nnz."""
    reports = []
    for config in configs:
        report = run_experiment(config)
        reports.append(report)
        if on_report is not None:
            on_report(report)
    sizes = [r.size for r in reports]
    slopes = {stage: fit_slope(sizes, [getattr(r, stage) for r in reports]) for stage in STAGES}
    slopes['nnz'] = fit_slope(sizes, [r.nnz for r in reports])
    logger.info(f"scaling_sweep: {len(reports)} runs, slopes {slopes}")
    return SweepResult(reports=reports, slopes=slopes)


def discontinuity_counts(config: ExperimentConfig, taus: Iterable[float], trials: int = 1) -> List[dict]:
    """
    Mean numbers of detected row and column discontinuities per τ, each trial
    drawing fresh points and fresh sampled rows and columns.
    """
    config.check()
    config = config.resolved()
    rng = make_rng(config.seed)
    taus = list(taus)
    totals = {tau: [0, 0] for tau in taus}
    for _ in range(trials):
        accessor = make_accessor(config.kernel, scenario=config.scenario, n=config.n,
                                 mesh_level=config.mesh_level, seed=rng, sphere_source=config.sphere_source)
        m, n = accessor.shape
        count = min(config.rank_phase * config.oversample_q, m, n)
        rows = rng.choice(m, size=count, replace=False)
        cols = rng.choice(n, size=count, replace=False)
        row_path, col_path = recovery_path(accessor.x_points), recovery_path(accessor.xi_points)
        phase = PhaseAccessor.from_kernel(accessor)
        for tau in taus:
            row_breaks, col_breaks = count_discontinuities(phase, rows, cols, row_path, col_path, tau)
            totals[tau][0] += len(row_breaks) - 1
            totals[tau][1] += len(col_breaks) - 1
    return [
        {'tau': tau, 'row_discontinuities': totals[tau][0] / trials, 'col_discontinuities': totals[tau][1] / trials}
        for tau in taus
    ]

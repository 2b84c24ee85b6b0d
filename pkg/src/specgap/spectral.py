"""Spectrum and spectral gap of the Galerkin generator.

The gap is ``min Re(-z)`` over the computed eigenvalues z, excluding the one
of smallest modulus, which is taken to be the stationary (zero) mode.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgument, NumericalError
from .galerkin import BasisSpec, GeneratorMatrix, assemble, to_real_form
from .model import ModelParams

log = logging.getLogger(__name__)

ZERO_TOL = 1e-7


@dataclass
class SpectrumResult:
    """Eigenvalues sorted by ascending ``Re(-z)``, plus the gap.

    ``warnings`` collects non-fatal problems: unresolved zero mode, positive
    real parts, negative gap.
    """

    eigenvalues: np.ndarray
    zero_mode_index: int
    gap: float
    zero_tol: float = ZERO_TOL
    warnings: list[str] = field(default_factory=list)

    @property
    def zero_mode(self) -> complex:
        return complex(self.eigenvalues[self.zero_mode_index])

    @property
    def negative(self) -> bool:
        return self.gap < 0

    @property
    def valid(self) -> bool:
        return abs(self.zero_mode) <= self.zero_tol and not self.negative

    def nonzero(self) -> np.ndarray:
        return np.delete(self.eigenvalues, self.zero_mode_index)


def eigenvalues(gen: GeneratorMatrix, real_form: bool = True) -> np.ndarray:
    """All eigenvalues of the dense generator matrix (unordered)."""
    M = gen.entries
    try:
        if real_form:
            # similar real matrix: same spectrum, real arithmetic is ~3x cheaper
            return sla.eigvals(to_real_form(M, gen.basis), check_finite=False,
                               overwrite_a=True)
        return sla.eigvals(M, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc


def spectrum(gen: GeneratorMatrix, zero_tol: float = ZERO_TOL,
             real_form: bool = True) -> SpectrumResult:
    """Full spectrum and spectral gap of an assembled generator."""
    ev = eigenvalues(gen, real_form=real_form)
    if not np.all(np.isfinite(ev)):
        raise NumericalError("eigensolver returned non-finite eigenvalues")
    ev = ev[np.lexsort((ev.imag, -ev.real))]
    iz = int(np.argmin(np.abs(ev)))
    rest = np.delete(ev, iz)
    gap = float(np.min(-rest.real)) if rest.size else math.inf
    res = SpectrumResult(ev, iz, gap, zero_tol)
    if abs(ev[iz]) > zero_tol:
        res.warnings.append(f"stationary mode not resolved: |z0| = {abs(ev[iz]):.3e}")
    if rest.size and np.max(rest.real) > zero_tol:
        res.warnings.append(f"eigenvalue with positive real part {np.max(rest.real):.3e}")
    if gap < 0:
        res.warnings.append(f"negative spectral gap {gap:.6g}")
    for w in res.warnings:
        log.debug("spectrum: %s", w)
    return res


def gap_at(params: ModelParams, basis: BasisSpec, zero_tol: float = ZERO_TOL) -> SpectrumResult:
    return spectrum(assemble(params, basis), zero_tol=zero_tol)


@dataclass
class ConvergenceTrace:
    """Gap estimates along the N = 2K protocol."""

    entries: list[tuple[int, float]]
    converged: bool
    rel_tol: float

    @property
    def final_gap(self) -> float:
        return self.entries[-1][1] if self.entries else math.nan

    @property
    def K_used(self) -> int:
        return self.entries[-1][0] if self.entries else 0

    @property
    def N_used(self) -> int:
        return 2 * self.K_used


def relative_variation(gaps: list[float]) -> float:
    """Variation of the last gap against the mean of the three before it.

    Falls back to the absolute variation when that mean is below 1e-12.
    """
    cur = gaps[-1]
    mean = sum(gaps[-4:-1]) / 3.0
    if abs(mean) < 1e-12:
        return abs(cur - mean)
    return abs(cur - mean) / abs(mean)


def _is_converged(gaps: list[float], rel_tol: float) -> bool:
    if len(gaps) < 4 or gaps[-1] < 0:
        return False
    if abs(sum(gaps[-4:-1]) / 3.0) < 1e-12:
        return relative_variation(gaps) < 1e-6
    return relative_variation(gaps) < rel_tol


def converged_gap(params: ModelParams, K_start: int = 4, K_max: int = 20,
                  rel_tol: float = 1e-3, zero_tol: float = ZERO_TOL) -> ConvergenceTrace:
    """Increase K (with N = 2K) until the gap estimate stabilizes.

    Gaps are computed from ``K_start - 3`` on so that the first convergence
    test, at ``K_start``, already has three previous values.  The trace is
    returned whether or not convergence was reached.
    """
    if int(K_start) != K_start or K_start < 4:
        raise InvalidArgument("K_start must be an integer >= 4")
    if K_max < K_start:
        raise InvalidArgument("K_max must be >= K_start")
    if not rel_tol > 0:
        raise InvalidArgument("rel_tol must be positive")
    entries: list[tuple[int, float]] = []
    gaps: list[float] = []
    for K in range(K_start - 3, K_max + 1):
        res = gap_at(params, BasisSpec.square(K), zero_tol=zero_tol)
        entries.append((K, res.gap))
        gaps.append(res.gap)
        if K >= K_start and _is_converged(gaps, rel_tol):
            return ConvergenceTrace(entries, True, rel_tol)
    log.info("gap not converged up to K=%d (xi=%g, tau=%g)", K_max, params.xi, params.tau)
    return ConvergenceTrace(entries, False, rel_tol)


@dataclass(frozen=True)
class Protocol:
    K_start: int = 4
    K_max: int = 20
    rel_tol: float = 1e-3


@dataclass
class SweepRow:
    xi: float
    tau: float
    U0: float
    m: float
    beta: float
    K: int
    N: int
    gap: float
    converged: bool
    error: str | None = None

    def cells(self):
        return [self.xi, self.tau, self.U0, self.m, self.beta, self.K, self.N,
                self.gap, self.converged]


SWEEP_HEADER = ("xi", "tau", "U0", "m", "beta", "K", "N", "gap", "converged")


def _sweep_point(args) -> SweepRow:
    params, protocol = args
    pot = params.potential
    U0 = pot.U0 if pot.kind == "cosine" else math.nan
    try:
        tr = converged_gap(params, protocol.K_start, protocol.K_max, protocol.rel_tol)
        return SweepRow(params.xi, params.tau, U0, params.m, params.beta,
                        tr.K_used, tr.N_used, tr.final_gap, tr.converged)
    except Exception as exc:  # recorded per row, never aborts the sweep
        return SweepRow(params.xi, params.tau, U0, params.m, params.beta,
                        0, 0, math.nan, False, error=f"{type(exc).__name__}: {exc}")


def default_jobs() -> int:
    env = os.environ.get("SPECGAP_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgument(f"SPECGAP_JOBS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def sweep(xi_list, tau_list, base: ModelParams, protocol: Protocol = Protocol(),
          jobs: int = 1) -> list[SweepRow]:
    """Converged gap on the (xi, tau) grid, rows ordered xi-major then tau."""
    xi_list, tau_list = list(xi_list), list(tau_list)
    if not xi_list or not tau_list:
        raise InvalidArgument("sweep grids must be non-empty")
    tasks = [(base.replace(xi=float(x), tau=float(t)), protocol)
             for x in xi_list for t in tau_list]
    if jobs <= 1 or len(tasks) == 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_point, tasks))

"""Explicit hypocoercive lower bounds on the spectral gap.

Two schemes are evaluated.  ``h1`` is the modified H^1 norm argument: the
rate is the largest lambda with ``S - |tau| T >= lambda P``.  ``dms`` is the
modified L^2 entropy argument: the entropy decays like
``exp(-2 Lambda_-(S - |tau| T) t / (1 + a))``, which translates into the
L^2 rate ``Lambda_-(S - |tau| T) / (1 + a)`` for the semigroup.

All matrices are 2x2 and evaluated in closed form.  The inputs that are not
explicit (the Poincare constant of nu and the norm of L_ham A^*) are
computed numerically in the Fourier basis of the position marginal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericalError, ResolutionError
from .model import ModelParams, Potential

SCHEMES = ("h1", "dms")
#: large-|k| limit of the per-mode norm of L_ham A^* (flat-potential value)
LHAM_TAIL = math.sqrt(3.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def lambda_min_2x2(a, b, c):
    """Smallest eigenvalue of ``[[a, b/2], [b/2, c]]``.

    Uses the cancellation-free form ``(4ac - b^2) / (2 (a + c + r))`` when
    ``a + c > 0`` and the direct form otherwise.  Works elementwise on arrays.
    """
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    r = np.hypot(a - c, b)
    s = a + c
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = (4 * a * c - b * b) / (2 * (s + r))
    out = np.where(s > 0, stable, 0.5 * s - 0.5 * r)
    return float(out) if out.ndim == 0 else out


def kozlov_gap(xi: float, m: float = 1.0, beta: float = 1.0) -> float:
    """Exact gap ``min(xi/m, 1/(beta xi))`` of the flat-potential generator."""
    for name, v in (("xi", xi), ("m", m), ("beta", beta)):
        if not (math.isfinite(v) and v > 0):
            raise InvalidArgument(f"{name} must be positive, got {v!r}")
    return min(xi / m, 1.0 / (beta * xi))


# -- Fourier-basis operators on L2(nu) ---------------------------------------

def _derivative(potential: Potential, beta: float, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Matrix of d/dq from span{G_k, k in cols} into span{G_k', k' in rows}.

    ``<G_k', d_q G_k> = i k delta + (beta/2) u_{k-k'}``; rows must extend the
    columns by the potential bandwidth for the product to be exact.
    """
    table = potential.force_table()
    D = np.zeros((rows.size, cols.size), dtype=complex)
    for j, kp in enumerate(rows):
        for i, k in enumerate(cols):
            v = 0.5 * beta * table.get(int(k - kp), 0.0)
            if k == kp:
                v += 1j * k
            D[j, i] = v
    return D


def _multiplication(potential: Potential, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Matrix of multiplication by U' (Toeplitz in the G basis)."""
    table = potential.force_table()
    return np.array([[table.get(int(k - j), 0.0) for k in cols] for j in rows], dtype=complex)


def _span(K: int, extra: int = 0) -> np.ndarray:
    return np.arange(-K - extra, K + extra + 1)


def overdamped_matrix(potential: Potential, beta: float, K: int) -> np.ndarray:
    """Galerkin matrix of ``L_ovd = -(1/beta) d_q^* d_q`` on span{G_k, |k| <= K}.

    Hermitian negative semidefinite; exact as a quadratic form because the
    derivative is taken into the extended span.
    """
    band = potential.bandwidth
    D = _derivative(potential, beta, _span(K, band), _span(K))
    L = -(D.conj().T @ D) / beta
    return 0.5 * (L + L.conj().T)


@dataclass(frozen=True)
class PoincareConstants:
    """Poincare constants of the two marginals and ``sup |U''|``."""

    k_nu: float
    k_kappa: float
    hess_bound: float

    def __post_init__(self):
        if not self.k_nu > 0 or not self.k_kappa > 0:
            raise InvalidArgument("Poincare constants must be positive")


def _poincare_at(potential: Potential, beta: float, K: int) -> float:
    ev = np.linalg.eigvalsh(-overdamped_matrix(potential, beta, K))
    return math.sqrt(beta * ev[1])


def poincare_nu(potential: Potential, beta: float, K: int = 16, tol: float = 1e-8,
                K_max: int = 512) -> float:
    """Poincare constant of nu from the gap of the overdamped generator.

    ``k_nu = sqrt(beta * gap(-L_ovd))``.  K is doubled until two successive
    values agree to ``tol`` (relative).
    """
    if int(K) != K or K < 8:
        raise InvalidArgument("poincare_nu needs K >= 8")
    if not (math.isfinite(beta) and beta > 0):
        raise InvalidArgument("beta must be positive")
    K = int(K)
    prev = _poincare_at(potential, beta, K)
    while 2 * K <= K_max:
        K *= 2
        cur = _poincare_at(potential, beta, K)
        if abs(cur - prev) <= tol * cur:
            return cur
        prev = cur
    raise ResolutionError(f"Poincare constant not stable up to K={K}")


def poincare_constants(params: ModelParams, K: int = 16) -> PoincareConstants:
    return PoincareConstants(
        k_nu=poincare_nu(params.potential, params.beta, K),
        k_kappa=math.sqrt(params.beta / params.m),
        hess_bound=params.potential.hess_bound(),
    )


def lham_astar_matrix(params: ModelParams, K: int) -> np.ndarray:
    """Finite matrix of ``L_ham A^*`` restricted to functions of q.

    Maps phi in span{G_k, |k| <= K} (through ``(1 - L_ovd/m)^{-1}``) to the
    coefficients of ``L_ham^2 Pi phi`` on the H_0 and H_2 Hermite levels:
    ``H_0: (1/m)((1/beta) phi'' - U' phi')`` and
    ``H_2: sqrt(2)/(m beta) phi''``.
    """
    pot, m, beta = params.potential, params.m, params.beta
    b = pot.bandwidth
    r0, r1, r2 = _span(K), _span(K, b), _span(K, 2 * b)
    D1 = _derivative(pot, beta, r1, r0)
    D2 = _derivative(pot, beta, r2, r1) @ D1
    L = -(D1.conj().T @ D1) / beta
    R = np.linalg.solve(np.eye(r0.size) - L / m, np.eye(r0.size))
    top = ((1.0 / beta) * D2 - _multiplication(pot, r2, r1) @ D1) / m
    low = math.sqrt(2.0) / (m * beta) * D2
    return np.vstack([top, low]) @ R


@dataclass(frozen=True)
class OperatorNorm:
    """Norm estimate of ``L_ham A^*``.

    ``value`` is the conservative estimate used in the bounds: the largest
    singular value of the truncated matrix, raised to the high-frequency
    limit sqrt(3) that the truncation cannot see.  ``raw`` is the plain
    truncated singular value at ``K``.
    """

    value: float
    raw: float
    K: int
    raw_2K: float


def norm_LhamAstar(params: ModelParams, K: int = 16, tol: float = 1e-6) -> OperatorNorm:
    """Norm of ``L_ham A^*`` with a stabilization check under K -> 2K."""
    if int(K) != K or K < 1:
        raise InvalidArgument("K must be a positive integer")
    K = int(K)
    raw = float(np.linalg.norm(lham_astar_matrix(params, K), 2))
    raw2 = float(np.linalg.norm(lham_astar_matrix(params, 2 * K), 2))
    v1, v2 = max(raw, LHAM_TAIL), max(raw2, LHAM_TAIL)
    if abs(v2 - v1) > tol * v2:
        raise ResolutionError(
            f"norm of L_ham A^* not stable under K={K}->{2 * K}: {v1!r} vs {v2!r}")
    return OperatorNorm(value=v2, raw=raw, K=K, raw_2K=raw2)


# -- bound matrices ------------------------------------------------------------

@dataclass
class BoundEvaluation:
    """One evaluation of a bound scheme at fixed free parameters.

    ``rate`` is the scheme's own rate (for ``dms`` the entropy decay rate
    ``2 Lambda_- / (1 + a)``); ``gap_bound`` is the implied lower bound on the
    spectral gap.  Both are NaN when the scheme is infeasible.
    """

    scheme: str
    a: float
    eta: float
    rate: float
    gap_bound: float
    feasible: bool
    S: np.ndarray
    T: np.ndarray
    P: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def _sym(pp, qp, qq) -> np.ndarray:
    return np.array([[pp, qp / 2.0], [qp / 2.0, qq]])


def _inv_sqrt_2x2(P: np.ndarray) -> np.ndarray:
    """P^{-1/2} of a symmetric positive definite 2x2 matrix, in closed form."""
    det = P[0, 0] * P[1, 1] - P[0, 1] ** 2
    tr = P[0, 0] + P[1, 1]
    if not (det > 0 and tr > 0):
        raise NumericalError("P is not positive definite")
    s = math.sqrt(det)
    t = math.sqrt(tr + 2 * s)
    root = (P + s * np.eye(2)) / t
    rdet = root[0, 0] * root[1, 1] - root[0, 1] ** 2
    return np.array([[root[1, 1], -root[0, 1]], [-root[1, 0], root[0, 0]]]) / rdet


def h1_matrices(params: ModelParams, pc: PoincareConstants, a: float, eta: float | None = None):
    """S(xi), T(xi, eta) and P(xi) of the H^1 scheme (d = 1)."""
    m, beta, xi = params.m, params.beta, params.xi
    if eta is None:
        eta = beta * abs(params.tau) / (4 * xi)
    H, Kn, Kk = pc.hess_bound, pc.k_nu, pc.k_kappa
    S = _sym(xi * (1 / beta + a / m) - a * H, -a * ((1 + xi) / m + H), a / m)
    T = _sym((1 + beta * a / m) / Kk + eta * a,
             (1 + beta * a / m) / Kn + beta * a / (m * Kk) + 2 * eta * a,
             beta * a / (m * Kn) + eta * a)
    P = np.array([[a + 1 / Kk ** 2, a], [a, a + 1 / Kn ** 2]])
    return S, T, P, eta


def h1_rate(params: ModelParams, pc: PoincareConstants, a: float) -> BoundEvaluation:
    """Largest lambda with ``S - |tau| T >= lambda P``, eta = beta|tau|/(4 xi)."""
    if not (math.isfinite(a) and a > 0):
        raise InvalidArgument("a must be positive")
    S, T, P, eta = h1_matrices(params, pc, a)
    A = S - abs(params.tau) * T
    W = _inv_sqrt_2x2(P)
    C = W @ A @ W
    lam = lambda_min_2x2(C[0, 0], C[0, 1] + C[1, 0], C[1, 1])
    ok = lam > 0
    rate = lam if ok else math.nan
    return BoundEvaluation("h1", a, eta, rate, rate, ok, S, T, P)


def dms_matrices(params: ModelParams, pc: PoincareConstants, a: float, eta: float,
                 lham_astar: float):
    """S(xi) and T(xi) of the modified-entropy scheme (d = 1)."""
    m, beta, xi = params.m, params.beta, params.xi
    Kn, Kk = pc.k_nu, pc.k_kappa
    c = Kn ** 2 / (m * beta)
    S = _sym(a * c / (1 + c), -a * (lham_astar + xi / (2 * m)), xi * Kk ** 2 / beta - a)
    rb = math.sqrt(beta / m)
    T = _sym(0.5 * (a * rb + eta), a * rb / 2, 0.5 * (eta + Kk ** 2 / eta))
    return S, T


def dms_rate(params: ModelParams, pc: PoincareConstants, a: float, eta: float,
             lham_astar: float | OperatorNorm | None = None) -> BoundEvaluation:
    """Entropy decay rate ``2 Lambda_-(S - |tau| T) / (1 + a)``."""
    if lham_astar is None:
        raise InvalidArgument("dms_rate needs the norm of L_ham A^*")
    if isinstance(lham_astar, OperatorNorm):
        lham_astar = lham_astar.value
    if not (0 < a < 1):
        raise InvalidArgument("a must lie in (0, 1)")
    if not (math.isfinite(eta) and eta > 0):
        raise InvalidArgument("eta must be positive")
    S, T = dms_matrices(params, pc, a, eta, lham_astar)
    A = S - abs(params.tau) * T
    lam = lambda_min_2x2(A[0, 0], 2 * A[0, 1], A[1, 1])
    ok = lam > 0
    rate = 2 * lam / (1 + a) if ok else math.nan
    gb = lam / (1 + a) if ok else math.nan
    return BoundEvaluation("dms", a, eta, rate, gb, ok, S, T,
                           extras={"lambda_minus": lam, "lham_astar": lham_astar})


# -- optimization over the free parameters -------------------------------------

def _golden_max(f, lo: float, hi: float, iters: int = 80) -> tuple[float, float]:
    """Maximize a unimodal f on [lo, hi]; returns (x, f(x))."""
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _h1_objective(params, pc, log_a):
    a = math.exp(log_a)
    S, T, P, _ = h1_matrices(params, pc, a)
    W = _inv_sqrt_2x2(P)
    C = W @ (S - abs(params.tau) * T) @ W
    return lambda_min_2x2(C[0, 0], C[0, 1] + C[1, 0], C[1, 1])


def optimize_h1(params: ModelParams, pc: PoincareConstants, n_grid: int = 241,
                a_range: tuple[float, float] = (1e-10, 1e4)) -> BoundEvaluation:
    """Best h1 rate over a: log grid scan, then golden section on the best cell."""
    lo, hi = math.log(a_range[0]), math.log(a_range[1])
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([_h1_objective(params, pc, x) for x in grid])
    i = int(np.argmax(vals))
    x, _ = _golden_max(lambda x: _h1_objective(params, pc, x),
                       grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)])
    if _h1_objective(params, pc, x) < vals[i]:
        x = grid[i]
    return h1_rate(params, pc, math.exp(x))


def _dms_lambda(params, pc, lham, a, eta):
    """Vectorized ``Lambda_-(S - |tau| T) / (1 + a)`` (the L^2 rate)."""
    m, beta, xi, t = params.m, params.beta, params.xi, abs(params.tau)
    Kn, Kk = pc.k_nu, pc.k_kappa
    c = Kn ** 2 / (m * beta)
    rb = math.sqrt(beta / m)
    mm = a * c / (1 + c) - t * 0.5 * (a * rb + eta)
    mp = -a * (lham + xi / (2 * m)) - t * a * rb / 2
    pp = xi * Kk ** 2 / beta - a - t * 0.5 * (eta + Kk ** 2 / eta)
    return lambda_min_2x2(mm, mp, pp) / (1 + a)


def optimize_dms(params: ModelParams, pc: PoincareConstants,
                 lham_astar: float | OperatorNorm, n_grid: int = 121,
                 rounds: int = 4) -> BoundEvaluation:
    """Best dms rate over (a, eta).

    A log grid over ``a in (0, 1)`` and eta, seeded with the two reference
    choices ``beta|tau|/(4 xi)`` and ``1/xi``, followed by alternating golden
    section refinements in log a and log eta.
    """
    if isinstance(lham_astar, OperatorNorm):
        lham_astar = lham_astar.value
    if lham_astar is None:
        raise InvalidArgument("optimize_dms needs the norm of L_ham A^*")
    xi, beta, tau = params.xi, params.beta, abs(params.tau)
    la = np.linspace(math.log(1e-10), math.log(1 - 1e-9), n_grid)
    le = np.linspace(math.log(1e-8), math.log(1e8), n_grid)
    seeds = [1.0 / xi] + ([beta * tau / (4 * xi)] if tau > 0 else [])
    le = np.sort(np.concatenate([le, np.log(seeds)]))
    A, E = np.meshgrid(np.exp(la), np.exp(le), indexing="ij")
    vals = _dms_lambda(params, pc, lham_astar, A, E)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    best = (float(vals[i, j]), la[i], le[j])
    x, y = la[i], le[j]
    da, de = la[1] - la[0], le[1] - le[0]
    amax = math.log(1 - 1e-12)
    for _ in range(rounds):
        x, _ = _golden_max(lambda s: float(_dms_lambda(params, pc, lham_astar, math.exp(s), math.exp(y))),
                           x - da, min(x + da, amax))
        y, v = _golden_max(lambda s: float(_dms_lambda(params, pc, lham_astar, math.exp(x), math.exp(s))),
                           y - de, y + de)
        if v > best[0]:
            best = (v, x, y)
    return dms_rate(params, pc, math.exp(best[1]), math.exp(best[2]), lham_astar)


def optimize(scheme: str, params: ModelParams, pc: PoincareConstants,
             lham_astar: float | OperatorNorm | None = None) -> BoundEvaluation:
    if scheme == "h1":
        return optimize_h1(params, pc)
    if scheme == "dms":
        return optimize_dms(params, pc, lham_astar)
    raise InvalidArgument(f"unknown bound scheme {scheme!r}; expected one of {SCHEMES}")


# -- validation against computed gaps -------------------------------------------

@dataclass
class ValidationRow:
    xi: float
    tau: float
    scheme: str
    a: float
    eta: float
    rate: float
    feasible: bool
    gap: float
    ok: bool | None          # None: not applicable (infeasible bound or no gap)
    gap_bound: float

    def cells(self):
        ok = "na" if self.ok is None else self.ok
        return [self.xi, self.tau, self.scheme, self.a, self.eta, self.rate,
                self.feasible, self.gap, ok, self.gap_bound]


BOUNDS_HEADER = ("xi", "tau", "scheme", "a", "eta", "rate", "feasible", "gap", "ok", "gap_bound")


@dataclass
class ValidationReport:
    rows: list[ValidationRow]

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r.ok is False)

    @property
    def checked(self) -> int:
        return sum(1 for r in self.rows if r.ok is not None)


def validate_bounds(sweep_rows, scheme: str, base: ModelParams, pc: PoincareConstants,
                    lham_astar: float | OperatorNorm | None = None,
                    slack: float = 1e-9) -> ValidationReport:
    """Compare the optimized bound with computed gaps, row by row.

    A row is ``ok`` when ``gap_bound <= gap + slack``.  Infeasible bounds and
    rows without a converged gap are not applicable and never count as
    violations.
    """
    out = []
    for r in sweep_rows:
        ev = optimize(scheme, base.replace(xi=r.xi, tau=r.tau), pc, lham_astar)
        gap = r.gap if r.converged else math.nan
        if not ev.feasible or not math.isfinite(gap):
            ok = None
        else:
            ok = bool(ev.gap_bound <= gap + slack)
        out.append(ValidationRow(r.xi, r.tau, scheme, ev.a, ev.eta, ev.rate,
                                 ev.feasible, gap, ok, ev.gap_bound))
    return ValidationReport(out)

"""Physical model: periodic potential, parameters and derived constants.

The potential enters the discretization only through the Fourier
coefficients of the force,

    u_k = (1/2pi) int_0^{2pi} U'(q) exp(i k q) dq,

so that ``U'(q) = sum_k u_k exp(-i k q)``.  Pointwise values of U, U' and
U'' are reconstructed from this table when a quadrature needs them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidArgument, ResolutionError

TWO_PI = 2.0 * math.pi

#: default number of uniform quadrature points on the torus
QUAD_POINTS = 1024
#: agreement required between successive grid doublings
QUAD_TOL = 1e-12
_MAX_QUAD_POINTS = 1 << 16


@dataclass(frozen=True)
class Potential:
    """Smooth 2pi-periodic potential U.

    Parameters
    ----------
    kind : {"cosine", "fourier"}
        ``cosine`` is the rotor potential ``U0 (1 - cos q)``.  ``fourier``
        takes an explicit table of force coefficients.
    U0 : float
        Amplitude of the cosine potential (ignored for ``fourier``).
    coeffs : mapping int -> complex
        Force coefficients u_k for the ``fourier`` kind.  Only one of k, -k
        needs to be given; the other is filled in by conjugate symmetry.
        The additive constant of U is fixed by requiring zero mean.
    """

    kind: str = "cosine"
    U0: float = 0.0
    coeffs: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("cosine", "fourier"):
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")
        if self.kind == "cosine":
            if not math.isfinite(self.U0):
                raise InvalidArgument("U0 must be finite")
            object.__setattr__(self, "coeffs", {})
            return
        table = {}
        for k, v in dict(self.coeffs).items():
            k = int(k)
            v = complex(v)
            if k == 0:
                if abs(v) > 0:
                    raise InvalidArgument("u_0 must vanish: U' has zero mean on the torus")
                continue
            for kk, vv in ((k, v), (-k, v.conjugate())):
                if kk in table and abs(table[kk] - vv) > 1e-14 * max(1.0, abs(vv)):
                    raise InvalidArgument(
                        f"force coefficients violate u_(-k) = conj(u_k) at k={abs(k)}")
                table[kk] = vv
        object.__setattr__(self, "coeffs", {k: table[k] for k in sorted(table)})

    @classmethod
    def cosine(cls, U0: float) -> "Potential":
        return cls(kind="cosine", U0=float(U0))

    @classmethod
    def from_table(cls, rows) -> "Potential":
        """Build a ``fourier`` potential from ``[(k, re, im), ...]`` rows."""
        return cls(kind="fourier", coeffs={int(k): complex(re, im) for k, re, im in rows})

    @property
    def is_flat(self) -> bool:
        if self.kind == "cosine":
            return self.U0 == 0.0
        return not any(abs(v) > 0 for v in self.coeffs.values())

    def force_table(self) -> dict[int, complex]:
        """Nonzero force coefficients as a dict ``k -> u_k``."""
        if self.kind == "cosine":
            if self.U0 == 0.0:
                return {}
            return {-1: -0.5j * self.U0, 1: 0.5j * self.U0}
        return {k: v for k, v in self.coeffs.items() if abs(v) > 0}

    @property
    def bandwidth(self) -> int:
        """Largest |k| with u_k != 0 (0 for a flat potential)."""
        return max((abs(k) for k in self.force_table()), default=0)

    def U(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "cosine":
            return self.U0 * (1.0 - np.cos(q))
        out = np.zeros_like(q, dtype=complex)
        for k, u in self.force_table().items():
            out += u * np.exp(-1j * k * q) / (-1j * k)
        return out.real

    def dU(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "cosine":
            return self.U0 * np.sin(q)
        out = np.zeros_like(q, dtype=complex)
        for k, u in self.force_table().items():
            out += u * np.exp(-1j * k * q)
        return out.real

    def d2U(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "cosine":
            return self.U0 * np.cos(q)
        out = np.zeros_like(q, dtype=complex)
        for k, u in self.force_table().items():
            out += -1j * k * u * np.exp(-1j * k * q)
        return out.real

    def hess_bound(self) -> float:
        """sup |U''| over the torus."""
        if self.kind == "cosine":
            return abs(self.U0)
        # U'' is a trigonometric polynomial: a fine grid resolves its max
        n = max(QUAD_POINTS, 64 * self.bandwidth)
        return float(np.max(np.abs(self.d2U(_grid(n)))))

    def force_sup(self) -> float:
        """sup |U'| over the torus."""
        if self.kind == "cosine":
            return abs(self.U0)
        n = max(QUAD_POINTS, 64 * self.bandwidth)
        return float(np.max(np.abs(self.dU(_grid(n)))))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the nonequilibrium Langevin dynamics in dimension one (F = 1)."""

    m: float = 1.0
    beta: float = 1.0
    xi: float = 1.0
    tau: float = 0.0
    potential: Potential = field(default_factory=Potential)

    def __post_init__(self):
        for name in ("m", "beta", "xi"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be a positive finite number, got {v!r}")
        if not math.isfinite(self.tau):
            raise InvalidArgument("tau must be finite")
        if not isinstance(self.potential, Potential):
            raise InvalidArgument("potential must be a Potential instance")

    def replace(self, **changes) -> "ModelParams":
        kw = dict(m=self.m, beta=self.beta, xi=self.xi, tau=self.tau, potential=self.potential)
        kw.update(changes)
        return ModelParams(**kw)


@dataclass(frozen=True)
class ModelConstants:
    """Normalization data shared by the steady-state computations.

    Attributes
    ----------
    z_nu : float
        Partition constant of the position marginal, ``int exp(-beta U)``.
    mass_coeffs : ndarray
        ``c_k = <G_k, 1>_{L2(nu)}`` for k = -K..K.
    force_overlaps : ndarray
        ``d_k = <G_k, U'>_{L2(nu)}`` for k = -K..K, used for E[U'].
    K : int
    """

    z_nu: float
    mass_coeffs: np.ndarray
    force_overlaps: np.ndarray
    K: int

    @property
    def parseval_residual(self) -> float:
        return float(1.0 - np.sum(np.abs(self.mass_coeffs) ** 2))


def _grid(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n


def bessel_i0(x: float) -> float:
    """Modified Bessel function I_0 by its power series.

    Terms ``(x^2/4)^j / (j!)^2`` are summed until the term-to-sum ratio drops
    below 1e-16.  Accurate to a few ulps for |x| up to several hundred.
    """
    x = abs(float(x))
    y = 0.25 * x * x
    term = 1.0
    total = 1.0
    j = 0
    while True:
        j += 1
        term *= y / (j * j)
        total += term
        if term <= 1e-16 * total:
            return total
        if j > 10000:  # pragma: no cover - unreachable for finite x
            raise ResolutionError("I0 series did not converge")


def _converged_mean(fn: Callable[[np.ndarray], np.ndarray], n0: int = QUAD_POINTS,
                    tol: float = QUAD_TOL) -> np.ndarray:
    """Uniform-grid mean of a periodic function, doubling the grid until stable."""
    n = n0
    prev = np.asarray(np.mean(fn(_grid(n)), axis=-1))
    while True:
        n *= 2
        cur = np.asarray(np.mean(fn(_grid(n)), axis=-1))
        scale = max(1.0, float(np.max(np.abs(cur))))
        if np.max(np.abs(cur - prev)) <= tol * scale:
            return cur
        if n >= _MAX_QUAD_POINTS:
            raise ResolutionError(
                f"trapezoid quadrature not converged at {n} points "
                f"(change {np.max(np.abs(cur - prev)):.3e})")
        prev = cur


def force_coefficients(potential: Potential, K: int) -> np.ndarray:
    """Force coefficients u_j for j = -2K..2K (array index j + 2K)."""
    if int(K) != K or K < 1:
        raise InvalidArgument(f"truncation K must be an integer >= 1, got {K!r}")
    K = int(K)
    u = np.zeros(4 * K + 1, dtype=complex)
    for j, v in potential.force_table().items():
        if abs(j) <= 2 * K:
            u[j + 2 * K] = v
    return u


def partition_constant(potential: Potential, beta: float) -> float:
    """Z_nu = int_0^{2pi} exp(-beta U(q)) dq."""
    if not (math.isfinite(beta) and beta > 0):
        raise InvalidArgument("beta must be positive")
    if potential.kind == "cosine":
        a = beta * potential.U0
        return TWO_PI * math.exp(-a) * bessel_i0(a)
    return float(TWO_PI * _converged_mean(lambda q: np.exp(-beta * potential.U(q))))


def _projections(potential: Potential, beta: float, K: int, z_nu: float):
    """c_k and d_k for k = -K..K from one FFT pass per grid size."""
    def weights(q):
        g = np.exp(-0.5 * beta * potential.U(q))
        return np.stack([g, g * potential.dU(q)])

    n = QUAD_POINTS
    while n < 4 * K + 16:
        n *= 2
    scale = TWO_PI / math.sqrt(TWO_PI * z_nu)
    ks = np.arange(-K, K + 1)

    def coeffs(n):
        f = weights(_grid(n))
        # fft gives mean(f exp(-i k q_j)) after division by n
        F = np.fft.fft(f, axis=-1) / n
        return scale * F[:, ks % n], scale * np.abs(F[:, n // 2])

    prev, _ = coeffs(n)
    while True:
        n *= 2
        cur, tail = coeffs(n)
        if np.max(np.abs(cur - prev)) <= QUAD_TOL and np.max(tail) <= QUAD_TOL:
            break
        if n >= _MAX_QUAD_POINTS:
            raise ResolutionError(
                f"mass coefficients not resolved at {n} points "
                f"(change {np.max(np.abs(cur - prev)):.3e}, tail {np.max(tail):.3e})")
        prev = cur
    # enforce exact conjugate symmetry
    cur = 0.5 * (cur + np.conj(cur[:, ::-1]))
    return cur[0], cur[1]


def mass_coefficients(potential: Potential, beta: float, K: int,
                      z_nu: float | None = None) -> np.ndarray:
    """Coefficients c_k = <G_k, 1>_{L2(nu)}, k = -K..K, of the constant function."""
    if int(K) != K or K < 1:
        raise InvalidArgument(f"truncation K must be an integer >= 1, got {K!r}")
    if z_nu is None:
        z_nu = partition_constant(potential, beta)
    if potential.is_flat:
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = 1.0
        return c
    return _projections(potential, beta, int(K), z_nu)[0]


def model_constants(params: ModelParams, K: int) -> ModelConstants:
    """Bundle Z_nu, c_k and d_k for the given truncation."""
    if int(K) != K or K < 1:
        raise InvalidArgument(f"truncation K must be an integer >= 1, got {K!r}")
    K = int(K)
    z_nu = partition_constant(params.potential, params.beta)
    if params.potential.is_flat:
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = 1.0
        d = np.zeros(2 * K + 1, dtype=complex)
    else:
        c, d = _projections(params.potential, params.beta, K, z_nu)
    return ModelConstants(z_nu=z_nu, mass_coeffs=c, force_overlaps=d, K=K)

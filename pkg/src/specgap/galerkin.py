"""Galerkin matrix of the generator in the Fourier x Hermite basis.

The basis functions are ``psi_nk(q, p) = G_k(q) H_n(p)`` with

    G_k(q) = sqrt(Z_nu / 2pi) exp(i k q + beta U(q) / 2),
    H_n(p) = He_n(p sqrt(beta/m)) / sqrt(n!),

orthonormal in L2(mu).  Flat index: ``n * (2K+1) + (k + K)``, so k runs
fastest and each Hermite level is a contiguous block of 2K+1 entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from numpy.polynomial import hermite_e as He

from .errors import BasisError, ConsistencyError, InvalidArgument
from .model import ModelParams, force_coefficients


@dataclass(frozen=True)
class BasisSpec:
    """Truncation sizes: Hermite degrees 0..N, Fourier modes -K..K."""

    N: int
    K: int

    def __post_init__(self):
        for name in ("N", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidArgument(f"{name} must be an integer >= 1, got {v!r}")
            object.__setattr__(self, name, int(v))

    @classmethod
    def square(cls, K: int) -> "BasisSpec":
        """The N = 2K basis used throughout the convergence protocol."""
        return cls(N=2 * K, K=K)

    @property
    def nk(self) -> int:
        return 2 * self.K + 1

    @property
    def dim(self) -> int:
        return (self.N + 1) * self.nk

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def index(self, n: int, k: int) -> int:
        if not (0 <= n <= self.N and -self.K <= k <= self.K):
            raise InvalidArgument(f"(n={n}, k={k}) outside basis {self}")
        return n * self.nk + (k + self.K)

    def unravel(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.dim:
            raise InvalidArgument(f"flat index {i} outside [0, {self.dim})")
        n, r = divmod(int(i), self.nk)
        return n, r - self.K

    def block(self, n: int) -> slice:
        return slice(n * self.nk, (n + 1) * self.nk)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Dense Galerkin matrix ``entries[i', i] = <psi_i', A psi_i>``.

    ``adjoint`` is False for the generator L and True for its L2(mu)-adjoint.
    """

    entries: np.ndarray
    params: ModelParams
    basis: BasisSpec
    adjoint: bool = False

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def H(self) -> np.ndarray:
        """Conjugate transpose of the entries."""
        return self.entries.conj().T

    def entry(self, n_row: int, k_row: int, n_col: int, k_col: int) -> complex:
        b = self.basis
        return complex(self.entries[b.index(n_row, k_row), b.index(n_col, k_col)])

    def triplets(self, tol: float = 0.0):
        """Yield ``(n', k', n, k, value)`` for entries with modulus above ``tol``."""
        rows, cols = np.nonzero(np.abs(self.entries) > tol)
        for r, c in zip(rows, cols):
            n1, k1 = self.basis.unravel(r)
            n0, k0 = self.basis.unravel(c)
            yield n1, k1, n0, k0, complex(self.entries[r, c])

    def dump(self, fh: TextIO, tol: float = 0.0) -> int:
        """Write ``n' k' n k re im`` lines; return the number written."""
        count = 0
        for n1, k1, n0, k0, v in self.triplets(tol):
            fh.write(f"{n1} {k1} {n0} {k0} {v.real:.17g} {v.imag:.17g}\n")
            count += 1
        return count


def _toeplitz_force(u: np.ndarray, K: int) -> np.ndarray:
    """Matrix ``T[k', k] = u_{k - k'}`` on modes -K..K (u indexed from -2K)."""
    ks = np.arange(-K, K + 1)
    return u[(ks[None, :] - ks[:, None]) + 2 * K]


def _ladder_blocks(params: ModelParams, basis: BasisSpec):
    """Fourier-space blocks of the raising and lowering parts of L_ham."""
    K, beta = basis.K, params.beta
    u = force_coefficients(params.potential, K)
    Tu = _toeplitz_force(u, K)
    ik = np.diag(1j * basis.ks / beta)
    # <G_k', d_q G_k> / beta and its partner, see module docstring
    raise_blk = ik + 0.5 * Tu
    lower_blk = ik - 0.5 * Tu
    return raise_blk, lower_blk


def assemble(params: ModelParams, basis: BasisSpec) -> GeneratorMatrix:
    """Matrix of L = L_ham + xi L_FD + tau d_p in the psi_nk basis."""
    N, nk = basis.N, basis.nk
    m, beta, xi, tau = params.m, params.beta, params.xi, params.tau
    raise_blk, lower_blk = _ladder_blocks(params, basis)
    eye = np.eye(nk)
    M = np.zeros((basis.dim, basis.dim), dtype=complex)
    for n in range(N + 1):
        col = basis.block(n)
        M[col, col] = -(xi * n / m) * eye
        if n < N:
            M[basis.block(n + 1), col] = math.sqrt(beta * (n + 1) / m) * raise_blk
        if n > 0:
            M[basis.block(n - 1), col] = math.sqrt(beta * n / m) * (lower_blk + tau * eye)
    return GeneratorMatrix(M, params, basis)


def perturbation_matrix(basis: BasisSpec, m: float, beta: float) -> np.ndarray:
    """Matrix of d_p (the forcing direction F = 1): lowering by one Hermite level."""
    P = np.zeros((basis.dim, basis.dim))
    eye = np.eye(basis.nk)
    for n in range(1, basis.N + 1):
        P[basis.block(n - 1), basis.block(n)] = math.sqrt(beta * n / m) * eye
    return P


def _assemble_adjoint_operator(params: ModelParams, basis: BasisSpec) -> np.ndarray:
    """Direct matrix of -L_ham + xi L_FD - tau d_p + (tau beta / m) p."""
    N, nk = basis.N, basis.nk
    m, beta, xi, tau = params.m, params.beta, params.xi, params.tau
    raise_blk, lower_blk = _ladder_blocks(params, basis)
    eye = np.eye(nk)
    A = np.zeros((basis.dim, basis.dim), dtype=complex)
    for n in range(N + 1):
        col = basis.block(n)
        A[col, col] = -(xi * n / m) * eye
        # p H_n = sqrt(m/beta) (sqrt(n+1) H_{n+1} + sqrt(n) H_{n-1})
        mult_up = tau * beta / m * math.sqrt(m / beta) * math.sqrt(n + 1)
        mult_dn = tau * beta / m * math.sqrt(m / beta) * math.sqrt(n)
        dp_dn = -tau * math.sqrt(beta * n / m)
        if n < N:
            A[basis.block(n + 1), col] = -math.sqrt(beta * (n + 1) / m) * raise_blk + mult_up * eye
        if n > 0:
            A[basis.block(n - 1), col] = -math.sqrt(beta * n / m) * lower_blk + (mult_dn + dp_dn) * eye
    return A


def adjoint(gen: GeneratorMatrix, tol: float = 1e-12) -> GeneratorMatrix:
    """L2(mu)-adjoint of an assembled generator.

    The conjugate transpose is returned after checking it entrywise against a
    direct assembly of ``-L_ham + xi L_FD - tau d_p + (tau beta/m) p`` on
    interior indices (Hermite degree below N, Fourier modes away from the
    edge by the potential bandwidth).
    """
    if gen.adjoint:
        raise InvalidArgument("matrix is already an adjoint")
    Mh = gen.H
    direct = _assemble_adjoint_operator(gen.params, gen.basis)
    b = gen.basis
    band = min(gen.params.potential.bandwidth, b.K)
    n_idx, k_idx = np.divmod(np.arange(b.dim), b.nk)
    k_idx = k_idx - b.K
    interior = (n_idx < b.N) & (np.abs(k_idx) <= b.K - band)
    diff = np.abs(Mh - direct)[np.ix_(interior, interior)]
    err = float(diff.max()) if diff.size else 0.0
    scale = max(1.0, float(np.abs(gen.entries).max()))
    if err > tol * scale:
        raise ConsistencyError(f"adjoint mismatch {err:.3e} on interior entries")
    return GeneratorMatrix(Mh, gen.params, gen.basis, adjoint=True)


def real_form_transform(basis: BasisSpec) -> np.ndarray:
    """Unitary V making ``V^H M V`` real for every assembled generator.

    The generator commutes with complex conjugation combined with k -> -k,
    so cosine/sine combinations of the Fourier modes give a real matrix.
    """
    K, nk = basis.K, basis.nk
    V = np.zeros((nk, nk), dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    V[K, 0] = 1.0
    for j, k in enumerate(range(1, K + 1)):
        V[K + k, 2 * j + 1] = s
        V[K - k, 2 * j + 1] = s
        V[K + k, 2 * j + 2] = 1j * s
        V[K - k, 2 * j + 2] = -1j * s
    return V


def to_real_form(M: np.ndarray, basis: BasisSpec, check: bool = True) -> np.ndarray:
    """Apply the real-form similarity level by level (block-diagonal V)."""
    V = real_form_transform(basis)
    nk, L = basis.nk, basis.N + 1
    B = M.reshape(L, nk, L, nk)
    R = np.einsum("ai,manb,bj->minj", V.conj(), B, V, optimize=True).reshape(M.shape)
    if check:
        scale = max(1.0, float(np.abs(R).max()))
        imag = float(np.abs(R.imag).max())
        if imag > 1e-12 * scale:
            raise ConsistencyError(f"real-form transform left imaginary part {imag:.3e}")
    return np.ascontiguousarray(R.real)


def hermite_values(N: int, x: np.ndarray) -> np.ndarray:
    """Normalized He_n(x)/sqrt(n!) for n = 0..N, shape (N+1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((N + 1,) + x.shape)
    out[0] = 1.0
    if N >= 1:
        out[1] = x
    for n in range(1, N):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


@dataclass(frozen=True)
class LadderReport:
    max_residual: float
    lowering: float
    raising: float
    dissipation: float
    orthonormality: float


def hermite_ladder_check(basis: BasisSpec, m: float, beta: float,
                         tol: float = 1e-8) -> LadderReport:
    """Verify the Hermite ladder identities by Gauss quadrature against kappa.

    Checks ``d_p H_n = sqrt(beta n/m) H_{n-1}``,
    ``d_p^* H_n = sqrt(beta (n+1)/m) H_{n+1}`` and ``L_FD H_n = -(n/m) H_n``
    for n <= N.  Derivatives are taken on the monomial-free He-series
    representation, independently of the recurrence being tested.
    """
    N = basis.N
    nodes, weights = He.hermegauss(N + 4)
    weights = weights / weights.sum()
    x = nodes
    p = math.sqrt(m / beta) * x
    s = math.sqrt(beta / m)  # d/dp = s d/dx

    coef = [np.eye(N + 2)[n] / math.sqrt(math.factorial(n)) for n in range(N + 2)]
    vals = np.array([He.hermeval(x, c) for c in coef])
    d1 = np.array([s * He.hermeval(x, He.hermeder(c)) if n else 0 * x
                   for n, c in enumerate(coef)])
    d2 = np.array([s * s * He.hermeval(x, He.hermeder(c, 2)) if n > 1 else 0 * x
                   for n, c in enumerate(coef)])

    def gram(f, g):
        return (f * weights) @ g.T

    Hn = vals[: N + 1]
    G = gram(vals, Hn)  # (N+2) x (N+1)
    ortho = np.abs(gram(Hn, Hn) - np.eye(N + 1)).max()

    dp = gram(vals, d1[: N + 1])
    expect_dp = np.zeros_like(dp)
    for n in range(1, N + 1):
        expect_dp[n - 1, n] = math.sqrt(beta * n / m)
    res_dp = np.abs(dp - expect_dp).max()

    dstar = beta * p / m * Hn - d1[: N + 1]
    ds = gram(vals, dstar)
    expect_ds = np.zeros_like(ds)
    for n in range(N + 1):
        expect_ds[n + 1, n] = math.sqrt(beta * (n + 1) / m)
    res_ds = np.abs(ds - expect_ds).max()

    lfd = -(p / m) * d1[: N + 1] + d2[: N + 1] / beta
    fd = gram(vals, lfd)
    expect_fd = np.zeros_like(fd)
    for n in range(N + 1):
        expect_fd[n, n] = -n / m
    res_fd = np.abs(fd - expect_fd).max()

    rep = LadderReport(max_residual=float(max(res_dp, res_ds, res_fd, ortho)),
                       lowering=float(res_dp), raising=float(res_ds),
                       dissipation=float(res_fd), orthonormality=float(ortho))
    if rep.max_residual > tol:
        raise BasisError(f"Hermite ladder residual {rep.max_residual:.3e} exceeds {tol:g}")
    return rep

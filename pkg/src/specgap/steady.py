"""Stationary density and the observables derived from it.

The nonequilibrium steady state has density h with respect to the Gibbs
measure mu, solving ``L^* h = 0`` with ``<1, h> = 1``.  Everything below
works on coefficient vectors in the psi_nk basis; the constant function is
represented by ``w = c (x) H_0`` where ``c_k = <G_k, 1>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (ConsistencyError, DegenerateKernelError, InvalidArgument,
                     NormalizationError, NumericalError, ResolutionError)
from .galerkin import (BasisSpec, GeneratorMatrix, assemble, hermite_values,
                       perturbation_matrix, to_real_form)
from .model import ModelConstants, ModelParams, model_constants
from .spectral import eigenvalues

KERNEL_TOL = 1e-9
IMAG_TOL = 1e-10
POSITIVITY_FLOOR = 1e-6
#: half-width of the momentum window, in units of the thermal momentum
P_WINDOW = 6.0


def constant_vector(basis: BasisSpec, constants: ModelConstants) -> np.ndarray:
    """Coefficients of the constant function 1 (mass coefficients on level 0)."""
    _check_constants(basis, constants)
    w = np.zeros(basis.dim, dtype=complex)
    w[basis.block(0)] = constants.mass_coeffs
    return w


def velocity_vector(basis: BasisSpec, constants: ModelConstants, m: float, beta: float) -> np.ndarray:
    """Coefficients of p/m = H_1 / sqrt(beta m)."""
    f = np.zeros(basis.dim, dtype=complex)
    f[basis.block(1)] = constants.mass_coeffs / math.sqrt(beta * m)
    return f


def _check_constants(basis: BasisSpec, constants: ModelConstants):
    if constants.K != basis.K:
        raise InvalidArgument(f"constants built for K={constants.K}, basis has K={basis.K}")


@dataclass
class SteadyState:
    """Normalized kernel of the adjoint generator.

    ``coeffs[n * (2K+1) + k + K]`` is the coefficient of psi_nk.
    """

    coeffs: np.ndarray
    params: ModelParams
    basis: BasisSpec
    residual: float
    real_defect: float = 0.0
    matrix_norm: float = 1.0

    def level(self, n: int) -> np.ndarray:
        return self.coeffs[self.basis.block(n)]

    def mass(self, constants: ModelConstants) -> complex:
        return complex(np.vdot(constants.mass_coeffs, self.level(0)))


@dataclass
class Observables:
    v_tau: float
    kinetic_moment: float
    fisher: float | None = None
    diffusivity: float | None = None
    series_radius_estimate: float | None = None
    extras: dict = field(default_factory=dict)


def _mirror(basis: BasisSpec, x: np.ndarray) -> np.ndarray:
    """The map h_{n,k} -> conj(h_{n,-k})."""
    L, nk = basis.N + 1, basis.nk
    return np.conj(x.reshape(L, nk)[:, ::-1]).reshape(-1)


def _bordered(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``[[A, w], [w^H, 0]]``: solves on the mass-zero complement of w."""
    n = A.shape[0]
    B = np.zeros((n + 1, n + 1), dtype=np.result_type(A, w))
    B[:n, :n] = A
    B[:n, n] = w
    B[n, :n] = np.conj(w)
    return B


def _solve_complement(A: np.ndarray, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """x with ``A x = rhs + s w`` (s a Lagrange multiplier) and ``w^H x = 0``."""
    B = _bordered(A, w)
    R = np.zeros((B.shape[0],) + rhs.shape[1:], dtype=B.dtype if np.iscomplexobj(rhs) else np.result_type(B, rhs))
    R[: A.shape[0]] = rhs
    try:
        lu = sla.lu_factor(B, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"complement solve failed: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.abs(B).max():
        raise NumericalError("generator is singular on the mass-zero complement")
    return sla.lu_solve(lu, R, check_finite=False)[: A.shape[0]]


def stationary_density(gen: GeneratorMatrix, constants: ModelConstants,
                       check_multiplicity: bool = True,
                       kernel_tol: float = KERNEL_TOL) -> SteadyState:
    """Kernel vector of the adjoint matrix, normalized to unit mass.

    The eigenvalue of smallest modulus is located from the (real-form)
    spectrum, and its eigenvector is obtained by inverse iteration started
    from the constant function.
    """
    basis = gen.basis
    _check_constants(basis, constants)
    M = gen.entries
    Mh = M.conj().T if not gen.adjoint else M
    scale = float(np.linalg.norm(M))
    w = constant_vector(basis, constants)

    shift = 0.0
    if check_multiplicity:
        ev = eigenvalues(gen if not gen.adjoint else
                         GeneratorMatrix(Mh, gen.params, gen.basis), real_form=True)
        mods = np.sort(np.abs(ev))
        if mods[1] <= max(1e3 * mods[0], 1e-10 * scale):
            raise DegenerateKernelError(
                f"two eigenvalues near zero: |z0|={mods[0]:.3e}, |z1|={mods[1]:.3e}")
        shift = float(mods[0])

    # inverse iteration on L^*; a tiny real shift keeps the LU nonsingular
    eps = max(shift, 1e-14 * scale)
    try:
        lu = sla.lu_factor(Mh - eps * np.eye(basis.dim), check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"kernel factorization failed: {exc}") from exc
    # start near the constant function, with a small component everywhere
    x = w + 1e-3 * np.ones(basis.dim) / math.sqrt(basis.dim)
    for _ in range(3):
        x = sla.lu_solve(lu, x, check_finite=False)
        x /= np.linalg.norm(x)

    mass = np.vdot(constants.mass_coeffs, x[basis.block(0)])
    if abs(mass) < 1e-12:
        raise NormalizationError("kernel vector has zero mass")
    h = x / mass
    real_defect = float(np.max(np.abs(h - _mirror(basis, h))))
    h = 0.5 * (h + _mirror(basis, h))
    residual = float(np.linalg.norm(Mh @ h))
    if residual > kernel_tol * scale:
        raise NumericalError(f"kernel residual {residual:.3e} exceeds {kernel_tol:g} * |M|")
    return SteadyState(h, gen.params, basis, residual, real_defect, scale)


def steady_state(params: ModelParams, basis: BasisSpec,
                 constants: ModelConstants | None = None, **kw) -> SteadyState:
    if constants is None:
        constants = model_constants(params, basis.K)
    return stationary_density(assemble(params, basis), constants, **kw)


def _real(z: complex, what: str, tol: float = IMAG_TOL) -> float:
    if abs(z.imag) > tol * max(1.0, abs(z.real)):
        raise ConsistencyError(f"{what} has imaginary part {z.imag:.3e}")
    return float(z.real)


def mean_velocity(ss: SteadyState, constants: ModelConstants) -> float:
    """E_tau[p/m] = sum_k conj(c_k) h_{1,k} / sqrt(beta m)."""
    p = ss.params
    z = np.vdot(constants.mass_coeffs, ss.level(1)) / math.sqrt(p.beta * p.m)
    return _real(complex(z), "v_tau")


def kinetic_moment(ss: SteadyState, constants: ModelConstants) -> float:
    """E_tau[p^2/m], using p^2 = (m/beta)(sqrt(2) H_2 + H_0)."""
    c = constants.mass_coeffs
    h2 = ss.level(2) if ss.basis.N >= 2 else np.zeros_like(c)
    z = (math.sqrt(2.0) * np.vdot(c, h2) + np.vdot(c, ss.level(0))) / ss.params.beta
    return _real(complex(z), "E[p^2/m]")


def mean_force(ss: SteadyState, constants: ModelConstants) -> float:
    """E_tau[U'(q)]."""
    z = np.vdot(constants.force_overlaps, ss.level(0))
    return _real(complex(z), "E[U']")


def identity_residuals(ss: SteadyState, constants: ModelConstants) -> tuple[float, float]:
    """Defects of the velocity identity and the energy balance.

    Returns ``|v - (tau - E[U'])/xi|`` and
    ``|tau v + (xi/m)(1/beta - E[p^2/m])|``.
    """
    p = ss.params
    v = mean_velocity(ss, constants)
    vel = abs(v - (p.tau - mean_force(ss, constants)) / p.xi)
    energy = abs(p.tau * v + p.xi / p.m * (1.0 / p.beta - kinetic_moment(ss, constants)))
    return vel, energy


def _evaluate_density(ss: SteadyState, constants: ModelConstants, nq: int, npts: int,
                      window: float):
    """h and d_p h on a (q, p) tensor grid, with the quadrature weights of mu.

    The rescaled momentum x = p sqrt(beta/m) is restricted to |x| <= window
    (Gauss-Legendre nodes against the Gaussian weight).  Outside it the
    truncated Hermite expansion is meaningless while mu carries negligible
    mass.
    """
    p = ss.params
    b = ss.basis
    q = 2 * math.pi * np.arange(nq) / nq
    U = p.potential.U(q)
    gq = math.sqrt(constants.z_nu / (2 * math.pi)) * np.exp(
        1j * np.outer(q, b.ks) + 0.5 * p.beta * U[:, None])          # (nq, nk)
    wq = np.exp(-p.beta * U) / constants.z_nu * (2 * math.pi / nq)
    t, wt = np.polynomial.legendre.leggauss(npts)
    x = window * t
    wx = window * wt * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    Hx = hermite_values(b.N, x)                                       # (N+1, np)
    C = ss.coeffs.reshape(b.N + 1, b.nk)
    n = np.arange(b.N + 1)
    # d_p H_n = sqrt(beta n / m) H_{n-1}
    Cd = np.zeros_like(C)
    Cd[:-1] = C[1:] * np.sqrt(p.beta * n[1:] / p.m)[:, None]
    h = np.real(Hx.T @ C @ gq.T)                                      # (np, nq)
    dh = np.real(Hx.T @ Cd @ gq.T)
    return h, dh, np.outer(wx, wq)


def fisher_information(ss: SteadyState, constants: ModelConstants,
                       grid: tuple[int, int] = (128, 96), rtol: float = 1e-8,
                       floor: float = POSITIVITY_FLOOR,
                       window: float = P_WINDOW) -> float | None:
    """Degenerate Fisher information ``int |d_p h|^2 / h dmu``.

    Returns None when the reconstructed density drops below ``floor`` on the
    grid (truncation made it sign-indefinite).  The grid is doubled once and
    the two values must agree to ``rtol``.
    """
    nq, npts = grid
    vals = []
    for scale in (1, 2):
        h, dh, wts = _evaluate_density(ss, constants, nq * scale, npts * scale, window)
        if h.min() < floor:
            return None
        vals.append(float(np.sum(wts * dh * dh / h)))
    diff = abs(vals[1] - vals[0])
    if diff > rtol * abs(vals[1]) and diff > 1e-14:
        raise ResolutionError(f"Fisher quadrature not converged: {vals[0]!r} vs {vals[1]!r}")
    return vals[1]


def observables(ss: SteadyState, constants: ModelConstants, with_fisher: bool = True) -> Observables:
    v = mean_velocity(ss, constants)
    obs = Observables(v_tau=v, kinetic_moment=kinetic_moment(ss, constants))
    if with_fisher:
        obs.fisher = fisher_information(ss, constants)
    return obs


@dataclass
class SeriesResult:
    """Terms ``(-tau)^n [(L_pert L_0^{-1})^*]^n 1`` and their partial sums."""

    terms: list[np.ndarray]
    radius: float
    spectral_radius: float
    tau: float

    @property
    def iterates(self) -> list[np.ndarray]:
        return list(np.cumsum(np.array(self.terms), axis=0))

    @property
    def partial_sum(self) -> np.ndarray:
        return np.sum(self.terms, axis=0)

    @property
    def term_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(t) for t in self.terms])

    def growth_ratio(self, tail: int = 8) -> float:
        """Geometric-mean ratio of successive term norms over the last ``tail`` terms."""
        norms = self.term_norms[1:]
        norms = norms[-(tail + 1):]
        if len(norms) < 2 or norms[0] == 0:
            return 0.0
        if norms[-1] == 0:
            return 0.0
        return float((norms[-1] / norms[0]) ** (1.0 / (len(norms) - 1)))

    @property
    def diverging(self) -> bool:
        return self.growth_ratio() > 1.0


def series_operator(params: ModelParams, basis: BasisSpec, constants: ModelConstants):
    """Dense matrix of ``(L_pert L_0^{-1})^* = (L_0^*)^{-1} d_p^*`` on the complement."""
    M0 = assemble(params.replace(tau=0.0), basis).entries
    P = perturbation_matrix(basis, params.m, params.beta)
    w = constant_vector(basis, constants)
    return _solve_complement(M0.conj().T, w, P.T.astype(complex)), w


def perturbative_series(params: ModelParams, basis: BasisSpec, order: int,
                        constants: ModelConstants | None = None) -> SeriesResult:
    """Partial sums of the power series of h_tau in tau, plus its radius.

    The radius estimate is ``1/rho`` where rho is the spectral radius of the
    finite iteration matrix (infinite if the matrix is nilpotent).
    """
    if int(order) != order or order < 0:
        raise InvalidArgument("order must be a non-negative integer")
    if constants is None:
        constants = model_constants(params, basis.K)
    B, w = series_operator(params, basis, constants)
    terms = [w.copy()]
    t = w.copy()
    for _ in range(int(order)):
        t = -params.tau * (B @ t)
        terms.append(t)
    rho = spectral_radius(B, basis)
    radius = math.inf if rho <= 1e-12 else 1.0 / rho
    return SeriesResult(terms, radius, rho, params.tau)


def spectral_radius(B: np.ndarray, basis: BasisSpec) -> float:
    """Largest eigenvalue modulus of the iteration matrix (dense, real form)."""
    try:
        ev = sla.eigvals(to_real_form(B, basis), check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"series operator eigensolve failed: {exc}") from exc
    return float(np.max(np.abs(ev)))


@dataclass
class EinsteinResult:
    diffusivity: float
    mobility_fd: float
    defect: float
    tau_fd: float
    v_plus: float
    v_minus: float


def diffusivity(params: ModelParams, basis: BasisSpec,
                constants: ModelConstants | None = None) -> float:
    """Green-Kubo diffusivity ``<Phi, p/m>`` with ``-L_0 Phi = p/m``."""
    if constants is None:
        constants = model_constants(params, basis.K)
    M0 = assemble(params.replace(tau=0.0), basis).entries
    f = velocity_vector(basis, constants, params.m, params.beta)
    w = constant_vector(basis, constants)
    phi = _solve_complement(-M0, w, f)
    return _real(complex(np.vdot(phi, f)), "diffusivity")


def diffusivity_and_einstein(params: ModelParams, basis: BasisSpec,
                             tau_fd: float | None = None,
                             constants: ModelConstants | None = None) -> EinsteinResult:
    """Diffusivity, finite-difference mobility and the Einstein defect.

    ``params.tau`` must be zero; the mobility is the central difference of
    v_tau at +-tau_fd (default ``0.05 min(xi, 1)``).
    """
    if params.tau != 0.0:
        raise InvalidArgument("the Einstein relation is evaluated at tau = 0")
    if tau_fd is None:
        tau_fd = 0.05 * min(params.xi, 1.0)
    if not tau_fd > 0:
        raise InvalidArgument("tau_fd must be positive")
    if constants is None:
        constants = model_constants(params, basis.K)
    D = diffusivity(params, basis, constants)
    vs = []
    for t in (tau_fd, -tau_fd):
        ss = stationary_density(assemble(params.replace(tau=t), basis), constants,
                                check_multiplicity=False)
        vs.append(mean_velocity(ss, constants))
    mob = (vs[0] - vs[1]) / (2 * tau_fd)
    return EinsteinResult(D, mob, abs(mob - params.beta * D), tau_fd, vs[0], vs[1])

import math

import numpy as np
import pytest

from specgap.bounds import (PoincareConstants, dms_rate, h1_matrices, h1_rate, kozlov_gap,
                            lambda_min_2x2, lham_astar_matrix, norm_LhamAstar, optimize_dms,
                            optimize_h1, overdamped_matrix, poincare_constants, poincare_nu,
                            validate_bounds)
from specgap.errors import InvalidArgument
from specgap.model import ModelParams, Potential
from specgap.spectral import SweepRow


@pytest.fixture(scope="module")
def cos1():
    p = ModelParams(potential=Potential.cosine(1.0))
    return p, poincare_constants(p), norm_LhamAstar(p)


def eig_min(a, b, c):
    return np.linalg.eigvalsh([[a, b / 2], [b / 2, c]])[0]


@pytest.mark.parametrize("abc,expect", [((1, 0, 1), 1.0), ((1, 2, 1), 0.0), ((3, 0, 1), 1.0)])
def test_lambda_min_trivial(abc, expect):
    assert lambda_min_2x2(*abc) == pytest.approx(expect, abs=1e-15)


def test_lambda_min_against_eigh():
    # [[2, 1/2], [1/2, 1]] has smallest eigenvalue 3/2 - sqrt(2)/2
    assert lambda_min_2x2(2, 1, 1) == pytest.approx(1.5 - math.sqrt(2) / 2, rel=1e-15)
    assert lambda_min_2x2(2, 1, 1) == pytest.approx(eig_min(2, 1, 1), rel=1e-14)


def test_lambda_min_forms_agree():
    rng = np.random.default_rng(1)
    a, b, c = rng.uniform(0.1, 3, size=(3, 200))
    direct = 0.5 * (a + c) - 0.5 * np.sqrt((a - c) ** 2 + b ** 2)
    np.testing.assert_allclose(lambda_min_2x2(a, b, c), direct, rtol=0, atol=1e-14)


@pytest.mark.parametrize("args,expect", [((0.5, 1, 1), 0.5), ((1, 1, 1), 1.0), ((4, 2, 0.5), 0.5)])
def test_kozlov_gap(args, expect):
    assert kozlov_gap(*args) == expect


def test_kozlov_gap_rejects_nonpositive():
    with pytest.raises(InvalidArgument):
        kozlov_gap(0.0)


def test_overdamped_flat_spectrum():
    ev = np.linalg.eigvalsh(-overdamped_matrix(Potential.cosine(0.0), 2.0, 4))
    np.testing.assert_allclose(np.sort(ev), np.sort([k * k / 2.0 for k in range(-4, 5)]), atol=1e-13)


def test_poincare_flat_is_one_for_every_beta():
    # at U0 = 0, nu is uniform: ||phi|| <= ||phi'|| for every beta
    for beta in (0.25, 1.0, 4.0):
        assert poincare_nu(Potential.cosine(0.0), beta) == pytest.approx(1.0, abs=1e-13)


def test_poincare_cosine_stable_and_cross_checked():
    k = poincare_nu(Potential.cosine(1.0), 1.0, K=8)
    assert abs(k - poincare_nu(Potential.cosine(1.0), 1.0, K=16)) < 1e-8
    # independent oracle: Rayleigh quotient of a finite-difference discretization of
    # -(1/beta) e^{beta U} (e^{-beta U} phi')' on a uniform grid
    n = 2000
    h = 2 * math.pi / n
    q = h * np.arange(n)
    w = np.exp(-(1 - np.cos(q + h / 2)))      # weight at midpoints
    wc = np.exp(-(1 - np.cos(q)))
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = (w[i] + w[i - 1]) / h ** 2
        A[i, (i + 1) % n] = -w[i] / h ** 2
        A[i, i - 1] = -w[i - 1] / h ** 2
    from scipy.linalg import eigh
    ev = eigh(A, np.diag(wc), eigvals_only=True, subset_by_index=[0, 1])
    assert k == pytest.approx(math.sqrt(ev[1]), rel=1e-5)
    assert k == pytest.approx(1.079581646, rel=1e-9)


def test_poincare_requires_k8():
    with pytest.raises(InvalidArgument):
        poincare_nu(Potential.cosine(1.0), 1.0, K=4)


def test_poincare_constants_fields():
    pc = poincare_constants(ModelParams(m=2.0, beta=0.5, potential=Potential.cosine(3.0)))
    assert pc.k_kappa == pytest.approx(0.5)
    assert pc.hess_bound == 3.0
    assert pc.k_nu > 0


def test_lham_astar_flat_closed_form():
    p = ModelParams()
    for K in (1, 5, 20):
        sigma = np.linalg.norm(lham_astar_matrix(p, K), 2)
        assert sigma == pytest.approx(math.sqrt(3) * K * K / (1 + K * K), rel=1e-13)
    assert np.linalg.norm(lham_astar_matrix(p, 20), 2) == pytest.approx(1.7277, abs=5e-5)


def test_lham_astar_flat_scaling_in_m_beta():
    # per mode: sqrt(3) (k^2/(m beta)) / (1 + k^2/(m beta))
    p = ModelParams(m=2.0, beta=0.5)
    s = np.linalg.norm(lham_astar_matrix(p, 3), 2)
    assert s == pytest.approx(math.sqrt(3) * 9 / (1 + 9), rel=1e-13)


def test_lham_astar_norm_estimates():
    n1 = norm_LhamAstar(ModelParams(potential=Potential.cosine(1.0)))
    # truncated values creep up to the high-frequency limit from below
    assert n1.raw < n1.raw_2K < math.sqrt(3)
    assert n1.value == pytest.approx(math.sqrt(3))
    n10 = norm_LhamAstar(ModelParams(potential=Potential.cosine(10.0)))
    assert n10.raw == pytest.approx(n10.raw_2K, abs=1e-6)
    assert n10.value > math.sqrt(3)


def test_h1_matrices_flat_example():
    p = ModelParams(xi=1.0)
    pc = PoincareConstants(1.0, 1.0, 0.0)
    S, T, P, eta = h1_matrices(p, pc, 0.1)
    np.testing.assert_allclose(S, [[1.1, -0.1], [-0.1, 0.1]], atol=1e-15)
    np.testing.assert_allclose(P, [[1.1, 0.1], [0.1, 1.1]], atol=1e-15)
    assert eta == 0.0
    ev = h1_rate(p, pc, 0.1)
    assert ev.feasible and ev.rate > 0
    # generalized eigenvalue oracle
    from scipy.linalg import eigh
    assert ev.rate == pytest.approx(eigh(S, P, eigvals_only=True)[0], rel=1e-12)


def test_h1_pencil_against_scipy(cos1):
    from scipy.linalg import eigh
    p, pc, _ = cos1
    for xi, tau, a in ((0.3, 0.01, 0.05), (4.0, 0.02, 0.1), (1.0, 0.0, 0.3)):
        ev = h1_rate(p.replace(xi=xi, tau=tau), pc, a)
        ref = eigh(ev.S - tau * ev.T, ev.P, eigvals_only=True)[0]
        if ref > 0:
            assert ev.rate == pytest.approx(ref, rel=1e-12)
        else:
            assert not ev.feasible


def test_h1_first_order_in_delta(cos1):
    p, pc, _ = cos1
    for xi in (0.1, 1.0, 10.0):
        s = min(xi, 1 / xi)
        r = [optimize_h1(p.replace(xi=xi, tau=d * s), pc).rate for d in (0.0, 0.01, 0.02)]
        assert r[0] > r[1] > r[2] > 0
        # linear trend: the two decrements agree to first order
        assert (r[0] - r[2]) == pytest.approx(2 * (r[0] - r[1]), rel=0.1)


def test_h1_feasibility_window(cos1):
    p, pc, _ = cos1
    for xi in (0.01, 100.0):
        assert optimize_h1(p.replace(xi=xi, tau=0.1 * min(xi, 1 / xi)), pc).feasible
    # small friction: the window closes like xi
    assert not optimize_h1(p.replace(xi=0.01, tau=0.1), pc).feasible
    # large friction: with a optimized per xi the window saturates at an O(1) forcing
    # (the entry S_qq - |tau| T_qq = a (1 - |tau| beta / K_nu) / m caps it below K_nu / beta)
    assert optimize_h1(p.replace(xi=100.0, tau=0.5), pc).feasible
    assert not optimize_h1(p.replace(xi=100.0, tau=pc.k_nu), pc).feasible


def test_dms_requires_operator_norm(cos1):
    p, pc, _ = cos1
    with pytest.raises(InvalidArgument):
        dms_rate(p, pc, 0.1, 1.0)
    with pytest.raises(InvalidArgument):
        dms_rate(p, pc, 1.5, 1.0, 2.0)


def test_dms_rate_normalizations(cos1):
    p, pc, n = cos1
    ev = dms_rate(p.replace(xi=2.0), pc, 0.2, 0.5, n)
    lam = ev.extras["lambda_minus"]
    A = ev.S - 0 * ev.T
    assert lam == pytest.approx(np.linalg.eigvalsh(A)[0], rel=1e-12)
    assert ev.rate == pytest.approx(2 * lam / 1.2)
    assert ev.gap_bound == pytest.approx(lam / 1.2)


def test_dms_feasible_at_order_one_forcing_for_large_xi(cos1):
    p, pc, n = cos1
    for xi in (10.0, 100.0):
        assert dms_rate(p.replace(xi=xi, tau=0.01), pc, 0.5 / xi, 1 / xi, n).feasible
    for xi in np.logspace(-2, 2, 9):
        assert optimize_dms(p.replace(xi=xi, tau=0.01 * min(xi, 1)), pc, n).feasible


def test_optimized_rates_scale_with_min_xi(cos1):
    p, pc, n = cos1
    xis = np.logspace(-2, 2, 9)
    for opt in (lambda q: optimize_h1(q, pc), lambda q: optimize_dms(q, pc, n)):
        scaled = [opt(p.replace(xi=xi)).rate / min(xi, 1 / xi) for xi in xis]
        assert min(scaled) > 0
        assert max(scaled) / min(scaled) <= 50


def test_optimization_refinement_invariance(cos1):
    p, pc, n = cos1
    for xi, tau in ((0.2, 0.0), (3.0, 0.05), (30.0, 0.01)):
        q = p.replace(xi=xi, tau=tau)
        assert optimize_h1(q, pc, n_grid=481).rate == pytest.approx(optimize_h1(q, pc).rate, rel=1e-2)
        assert optimize_dms(q, pc, n, n_grid=241).rate == pytest.approx(optimize_dms(q, pc, n).rate, rel=1e-2)


def test_flat_dms_bound_below_exact_gap():
    p = ModelParams()
    pc, n = poincare_constants(p), norm_LhamAstar(p)
    rows = [SweepRow(xi, 0.0, 0.0, 1.0, 1.0, 4, 8, kozlov_gap(xi), True) for xi in (0.1, 1.0, 10.0)]
    rep = validate_bounds(rows, "dms", p, pc, n)
    assert rep.violations == 0 and rep.checked == 3


def test_validate_marks_infeasible_and_unconverged(cos1):
    p, pc, n = cos1
    rows = [SweepRow(0.01, 5.0, 1.0, 1.0, 1.0, 20, 40, 0.01, True),
            SweepRow(1.0, 0.0, 1.0, 1.0, 1.0, 20, 40, 0.7, False),
            SweepRow(1.0, 0.0, 1.0, 1.0, 1.0, 8, 16, 1e-6, True)]
    rep = validate_bounds(rows, "h1", p, pc, n)
    assert [r.ok for r in rep.rows] == [None, None, False]
    assert rep.violations == 1
    assert rep.rows[0].cells()[8] == "na"

import math

import numpy as np
import pytest
import scipy.sparse.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from brwp.errors import UsageError
from brwp.prox_math import (
    LinearDataFit,
    ProxParams,
    erf_interval,
    log_erf_interval,
    logsumexp,
    moreau_grad_l1,
    project_linf_ball,
    prox_l2_datafit,
    shrink,
    softmax_stable,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 8), elements=finite)


def test_shrink_examples():
    np.testing.assert_allclose(shrink([0.5], 0.3), [0.2], atol=1e-15)
    np.testing.assert_array_equal(shrink([-0.1, 0.0], 0.3), [0.0, 0.0])
    np.testing.assert_allclose(shrink([-1.0], 0.3), [-0.7], atol=1e-15)


def test_shrink_at_threshold_is_zero():
    assert shrink([0.3], 0.3)[0] == 0.0


def test_shrink_rejects_negative_threshold():
    with pytest.raises(UsageError):
        shrink([1.0], -0.1)


@given(vectors, st.floats(0, 10))
def test_shrink_contraction(x, tau):
    y = x[::-1].copy()
    lhs = np.linalg.norm(shrink(x, tau) - shrink(y, tau))
    assert lhs <= np.linalg.norm(x - y) + 1e-9


def test_moreau_grad_examples():
    p = ProxParams(lam=1.0, h=0.5)
    np.testing.assert_allclose(moreau_grad_l1([2.0], p), [1.0])
    np.testing.assert_allclose(moreau_grad_l1([0.2], p), [0.4])
    assert moreau_grad_l1([0.0], ProxParams(lam=3.0, h=0.1))[0] == 0.0


@given(vectors, st.floats(0, 5), st.floats(1e-3, 2))
def test_moreau_grad_bounded_and_consistent(x, lam, h):
    p = ProxParams(lam=lam, h=h)
    g = moreau_grad_l1(x, p)
    # (x - S(x)) / h loses about ulp(x) / h to cancellation
    slack = 4 * np.finfo(float).eps * np.max(np.abs(x)) / h
    assert np.all(np.abs(g) <= lam + slack + 1e-15)
    np.testing.assert_allclose(h * g + shrink(x, lam * h), x, rtol=1e-12, atol=1e-9)


def test_prox_params_validation():
    with pytest.raises(UsageError):
        ProxParams(h=0.0)
    with pytest.raises(UsageError):
        ProxParams(beta=-1.0)
    with pytest.raises(UsageError):
        ProxParams(lam=-0.1)


def test_prox_l2_identity_operator():
    data = LinearDataFit(np.eye(1), np.zeros(1))
    np.testing.assert_allclose(prox_l2_datafit(np.array([1.0]), data, 1.0), [0.5])


def test_prox_l2_zero_operator_is_identity():
    data = LinearDataFit(np.zeros((2, 3)), np.ones(2))
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(prox_l2_datafit(v, data, 0.7), v)


def test_prox_l2_matches_conjugate_gradient():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(3, 5))
    phi = rng.normal(size=3)
    v = rng.normal(size=5)
    h = 0.37
    op = scipy.sparse.linalg.LinearOperator((5, 5), matvec=lambda x: x + h * F.T @ (F @ x))
    ref, info = scipy.sparse.linalg.cg(op, v + h * F.T @ phi, rtol=1e-14, atol=0.0)
    assert info == 0
    got = prox_l2_datafit(v, LinearDataFit(F, phi), h)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_prox_l2_operator_form_matches_dense():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(4, 6))
    phi = rng.normal(size=4)
    v = rng.normal(size=(3, 6))
    op = scipy.sparse.linalg.aslinearoperator(F)
    dense = prox_l2_datafit(v, LinearDataFit(F, phi), 0.2)
    lazy = prox_l2_datafit(v, LinearDataFit(op, phi), 0.2)
    np.testing.assert_allclose(lazy, dense, atol=1e-9)


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(1e-3, 10), st.integers(0, 2**31))
def test_prox_l2_first_order_optimality(m, d, h, seed):
    # stationarity of 0.5 ||phi - F u||^2 + ||u - v||^2 / (2h)
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(m, d))
    phi = rng.normal(size=m)
    v = rng.normal(size=d)
    u = prox_l2_datafit(v, LinearDataFit(F, phi), h)
    grad = F.T @ (F @ u - phi) + (u - v) / h
    assert np.linalg.norm(grad) <= 1e-8 * max(1.0, 1.0 / h)


def test_prox_l2_shape_errors():
    with pytest.raises(UsageError):
        LinearDataFit(np.eye(3), np.zeros(2))
    data = LinearDataFit(np.eye(3), np.zeros(3))
    with pytest.raises(UsageError):
        prox_l2_datafit(np.zeros(4), data, 1.0)


def test_datafit_value_and_gradient():
    rng = np.random.default_rng(2)
    data = LinearDataFit(rng.normal(size=(3, 4)), rng.normal(size=3))
    u = rng.normal(size=4)
    eps = 1e-6
    fd = np.array([(data.value(u + eps * e) - data.value(u - eps * e)) / (2 * eps)
                   for e in np.eye(4)])
    np.testing.assert_allclose(data.grad(u), fd, rtol=1e-6, atol=1e-8)


def test_project_linf_examples():
    np.testing.assert_array_equal(project_linf_ball([2.0, -0.5]), [1.0, -0.5])
    np.testing.assert_array_equal(project_linf_ball([0.0]), [0.0])
    np.testing.assert_array_equal(project_linf_ball([-3.0]), [-1.0])


@given(vectors)
def test_project_linf_in_ball_and_idempotent(y):
    z = project_linf_ball(y)
    assert np.all(np.abs(z) <= 1.0)
    np.testing.assert_array_equal(project_linf_ball(z), z)


def test_logsumexp_examples():
    assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)
    assert logsumexp([-3.5]) == -3.5
    with pytest.raises(UsageError):
        logsumexp([])


def test_softmax_examples():
    np.testing.assert_allclose(softmax_stable([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)
    a = 0.3
    np.testing.assert_allclose(softmax_stable([a, a + math.log(2)]), [1 / 3, 2 / 3], atol=1e-15)
    v = np.array([0.1, -2.0, 3.0])
    np.testing.assert_allclose(softmax_stable(v + 1e6), softmax_stable(v), atol=1e-10)
    with pytest.raises(UsageError):
        softmax_stable([])


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(-700, 700)))
def test_softmax_sums_to_one_and_equivariant(v):
    w = softmax_stable(v)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-12
    perm = np.arange(v.size)[::-1]
    np.testing.assert_allclose(softmax_stable(v[perm]), w[perm], rtol=1e-12, atol=1e-300)


def test_erf_interval_examples():
    assert erf_interval(-np.inf, np.inf) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert erf_interval(0.0, 0.0) == 0.0
    ref, _ = integrate.quad(lambda y: math.exp(-y * y), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    assert erf_interval(0.0, 1.0) == pytest.approx(ref, rel=1e-13)
    assert erf_interval(0.0, 1.0) == pytest.approx(0.746824132812427, rel=1e-13)
    with pytest.raises(UsageError):
        erf_interval(1.0, 0.0)


def test_erf_interval_deep_tails():
    # both tails far out: compare the log against the asymptotic erfc expansion
    a = 30.0
    expected = -a * a - math.log(2 * a)  # log of the integral from a to inf, leading order
    assert log_erf_interval(a, np.inf) == pytest.approx(expected, rel=1e-3)
    assert log_erf_interval(-np.inf, -a) == log_erf_interval(a, np.inf)


@given(st.floats(-6, 6), st.floats(0, 4), st.floats(0, 4))
def test_erf_interval_additive(a, d1, d2):
    b, c = a + d1, a + d1 + d2
    lhs = erf_interval(a, c)
    rhs = erf_interval(a, b) + erf_interval(b, c)
    assert abs(lhs - rhs) <= 1e-12


@given(st.floats(-6, 6), st.floats(0, 4))
def test_erf_interval_reflection(a, d):
    assert erf_interval(a, a + d) == pytest.approx(erf_interval(-a - d, -a), rel=1e-12, abs=1e-300)

"""Kernel closed forms, the quadrature oracle, the sampled transform, and the
L^p audits.

The closed-form/quadrature agreement here is the anchor for everything the
weighted stability experiments later do with the kernel, so the tolerances
are kept at the level the adaptive integrator actually delivers.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from densiflow.analytic import (
    GradedGrid,
    antiderivative_check,
    gauss_integral_closed_form,
    gauss_integral_quadrature,
    kernel_apply,
    kernel_bound_check,
    lp_ratio,
    minkowski_check,
)
from densiflow.errors import BadGrid, BadTol, NegativeEntries, NonPositiveTimes


# ------------------------------------------------------------- closed form


@pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0, 4.0])
def test_closed_form_matches_quadrature(c):
    exact = gauss_integral_closed_form(c)
    quad = gauss_integral_quadrature(c)
    assert abs(exact - quad) / exact < 1e-10


def test_closed_form_degenerates_to_one():
    assert gauss_integral_closed_form(0.0) == 1.0


def test_closed_form_monotone_in_strength():
    vals = [gauss_integral_closed_form(c) for c in np.linspace(0, 6, 25)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("c", [-1.0, math.inf, math.nan])
def test_closed_form_rejects_bad_strength(c):
    with pytest.raises(ValueError):
        gauss_integral_closed_form(c)
    with pytest.raises(ValueError):
        gauss_integral_quadrature(max(c, -1.0))


@pytest.mark.parametrize("tol", [1e-20, 1e-3, 0.5])
def test_quadrature_rejects_silly_tolerances(tol):
    with pytest.raises(BadTol):
        gauss_integral_quadrature(1.0, tol=tol)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 4.0])
def test_antiderivative_identifies_quarter_exponent(c):
    out = antiderivative_check(c)
    assert out["verdict"] == "quarter"
    assert out["defect_quarter"] < 1e-6 < out["defect_half"]


def test_antiderivative_degenerate_at_zero():
    # both exponent variants coincide when the prefactor vanishes
    assert antiderivative_check(0.0)["verdict"] == "both"


# ------------------------------------------------------------- graded grid


def test_graded_grid_validation():
    with pytest.raises(BadGrid):
        GradedGrid(levels=7)
    with pytest.raises(BadGrid):
        GradedGrid(levels=10, lam=-1.0)
    with pytest.raises(BadGrid):
        GradedGrid(levels=4)
    # at c = 0 the grading depth is the omitted-mass budget ln(1e9)
    assert GradedGrid(levels=64).lam_for(0.0) == pytest.approx(math.log(1e9), rel=1e-12)
    assert GradedGrid(levels=64, lam=30.0).lam_for(5.0) == 30.0


# ------------------------------------------------------------ kernel apply


def test_kernel_apply_constant_function():
    # T of a constant is the constant times the kernel mass, at every s
    taus = np.geomspace(1e-3, 1.0, 50)
    for c in (0.0, 1.0, 2.0):
        _, tf = kernel_apply(taus, np.full_like(taus, 3.0), c)
        expected = 3.0 * gauss_integral_closed_form(c)
        assert np.abs(tf - expected).max() / expected < 1e-8


def test_kernel_apply_linear_function_c0():
    # f(tau) = tau with the flat kernel: the normalized transform is
    # s/2 + tau0^2/(2 s) once the constant extension below the first
    # sample is accounted for.
    taus = np.geomspace(1e-4, 1.0, 300)
    _, tf = kernel_apply(taus, taus, 0.0)
    tau0 = taus[0]
    expected = taus / 2.0 + tau0**2 / (2.0 * taus)
    assert np.abs(tf - expected).max() / expected.max() < 1e-6


def test_kernel_apply_is_linear_in_f():
    taus = np.geomspace(1e-3, 2.0, 40)
    rng = np.random.default_rng(5)
    f = rng.uniform(0, 1, taus.size)
    g = rng.uniform(0, 1, taus.size)
    _, tf = kernel_apply(taus, f, 1.5)
    _, tg = kernel_apply(taus, g, 1.5)
    _, tfg = kernel_apply(taus, 2.0 * f - 0.5 * g, 1.5)
    assert np.abs(tfg - (2.0 * tf - 0.5 * tg)).max() < 1e-12 * max(1.0, np.abs(tf).max())


def test_kernel_apply_monotone_in_strength():
    taus = np.geomspace(1e-3, 1.0, 60)
    f = np.ones_like(taus)
    prev = None
    for c in (0.0, 0.5, 1.0, 2.0):
        _, tf = kernel_apply(taus, f, c)
        if prev is not None:
            assert np.all(tf > prev)
        prev = tf


def test_kernel_apply_input_validation():
    with pytest.raises(NonPositiveTimes):
        kernel_apply([0.0, 1.0], [1.0, 1.0], 1.0)
    with pytest.raises(NonPositiveTimes):
        kernel_apply([1.0, 0.5], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        kernel_apply([1.0, 2.0], [1.0], 1.0)


# ---------------------------------------------------------------- L^p audit


def test_lp_ratio_flat_kernel_identity():
    # c = 0 sends f = const to itself, so the ratio sits at 1
    taus = np.geomspace(1e-4, 1.0, 100)
    r = lp_ratio(taus, np.ones_like(taus), 0.0, 2.0, 1.0)
    assert r == pytest.approx(1.0, rel=1e-3)


def test_lp_ratio_rejects_negative_samples():
    taus = np.array([0.5, 1.0])
    with pytest.raises(NegativeEntries):
        lp_ratio(taus, np.array([1.0, -0.1]), 1.0, 2.0, 1.0)
    with pytest.raises(NonPositiveTimes):
        lp_ratio(taus, np.array([1.0, 1.0]), 1.0, 2.0, -1.0)


def test_kernel_bound_small_audit_passes():
    res = kernel_bound_check(0.5, 2.0, trials=30, seed=1)
    assert res.passed
    assert res.lhs <= res.rhs
    assert res.params["trials"] == 30


def test_kernel_bound_hardy_limit():
    # flat kernel at p = 4: the sharp constant is (p/(p-1))^p = (4/3)^4
    res = kernel_bound_check(0.0, 4.0, trials=60, seed=2)
    assert res.lhs <= (4.0 / 3.0) ** 4 + 1e-3


def test_kernel_bound_rejects_bad_exponent():
    with pytest.raises(ValueError):
        kernel_bound_check(1.0, 1.0)
    with pytest.raises(NonPositiveTimes):
        kernel_bound_check(1.0, 2.0, t=0.0)


# ------------------------------------------------------------ minkowski


def test_minkowski_separable_equality():
    rng = np.random.default_rng(3)
    a = rng.uniform(0.1, 1.0, 20)
    b = rng.uniform(0.1, 1.0, 30)
    for p in (1.5, 2.0, 4.0):
        res = minkowski_check(np.outer(a, b), p)
        assert res.passed
        assert abs(res.lhs - res.rhs) <= 1e-12 * res.rhs


def test_minkowski_random_audit():
    rng = np.random.default_rng(11)
    for _ in range(50):
        F = rng.uniform(0, 5, size=(rng.integers(2, 15), rng.integers(2, 15)))
        for p in (1.5, 2.0, 4.0):
            assert minkowski_check(F, p).passed


def test_minkowski_respects_custom_weights():
    F = np.outer([1.0, 2.0], [3.0, 4.0, 5.0])
    wx = np.array([0.25, 0.75])
    wy = np.array([0.2, 0.3, 0.5])
    res = minkowski_check(F, 2.0, weights_x=wx, weights_y=wy)
    assert res.passed
    assert abs(res.lhs - res.rhs) <= 1e-12 * res.rhs  # separable stays tight


def test_minkowski_validation():
    with pytest.raises(NegativeEntries):
        minkowski_check(np.array([[1.0, -1.0]]), 2.0)
    with pytest.raises(NegativeEntries):
        minkowski_check(np.ones((2, 2)), 2.0, weights_x=np.array([-1.0, 1.0]))
    with pytest.raises(ValueError):
        minkowski_check(np.ones((2, 2)), 0.5)
    with pytest.raises(ValueError):
        minkowski_check(np.ones(4), 2.0)


@given(
    F=arrays(np.float64, (7, 9), elements=st.floats(0, 50, allow_nan=False)),
    p=st.sampled_from([1.0, 1.5, 2.0, 4.0]),
)
@settings(max_examples=60, deadline=None)
def test_minkowski_property(F, p):
    res = minkowski_check(F, p)
    assert res.lhs <= res.rhs * (1 + 1e-12) + 1e-12

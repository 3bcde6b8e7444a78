import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochbenders.lpcore import (
    IterationLimit,
    LinearProgram,
    NotStandardized,
    Status,
    TooLarge,
    best_cornerpoint,
    dual_of,
    enumerate_cornerpoints,
    lp_from_rows,
    solve_lp,
    standardize,
)

from instances import band_dual


def random_lp(rng, n=None, m=None):
    n = n or int(rng.integers(1, 5))
    m = m or int(rng.integers(1, 5))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    b = rng.integers(-6, 10, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    rel = rng.choice(["le", "ge", "eq"], size=m, p=[0.5, 0.35, 0.15])
    sense = "max" if rng.random() < 0.5 else "min"
    return LinearProgram(sense, c, A, tuple(rel), b)


def test_small_max_problem():
    p = lp_from_rows("max", [3, 5], [([1, 0], "le", 4), ([0, 2], "le", 12), ([3, 2], "le", 18)])
    sol = solve_lp(p)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(36)
    np.testing.assert_allclose(sol.primal, [2, 6], atol=1e-9)
    np.testing.assert_allclose(sol.duals, [0, 1.5, 1], atol=1e-9)


def test_min_with_ge_rows_gives_nonneg_duals():
    p = lp_from_rows("min", [2, 3], [([1, 1], "ge", 4), ([1, 3], "ge", 6)])
    sol = solve_lp(p)
    assert sol.objective == pytest.approx(9)
    assert np.all(sol.duals >= -1e-12)
    assert sol.duals @ p.rhs == pytest.approx(sol.objective)


def test_equality_rows_and_negative_rhs():
    p = lp_from_rows("min", [1, 1], [([1, -1], "eq", -2), ([1, 0], "ge", 1)])
    sol = solve_lp(p)
    np.testing.assert_allclose(sol.primal, [1, 3], atol=1e-9)
    assert sol.duals @ p.rhs == pytest.approx(sol.objective)


def test_infeasible_and_unbounded():
    infeas = lp_from_rows("max", [1], [([1], "le", 1), ([1], "ge", 2)])
    assert solve_lp(infeas).status is Status.INFEASIBLE
    unb = lp_from_rows("max", [1, 1], [([1, -1], "le", 1)])
    assert solve_lp(unb).status is Status.UNBOUNDED


def test_nonpos_and_free_variables():
    p = lp_from_rows("min", [1, 1], [([1, 0], "ge", -3), ([0, 1], "ge", 2)], var_kinds=("nonpos", "free"))
    sol = solve_lp(p)
    np.testing.assert_allclose(sol.primal, [-3, 2], atol=1e-9)
    assert sol.objective == pytest.approx(-1)


def test_standardize_is_idempotent():
    p = lp_from_rows(
        "min", [-1, 2, 3], [([1, 1, 1], "le", 5), ([1, 0, 0], "ge", -4), ([0, 1, 0], "ge", -2)],
        var_kinds=("nonpos", "free", "nonneg"),
    )
    s1, m1 = standardize(p)
    s2, m2 = standardize(s1)
    assert s1.is_standardized() and m2.is_identity
    assert s2.same_as(s1)
    z = solve_lp(s1)
    np.testing.assert_allclose(m1.recover(z.primal), solve_lp(p).primal, atol=1e-9)
    assert z.objective == pytest.approx(solve_lp(p).objective)


def test_dual_needs_standard_form():
    p = lp_from_rows("max", [1], [([1], "le", 1)], var_kinds=("free",))
    with pytest.raises(NotStandardized):
        dual_of(p)


def test_dual_of_dual_round_trip():
    p = lp_from_rows("max", [3, 5], [([1, 0], "le", 4), ([0, 2], "le", 12), ([3, 2], "le", 18)])
    d = dual_of(p)
    assert d.sense == "min"
    sd, _ = standardize(d)
    assert solve_lp(d).objective == pytest.approx(solve_lp(p).objective)
    np.testing.assert_allclose(solve_lp(d).primal, solve_lp(p).duals, atol=1e-9)
    assert sd.is_standardized()


def test_iteration_limit():
    p = lp_from_rows("max", [3, 5], [([1, 0], "le", 4), ([0, 2], "le", 12), ([3, 2], "le", 18)])
    with pytest.raises(IterationLimit):
        solve_lp(p, max_iter=1)


def test_cornerpoint_limits():
    p = LinearProgram("max", np.ones(5), np.ones((1, 5)), ("le",), [1])
    with pytest.raises(TooLarge):
        enumerate_cornerpoints(p)


def test_band_dual_cornerpoints():
    pts = {tuple(x): v for x, v in enumerate_cornerpoints(band_dual(3.0))}
    assert len(pts) == 7
    assert pts[(1.0, 1.0, 0.0)] == pytest.approx(1.0)
    sol = solve_lp(band_dual(3.0))
    np.testing.assert_allclose(sol.primal, [1, 1, 0], atol=1e-12)


def test_random_lps_against_cornerpoints():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(150):
        p = random_lp(rng)
        sol = solve_lp(p)
        best = best_cornerpoint(p)
        if sol.status is Status.INFEASIBLE:
            assert best is None
        elif sol.status is Status.OPTIMAL:
            assert sol.objective == pytest.approx(best, abs=1e-6)
            assert p.violation(sol.primal) <= 1e-7
            checked += 1
    assert checked > 30


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_weak_duality(seed):
    rng = np.random.default_rng(seed)
    p = random_lp(rng)
    d = dual_of(p)
    x = solve_lp(p)
    u = solve_lp(d)
    if x.optimal and u.optimal:
        # any primal-feasible value is bounded by any dual-feasible value
        if p.sense == "max":
            assert p.value(x.primal) <= d.value(u.primal) + 1e-6
        else:
            assert p.value(x.primal) >= d.value(u.primal) - 1e-6
        assert x.objective == pytest.approx(u.objective, abs=1e-6)
    if x.status is Status.UNBOUNDED:
        assert u.status is Status.INFEASIBLE
    if u.status is Status.UNBOUNDED:
        assert x.status is Status.INFEASIBLE


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_reported_duals_are_sensitivities(seed):
    rng = np.random.default_rng(seed)
    p = random_lp(rng)
    sol = solve_lp(p)
    if sol.optimal:
        assert sol.duals @ p.rhs == pytest.approx(sol.objective, abs=1e-6)
        np.testing.assert_allclose(solve_lp(dual_of(p)).objective, sol.objective, atol=1e-6)

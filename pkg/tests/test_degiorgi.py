import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgbench.degiorgi import (iterate_to_point, lambda_constant_A, lambda_step, local_max_bound,
                              translated_point_bounds)
from dgbench.energy import ConstantsLedger
from dgbench.geometry import BallDomain, ScalarField


def _printed_A(n, S, ratio):
    # [PAPER] A = 2^{n(n+7)/4} n^{n/2} S^{n/2} |B_1|^{-(n-2)/4} (Lambda/lambda)^{n/2}, evaluated in mpmath
    mp = mpmath.mpf
    B1 = 4 * mpmath.pi / 3
    return float(mp(2) ** (mp(n * (n + 7)) / 4) * mp(n) ** (mp(n) / 2) * mp(S) ** (mp(n) / 2)
                 / B1 ** (mp(n - 2) / 4) * mp(ratio) ** (mp(n) / 2))


def test_printed_A_three_dimensions():
    L = ConstantsLedger(1.0, 10.0, 3, 0.35)
    assert lambda_constant_A(L) == pytest.approx(_printed_A(3, 0.35, 10.0), rel=1e-12)
    assert lambda_constant_A(L, "printed") == lambda_constant_A(L)


def test_derived_A_two_dimensions():
    L = ConstantsLedger(1.0, 10.0, 2, 0.39)
    # p = 4: (2^{n+2} C2^2)^{p/(2(p-2))} |B_1|^{1/2} = 16 C2^2 sqrt(pi)
    assert lambda_constant_A(L) == pytest.approx(16 * L.C2**2 * math.sqrt(math.pi), rel=1e-12)
    with pytest.raises(ValueError):
        lambda_constant_A(L, "printed")
    with pytest.raises(ValueError):
        lambda_constant_A(L, "guess")


def test_A_grows_with_ellipticity_ratio():
    As = [lambda_constant_A(ConstantsLedger(1.0, r, 2, 0.39)) for r in (1, 10, 100)]
    assert As[0] < As[1] < As[2]


def test_lambda_step_on_subsolution(checker, checker_solution, ledger):
    u = checker_solution.positive_part()
    step = lambda_step(u, 1.0, ledger, coef=checker)
    assert step.report.ok
    ids = [s.lemma_id for s in step.report.subchecks]
    assert ids == ["degiorgi.lambda.chebyshev", "degiorgi.lambda.iden"]
    # A m is far above the field, so the truncation vanishes
    assert step.v.values.max() == 0.0


def test_lambda_step_zero_field(disk, ledger):
    step = lambda_step(ScalarField.constant(disk, 0.0), 1.0, ledger)
    assert step.m == 0.0 and step.report.ok


def test_lambda_step_with_small_A_still_halves(checker, checker_solution, ledger):
    # with A = 1 the Chebyshev sub-check is the only part tied to A's size
    u = checker_solution.positive_part()
    step = lambda_step(u, 1.0, ledger, A=1.0, coef=checker)
    assert step.report.subchecks[0].passed


def test_iteration_trace(checker, checker_solution, ledger):
    u = checker_solution.positive_part()
    tr, rep = iterate_to_point(u, ledger, coef=checker)
    assert rep.ok
    assert rep.details["kmax"] == int(math.floor(math.log2(1.0 / (8 * checker.domain.h))))
    assert tr.cumulative_shift <= rep.rhs
    assert all(r <= 0.5 * (1 + 10 * checker.domain.h) for r in tr.ratios)
    assert len(rep.details["printed_variant_trace"]) >= 1


def test_max_bound_modes(checker, checker_solution, ledger):
    rep = local_max_bound(checker_solution, 1.0, ledger, "solution", coef=checker)
    assert rep.ok and [s.lemma_id for s in rep.subchecks] == ["degiorgi.maxbound.plus", "degiorgi.maxbound.minus"]
    rep = local_max_bound(checker_solution.positive_part(), 1.0, ledger, "subsolution", coef=checker)
    assert rep.ok
    with pytest.raises(ValueError):
        local_max_bound(checker_solution, 1.0, ledger, "supersolution")


def test_translated_bounds(checker_solution, ledger):
    rep = translated_point_bounds(checker_solution.positive_part(), 1.0, ledger)
    assert rep.ok and len(rep.subchecks) == 8


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.1, 2.0), b=st.floats(-1.0, 1.0))
def test_lambda_verdict_matches_printed_inequality(a, b):
    # the report's verdict always equals the inequality it prints
    dom = BallDomain(2, 1.0, 1 / 16)
    L = ConstantsLedger(1.0, 1.0, 2, 0.39)
    u = ScalarField.from_function(dom, lambda x: np.maximum(a * x[0] + b, 0))
    if u.values.max() == 0:
        return
    rep = lambda_step(u, 1.0, L, A=1.0).report
    assert rep.passed == (rep.lhs <= rep.rhs * rep.slack)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgbench.energy import (CertificationError, ConstantsLedger, CutoffFunction, caccioppoli_check, cone_quotient_exact,
                            default_exponent, estimate_sobolev_constant, gradient_energy, sobolev_gain_check)
from dgbench.geometry import BallDomain, ScalarField


# [PAPER] C1 = 4 n^2 Lambda^2 / lambda^2 and C2 = 2^{3/2} S C1^{1/2}
@pytest.mark.parametrize("n,lam,Lam,C1", [(3, 1.0, 10.0, 3600.0), (2, 1.0, 1.0, 16.0), (2, 2.0, 10.0, 400.0)])
def test_C1(n, lam, Lam, C1):
    assert ConstantsLedger(lam, Lam, n, 0.4).C1 == pytest.approx(C1)


def test_C2_and_exponent():
    L = ConstantsLedger(1.0, 10.0, 2, 0.39)
    assert L.C2 == pytest.approx(2**1.5 * 0.39 * 40.0)
    assert L.p == 4.0
    assert default_exponent(3) == 6.0
    with pytest.raises(ValueError):
        ConstantsLedger(2.0, 1.0, 2, 0.39)
    with pytest.raises(ValueError):
        ConstantsLedger(1.0, 1.0, 2, 0.39, p=2.0)


def test_cutoff_profile():
    eta = CutoffFunction(2.0)
    x = np.array([[0.0, 0.9, 1.5, 2.5], [0.0, 0.0, 0.0, 0.0]])
    assert np.allclose(eta(x), [1.0, 1.0, 0.5, 0.0])
    assert np.allclose(eta.grad_norm(x), [0.0, 0.0, 1.0, 0.0])


def test_gradient_energy_linear(disk):
    u = ScalarField.from_function(disk, lambda x: 2 * x[1])
    # element midpoints inside B_{1/2}, each carrying |Du|^2 = 4
    n_el = int(disk.element_ball_mask(0.5).sum())
    assert gradient_energy(u, 0.5) == pytest.approx(4 * n_el * disk.h**2)


# [DERIVED] polar integration: ||1-|x| ||_4 / ||D(1-|x|)||_2 = (pi/15)^{1/4} / sqrt(pi)
def test_cone_quotient_closed_form():
    assert cone_quotient_exact(2, 4) == pytest.approx((math.pi / 15) ** 0.25 / math.sqrt(math.pi), rel=1e-14)
    assert cone_quotient_exact(2, 4) == pytest.approx(0.3816715, abs=1e-7)


def test_sobolev_estimate_dominates_cone():
    est = estimate_sobolev_constant(BallDomain(2, 1.0, 1 / 32))
    assert est.family["cone"] >= 0.38
    assert est.S >= est.family["cone"]
    assert all(b >= a - 1e-12 for a, b in zip(est.history, est.history[1:]))


def test_sobolev_estimate_stable_under_refinement():
    a = estimate_sobolev_constant(BallDomain(2, 1.0, 1 / 32)).S
    b = estimate_sobolev_constant(BallDomain(2, 1.0, 1 / 64)).S
    assert abs(a - b) / b < 0.05


def test_caccioppoli_on_subsolution(checker, checker_solution, ledger):
    u = checker_solution.positive_part()
    rep = caccioppoli_check(u, ledger, checker)
    assert rep.ok and rep.lhs > 0
    assert rep.subchecks[0].lemma_id == "energy.c"
    assert rep.to_json()["pass"] is True


def test_sobolev_gain_on_subsolution(checker, checker_solution, ledger):
    rep = sobolev_gain_check(checker_solution.positive_part(), ledger, checker)
    assert rep.ok and rep.details["p"] == 4.0


def test_certification_required(checker, checker_solution, ledger):
    with pytest.raises(CertificationError):
        caccioppoli_check(checker_solution, ledger, checker)  # takes negative values
    spike = ScalarField.from_function(checker.domain, lambda x: ((x[0] ** 2 + x[1] ** 2) < 1e-12).astype(float))
    with pytest.raises(CertificationError):
        caccioppoli_check(spike, ledger, checker)  # a lone hat pairs with itself: residual 1


@settings(max_examples=15, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_energy_checks_are_scale_free(c):
    dom = BallDomain(2, 1.0, 1 / 16)
    L = ConstantsLedger(1.0, 1.0, 2, 0.39)
    u = ScalarField.from_function(dom, lambda x: np.maximum(x[0] + 0.3 * x[1], 0))
    a, b = caccioppoli_check(u, L), caccioppoli_check(u * c, L)
    assert a.ok == b.ok
    assert b.lhs / a.lhs == pytest.approx(c * c, rel=1e-9)
    assert b.margin == pytest.approx(a.margin, rel=1e-9)

"""Caccioppoli and Sobolev-gain estimates with explicit constants.

Also estimates the embedding constant S of H_0^1(B_1) into L^p(B_1), which
the constants C_2 and A depend on but which is never given a value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .elliptic import CoefficientField, assemble, make_coefficients, residual_slack, weak_residual
from .geometry import BallDomain, ScalarField, integral
from .reports import LemmaReport, slack_factor

log = logging.getLogger(__name__)


def default_exponent(n: int) -> float:
    """Sobolev exponent 2n/(n-2); for n = 2 any p > 2 works and 4 is used."""
    return 4.0 if n == 2 else 2.0 * n / (n - 2)


@dataclass(frozen=True)
class ConstantsLedger:
    lam: float
    Lam: float
    n: int
    S: float
    p: float | None = None
    S_provenance: str = "user"

    def __post_init__(self):
        if not (0 < self.lam <= self.Lam):
            raise ValueError("need 0 < lambda <= Lambda")
        if self.n not in (2, 3):
            raise ValueError(f"unsupported dimension {self.n}")
        if self.S <= 0:
            raise ValueError("Sobolev constant must be positive")
        p = default_exponent(self.n) if self.p is None else float(self.p)
        if p <= 2:
            raise ValueError("Sobolev exponent must exceed 2")
        object.__setattr__(self, "p", p)

    @property
    def C1(self) -> float:
        return 4.0 * self.n**2 * self.Lam**2 / self.lam**2

    @property
    def C2(self) -> float:
        return 2.0**1.5 * self.S * math.sqrt(self.C1)

    def snapshot(self) -> dict:
        return {
            "lambda": self.lam,
            "Lambda": self.Lam,
            "n": self.n,
            "S": self.S,
            "S_provenance": self.S_provenance,
            "p": self.p,
            "C1": self.C1,
            "C1_formula": "4 n^2 Lambda^2 / lambda^2",
            "C2": self.C2,
            "C2_formula": "2^(3/2) S C1^(1/2)",
        }


@dataclass(frozen=True)
class CutoffFunction:
    """Radial cutoff 1 on B_{r/2}, 2(1 - |x|/r) on the annulus, 0 outside B_r."""

    radius: float = 1.0
    center: tuple | None = None

    @property
    def lipschitz(self) -> float:
        return 2.0 / self.radius

    def _s(self, x: np.ndarray) -> np.ndarray:
        c = self.center or (0.0,) * x.shape[0]
        return np.sqrt(sum((x[d] - c[d]) ** 2 for d in range(x.shape[0]))) / self.radius

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s = self._s(x)
        return np.clip(2.0 * (1.0 - s), 0.0, 1.0)

    def grad_norm(self, x: np.ndarray) -> np.ndarray:
        """Analytic |D eta|: the Lipschitz bound on the annulus, zero elsewhere."""
        s = self._s(x)
        return np.where((s > 0.5) & (s < 1.0), self.lipschitz, 0.0)


class CertificationError(ValueError):
    pass


def _require_subsolution(u: ScalarField, coef: CoefficientField | None, slack: float | None = None):
    if u.data[u.domain.support].min() < -1e-12:
        raise CertificationError("field must be nonnegative")
    if coef is None:
        return None
    res = weak_residual(u, coef, "subsolution")
    limit = residual_slack(u.domain.h) if slack is None else slack
    if res > limit:
        raise CertificationError(f"not a certified subsolution (residual {res:.3e} > {limit:.3e})")
    return res


def _inputs(u: ScalarField, L: ConstantsLedger, field_id=None, coef_id=None) -> dict:
    return {"field_id": field_id, "coef_id": coef_id, "h": u.domain.h, "n": u.domain.n, "lambda": L.lam, "Lambda": L.Lam}


def gradient_energy(u: ScalarField, radius: float, center=None, weight=None) -> float:
    """Midpoint  int_{B_radius} weight |Du|^2  with gradients at element centers."""
    dom = u.domain
    g = u.gradient()
    sel = dom.element_ball_mask(radius, center)
    dens = np.sum(g**2, axis=0)
    if weight is not None:
        dens = dens * weight(dom.element_centers())
    return float(dens[sel].sum() * dom.cell_volume)


def caccioppoli_check(u, L: ConstantsLedger, coef=None, radius=None, slack_coeff=10.0, field_id=None, coef_id=None) -> LemmaReport:
    """int eta^2 |Du|^2 <= C1 int |D eta|^2 u^2, plus the B_{r/2} specialization."""
    res = _require_subsolution(u, coef)
    dom = u.domain
    r = dom.radius if radius is None else radius
    ball = dom.sub(r)
    eta = CutoffFunction(r, dom.center)
    slack = slack_factor(dom.h, slack_coeff)
    lhs = gradient_energy(u, r, weight=lambda x: eta(x) ** 2)
    x = dom.coords()
    m = ball.mask_on(dom)
    rhs = L.C1 * float(np.sum((eta.grad_norm(x) ** 2 * u.data**2)[m]) * dom.cell_volume)
    rep = LemmaReport("energy.a", lhs, rhs, "C1", L.C1, slack, _inputs(u, L, field_id, coef_id))
    inner = gradient_energy(u, r / 2)
    sub = LemmaReport(
        "energy.c",
        r**2 * inner,
        4.0 * L.C1 * integral(u, ball),
        "4*C1",
        4.0 * L.C1,
        slack,
        rep.inputs,
        details={"radius": r},
    )
    rep.subchecks.append(sub)
    if res is not None:
        rep.details["weak_residual"] = res
    return rep


def sobolev_gain_check(u, L: ConstantsLedger, coef=None, radius=None, slack_coeff=10.0, field_id=None, coef_id=None) -> LemmaReport:
    """(int_{B_{r/2}} u^p)^{1/p} <= C2 r^{n/p-n/2+1} (int_{B_r} u^2)^{1/2}."""
    res = _require_subsolution(u, coef)
    dom = u.domain
    r = dom.radius if radius is None else radius
    ball = dom.sub(r)
    lhs = integral(u, dom.sub(r / 2), power=L.p) ** (1.0 / L.p)
    scale = r ** (dom.n / L.p - dom.n / 2 + 1)
    rhs = L.C2 * scale * math.sqrt(integral(u, ball))
    rep = LemmaReport("energy.d", lhs, rhs, "C2", L.C2, slack_factor(dom.h, slack_coeff), _inputs(u, L, field_id, coef_id))
    rep.details["p"] = L.p
    if res is not None:
        rep.details["weak_residual"] = res
    return rep


# Sobolev constant -------------------------------------------------------------
def _test_family(n: int):
    def rad(x):
        return np.sqrt(sum(x[d] ** 2 for d in range(n)))

    return {
        "cone": lambda x: np.maximum(1.0 - rad(x), 0.0),
        "paraboloid": lambda x: np.maximum(1.0 - rad(x) ** 2, 0.0),
        "paraboloid^2": lambda x: np.maximum(1.0 - rad(x) ** 2, 0.0) ** 2,
        "cosine": lambda x: np.where(rad(x) < 1.0, np.cos(0.5 * np.pi * rad(x)), 0.0),
        "gaussian": lambda x: np.maximum(np.exp(-4.0 * rad(x) ** 2) - math.exp(-4.0), 0.0),
        "narrow-gaussian": lambda x: np.maximum(np.exp(-16.0 * rad(x) ** 2) - math.exp(-16.0), 0.0),
    }


@dataclass
class SobolevEstimate:
    S: float
    p: float
    h: float
    best_start: str
    family: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    iterations: int = 0

    def provenance(self) -> str:
        return f"ascent(h={self.h:g}, p={self.p:g}, start={self.best_start}, iters={self.iterations})"


class SobolevQuotient:
    """Discrete ||v||_p / ||Dv||_2 for v vanishing on the boundary layer."""

    def __init__(self, domain: BallDomain, p: float):
        self.domain = domain
        self.p = p
        asm = assemble(make_coefficients("identity", domain))
        self.K = asm.interior_block.tocsc()
        self.w = domain.cell_volume

    def log_value(self, v: np.ndarray) -> float:
        lp = np.sum(np.abs(v) ** self.p) * self.w
        en = v @ (self.K @ v)
        if en <= 0 or lp <= 0:
            return -math.inf
        return math.log(lp) / self.p - 0.5 * math.log(en)

    def value(self, v: np.ndarray) -> float:
        return math.exp(self.log_value(v))

    def log_gradient(self, v: np.ndarray) -> np.ndarray:
        a = np.abs(v) ** (self.p - 2) * v * self.w
        lp = np.sum(np.abs(v) ** self.p) * self.w
        Kv = self.K @ v
        return a / lp - Kv / (v @ Kv)

    def sample(self, f) -> np.ndarray:
        return ScalarField.from_function(self.domain, f).values


def estimate_sobolev_constant(domain: BallDomain, p: float | None = None, family=None, max_iter: int = 60, rtol: float = 1e-9) -> SobolevEstimate:
    """Lower-bound estimate of S by a test family plus Sobolev-gradient ascent.

    The ascent direction is K^{-1} grad(log Q), i.e. the gradient in the
    H_0^1 inner product; a backtracking line search makes every accepted
    step increase the quotient.
    """
    p = default_exponent(domain.n) if p is None else float(p)
    if p <= 2:
        raise ValueError("exponent must exceed 2")
    Q = SobolevQuotient(domain, p)
    fam = _test_family(domain.n) if family is None else family
    values = {name: Q.value(Q.sample(f)) for name, f in fam.items()}
    best = max(values, key=values.get)
    v = Q.sample(fam[best])
    v /= np.abs(v).max()
    if domain.n > 2 and p >= 2.0 * domain.n / (domain.n - 2) - 1e-12:
        # critical exponent: ascent concentrates on one node and the nodal
        # L^p sum then overshoots the continuum constant
        max_iter = 0
    solver = splu(Q.K) if max_iter > 0 else None
    J = Q.log_value(v)
    history = [math.exp(J)]
    t = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = Q.log_gradient(v)
        d = solver.solve(g)
        slope = g @ d
        if slope <= 0:
            break
        step = t
        while True:
            trial = v + step * d
            Jt = Q.log_value(trial)
            if Jt >= J + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-14:
                raise FloatingPointError("Sobolev ascent line search failed")
        trial /= np.abs(trial).max()
        gain = Jt - J
        v, J = trial, Jt
        history.append(math.exp(J))
        t = min(step * 2.0, 1e6)
        if gain < rtol:
            break
    est = SobolevEstimate(max(math.exp(J), max(values.values())), p, domain.h, best, values, history, it)
    log.info("Sobolev estimate S=%.6f (%s)", est.S, est.provenance())
    return est


def cone_quotient_exact(n: int, p: float) -> float:
    """||1-|x| ||_p / ||D(1-|x|)||_2 on the unit ball by polar integration."""
    from .geometry import ball_measure, sphere_measure

    # int_0^1 (1-r)^p r^{n-1} dr = B(p+1, n)
    beta = math.gamma(p + 1) * math.gamma(n) / math.gamma(p + n + 1)
    lp = (sphere_measure(n) * beta) ** (1.0 / p)
    return lp / math.sqrt(ball_measure(n))

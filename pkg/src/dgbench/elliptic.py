"""Weak form of -D_j(a_ij D_i u) = 0 on a masked ball.

Continuous multilinear (Q1) elements whose nodes are the grid's cell centers.
An element is the hypercube spanned by 2^n neighbouring cells; it is active
when at least one corner is a masked cell, in which case every corner lies in
the mask or in the one-cell boundary layer.  Coefficients are constant per
element.  Dirichlet data is imposed strongly on the layer.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import BallDomain, ScalarField, truncate_shift

log = logging.getLogger(__name__)

COEFFICIENT_KINDS = ("identity", "checkerboard", "random-rotation")


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None, iterations=None):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


# coefficients -----------------------------------------------------------------
@dataclass(frozen=True)
class CoefficientField:
    domain: BallDomain
    a: np.ndarray = field(repr=False)  # (*element_shape, n, n)
    lam: float
    Lam: float
    kind: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        n = self.domain.n
        a = np.asarray(self.a, dtype=float)
        eshape = tuple(s - 1 for s in self.domain.shape)
        if a.shape != eshape + (n, n):
            raise ValueError(f"coefficient array has shape {a.shape}, expected {eshape + (n, n)}")
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-14):
            raise ValueError("coefficients must be symmetric")
        if not (0 < self.lam <= self.Lam):
            raise ValueError("need 0 < lambda <= Lambda")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def eigen_bounds(self) -> tuple[float, float]:
        w = np.linalg.eigvalsh(self.a.reshape(-1, self.domain.n, self.domain.n))
        return float(w.min()), float(w.max())

    def check(self, tol: float = 1e-12) -> bool:
        """Ellipticity and entry bounds against the certified (lam, Lam)."""
        lo, hi = self.eigen_bounds()
        entry = float(np.abs(self.a).max())
        scale = max(1.0, self.Lam)
        return lo >= self.lam - tol * scale and hi <= self.Lam + tol * scale and entry <= self.Lam + tol * scale

    @property
    def ratio(self) -> float:
        return self.Lam / self.lam

    def describe(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam, "Lambda": self.Lam, "seed": self.seed}


def _random_rotations(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    if n == 2:
        t = rng.uniform(0.0, 2.0 * np.pi, count)
        c, s = np.cos(t), np.sin(t)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    q, r = np.linalg.qr(rng.standard_normal((count, n, n)))
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]


def make_coefficients(kind: str, domain: BallDomain, lam: float = 1.0, Lam: float = 1.0, seed: int = 0) -> CoefficientField:
    """Build one of the corpus coefficient families on ``domain``'s elements."""
    if not (0 < lam <= Lam) or not (math.isfinite(lam) and math.isfinite(Lam)):
        raise ValueError(f"invalid ellipticity constants lambda={lam}, Lambda={Lam}")
    n = domain.n
    eshape = tuple(s - 1 for s in domain.shape)
    count = int(np.prod(eshape))
    if kind == "identity":
        a = np.broadcast_to(np.eye(n), eshape + (n, n)).copy()
        return CoefficientField(domain, a, 1.0, 1.0, kind, seed)
    if kind == "checkerboard":
        parity = np.indices(eshape).sum(axis=0) % 2
        diag = np.where(parity == 0, lam, Lam)
        a = diag[..., None, None] * np.eye(n)
        return CoefficientField(domain, a, lam, Lam, kind, seed)
    if kind == "random-rotation":
        rng = np.random.default_rng(seed)
        rot = _random_rotations(rng, count, n)
        ev = np.full(n, lam)
        ev[-1] = Lam
        a = np.einsum("eik,k,ejk->eij", rot, ev, rot)
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        return CoefficientField(domain, a.reshape(eshape + (n, n)), lam, Lam, kind, seed)
    raise ValueError(f"unknown coefficient kind {kind!r}")


# assembly -----------------------------------------------------------------------
def _reference_stiffness(n: int) -> np.ndarray:
    """K[i, j, p, q] = int_{[0,1]^n} d_i phi_q d_j phi_p for Q1 shape functions."""
    M = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    D = np.array([[1.0, -1.0], [-1.0, 1.0]])
    C = np.array([[-0.5, -0.5], [0.5, 0.5]])  # C[a, b] = int psi_a' psi_b
    corners = list(itertools.product((0, 1), repeat=n))
    K = np.zeros((n, n, len(corners), len(corners)))
    for i in range(n):
        for j in range(n):
            for p, cp in enumerate(corners):
                for q, cq in enumerate(corners):
                    val = 1.0
                    for d in range(n):
                        if i == j == d:
                            val *= D[cq[d], cp[d]]
                        elif d == i:
                            val *= C[cq[d], cp[d]]
                        elif d == j:
                            val *= C[cp[d], cq[d]]
                        else:
                            val *= M[cq[d], cp[d]]
                    K[i, j, p, q] = val
    return K


@dataclass
class Assembly:
    domain: BallDomain
    matrix: sp.csr_matrix  # over all support nodes
    node_ids: np.ndarray  # dense box -> node id, -1 outside support
    interior: np.ndarray  # node ids of masked cells (lexicographic)
    boundary: np.ndarray  # node ids of layer cells

    def vector(self, u: ScalarField) -> np.ndarray:
        return u.data[self.domain.support]

    @property
    def interior_block(self) -> sp.csr_matrix:
        return self.matrix[self.interior][:, self.interior]


_ASSEMBLY_CACHE: dict = {}


def assemble(coef: CoefficientField) -> Assembly:
    key = id(coef)
    hit = _ASSEMBLY_CACHE.get(key)
    if hit is not None and hit[0] is coef:
        return hit[1]
    dom = coef.domain
    n = dom.n
    support = dom.support
    node_ids = np.full(dom.shape, -1, dtype=np.int64)
    node_ids[support] = np.arange(int(support.sum()))
    eshape = tuple(s - 1 for s in dom.shape)
    corners = list(itertools.product((0, 1), repeat=n))
    corner_slices = [tuple(slice(c, c + s) for c, s in zip(cr, eshape)) for cr in corners]
    masked_corner = np.zeros(eshape, bool)
    for sl in corner_slices:
        masked_corner |= dom.mask[sl]
    conn = np.stack([node_ids[sl][masked_corner] for sl in corner_slices], axis=1)
    if np.any(conn < 0):
        raise RuntimeError("active element with a corner outside the support")
    a = coef.a[masked_corner]
    Kref = _reference_stiffness(n)
    Ke = np.einsum("eij,ijpq->epq", a, Kref) * dom.h ** (n - 2)
    m = len(corners)
    rows = np.repeat(conn, m, axis=1).ravel()
    cols = np.tile(conn, (1, m)).ravel()
    N = int(support.sum())
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    K.sum_duplicates()
    asm = Assembly(dom, K, node_ids, node_ids[dom.mask], node_ids[dom.layer])
    _ASSEMBLY_CACHE.clear()
    _ASSEMBLY_CACHE[key] = (coef, asm)
    return asm


# solver -------------------------------------------------------------------------
def pcg(A, b, x0=None, tol=1e-10, maxiter=None):
    """Jacobi-preconditioned conjugate gradients; returns (x, iterations, relres)."""
    N = b.size
    maxiter = maxiter or 10 * N
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("nonpositive diagonal: coefficient invariant broken")
    Minv = 1.0 / diag
    x = np.zeros(N) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(N), 0, 0.0
    z = Minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("indefinite system: coefficient invariant broken", iterations=it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x, it, rel
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations (relres={rel:.3e})", residual=rel, iterations=maxiter)


@dataclass(frozen=True)
class WeakProblem:
    coefficients: CoefficientField
    boundary: object  # callable x -> values, or a constant
    tol: float = 1e-10
    maxiter: int | None = None

    def __post_init__(self):
        if not (0 < self.tol <= 1e-6):
            raise ValueError("tolerance must lie in (0, 1e-6]")

    def boundary_values(self) -> np.ndarray:
        dom = self.coefficients.domain
        x = dom.coords()
        g = self.boundary(x) if callable(self.boundary) else np.full(dom.shape, float(self.boundary))
        g = np.broadcast_to(np.asarray(g, float), dom.shape)
        vals = g[dom.layer]
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary data must be finite")
        return vals


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    relres: float


def solve(p: WeakProblem, return_info: bool = False):
    """Galerkin solution with Dirichlet data on the boundary layer."""
    coef = p.coefficients
    dom = coef.domain
    asm = assemble(coef)
    K = asm.matrix
    g = p.boundary_values()
    I, B = asm.interior, asm.boundary
    A_II = K[I][:, I]
    rhs = -(K[I][:, B] @ g)
    nI = I.size
    maxiter = p.maxiter or int(50 * math.sqrt(nI) * dom.n)
    data = np.zeros(dom.shape)
    data[dom.layer] = g
    x, total, tol = None, 0, p.tol
    # relres and the normalized weak residual are different norms; tighten
    # until both are below the requested tolerance
    for _ in range(4):
        x, it, rel = pcg(A_II, rhs, x0=x, tol=tol, maxiter=maxiter)
        total += it
        data[dom.mask] = x
        u = ScalarField(dom, data)
        if weak_residual(u, coef, "solution") <= p.tol:
            break
        tol *= 0.1
    it = total
    log.debug("solve: %d unknowns, %d iterations, relres %.2e", nI, it, rel)
    return (u, SolveInfo(it, rel)) if return_info else u


def energy(u: ScalarField, coef: CoefficientField) -> float:
    """Exact Q1 energy  int a_ij D_i u D_j u  over the active elements."""
    asm = assemble(coef)
    v = asm.vector(u)
    return float(v @ (asm.matrix @ v))


def weak_residual(u: ScalarField, coef: CoefficientField, mode: str = "solution") -> float:
    """Largest normalized pairing  a(u, phi_i) / (|u|_a |phi_i|_a)  over interior hats.

    For ``mode="solution"`` the absolute value is taken; for ``"subsolution"``
    only the positive part counts (hat functions are nonnegative).
    """
    if u.domain != coef.domain:
        raise ValueError("field and coefficients live on different domains")
    if mode not in ("solution", "subsolution"):
        raise ValueError(f"unknown mode {mode!r}")
    asm = assemble(coef)
    v = asm.vector(u)
    Kv = asm.matrix @ v
    unorm = math.sqrt(max(float(v @ Kv), 0.0))
    if unorm == 0.0:
        return 0.0
    r = Kv[asm.interior] / (np.sqrt(asm.matrix.diagonal()[asm.interior]) * unorm)
    r = np.abs(r) if mode == "solution" else np.maximum(r, 0.0)
    return float(r.max()) if r.size else 0.0


def residual_slack(h: float) -> float:
    """Accepted normalized residual for discrete subsolution certification.

    Nodal truncation is exact only for M-matrix stiffness; rotated anisotropic
    coefficients leave a grid-scale defect of order 1e-2.
    """
    return 10.0 * h


# boundary data ------------------------------------------------------------------
BOUNDARY_DATA = {
    "one": lambda x: np.ones_like(x[0]),
    "x1": lambda x: x[0],
    "x1x2": lambda x: x[0] * x[1],
    "bump": lambda x: 1.0 + 0.5 * x[0] + 0.25 * x[1] ** 2,
    "wave": lambda x: np.cos(np.pi * x[0]) * np.sin(2.0 * x[1]) + 0.5,
    "ramp": lambda x: np.clip(2.0 * x[0], -1.0, 1.0),
}


def boundary_function(name: str):
    try:
        return BOUNDARY_DATA[name]
    except KeyError:
        raise ValueError(f"unknown boundary data {name!r}") from None


@dataclass(frozen=True)
class CorpusMember:
    id: str
    u: ScalarField = field(repr=False)
    coef: CoefficientField = field(repr=False)
    mode: str
    boundary: str
    shift: float | None
    residual: float
    nonnegative: bool

    def manifest(self) -> dict:
        return {
            "id": self.id,
            "kind": self.coef.kind,
            "lambda": self.coef.lam,
            "Lambda": self.coef.Lam,
            "seed": self.coef.seed,
            "boundary": self.boundary,
            "shift": self.shift,
            "mode": self.mode,
            "residual": self.residual,
        }


@dataclass
class CorpusConfig:
    domain: BallDomain
    coefficients: list = field(default_factory=lambda: [
        ("identity", 1.0, 1.0),
        ("checkerboard", 1.0, 10.0),
        ("checkerboard", 1.0, 100.0),
        ("random-rotation", 1.0, 10.0),
        ("random-rotation", 1.0, 100.0),
    ])
    boundaries: list = field(default_factory=lambda: ["x1", "bump", "wave"])
    shifts: list = field(default_factory=lambda: [0.25, 0.5])
    seed: int = 7
    tol: float = 1e-10


def subsolution_corpus(config: CorpusConfig) -> tuple[list[CorpusMember], list[dict]]:
    """Solutions, their positive/negative parts and shifted truncations.

    Each solve contributes the solution itself plus nonnegative subsolutions.
    Members whose weak residual exceeds the slack are rejected and returned
    in the second list instead.
    """
    dom = config.domain
    slack = residual_slack(dom.h)
    members, rejected = [], []
    for ci, (kind, lam, Lam) in enumerate(config.coefficients):
        coef = make_coefficients(kind, dom, lam, Lam, seed=config.seed + ci)
        for bname in config.boundaries:
            u = solve(WeakProblem(coef, boundary_function(bname), tol=config.tol))
            tag = f"{kind}-{Lam / lam:g}-{bname}"
            cands = [(f"{tag}-sol", u, "solution", None)]
            cands.append((f"{tag}-pos", u.positive_part(), "subsolution", 0.0))
            if u.values.min() < 0:
                cands.append((f"{tag}-neg", u.negative_part(), "subsolution", 0.0))
            lo, hi = float(u.values.min()), float(u.values.max())
            for s in config.shifts:
                c = max(lo, 0.0) + s * (hi - max(lo, 0.0))
                cands.append((f"{tag}-shift{s:g}", truncate_shift(u, c), "subsolution", c))
            for cid, w, mode, shift in cands:
                res = weak_residual(w, coef, mode)
                limit = 100 * config.tol if mode == "solution" else slack
                entry = CorpusMember(cid, w, coef, mode, bname, shift, res, bool(w.data.min() >= 0))
                if res <= limit:
                    members.append(entry)
                else:
                    rejected.append(dict(entry.manifest(), limit=limit))
    return members, rejected


def dump_coefficients(coef: CoefficientField, stem) -> tuple[Path, Path]:
    """Sidecar JSON plus CSV rows of the n(n+1)/2 upper-triangle entries per active element."""
    stem = Path(stem)
    dom = coef.domain
    n = dom.n
    asm_mask = np.zeros(coef.a.shape[:-2], bool)
    for cr in itertools.product((0, 1), repeat=n):
        asm_mask |= dom.mask[tuple(slice(c, c + s) for c, s in zip(cr, asm_mask.shape))]
    iu = np.triu_indices(n)
    rows = coef.a[asm_mask][:, iu[0], iu[1]]
    desc = dict(dom.describe(), **coef.describe(), count=int(rows.shape[0]),
                entries_per_cell=n * (n + 1) // 2, order="lexicographic-element-index")
    jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
    jpath.write_text(json.dumps(desc, indent=2))
    np.savetxt(cpath, rows, fmt="%.17g", delimiter=",")
    return jpath, cpath


def load_coefficients(stem) -> CoefficientField:
    stem = Path(stem)
    desc = json.loads(stem.with_suffix(".json").read_text())
    dom = BallDomain(desc["n"], desc["radius"], desc["h"], tuple(desc["center"]))
    n = dom.n
    rows = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", ndmin=2)
    eshape = tuple(s - 1 for s in dom.shape)
    active = np.zeros(eshape, bool)
    for cr in itertools.product((0, 1), repeat=n):
        active |= dom.mask[tuple(slice(c, c + s) for c, s in zip(cr, eshape))]
    a = np.broadcast_to(desc["lambda"] * np.eye(n), eshape + (n, n)).copy()
    iu = np.triu_indices(n)
    blocks = np.zeros((rows.shape[0], n, n))
    blocks[:, iu[0], iu[1]] = rows
    blocks[:, iu[1], iu[0]] = rows
    a[active] = blocks
    return CoefficientField(dom, a, desc["lambda"], desc["Lambda"], desc["kind"], desc["seed"])

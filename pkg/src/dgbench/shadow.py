"""Direction sets, the shooting lemmas, minimum shadow and the trees example."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raycast
from .geometry import BallDomain, sphere_measure
from .reports import LemmaReport, slack_factor


@dataclass(frozen=True)
class CellSet:
    domain: BallDomain
    cells: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        c = np.asarray(self.cells, bool)
        if c.shape != self.domain.shape:
            raise ValueError("cell mask has wrong shape")
        if np.any(c & ~self.domain.mask):
            raise ValueError("cell set must lie inside the ball mask")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @classmethod
    def from_predicate(cls, domain: BallDomain, pred, name: str = "") -> "CellSet":
        return cls(domain, domain.mask & np.asarray(pred(domain.coords()), bool), name)

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @property
    def measure(self) -> float:
        return self.count * self.domain.cell_volume

    def centers(self) -> np.ndarray:
        return self.domain.coords()[:, self.cells].T

    def bounding_ball(self) -> tuple[np.ndarray, float]:
        pts = self.centers()
        if pts.size == 0:
            return np.zeros(self.domain.n), 0.0
        c = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        return c, float(np.sqrt(np.max(np.sum((pts - c) ** 2, axis=1))))

    def __and__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.domain, self.cells & other.cells)

    def subset_of(self, other: "CellSet") -> bool:
        return not np.any(self.cells & ~other.cells)


@dataclass(frozen=True)
class DirectionSample:
    n: int
    M: int
    seed: int = 0
    vectors: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.vectors is None:
            object.__setattr__(self, "vectors", _directions(self.n, self.M, self.seed))

    @property
    def weight(self) -> float:
        return sphere_measure(self.n) / self.M


def _directions(n: int, M: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if n == 2:
        t = 2.0 * np.pi * (np.arange(M) + rng.uniform()) / M
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        # Fibonacci sphere, randomly rotated
        i = np.arange(M) + 0.5
        z = 1.0 - 2.0 * i / M
        phi = np.pi * (3.0 - math.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        v = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        v = v @ q.T
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    raise ValueError(f"unsupported dimension {n}")


def default_directions(n: int, seed: int = 0, M: int | None = None) -> DirectionSample:
    return DirectionSample(n, M or (720 if n == 2 else 2048), seed)


def hit_matrix(E: CellSet, points: np.ndarray, D: DirectionSample, step: float | None = None, backend=None) -> np.ndarray:
    """(P, M) indicator of which sampled directions from each point see ``E``."""
    dom = E.domain
    points = np.atleast_2d(np.asarray(points, float))
    if E.count == 0:
        return np.zeros((points.shape[0], D.M), np.uint8)
    step = dom.h / 2 if step is None else step
    reach = dom.radius + dom.h * math.sqrt(dom.n) / 2
    bc, br = E.bounding_ball()
    br += dom.h * math.sqrt(dom.n) / 2 + 1e-9
    return raycast.cast_hits(points, D.vectors, E.cells.ravel().astype(np.uint8), np.array(dom.shape), dom.offset,
                             dom.h, np.array(dom.center), reach, step, bc, br, backend=backend)


def _check_point(dom: BallDomain, x) -> np.ndarray:
    x = np.asarray(x, float)
    if np.sum((x - np.array(dom.center)) ** 2) >= dom.radius**2:
        raise ValueError("point outside the ball")
    return x


def binomial_se(hits: int, D: DirectionSample) -> float:
    p = hits / D.M
    return sphere_measure(D.n) * math.sqrt(max(p * (1 - p), 1.0 / D.M**2) / D.M)


def direction_set_measure(E: CellSet, x, D: DirectionSample, step=None, with_error=False):
    """Measured |Sigma(E, x)|: sampled directions from x whose ray meets E."""
    x = _check_point(E.domain, x)
    row = hit_matrix(E, x[None, :], D, step)[0]
    hits = int(row.sum())
    val = hits * D.weight
    return (val, binomial_se(hits, D)) if with_error else val


def verify_l2(E: CellSet, x, D: DirectionSample, step=None) -> LemmaReport:
    """|Sigma(E, x)| >= |E| / 2^n within three binomial standard errors."""
    val, se = direction_set_measure(E, x, D, step, with_error=True)
    bound = E.measure / 2**E.domain.n
    rep = LemmaReport("shadow.l2", bound, val, "2^-n", 2.0**-E.domain.n, 1.0,
                      {"h": E.domain.h, "n": E.domain.n, "M": D.M, "seed": D.seed},
                      passed=bound <= val + 3 * se)
    rep.details.update({"se": se, "x": list(map(float, x)), "E_measure": E.measure})
    return rep


@dataclass
class ShootingResult:
    sigma0: np.ndarray
    E3: CellSet
    report: LemmaReport
    counts: np.ndarray = field(repr=False, default=None)
    hits: np.ndarray = field(repr=False, default=None)


def find_shooting_direction(E1: CellSet, E2: CellSet, D: DirectionSample, step=None, slack_coeff: float = 10.0) -> ShootingResult:
    """Best sampled direction sigma0 and E3 = {x in E2: ray from x along sigma0 meets E1}."""
    dom = E1.domain
    if E1.domain != E2.domain:
        raise ValueError("sets live on different domains")
    if E1.count == 0 or E2.count == 0:
        raise ValueError("empty input set")
    if np.any(E1.cells & E2.cells):
        raise ValueError("E1 and E2 overlap")
    pts = E2.centers()
    hits = hit_matrix(E1, pts, D, step)
    counts = hits.sum(axis=0, dtype=np.int64)
    j = int(np.argmax(counts))
    e3 = np.zeros(dom.shape, bool)
    e3[tuple((np.argwhere(E2.cells)[hits[:, j] == 1]).T)] = True
    E3 = CellSet(dom, e3, "E3")
    S = sphere_measure(dom.n)
    bound = E1.measure * E2.measure / (2**dom.n * S)
    slack = slack_factor(dom.h, slack_coeff)
    inputs = {"h": dom.h, "n": dom.n, "M": D.M, "seed": D.seed}
    rep = LemmaReport("shadow.shooting", bound, E3.measure, "1/(2^n |S^{n-1}|)", 1.0 / (2**dom.n * S), slack, inputs)
    # two orders of summation of the same indicator
    mean_by_direction = float(counts.sum()) * dom.cell_volume / D.M
    mean_by_point = float(hits.sum(axis=1, dtype=np.int64).sum()) * D.weight * dom.cell_volume / S
    rep.subchecks.append(LemmaReport("shadow.shooting.average", bound, mean_by_direction, "1/(2^n |S^{n-1}|)",
                                     1.0 / (2**dom.n * S), slack, inputs))
    swap = abs(mean_by_direction - mean_by_point) <= 1e-12 * max(1.0, abs(mean_by_direction))
    rep.subchecks.append(LemmaReport("shadow.shooting.fubini", abs(mean_by_direction - mean_by_point), 1e-12 * max(1.0, mean_by_direction),
                                     "tol", 1e-12, 1.0, inputs, passed=swap))
    rep.details.update({"sigma0": D.vectors[j].tolist(), "E1": E1.measure, "E2": E2.measure, "E3": E3.measure,
                        "mean_E3": mean_by_direction})
    return ShootingResult(D.vectors[j].copy(), E3, rep, counts, hits)


def default_probes(dom: BallDomain, limit: int = 4096, boundary: int = 64) -> np.ndarray:
    pts = dom.coords()[:, dom.mask].T
    if len(pts) > limit:
        idx = np.linspace(0, len(pts) - 1, limit).round().astype(int)
        pts = pts[idx]
    rb = dom.radius - dom.h / 2
    bd = _directions(dom.n, boundary, 12345) * rb + np.array(dom.center)
    return np.vstack([pts, bd])


def min_shadow(E1: CellSet, D: DirectionSample, probes=None, step=None) -> tuple[float, LemmaReport]:
    """Smallest measured |Sigma(E1, x)| over the probe points."""
    dom = E1.domain
    probes = default_probes(dom) if probes is None else np.atleast_2d(np.asarray(probes, float))
    if len(probes) == 0:
        raise ValueError("no probe points")
    hits = hit_matrix(E1, probes, D, step)
    counts = hits.sum(axis=1, dtype=np.int64)
    i = int(np.argmin(counts))
    val = counts[i] * D.weight
    se = binomial_se(int(counts[i]), D)
    bound = E1.measure / 2**dom.n
    rep = LemmaReport("shadow.min_shadow", bound, val, "2^-n", 2.0**-dom.n, 1.0,
                      {"h": dom.h, "n": dom.n, "M": D.M, "seed": D.seed}, passed=bound <= val + 3 * se)
    rep.details.update({"argmin": probes[i].tolist(), "se": se, "probes": int(len(probes))})
    return float(val), rep


def shadow_bound_check(E1: CellSet, E2: CellSet, E3: CellSet, S_E1: float, slack_coeff: float = 10.0) -> LemmaReport:
    """|E3| >= S(E1) |E2| / |S^{n-1}|."""
    dom = E1.domain
    S = sphere_measure(dom.n)
    return LemmaReport("shadow.trees.shadow_bound", S_E1 * E2.measure / S, E3.measure, "1/|S^{n-1}|", 1.0 / S,
                       slack_factor(dom.h, slack_coeff), {"h": dom.h, "n": dom.n})


# oracles ----------------------------------------------------------------------
def angular_union_measure(E: CellSet, x) -> float:
    """Exact measure of directions from x meeting the union of E's square cells (n = 2)."""
    dom = E.domain
    if dom.n != 2:
        raise ValueError("exact angular union only in 2D")
    x = np.asarray(x, float)
    c = E.centers()
    if len(c) == 0:
        return 0.0
    hh = dom.h / 2
    inside = np.all(np.abs(c - x) <= hh, axis=1)
    if inside.any():
        return 2 * math.pi
    rel = c - x
    mid = np.arctan2(rel[:, 1], rel[:, 0])
    lo = np.full(len(c), np.inf)
    hi = np.full(len(c), -np.inf)
    for sx in (-hh, hh):
        for sy in (-hh, hh):
            a = np.arctan2(rel[:, 1] + sy, rel[:, 0] + sx) - mid
            a = (a + np.pi) % (2 * np.pi) - np.pi
            lo = np.minimum(lo, a)
            hi = np.maximum(hi, a)
    start = (mid + lo) % (2 * np.pi)
    length = hi - lo
    segs = []
    for s, l in zip(start, length):
        e = s + l
        if e > 2 * np.pi:
            segs.append((s, 2 * np.pi))
            segs.append((0.0, e - 2 * np.pi))
        else:
            segs.append((s, e))
    segs.sort()
    total, cs, ce = 0.0, segs[0][0], segs[0][1]
    for s, e in segs[1:]:
        if s > ce:
            total += ce - cs
            cs, ce = s, e
        else:
            ce = max(ce, e)
    return total + ce - cs


def projection_measure(E: CellSet, sigma) -> float:
    """(n-1)-measure of the projection of E's cells onto sigma's orthogonal complement."""
    dom = E.domain
    sigma = np.asarray(sigma, float)
    sigma = sigma / np.linalg.norm(sigma)
    pts = E.centers()
    if len(pts) == 0:
        return 0.0
    # orthonormal basis of sigma-perp
    basis = np.linalg.svd(np.eye(dom.n) - np.outer(sigma, sigma))[0][:, : dom.n - 1]
    coords = pts @ basis
    bins = np.unique(np.floor(coords / dom.h).astype(np.int64), axis=0)
    return len(bins) * dom.h ** (dom.n - 1)


# trees example ----------------------------------------------------------------
@dataclass
class TreesExample:
    E1: CellSet
    E2: CellSet
    eps: float
    delta: float
    tree_centers: list
    expectations: dict


def build_trees_example(eps: float = 0.125, delta: float = 1.0 / 32, h: float | None = None) -> TreesExample:
    """One tree of diameter eps/2 at (0, 7/8); a row of diameter-delta trees on [-1, -1/2]."""
    h = delta / 8 if h is None else h
    if not (delta < eps <= 0.125):
        raise ValueError("need delta < eps <= 1/8")
    if delta < 4 * h:
        raise ValueError(f"resolution too coarse: delta={delta} spans fewer than 4 cells at h={h}")
    dom = BallDomain(2, 1.0, h)
    x = dom.coords()
    E1 = CellSet(dom, dom.mask & ((x[0] ** 2 + (x[1] - 0.875) ** 2) < (eps / 4) ** 2), "E1")
    count = int(round(1.0 / (2 * eps)))
    centers = [(-0.5 - eps * (k + 0.5), 0.0) for k in range(count)]
    e2 = np.zeros(dom.shape, bool)
    for cx, cy in centers:
        e2 |= (x[0] - cx) ** 2 + (x[1] - cy) ** 2 < (delta / 2) ** 2
    E2 = CellSet(dom, dom.mask & e2, "E2")
    far = 0.875 + 1.0
    exp = {
        "trees": count,
        "E2_continuum": count * math.pi * (delta / 2) ** 2,
        "S_E1_continuum": 2 * math.asin((eps / 4) / far),
        "E3_sun_direction": math.pi * delta**2,
    }
    return TreesExample(E1, E2, eps, delta, centers, exp)


def trees_report(ex: TreesExample, D: DirectionSample, probes=None) -> LemmaReport:
    """Tightness of |E3| >= S(E1)|E2|/|S^1| on the trees configuration."""
    S_E1, ms = min_shadow(ex.E1, D, probes)
    shot = find_shooting_direction(ex.E1, ex.E2, D)
    lower = S_E1 * ex.E2.measure / sphere_measure(2)
    ratio = shot.E3.measure / lower if lower > 0 else math.inf
    rep = LemmaReport("shadow.trees", ratio, 16.0, "window", 16.0, 1.0,
                      {"h": ex.E1.domain.h, "n": 2, "M": D.M, "seed": D.seed, "eps": ex.eps, "delta": ex.delta},
                      passed=1.0 <= ratio <= 16.0)
    rep.subchecks += [ms, shot.report, shadow_bound_check(ex.E1, ex.E2, shot.E3, S_E1)]
    rep.details.update({"S_E1": S_E1, "E2": ex.E2.measure, "E3": shot.E3.measure, "lower_bound": lower,
                        "ratio": ratio, "ratio_without_sphere_factor": shot.E3.measure / (S_E1 * ex.E2.measure),
                        "expectations": ex.expectations})
    return rep


def dump_cellset(E: CellSet, stem) -> tuple[Path, Path]:
    stem = Path(stem)
    idx = E.domain.cell_indices(E.cells)
    desc = dict(E.domain.describe(), count=int(len(idx)), name=E.name, order="lexicographic-cell-index")
    jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
    jpath.write_text(json.dumps(desc, indent=2))
    np.savetxt(cpath, idx, fmt="%d", delimiter=",")
    return jpath, cpath


def load_cellset(stem) -> CellSet:
    stem = Path(stem)
    desc = json.loads(stem.with_suffix(".json").read_text())
    dom = BallDomain(desc["n"], desc["radius"], desc["h"], tuple(desc["center"]))
    idx = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", dtype=np.int64, ndmin=2)
    cells = np.zeros(dom.shape, bool)
    if idx.size:
        cells[tuple((idx + dom.offset).T)] = True
    return CellSet(dom, cells, desc.get("name", ""))
